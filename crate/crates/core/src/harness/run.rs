use rand::Rng;
use serde::{Deserialize, Serialize};

use super::audit::{monte_carlo_value, regret_gap_bound, AuditReport, AuditState, MonteCarloCheck, RegretGapCheck};
use super::phase::{detect_phase, PhaseReport};
use super::{Algorithm, Instance, RunConfig};
use crate::error::{Error, Result};
use crate::learner::{
    q_backward_pass, BetaRule, BetaSchedule, LearnerSnapshot, LearnerState, PreparedClass,
};
use crate::mdp::{Policy, Trajectory};
use crate::rng::{self, EpisodeStreams, StreamPositions};

/// One row of the per-episode series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub init_state: usize,
    /// `V*_1(s_1^k) − V^{π^k}_1(s_1^k)`
    pub ep_regret: f64,
    pub cum_regret: f64,
    /// `Σ_h Δ_h(s_h^k, a_h^k)`
    pub gap_sum: f64,
    /// Regret averaged over the initial distribution instead of `s_1^k`.
    pub expected_regret: f64,
    /// Cells `(s,a)` whose minimum was attained by each map, `[h * maps + map]`.
    pub chosen_counts: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub config: RunConfig,
    pub map_names: Vec<String>,
    pub horizon: usize,
    pub records: Vec<EpisodeRecord>,
    pub audit: AuditReport,
    pub phase: PhaseReport,
}

impl RunOutput {
    pub fn final_cum_regret(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cum_regret)
    }
}

/// Everything needed to continue a run bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSnapshot {
    pub config: RunConfig,
    pub episodes_done: usize,
    pub streams: StreamPositions,
    pub learner: Option<LearnerSnapshot>,
    pub records: Vec<EpisodeRecord>,
    pub audit: AuditState,
}

struct LearnerParts {
    prepared: PreparedClass,
    schedule: BetaSchedule,
    state: LearnerState,
}

/// Sequential driver for one (algorithm, seed) run.
pub struct Runner {
    instance: Instance,
    config: RunConfig,
    learner: Option<LearnerParts>,
    streams: EpisodeStreams,
    records: Vec<EpisodeRecord>,
    audit: AuditState,
}

impl Runner {
    pub fn new(base: &Instance, config: RunConfig) -> Result<Self> {
        config.validate()?;
        let instance = match config.algorithm {
            Algorithm::Single(i) => base.restrict(&[i])?,
            _ => base.clone(),
        };
        let learner = if config.algorithm.is_learner() {
            let prepared = PreparedClass::new(&instance.class, &instance.spec)?;
            let schedule = BetaSchedule::new(
                BetaRule::Theorem {
                    c: config.c,
                    delta: config.delta,
                },
                instance.class.constants()?,
                instance.spec.horizon,
            )?;
            let state = LearnerState::init(&instance.class, instance.spec.horizon);
            Some(LearnerParts {
                prepared,
                schedule,
                state,
            })
        } else {
            None
        };
        let mut audit = AuditState::default();
        if instance.solution.gap_min.is_infinite() {
            audit
                .warnings
                .push("every gap is zero: gap-dependent audits skipped".into());
        }
        if !instance.solution.unique_optimal {
            audit
                .warnings
                .push("optimal policy is not unique: ties broken toward the lowest action".into());
        }
        Ok(Self {
            streams: EpisodeStreams::new(config.seed),
            instance,
            config,
            learner,
            records: Vec::new(),
            audit,
        })
    }

    pub fn resume(base: &Instance, snapshot: &RunSnapshot) -> Result<Self> {
        let mut runner = Self::new(base, snapshot.config.clone())?;
        if snapshot.records.len() != snapshot.episodes_done
            || snapshot.episodes_done > snapshot.config.episodes
        {
            return Err(Error::InvalidParameter("inconsistent run snapshot".into()));
        }
        match (&mut runner.learner, &snapshot.learner) {
            (Some(parts), Some(saved)) => {
                let state = LearnerState::restore(saved)?;
                if state.num_maps() != parts.state.num_maps() || state.horizon() != parts.state.horizon() {
                    return Err(Error::Dimension("snapshot learner does not match the instance".into()));
                }
                parts.state = state;
            }
            (None, None) => {}
            _ => return Err(Error::InvalidParameter("snapshot does not match algorithm".into())),
        }
        runner.streams = EpisodeStreams::restore(&snapshot.streams);
        runner.records = snapshot.records.clone();
        runner.audit = snapshot.audit.clone();
        Ok(runner)
    }

    pub fn episodes_done(&self) -> usize {
        self.records.len()
    }

    pub fn is_finished(&self) -> bool {
        self.records.len() >= self.config.episodes
    }

    pub fn learner_state(&self) -> Option<&LearnerState> {
        self.learner.as_ref().map(|p| &p.state)
    }

    pub fn instance(&self) -> &Instance {
        &self.instance
    }

    pub fn records(&self) -> &[EpisodeRecord] {
        &self.records
    }

    fn sampled(&self, k: usize) -> bool {
        (k - 1) % self.config.audit_stride == 0 || k == self.config.episodes
    }

    fn mc_episode(&self, k: usize) -> bool {
        let n = self.config.episodes;
        self.config.audits.mc_replays > 0 && (k == 1 || k == n.div_ceil(2) || k == n)
    }

    /// Non-learners never consult a map; their count columns stay zero.
    fn idle_counts(&self) -> Vec<u32> {
        vec![0; self.instance.spec.horizon * self.instance.class.len()]
    }

    /// Plays one episode and returns its trajectory.
    pub fn step(&mut self) -> Result<Trajectory> {
        let k = self.records.len() + 1;
        let spec = &self.instance.spec;
        let solution = &self.instance.solution;
        let sampled = self.sampled(k);
        let (policy, chosen_counts) = match self.config.algorithm {
            Algorithm::Relex | Algorithm::Single(_) => {
                let parts = self.learner.as_ref().expect("learner algorithms carry state");
                let plan = q_backward_pass(&parts.state, spec, &parts.prepared, &parts.schedule, k)?;
                let toggles = &self.config.audits;
                if toggles.optimism {
                    self.audit.record_optimism(k, &plan, solution);
                }
                if sampled && toggles.covariance_growth {
                    self.audit.record_growth(k, &parts.state, &self.instance.coverage);
                }
                if sampled && toggles.bonus_decay {
                    self.audit.record_bonus(k, &plan);
                }
                let nmaps = parts.prepared.num_maps();
                let mut counts = vec![0u32; spec.horizon * nmaps];
                for (h, per_h) in plan.chosen_rep.iter().enumerate() {
                    for &i in per_h.iter().flatten() {
                        counts[h * nmaps + i] += 1;
                    }
                }
                (plan.policy, counts)
            }
            Algorithm::Oracle => (solution.pi_star.clone(), self.idle_counts()),
            Algorithm::UniformRandom => {
                let actions = (0..spec.horizon)
                    .map(|_| {
                        (0..spec.num_states)
                            .map(|_| self.streams.policy.random_range(0..spec.num_actions))
                            .collect()
                    })
                    .collect();
                (Policy { actions }, self.idle_counts())
            }
        };

        let trajectory = spec.sample_episode(k, &policy, &mut self.streams);
        let s1 = trajectory.initial_state();
        let v_pi = spec.initial_values(&policy);
        let v_star = &solution.v_star[0];
        let ep_regret = v_star[s1] - v_pi[s1];
        let expected_regret: f64 = spec
            .init_dist
            .iter()
            .zip(v_star.iter().zip(&v_pi))
            .map(|(rho, (a, b))| rho * (a - b))
            .sum();
        let gap_sum = trajectory
            .steps
            .iter()
            .map(|st| solution.gaps[st.h][st.state][st.action])
            .sum();
        if self.mc_episode(k) {
            let replays = self.config.audits.mc_replays;
            let mut audit_rng = rng::stream(self.config.seed.wrapping_add(k as u64), rng::AUDIT);
            let (opt, se_opt) = monte_carlo_value(spec, &solution.pi_star, s1, replays, &mut audit_rng);
            let (cur, se_cur) = monte_carlo_value(spec, &policy, s1, replays, &mut audit_rng);
            let mc_regret = opt - cur;
            let std_err = (se_opt * se_opt + se_cur * se_cur).sqrt();
            self.audit.mc_checks.push(MonteCarloCheck {
                episode: k,
                init_state: s1,
                exact_regret: ep_regret,
                mc_regret,
                std_err,
                within_5se: (mc_regret - ep_regret).abs() <= 5.0 * std_err + 1e-9,
            });
        }
        if let Some(parts) = self.learner.as_mut() {
            parts.state.update(&parts.prepared, &trajectory)?;
        }
        let cum_regret = self.records.last().map_or(0.0, |r| r.cum_regret) + ep_regret;
        self.records.push(EpisodeRecord {
            episode: k,
            init_state: s1,
            ep_regret,
            cum_regret,
            gap_sum,
            expected_regret,
            chosen_counts,
        });
        Ok(trajectory)
    }

    pub fn run_until(&mut self, episodes: usize) -> Result<()> {
        let target = episodes.min(self.config.episodes);
        while self.records.len() < target {
            self.step()?;
        }
        Ok(())
    }

    pub fn snapshot(&self) -> RunSnapshot {
        RunSnapshot {
            config: self.config.clone(),
            episodes_done: self.records.len(),
            streams: self.streams.positions(),
            learner: self.learner.as_ref().map(|p| p.state.snapshot()),
            records: self.records.clone(),
            audit: self.audit.clone(),
        }
    }

    pub fn finish(mut self) -> Result<RunOutput> {
        self.run_until(self.config.episodes)?;
        let spec = &self.instance.spec;
        let regret_gap = (self.config.audits.regret_gap && self.instance.solution.gap_min.is_finite())
            .then(|| {
                let cum = self.records.last().map_or(0.0, |r| r.cum_regret);
                let gap_sum: f64 = self.records.iter().map(|r| r.gap_sum).sum();
                let bound = regret_gap_bound(gap_sum, spec.horizon, self.records.len(), self.config.delta);
                RegretGapCheck {
                    cum_regret: cum,
                    gap_sum,
                    bound,
                    holds: cum <= bound,
                }
            });
        let mut audit = self.audit.finish(
            &self.config.audits,
            self.config.episodes,
            self.config.burn_in_fraction,
            regret_gap,
        );
        if !self.config.algorithm.is_learner() {
            audit.optimism = None;
        }
        let phase = detect_phase(&self.records);
        let map_names = self.instance.class.feature_maps.iter().map(|f| f.name.clone()).collect();
        Ok(RunOutput {
            horizon: spec.horizon,
            map_names,
            config: self.config,
            records: self.records,
            audit,
            phase,
        })
    }
}

/// Runs every episode of `config` on `instance`.
pub fn run_experiment(instance: &Instance, config: &RunConfig) -> Result<RunOutput> {
    Runner::new(instance, config.clone())?.finish()
}
