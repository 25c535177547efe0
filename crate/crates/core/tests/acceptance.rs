//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode, Stdio};
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use relex::harness::{median, run_experiment, Algorithm, AuditToggles, Instance, RunConfig};
use relex::learner::LearnerState;
use relex::learner::PreparedClass;
use relex::mdp::{EpsilonGreedy, MdpSpec};
use relex::representation::{
    gen_cluster_lowrank, gen_rotated, gen_tabular, ClusterParams, RepresentationClass,
};
use relex::rng::EpisodeStreams;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn stay_or_leave() -> (MdpSpec, RepresentationClass) {
    let spec = MdpSpec::stay_or_leave();
    let class = gen_tabular(&spec).unwrap();
    (spec, class)
}

fn cluster(params: ClusterParams) -> (MdpSpec, RepresentationClass) {
    gen_cluster_lowrank(&params).unwrap()
}

fn oracle_equivalence() -> Outcome {
    let mut worst: f64 = 0.0;
    for i in 0..50u64 {
        let spec = common::random_spec(1000 + i, 1 + (i % 3) as usize, 1 + (i % 2) as usize, 1 + (i / 3 % 3) as usize);
        let sol = spec.solve_optimal().unwrap();
        let oracle = common::enumerate_optimal(&spec);
        for h in 0..spec.horizon {
            worst = worst.max(common::max_abs_diff(&sol.v_star[h], &oracle.v_star[h]));
            for s in 0..spec.num_states {
                worst = worst.max(common::max_abs_diff(&sol.q_star[h][s], &oracle.q_star[h][s]));
            }
        }
    }
    outcome(worst <= 1e-10, format!("50 instances, max |diff| = {worst:.3e}"))
}

fn class_error(spec: &MdpSpec, class: &RepresentationClass) -> f64 {
    class
        .feature_maps
        .iter()
        .enumerate()
        .map(|(i, phi)| common::kernel_error(spec, &phi.table, &class.models[i], &class.psi))
        .fold(0.0, f64::max)
}

fn exact_factorization() -> Outcome {
    let mut instances = vec![stay_or_leave()];
    for seed in 0..20 {
        instances.push(cluster(ClusterParams { seed, ..ClusterParams::default() }));
        instances.push(cluster(ClusterParams { seed, num_states: 4, num_clusters: 2, ..ClusterParams::default() }));
    }
    let mut residual: f64 = 0.0;
    let mut rotated: f64 = 0.0;
    let mut count = 0;
    for (spec, class) in &instances {
        residual = residual.max(class_error(spec, class));
        residual = residual.max(class_error(spec, &gen_tabular(spec).unwrap()));
        for rot_seed in 0..3 {
            rotated = rotated.max(class_error(spec, &gen_rotated(class, rot_seed).unwrap()));
        }
        count += 1;
    }
    outcome(
        residual <= 1e-9 && rotated <= 1e-9,
        format!("{count} instances, residual {residual:.3e}, rotated {rotated:.3e}"),
    )
}

fn regression_consistency() -> Outcome {
    let (spec, class) = stay_or_leave();
    let prepared = PreparedClass::new(&class, &spec).unwrap();
    let pi = spec.solve_optimal().unwrap().pi_star;
    let actor = EpsilonGreedy { base: &pi, epsilon: 0.3, num_actions: spec.num_actions };
    let psi = DMatrix::from_row_iterator(
        class.psi.len(),
        class.psi[0].len(),
        class.psi.iter().flatten().cloned(),
    );
    let results: Vec<(bool, f64)> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let mut state = LearnerState::init(&class, spec.horizon);
            let mut streams = EpisodeStreams::new(seed);
            for k in 1..=5000 {
                let t = spec.sample_episode(k, &actor, &mut streams);
                state.update(&prepared, &t).unwrap();
            }
            let phi = &class.feature_maps[0];
            let mut worst: f64 = 0.0;
            for h in 0..spec.horizon {
                let stats = &state.stats[0][h];
                // Kernel row predicted for each pair: φᵀ M Ψᵀ.
                let predicted = &stats.estimate * psi.transpose();
                for s in 0..spec.num_states {
                    for a in 0..spec.num_actions {
                        let row = &phi.table[s * spec.num_actions + a];
                        let x = nalgebra::DVector::from_column_slice(row);
                        if (x.transpose() * &stats.cov * &x)[(0, 0)] <= x.norm_squared() {
                            continue;
                        }
                        let est = x.transpose() * &predicted;
                        let err = est
                            .iter()
                            .zip(&spec.transitions[h][s][a])
                            .map(|(p, q)| (p - q).powi(2))
                            .sum::<f64>()
                            .sqrt();
                        worst = worst.max(err);
                    }
                }
            }
            (worst <= 0.05, worst)
        })
        .collect();
    let good = results.iter().filter(|r| r.0).count();
    let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
    outcome(good >= 18, format!("{good}/20 seeds within 0.05, worst row error {worst:.4}"))
}

fn optimism() -> Outcome {
    let instances = [
        ("stay_or_leave", stay_or_leave()),
        ("cluster4", cluster(ClusterParams { num_states: 4, num_clusters: 2, seed: 1, ..ClusterParams::default() })),
        ("cluster6", cluster(ClusterParams::default())),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, (spec, class)) in instances {
        let inst = Instance::new(spec, class, 1e-7).unwrap();
        let violating = (0..20u64)
            .into_par_iter()
            .filter(|&seed| {
                let config = RunConfig {
                    seed,
                    episodes: 2000,
                    c: 1.0,
                    delta: 0.1,
                    audits: AuditToggles {
                        optimism: true,
                        covariance_growth: false,
                        bonus_decay: false,
                        regret_gap: false,
                        mc_replays: 0,
                    },
                    ..RunConfig::default()
                };
                let out = run_experiment(&inst, &config).unwrap();
                out.audit.optimism.unwrap().episodes_with_violation > 0
            })
            .count();
        pass &= violating * 5 <= 20;
        parts.push(format!("{name} {violating}/20"));
    }
    outcome(pass, format!("seeds with a violation: {}", parts.join(", ")))
}

/// What the coverage-instance criteria need from each run.
struct Summary {
    algorithm: Algorithm,
    final_regret: f64,
    k_hat: Option<usize>,
    flatness: f64,
    growth_pass: usize,
    growth_total: usize,
    bonus_slope: Option<f64>,
}

const LONG_K: usize = 20_000;

fn coverage_runs() -> (Instance, Vec<Summary>) {
    let (spec, class) = cluster(ClusterParams::default());
    let inst = Instance::new(spec, class, 1e-7).unwrap();
    let algorithms = [Algorithm::Relex, Algorithm::Single(0), Algorithm::Single(1), Algorithm::Single(2)];
    let jobs: Vec<(Algorithm, u64)> = algorithms
        .iter()
        .flat_map(|&a| (0..20u64).map(move |s| (a, s)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(algorithm, seed)| {
            let config = RunConfig { algorithm, seed, episodes: LONG_K, ..RunConfig::default() };
            let out = run_experiment(&inst, &config).unwrap();
            let late: Vec<_> = out
                .audit
                .covariance_growth
                .iter()
                .filter(|g| 4 * g.episode >= LONG_K)
                .collect();
            Summary {
                algorithm,
                final_regret: out.final_cum_regret(),
                k_hat: out.phase.k_hat,
                flatness: out.phase.flatness_ratio,
                growth_pass: late.iter().filter(|g| g.pass).count(),
                growth_total: late.len(),
                bonus_slope: out.audit.bonus_slope,
            }
        })
        .collect();
    (inst, runs)
}

fn of(runs: &[Summary], algorithm: Algorithm) -> Vec<&Summary> {
    runs.iter().filter(|r| r.algorithm == algorithm).collect()
}

fn phase_transition(inst: &Instance, runs: &[Summary]) -> Outcome {
    let relex = of(runs, Algorithm::Relex);
    let flat = median(&relex.iter().map(|r| r.flatness).collect::<Vec<_>>());
    let k_hat = median(
        &relex
            .iter()
            .map(|r| r.k_hat.map_or(f64::INFINITY, |k| k as f64))
            .collect::<Vec<_>>(),
    );
    let onehot = of(runs, Algorithm::Single(0));
    let onehot_flat = median(&onehot.iter().map(|r| r.flatness).collect::<Vec<_>>());
    let covered = inst.coverage.assumption3_holds;
    let onehot_covered = inst.restrict(&[0]).unwrap().coverage.assumption3_holds;
    outcome(
        covered && !onehot_covered && flat <= 0.01 && k_hat < LONG_K as f64 / 2.0 && onehot_flat >= 0.05,
        format!(
            "relex flatness {flat:.4}, k_hat {k_hat}; {} flatness {onehot_flat:.4}",
            inst.class.feature_maps[0].name
        ),
    )
}

fn no_worse_than_single(runs: &[Summary]) -> Outcome {
    let med = |a| median(&of(runs, a).iter().map(|r| r.final_regret).collect::<Vec<_>>());
    let relex = med(Algorithm::Relex);
    let singles: Vec<f64> = (0..3).map(|i| med(Algorithm::Single(i))).collect();
    let best = singles.iter().cloned().fold(f64::INFINITY, f64::min);
    outcome(
        relex <= 1.25 * best + 50.0,
        format!("relex median {relex:.2}, single medians {singles:.2?}"),
    )
}

fn covariance_growth(runs: &[Summary]) -> Outcome {
    let relex = of(runs, Algorithm::Relex);
    let pass: usize = relex.iter().map(|r| r.growth_pass).sum();
    let total: usize = relex.iter().map(|r| r.growth_total).sum();
    let frac = pass as f64 / total.max(1) as f64;
    outcome(total > 0 && frac >= 0.95, format!("{pass}/{total} sampled entries pass ({frac:.4})"))
}

fn bonus_decay(runs: &[Summary]) -> Outcome {
    let slopes: Vec<f64> = of(runs, Algorithm::Relex).iter().filter_map(|r| r.bonus_slope).collect();
    if slopes.len() < 20 {
        return outcome(false, format!("only {} runs produced a slope", slopes.len()));
    }
    let slope = median(&slopes);
    outcome((-0.65..=-0.35).contains(&slope), format!("median slope {slope:.4}"))
}

fn files(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "csv" || e == "json") {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn cli(dir: &Path, args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_relex"))
        .args(args)
        .current_dir(dir)
        .env_remove("RELEX_OUT")
        .stdout(Stdio::null())
        .status()
        .unwrap()
        .success()
}

fn determinism() -> Outcome {
    let tmp = tempfile::TempDir::new().unwrap();
    let d = tmp.path();
    let base = r#""source": {"kind": "cluster"},
        "algorithms": ["relex", {"single": 0}, {"single": 1}, {"single": 2}, "uniform_random", "oracle"],
        "episodes": 4000,
        "seeds": [0, 1, 2],
        "audit_stride": 50"#;
    fs::write(d.join("full.json"), format!("{{{base}}}")).unwrap();
    fs::write(d.join("half.json"), format!("{{{base}, \"halt_after\": 2000}}")).unwrap();
    let mut ok = cli(d, &["run", "--config", "full.json", "--out", "a", "--jobs", "4"])
        && cli(d, &["run", "--config", "full.json", "--out", "b", "--jobs", "1"])
        && cli(d, &["run", "--config", "half.json", "--out", "c"]);
    let repeat_same = ok && files(&d.join("a")) == files(&d.join("b"));
    let mut resumed = 0;
    if ok {
        for entry in fs::read_dir(d.join("c")).unwrap() {
            let run = entry.unwrap().file_name().into_string().unwrap();
            let snap = format!("c/{run}/snapshot.json");
            ok &= cli(d, &["run", "--config", "full.json", "--out", "c", "--resume", &snap]);
            resumed += 1;
        }
    }
    let strip = |v: Vec<(PathBuf, Vec<u8>)>| -> Vec<(PathBuf, Vec<u8>)> {
        v.into_iter()
            .filter(|(p, _)| !p.ends_with("snapshot.json") && !p.ends_with("comparison.json"))
            .collect()
    };
    let resume_same = ok && strip(files(&d.join("a"))) == strip(files(&d.join("c")));
    outcome(
        ok && repeat_same && resume_same && resumed == 18,
        format!("repeat identical: {repeat_same}, {resumed} runs resumed at K/2 identical: {resume_same}"),
    )
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |name: &str, t: Instant, o: Outcome| {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failed += 1;
        }
        println!("{tag} {name}: {} [{:.1}s]", o.detail, t.elapsed().as_secs_f64());
    };
    let t = Instant::now();
    report("1 oracle equivalence", t, oracle_equivalence());
    let t = Instant::now();
    report("2 exact factorization", t, exact_factorization());
    let t = Instant::now();
    report("3 regression consistency", t, regression_consistency());
    let t = Instant::now();
    report("4 optimism", t, optimism());
    let t = Instant::now();
    let (inst, runs) = coverage_runs();
    report("5 phase transition", t, phase_transition(&inst, &runs));
    report("6 no worse than single", t, no_worse_than_single(&runs));
    report("7 covariance growth", t, covariance_growth(&runs));
    report("8 bonus decay", t, bonus_decay(&runs));
    let t = Instant::now();
    report("9 determinism", t, determinism());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
