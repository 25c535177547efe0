use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{Algorithm, AuditToggles, RunConfig, DEFAULT_C, DEFAULT_DELTA, DEFAULT_RANK_TOL};
use crate::representation::ClusterParams;

/// Where the MDP and its representation class come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Source {
    /// `instance.json` + `class.json` on disk; relative paths resolve against
    /// the config file's directory.
    Files { instance: PathBuf, class: PathBuf },
    /// The two-state stay-or-leave chain with one-hot features.
    StayOrLeave,
    Cluster(ClusterParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: Source,
    pub algorithms: Vec<Algorithm>,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub c: f64,
    pub delta: f64,
    pub rank_tol: f64,
    pub audit_stride: usize,
    pub audits: AuditToggles,
    pub burn_in_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Write `snapshot.json` into each run directory after this many episodes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint_at: Option<usize>,
    /// Stop every run after this many episodes (with a snapshot), to be
    /// continued later with `--resume`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub halt_after: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let run = RunConfig::default();
        Self {
            source: Source::StayOrLeave,
            algorithms: vec![Algorithm::Relex],
            episodes: run.episodes,
            seeds: vec![0],
            c: DEFAULT_C,
            delta: DEFAULT_DELTA,
            rank_tol: DEFAULT_RANK_TOL,
            audit_stride: run.audit_stride,
            audits: run.audits,
            burn_in_fraction: run.burn_in_fraction,
            out_dir: None,
            checkpoint_at: None,
            halt_after: None,
        }
    }
}

impl ExperimentConfig {
    /// Parses and checks everything that does not touch the filesystem.
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.check()?;
        Ok(config)
    }

    /// Reads `path`, resolves relative file references against its directory
    /// and checks that they exist.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Source::Files { instance, class } = &mut config.source {
            for p in [instance, class] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
                if !p.is_file() {
                    return Err(Error::InvalidParameter(format!(
                        "referenced file {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        Ok(config)
    }

    pub fn check(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidParameter("seeds must not be empty".into()));
        }
        let distinct: BTreeSet<u64> = self.seeds.iter().copied().collect();
        if distinct.len() != self.seeds.len() {
            return Err(Error::InvalidParameter("seeds must be distinct".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::InvalidParameter("algorithms must not be empty".into()));
        }
        if !(self.rank_tol > 0.0 && self.rank_tol < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "rank_tol must lie in (0, 1), got {}",
                self.rank_tol
            )));
        }
        for (name, at) in [("checkpoint_at", self.checkpoint_at), ("halt_after", self.halt_after)] {
            if let Some(at) = at {
                if at == 0 || at > self.episodes {
                    return Err(Error::InvalidParameter(format!(
                        "{name} must lie in 1..={}",
                        self.episodes
                    )));
                }
            }
        }
        self.run_config(self.algorithms[0], self.seeds[0]).validate()
    }

    pub fn run_config(&self, algorithm: Algorithm, seed: u64) -> RunConfig {
        RunConfig {
            algorithm,
            episodes: self.episodes,
            seed,
            c: self.c,
            delta: self.delta,
            audit_stride: self.audit_stride,
            audits: self.audits.clone(),
            burn_in_fraction: self.burn_in_fraction,
        }
    }

    /// The (algorithm × seed) job matrix, algorithm-major.
    pub fn jobs(&self) -> Vec<RunConfig> {
        self.algorithms
            .iter()
            .flat_map(|&a| self.seeds.iter().map(move |&s| self.run_config(a, s)))
            .collect()
    }
}
