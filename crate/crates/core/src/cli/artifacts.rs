//! On-disk formats. Structured documents are JSON, per-episode series CSV.
//! Reports print floats with 12 significant digits; documents that must
//! round-trip exactly (instances, classes, snapshots) keep full precision.

use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::{Error, Result};
use crate::fmt::sig;
use crate::harness::{Algorithm, EpisodeRecord, RunOutput};
use crate::representation::CoverageReport;

struct SigFormatter<'a>(PrettyFormatter<'a>);

impl Formatter for SigFormatter<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(sig(value).as_bytes())
    }
    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Pretty JSON with floats at 12 significant digits.
pub fn report_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigFormatter(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

/// Pretty JSON with shortest round-trip floats.
pub fn exact_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_string(rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv of UTF-8 fields"))
}

pub const EPISODE_COLUMNS: [&str; 5] = ["episode", "init_state", "ep_regret", "cum_regret", "gap_sum"];

/// `chosen_h{step}_{map}` for every 1-based step and map name.
pub fn chosen_columns(horizon: usize, map_names: &[String]) -> Vec<String> {
    (1..=horizon)
        .flat_map(|h| map_names.iter().map(move |m| format!("chosen_h{h}_{m}")))
        .collect()
}

pub fn episodes_csv(output: &RunOutput) -> Result<String> {
    let mut header: Vec<String> = EPISODE_COLUMNS.iter().map(|c| c.to_string()).collect();
    header.extend(chosen_columns(output.horizon, &output.map_names));
    let mut rows = vec![header];
    for r in &output.records {
        let mut row = vec![
            r.episode.to_string(),
            r.init_state.to_string(),
            sig(r.ep_regret),
            sig(r.cum_regret),
            sig(r.gap_sum),
        ];
        row.extend(r.chosen_counts.iter().map(u32::to_string));
        rows.push(row);
    }
    csv_string(rows)
}

pub fn expected_regret_csv(output: &RunOutput) -> Result<String> {
    let mut rows = vec![vec!["episode".to_string(), "expected_regret".to_string()]];
    rows.extend(
        output
            .records
            .iter()
            .map(|r| vec![r.episode.to_string(), sig(r.expected_regret)]),
    );
    csv_string(rows)
}

/// The fixed columns of one `episodes.csv` row.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct EpisodeRow {
    pub episode: usize,
    pub init_state: usize,
    pub ep_regret: f64,
    pub cum_regret: f64,
    pub gap_sum: f64,
}

impl EpisodeRow {
    pub fn to_record(&self) -> EpisodeRecord {
        EpisodeRecord {
            episode: self.episode,
            init_state: self.init_state,
            ep_regret: self.ep_regret,
            cum_regret: self.cum_regret,
            gap_sum: self.gap_sum,
            expected_regret: f64::NAN,
            chosen_counts: Vec::new(),
        }
    }
}

/// Parses an `episodes.csv`; extra columns are ignored, episodes must run
/// `1, 2, ...` without gaps.
pub fn parse_episodes_csv(text: &str) -> Result<Vec<EpisodeRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    for col in EPISODE_COLUMNS {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::InvalidParameter(format!("episodes csv lacks column {col}")));
        }
    }
    let mut rows = Vec::new();
    for (i, row) in reader.deserialize::<EpisodeRow>().enumerate() {
        let row = row?;
        if row.episode != i + 1 {
            return Err(Error::InvalidParameter(format!(
                "episode {} found where {} was expected",
                row.episode,
                i + 1
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// `run.json`: identifies a run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub episodes: usize,
    pub horizon: usize,
    pub map_names: Vec<String>,
    pub final_cum_regret: f64,
    pub c: f64,
    pub delta: f64,
}

impl RunMeta {
    pub fn of(output: &RunOutput) -> Self {
        Self {
            algorithm: output.config.algorithm,
            seed: output.config.seed,
            episodes: output.config.episodes,
            horizon: output.horizon,
            map_names: output.map_names.clone(),
            final_cum_regret: output.final_cum_regret(),
            c: output.config.c,
            delta: output.config.delta,
        }
    }
}

pub fn run_dir_name(algorithm: Algorithm, seed: u64) -> String {
    format!("{}_seed{seed}", algorithm.label())
}

pub fn write_run(dir: &Path, output: &RunOutput) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_text(&dir.join("episodes.csv"), &episodes_csv(output)?)?;
    write_text(&dir.join("expected_regret.csv"), &expected_regret_csv(output)?)?;
    write_text(&dir.join("audit.json"), &report_json(&output.audit)?)?;
    write_text(&dir.join("phase.json"), &report_json(&output.phase)?)?;
    write_text(&dir.join("run.json"), &report_json(&RunMeta::of(output))?)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapCoverageSummary {
    pub name: String,
    pub sigma: Option<f64>,
    /// 1-based steps where `Λ` vanishes.
    pub degenerate_steps: Vec<usize>,
    pub retained_eigenvalues: Vec<Vec<f64>>,
    pub covered_pairs: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncoveredPair {
    pub step: usize,
    pub s: usize,
    pub a: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub rank_tol: f64,
    pub assumption3_holds: bool,
    pub maps: Vec<MapCoverageSummary>,
    pub uncovered: Vec<UncoveredPair>,
}

impl CoverageSummary {
    pub fn of(report: &CoverageReport) -> Self {
        Self {
            rank_tol: report.rank_tol,
            assumption3_holds: report.assumption3_holds,
            maps: report
                .maps
                .iter()
                .map(|m| MapCoverageSummary {
                    name: m.name.clone(),
                    sigma: m.sigma,
                    degenerate_steps: m.degenerate_steps.iter().map(|h| h + 1).collect(),
                    retained_eigenvalues: m.retained_eigenvalues.clone(),
                    covered_pairs: m.covered.iter().map(|c| c.iter().filter(|&&b| b).count()).collect(),
                })
                .collect(),
            uncovered: report
                .uncovered
                .iter()
                .map(|p| UncoveredPair { step: p.h + 1, s: p.s, a: p.a })
                .collect(),
        }
    }
}

pub fn uncovered_csv(report: &CoverageReport) -> Result<String> {
    let mut rows = vec![vec!["h".to_string(), "s".to_string(), "a".to_string()]];
    rows.extend(
        report
            .uncovered
            .iter()
            .map(|p| vec![(p.h + 1).to_string(), p.s.to_string(), p.a.to_string()]),
    );
    csv_string(rows)
}
