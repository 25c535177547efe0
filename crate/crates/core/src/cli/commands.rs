use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::artifacts::{
    exact_json, parse_episodes_csv, read_json, report_json, run_dir_name, uncovered_csv, write_run,
    write_text, CoverageSummary, RunMeta,
};
use super::config::{ExperimentConfig, Source};
use super::svg::{self, Series};
use super::{
    output_root, CliResult, Failure, GenKind, GenerateArgs, ReportArgs, RunArgs, ValidateArgs,
};
use crate::error::Error;
use crate::fmt::sig;
use crate::harness::{
    detect_phase, Algorithm, ComparisonTable, EpisodeRecord, Instance, PhaseReport, RunConfig,
    RunSnapshot, Runner,
};
use crate::linalg;
use crate::mdp::MdpSpec;
use crate::representation::{
    compute_constants, gen_cluster_lowrank, gen_rotated, gen_rotated_with, gen_tabular,
    ClusterParams, ConstantsReport, RepresentationClass, EXACT_TOLERANCE, FIT_TOLERANCE,
};

fn read_input<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    read_json(path).map_err(Failure::usage)
}

fn create_dir(dir: &Path) -> CliResult {
    std::fs::create_dir_all(dir).map_err(|e| Failure::runtime(Error::io(dir, e)))
}

fn factorization_error(class: &RepresentationClass, spec: &MdpSpec, tol: f64) -> CliResult<f64> {
    let (residual, _, (h, s, a, next)) = class.residual(spec)?;
    if residual.is_nan() || residual > tol {
        return Err(Error::Factorization { h, s, a, next, residual }.into());
    }
    Ok(residual)
}

/// Shape and factorization checks, then fresh constants.
fn prepare_class(spec: &MdpSpec, mut class: RepresentationClass) -> CliResult<RepresentationClass> {
    class.check_shapes(spec)?;
    factorization_error(&class, spec, FIT_TOLERANCE)?;
    class.constants = Some(compute_constants(&class)?);
    Ok(class)
}

fn load_pair(instance: &Path, class: &Path) -> CliResult<(MdpSpec, RepresentationClass)> {
    let spec: MdpSpec = read_input(instance)?;
    spec.ensure_valid()?;
    let class = prepare_class(&spec, read_input(class)?)?;
    Ok((spec, class))
}

pub fn build_instance(source: &Source, rank_tol: f64) -> CliResult<Instance> {
    let (spec, class) = match source {
        Source::Files { instance, class } => load_pair(instance, class)?,
        Source::StayOrLeave => {
            let spec = MdpSpec::stay_or_leave();
            let class = gen_tabular(&spec)?;
            (spec, class)
        }
        Source::Cluster(params) => gen_cluster_lowrank(params)?,
    };
    Ok(Instance::new(spec, class, rank_tol)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationInfo {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub maps: Vec<String>,
    /// Worst `|φᵀ M ψ − P|` over all maps and entries.
    pub residual: f64,
}

pub fn cmd_generate(args: &GenerateArgs) -> CliResult {
    let (kind, seed, spec, class) = match args.kind {
        GenKind::Tabular => {
            let spec = match args.instance.as_deref() {
                None | Some("stay-or-leave") => MdpSpec::stay_or_leave(),
                Some(path) => read_input(Path::new(path))?,
            };
            spec.ensure_valid()?;
            let class = gen_tabular(&spec)?;
            ("tabular", None, spec, class)
        }
        GenKind::Cluster => {
            let mut params: ClusterParams = match &args.config {
                Some(p) => read_input(p)?,
                None => ClusterParams::default(),
            };
            if let Some(seed) = args.seed {
                params.seed = seed;
            }
            let (spec, class) = gen_cluster_lowrank(&params)?;
            ("cluster", Some(params.seed), spec, class)
        }
        GenKind::Rotated => {
            let from = args
                .from
                .as_deref()
                .ok_or_else(|| Failure::usage("rotated generation needs --from DIR"))?;
            let (spec, class) = load_pair(&from.join("instance.json"), &from.join("class.json"))?;
            let (rotated, seed) = match &args.rotation {
                Some(path) => {
                    let raw: Vec<Vec<Vec<f64>>> = read_input(path)?;
                    let mats = raw
                        .iter()
                        .map(|rows| linalg::matrix_from_rows(rows, rows.len()))
                        .collect::<Result<Vec<DMatrix<f64>>, _>>()?;
                    (gen_rotated_with(&class, &mats)?, None)
                }
                None => {
                    let seed = args.seed.unwrap_or(0);
                    (gen_rotated(&class, seed)?, Some(seed))
                }
            };
            ("rotated", seed, spec, rotated)
        }
    };
    // Re-validate everything before anything touches the disk.
    spec.ensure_valid()?;
    class.check_shapes(&spec)?;
    class.state_features()?;
    let residual = factorization_error(&class, &spec, EXACT_TOLERANCE)?;
    class.constants()?;

    let out = output_root(args.out.as_deref(), None);
    create_dir(&out)?;
    let info = GenerationInfo {
        kind: kind.into(),
        seed,
        num_states: spec.num_states,
        num_actions: spec.num_actions,
        horizon: spec.horizon,
        maps: class.feature_maps.iter().map(|f| f.name.clone()).collect(),
        residual,
    };
    write_text(&out.join("instance.json"), &exact_json(&spec)?)?;
    write_text(&out.join("class.json"), &exact_json(&class)?)?;
    write_text(&out.join("generation.json"), &report_json(&info)?)?;
    println!(
        "{kind}: {} states, {} actions, horizon {}, {} maps, residual {} -> {}",
        spec.num_states,
        spec.num_actions,
        spec.horizon,
        class.len(),
        sig(residual),
        out.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidateReport {
    pub definition1_holds: bool,
    pub violations: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage: Option<CoverageSummary>,
    pub warnings: Vec<String>,
}

fn constants_violations(c: &ConstantsReport) -> Vec<String> {
    let mut out = Vec::new();
    let mut check = |name: String, v: f64| {
        if !(v.is_finite() && v > 0.0) {
            out.push(format!("{name} = {v} is not a positive constant"));
        }
    };
    check("C_psi".into(), c.c_psi);
    check("C'_psi".into(), c.c_psi_prime);
    for m in &c.maps {
        check(format!("C_phi({})", m.name), m.c_phi);
        check(format!("C_M({})", m.name), m.c_m);
    }
    out
}

fn validate_pair(
    spec: &MdpSpec,
    mut class: RepresentationClass,
    rank_tol: f64,
) -> (ValidateReport, Option<Instance>) {
    let mut report = ValidateReport::default();
    let spec_report = spec.validate();
    if !spec_report.is_ok() {
        report.violations = spec_report.violations.iter().map(|v| v.to_string()).collect();
        return (report, None);
    }
    if let Err(e) = class.check_shapes(spec) {
        report.violations.push(e.to_string());
        return (report, None);
    }
    match class.residual(spec) {
        Ok((r, _, _)) => {
            report.residual = Some(r);
            if r.is_nan() || r > FIT_TOLERANCE {
                report
                    .violations
                    .push(format!("bilinear residual {} exceeds {}", sig(r), sig(FIT_TOLERANCE)));
                return (report, None);
            }
        }
        Err(e) => {
            report.violations.push(e.to_string());
            return (report, None);
        }
    }
    let constants = match compute_constants(&class) {
        Ok(c) => c,
        Err(e) => {
            report.violations.push(e.to_string());
            return (report, None);
        }
    };
    report.violations = constants_violations(&constants);
    report.constants = Some(constants.clone());
    if !report.violations.is_empty() {
        return (report, None);
    }
    class.constants = Some(constants);
    let instance = match Instance::new(spec.clone(), class, rank_tol) {
        Ok(i) => i,
        Err(e) => {
            report.violations.push(e.to_string());
            return (report, None);
        }
    };
    report.definition1_holds = true;
    if !instance.coverage.assumption3_holds {
        report.warnings.push(format!(
            "coverage fails: {} (step, state, action) triples are covered by no feature map",
            instance.coverage.uncovered.len()
        ));
    }
    for m in &instance.coverage.maps {
        if !m.degenerate_steps.is_empty() {
            report.warnings.push(format!(
                "map {} has no retained eigenvalue at steps {:?}",
                m.name,
                m.degenerate_steps.iter().map(|h| h + 1).collect::<Vec<_>>()
            ));
        }
    }
    if !instance.solution.unique_optimal {
        report.warnings.push("optimal policy is not unique".into());
    }
    if instance.solution.gap_min.is_infinite() {
        report.warnings.push("every gap is zero".into());
    }
    report.coverage = Some(CoverageSummary::of(&instance.coverage));
    (report, Some(instance))
}

pub fn cmd_validate(args: &ValidateArgs) -> CliResult<ValidateReport> {
    let (instance_path, class_path) = match (&args.instance, &args.class, &args.dir) {
        (Some(i), Some(c), None) => (i.clone(), c.clone()),
        (None, None, Some(d)) => (d.join("instance.json"), d.join("class.json")),
        _ => return Err(Failure::usage("give either DIR or both --instance and --class")),
    };
    if !(args.rank_tol > 0.0 && args.rank_tol < 1.0) {
        return Err(Failure::usage("--rank-tol must lie in (0, 1)"));
    }
    let spec: MdpSpec = read_input(&instance_path)?;
    let class: RepresentationClass = read_input(&class_path)?;
    let (report, instance) = validate_pair(&spec, class, args.rank_tol);
    for w in &report.warnings {
        log::warn!("{w}");
    }
    print!("{}", report_json(&report)?);
    if let Some(out) = &args.out {
        create_dir(out)?;
        write_text(&out.join("validation.json"), &report_json(&report)?)?;
        if let Some(inst) = &instance {
            write_text(&out.join("coverage.json"), &report_json(&CoverageSummary::of(&inst.coverage))?)?;
            write_text(&out.join("uncovered.csv"), &uncovered_csv(&inst.coverage)?)?;
        }
    }
    if report.definition1_holds {
        Ok(report)
    } else {
        Err(Failure::validation(format!(
            "instance/class pair is invalid: {}",
            report.violations.join("; ")
        )))
    }
}

struct JobOutcome {
    line: String,
    finished: Option<(Algorithm, u64, f64)>,
}

fn execute(
    instance: &Instance,
    config: &ExperimentConfig,
    job: &RunConfig,
    resume: Option<&RunSnapshot>,
    root: &Path,
) -> CliResult<JobOutcome> {
    let mut runner = match resume {
        Some(s) => Runner::resume(instance, s)?,
        None => Runner::new(instance, job.clone())?,
    };
    let label = job.algorithm.label();
    let dir = root.join(run_dir_name(job.algorithm, job.seed));
    create_dir(&dir)?;
    let mut stops: Vec<(usize, bool)> = [(config.checkpoint_at, false), (config.halt_after, true)]
        .into_iter()
        .filter_map(|(at, halt)| at.map(|k| (k, halt)))
        .filter(|&(k, _)| k > runner.episodes_done())
        .collect();
    stops.sort();
    for (at, halt) in stops {
        runner.run_until(at)?;
        write_text(&dir.join("snapshot.json"), &exact_json(&runner.snapshot())?)?;
        if halt {
            return Ok(JobOutcome {
                line: format!("{label} seed={} halted after {at} episodes", job.seed),
                finished: None,
            });
        }
    }
    let out = runner.finish()?;
    write_run(&dir, &out)?;
    log::info!("wrote {}", dir.display());
    let k_hat = out.phase.k_hat.map_or("none".to_string(), |k| k.to_string());
    Ok(JobOutcome {
        line: format!(
            "{label} seed={} episodes={} cum_regret={} k_hat={k_hat} flatness={}",
            job.seed,
            job.episodes,
            sig(out.final_cum_regret()),
            sig(out.phase.flatness_ratio)
        ),
        finished: Some((job.algorithm, job.seed, out.final_cum_regret())),
    })
}

pub fn cmd_run(args: &RunArgs) -> CliResult {
    let mut config = ExperimentConfig::load(&args.config).map_err(Failure::usage)?;
    if let Some(seed) = args.seed {
        config.seeds = vec![seed];
    }
    if args.jobs == Some(0) {
        return Err(Failure::usage("--jobs must be at least 1"));
    }
    let instance = build_instance(&config.source, config.rank_tol)?;
    for alg in &config.algorithms {
        if let Algorithm::Single(i) = alg {
            if *i >= instance.class.len() {
                return Err(Failure::usage(format!(
                    "{alg} refers to a map the class does not have ({} maps)",
                    instance.class.len()
                )));
            }
        }
    }
    if !instance.coverage.assumption3_holds {
        log::warn!("coverage fails for this class; regret need not flatten");
    }
    let resume: Option<RunSnapshot> = args.resume.as_deref().map(read_input).transpose()?;
    let jobs = match &resume {
        Some(s) => {
            if s.config != config.run_config(s.config.algorithm, s.config.seed)
                || !config.algorithms.contains(&s.config.algorithm)
            {
                return Err(Failure::usage("snapshot was not produced by this config"));
            }
            vec![s.config.clone()]
        }
        None => config.jobs(),
    };
    let root = output_root(args.out.as_deref(), config.out_dir.as_deref());
    create_dir(&root)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.unwrap_or(0))
        .build()
        .map_err(Failure::runtime)?;
    let results: Vec<CliResult<JobOutcome>> = pool.install(|| {
        jobs.par_iter()
            .map(|job| execute(&instance, &config, job, resume.as_ref(), &root))
            .collect()
    });
    let mut finals = Vec::new();
    for r in results {
        let outcome = r?;
        println!("{}", outcome.line);
        finals.extend(outcome.finished);
    }
    let has_baseline = finals.iter().any(|f| matches!(f.0, Algorithm::Single(_)));
    let has_relex = finals.iter().any(|f| f.0 == Algorithm::Relex);
    if resume.is_none() && has_baseline && has_relex {
        let table = ComparisonTable::from_finals(&finals);
        write_text(&root.join("comparison.json"), &report_json(&table)?)?;
        if let Some(ratio) = table.ratio {
            println!("relex / best single-map median regret = {}", sig(ratio));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRun {
    pub dir: String,
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<Algorithm>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub final_cum_regret: f64,
    pub phase: PhaseReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub runs: Vec<ReportRun>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<ComparisonTable>,
}

fn is_run_dir(p: &Path) -> bool {
    p.join("episodes.csv").is_file()
}

fn collect_run_dirs(args: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for p in args {
        if is_run_dir(p) {
            dirs.push(p.clone());
            continue;
        }
        let entries = std::fs::read_dir(p).map_err(|e| Failure::usage(Error::io(p, e)))?;
        let mut found: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|d| is_run_dir(d))
            .collect();
        if found.is_empty() {
            return Err(Failure::usage(format!("{} holds no episodes.csv", p.display())));
        }
        found.sort();
        dirs.extend(found);
    }
    Ok(dirs)
}

const MAX_PLOT_POINTS: usize = 2000;

pub fn cmd_report(args: &ReportArgs) -> CliResult {
    let dirs = collect_run_dirs(&args.run_dirs)?;
    let mut runs = Vec::new();
    let mut series = Vec::new();
    for dir in &dirs {
        let csv_path = dir.join("episodes.csv");
        let text = std::fs::read_to_string(&csv_path)
            .map_err(|e| Failure::usage(Error::io(&csv_path, e)))?;
        let rows = parse_episodes_csv(&text).map_err(Failure::usage)?;
        let meta_path = dir.join("run.json");
        let meta: Option<RunMeta> = if meta_path.is_file() {
            Some(read_input(&meta_path)?)
        } else {
            None
        };
        let records: Vec<EpisodeRecord> = rows.iter().map(|r| r.to_record()).collect();
        let name = dir
            .file_name()
            .map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned());
        let label = meta
            .as_ref()
            .map_or_else(|| name.clone(), |m| format!("{} seed {}", m.algorithm, m.seed));
        let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.episode as f64, r.cum_regret)).collect();
        series.push(Series { label: label.clone(), points: svg::thin(&points, MAX_PLOT_POINTS) });
        runs.push(ReportRun {
            dir: dir.display().to_string(),
            label,
            algorithm: meta.as_ref().map(|m| m.algorithm),
            seed: meta.as_ref().map(|m| m.seed),
            final_cum_regret: rows.last().map_or(0.0, |r| r.cum_regret),
            phase: detect_phase(&records),
        });
    }
    let finals: Vec<(Algorithm, u64, f64)> = runs
        .iter()
        .filter_map(|r| Some((r.algorithm?, r.seed?, r.final_cum_regret)))
        .collect();
    let comparison = (!finals.is_empty()).then(|| ComparisonTable::from_finals(&finals));
    let summary = ReportSummary { runs, comparison };
    let out = output_root(args.out.as_deref(), None);
    create_dir(&out)?;
    write_text(&out.join("regret.svg"), &svg::render(&series, args.log_x))?;
    write_text(&out.join("summary.json"), &report_json(&summary)?)?;
    println!("{} runs -> {}", summary.runs.len(), out.display());
    Ok(())
}
