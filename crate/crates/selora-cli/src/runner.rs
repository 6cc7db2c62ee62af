//! Command implementations: orchestration, file IO, parallel sweep
//! execution, and the environment-variable knobs.
//!
//! Two environment variables are honored and no others: `SELORA_SEED`
//! overrides the built-in default seed (flags and config files still win),
//! and `SELORA_MAX_THREADS` caps sweep parallelism.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;

use selora_core::analysis::{amplification_factors, variance_report};
use selora_core::trainer::{
    assemble_report, plan_sweep, run_job, train, OptimizerConfig, SweepEntry, SweepJob, Task,
};

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::{RunConfig, DEFAULT_SEED};
use crate::error::{CliError, CliResult};
use crate::metrics::{
    parse_document, run_document, sweep_document, to_csv, to_json, MetricsDocument,
};

pub const ENV_SEED: &str = "SELORA_SEED";
pub const ENV_MAX_THREADS: &str = "SELORA_MAX_THREADS";

pub fn load_config(path: Option<&Path>) -> CliResult<RunConfig> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::io(format!("reading {}: {e}", p.display())))?;
            RunConfig::parse(&text)
        }
        None => Ok(RunConfig::default()),
    }
}

fn env_seed() -> Option<u64> {
    std::env::var(ENV_SEED).ok().and_then(|v| v.parse().ok())
}

/// Seed precedence: `--seed` flag, then config `run.seed`, then
/// `SELORA_SEED`, then the built-in default.
pub fn resolve_seed(flag: Option<u64>, config: &RunConfig) -> u64 {
    flag.or(config.seed)
        .or_else(env_seed)
        .unwrap_or(DEFAULT_SEED)
}

fn max_threads(job_count: usize) -> usize {
    let cap = std::env::var(ENV_MAX_THREADS)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0);
    let available = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    cap.unwrap_or(available).min(job_count).max(1)
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::io(format!("writing {}: {e}", path.display())))
}

pub struct TrainArgs {
    pub config_path: Option<PathBuf>,
    pub seed: Option<u64>,
    pub steps: Option<u64>,
    pub metrics_out: Option<PathBuf>,
    pub checkpoint_out: Option<PathBuf>,
}

pub fn cmd_train(args: &TrainArgs) -> CliResult<()> {
    let mut config = load_config(args.config_path.as_deref())?;
    let seed = resolve_seed(args.seed, &config);
    config.resolve_seeds(seed);
    if let Some(steps) = args.steps {
        config.optim.total_steps = steps;
    }
    config.validate_for_train()?;

    let task = config.build_task()?;
    let adapter_cfg = config.adapter_config();
    let steps = config.optim.total_steps;

    let started = Instant::now();
    let mut outcome =
        train(&task, &adapter_cfg, &config.optim, steps, seed).map_err(CliError::from_core_run)?;
    outcome.metrics.wall_clock_seconds = started.elapsed().as_secs_f64();

    let metrics_path = args
        .metrics_out
        .clone()
        .or_else(|| config.output.metrics.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("selora-metrics.json"));
    let checkpoint_path = args
        .checkpoint_out
        .clone()
        .or_else(|| config.output.checkpoint.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("selora.ckpt"));

    let doc = run_document(&config, seed, &outcome.metrics);
    write_file(&metrics_path, &to_json(&doc))?;
    save_checkpoint(
        &checkpoint_path,
        &config,
        &outcome.adapters,
        &outcome.optimizer_states,
    )?;

    println!(
        "train: {} steps, {} = {}, {} trainable parameters",
        steps,
        outcome.metrics.metric.name(),
        outcome.metrics.final_metric,
        outcome.metrics.trainable_params
    );
    println!("metrics -> {}", metrics_path.display());
    println!("checkpoint -> {}", checkpoint_path.display());
    eprintln!(
        "timing: {:.3}s wall clock (reported here only, metrics files stay reproducible)",
        outcome.metrics.wall_clock_seconds
    );
    Ok(())
}

/// Runs sweep jobs on a small worker pool; results are position-indexed so
/// the report is independent of completion order.
fn execute_jobs(
    task: &Task,
    optim: &OptimizerConfig,
    steps: u64,
    jobs: &[SweepJob],
) -> CliResult<Vec<SweepEntry>> {
    let workers = max_threads(jobs.len());
    if workers <= 1 {
        return jobs
            .iter()
            .map(|j| run_job(task, optim, steps, j).map_err(CliError::from_core_run))
            .collect();
    }

    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<CliResult<SweepEntry>>>> =
        jobs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let entry = run_job(task, optim, steps, &jobs[i]).map_err(CliError::from_core_run);
                *slots[i].lock().expect("no poisoned slots") = Some(entry);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| {
            slot.into_inner()
                .expect("no poisoned slots")
                .expect("every job ran")
        })
        .collect()
}

pub struct SweepArgs {
    pub config_path: Option<PathBuf>,
    pub seed: Option<u64>,
    pub steps: Option<u64>,
    pub axis: Option<String>,
    pub grid: Option<String>,
    pub seeds: Option<String>,
    pub report_out: Option<PathBuf>,
    pub format: Option<String>,
}

pub fn cmd_sweep(args: &SweepArgs) -> CliResult<()> {
    let mut config = load_config(args.config_path.as_deref())?;
    // flag overrides are re-parsed through the config layer so the grid is
    // validated and normalized exactly like file input
    let mut override_text = String::new();
    if let Some(axis) = &args.axis {
        override_text.push_str(&format!("sweep.axis = {axis}\n"));
    }
    if let Some(grid) = &args.grid {
        override_text.push_str(&format!("sweep.grid = {grid}\n"));
    }
    if let Some(seeds) = &args.seeds {
        override_text.push_str(&format!("sweep.seeds = {seeds}\n"));
    }
    if !override_text.is_empty() {
        let mut base_text = config.emit();
        // replace existing sweep keys with the overrides
        base_text = base_text
            .lines()
            .filter(|line| {
                !(args.axis.is_some() && line.starts_with("sweep.axis"))
                    && !(args.grid.is_some() && line.starts_with("sweep.grid"))
                    && !(args.seeds.is_some() && line.starts_with("sweep.seeds"))
            })
            .map(|l| format!("{l}\n"))
            .collect();
        base_text.push_str(&override_text);
        config = RunConfig::parse(&base_text)?;
    }
    let seed = resolve_seed(args.seed, &config);
    config.resolve_seeds(seed);
    if let Some(steps) = args.steps {
        config.optim.total_steps = steps;
    }
    config.validate_for_sweep()?;

    let task = config.build_task()?;
    let grid = config.sweep_grid()?;
    let base_cfg = config.adapter_config();
    let steps = config.optim.total_steps;

    let started = Instant::now();
    let jobs = plan_sweep(config.sweep.axis, &grid, &base_cfg, &config.sweep.seeds)
        .map_err(CliError::from_core_config)?;
    let entries = execute_jobs(&task, &config.optim, steps, &jobs)?;
    let report = assemble_report(
        config.sweep.axis,
        task.metric(),
        config.sweep.seeds.clone(),
        entries,
    );
    let elapsed = started.elapsed().as_secs_f64();

    let doc = sweep_document(&config, &report);
    let format = args.format.as_deref().unwrap_or("json");
    let default_name = match format {
        "csv" => "selora-sweep.csv",
        _ => "selora-sweep.json",
    };
    let out_path = args
        .report_out
        .clone()
        .or_else(|| config.output.report.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(default_name));
    match format {
        "json" => write_file(&out_path, &to_json(&doc))?,
        "csv" => write_file(&out_path, &to_csv(&MetricsDocument::Sweep(doc.clone())))?,
        other => {
            return Err(CliError::config(format!(
                "unknown report format {other:?} (expected json or csv)"
            )))
        }
    }

    println!(
        "sweep: axis {}, {} cells, {} seeds, {} entries ({} skipped)",
        report.axis.name(),
        doc.medians.len(),
        report.seeds.len(),
        report.entries.len(),
        report
            .entries
            .iter()
            .filter(|e| e.skip_reason.is_some())
            .count()
    );
    for median in &report.medians {
        match median.median_metric {
            Some(value) => println!(
                "  {:>10} {:<12} median {} = {}",
                median.grid_label,
                median.arm,
                report.metric.name(),
                value
            ),
            None => println!("  {:>10} {:<12} skipped", median.grid_label, median.arm),
        }
    }
    println!("report -> {}", out_path.display());
    eprintln!("timing: {elapsed:.3}s wall clock");
    Ok(())
}

#[derive(Debug, Serialize)]
struct SubspaceDocument {
    rank_used: usize,
    delta_norm: f64,
    projected_norm: f64,
    residual_projected_norm: f64,
    af: f64,
    raf: f64,
    singular_value_tie: bool,
}

#[derive(Debug, Serialize)]
struct AdapterAnalysisDocument {
    index: usize,
    schema: String,
    basis: String,
    trainable_params: usize,
    variance: VarianceDocument,
    subspace: Option<SubspaceDocument>,
    subspace_skipped: Option<String>,
}

#[derive(Debug, Serialize)]
struct VarianceDocument {
    a_tilde_mean: f64,
    a_tilde_variance: f64,
    b_tilde_mean: f64,
    b_tilde_variance: f64,
    fa_values_mean: f64,
    fa_values_variance: f64,
    fb_values_mean: f64,
    fb_values_variance: f64,
    init_variance_ratio: f64,
}

#[derive(Debug, Serialize)]
struct AnalysisDocument {
    kind: String,
    checkpoint: String,
    adapters: Vec<AdapterAnalysisDocument>,
}

pub struct AnalyzeArgs {
    pub checkpoint: PathBuf,
    pub rank: Option<usize>,
    pub out: Option<PathBuf>,
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> CliResult<()> {
    let (_config, adapters) = load_checkpoint(&args.checkpoint)?;

    let mut docs = Vec::new();
    for (index, (adapter, _state)) in adapters.iter().enumerate() {
        let var = variance_report(adapter).map_err(CliError::from_core_run)?;
        let cfg = adapter.config();
        let (_, _, delta) = adapter.materialize().map_err(CliError::from_core_run)?;
        let rank = args.rank.unwrap_or(cfg.rank);
        let (subspace, skipped) = match amplification_factors(adapter.w0(), &delta, rank) {
            Ok(report) => (
                Some(SubspaceDocument {
                    rank_used: report.rank_used,
                    delta_norm: report.delta_norm,
                    projected_norm: report.projected_norm,
                    residual_projected_norm: report.residual_projected_norm,
                    af: report.af,
                    raf: report.raf,
                    singular_value_tie: report.singular_value_tie,
                }),
                None,
            ),
            Err(e) => (None, Some(e.to_string())),
        };
        docs.push(AdapterAnalysisDocument {
            index,
            schema: cfg.schema.name().into(),
            basis: cfg.basis.name().into(),
            trainable_params: adapter.trainable_parameter_count(),
            variance: VarianceDocument {
                a_tilde_mean: var.a_tilde_mean,
                a_tilde_variance: var.a_tilde_variance,
                b_tilde_mean: var.b_tilde_mean,
                b_tilde_variance: var.b_tilde_variance,
                fa_values_mean: var.fa_values_mean,
                fa_values_variance: var.fa_values_variance,
                fb_values_mean: var.fb_values_mean,
                fb_values_variance: var.fb_values_variance,
                init_variance_ratio: var.init_variance_ratio,
            },
            subspace,
            subspace_skipped: skipped,
        });
    }

    let doc = AnalysisDocument {
        kind: "analysis".into(),
        checkpoint: args.checkpoint.display().to_string(),
        adapters: docs,
    };
    let out_path = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("selora-analysis.json"));
    write_file(&out_path, &to_json(&doc))?;

    for adapter in &doc.adapters {
        match (&adapter.subspace, &adapter.subspace_skipped) {
            (Some(s), _) => println!(
                "adapter {}: ||dW||_F = {:.6}, AF = {:.6}, RAF = {:.6} (r = {})",
                adapter.index, s.delta_norm, s.af, s.raf, s.rank_used
            ),
            (None, Some(reason)) => {
                println!(
                    "adapter {}: subspace analysis skipped ({reason})",
                    adapter.index
                )
            }
            _ => {}
        }
        println!(
            "adapter {}: Var(A~) = {:.6e}, Var(B~) = {:.6e}, init ratio = {:.6}",
            adapter.index,
            adapter.variance.a_tilde_variance,
            adapter.variance.b_tilde_variance,
            adapter.variance.init_variance_ratio
        );
    }
    println!("analysis -> {}", out_path.display());
    Ok(())
}

pub struct ExportArgs {
    pub input: PathBuf,
    pub format: String,
    pub out: Option<PathBuf>,
}

pub fn cmd_export(args: &ExportArgs) -> CliResult<()> {
    if !matches!(args.format.as_str(), "csv" | "json") {
        return Err(CliError::config(format!(
            "unknown export format {:?} (expected csv or json)",
            args.format
        )));
    }
    let text = std::fs::read_to_string(&args.input)
        .map_err(|e| CliError::io(format!("reading {}: {e}", args.input.display())))?;
    let doc = parse_document(&text)?;
    let (contents, extension) = match args.format.as_str() {
        "csv" => (to_csv(&doc), "csv"),
        _ => (
            match &doc {
                MetricsDocument::Run(r) => to_json(r),
                MetricsDocument::Sweep(s) => to_json(s),
            },
            "json",
        ),
    };
    let out_path = args
        .out
        .clone()
        .unwrap_or_else(|| args.input.with_extension(format!("export.{extension}")));
    write_file(&out_path, &contents)?;
    println!("export -> {}", out_path.display());
    Ok(())
}

pub fn cmd_check() -> CliResult<()> {
    let outcomes = crate::checks::run_all_checks();
    let mut all_passed = true;
    for outcome in &outcomes {
        if outcome.passed {
            println!("check {:<28} ok ({})", outcome.name, outcome.detail);
        } else {
            all_passed = false;
            println!("check {:<28} FAILED ({})", outcome.name, outcome.detail);
        }
    }
    if all_passed {
        println!("all {} checks passed", outcomes.len());
        Ok(())
    } else {
        Err(CliError::Numeric(format!(
            "{} of {} checks failed",
            outcomes.iter().filter(|o| !o.passed).count(),
            outcomes.len()
        )))
    }
}
