//! Sweep harness: grids over sparse ratio, rank, basis or schema, with the
//! comparison arms mirroring the density-redundancy experiments.
//!
//! A sweep is planned into independent jobs; jobs may run sequentially
//! ([`run_sweep`]) or be executed elsewhere in any order and reassembled
//! with [`assemble_report`], which sorts canonically so the report is
//! independent of completion order.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::adapter::{AdapterConfig, Schema};
use crate::error::{Result, SeloraError};
use crate::spectral::SpectralBasis;
use crate::trainer::optim::OptimizerConfig;
use crate::trainer::task::{matched_budget_rank, Metric, Task};
use crate::trainer::train::{train, RunMetrics};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    SparseRatio,
    Rank,
    Basis,
    Schema,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::SparseRatio => "sparse-ratio",
            SweepAxis::Rank => "rank",
            SweepAxis::Basis => "basis",
            SweepAxis::Schema => "schema",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "sparse-ratio" => Some(SweepAxis::SparseRatio),
            "rank" => Some(SweepAxis::Rank),
            "basis" => Some(SweepAxis::Basis),
            "schema" => Some(SweepAxis::Schema),
            _ => None,
        }
    }
}

/// Grid values, typed per axis.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepGrid {
    Ratios(Vec<f64>),
    Ranks(Vec<usize>),
    Bases(Vec<SpectralBasis>),
    Schemas(Vec<Schema>),
}

impl SweepGrid {
    fn len(&self) -> usize {
        match self {
            SweepGrid::Ratios(v) => v.len(),
            SweepGrid::Ranks(v) => v.len(),
            SweepGrid::Bases(v) => v.len(),
            SweepGrid::Schemas(v) => v.len(),
        }
    }

    fn matches_axis(&self, axis: SweepAxis) -> bool {
        matches!(
            (self, axis),
            (SweepGrid::Ratios(_), SweepAxis::SparseRatio)
                | (SweepGrid::Ranks(_), SweepAxis::Rank)
                | (SweepGrid::Bases(_), SweepAxis::Basis)
                | (SweepGrid::Schemas(_), SweepAxis::Schema)
        )
    }
}

/// One planned run (or a recorded skip, when the arm's configuration
/// violates an invariant).
#[derive(Debug, Clone)]
pub struct SweepJob {
    pub grid_index: usize,
    pub grid_label: String,
    pub arm: &'static str,
    pub seed: u64,
    pub config: Option<AdapterConfig>,
    pub skip_reason: Option<String>,
}

/// One row of the final report.
#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub grid_index: usize,
    pub grid_label: String,
    pub arm: &'static str,
    pub seed: u64,
    pub metrics: Option<RunMetrics>,
    pub skip_reason: Option<String>,
}

/// Median over seeds for one (grid point, arm) cell.
#[derive(Debug, Clone)]
pub struct ArmMedian {
    pub grid_index: usize,
    pub grid_label: String,
    pub arm: &'static str,
    pub median_metric: Option<f64>,
    pub trainable_params: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub metric: Metric,
    pub seeds: Vec<u64>,
    pub entries: Vec<SweepEntry>,
    pub medians: Vec<ArmMedian>,
}

impl SweepReport {
    /// Median metric of a given (grid label, arm) cell.
    pub fn median_for(&self, grid_label: &str, arm: &str) -> Option<f64> {
        self.medians
            .iter()
            .find(|m| m.grid_label == grid_label && m.arm == arm)
            .and_then(|m| m.median_metric)
    }
}

fn job(
    grid_index: usize,
    grid_label: &str,
    arm: &'static str,
    seed: u64,
    config: AdapterConfig,
) -> SweepJob {
    // replicate seed keys the learnable locations too, so seeds are
    // independent draws of the whole construction
    let mut config = config;
    config.seed = seed;
    let skip_reason = config.validate().err().map(|e| e.to_string());
    SweepJob {
        grid_index,
        grid_label: grid_label.into(),
        arm,
        seed,
        config: skip_reason.is_none().then_some(config),
        skip_reason,
    }
}

/// Expands a sweep into independent jobs.
///
/// - `sparse-ratio`: three arms per point -- the base (spectral) schema at
///   `eta`, the masked spatial baseline at `eta`, and dense low-rank at the
///   matched-budget reduced rank.
/// - `rank`: the base schema at each rank, `eta` fixed.
/// - `basis`: the base schema under each listed basis.
/// - `schema`: each listed update rule with and without spectral encoding
///   (the spatial arm keeps the same sparse ratio, so budgets match).
pub fn plan_sweep(
    axis: SweepAxis,
    grid: &SweepGrid,
    base: &AdapterConfig,
    seeds: &[u64],
) -> Result<Vec<SweepJob>> {
    if grid.len() == 0 {
        return Err(SeloraError::InvalidDimension("sweep grid is empty".into()));
    }
    if seeds.is_empty() {
        return Err(SeloraError::InvalidDimension(
            "sweep needs at least one seed".into(),
        ));
    }
    if !grid.matches_axis(axis) {
        return Err(SeloraError::InvalidDimension(format!(
            "grid values do not match axis {}",
            axis.name()
        )));
    }

    let mut jobs = Vec::new();
    match grid {
        SweepGrid::Ratios(ratios) => {
            for (gi, &eta) in ratios.iter().enumerate() {
                let label = format!("{eta}");
                for &seed in seeds {
                    let mut selora = base.clone();
                    selora.sparse_ratio = eta;
                    jobs.push(job(gi, &label, "selora", seed, selora));

                    let mut masked = base.clone();
                    masked.schema = Schema::MaskedLora;
                    masked.sparse_ratio = eta;
                    jobs.push(job(gi, &label, "masked-lora", seed, masked));

                    let mut reduced = base.clone();
                    reduced.schema = Schema::MaskedLora;
                    reduced.sparse_ratio = 0.0;
                    reduced.rank = matched_budget_rank(base.rank, eta);
                    jobs.push(job(gi, &label, "reduced-rank", seed, reduced));
                }
            }
        }
        SweepGrid::Ranks(ranks) => {
            for (gi, &rank) in ranks.iter().enumerate() {
                let label = format!("{rank}");
                for &seed in seeds {
                    let mut cfg = base.clone();
                    cfg.rank = rank;
                    jobs.push(job(gi, &label, "selora", seed, cfg));
                }
            }
        }
        SweepGrid::Bases(bases) => {
            for (gi, basis) in bases.iter().enumerate() {
                let label = basis.name().to_string();
                for &seed in seeds {
                    let mut cfg = base.clone();
                    cfg.basis = basis.clone();
                    if !cfg.schema.is_spectral() {
                        cfg.schema = Schema::Lora;
                    }
                    jobs.push(job(gi, &label, "selora", seed, cfg));
                }
            }
        }
        SweepGrid::Schemas(schemas) => {
            for (gi, &schema) in schemas.iter().enumerate() {
                if !schema.is_spectral() {
                    return Err(SeloraError::InvalidDimension(format!(
                        "schema grid lists update rules; got {}",
                        schema.name()
                    )));
                }
                let label = schema.name().to_string();
                let spatial = match schema {
                    Schema::Lora => Schema::MaskedLora,
                    Schema::Dora => Schema::MaskedDora,
                    Schema::Hira => Schema::MaskedHira,
                    _ => unreachable!(),
                };
                for &seed in seeds {
                    let mut spectral_cfg = base.clone();
                    spectral_cfg.schema = schema;
                    jobs.push(job(gi, &label, "spectral", seed, spectral_cfg));

                    let mut spatial_cfg = base.clone();
                    spatial_cfg.schema = spatial;
                    jobs.push(job(gi, &label, "spatial", seed, spatial_cfg));
                }
            }
        }
    }
    Ok(jobs)
}

/// Runs one job to completion (or carries its skip reason through).
pub fn run_job(
    task: &Task,
    optim: &OptimizerConfig,
    steps: u64,
    job: &SweepJob,
) -> Result<SweepEntry> {
    let metrics = match &job.config {
        Some(cfg) => Some(train(task, cfg, optim, steps, job.seed)?.metrics),
        None => None,
    };
    Ok(SweepEntry {
        grid_index: job.grid_index,
        grid_label: job.grid_label.clone(),
        arm: job.arm,
        seed: job.seed,
        metrics,
        skip_reason: job.skip_reason.clone(),
    })
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite metrics"));
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Sorts entries canonically and computes per-(grid point, arm) medians.
/// The result is independent of the order entries were produced in.
pub fn assemble_report(
    axis: SweepAxis,
    metric: Metric,
    seeds: Vec<u64>,
    mut entries: Vec<SweepEntry>,
) -> SweepReport {
    entries.sort_by(|a, b| (a.grid_index, a.arm, a.seed).cmp(&(b.grid_index, b.arm, b.seed)));
    let mut medians: Vec<ArmMedian> = Vec::new();
    for entry in &entries {
        if medians
            .iter()
            .any(|m| m.grid_index == entry.grid_index && m.arm == entry.arm)
        {
            continue;
        }
        let cell: Vec<&SweepEntry> = entries
            .iter()
            .filter(|e| e.grid_index == entry.grid_index && e.arm == entry.arm)
            .collect();
        let mut values: Vec<f64> = cell
            .iter()
            .filter_map(|e| e.metrics.as_ref().map(|m| m.final_metric))
            .collect();
        medians.push(ArmMedian {
            grid_index: entry.grid_index,
            grid_label: entry.grid_label.clone(),
            arm: entry.arm,
            median_metric: median(&mut values),
            trainable_params: cell
                .iter()
                .find_map(|e| e.metrics.as_ref().map(|m| m.trainable_params)),
        });
    }
    SweepReport {
        axis,
        metric,
        seeds,
        entries,
        medians,
    }
}

/// Plans and runs a sweep sequentially.
pub fn run_sweep(
    task: &Task,
    axis: SweepAxis,
    grid: &SweepGrid,
    base: &AdapterConfig,
    optim: &OptimizerConfig,
    steps: u64,
    seeds: &[u64],
) -> Result<SweepReport> {
    let jobs = plan_sweep(axis, grid, base, seeds)?;
    let mut entries = Vec::with_capacity(jobs.len());
    for job in &jobs {
        entries.push(run_job(task, optim, steps, job)?);
    }
    Ok(assemble_report(axis, task.metric(), seeds.into(), entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::InitScheme;

    fn base_cfg() -> AdapterConfig {
        AdapterConfig {
            rank: 8,
            in_dim: 16,
            out_dim: 16,
            alpha: 16.0,
            sparse_ratio: 0.5,
            basis: SpectralBasis::Fourier,
            schema: Schema::Lora,
            init_scheme: InitScheme::Kaiming,
            dropout_rate: 0.0,
            seed: 0,
        }
    }

    #[test]
    fn sparse_ratio_plan_has_three_arms_per_point_and_seed() {
        let jobs = plan_sweep(
            SweepAxis::SparseRatio,
            &SweepGrid::Ratios(vec![0.2, 0.4]),
            &base_cfg(),
            &[0, 1, 2],
        )
        .unwrap();
        assert_eq!(jobs.len(), 2 * 3 * 3);
        let reduced: Vec<_> = jobs.iter().filter(|j| j.arm == "reduced-rank").collect();
        assert!(reduced
            .iter()
            .all(|j| j.config.as_ref().unwrap().sparse_ratio == 0.0));
        // eta = 0.4, r = 8 -> round(4.8) = 5
        assert_eq!(
            reduced
                .iter()
                .find(|j| j.grid_label == "0.4")
                .unwrap()
                .config
                .as_ref()
                .unwrap()
                .rank,
            5
        );
    }

    #[test]
    fn zero_sparse_ratio_makes_masked_and_reduced_arms_identical() {
        let jobs = plan_sweep(
            SweepAxis::SparseRatio,
            &SweepGrid::Ratios(vec![0.0]),
            &base_cfg(),
            &[0],
        )
        .unwrap();
        let masked = jobs.iter().find(|j| j.arm == "masked-lora").unwrap();
        let reduced = jobs.iter().find(|j| j.arm == "reduced-rank").unwrap();
        assert_eq!(masked.config, reduced.config);
    }

    #[test]
    fn invalid_arm_configs_are_skipped_not_fatal() {
        // eta 0.96875 leaves zero learnable cells in the 2x16 A-grid
        let mut cfg = base_cfg();
        cfg.rank = 2;
        let jobs = plan_sweep(
            SweepAxis::SparseRatio,
            &SweepGrid::Ratios(vec![0.98]),
            &cfg,
            &[0],
        )
        .unwrap();
        let selora = jobs.iter().find(|j| j.arm == "selora").unwrap();
        assert!(selora.config.is_none());
        assert!(selora.skip_reason.as_ref().unwrap().contains("sparsity"));
    }

    #[test]
    fn schema_grid_rejects_masked_entries() {
        let err = plan_sweep(
            SweepAxis::Schema,
            &SweepGrid::Schemas(vec![Schema::MaskedLora]),
            &base_cfg(),
            &[0],
        )
        .unwrap_err();
        assert!(matches!(err, SeloraError::InvalidDimension(_)));
    }

    #[test]
    fn axis_grid_mismatch_is_rejected() {
        let err = plan_sweep(
            SweepAxis::Rank,
            &SweepGrid::Ratios(vec![0.5]),
            &base_cfg(),
            &[0],
        )
        .unwrap_err();
        assert!(matches!(err, SeloraError::InvalidDimension(_)));
    }

    #[test]
    fn report_is_order_independent() {
        use crate::trainer::task::make_teacher_student_task;
        use crate::trainer::train::train;

        let task = Task::TeacherStudent(make_teacher_student_task(16, 16, 4, 0.01, 5).unwrap());
        let optim = OptimizerConfig {
            learning_rate: 5e-3,
            warmup_steps: 5,
            total_steps: 20,
            batch_size: 8,
            ..OptimizerConfig::default()
        };
        let jobs = plan_sweep(
            SweepAxis::Rank,
            &SweepGrid::Ranks(vec![4, 8]),
            &base_cfg(),
            &[0, 1, 2],
        )
        .unwrap();
        let mut entries: Vec<SweepEntry> = jobs
            .iter()
            .map(|j| run_job(&task, &optim, 20, j).unwrap())
            .collect();
        let forward = assemble_report(
            SweepAxis::Rank,
            task.metric(),
            vec![0, 1, 2],
            entries.clone(),
        );
        entries.reverse();
        let reversed = assemble_report(SweepAxis::Rank, task.metric(), vec![0, 1, 2], entries);
        for (a, b) in forward.entries.iter().zip(reversed.entries.iter()) {
            assert_eq!(a.grid_label, b.grid_label);
            assert_eq!(a.arm, b.arm);
            assert_eq!(a.seed, b.seed);
        }
        for (a, b) in forward.medians.iter().zip(reversed.medians.iter()) {
            assert_eq!(a.median_metric, b.median_metric);
        }
        // spot-check one median by hand
        let mut cell: Vec<f64> = forward
            .entries
            .iter()
            .filter(|e| e.grid_index == 0 && e.arm == "selora")
            .map(|e| e.metrics.as_ref().unwrap().final_metric)
            .collect();
        cell.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(forward.medians[0].median_metric.unwrap(), cell[1]);
        let _ = train(&task, &base_cfg(), &optim, 1, 0).unwrap();
    }

    #[test]
    fn matched_budget_bookkeeping_stays_within_one_rank_unit() {
        use crate::adapter::init_adapter;
        use crate::mat::RealMatrix;
        use crate::rng::Rng;

        let base = AdapterConfig {
            rank: 16,
            in_dim: 64,
            out_dim: 64,
            alpha: 32.0,
            ..base_cfg()
        };
        let mut rng = Rng::from_seed(9);
        let w0 = RealMatrix::gaussian(64, 64, 1.0, &mut rng);
        for eta in [0.2, 0.4, 0.6, 0.8] {
            let jobs = plan_sweep(
                SweepAxis::SparseRatio,
                &SweepGrid::Ratios(vec![eta]),
                &base,
                &[0],
            )
            .unwrap();
            let count_of = |arm: &str| {
                let cfg = jobs
                    .iter()
                    .find(|j| j.arm == arm)
                    .unwrap()
                    .config
                    .as_ref()
                    .unwrap();
                init_adapter(cfg, &w0, 0)
                    .unwrap()
                    .trainable_parameter_count() as i64
            };
            let selora = count_of("selora");
            let reduced = count_of("reduced-rank");
            let bound = (base.rank * (64 + 64)) as i64;
            assert!(
                (selora - reduced).abs() <= bound,
                "eta {eta}: {selora} vs {reduced}"
            );
        }
    }
}
