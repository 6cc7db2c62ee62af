//! Line-oriented `key = value` run configuration.
//!
//! Parsing validates every module precondition before any compute starts;
//! unknown and duplicate keys are rejected. Emission is canonical (fixed key
//! order, shortest-round-trip float formatting), so parse -> emit is a fixed
//! point and the emitted text doubles as the config echo stored in metrics
//! files and checkpoints.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use selora_core::adapter::{AdapterConfig, InitScheme, Schema};
use selora_core::spectral::SpectralBasis;
use selora_core::trainer::{
    make_teacher_student_task, make_toy_classification_task, OptimizerConfig, SweepAxis, SweepGrid,
    Task,
};

use crate::error::{CliError, CliResult};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    TeacherStudent,
    ToyClassification,
}

impl TaskKind {
    fn name(self) -> &'static str {
        match self {
            TaskKind::TeacherStudent => "teacher-student",
            TaskKind::ToyClassification => "toy-classification",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        match name {
            "teacher-student" => Some(TaskKind::TeacherStudent),
            "toy-classification" => Some(TaskKind::ToyClassification),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub d1: usize,
    pub d2: usize,
    pub true_rank: usize,
    pub noise_std: f64,
    pub input_dim: usize,
    pub classes: usize,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdapterSpec {
    pub schema: Schema,
    pub basis: SpectralBasis,
    pub rank: usize,
    pub alpha: f64,
    pub sparse_ratio: f64,
    pub init: InitScheme,
    pub dropout: f64,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub grid: Vec<String>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutputSpec {
    pub metrics: Option<String>,
    pub checkpoint: Option<String>,
    pub report: Option<String>,
}

/// Full run configuration. Defaults: rank 32, alpha 64, dropout 0.05, Haar
/// basis, cosine schedule with 100 warmup steps, batch size 16.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub task: TaskSpec,
    pub adapter: AdapterSpec,
    pub optim: OptimizerConfig,
    pub sweep: SweepSpec,
    pub output: OutputSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            task: TaskSpec {
                kind: TaskKind::TeacherStudent,
                d1: 64,
                d2: 64,
                true_rank: 8,
                noise_std: 0.01,
                input_dim: 32,
                classes: 16,
                seed: None,
            },
            adapter: AdapterSpec {
                schema: Schema::Lora,
                basis: SpectralBasis::from_name("haar").unwrap(),
                rank: 32,
                alpha: 64.0,
                sparse_ratio: 0.4,
                init: InitScheme::Kaiming,
                dropout: 0.05,
                seed: None,
            },
            optim: OptimizerConfig {
                learning_rate: 5e-3,
                beta1: 0.9,
                beta2: 0.999,
                epsilon: 1e-8,
                weight_decay: 0.0,
                warmup_steps: 100,
                total_steps: 1000,
                batch_size: 16,
            },
            sweep: SweepSpec {
                axis: SweepAxis::SparseRatio,
                grid: vec!["0.2".into(), "0.4".into(), "0.6".into()],
                seeds: vec![0, 1, 2],
            },
            output: OutputSpec::default(),
        }
    }
}

fn parse_number<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<T> {
    value
        .parse()
        .map_err(|_| CliError::config(format!("invalid value for {key}: {value:?}")))
}

fn parse_csv_u64(key: &str, value: &str) -> CliResult<Vec<u64>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_number::<u64>(key, s))
        .collect()
}

impl RunConfig {
    /// Parses and normalizes configuration text.
    pub fn parse(text: &str) -> CliResult<RunConfig> {
        let mut seen: BTreeMap<String, String> = BTreeMap::new();
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::config(format!(
                    "line {}: expected `key = value`, got {raw:?}",
                    line_no + 1
                )));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if seen.insert(key.clone(), value).is_some() {
                return Err(CliError::config(format!("duplicate key {key}")));
            }
        }

        let mut cfg = RunConfig::default();
        for (key, value) in &seen {
            cfg.apply(key, value)?;
        }
        cfg.normalize_grid()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> CliResult<()> {
        match key {
            "run.seed" => self.seed = Some(parse_number(key, value)?),
            "task.kind" => {
                self.task.kind = TaskKind::from_name(value)
                    .ok_or_else(|| CliError::config(format!("unknown task kind {value:?}")))?
            }
            "task.d1" => self.task.d1 = parse_number(key, value)?,
            "task.d2" => self.task.d2 = parse_number(key, value)?,
            "task.true_rank" => self.task.true_rank = parse_number(key, value)?,
            "task.noise_std" => self.task.noise_std = parse_number(key, value)?,
            "task.input_dim" => self.task.input_dim = parse_number(key, value)?,
            "task.classes" => self.task.classes = parse_number(key, value)?,
            "task.seed" => self.task.seed = Some(parse_number(key, value)?),
            "adapter.schema" => {
                self.adapter.schema = Schema::from_name(value)
                    .ok_or_else(|| CliError::config(format!("unknown schema {value:?}")))?
            }
            "adapter.basis" => {
                self.adapter.basis = SpectralBasis::from_name(value)
                    .ok_or_else(|| CliError::config(format!("unknown basis {value:?}")))?
            }
            "adapter.rank" => self.adapter.rank = parse_number(key, value)?,
            "adapter.alpha" => self.adapter.alpha = parse_number(key, value)?,
            "adapter.sparse_ratio" => self.adapter.sparse_ratio = parse_number(key, value)?,
            "adapter.init" => {
                self.adapter.init = InitScheme::from_name(value)
                    .ok_or_else(|| CliError::config(format!("unknown init scheme {value:?}")))?
            }
            "adapter.dropout" => self.adapter.dropout = parse_number(key, value)?,
            "adapter.seed" => self.adapter.seed = Some(parse_number(key, value)?),
            "optim.learning_rate" => self.optim.learning_rate = parse_number(key, value)?,
            "optim.beta1" => self.optim.beta1 = parse_number(key, value)?,
            "optim.beta2" => self.optim.beta2 = parse_number(key, value)?,
            "optim.epsilon" => self.optim.epsilon = parse_number(key, value)?,
            "optim.weight_decay" => self.optim.weight_decay = parse_number(key, value)?,
            "optim.warmup_steps" => self.optim.warmup_steps = parse_number(key, value)?,
            "optim.total_steps" => self.optim.total_steps = parse_number(key, value)?,
            "optim.batch_size" => self.optim.batch_size = parse_number(key, value)?,
            "sweep.axis" => {
                self.sweep.axis = SweepAxis::from_name(value)
                    .ok_or_else(|| CliError::config(format!("unknown sweep axis {value:?}")))?
            }
            "sweep.grid" => {
                self.sweep.grid = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            }
            "sweep.seeds" => self.sweep.seeds = parse_csv_u64(key, value)?,
            "output.metrics" => self.output.metrics = Some(value.to_string()),
            "output.checkpoint" => self.output.checkpoint = Some(value.to_string()),
            "output.report" => self.output.report = Some(value.to_string()),
            _ => return Err(CliError::config(format!("unknown key {key}"))),
        }
        Ok(())
    }

    /// Normalizes grid tokens into canonical spelling for the current axis.
    fn normalize_grid(&mut self) -> CliResult<()> {
        let mut canonical = Vec::with_capacity(self.sweep.grid.len());
        for token in &self.sweep.grid {
            let normalized = match self.sweep.axis {
                SweepAxis::SparseRatio => {
                    let v: f64 = parse_number("sweep.grid", token)?;
                    format!("{v}")
                }
                SweepAxis::Rank => {
                    let v: usize = parse_number("sweep.grid", token)?;
                    format!("{v}")
                }
                SweepAxis::Basis => SpectralBasis::from_name(token)
                    .ok_or_else(|| CliError::config(format!("unknown basis {token:?} in grid")))?
                    .name()
                    .to_string(),
                SweepAxis::Schema => {
                    let schema = Schema::from_name(token).ok_or_else(|| {
                        CliError::config(format!("unknown schema {token:?} in grid"))
                    })?;
                    if !schema.is_spectral() {
                        return Err(CliError::config(format!(
                            "schema grid lists update rules (lora/dora/hira), got {token:?}"
                        )));
                    }
                    schema.name().to_string()
                }
            };
            canonical.push(normalized);
        }
        self.sweep.grid = canonical;
        Ok(())
    }

    /// Canonical full-form emission; a parse -> emit fixed point.
    pub fn emit(&self) -> String {
        let mut out = String::new();
        let mut line = |s: String| {
            let _ = writeln!(out, "{s}");
        };
        if let Some(seed) = self.seed {
            line(format!("run.seed = {seed}"));
        }
        line(format!("task.kind = {}", self.task.kind.name()));
        line(format!("task.d1 = {}", self.task.d1));
        line(format!("task.d2 = {}", self.task.d2));
        line(format!("task.true_rank = {}", self.task.true_rank));
        line(format!("task.noise_std = {}", self.task.noise_std));
        line(format!("task.input_dim = {}", self.task.input_dim));
        line(format!("task.classes = {}", self.task.classes));
        if let Some(seed) = self.task.seed {
            line(format!("task.seed = {seed}"));
        }
        line(format!("adapter.schema = {}", self.adapter.schema.name()));
        line(format!("adapter.basis = {}", self.adapter.basis.name()));
        line(format!("adapter.rank = {}", self.adapter.rank));
        line(format!("adapter.alpha = {}", self.adapter.alpha));
        line(format!(
            "adapter.sparse_ratio = {}",
            self.adapter.sparse_ratio
        ));
        line(format!("adapter.init = {}", self.adapter.init.name()));
        line(format!("adapter.dropout = {}", self.adapter.dropout));
        if let Some(seed) = self.adapter.seed {
            line(format!("adapter.seed = {seed}"));
        }
        line(format!(
            "optim.learning_rate = {}",
            self.optim.learning_rate
        ));
        line(format!("optim.beta1 = {}", self.optim.beta1));
        line(format!("optim.beta2 = {}", self.optim.beta2));
        line(format!("optim.epsilon = {}", self.optim.epsilon));
        line(format!("optim.weight_decay = {}", self.optim.weight_decay));
        line(format!("optim.warmup_steps = {}", self.optim.warmup_steps));
        line(format!("optim.total_steps = {}", self.optim.total_steps));
        line(format!("optim.batch_size = {}", self.optim.batch_size));
        line(format!("sweep.axis = {}", self.sweep.axis.name()));
        line(format!("sweep.grid = {}", self.sweep.grid.join(",")));
        line(format!(
            "sweep.seeds = {}",
            self.sweep
                .seeds
                .iter()
                .map(u64::to_string)
                .collect::<Vec<_>>()
                .join(",")
        ));
        if let Some(p) = &self.output.metrics {
            line(format!("output.metrics = {p}"));
        }
        if let Some(p) = &self.output.checkpoint {
            line(format!("output.checkpoint = {p}"));
        }
        if let Some(p) = &self.output.report {
            line(format!("output.report = {p}"));
        }
        out
    }

    /// Fills the remaining optional seeds from `default_seed` so the emitted
    /// form is fully self-describing.
    pub fn resolve_seeds(&mut self, default_seed: u64) {
        let run_seed = self.seed.unwrap_or(default_seed);
        self.seed = Some(run_seed);
        self.task.seed.get_or_insert(run_seed);
        self.adapter.seed.get_or_insert(run_seed);
    }

    pub fn run_seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    /// Shapes of the base weights the task will expose, without building it.
    fn base_shapes(&self) -> Vec<(usize, usize)> {
        match self.task.kind {
            TaskKind::TeacherStudent => vec![(self.task.d1, self.task.d2)],
            TaskKind::ToyClassification => {
                let hidden = 2 * self.task.input_dim;
                vec![(hidden, self.task.input_dim), (self.task.classes, hidden)]
            }
        }
    }

    /// Adapter configuration template (dimensions taken from the first base
    /// weight; the trainer retargets per layer).
    pub fn adapter_config(&self) -> AdapterConfig {
        let (out_dim, in_dim) = self.base_shapes()[0];
        AdapterConfig {
            rank: self.adapter.rank,
            in_dim,
            out_dim,
            alpha: self.adapter.alpha,
            sparse_ratio: self.adapter.sparse_ratio,
            basis: self.adapter.basis.clone(),
            schema: self.adapter.schema,
            init_scheme: self.adapter.init,
            dropout_rate: self.adapter.dropout,
            seed: self.adapter.seed.unwrap_or_else(|| self.run_seed()),
        }
    }

    /// Builds the task (deterministic in its seed).
    pub fn build_task(&self) -> CliResult<Task> {
        let seed = self.task.seed.unwrap_or_else(|| self.run_seed());
        let task =
            match self.task.kind {
                TaskKind::TeacherStudent => Task::TeacherStudent(make_teacher_student_task(
                    self.task.d1,
                    self.task.d2,
                    self.task.true_rank,
                    self.task.noise_std,
                    seed,
                )?),
                TaskKind::ToyClassification => Task::ToyClassification(
                    make_toy_classification_task(self.task.input_dim, self.task.classes, seed)?,
                ),
            };
        Ok(task)
    }

    /// Typed sweep grid for the configured axis.
    pub fn sweep_grid(&self) -> CliResult<SweepGrid> {
        if self.sweep.grid.is_empty() {
            return Err(CliError::config("sweep.grid is empty".to_string()));
        }
        Ok(match self.sweep.axis {
            SweepAxis::SparseRatio => SweepGrid::Ratios(
                self.sweep
                    .grid
                    .iter()
                    .map(|s| parse_number("sweep.grid", s))
                    .collect::<CliResult<_>>()?,
            ),
            SweepAxis::Rank => SweepGrid::Ranks(
                self.sweep
                    .grid
                    .iter()
                    .map(|s| parse_number("sweep.grid", s))
                    .collect::<CliResult<_>>()?,
            ),
            SweepAxis::Basis => SweepGrid::Bases(
                self.sweep
                    .grid
                    .iter()
                    .map(|s| {
                        SpectralBasis::from_name(s)
                            .ok_or_else(|| CliError::config(format!("unknown basis {s:?}")))
                    })
                    .collect::<CliResult<_>>()?,
            ),
            SweepAxis::Schema => SweepGrid::Schemas(
                self.sweep
                    .grid
                    .iter()
                    .map(|s| {
                        Schema::from_name(s)
                            .ok_or_else(|| CliError::config(format!("unknown schema {s:?}")))
                    })
                    .collect::<CliResult<_>>()?,
            ),
        })
    }

    /// Validates every module precondition a `train` run will rely on.
    pub fn validate_for_train(&self) -> CliResult<()> {
        if self.task.kind == TaskKind::TeacherStudent {
            if self.task.true_rank == 0 || self.task.true_rank > self.task.d1.min(self.task.d2) {
                return Err(CliError::config(format!(
                    "task.true_rank {} outside 1..=min(d1, d2)",
                    self.task.true_rank
                )));
            }
            if !(self.task.noise_std.is_finite() && self.task.noise_std >= 0.0) {
                return Err(CliError::config("task.noise_std must be >= 0"));
            }
        } else if self.task.classes < 2 || self.task.input_dim == 0 {
            return Err(CliError::config(
                "toy-classification needs input_dim >= 1 and classes >= 2",
            ));
        }
        self.optim.validate().map_err(CliError::from_core_config)?;
        for (out_dim, in_dim) in self.base_shapes() {
            self.adapter_config()
                .for_dims(out_dim, in_dim)
                .validate()
                .map_err(CliError::from_core_config)?;
        }
        Ok(())
    }

    /// Additional validation for the sweep command.
    pub fn validate_for_sweep(&self) -> CliResult<()> {
        self.validate_for_train()?;
        self.sweep_grid()?;
        if self.sweep.seeds.is_empty() {
            return Err(CliError::config("sweep.seeds is empty"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_and_validate() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        cfg.validate_for_train().unwrap();
        cfg.validate_for_sweep().unwrap();
    }

    #[test]
    fn emit_is_a_fixed_point() {
        let text = "run.seed = 7\ntask.kind = toy-classification\nadapter.basis = fourier\nadapter.sparse_ratio = 0.50\nsweep.grid = 0.20, 0.4\n";
        let cfg = RunConfig::parse(text).unwrap();
        let emitted = cfg.emit();
        let reparsed = RunConfig::parse(&emitted).unwrap();
        assert_eq!(cfg, reparsed);
        assert_eq!(emitted, reparsed.emit());
        // normalization happened: 0.50 -> 0.5, 0.20 -> 0.2
        assert!(emitted.contains("adapter.sparse_ratio = 0.5\n"));
        assert!(emitted.contains("sweep.grid = 0.2,0.4\n"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::parse("adapter.rnak = 4\n").unwrap_err();
        assert!(err.to_string().contains("unknown key"));
        assert!(RunConfig::parse("task.kind = banana\n").is_err());
        assert!(RunConfig::parse("adapter.rank = 8\nadapter.rank = 9\n").is_err());
        assert!(RunConfig::parse("just some words\n").is_err());
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let cfg = RunConfig::parse("# a comment\n\nadapter.rank = 16\n").unwrap();
        assert_eq!(cfg.adapter.rank, 16);
    }

    #[test]
    fn degenerate_sparsity_is_caught_before_compute() {
        let cfg = RunConfig::parse("adapter.rank = 2\ntask.d1 = 2\ntask.d2 = 2\nadapter.sparse_ratio = 0.8\nadapter.basis = fourier\ntask.true_rank = 1\n")
            .unwrap();
        let err = cfg.validate_for_train().unwrap_err();
        assert!(err.to_string().contains("sparsity"), "{err}");
    }

    #[test]
    fn schema_grid_accepts_only_spectral_rules() {
        assert!(RunConfig::parse("sweep.axis = schema\nsweep.grid = lora,dora\n").is_ok());
        assert!(RunConfig::parse("sweep.axis = schema\nsweep.grid = masked-lora\n").is_err());
    }

    #[test]
    fn resolve_seeds_fills_everything() {
        let mut cfg = RunConfig::default();
        cfg.resolve_seeds(9);
        assert_eq!(cfg.seed, Some(9));
        assert_eq!(cfg.task.seed, Some(9));
        assert_eq!(cfg.adapter.seed, Some(9));
        // explicit seeds win
        let mut cfg = RunConfig::parse("task.seed = 5\n").unwrap();
        cfg.resolve_seeds(9);
        assert_eq!(cfg.task.seed, Some(5));
    }
}
