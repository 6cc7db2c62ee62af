//! Forward/backward/AdamW training loop over a task, bit-reproducible given
//! equal arguments.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use libm::{exp, log};

use crate::adapter::{init_adapter, Adapter, AdapterConfig};
use crate::autograd::{backward, forward_traced, input_gradient, ForwardMode};
use crate::error::{Result, SeloraError};
use crate::mat::RealMatrix;
use crate::rng::{derive_seed, Rng};
use crate::trainer::optim::{adamw_step, OptimizerConfig, OptimizerState};
use crate::trainer::task::{tanh_matrix, Metric, Task};

const TAG_TRAIN_INIT: u64 = 21;
const TAG_TRAIN_DROPOUT: u64 = 22;

/// Results of a single training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    /// Training loss at every executed step.
    pub loss_series: Vec<f64>,
    pub final_metric: f64,
    pub metric: Metric,
    pub trainable_params: usize,
    /// Filled by callers that time the run; the core loop leaves it at zero
    /// so metrics stay reproducible.
    pub wall_clock_seconds: f64,
    /// Canonical single-line description of everything the run depended on.
    pub config_echo: String,
}

/// A finished run: metrics plus the trained adapters and optimizer states
/// (one per adapted base weight).
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub metrics: RunMetrics,
    pub adapters: Vec<Adapter>,
    pub optimizer_states: Vec<OptimizerState>,
}

fn task_echo(task: &Task) -> String {
    match task {
        Task::TeacherStudent(t) => format!(
            "task=teacher-student d1={} d2={} true-rank={} noise-std={} task-seed={}",
            t.d1, t.d2, t.true_rank, t.noise_std, t.seed
        ),
        Task::ToyClassification(t) => format!(
            "task=toy-classification input-dim={} classes={} hidden-dim={} task-seed={}",
            t.input_dim, t.classes, t.hidden_dim, t.seed
        ),
    }
}

fn config_echo(
    task: &Task,
    adapter_cfg: &AdapterConfig,
    optim: &OptimizerConfig,
    steps: u64,
    seed: u64,
) -> String {
    format!(
        "{} schema={} basis={} rank={} alpha={} sparse-ratio={} init={} dropout={} location-seed={} \
lr={} beta1={} beta2={} epsilon={} weight-decay={} warmup-steps={} total-steps={} batch-size={} \
steps={} run-seed={}",
        task_echo(task),
        adapter_cfg.schema.name(),
        adapter_cfg.basis.name(),
        adapter_cfg.rank,
        adapter_cfg.alpha,
        adapter_cfg.sparse_ratio,
        adapter_cfg.init_scheme.name(),
        adapter_cfg.dropout_rate,
        adapter_cfg.seed,
        optim.learning_rate,
        optim.beta1,
        optim.beta2,
        optim.epsilon,
        optim.weight_decay,
        optim.warmup_steps,
        optim.total_steps,
        optim.batch_size,
        steps,
        seed
    )
}

/// Numerically stable softmax cross-entropy averaged over the batch; returns
/// the loss and its gradient with respect to the logits.
fn softmax_cross_entropy(logits: &RealMatrix, labels: &[usize]) -> Result<(f64, RealMatrix)> {
    if labels.len() != logits.cols() {
        return Err(SeloraError::InvalidDimension(format!(
            "{} labels for {} columns",
            labels.len(),
            logits.cols()
        )));
    }
    let classes = logits.rows();
    let n = logits.cols() as f64;
    let mut grad = RealMatrix::zeros(classes, logits.cols());
    let mut loss = 0.0;
    for (k, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(SeloraError::InvalidDimension(format!(
                "label {label} out of range for {classes} classes"
            )));
        }
        let mut max = logits.get(0, k);
        for i in 1..classes {
            max = max.max(logits.get(i, k));
        }
        let mut z = 0.0;
        for i in 0..classes {
            z += exp(logits.get(i, k) - max);
        }
        let log_z = max + log(z);
        loss += log_z - logits.get(label, k);
        for i in 0..classes {
            let p = exp(logits.get(i, k) - log_z);
            let indicator = if i == label { 1.0 } else { 0.0 };
            grad.set(i, k, (p - indicator) / n);
        }
    }
    Ok((loss / n, grad))
}

/// Evaluates the task metric for a set of adapters without training
/// (deterministic evaluation-mode forwards).
pub fn evaluate_adapters(task: &Task, adapters: &[Adapter]) -> Result<f64> {
    match task {
        Task::TeacherStudent(t) => {
            let (_, _, delta) = adapters[0].materialize()?;
            t.recovery_error(&delta)
        }
        Task::ToyClassification(t) => t.heldout_accuracy(|x| {
            let hidden = tanh_matrix(&adapters[0].forward(x)?);
            adapters[1].forward(&hidden)
        }),
    }
}

/// Runs the forward/backward/AdamW loop for `steps` steps.
///
/// One adapter is attached per base weight of the task, with dimensions
/// taken from that weight (the passed configuration acts as a template).
/// Initialization draws and dropout streams derive from `seed`, so equal
/// arguments reproduce bit-identical loss series and adapters.
pub fn train(
    task: &Task,
    adapter_cfg: &AdapterConfig,
    optim: &OptimizerConfig,
    steps: u64,
    seed: u64,
) -> Result<TrainOutcome> {
    if steps == 0 {
        return Err(SeloraError::InvalidDimension(
            "training requires at least one step".into(),
        ));
    }
    optim.validate()?;

    let base_weights = task.base_weights();
    let mut adapters = Vec::with_capacity(base_weights.len());
    let mut params: Vec<Vec<f64>> = Vec::with_capacity(base_weights.len());
    let mut states = Vec::with_capacity(base_weights.len());
    let mut dropout_rngs = Vec::with_capacity(base_weights.len());
    for (layer, w) in base_weights.iter().enumerate() {
        let cfg = adapter_cfg.for_dims(w.rows(), w.cols());
        let adapter = init_adapter(&cfg, w, derive_seed(seed, TAG_TRAIN_INIT, layer as u64, 0))?;
        params.push(adapter.params_flat());
        states.push(OptimizerState::new(
            optim.clone(),
            adapter.trainable_parameter_count(),
        ));
        dropout_rngs.push(Rng::from_seed(derive_seed(
            seed,
            TAG_TRAIN_DROPOUT,
            layer as u64,
            0,
        )));
        adapters.push(adapter);
    }
    let trainable_params: usize = adapters
        .iter()
        .map(Adapter::trainable_parameter_count)
        .sum();

    let mut loss_series = Vec::with_capacity(steps as usize);
    for t in 1..=steps {
        let loss = match task {
            Task::TeacherStudent(ts) => {
                let batch = ts.batch(t, optim.batch_size);
                let (y, trace) = forward_traced(
                    &adapters[0],
                    &batch.x,
                    ForwardMode::Train {
                        dropout_rng: &mut dropout_rngs[0],
                    },
                )?;
                let n = batch.x.cols() as f64;
                let diff = y.sub(&batch.y)?;
                let loss = 0.5 * diff.data().iter().map(|v| v * v).sum::<f64>() / n;
                let grad_y = diff.scale(1.0 / n);
                let bundle = backward(&adapters[0], &trace, &grad_y)?;
                adamw_step(&mut states[0], &mut params[0], &bundle.flatten(), t)?;
                adapters[0].set_params_flat(&params[0])?;
                loss
            }
            Task::ToyClassification(tc) => {
                let batch = tc.batch(t, optim.batch_size);
                let (z1, trace1) = forward_traced(
                    &adapters[0],
                    &batch.x,
                    ForwardMode::Train {
                        dropout_rng: &mut dropout_rngs[0],
                    },
                )?;
                let hidden = tanh_matrix(&z1);
                let (z2, trace2) = forward_traced(
                    &adapters[1],
                    &hidden,
                    ForwardMode::Train {
                        dropout_rng: &mut dropout_rngs[1],
                    },
                )?;
                let (loss, grad_z2) = softmax_cross_entropy(&z2, &batch.labels)?;
                let bundle2 = backward(&adapters[1], &trace2, &grad_z2)?;
                let grad_hidden = input_gradient(&adapters[1], &trace2, &grad_z2)?;
                // tanh' = 1 - tanh^2
                let mut grad_z1 = grad_hidden;
                for (g, h) in grad_z1.data_mut().iter_mut().zip(hidden.data().iter()) {
                    *g *= 1.0 - h * h;
                }
                let bundle1 = backward(&adapters[0], &trace1, &grad_z1)?;
                adamw_step(&mut states[1], &mut params[1], &bundle2.flatten(), t)?;
                adapters[1].set_params_flat(&params[1])?;
                adamw_step(&mut states[0], &mut params[0], &bundle1.flatten(), t)?;
                adapters[0].set_params_flat(&params[0])?;
                loss
            }
        };
        if !loss.is_finite() {
            return Err(SeloraError::NumericFailure {
                step: t,
                message: format!("loss became {loss}"),
            });
        }
        loss_series.push(loss);
    }

    let final_metric = evaluate_adapters(task, &adapters)?;
    Ok(TrainOutcome {
        metrics: RunMetrics {
            loss_series,
            final_metric,
            metric: task.metric(),
            trainable_params,
            wall_clock_seconds: 0.0,
            config_echo: config_echo(task, adapter_cfg, optim, steps, seed),
        },
        adapters,
        optimizer_states: states,
    })
}
