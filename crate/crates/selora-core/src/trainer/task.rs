//! Deterministic desk-scale tasks: teacher-student matrix recovery and a
//! small frozen-network classification problem. A task is fully determined
//! by its construction arguments; batches are pure functions of `(seed, step)`.

use alloc::format;
use alloc::vec::Vec;

use libm::{round, sqrt, tanh};

use crate::error::{Result, SeloraError};
use crate::mat::RealMatrix;
use crate::rng::{derive_seed, Rng};

const TAG_TS_BASE: u64 = 11;
const TAG_TS_TARGET: u64 = 12;
const TAG_TS_BATCH: u64 = 13;
const TAG_TC_BASE: u64 = 14;
const TAG_TC_TEACHER: u64 = 15;
const TAG_TC_BATCH: u64 = 16;
const TAG_TC_HELDOUT: u64 = 17;

/// How a run's final quality is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// `||dW_learned - (W* - W0)||_F / ||W* - W0||_F`; lower is better.
    RelFrobeniusRecovery,
    /// Mean squared error; lower is better.
    Mse,
    /// Held-out classification accuracy; higher is better.
    Accuracy,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::RelFrobeniusRecovery => "rel-frobenius-recovery",
            Metric::Mse => "mse",
            Metric::Accuracy => "accuracy",
        }
    }

    /// True when larger metric values mean better runs.
    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::Accuracy)
    }
}

/// Largest singular value by power iteration on `M^T M` (fixed iteration
/// count, deterministic start).
fn spectral_norm(m: &RealMatrix) -> f64 {
    let d = m.cols();
    let mut v: Vec<f64> = (0..d).map(|_| 1.0 / sqrt(d as f64)).collect();
    let mut norm = 0.0;
    for _ in 0..100 {
        // w = M^T (M v)
        let mut mv = alloc::vec![0.0; m.rows()];
        for i in 0..m.rows() {
            let mut acc = 0.0;
            for (j, &vj) in v.iter().enumerate() {
                acc += m.get(i, j) * vj;
            }
            mv[i] = acc;
        }
        let mut w = alloc::vec![0.0; d];
        for (i, &mvi) in mv.iter().enumerate() {
            for j in 0..d {
                w[j] += m.get(i, j) * mvi;
            }
        }
        let w_norm = sqrt(w.iter().map(|x| x * x).sum::<f64>());
        if w_norm == 0.0 {
            return 0.0;
        }
        for x in &mut w {
            *x /= w_norm;
        }
        v = w;
        norm = sqrt(w_norm);
    }
    norm
}

/// A regression batch.
#[derive(Debug, Clone)]
pub struct RegressionBatch {
    pub x: RealMatrix,
    pub y: RealMatrix,
}

/// A classification batch.
#[derive(Debug, Clone)]
pub struct ClassificationBatch {
    pub x: RealMatrix,
    pub labels: Vec<usize>,
}

/// Frozen Gaussian base weight `W0` with a hidden low-rank-perturbed target
/// `W* = W0 + P`, `P` scaled to unit spectral norm. Batches are
/// `Y = W* X + noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherStudentTask {
    pub d1: usize,
    pub d2: usize,
    pub true_rank: usize,
    pub noise_std: f64,
    pub seed: u64,
    w0: RealMatrix,
    target_delta: RealMatrix,
}

pub fn make_teacher_student_task(
    d1: usize,
    d2: usize,
    true_rank: usize,
    noise_std: f64,
    seed: u64,
) -> Result<TeacherStudentTask> {
    if d1 == 0 || d2 == 0 || true_rank == 0 || true_rank > d1.min(d2) {
        return Err(SeloraError::InvalidDimension(format!(
            "teacher-student task needs 1 <= true_rank <= min(d1, d2); got rank {true_rank} for {d1}x{d2}"
        )));
    }
    if !(noise_std.is_finite() && noise_std >= 0.0) {
        return Err(SeloraError::InvalidDimension(format!(
            "noise std must be non-negative, got {noise_std}"
        )));
    }
    let mut base_rng = Rng::from_seed(derive_seed(seed, TAG_TS_BASE, d1 as u64, d2 as u64));
    let w0 = RealMatrix::gaussian(d1, d2, 1.0 / sqrt(d2 as f64), &mut base_rng);

    let mut target_rng = Rng::from_seed(derive_seed(seed, TAG_TS_TARGET, d1 as u64, d2 as u64));
    let u = RealMatrix::gaussian(d1, true_rank, 1.0, &mut target_rng);
    let v = RealMatrix::gaussian(true_rank, d2, 1.0, &mut target_rng);
    let raw = u.matmul(&v)?;
    let sigma = spectral_norm(&raw);
    if sigma == 0.0 {
        return Err(SeloraError::DegenerateInit(
            "target perturbation has zero spectral norm".into(),
        ));
    }
    let target_delta = raw.scale(1.0 / sigma);

    Ok(TeacherStudentTask {
        d1,
        d2,
        true_rank,
        noise_std,
        seed,
        w0,
        target_delta,
    })
}

impl TeacherStudentTask {
    pub fn w0(&self) -> &RealMatrix {
        &self.w0
    }

    /// The hidden update `W* - W0` the adapter is supposed to recover.
    pub fn target_delta(&self) -> &RealMatrix {
        &self.target_delta
    }

    pub fn batch(&self, step: u64, batch_size: usize) -> RegressionBatch {
        let mut rng = Rng::from_seed(derive_seed(
            self.seed,
            TAG_TS_BATCH,
            step,
            batch_size as u64,
        ));
        let x = RealMatrix::gaussian(self.d2, batch_size, 1.0, &mut rng);
        let mut y = self
            .w0
            .add(&self.target_delta)
            .expect("shapes match")
            .matmul(&x)
            .expect("shapes match");
        if self.noise_std > 0.0 {
            for value in y.data_mut() {
                *value += rng.normal_scaled(self.noise_std);
            }
        }
        RegressionBatch { x, y }
    }

    /// Relative Frobenius recovery error of a learned update.
    pub fn recovery_error(&self, learned_delta: &RealMatrix) -> Result<f64> {
        let diff = learned_delta.sub(&self.target_delta)?;
        Ok(diff.frobenius_norm() / self.target_delta.frobenius_norm())
    }
}

/// Frozen two-layer tanh network; labels come from a hidden teacher whose
/// weights are low-rank perturbations of the base weights. Adapters attach
/// to both layer matrices. Accuracy is measured on a fixed held-out split.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyClassificationTask {
    pub input_dim: usize,
    pub classes: usize,
    pub hidden_dim: usize,
    pub seed: u64,
    w1: RealMatrix,
    w2: RealMatrix,
    teacher_w1: RealMatrix,
    teacher_w2: RealMatrix,
    heldout_x: RealMatrix,
    heldout_labels: Vec<usize>,
}

const HELDOUT_SIZE: usize = 512;
const TEACHER_PERTURBATION_RANK: usize = 4;
const TEACHER_PERTURBATION_SCALE: f64 = 1.0;

fn low_rank_perturbation(
    rows: usize,
    cols: usize,
    rank: usize,
    scale: f64,
    rng: &mut Rng,
) -> Result<RealMatrix> {
    let u = RealMatrix::gaussian(rows, rank, 1.0, rng);
    let v = RealMatrix::gaussian(rank, cols, 1.0, rng);
    let raw = u.matmul(&v)?;
    let sigma = spectral_norm(&raw);
    if sigma == 0.0 {
        return Err(SeloraError::DegenerateInit(
            "teacher perturbation has zero spectral norm".into(),
        ));
    }
    Ok(raw.scale(scale / sigma))
}

pub fn make_toy_classification_task(
    input_dim: usize,
    classes: usize,
    seed: u64,
) -> Result<ToyClassificationTask> {
    if classes < 2 {
        return Err(SeloraError::InvalidDimension(format!(
            "classification needs at least 2 classes, got {classes}"
        )));
    }
    if input_dim == 0 {
        return Err(SeloraError::InvalidDimension(
            "input dimension must be positive".into(),
        ));
    }
    let hidden_dim = 2 * input_dim;

    let mut base_rng = Rng::from_seed(derive_seed(
        seed,
        TAG_TC_BASE,
        input_dim as u64,
        classes as u64,
    ));
    let w1 = RealMatrix::gaussian(
        hidden_dim,
        input_dim,
        1.0 / sqrt(input_dim as f64),
        &mut base_rng,
    );
    let w2 = RealMatrix::gaussian(
        classes,
        hidden_dim,
        1.0 / sqrt(hidden_dim as f64),
        &mut base_rng,
    );

    let mut teacher_rng = Rng::from_seed(derive_seed(
        seed,
        TAG_TC_TEACHER,
        input_dim as u64,
        classes as u64,
    ));
    let rank1 = TEACHER_PERTURBATION_RANK.min(hidden_dim.min(input_dim));
    let rank2 = TEACHER_PERTURBATION_RANK.min(classes.min(hidden_dim));
    let teacher_w1 = w1.add(&low_rank_perturbation(
        hidden_dim,
        input_dim,
        rank1,
        TEACHER_PERTURBATION_SCALE,
        &mut teacher_rng,
    )?)?;
    let teacher_w2 = w2.add(&low_rank_perturbation(
        classes,
        hidden_dim,
        rank2,
        TEACHER_PERTURBATION_SCALE,
        &mut teacher_rng,
    )?)?;

    let mut heldout_rng = Rng::from_seed(derive_seed(
        seed,
        TAG_TC_HELDOUT,
        input_dim as u64,
        classes as u64,
    ));
    let heldout_x = RealMatrix::gaussian(input_dim, HELDOUT_SIZE, 1.0, &mut heldout_rng);
    let heldout_labels = teacher_labels(&teacher_w1, &teacher_w2, &heldout_x);

    Ok(ToyClassificationTask {
        input_dim,
        classes,
        hidden_dim,
        seed,
        w1,
        w2,
        teacher_w1,
        teacher_w2,
        heldout_x,
        heldout_labels,
    })
}

fn teacher_labels(w1: &RealMatrix, w2: &RealMatrix, x: &RealMatrix) -> Vec<usize> {
    let hidden = tanh_matrix(&w1.matmul(x).expect("shapes match"));
    let logits = w2.matmul(&hidden).expect("shapes match");
    argmax_columns(&logits)
}

pub fn tanh_matrix(m: &RealMatrix) -> RealMatrix {
    let mut out = m.clone();
    for v in out.data_mut() {
        *v = tanh(*v);
    }
    out
}

pub fn argmax_columns(logits: &RealMatrix) -> Vec<usize> {
    (0..logits.cols())
        .map(|k| {
            let mut best = 0;
            let mut best_value = logits.get(0, k);
            for i in 1..logits.rows() {
                let v = logits.get(i, k);
                if v > best_value {
                    best_value = v;
                    best = i;
                }
            }
            best
        })
        .collect()
}

impl ToyClassificationTask {
    pub fn w1(&self) -> &RealMatrix {
        &self.w1
    }

    pub fn w2(&self) -> &RealMatrix {
        &self.w2
    }

    pub fn heldout(&self) -> (&RealMatrix, &[usize]) {
        (&self.heldout_x, &self.heldout_labels)
    }

    pub fn batch(&self, step: u64, batch_size: usize) -> ClassificationBatch {
        let mut rng = Rng::from_seed(derive_seed(
            self.seed,
            TAG_TC_BATCH,
            step,
            batch_size as u64,
        ));
        let x = RealMatrix::gaussian(self.input_dim, batch_size, 1.0, &mut rng);
        let labels = teacher_labels(&self.teacher_w1, &self.teacher_w2, &x);
        ClassificationBatch { x, labels }
    }

    /// Held-out accuracy of an arbitrary two-layer forward map.
    pub fn heldout_accuracy(
        &self,
        forward: impl Fn(&RealMatrix) -> Result<RealMatrix>,
    ) -> Result<f64> {
        let logits = forward(&self.heldout_x)?;
        let predictions = argmax_columns(&logits);
        let correct = predictions
            .iter()
            .zip(&self.heldout_labels)
            .filter(|(p, l)| p == l)
            .count();
        Ok(correct as f64 / self.heldout_labels.len() as f64)
    }

    /// Accuracy of the frozen base network.
    pub fn base_accuracy(&self) -> f64 {
        self.heldout_accuracy(|x| {
            let hidden = tanh_matrix(&self.w1.matmul(x)?);
            self.w2.matmul(&hidden)
        })
        .expect("base network shapes are consistent")
    }
}

/// A training task with its frozen base weights and metric.
#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    TeacherStudent(TeacherStudentTask),
    ToyClassification(ToyClassificationTask),
}

impl Task {
    pub fn metric(&self) -> Metric {
        match self {
            Task::TeacherStudent(_) => Metric::RelFrobeniusRecovery,
            Task::ToyClassification(_) => Metric::Accuracy,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Task::TeacherStudent(_) => "teacher-student",
            Task::ToyClassification(_) => "toy-classification",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Task::TeacherStudent(t) => t.seed,
            Task::ToyClassification(t) => t.seed,
        }
    }

    /// The frozen weights adapters attach to.
    pub fn base_weights(&self) -> Vec<&RealMatrix> {
        match self {
            Task::TeacherStudent(t) => alloc::vec![t.w0()],
            Task::ToyClassification(t) => alloc::vec![t.w1(), t.w2()],
        }
    }
}

/// `max(1, round((1 - eta) * rank))`: the matched-budget reduced rank used
/// by sparse-ratio sweeps.
pub fn matched_budget_rank(rank: usize, sparse_ratio: f64) -> usize {
    (round((1.0 - sparse_ratio) * rank as f64) as usize).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn teacher_student_is_deterministic() {
        let a = make_teacher_student_task(16, 16, 4, 0.01, 9).unwrap();
        let b = make_teacher_student_task(16, 16, 4, 0.01, 9).unwrap();
        assert_eq!(a, b);
        let batch_a = a.batch(3, 8);
        let batch_b = b.batch(3, 8);
        assert_eq!(batch_a.x, batch_b.x);
        assert_eq!(batch_a.y, batch_b.y);
    }

    #[test]
    fn target_delta_has_unit_spectral_norm() {
        let t = make_teacher_student_task(24, 16, 4, 0.0, 5).unwrap();
        let sigma = spectral_norm(t.target_delta());
        assert!((sigma - 1.0).abs() < 1e-9, "sigma {sigma}");
    }

    #[test]
    fn exact_delta_recovers_with_zero_error() {
        let t = make_teacher_student_task(12, 12, 3, 0.0, 1).unwrap();
        let err = t.recovery_error(&t.target_delta().clone()).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn rank_too_large_is_rejected() {
        assert!(make_teacher_student_task(8, 8, 9, 0.0, 0).is_err());
    }

    #[test]
    fn classification_task_is_deterministic_and_learnable() {
        let a = make_toy_classification_task(16, 4, 3).unwrap();
        let b = make_toy_classification_task(16, 4, 3).unwrap();
        assert_eq!(a, b);
        let batch_a = a.batch(0, 16);
        let batch_b = b.batch(0, 16);
        assert_eq!(batch_a.x, batch_b.x);
        assert_eq!(batch_a.labels, batch_b.labels);

        // the teacher must disagree with the base network on a fair fraction
        let base_acc = a.base_accuracy();
        assert!(base_acc < 0.95, "teacher too close to base: {base_acc}");
        assert!(base_acc > 1.0 / 4.0 * 0.5, "teacher unrelated: {base_acc}");
    }

    #[test]
    fn classes_below_two_are_rejected() {
        assert!(make_toy_classification_task(8, 1, 0).is_err());
    }

    #[test]
    fn matched_budget_rank_rounds_and_clamps() {
        assert_eq!(matched_budget_rank(16, 0.6), 6);
        assert_eq!(matched_budget_rank(16, 0.5), 8);
        assert_eq!(matched_budget_rank(4, 0.9), 1);
        assert_eq!(matched_budget_rank(1, 0.99), 1);
    }
}
