//! Exact reverse-mode gradients for the adapter parameterization chain.
//!
//! The computation graph is shallow and fixed, so gradients are computed
//! analytically per update rule rather than through a general tape: the loss
//! gradient is pulled back through the update schema to the materialized
//! factors, then through the transform adjoint `T*` and restricted to the
//! learnable coordinates. Off-support gradients are identically zero by
//! construction (the bundle has no slots for them).
//!
//! [`finite_difference_check`] is the independent oracle: it perturbs every
//! learnable coordinate and central-differences the loss.

use alloc::format;
use alloc::vec::Vec;

use libm::fabs;

use crate::adapter::{Adapter, UpdateRule};
use crate::error::{Result, SeloraError};
use crate::mat::RealMatrix;
use crate::rng::Rng;

/// Loss gradients restricted to the learnable coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub grad_fa: Vec<f64>,
    pub grad_fb: Vec<f64>,
    pub grad_magnitude: Option<Vec<f64>>,
}

impl GradientBundle {
    /// Flattened as `[F_A, F_B, m]`, matching `Adapter::params_flat`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(
            self.grad_fa.len()
                + self.grad_fb.len()
                + self.grad_magnitude.as_ref().map_or(0, Vec::len),
        );
        out.extend_from_slice(&self.grad_fa);
        out.extend_from_slice(&self.grad_fb);
        if let Some(m) = &self.grad_magnitude {
            out.extend_from_slice(m);
        }
        out
    }

    pub fn is_all_finite(&self) -> bool {
        self.grad_fa.iter().all(|v| v.is_finite())
            && self.grad_fb.iter().all(|v| v.is_finite())
            && self
                .grad_magnitude
                .as_ref()
                .is_none_or(|m| m.iter().all(|v| v.is_finite()))
    }
}

/// Evaluation vs training forward pass; training supplies the dropout stream.
pub enum ForwardMode<'a> {
    Eval,
    Train { dropout_rng: &'a mut Rng },
}

/// Intermediates captured by a forward pass, replayed exactly by `backward`
/// (including the dropout mask, when one was drawn).
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    x: RealMatrix,
    /// Branch input `X'` (dropout applied when training); equals `x` for the
    /// effective-weight rules.
    x_branch: RealMatrix,
    /// Entrywise multipliers applied to `x` to form `x_branch`.
    dropout_scales: Option<Vec<f64>>,
    a_tilde: RealMatrix,
    b_tilde: RealMatrix,
    /// `A X'` for the additive rule.
    branch_mid: Option<RealMatrix>,
    /// Effective weight for DoRA/HiRA.
    effective: Option<RealMatrix>,
    /// DoRA direction source `W0 + dW` and its column norms.
    dora: Option<(RealMatrix, Vec<f64>)>,
}

impl ForwardTrace {
    pub fn input(&self) -> &RealMatrix {
        &self.x
    }

    pub fn branch_input(&self) -> &RealMatrix {
        &self.x_branch
    }
}

/// Forward pass that records the trace needed by [`backward`].
pub fn forward_traced(
    adapter: &Adapter,
    x: &RealMatrix,
    mode: ForwardMode<'_>,
) -> Result<(RealMatrix, ForwardTrace)> {
    let cfg = adapter.config();
    if x.rows() != cfg.in_dim {
        return Err(SeloraError::InvalidDimension(format!(
            "forward: input has {} rows, adapter expects {}",
            x.rows(),
            cfg.in_dim
        )));
    }
    let (a_tilde, b_tilde, delta_w) = adapter.materialize()?;

    match cfg.schema.update_rule() {
        UpdateRule::Lora => {
            let rate = cfg.dropout_rate;
            let (x_branch, dropout_scales) = match mode {
                ForwardMode::Train { dropout_rng } if rate > 0.0 => {
                    let keep = 1.0 - rate;
                    let scales: Vec<f64> = (0..x.data().len())
                        .map(|_| {
                            if dropout_rng.uniform() < rate {
                                0.0
                            } else {
                                1.0 / keep
                            }
                        })
                        .collect();
                    let mut dropped = x.clone();
                    for (value, scale) in dropped.data_mut().iter_mut().zip(&scales) {
                        *value *= scale;
                    }
                    (dropped, Some(scales))
                }
                _ => (x.clone(), None),
            };
            let branch_mid = a_tilde.matmul(&x_branch)?;
            let y = adapter
                .w0()
                .matmul(x)?
                .add(&b_tilde.matmul(&branch_mid)?.scale(cfg.scaling()))?;
            Ok((
                y,
                ForwardTrace {
                    x: x.clone(),
                    x_branch,
                    dropout_scales,
                    a_tilde,
                    b_tilde,
                    branch_mid: Some(branch_mid),
                    effective: None,
                    dora: None,
                },
            ))
        }
        UpdateRule::Dora => {
            let (effective, direction, norms) = adapter.dora_effective(&delta_w)?;
            let y = effective.matmul(x)?;
            Ok((
                y,
                ForwardTrace {
                    x: x.clone(),
                    x_branch: x.clone(),
                    dropout_scales: None,
                    a_tilde,
                    b_tilde,
                    branch_mid: None,
                    effective: Some(effective),
                    dora: Some((direction, norms)),
                },
            ))
        }
        UpdateRule::Hira => {
            let effective = adapter.hira_effective(&delta_w)?;
            let y = effective.matmul(x)?;
            Ok((
                y,
                ForwardTrace {
                    x: x.clone(),
                    x_branch: x.clone(),
                    dropout_scales: None,
                    a_tilde,
                    b_tilde,
                    branch_mid: None,
                    effective: Some(effective),
                    dora: None,
                },
            ))
        }
    }
}

/// Pulls a factor-space gradient back to the learnable coordinates.
fn restrict_to_support(
    adapter: &Adapter,
    grad_a_tilde: &RealMatrix,
    grad_b_tilde: &RealMatrix,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let cfg = adapter.config();
    if cfg.schema.is_spectral() {
        let ga = cfg.basis.apply_adjoint(grad_a_tilde)?;
        let gb = cfg.basis.apply_adjoint(grad_b_tilde)?;
        Ok((
            adapter.factor_a().gather(&ga)?,
            adapter.factor_b().gather(&gb)?,
        ))
    } else {
        Ok((
            adapter.factor_a().gather(grad_a_tilde)?,
            adapter.factor_b().gather(grad_b_tilde)?,
        ))
    }
}

/// Reverse-mode gradient of a scalar loss with upstream gradient `grad_y`,
/// replaying the given forward trace.
pub fn backward(
    adapter: &Adapter,
    trace: &ForwardTrace,
    grad_y: &RealMatrix,
) -> Result<GradientBundle> {
    let cfg = adapter.config();
    if grad_y.rows() != cfg.out_dim || grad_y.cols() != trace.x.cols() {
        return Err(SeloraError::InvalidDimension(format!(
            "backward: upstream gradient is {}x{}, expected {}x{}",
            grad_y.rows(),
            grad_y.cols(),
            cfg.out_dim,
            trace.x.cols()
        )));
    }
    let scaling = cfg.scaling();

    let (grad_a_tilde, grad_b_tilde, grad_magnitude) = match cfg.schema.update_rule() {
        UpdateRule::Lora => {
            let branch_mid = trace.branch_mid.as_ref().expect("additive-rule trace");
            let grad_b = grad_y.matmul_nt(branch_mid)?.scale(scaling);
            let grad_a = trace
                .b_tilde
                .matmul_tn(grad_y)?
                .matmul_nt(&trace.x_branch)?
                .scale(scaling);
            (grad_a, grad_b, None)
        }
        UpdateRule::Dora => {
            let (direction, norms) = trace.dora.as_ref().expect("DoRA trace");
            let magnitude = adapter.magnitude().expect("DoRA magnitude");
            let grad_e = grad_y.matmul_nt(&trace.x)?;
            let (d1, d2) = (cfg.out_dim, cfg.in_dim);

            // column-wise quotient rule through m_j * V(:,j) / ||V(:,j)||
            let mut grad_m = Vec::with_capacity(d2);
            let mut grad_v = RealMatrix::zeros(d1, d2);
            for j in 0..d2 {
                let norm = norms[j];
                let mut dot = 0.0;
                for i in 0..d1 {
                    dot += grad_e.get(i, j) * direction.get(i, j);
                }
                grad_m.push(dot / norm);
                let m_over_c = magnitude[j] / norm;
                let correction = magnitude[j] * dot / (norm * norm * norm);
                for i in 0..d1 {
                    grad_v.set(
                        i,
                        j,
                        m_over_c * grad_e.get(i, j) - correction * direction.get(i, j),
                    );
                }
            }
            let grad_b = grad_v.matmul_nt(&trace.a_tilde)?.scale(scaling);
            let grad_a = trace.b_tilde.matmul_tn(&grad_v)?.scale(scaling);
            (grad_a, grad_b, Some(grad_m))
        }
        UpdateRule::Hira => {
            let grad_e = grad_y.matmul_nt(&trace.x)?;
            let grad_update = adapter.w0().hadamard(&grad_e)?.scale(scaling);
            let grad_b = grad_update.matmul_nt(&trace.a_tilde)?;
            let grad_a = trace.b_tilde.matmul_tn(&grad_update)?;
            (grad_a, grad_b, None)
        }
    };

    let (grad_fa, grad_fb) = restrict_to_support(adapter, &grad_a_tilde, &grad_b_tilde)?;
    Ok(GradientBundle {
        grad_fa,
        grad_fb,
        grad_magnitude,
    })
}

/// Convenience form over an evaluation-mode forward pass at `x`.
pub fn backward_from_input(
    adapter: &Adapter,
    x: &RealMatrix,
    grad_y: &RealMatrix,
) -> Result<GradientBundle> {
    let (_, trace) = forward_traced(adapter, x, ForwardMode::Eval)?;
    backward(adapter, &trace, grad_y)
}

/// Gradient with respect to the layer input, for stacking adapters.
pub fn input_gradient(
    adapter: &Adapter,
    trace: &ForwardTrace,
    grad_y: &RealMatrix,
) -> Result<RealMatrix> {
    let cfg = adapter.config();
    match cfg.schema.update_rule() {
        UpdateRule::Lora => {
            let base = adapter.w0().matmul_tn(grad_y)?;
            let mut branch = trace
                .a_tilde
                .matmul_tn(&trace.b_tilde.matmul_tn(grad_y)?)?
                .scale(cfg.scaling());
            if let Some(scales) = &trace.dropout_scales {
                for (value, scale) in branch.data_mut().iter_mut().zip(scales) {
                    *value *= scale;
                }
            }
            base.add(&branch)
        }
        UpdateRule::Dora | UpdateRule::Hira => {
            let effective = trace.effective.as_ref().expect("effective-weight trace");
            effective.matmul_tn(grad_y)
        }
    }
}

/// Scalar loss over the forward output, used by the finite-difference oracle.
pub trait ScalarLoss {
    fn value(&self, y: &RealMatrix) -> f64;
    fn grad_y(&self, y: &RealMatrix) -> RealMatrix;
}

/// `L = 1/2 ||Y||_F^2`.
pub struct SquaredNormLoss;

impl ScalarLoss for SquaredNormLoss {
    fn value(&self, y: &RealMatrix) -> f64 {
        0.5 * y.data().iter().map(|v| v * v).sum::<f64>()
    }

    fn grad_y(&self, y: &RealMatrix) -> RealMatrix {
        y.clone()
    }
}

/// `L = 1/(2n) ||Y - target||_F^2`.
pub struct MseLoss<'a> {
    pub target: &'a RealMatrix,
}

impl ScalarLoss for MseLoss<'_> {
    fn value(&self, y: &RealMatrix) -> f64 {
        let diff = y.sub(self.target).expect("shape match");
        let n = y.cols() as f64;
        0.5 * diff.data().iter().map(|v| v * v).sum::<f64>() / n
    }

    fn grad_y(&self, y: &RealMatrix) -> RealMatrix {
        y.sub(self.target)
            .expect("shape match")
            .scale(1.0 / y.cols() as f64)
    }
}

/// Central-difference check of [`backward`] against `loss` evaluated through
/// deterministic forward passes. Returns the maximum relative error over all
/// learnable coordinates, with denominator `max(|analytic|, |numeric|, 1e-12)`.
pub fn finite_difference_check(
    adapter: &Adapter,
    x: &RealMatrix,
    loss: &dyn ScalarLoss,
    epsilon: f64,
) -> Result<f64> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(SeloraError::InvalidDimension(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let y = adapter.forward(x)?;
    let analytic = backward_from_input(adapter, x, &loss.grad_y(&y))?.flatten();

    let base = adapter.params_flat();
    let mut probe = adapter.clone();
    let mut params = base.clone();
    let mut max_rel = 0.0;
    for i in 0..params.len() {
        params[i] = base[i] + epsilon;
        probe.set_params_flat(&params)?;
        let plus = loss.value(&probe.forward(x)?);

        params[i] = base[i] - epsilon;
        probe.set_params_flat(&params)?;
        let minus = loss.value(&probe.forward(x)?);

        params[i] = base[i];
        let numeric = (plus - minus) / (2.0 * epsilon);
        let denom = fabs(analytic[i]).max(fabs(numeric)).max(1e-12);
        let rel = fabs(analytic[i] - numeric) / denom;
        if rel > max_rel {
            max_rel = rel;
        }
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::{init_adapter, AdapterConfig, InitScheme, Schema};
    use crate::spectral::SpectralBasis;

    fn config(schema: Schema) -> AdapterConfig {
        AdapterConfig {
            rank: 4,
            in_dim: 8,
            out_dim: 8,
            alpha: 8.0,
            sparse_ratio: 0.25,
            basis: SpectralBasis::Fourier,
            schema,
            init_scheme: InitScheme::Kaiming,
            dropout_rate: 0.0,
            seed: 5,
        }
    }

    fn randomized_adapter(schema: Schema, rng: &mut Rng) -> Adapter {
        let cfg = config(schema);
        let w0 = RealMatrix::gaussian(8, 8, 1.0, rng);
        let mut adapter = init_adapter(&cfg, &w0, 17).unwrap();
        let params: Vec<f64> = adapter
            .params_flat()
            .iter()
            .map(|v| v + rng.normal_scaled(0.1))
            .collect();
        adapter.set_params_flat(&params).unwrap();
        adapter
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_bundle() {
        let mut rng = Rng::from_seed(1);
        let adapter = randomized_adapter(Schema::Lora, &mut rng);
        let x = RealMatrix::gaussian(8, 3, 1.0, &mut rng);
        let grad_y = RealMatrix::zeros(8, 3);
        let bundle = backward_from_input(&adapter, &x, &grad_y).unwrap();
        assert!(bundle.grad_fa.iter().all(|&v| v == 0.0));
        assert!(bundle.grad_fb.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fresh_adapter_gradient_is_zero_only_for_factor_a() {
        let mut rng = Rng::from_seed(2);
        let cfg = config(Schema::Lora);
        let w0 = RealMatrix::gaussian(8, 8, 1.0, &mut rng);
        let adapter = init_adapter(&cfg, &w0, 3).unwrap();
        let x = RealMatrix::gaussian(8, 4, 1.0, &mut rng);
        let grad_y = RealMatrix::gaussian(8, 4, 1.0, &mut rng);
        let bundle = backward_from_input(&adapter, &x, &grad_y).unwrap();
        // grad_A carries a factor B^T = 0
        assert!(bundle.grad_fa.iter().all(|&v| v == 0.0));
        assert!(bundle.grad_fb.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn zero_loss_has_zero_fd_error() {
        struct ZeroLoss;
        impl ScalarLoss for ZeroLoss {
            fn value(&self, _: &RealMatrix) -> f64 {
                0.0
            }
            fn grad_y(&self, y: &RealMatrix) -> RealMatrix {
                RealMatrix::zeros(y.rows(), y.cols())
            }
        }
        let mut rng = Rng::from_seed(3);
        let adapter = randomized_adapter(Schema::Lora, &mut rng);
        let x = RealMatrix::gaussian(8, 3, 1.0, &mut rng);
        let err = finite_difference_check(&adapter, &x, &ZeroLoss, 1e-5).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn dropout_trace_replays_in_backward() {
        let mut cfg = config(Schema::Lora);
        cfg.dropout_rate = 0.3;
        let mut rng = Rng::from_seed(4);
        let w0 = RealMatrix::gaussian(8, 8, 1.0, &mut rng);
        let mut adapter = init_adapter(&cfg, &w0, 9).unwrap();
        let params: Vec<f64> = adapter
            .params_flat()
            .iter()
            .map(|v| v + rng.normal_scaled(0.1))
            .collect();
        adapter.set_params_flat(&params).unwrap();

        let x = RealMatrix::gaussian(8, 5, 1.0, &mut rng);
        let mut dropout_rng = Rng::from_seed(100);
        let (_, trace) = forward_traced(
            &adapter,
            &x,
            ForwardMode::Train {
                dropout_rng: &mut dropout_rng,
            },
        )
        .unwrap();
        assert!(trace.dropout_scales.is_some());

        let grad_y = RealMatrix::gaussian(8, 5, 1.0, &mut rng);
        let with_dropout = backward(&adapter, &trace, &grad_y).unwrap();
        // factor gradients must be those of an eval pass at the dropped input
        let eval_equiv = backward_from_input(&adapter, trace.branch_input(), &grad_y).unwrap();
        assert_eq!(with_dropout.grad_fa, eval_equiv.grad_fa);
        assert_eq!(with_dropout.grad_fb, eval_equiv.grad_fb);
    }

    #[test]
    fn dropout_stream_is_reproducible() {
        let mut cfg = config(Schema::Lora);
        cfg.dropout_rate = 0.5;
        let mut rng = Rng::from_seed(6);
        let w0 = RealMatrix::gaussian(8, 8, 1.0, &mut rng);
        let adapter = init_adapter(&cfg, &w0, 9).unwrap();
        let x = RealMatrix::gaussian(8, 5, 1.0, &mut rng);
        let mut rng_a = Rng::from_seed(7);
        let mut rng_b = Rng::from_seed(7);
        let (ya, _) = forward_traced(
            &adapter,
            &x,
            ForwardMode::Train {
                dropout_rng: &mut rng_a,
            },
        )
        .unwrap();
        let (yb, _) = forward_traced(
            &adapter,
            &x,
            ForwardMode::Train {
                dropout_rng: &mut rng_b,
            },
        )
        .unwrap();
        assert_eq!(ya, yb);
    }

    #[test]
    fn mismatched_upstream_gradient_is_rejected() {
        let mut rng = Rng::from_seed(21);
        let adapter = randomized_adapter(Schema::Lora, &mut rng);
        let x = RealMatrix::gaussian(8, 3, 1.0, &mut rng);
        let bad_grad = RealMatrix::zeros(8, 5);
        assert!(matches!(
            backward_from_input(&adapter, &x, &bad_grad),
            Err(SeloraError::InvalidDimension(_))
        ));
    }

    #[test]
    fn non_positive_epsilon_is_rejected() {
        let mut rng = Rng::from_seed(22);
        let adapter = randomized_adapter(Schema::Lora, &mut rng);
        let x = RealMatrix::gaussian(8, 3, 1.0, &mut rng);
        assert!(finite_difference_check(&adapter, &x, &SquaredNormLoss, 0.0).is_err());
        assert!(finite_difference_check(&adapter, &x, &SquaredNormLoss, -1e-5).is_err());
    }

    #[test]
    fn input_gradient_matches_merged_weight_transpose() {
        let mut rng = Rng::from_seed(8);
        for schema in [Schema::Lora, Schema::Dora, Schema::Hira, Schema::MaskedLora] {
            let adapter = randomized_adapter(schema, &mut rng);
            let x = RealMatrix::gaussian(8, 3, 1.0, &mut rng);
            let grad_y = RealMatrix::gaussian(8, 3, 1.0, &mut rng);
            let (_, trace) = forward_traced(&adapter, &x, ForwardMode::Eval).unwrap();
            let got = input_gradient(&adapter, &trace, &grad_y).unwrap();
            let want = adapter.merge().unwrap().matmul_tn(&grad_y).unwrap();
            assert!(
                got.max_abs_diff(&want).unwrap() < 1e-10,
                "{}",
                schema.name()
            );
        }
    }
}
