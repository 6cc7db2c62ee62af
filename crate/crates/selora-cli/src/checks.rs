//! The `check` subcommand: an in-process property-test battery over the
//! primary numerics. Needs no network, no external services, no fixtures.

use selora_core::adapter::{init_adapter, Adapter, AdapterConfig, InitScheme, Schema};
use selora_core::autograd::{
    backward_from_input, finite_difference_check, ScalarLoss, SquaredNormLoss,
};
use selora_core::mat::RealMatrix;
use selora_core::rng::Rng;
use selora_core::spectral::{
    adjoint_transform, forward_wavelet_2d, inverse_fourier_2d, inverse_wavelet_2d, SpectralBasis,
    WaveletKind,
};
use selora_core::trainer::{
    adamw_step, make_teacher_student_task, train, OptimizerConfig, OptimizerState, Task,
};

fn all_bases() -> Vec<SpectralBasis> {
    let mut bases = vec![SpectralBasis::Fourier];
    bases.extend(WaveletKind::ALL.iter().map(|&k| SpectralBasis::wavelet(k)));
    bases
}

pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, result: Result<String, String>) -> CheckOutcome {
    match result {
        Ok(detail) => CheckOutcome {
            name,
            passed: true,
            detail,
        },
        Err(detail) => CheckOutcome {
            name,
            passed: false,
            detail,
        },
    }
}

fn fourier_oracle() -> Result<String, String> {
    let mut rng = Rng::from_seed(90_001);
    let mut worst: f64 = 0.0;
    for _ in 0..40 {
        let r = 1 + rng.below(12) as usize;
        let d = 1 + rng.below(12) as usize;
        let f = RealMatrix::gaussian(r, d, 1.0, &mut rng);
        let fast = inverse_fourier_2d(&f).map_err(|e| e.to_string())?;
        let direct = RealMatrix::from_fn(r, d, |j, k| {
            let mut acc = 0.0;
            for u in 0..r {
                for v in 0..d {
                    let angle = 2.0
                        * std::f64::consts::PI
                        * (u as f64 * j as f64 / r as f64 + v as f64 * k as f64 / d as f64);
                    acc += f.get(u, v) * angle.cos();
                }
            }
            acc
        });
        let err = fast
            .sub(&direct)
            .map_err(|e| e.to_string())?
            .frobenius_norm()
            / direct.frobenius_norm().max(1e-300);
        worst = worst.max(err);
    }
    if worst < 1e-10 {
        Ok(format!("40 shapes, worst rel err {worst:.2e}"))
    } else {
        Err(format!("double-sum mismatch {worst:.2e} >= 1e-10"))
    }
}

fn wavelet_round_trip() -> Result<String, String> {
    let mut rng = Rng::from_seed(90_002);
    let mut worst: f64 = 0.0;
    for kind in WaveletKind::ALL {
        let filter = selora_core::spectral::build_wavelet_filter(kind);
        for _ in 0..10 {
            let r = 2 * (1 + rng.below(8) as usize);
            let d = 2 * (1 + rng.below(8) as usize);
            let f = RealMatrix::gaussian(r, d, 1.0, &mut rng);
            let back = forward_wavelet_2d(
                &inverse_wavelet_2d(&f, &filter).map_err(|e| e.to_string())?,
                &filter,
            )
            .map_err(|e| e.to_string())?;
            worst = worst.max(back.max_abs_diff(&f).map_err(|e| e.to_string())?);
        }
    }
    if worst < 1e-10 {
        Ok(format!("4 filters x 10 trials, worst abs err {worst:.2e}"))
    } else {
        Err(format!("round-trip error {worst:.2e} >= 1e-10"))
    }
}

fn adjoint_identity() -> Result<String, String> {
    let mut rng = Rng::from_seed(90_003);
    let mut worst: f64 = 0.0;
    for basis in all_bases() {
        for _ in 0..30 {
            let (r, d) = match basis {
                SpectralBasis::Fourier => (1 + rng.below(10) as usize, 1 + rng.below(10) as usize),
                SpectralBasis::Wavelet(_) => (
                    2 * (1 + rng.below(5) as usize),
                    2 * (1 + rng.below(5) as usize),
                ),
            };
            let f = RealMatrix::gaussian(r, d, 1.0, &mut rng);
            let g = RealMatrix::gaussian(r, d, 1.0, &mut rng);
            let lhs: f64 = basis
                .apply(&f)
                .map_err(|e| e.to_string())?
                .data()
                .iter()
                .zip(g.data())
                .map(|(a, b)| a * b)
                .sum();
            let rhs: f64 = f
                .data()
                .iter()
                .zip(
                    adjoint_transform(&g, &basis)
                        .map_err(|e| e.to_string())?
                        .data(),
                )
                .map(|(a, b)| a * b)
                .sum();
            worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-12));
        }
    }
    if worst < 1e-10 {
        Ok(format!("5 bases x 30 trials, worst rel err {worst:.2e}"))
    } else {
        Err(format!("adjoint identity violated: {worst:.2e} >= 1e-10"))
    }
}

fn linearity() -> Result<String, String> {
    let mut rng = Rng::from_seed(90_004);
    let mut worst: f64 = 0.0;
    for basis in [
        SpectralBasis::Fourier,
        SpectralBasis::wavelet(WaveletKind::Coiflet1),
    ] {
        for _ in 0..10 {
            let f = RealMatrix::gaussian(4, 6, 1.0, &mut rng);
            let g = RealMatrix::gaussian(4, 6, 1.0, &mut rng);
            let (a, b) = (rng.normal(), rng.normal());
            let combined = basis
                .apply(&f.scale(a).add(&g.scale(b)).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
            let separate = basis
                .apply(&f)
                .map_err(|e| e.to_string())?
                .scale(a)
                .add(&basis.apply(&g).map_err(|e| e.to_string())?.scale(b))
                .map_err(|e| e.to_string())?;
            let denom = separate.frobenius_norm().max(1.0);
            worst = worst.max(
                combined
                    .sub(&separate)
                    .map_err(|e| e.to_string())?
                    .frobenius_norm()
                    / denom,
            );
        }
    }
    if worst < 1e-12 {
        Ok(format!("worst rel deviation {worst:.2e}"))
    } else {
        Err(format!("linearity violated: {worst:.2e} >= 1e-12"))
    }
}

fn adapter_for(schema: Schema, basis: SpectralBasis, seed: u64, rng: &mut Rng) -> Adapter {
    let cfg = AdapterConfig {
        rank: 4,
        in_dim: 8,
        out_dim: 8,
        alpha: 8.0,
        sparse_ratio: 0.25,
        basis,
        schema,
        init_scheme: InitScheme::Kaiming,
        dropout_rate: 0.0,
        seed,
    };
    let w0 = RealMatrix::gaussian(8, 8, 1.0, rng);
    let mut adapter = init_adapter(&cfg, &w0, seed + 1).expect("valid config");
    let params: Vec<f64> = adapter
        .params_flat()
        .iter()
        .map(|v| v + rng.normal_scaled(0.1))
        .collect();
    adapter.set_params_flat(&params).expect("layout matches");
    adapter
}

fn gradient_check() -> Result<String, String> {
    let mut rng = Rng::from_seed(90_005);
    let mut worst_by: Vec<(String, f64)> = Vec::new();
    for basis in [
        SpectralBasis::Fourier,
        SpectralBasis::wavelet(WaveletKind::Haar),
    ] {
        for (schema, tol) in [
            (Schema::Lora, 1e-6),
            (Schema::Dora, 1e-5),
            (Schema::Hira, 1e-5),
        ] {
            let mut worst: f64 = 0.0;
            for trial in 0..5 {
                let adapter = adapter_for(schema, basis.clone(), 70 + trial, &mut rng);
                let x = RealMatrix::gaussian(8, 4, 1.0, &mut rng);
                let err = finite_difference_check(&adapter, &x, &SquaredNormLoss, 1e-5)
                    .map_err(|e| e.to_string())?;
                worst = worst.max(err);
            }
            if worst > tol {
                return Err(format!(
                    "{}/{}: fd error {worst:.2e} > {tol:.0e}",
                    schema.name(),
                    basis.name()
                ));
            }
            worst_by.push((format!("{}/{}", schema.name(), basis.name()), worst));
        }
    }
    let overall = worst_by.iter().map(|(_, w)| *w).fold(0.0, f64::max);
    Ok(format!("6 schema/basis pairs, worst fd err {overall:.2e}"))
}

fn zero_init_identity() -> Result<String, String> {
    let mut rng = Rng::from_seed(90_006);
    for schema in Schema::ALL {
        let cfg = AdapterConfig {
            rank: 4,
            in_dim: 8,
            out_dim: 8,
            alpha: 8.0,
            sparse_ratio: 0.25,
            basis: SpectralBasis::wavelet(WaveletKind::Haar),
            schema,
            init_scheme: InitScheme::Kaiming,
            dropout_rate: 0.0,
            seed: 11,
        };
        let w0 = RealMatrix::gaussian(8, 8, 1.0, &mut rng);
        let adapter = init_adapter(&cfg, &w0, 12).map_err(|e| e.to_string())?;
        let x = RealMatrix::gaussian(8, 3, 1.0, &mut rng);
        let y = adapter.forward(&x).map_err(|e| e.to_string())?;
        let want = w0.matmul(&x).map_err(|e| e.to_string())?;
        let diff = y.max_abs_diff(&want).map_err(|e| e.to_string())?;
        if diff != 0.0 {
            return Err(format!(
                "{}: fresh forward differs by {diff:e}",
                schema.name()
            ));
        }
    }
    Ok("all 6 schemas reproduce W0 X exactly".into())
}

fn merge_equivalence() -> Result<String, String> {
    let mut rng = Rng::from_seed(90_007);
    let mut worst: f64 = 0.0;
    for schema in Schema::ALL {
        for trial in 0..10 {
            let adapter = adapter_for(schema, SpectralBasis::Fourier, 50 + trial, &mut rng);
            let x = RealMatrix::gaussian(8, 3, 1.0, &mut rng);
            let direct = adapter.forward(&x).map_err(|e| e.to_string())?;
            let merged = adapter
                .merge()
                .map_err(|e| e.to_string())?
                .matmul(&x)
                .map_err(|e| e.to_string())?;
            worst = worst.max(direct.max_abs_diff(&merged).map_err(|e| e.to_string())?);
        }
    }
    if worst <= 1e-10 {
        Ok(format!("6 schemas x 10 adapters, worst diff {worst:.2e}"))
    } else {
        Err(format!("merge mismatch {worst:.2e} > 1e-10"))
    }
}

fn determinism() -> Result<String, String> {
    let mut rng_a = Rng::from_seed(90_008);
    let mut rng_b = Rng::from_seed(90_008);
    let a = adapter_for(Schema::Lora, SpectralBasis::Fourier, 3, &mut rng_a);
    let b = adapter_for(Schema::Lora, SpectralBasis::Fourier, 3, &mut rng_b);
    if a != b {
        return Err("identical seeds produced different adapters".into());
    }
    let task = Task::TeacherStudent(
        make_teacher_student_task(16, 16, 4, 0.01, 5).map_err(|e| e.to_string())?,
    );
    let cfg = AdapterConfig {
        rank: 4,
        in_dim: 16,
        out_dim: 16,
        alpha: 8.0,
        sparse_ratio: 0.25,
        basis: SpectralBasis::Fourier,
        schema: Schema::Lora,
        init_scheme: InitScheme::Kaiming,
        dropout_rate: 0.0,
        seed: 1,
    };
    let optim = OptimizerConfig {
        learning_rate: 5e-3,
        warmup_steps: 5,
        total_steps: 20,
        batch_size: 8,
        ..OptimizerConfig::default()
    };
    let run_a = train(&task, &cfg, &optim, 20, 9).map_err(|e| e.to_string())?;
    let run_b = train(&task, &cfg, &optim, 20, 9).map_err(|e| e.to_string())?;
    if run_a.metrics.loss_series != run_b.metrics.loss_series {
        return Err("replayed training produced a different loss series".into());
    }
    Ok("adapter init and a 20-step training replay are bit-identical".into())
}

fn index_sets() -> Result<String, String> {
    let a = selora_core::adapter::sample_index_set(8, 16, 0.3, 4).map_err(|e| e.to_string())?;
    let b = selora_core::adapter::sample_index_set(8, 16, 0.3, 4).map_err(|e| e.to_string())?;
    if a != b {
        return Err("same seed gave different index sets".into());
    }
    if a.len() != ((1.0_f64 - 0.3) * 128.0).floor() as usize {
        return Err(format!(
            "count {} does not match the floor formula",
            a.len()
        ));
    }
    if !a.indices().windows(2).all(|w| w[0] < w[1]) {
        return Err("indices not sorted/unique".into());
    }
    Ok(format!("deterministic, |set| = {}", a.len()))
}

fn sparsity_preservation() -> Result<String, String> {
    let mut rng = Rng::from_seed(90_009);
    let mut adapter = adapter_for(Schema::Lora, SpectralBasis::Fourier, 8, &mut rng);
    let mut params = adapter.params_flat();
    let optim = OptimizerConfig {
        learning_rate: 1e-2,
        warmup_steps: 0,
        total_steps: 100,
        ..OptimizerConfig::default()
    };
    let mut state = OptimizerState::new(optim, params.len());
    for t in 1..=30 {
        let x = RealMatrix::gaussian(8, 4, 1.0, &mut rng);
        let y = adapter.forward(&x).map_err(|e| e.to_string())?;
        let bundle = backward_from_input(&adapter, &x, &SquaredNormLoss.grad_y(&y))
            .map_err(|e| e.to_string())?;
        adamw_step(&mut state, &mut params, &bundle.flatten(), t).map_err(|e| e.to_string())?;
        adapter
            .set_params_flat(&params)
            .map_err(|e| e.to_string())?;
    }
    let dense = adapter.factor_a().densify();
    let support: std::collections::BTreeSet<(u32, u32)> = adapter
        .factor_a()
        .index_set()
        .indices()
        .iter()
        .copied()
        .collect();
    for u in 0..dense.rows() {
        for v in 0..dense.cols() {
            if !support.contains(&(u as u32, v as u32)) && dense.get(u, v) != 0.0 {
                return Err(format!("off-support cell ({u},{v}) became nonzero"));
            }
        }
    }
    Ok("off-support cells exactly zero after 30 optimizer steps".into())
}

/// Runs the full battery; one outcome per named check.
pub fn run_all_checks() -> Vec<CheckOutcome> {
    vec![
        outcome("fourier-double-sum-oracle", fourier_oracle()),
        outcome("wavelet-round-trip", wavelet_round_trip()),
        outcome("adjoint-identity", adjoint_identity()),
        outcome("transform-linearity", linearity()),
        outcome("gradient-finite-difference", gradient_check()),
        outcome("zero-init-identity", zero_init_identity()),
        outcome("merge-equivalence", merge_equivalence()),
        outcome("determinism", determinism()),
        outcome("index-set-sampling", index_sets()),
        outcome("sparsity-preservation", sparsity_preservation()),
    ]
}
