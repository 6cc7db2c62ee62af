//! Finite-difference oracle checks for the analytic gradients, plus the
//! explicit-matrix adjoint consistency check.

use selora_core::adapter::{init_adapter, Adapter, AdapterConfig, InitScheme, Schema};
use selora_core::autograd::{
    backward_from_input, finite_difference_check, MseLoss, SquaredNormLoss,
};
use selora_core::mat::RealMatrix;
use selora_core::rng::Rng;
use selora_core::spectral::{SpectralBasis, WaveletKind};

fn make_config(schema: Schema, basis: SpectralBasis, seed: u64) -> AdapterConfig {
    AdapterConfig {
        rank: 8,
        in_dim: 16,
        out_dim: 16,
        alpha: 16.0,
        sparse_ratio: 0.4,
        basis,
        schema,
        init_scheme: InitScheme::Kaiming,
        dropout_rate: 0.0,
        seed,
    }
}

fn randomized(cfg: &AdapterConfig, seed: u64, rng: &mut Rng) -> Adapter {
    let w0 = RealMatrix::gaussian(cfg.out_dim, cfg.in_dim, 1.0, rng);
    let mut adapter = init_adapter(cfg, &w0, seed).unwrap();
    let params: Vec<f64> = adapter
        .params_flat()
        .iter()
        .map(|v| v + rng.normal_scaled(0.05))
        .collect();
    adapter.set_params_flat(&params).unwrap();
    adapter
}

#[test]
fn gradients_match_central_differences_for_all_schemas_and_bases() {
    let bases = [
        SpectralBasis::Fourier,
        SpectralBasis::wavelet(WaveletKind::Haar),
    ];
    let cases = [
        (Schema::Lora, 1e-6),
        (Schema::Dora, 1e-5),
        (Schema::Hira, 1e-5),
    ];
    let mut rng = Rng::from_seed(2024);
    for basis in &bases {
        for &(schema, tol) in &cases {
            for trial in 0..20 {
                let cfg = make_config(schema, basis.clone(), 40 + trial);
                let adapter = randomized(&cfg, 100 + trial, &mut rng);
                let x = RealMatrix::gaussian(16, 4, 1.0, &mut rng);
                let err = finite_difference_check(&adapter, &x, &SquaredNormLoss, 1e-5).unwrap();
                assert!(
                    err <= tol,
                    "{} / {} trial {trial}: max rel err {err} > {tol}",
                    schema.name(),
                    basis.name()
                );
            }
        }
    }
}

#[test]
fn masked_schemas_pass_the_same_oracle() {
    // 1e-5 across the board: spatial-factor gradients are exact for this
    // quadratic loss, but near-zero coordinates sit at the central-difference
    // cancellation floor.
    let mut rng = Rng::from_seed(2025);
    for (schema, tol) in [
        (Schema::MaskedLora, 1e-5),
        (Schema::MaskedDora, 1e-5),
        (Schema::MaskedHira, 1e-5),
    ] {
        for trial in 0..10 {
            let cfg = make_config(schema, SpectralBasis::Fourier, 60 + trial);
            let adapter = randomized(&cfg, 200 + trial, &mut rng);
            let x = RealMatrix::gaussian(16, 4, 1.0, &mut rng);
            let err = finite_difference_check(&adapter, &x, &SquaredNormLoss, 1e-5).unwrap();
            assert!(err <= tol, "{} trial {trial}: {err}", schema.name());
        }
    }
}

#[test]
fn quadratic_regression_loss_is_near_exact() {
    let mut rng = Rng::from_seed(2026);
    let cfg = make_config(
        Schema::Lora,
        SpectralBasis::wavelet(WaveletKind::Coiflet1),
        7,
    );
    let adapter = randomized(&cfg, 300, &mut rng);
    let x = RealMatrix::gaussian(16, 6, 1.0, &mut rng);
    let target = RealMatrix::gaussian(16, 6, 1.0, &mut rng);
    let loss = MseLoss { target: &target };
    let err = finite_difference_check(&adapter, &x, &loss, 1e-5).unwrap();
    assert!(err <= 1e-6, "quadratic loss fd err {err}");
}

#[test]
fn backward_agrees_with_explicit_transform_matrix() {
    // materialize T as an explicit matrix, transpose it, and push the
    // factor-space gradient through by hand
    let mut rng = Rng::from_seed(2027);
    for basis in [
        SpectralBasis::Fourier,
        SpectralBasis::wavelet(WaveletKind::Daubechies4),
    ] {
        let cfg = AdapterConfig {
            rank: 4,
            in_dim: 8,
            out_dim: 8,
            alpha: 8.0,
            sparse_ratio: 0.25,
            basis: basis.clone(),
            schema: Schema::Lora,
            init_scheme: InitScheme::Kaiming,
            dropout_rate: 0.0,
            seed: 3,
        };
        let adapter = randomized(&cfg, 400, &mut rng);
        let x = RealMatrix::gaussian(8, 3, 1.0, &mut rng);
        let grad_y = RealMatrix::gaussian(8, 3, 1.0, &mut rng);
        let bundle = backward_from_input(&adapter, &x, &grad_y).unwrap();

        // chain rule by hand: grad_A~ = (alpha/r) B~^T G X^T
        let (a_tilde, b_tilde, _) = adapter.materialize().unwrap();
        let _ = a_tilde;
        let grad_a_tilde = b_tilde
            .matmul_tn(&grad_y)
            .unwrap()
            .matmul_nt(&x)
            .unwrap()
            .scale(cfg.scaling());

        // explicit operator for the A-factor shape
        let (rows, cols) = (cfg.rank, cfg.in_dim);
        let n = rows * cols;
        let mut op_columns = Vec::with_capacity(n);
        for idx in 0..n {
            let mut unit = RealMatrix::zeros(rows, cols);
            unit.data_mut()[idx] = 1.0;
            op_columns.push(basis.apply(&unit).unwrap());
        }
        // (T^t g)[i] = <column_i, g>
        let mut adjoint_dense = RealMatrix::zeros(rows, cols);
        for idx in 0..n {
            let dot: f64 = op_columns[idx]
                .data()
                .iter()
                .zip(grad_a_tilde.data().iter())
                .map(|(a, b)| a * b)
                .sum();
            adjoint_dense.data_mut()[idx] = dot;
        }
        let explicit: Vec<f64> = adapter
            .factor_a()
            .index_set()
            .indices()
            .iter()
            .map(|&(u, v)| adjoint_dense.get(u as usize, v as usize))
            .collect();

        for (got, want) in bundle.grad_fa.iter().zip(explicit.iter()) {
            assert!(
                (got - want).abs() < 1e-10,
                "{}: {got} vs {want}",
                basis.name()
            );
        }
    }
}
