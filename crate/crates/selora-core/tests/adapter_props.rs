//! Property tests for adapters: merge equivalence, sparsity preservation
//! under optimizer updates, masked/dense coincidence, and the parameter
//! accounting band.

use selora_core::adapter::{
    init_adapter, learnable_count, Adapter, AdapterConfig, InitScheme, Schema,
};
use selora_core::autograd::{backward_from_input, ScalarLoss, SquaredNormLoss};
use selora_core::mat::RealMatrix;
use selora_core::rng::Rng;
use selora_core::spectral::{SpectralBasis, WaveletKind};
use selora_core::trainer::{adamw_step, OptimizerConfig, OptimizerState};

fn config(schema: Schema, basis: SpectralBasis, seed: u64) -> AdapterConfig {
    AdapterConfig {
        rank: 4,
        in_dim: 8,
        out_dim: 8,
        alpha: 8.0,
        sparse_ratio: 0.5,
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
        .map(|v| v + rng.normal_scaled(0.2))
        .collect();
    adapter.set_params_flat(&params).unwrap();
    adapter
}

#[test]
fn merged_and_unmerged_forward_agree_for_fifty_adapters_per_schema() {
    let bases = [
        SpectralBasis::Fourier,
        SpectralBasis::wavelet(WaveletKind::Haar),
        SpectralBasis::wavelet(WaveletKind::Biorthogonal22),
    ];
    let mut rng = Rng::from_seed(501);
    for schema in Schema::ALL {
        for trial in 0..50 {
            let basis = bases[trial % bases.len()].clone();
            let cfg = config(schema, basis, trial as u64);
            let adapter = randomized(&cfg, 1000 + trial as u64, &mut rng);
            let x = RealMatrix::gaussian(8, 4, 1.0, &mut rng);
            let direct = adapter.forward(&x).unwrap();
            let merged = adapter.merge().unwrap().matmul(&x).unwrap();
            let diff = direct.max_abs_diff(&merged).unwrap();
            assert!(
                diff <= 1e-10,
                "{} trial {trial}: merge mismatch {diff}",
                schema.name()
            );
        }
    }
}

#[test]
fn sparsity_support_survives_one_hundred_optimizer_steps() {
    let mut rng = Rng::from_seed(502);
    for (schema, basis) in [
        (Schema::Lora, SpectralBasis::Fourier),
        (
            Schema::Lora,
            SpectralBasis::wavelet(WaveletKind::Daubechies4),
        ),
        (Schema::MaskedLora, SpectralBasis::Fourier),
    ] {
        let cfg = config(schema, basis, 3);
        let w0 = RealMatrix::gaussian(8, 8, 1.0, &mut rng);
        let mut adapter = init_adapter(&cfg, &w0, 7).unwrap();
        let mut params = adapter.params_flat();
        let optim = OptimizerConfig {
            learning_rate: 1e-2,
            warmup_steps: 0,
            total_steps: 200,
            ..OptimizerConfig::default()
        };
        let mut state = OptimizerState::new(optim, params.len());
        for t in 1..=100 {
            let x = RealMatrix::gaussian(8, 4, 1.0, &mut rng);
            let y = adapter.forward(&x).unwrap();
            let bundle = backward_from_input(&adapter, &x, &SquaredNormLoss.grad_y(&y)).unwrap();
            adamw_step(&mut state, &mut params, &bundle.flatten(), t).unwrap();
            adapter.set_params_flat(&params).unwrap();
        }
        // off-support cells of the dense materialization stay exactly zero
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
                if !support.contains(&(u as u32, v as u32)) {
                    assert_eq!(
                        dense.get(u, v),
                        0.0,
                        "{}: off-support cell ({u},{v}) moved",
                        schema.name()
                    );
                }
            }
        }
    }
}

#[test]
fn masked_lora_at_zero_sparsity_is_plain_dense_lora() {
    // with eta = 0 the mask keeps everything, so materialization equals the
    // dense draw and the forward map is the standard additive update
    let mut cfg = config(Schema::MaskedLora, SpectralBasis::Fourier, 5);
    cfg.sparse_ratio = 0.0;
    let mut rng = Rng::from_seed(503);
    let w0 = RealMatrix::gaussian(8, 8, 1.0, &mut rng);
    let mut adapter = init_adapter(&cfg, &w0, 21).unwrap();
    assert_eq!(adapter.trainable_parameter_count(), 4 * 8 + 8 * 4);
    let mask = adapter.mask_a().unwrap();
    assert!(mask.data().iter().all(|&v| v == 1.0));

    let params: Vec<f64> = adapter
        .params_flat()
        .iter()
        .map(|v| v + rng.normal_scaled(0.3))
        .collect();
    adapter.set_params_flat(&params).unwrap();
    let (a, b, _) = adapter.materialize().unwrap();
    let x = RealMatrix::gaussian(8, 4, 1.0, &mut rng);
    let want = w0
        .matmul(&x)
        .unwrap()
        .add(
            &b.matmul(&a.matmul(&x).unwrap())
                .unwrap()
                .scale(cfg.scaling()),
        )
        .unwrap();
    let got = adapter.forward(&x).unwrap();
    assert!(got.max_abs_diff(&want).unwrap() < 1e-12);
}

#[test]
fn parameter_count_ratio_stays_in_the_floor_band() {
    // trainable / dense ratio must lie in [(1-eta) - 2/(r*min(d1,d2)), (1-eta)]
    let mut rng = Rng::from_seed(504);
    for _ in 0..50 {
        let rank = 2 + 2 * rng.below(7) as usize; // 2..=14 even
        let d1 = rank + 2 * (1 + rng.below(12) as usize);
        let d2 = rank + 2 * (1 + rng.below(12) as usize);
        let eta = rng.below(9) as f64 / 10.0;
        let cfg = AdapterConfig {
            rank,
            in_dim: d2,
            out_dim: d1,
            alpha: 2.0 * rank as f64,
            sparse_ratio: eta,
            basis: SpectralBasis::Fourier,
            schema: Schema::Lora,
            init_scheme: InitScheme::Kaiming,
            dropout_rate: 0.0,
            seed: rng.next_u64(),
        };
        if learnable_count(rank, d1.min(d2), eta) == 0 {
            continue;
        }
        let w0 = RealMatrix::zeros(d1, d2);
        let adapter = init_adapter(&cfg, &w0, 0).unwrap();
        let dense = (rank * d2 + d1 * rank) as f64;
        let ratio = adapter.trainable_parameter_count() as f64 / dense;
        let lo = (1.0 - eta) - 2.0 / (rank * d1.min(d2)) as f64;
        assert!(
            ratio <= (1.0 - eta) + 1e-12 && ratio >= lo - 1e-12,
            "r={rank} d1={d1} d2={d2} eta={eta}: ratio {ratio} outside [{lo}, {}]",
            1.0 - eta
        );
    }
}

#[test]
fn index_sets_are_uniform_enough_across_the_grid() {
    // every cell should be hit roughly k/total of the time across seeds
    let (rows, cols, eta) = (4, 8, 0.5);
    let trials = 2000;
    let mut hits = vec![0u32; rows * cols];
    for seed in 0..trials {
        let set = selora_core::adapter::sample_index_set(rows, cols, eta, seed).unwrap();
        for &(u, v) in set.indices() {
            hits[u as usize * cols + v as usize] += 1;
        }
    }
    let expected = trials as f64 * 0.5;
    for (cell, &count) in hits.iter().enumerate() {
        let deviation = (count as f64 - expected).abs() / expected;
        assert!(
            deviation < 0.15,
            "cell {cell} hit {count} times, expected ~{expected}"
        );
    }
}
