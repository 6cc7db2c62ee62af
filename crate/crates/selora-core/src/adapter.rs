//! Sparse spectral parameter storage and the adapter itself: index-set
//! sampling, variance-matched initialization, materialization through the
//! spectral transform, forward application under the supported update
//! schemas, and weight merging.
//!
//! Adapters are immutable after construction except through the explicit
//! parameter-update entry points ([`Adapter::set_params_flat`]); they are
//! safe to share read-only across threads.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use libm::{floor, sqrt};

use crate::error::{Result, SeloraError};
use crate::mat::{slice_mean_variance, RealMatrix};
use crate::rng::{derive_seed, Rng};
use crate::spectral::SpectralBasis;

const TAG_OMEGA: u64 = 1;
const TAG_MASK: u64 = 2;
const TAG_VALUES_A: u64 = 3;
const TAG_AUX: u64 = 4;

/// Number of learnable cells left by sparse ratio `eta` in an `r x d` grid.
pub fn learnable_count(rows: usize, cols: usize, sparse_ratio: f64) -> usize {
    floor((1.0 - sparse_ratio) * (rows * cols) as f64) as usize
}

/// Fixed, seeded set of learnable coordinates in a `rows x cols` grid.
///
/// Sampling is a partial Fisher-Yates over the flattened cells, so identical
/// `(rows, cols, sparse_ratio, seed)` reproduce an identical ordered list.
/// Indices are kept sorted ascending by `(u, v)` for a canonical order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSet {
    rows: usize,
    cols: usize,
    indices: Vec<(u32, u32)>,
    seed: u64,
}

impl IndexSet {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn indices(&self) -> &[(u32, u32)] {
        &self.indices
    }

    /// Same coordinate set viewed in the transposed grid.
    pub fn transposed(&self) -> IndexSet {
        let mut indices: Vec<(u32, u32)> = self.indices.iter().map(|&(u, v)| (v, u)).collect();
        indices.sort_unstable();
        IndexSet {
            rows: self.cols,
            cols: self.rows,
            indices,
            seed: self.seed,
        }
    }

    /// Dense 0/1 mask with ones at the member coordinates.
    pub fn dense_mask(&self) -> RealMatrix {
        let mut m = RealMatrix::zeros(self.rows, self.cols);
        for &(u, v) in &self.indices {
            m.set(u as usize, v as usize, 1.0);
        }
        m
    }

    /// Rebuilds an index set from stored parts (checkpoint loading).
    pub fn from_parts(
        rows: usize,
        cols: usize,
        indices: Vec<(u32, u32)>,
        seed: u64,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(SeloraError::InvalidDimension(format!(
                "index set grid must be positive, got {rows}x{cols}"
            )));
        }
        if indices.is_empty() {
            return Err(SeloraError::DegenerateSparsity {
                rows,
                cols,
                sparse_ratio: 1.0,
            });
        }
        if !indices.windows(2).all(|w| w[0] < w[1]) {
            return Err(SeloraError::InvalidDimension(String::from(
                "index set must be sorted ascending without duplicates",
            )));
        }
        for &(u, v) in &indices {
            if u as usize >= rows || v as usize >= cols {
                return Err(SeloraError::InvalidDimension(format!(
                    "index ({u},{v}) outside {rows}x{cols} grid"
                )));
            }
        }
        Ok(IndexSet {
            rows,
            cols,
            indices,
            seed,
        })
    }
}

/// Uniform sample without replacement of `floor((1-eta) * rows * cols)`
/// distinct cells, deterministic in the seed.
pub fn sample_index_set(
    rows: usize,
    cols: usize,
    sparse_ratio: f64,
    seed: u64,
) -> Result<IndexSet> {
    if rows == 0 || cols == 0 {
        return Err(SeloraError::InvalidDimension(format!(
            "index set grid must be positive, got {rows}x{cols}"
        )));
    }
    if !(0.0..1.0).contains(&sparse_ratio) {
        return Err(SeloraError::InvalidDimension(format!(
            "sparse ratio must lie in [0, 1), got {sparse_ratio}"
        )));
    }
    let total = rows * cols;
    let keep = learnable_count(rows, cols, sparse_ratio);
    if keep == 0 {
        return Err(SeloraError::DegenerateSparsity {
            rows,
            cols,
            sparse_ratio,
        });
    }

    let mut cells: Vec<u32> = (0..total as u32).collect();
    let mut rng = Rng::from_seed(seed);
    for i in 0..keep {
        let j = i + rng.below((total - i) as u64) as usize;
        cells.swap(i, j);
    }
    let mut indices: Vec<(u32, u32)> = cells[..keep]
        .iter()
        .map(|&cell| (cell / cols as u32, cell % cols as u32))
        .collect();
    indices.sort_unstable();

    Ok(IndexSet {
        rows,
        cols,
        indices,
        seed,
    })
}

/// Learnable values living on an [`IndexSet`]; every other cell of the dense
/// materialization is exactly zero and never updated.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSpectralMatrix {
    index_set: IndexSet,
    values: Vec<f64>,
}

impl SparseSpectralMatrix {
    pub fn zeros_on(index_set: IndexSet) -> Self {
        let values = vec![0.0; index_set.len()];
        SparseSpectralMatrix { index_set, values }
    }

    pub fn from_parts(index_set: IndexSet, values: Vec<f64>) -> Result<Self> {
        if values.len() != index_set.len() {
            return Err(SeloraError::LayoutMismatch {
                expected: index_set.len(),
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SeloraError::NonFinite(String::from(
                "sparse spectral values must be finite",
            )));
        }
        Ok(SparseSpectralMatrix { index_set, values })
    }

    pub fn rows(&self) -> usize {
        self.index_set.rows
    }

    pub fn cols(&self) -> usize {
        self.index_set.cols
    }

    pub fn index_set(&self) -> &IndexSet {
        &self.index_set
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Dense materialization: `values[i]` at `indices[i]`, zero elsewhere.
    pub fn densify(&self) -> RealMatrix {
        let mut m = RealMatrix::zeros(self.index_set.rows, self.index_set.cols);
        for (&(u, v), &value) in self.index_set.indices.iter().zip(&self.values) {
            m.set(u as usize, v as usize, value);
        }
        m
    }

    /// Gathers the entries of a dense matrix at this sparse support.
    pub fn gather(&self, dense: &RealMatrix) -> Result<Vec<f64>> {
        if dense.rows() != self.rows() || dense.cols() != self.cols() {
            return Err(SeloraError::InvalidDimension(format!(
                "gather: expected {}x{}, got {}x{}",
                self.rows(),
                self.cols(),
                dense.rows(),
                dense.cols()
            )));
        }
        Ok(self
            .index_set
            .indices
            .iter()
            .map(|&(u, v)| dense.get(u as usize, v as usize))
            .collect())
    }
}

/// Weight-initialization scheme for the learnable factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    /// Normal with variance `2 / fan_in`.
    Kaiming,
    /// Normal with variance `2 / (fan_in + fan_out)`.
    Xavier,
}

impl InitScheme {
    fn std_dev(self, rank: usize, in_dim: usize) -> f64 {
        match self {
            InitScheme::Kaiming => sqrt(2.0 / in_dim as f64),
            InitScheme::Xavier => sqrt(2.0 / (rank + in_dim) as f64),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            InitScheme::Kaiming => "kaiming",
            InitScheme::Xavier => "xavier",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "kaiming" => Some(InitScheme::Kaiming),
            "xavier" => Some(InitScheme::Xavier),
            _ => None,
        }
    }
}

/// How the incremental update is applied on top of the frozen weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateRule {
    /// `W0 + (alpha/r) B A`
    Lora,
    /// magnitude times column-normalized direction of `W0 + (alpha/r) B A`
    Dora,
    /// `W0 + W0 .* ((alpha/r) B A)`
    Hira,
}

/// Update schema: an update rule paired with either spectral factors or
/// spatial factors under a fixed random binary mask.
///
/// The `Masked*` variants are the density-redundancy baselines: factors live
/// directly in the spatial domain on a fixed random support. `MaskedLora`
/// with `sparse_ratio = 0` is plain dense LoRA.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    Lora,
    Dora,
    Hira,
    MaskedLora,
    MaskedDora,
    MaskedHira,
}

impl Schema {
    pub const ALL: [Schema; 6] = [
        Schema::Lora,
        Schema::Dora,
        Schema::Hira,
        Schema::MaskedLora,
        Schema::MaskedDora,
        Schema::MaskedHira,
    ];

    pub fn update_rule(self) -> UpdateRule {
        match self {
            Schema::Lora | Schema::MaskedLora => UpdateRule::Lora,
            Schema::Dora | Schema::MaskedDora => UpdateRule::Dora,
            Schema::Hira | Schema::MaskedHira => UpdateRule::Hira,
        }
    }

    /// Spectral schemas materialize factors through the basis transform;
    /// masked schemas hold spatial factors directly.
    pub fn is_spectral(self) -> bool {
        matches!(self, Schema::Lora | Schema::Dora | Schema::Hira)
    }

    pub fn name(self) -> &'static str {
        match self {
            Schema::Lora => "lora",
            Schema::Dora => "dora",
            Schema::Hira => "hira",
            Schema::MaskedLora => "masked-lora",
            Schema::MaskedDora => "masked-dora",
            Schema::MaskedHira => "masked-hira",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "lora" => Some(Schema::Lora),
            "dora" => Some(Schema::Dora),
            "hira" => Some(Schema::Hira),
            "masked-lora" => Some(Schema::MaskedLora),
            "masked-dora" => Some(Schema::MaskedDora),
            "masked-hira" => Some(Schema::MaskedHira),
            _ => None,
        }
    }
}

/// Full adapter configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterConfig {
    pub rank: usize,
    /// `d2`: input dimension of the adapted weight.
    pub in_dim: usize,
    /// `d1`: output dimension of the adapted weight.
    pub out_dim: usize,
    pub alpha: f64,
    pub sparse_ratio: f64,
    pub basis: SpectralBasis,
    pub schema: Schema,
    pub init_scheme: InitScheme,
    pub dropout_rate: f64,
    /// Seeds the learnable-coordinate sampling (index sets and masks).
    pub seed: u64,
}

impl AdapterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 || self.in_dim == 0 || self.out_dim == 0 {
            return Err(SeloraError::InvalidDimension(format!(
                "rank and dimensions must be positive, got r={} d1={} d2={}",
                self.rank, self.out_dim, self.in_dim
            )));
        }
        if self.rank > self.in_dim.min(self.out_dim) {
            return Err(SeloraError::InvalidDimension(format!(
                "rank {} exceeds min(d1, d2) = {}",
                self.rank,
                self.in_dim.min(self.out_dim)
            )));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(SeloraError::InvalidDimension(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(0.0..1.0).contains(&self.sparse_ratio) {
            return Err(SeloraError::InvalidDimension(format!(
                "sparse ratio must lie in [0, 1), got {}",
                self.sparse_ratio
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(SeloraError::InvalidDimension(format!(
                "dropout rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if self.schema.is_spectral() {
            self.basis.validate_shape(self.rank, self.in_dim)?;
            self.basis.validate_shape(self.out_dim, self.rank)?;
        }
        if learnable_count(self.rank, self.in_dim.min(self.out_dim), self.sparse_ratio) == 0 {
            return Err(SeloraError::DegenerateSparsity {
                rows: self.rank,
                cols: self.in_dim.min(self.out_dim),
                sparse_ratio: self.sparse_ratio,
            });
        }
        Ok(())
    }

    /// Same settings retargeted at a weight of shape `out_dim x in_dim`.
    pub fn for_dims(&self, out_dim: usize, in_dim: usize) -> AdapterConfig {
        let mut cfg = self.clone();
        cfg.out_dim = out_dim;
        cfg.in_dim = in_dim;
        cfg
    }

    /// Conventional `alpha / r` scaling applied to the update.
    pub fn scaling(&self) -> f64 {
        self.alpha / self.rank as f64
    }
}

/// Statistics recorded while matching the materialized factor's variance to
/// the auxiliary draw at initialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitStats {
    /// Achieved `Var(materialized A) / Var(A')` after scaling; 1.0 for
    /// masked schemas, which skip variance matching.
    pub variance_ratio: f64,
    /// Empirical variance of the auxiliary draw `A'`.
    pub aux_variance: f64,
}

/// A frozen base weight plus sparse learnable factors.
#[derive(Debug, Clone, PartialEq)]
pub struct Adapter {
    config: AdapterConfig,
    w0: RealMatrix,
    factor_a: SparseSpectralMatrix,
    factor_b: SparseSpectralMatrix,
    magnitude: Option<Vec<f64>>,
    init_stats: InitStats,
}

/// Initializes an adapter over the frozen weight `w0`.
///
/// The configuration seed fixes the learnable coordinates (shared per
/// shape-class; the `B` factor uses the transposed set sampled for shape
/// `(r, d1)`), while `seed` drives the value draws. The `A` factor is drawn
/// by the configured scheme and rescaled so its materialization matches the
/// empirical variance of an auxiliary conventionally-initialized matrix;
/// `B` starts at zero so the initial update is exactly zero.
pub fn init_adapter(config: &AdapterConfig, w0: &RealMatrix, seed: u64) -> Result<Adapter> {
    config.validate()?;
    if w0.rows() != config.out_dim || w0.cols() != config.in_dim {
        return Err(SeloraError::InvalidDimension(format!(
            "base weight is {}x{}, config expects {}x{}",
            w0.rows(),
            w0.cols(),
            config.out_dim,
            config.in_dim
        )));
    }

    let (rank, d1, d2) = (config.rank, config.out_dim, config.in_dim);
    // Spectral locations are shared per shape-class (the B factor reuses the
    // transposed set sampled for its shape); the spatial masks of the masked
    // baselines are sampled independently per factor, since shared masks
    // would confine every rank-one component to a principal submatrix.
    let (omega_a, omega_b) = if config.schema.is_spectral() {
        let omega_a = sample_index_set(
            rank,
            d2,
            config.sparse_ratio,
            derive_seed(config.seed, TAG_OMEGA, rank as u64, d2 as u64),
        )?;
        let omega_b = sample_index_set(
            rank,
            d1,
            config.sparse_ratio,
            derive_seed(config.seed, TAG_OMEGA, rank as u64, d1 as u64),
        )?
        .transposed();
        (omega_a, omega_b)
    } else {
        let mask_a = sample_index_set(
            rank,
            d2,
            config.sparse_ratio,
            derive_seed(config.seed, TAG_MASK, rank as u64, d2 as u64),
        )?;
        let mask_b = sample_index_set(
            d1,
            rank,
            config.sparse_ratio,
            derive_seed(config.seed, TAG_MASK + 1, d1 as u64, rank as u64),
        )?;
        (mask_a, mask_b)
    };

    let std_dev = config.init_scheme.std_dev(rank, d2);
    let mut rng_values = Rng::from_seed(derive_seed(seed, TAG_VALUES_A, rank as u64, d2 as u64));
    let mut rng_aux = Rng::from_seed(derive_seed(seed, TAG_AUX, rank as u64, d2 as u64));

    let (factor_a, init_stats) = if config.schema.is_spectral() {
        let mut values: Vec<f64> = (0..omega_a.len())
            .map(|_| rng_values.normal_scaled(std_dev))
            .collect();
        let aux: Vec<f64> = (0..rank * d2)
            .map(|_| rng_aux.normal_scaled(std_dev))
            .collect();
        let (_, aux_variance) = slice_mean_variance(&aux);

        let sparse = SparseSpectralMatrix {
            index_set: omega_a.clone(),
            values: values.clone(),
        };
        let materialized = config.basis.apply(&sparse.densify())?;
        let var_t = materialized.variance();
        if !(var_t.is_finite() && var_t > 0.0) {
            return Err(SeloraError::DegenerateInit(format!(
                "materialized factor variance is {var_t}; cannot match variances"
            )));
        }
        let scale = sqrt(aux_variance / var_t);
        for v in &mut values {
            *v *= scale;
        }

        let factor_a = SparseSpectralMatrix {
            index_set: omega_a,
            values,
        };
        let achieved = config.basis.apply(&factor_a.densify())?.variance() / aux_variance;
        (
            factor_a,
            InitStats {
                variance_ratio: achieved,
                aux_variance,
            },
        )
    } else {
        // Masked schemas: draw the full spatial factor by the scheme, then
        // keep only the unmasked cells. Drawing densely makes sparse_ratio=0
        // coincide with a plain dense factor given the same seed.
        let dense: Vec<f64> = (0..rank * d2)
            .map(|_| rng_values.normal_scaled(std_dev))
            .collect();
        let (_, aux_variance) = slice_mean_variance(&dense);
        let values: Vec<f64> = omega_a
            .indices
            .iter()
            .map(|&(u, v)| dense[u as usize * d2 + v as usize])
            .collect();
        (
            SparseSpectralMatrix {
                index_set: omega_a,
                values,
            },
            InitStats {
                variance_ratio: 1.0,
                aux_variance,
            },
        )
    };

    let factor_b = SparseSpectralMatrix::zeros_on(omega_b);

    let magnitude = if config.schema.update_rule() == UpdateRule::Dora {
        Some((0..d2).map(|j| w0.column_norm(j)).collect())
    } else {
        None
    };

    Ok(Adapter {
        config: config.clone(),
        w0: w0.clone(),
        factor_a,
        factor_b,
        magnitude,
        init_stats,
    })
}

impl Adapter {
    pub fn config(&self) -> &AdapterConfig {
        &self.config
    }

    pub fn w0(&self) -> &RealMatrix {
        &self.w0
    }

    pub fn factor_a(&self) -> &SparseSpectralMatrix {
        &self.factor_a
    }

    pub fn factor_b(&self) -> &SparseSpectralMatrix {
        &self.factor_b
    }

    pub fn magnitude(&self) -> Option<&[f64]> {
        self.magnitude.as_deref()
    }

    pub fn init_stats(&self) -> InitStats {
        self.init_stats
    }

    /// Dense binary masks for the masked schemas.
    pub fn mask_a(&self) -> Option<RealMatrix> {
        (!self.config.schema.is_spectral()).then(|| self.factor_a.index_set.dense_mask())
    }

    pub fn mask_b(&self) -> Option<RealMatrix> {
        (!self.config.schema.is_spectral()).then(|| self.factor_b.index_set.dense_mask())
    }

    /// Materializes the spatial factors and the scaled update:
    /// `A = T(dense(F_A))`, `B = T(dense(F_B))`, `dW = (alpha/r) B A`.
    pub fn materialize(&self) -> Result<(RealMatrix, RealMatrix, RealMatrix)> {
        let a_tilde = if self.config.schema.is_spectral() {
            self.config.basis.apply(&self.factor_a.densify())?
        } else {
            self.factor_a.densify()
        };
        let b_tilde = if self.config.schema.is_spectral() {
            self.config.basis.apply(&self.factor_b.densify())?
        } else {
            self.factor_b.densify()
        };
        let delta_w = b_tilde.matmul(&a_tilde)?.scale(self.config.scaling());
        Ok((a_tilde, b_tilde, delta_w))
    }

    /// DoRA effective weight: magnitude times the column-normalized
    /// direction `W0 + dW`. Also returns the direction source and its column
    /// norms for gradient computation.
    pub(crate) fn dora_effective(
        &self,
        delta_w: &RealMatrix,
    ) -> Result<(RealMatrix, RealMatrix, Vec<f64>)> {
        let magnitude = self.magnitude.as_ref().expect("DoRA adapter has magnitude");
        let direction_source = self.w0.add(delta_w)?;
        let mut norms = Vec::with_capacity(self.config.in_dim);
        for j in 0..self.config.in_dim {
            let norm = direction_source.column_norm(j);
            if norm == 0.0 {
                return Err(SeloraError::DegenerateNormalization { column: j });
            }
            norms.push(norm);
        }
        let mut effective = direction_source.clone();
        for i in 0..effective.rows() {
            for j in 0..effective.cols() {
                let scale = magnitude[j] / norms[j];
                effective.set(i, j, effective.get(i, j) * scale);
            }
        }
        Ok((effective, direction_source, norms))
    }

    /// HiRA effective weight: `W0 + W0 .* dW`.
    pub(crate) fn hira_effective(&self, delta_w: &RealMatrix) -> Result<RealMatrix> {
        self.w0.add(&self.w0.hadamard(delta_w)?)
    }

    /// The merged effective weight `W'` such that `W' X` equals the adapter
    /// forward pass (dropout off).
    pub fn merge(&self) -> Result<RealMatrix> {
        let (_, _, delta_w) = self.materialize()?;
        match self.config.schema.update_rule() {
            UpdateRule::Lora => self.w0.add(&delta_w),
            UpdateRule::Dora => Ok(self.dora_effective(&delta_w)?.0),
            UpdateRule::Hira => self.hira_effective(&delta_w),
        }
    }

    /// Deterministic (evaluation-mode) forward pass `X -> Y`.
    pub fn forward(&self, x: &RealMatrix) -> Result<RealMatrix> {
        if x.rows() != self.config.in_dim {
            return Err(SeloraError::InvalidDimension(format!(
                "forward: input has {} rows, adapter expects {}",
                x.rows(),
                self.config.in_dim
            )));
        }
        match self.config.schema.update_rule() {
            UpdateRule::Lora => {
                let (a_tilde, b_tilde, _) = self.materialize()?;
                let branch = b_tilde
                    .matmul(&a_tilde.matmul(x)?)?
                    .scale(self.config.scaling());
                self.w0.matmul(x)?.add(&branch)
            }
            UpdateRule::Dora | UpdateRule::Hira => self.merge()?.matmul(x),
        }
    }

    /// Number of learnable coordinates.
    pub fn trainable_parameter_count(&self) -> usize {
        self.factor_a.values.len()
            + self.factor_b.values.len()
            + self.magnitude.as_ref().map_or(0, Vec::len)
    }

    /// Learnable coordinates flattened as `[F_A values, F_B values, m]`.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.trainable_parameter_count());
        out.extend_from_slice(&self.factor_a.values);
        out.extend_from_slice(&self.factor_b.values);
        if let Some(m) = &self.magnitude {
            out.extend_from_slice(m);
        }
        out
    }

    /// Writes back a flattened parameter vector (same layout as
    /// [`Adapter::params_flat`]). Off-support cells are untouchable by
    /// construction.
    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        let expected = self.trainable_parameter_count();
        if params.len() != expected {
            return Err(SeloraError::LayoutMismatch {
                expected,
                actual: params.len(),
            });
        }
        let na = self.factor_a.values.len();
        let nb = self.factor_b.values.len();
        self.factor_a.values.copy_from_slice(&params[..na]);
        self.factor_b.values.copy_from_slice(&params[na..na + nb]);
        if let Some(m) = &mut self.magnitude {
            m.copy_from_slice(&params[na + nb..]);
        }
        Ok(())
    }

    /// Rebuilds an adapter from stored parts (checkpoint loading).
    pub fn from_parts(
        config: AdapterConfig,
        w0: RealMatrix,
        factor_a: SparseSpectralMatrix,
        factor_b: SparseSpectralMatrix,
        magnitude: Option<Vec<f64>>,
        init_stats: InitStats,
    ) -> Result<Adapter> {
        config.validate()?;
        if w0.rows() != config.out_dim || w0.cols() != config.in_dim {
            return Err(SeloraError::InvalidDimension(String::from(
                "base weight shape does not match config",
            )));
        }
        if factor_a.rows() != config.rank || factor_a.cols() != config.in_dim {
            return Err(SeloraError::InvalidDimension(String::from(
                "factor A shape does not match config",
            )));
        }
        if factor_b.rows() != config.out_dim || factor_b.cols() != config.rank {
            return Err(SeloraError::InvalidDimension(String::from(
                "factor B shape does not match config",
            )));
        }
        let needs_magnitude = config.schema.update_rule() == UpdateRule::Dora;
        match (&magnitude, needs_magnitude) {
            (Some(m), true) if m.len() != config.in_dim => {
                return Err(SeloraError::LayoutMismatch {
                    expected: config.in_dim,
                    actual: m.len(),
                })
            }
            (None, true) | (Some(_), false) => {
                return Err(SeloraError::InvalidDimension(String::from(
                    "magnitude vector presence does not match schema",
                )))
            }
            _ => {}
        }
        Ok(Adapter {
            config,
            w0,
            factor_a,
            factor_b,
            magnitude,
            init_stats,
        })
    }
}
