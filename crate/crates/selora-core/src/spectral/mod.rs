//! Inverse 2D spectral transforms, their exact adjoints, and wavelet filter
//! construction.
//!
//! The transform `T` maps a spectral coefficient matrix to a spatial matrix
//! of the same shape. Two encodings are supported: the real part of the
//! unnormalized inverse 2D Fourier transform, and a single-level inverse 2D
//! wavelet transform over four coefficient quadrants. Both are linear, and
//! [`adjoint_transform`] supplies the exact transpose `T*` needed for
//! reverse-mode gradients: `<T(F), G> = <F, T*(G)>`.
//!
//! All operations are pure functions on immutable inputs.

mod fourier;
mod wavelet;

pub use fourier::{adjoint_fourier_2d, inverse_fourier_2d};
pub use wavelet::{
    adjoint_wavelet_2d, build_wavelet_filter, forward_wavelet_2d, inverse_wavelet_2d,
    WaveletFilter, WaveletKind,
};

use alloc::format;

use crate::error::{Result, SeloraError};
use crate::mat::RealMatrix;

/// Choice of spectral encoding.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectralBasis {
    Fourier,
    Wavelet(WaveletFilter),
}

impl SpectralBasis {
    pub fn wavelet(kind: WaveletKind) -> Self {
        SpectralBasis::Wavelet(build_wavelet_filter(kind))
    }

    /// Canonical name used in configs, reports and checkpoints.
    pub fn name(&self) -> &'static str {
        match self {
            SpectralBasis::Fourier => "fourier",
            SpectralBasis::Wavelet(f) => f.kind.name(),
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "fourier" => Some(SpectralBasis::Fourier),
            "haar" => Some(SpectralBasis::wavelet(WaveletKind::Haar)),
            "daubechies4" => Some(SpectralBasis::wavelet(WaveletKind::Daubechies4)),
            "biorthogonal22" => Some(SpectralBasis::wavelet(WaveletKind::Biorthogonal22)),
            "coiflet1" => Some(SpectralBasis::wavelet(WaveletKind::Coiflet1)),
            _ => None,
        }
    }

    /// Checks that a `rows x cols` spectral matrix is admissible for this
    /// basis (the wavelet quadrant split needs even dimensions).
    pub fn validate_shape(&self, rows: usize, cols: usize) -> Result<()> {
        if rows == 0 || cols == 0 {
            return Err(SeloraError::InvalidDimension(format!(
                "spectral transform requires positive dimensions, got {rows}x{cols}"
            )));
        }
        if let SpectralBasis::Wavelet(_) = self {
            if rows % 2 != 0 || cols % 2 != 0 {
                return Err(SeloraError::InvalidDimension(format!(
                    "wavelet basis requires even dimensions, got {rows}x{cols}"
                )));
            }
        }
        Ok(())
    }

    /// Applies `T`, the inverse spectral transform.
    pub fn apply(&self, f: &RealMatrix) -> Result<RealMatrix> {
        match self {
            SpectralBasis::Fourier => inverse_fourier_2d(f),
            SpectralBasis::Wavelet(filter) => inverse_wavelet_2d(f, filter),
        }
    }

    /// Applies the adjoint `T*`.
    pub fn apply_adjoint(&self, g: &RealMatrix) -> Result<RealMatrix> {
        match self {
            SpectralBasis::Fourier => adjoint_fourier_2d(g),
            SpectralBasis::Wavelet(filter) => adjoint_wavelet_2d(g, filter),
        }
    }
}

/// Adjoint `T*` of the transform for the given basis, satisfying
/// `<T(F), G> = <F, T*(G)>` in the Frobenius inner product.
pub fn adjoint_transform(g: &RealMatrix, basis: &SpectralBasis) -> Result<RealMatrix> {
    basis.validate_shape(g.rows(), g.cols())?;
    basis.apply_adjoint(g)
}
