//! Fourier encoding: real part of the unnormalized inverse 2D DFT.
//!
//! `out(j,k) = sum_{u,v} F(u,v) * cos(2 pi (u j / r + v k / d))`
//!
//! No `1/(rd)` normalization is applied; the variance-matched initialization
//! absorbs the global scale. The cosine kernel is symmetric under swapping
//! `(u,v)` with `(j,k)`, so the map is self-adjoint and the adjoint reuses
//! the same fast routine.

use crate::error::Result;
use crate::fft::synthesis_2d_real;
use crate::mat::RealMatrix;

/// Fast evaluation of the real inverse 2D DFT above.
pub fn inverse_fourier_2d(f: &RealMatrix) -> Result<RealMatrix> {
    Ok(synthesis_2d_real(f))
}

/// Adjoint of [`inverse_fourier_2d`]; the kernel is symmetric so this is the
/// same transform.
pub fn adjoint_fourier_2d(g: &RealMatrix) -> Result<RealMatrix> {
    Ok(synthesis_2d_real(g))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_maps_to_zero() {
        let f = RealMatrix::zeros(3, 5);
        assert_eq!(inverse_fourier_2d(&f).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn dc_coefficient_gives_constant_matrix() {
        let mut f = RealMatrix::zeros(4, 6);
        f.set(0, 0, 2.5);
        let out = inverse_fourier_2d(&f).unwrap();
        for j in 0..4 {
            for k in 0..6 {
                assert!((out.get(j, k) - 2.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn first_row_mode_on_2x2() {
        // F(1,0) = 1: out(j,k) = cos(pi j) -> [[1,1],[-1,-1]]
        let mut f = RealMatrix::zeros(2, 2);
        f.set(1, 0, 1.0);
        let out = inverse_fourier_2d(&f).unwrap();
        let want = [[1.0, 1.0], [-1.0, -1.0]];
        for j in 0..2 {
            for k in 0..2 {
                assert!((out.get(j, k) - want[j][k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn adjoint_of_ones_at_dc_sums_all_entries() {
        let g = RealMatrix::from_fn(2, 2, |_, _| 1.0);
        let out = adjoint_fourier_2d(&g).unwrap();
        assert!((out.get(0, 0) - 4.0).abs() < 1e-12);
    }
}
