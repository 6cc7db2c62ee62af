//! Single-level 2D wavelet synthesis, its exact inverse, and its adjoint.
//!
//! The spectral matrix is laid out in four quadrants
//! `[[a, h], [v, d]]` (approximation, horizontal, vertical, diagonal). Each
//! quadrant is recombined by separable filtering with periodic boundary
//! extension, so the map is exactly invertible on even sizes.
//!
//! Scale convention: the synthesis carries a single global gain of `sqrt(2)`
//! on top of the orthonormal filter bank. For Haar this makes each spectral
//! coefficient contribute `(+/-1) / sqrt(2)` to its 2x2 output block; the DC
//! gain on a 2x2 matrix is `1/sqrt(2)`. The forward transform is defined as
//! the exact linear inverse, so for orthogonal filters it equals the adjoint
//! divided by 2.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use libm::sqrt;

use crate::error::{Result, SeloraError};
use crate::mat::RealMatrix;

/// Supported filter families (smallest common member of each).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WaveletKind {
    Haar,
    Daubechies4,
    Biorthogonal22,
    Coiflet1,
}

impl WaveletKind {
    pub const ALL: [WaveletKind; 4] = [
        WaveletKind::Haar,
        WaveletKind::Daubechies4,
        WaveletKind::Biorthogonal22,
        WaveletKind::Coiflet1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WaveletKind::Haar => "haar",
            WaveletKind::Daubechies4 => "daubechies4",
            WaveletKind::Biorthogonal22 => "biorthogonal22",
            WaveletKind::Coiflet1 => "coiflet1",
        }
    }
}

/// Analysis/synthesis tap sets for a single-level separable 2D transform.
///
/// For the orthogonal kinds the analysis taps are the time-reversed synthesis
/// taps. Biorthogonal 2.2 carries a distinct dual pair.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletFilter {
    pub kind: WaveletKind,
    pub synthesis_low: Vec<f64>,
    pub synthesis_high: Vec<f64>,
    pub analysis_low: Vec<f64>,
    pub analysis_high: Vec<f64>,
}

fn reversed(taps: &[f64]) -> Vec<f64> {
    taps.iter().rev().copied().collect()
}

/// High-pass from low-pass by the quadrature-mirror rule
/// `g[t] = (-1)^t h[L-1-t]`.
fn qmf(low: &[f64]) -> Vec<f64> {
    let l = low.len();
    (0..l)
        .map(|t| {
            let v = low[l - 1 - t];
            if t % 2 == 0 {
                v
            } else {
                -v
            }
        })
        .collect()
}

/// Builds the tap sets for one of the four supported families.
pub fn build_wavelet_filter(kind: WaveletKind) -> WaveletFilter {
    match kind {
        WaveletKind::Haar => {
            let s = 1.0 / sqrt(2.0);
            let synthesis_low = vec![s, s];
            let synthesis_high = qmf(&synthesis_low);
            WaveletFilter {
                kind,
                analysis_low: reversed(&synthesis_low),
                analysis_high: reversed(&synthesis_high),
                synthesis_low,
                synthesis_high,
            }
        }
        WaveletKind::Daubechies4 => {
            let q = sqrt(3.0);
            let denom = 4.0 * sqrt(2.0);
            let synthesis_low = vec![
                (1.0 + q) / denom,
                (3.0 + q) / denom,
                (3.0 - q) / denom,
                (1.0 - q) / denom,
            ];
            let synthesis_high = qmf(&synthesis_low);
            WaveletFilter {
                kind,
                analysis_low: reversed(&synthesis_low),
                analysis_high: reversed(&synthesis_high),
                synthesis_low,
                synthesis_high,
            }
        }
        WaveletKind::Coiflet1 => {
            let q = sqrt(7.0);
            let c = sqrt(2.0) / 32.0;
            let analysis_low = vec![
                (-3.0 + q) * c,
                (1.0 - q) * c,
                (14.0 - 2.0 * q) * c,
                (14.0 + 2.0 * q) * c,
                (5.0 + q) * c,
                (1.0 - q) * c,
            ];
            let synthesis_low = reversed(&analysis_low);
            let synthesis_high = qmf(&synthesis_low);
            WaveletFilter {
                kind,
                analysis_high: reversed(&synthesis_high),
                analysis_low,
                synthesis_low,
                synthesis_high,
            }
        }
        WaveletKind::Biorthogonal22 => {
            // CDF 2.2 spline pair, zero-padded to a common 6-tap grid so the
            // even-shift duality holds; the analysis high-pass sign is fixed
            // so the periodic filter bank inverts exactly.
            let a = sqrt(2.0) / 8.0;
            let b = sqrt(2.0) / 4.0;
            let c = 3.0 * sqrt(2.0) / 4.0;
            let e = sqrt(2.0) / 2.0;
            WaveletFilter {
                kind,
                synthesis_low: vec![0.0, b, e, b, 0.0, 0.0],
                synthesis_high: vec![0.0, -a, -b, c, -b, -a],
                analysis_low: vec![0.0, -a, b, c, b, -a],
                analysis_high: vec![0.0, -b, e, -b, 0.0, 0.0],
            }
        }
    }
}

fn require_even(rows: usize, cols: usize, op: &str) -> Result<()> {
    if rows == 0 || cols == 0 || rows % 2 != 0 || cols % 2 != 0 {
        return Err(SeloraError::InvalidDimension(format!(
            "{op} requires even dimensions, got {rows}x{cols}"
        )));
    }
    Ok(())
}

/// Writes `lo`/`hi` coefficients into `out` through the given taps:
/// coefficient `u` accumulates `taps[t]` at position `(2u + t) mod n`.
fn synth_1d(lo: &[f64], hi: &[f64], taps_lo: &[f64], taps_hi: &[f64], out: &mut [f64]) {
    let n = out.len();
    for v in out.iter_mut() {
        *v = 0.0;
    }
    for u in 0..lo.len() {
        let base = 2 * u;
        let (cl, ch) = (lo[u], hi[u]);
        for (t, (&wl, &wh)) in taps_lo.iter().zip(taps_hi.iter()).enumerate() {
            out[(base + t) % n] += cl * wl + ch * wh;
        }
    }
}

/// Reads `lo`/`hi` coefficients back out of `x`: coefficient `u` correlates
/// `taps` against positions `(2u + t) mod n`. With `taps = synthesis taps`
/// this is the transpose of [`synth_1d`].
fn read_1d(x: &[f64], taps_lo: &[f64], taps_hi: &[f64], lo: &mut [f64], hi: &mut [f64]) {
    let n = x.len();
    for u in 0..lo.len() {
        let base = 2 * u;
        let mut acc_lo = 0.0;
        let mut acc_hi = 0.0;
        for (t, (&wl, &wh)) in taps_lo.iter().zip(taps_hi.iter()).enumerate() {
            let v = x[(base + t) % n];
            acc_lo += wl * v;
            acc_hi += wh * v;
        }
        lo[u] = acc_lo;
        hi[u] = acc_hi;
    }
}

/// Shared separable driver: combines the quadrants of `f` through `read`- or
/// `synth`-style 1D passes. `row_taps`/`col_taps` are `(low, high)` pairs.
fn synthesis_2d(f: &RealMatrix, taps_lo: &[f64], taps_hi: &[f64], gain: f64) -> RealMatrix {
    let rows = f.rows();
    let cols = f.cols();
    let (hr, hc) = (rows / 2, cols / 2);

    // column direction: rows of (a|h) and (v|d) quadrant pairs
    let mut top = vec![0.0; hr * cols]; // row-low contributions
    let mut bot = vec![0.0; hr * cols]; // row-high contributions
    let mut lo_buf = vec![0.0; hc];
    let mut hi_buf = vec![0.0; hc];
    let mut line = vec![0.0; cols];
    for i in 0..hr {
        // a is (row-low, col-low); v is (row-low, col-high)
        for k in 0..hc {
            lo_buf[k] = f.get(i, k); // a
            hi_buf[k] = f.get(hr + i, k); // v
        }
        synth_1d(&lo_buf, &hi_buf, taps_lo, taps_hi, &mut line);
        top[i * cols..(i + 1) * cols].copy_from_slice(&line);

        // h is (row-high, col-low); d is (row-high, col-high)
        for k in 0..hc {
            lo_buf[k] = f.get(i, hc + k); // h
            hi_buf[k] = f.get(hr + i, hc + k); // d
        }
        synth_1d(&lo_buf, &hi_buf, taps_lo, taps_hi, &mut line);
        bot[i * cols..(i + 1) * cols].copy_from_slice(&line);
    }

    // row direction: combine top (low) with bot (high) per column
    let mut out = RealMatrix::zeros(rows, cols);
    let mut col_lo = vec![0.0; hr];
    let mut col_hi = vec![0.0; hr];
    let mut col_out = vec![0.0; rows];
    for k in 0..cols {
        for i in 0..hr {
            col_lo[i] = top[i * cols + k];
            col_hi[i] = bot[i * cols + k];
        }
        synth_1d(&col_lo, &col_hi, taps_lo, taps_hi, &mut col_out);
        for (j, &v) in col_out.iter().enumerate() {
            out.set(j, k, v * gain);
        }
    }
    out
}

/// Read-style driver: analyzes `m` into quadrants with the given reader taps.
fn analysis_2d(m: &RealMatrix, taps_lo: &[f64], taps_hi: &[f64], gain: f64) -> RealMatrix {
    let rows = m.rows();
    let cols = m.cols();
    let (hr, hc) = (rows / 2, cols / 2);

    // row direction first: split each column into row-low / row-high parts
    let mut top = vec![0.0; hr * cols];
    let mut bot = vec![0.0; hr * cols];
    let mut col = vec![0.0; rows];
    let mut lo_buf = vec![0.0; hr];
    let mut hi_buf = vec![0.0; hr];
    for k in 0..cols {
        for j in 0..rows {
            col[j] = m.get(j, k);
        }
        read_1d(&col, taps_lo, taps_hi, &mut lo_buf, &mut hi_buf);
        for i in 0..hr {
            top[i * cols + k] = lo_buf[i];
            bot[i * cols + k] = hi_buf[i];
        }
    }

    // column direction: split each half-row into quadrants
    let mut out = RealMatrix::zeros(rows, cols);
    let mut row_lo = vec![0.0; hc];
    let mut row_hi = vec![0.0; hc];
    for i in 0..hr {
        read_1d(
            &top[i * cols..(i + 1) * cols],
            taps_lo,
            taps_hi,
            &mut row_lo,
            &mut row_hi,
        );
        for k in 0..hc {
            out.set(i, k, row_lo[k] * gain); // a
            out.set(hr + i, k, row_hi[k] * gain); // v
        }
        read_1d(
            &bot[i * cols..(i + 1) * cols],
            taps_lo,
            taps_hi,
            &mut row_lo,
            &mut row_hi,
        );
        for k in 0..hc {
            out.set(i, hc + k, row_lo[k] * gain); // h
            out.set(hr + i, hc + k, row_hi[k] * gain); // d
        }
    }
    out
}

/// Single-level 2D synthesis of the quadrant matrix `f`.
pub fn inverse_wavelet_2d(f: &RealMatrix, filter: &WaveletFilter) -> Result<RealMatrix> {
    require_even(f.rows(), f.cols(), "inverse_wavelet_2d")?;
    Ok(synthesis_2d(
        f,
        &filter.synthesis_low,
        &filter.synthesis_high,
        sqrt(2.0),
    ))
}

/// Exact linear inverse of [`inverse_wavelet_2d`].
pub fn forward_wavelet_2d(m: &RealMatrix, filter: &WaveletFilter) -> Result<RealMatrix> {
    require_even(m.rows(), m.cols(), "forward_wavelet_2d")?;
    let reader_lo = reversed(&filter.analysis_low);
    let reader_hi = reversed(&filter.analysis_high);
    Ok(analysis_2d(m, &reader_lo, &reader_hi, 1.0 / sqrt(2.0)))
}

/// Adjoint (transpose) of [`inverse_wavelet_2d`]: reads with the synthesis
/// taps at the positions the synthesis wrote to.
pub fn adjoint_wavelet_2d(g: &RealMatrix, filter: &WaveletFilter) -> Result<RealMatrix> {
    require_even(g.rows(), g.cols(), "adjoint_wavelet_2d")?;
    Ok(analysis_2d(
        g,
        &filter.synthesis_low,
        &filter.synthesis_high,
        sqrt(2.0),
    ))
}
