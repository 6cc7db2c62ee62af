//! Complex FFT used by the Fourier encoding path.
//!
//! Radix-2 Cooley-Tukey for power-of-two lengths, Bluestein's chirp-z
//! algorithm for everything else, so any matrix shape is supported.

use alloc::vec;
use alloc::vec::Vec;

use libm::{cos, sin};

use crate::mat::RealMatrix;

const PI: f64 = core::f64::consts::PI;

/// In-place radix-2 FFT. `sign = +1.0` gives the unnormalized synthesis
/// kernel `e^{+2\pi i nk/N}`, `sign = -1.0` the analysis kernel.
fn fft_pow2(re: &mut [f64], im: &mut [f64], sign: f64) {
    let n = re.len();
    debug_assert!(n.is_power_of_two());
    if n <= 1 {
        return;
    }

    // bit-reversal permutation
    let mut j = 0usize;
    for i in 0..n - 1 {
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
        let mut mask = n >> 1;
        while j & mask != 0 {
            j ^= mask;
            mask >>= 1;
        }
        j |= mask;
    }

    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = sign * 2.0 * PI / len as f64;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let angle = step * k as f64;
                let (wr, wi) = (cos(angle), sin(angle));
                let i0 = start + k;
                let i1 = i0 + half;
                let tr = re[i1] * wr - im[i1] * wi;
                let ti = re[i1] * wi + im[i1] * wr;
                re[i1] = re[i0] - tr;
                im[i1] = im[i0] - ti;
                re[i0] += tr;
                im[i0] += ti;
            }
        }
        len <<= 1;
    }
}

/// Bluestein's algorithm for arbitrary `n`, same sign convention.
fn dft_bluestein(re: &[f64], im: &[f64], sign: f64) -> (Vec<f64>, Vec<f64>) {
    let n = re.len();
    let m = (2 * n - 1).next_power_of_two();

    // chirp w[k] = e^{sign * i * pi * k^2 / n}; k^2 reduced mod 2n keeps the
    // angle argument small.
    let mut chirp_re = vec![0.0; n];
    let mut chirp_im = vec![0.0; n];
    for k in 0..n {
        let q = ((k as u64 * k as u64) % (2 * n as u64)) as f64;
        let angle = sign * PI * q / n as f64;
        chirp_re[k] = cos(angle);
        chirp_im[k] = sin(angle);
    }

    // a = x .* chirp, zero-padded to m
    let mut a_re = vec![0.0; m];
    let mut a_im = vec![0.0; m];
    for k in 0..n {
        a_re[k] = re[k] * chirp_re[k] - im[k] * chirp_im[k];
        a_im[k] = re[k] * chirp_im[k] + im[k] * chirp_re[k];
    }

    // b = conj(chirp) wrapped circularly
    let mut b_re = vec![0.0; m];
    let mut b_im = vec![0.0; m];
    b_re[0] = chirp_re[0];
    b_im[0] = -chirp_im[0];
    for k in 1..n {
        b_re[k] = chirp_re[k];
        b_im[k] = -chirp_im[k];
        b_re[m - k] = b_re[k];
        b_im[m - k] = b_im[k];
    }

    // circular convolution via power-of-two FFTs
    fft_pow2(&mut a_re, &mut a_im, -1.0);
    fft_pow2(&mut b_re, &mut b_im, -1.0);
    for k in 0..m {
        let r = a_re[k] * b_re[k] - a_im[k] * b_im[k];
        let i = a_re[k] * b_im[k] + a_im[k] * b_re[k];
        a_re[k] = r;
        a_im[k] = i;
    }
    fft_pow2(&mut a_re, &mut a_im, 1.0);
    let inv_m = 1.0 / m as f64;

    let mut out_re = vec![0.0; n];
    let mut out_im = vec![0.0; n];
    for k in 0..n {
        let cr = a_re[k] * inv_m;
        let ci = a_im[k] * inv_m;
        out_re[k] = cr * chirp_re[k] - ci * chirp_im[k];
        out_im[k] = cr * chirp_im[k] + ci * chirp_re[k];
    }
    (out_re, out_im)
}

/// Unnormalized DFT of arbitrary length.
fn dft(re: &mut Vec<f64>, im: &mut Vec<f64>, sign: f64) {
    let n = re.len();
    if n <= 1 {
        return;
    }
    if n.is_power_of_two() {
        fft_pow2(re, im, sign);
    } else {
        let (r, i) = dft_bluestein(re, im, sign);
        *re = r;
        *im = i;
    }
}

/// Real part of the unnormalized 2D synthesis
/// `out(j,k) = sum_{u,v} f(u,v) * e^{+2 pi i (u j / rows + v k / cols)}`.
pub(crate) fn synthesis_2d_real(f: &RealMatrix) -> RealMatrix {
    let rows = f.rows();
    let cols = f.cols();

    // transform each row (over v), keeping complex intermediates
    let mut re = vec![0.0; rows * cols];
    let mut im = vec![0.0; rows * cols];
    for u in 0..rows {
        let mut row_re: Vec<f64> = f.row(u).to_vec();
        let mut row_im = vec![0.0; cols];
        dft(&mut row_re, &mut row_im, 1.0);
        re[u * cols..(u + 1) * cols].copy_from_slice(&row_re);
        im[u * cols..(u + 1) * cols].copy_from_slice(&row_im);
    }

    // transform each column (over u)
    let mut out = RealMatrix::zeros(rows, cols);
    for k in 0..cols {
        let mut col_re: Vec<f64> = (0..rows).map(|u| re[u * cols + k]).collect();
        let mut col_im: Vec<f64> = (0..rows).map(|u| im[u * cols + k]).collect();
        dft(&mut col_re, &mut col_im, 1.0);
        for j in 0..rows {
            out.set(j, k, col_re[j]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn naive_dft(re: &[f64], im: &[f64], sign: f64) -> (Vec<f64>, Vec<f64>) {
        let n = re.len();
        let mut out_re = vec![0.0; n];
        let mut out_im = vec![0.0; n];
        for k in 0..n {
            for t in 0..n {
                let angle = sign * 2.0 * PI * (k * t) as f64 / n as f64;
                let (c, s) = (cos(angle), sin(angle));
                out_re[k] += re[t] * c - im[t] * s;
                out_im[k] += re[t] * s + im[t] * c;
            }
        }
        (out_re, out_im)
    }

    #[test]
    fn matches_naive_dft_for_all_small_lengths() {
        let mut rng = Rng::from_seed(42);
        for n in 1..=20usize {
            for sign in [1.0, -1.0] {
                let re: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
                let im: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
                let (want_re, want_im) = naive_dft(&re, &im, sign);
                let mut got_re = re.clone();
                let mut got_im = im.clone();
                dft(&mut got_re, &mut got_im, sign);
                for k in 0..n {
                    assert!(
                        (got_re[k] - want_re[k]).abs() < 1e-10,
                        "n={n} sign={sign} k={k}: {} vs {}",
                        got_re[k],
                        want_re[k]
                    );
                    assert!((got_im[k] - want_im[k]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn forward_then_inverse_recovers_input() {
        let mut rng = Rng::from_seed(9);
        for n in [5usize, 8, 12, 16] {
            let re: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let im: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let mut r = re.clone();
            let mut i = im.clone();
            dft(&mut r, &mut i, -1.0);
            dft(&mut r, &mut i, 1.0);
            for k in 0..n {
                assert!((r[k] / n as f64 - re[k]).abs() < 1e-12);
                assert!((i[k] / n as f64 - im[k]).abs() < 1e-12);
            }
        }
    }
}
