//! Self-contained deterministic PRNG.
//!
//! Everything random in this crate flows through [`Rng`] (xoshiro256++ seeded
//! via splitmix64) so that runs are bit-reproducible across platforms. No
//! platform entropy is ever consulted.

use libm::{cos, log, sin, sqrt};

const TWO_PI: f64 = 2.0 * core::f64::consts::PI;

/// splitmix64 step; also used for deterministic seed derivation.
#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with a stream tag and two shape parameters into a new
/// seed. Used to give each consumer (index sets, value draws, batches, ...)
/// an independent deterministic stream.
pub fn derive_seed(base: u64, tag: u64, a: u64, b: u64) -> u64 {
    let mut s = base;
    let mut out = splitmix64(&mut s);
    s ^= tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    out ^= splitmix64(&mut s);
    s ^= a.wrapping_add(0x6a09_e667_f3bc_c909);
    out ^= splitmix64(&mut s);
    s ^= b.wrapping_add(0xbb67_ae85_84ca_a73b);
    out ^ splitmix64(&mut s)
}

/// xoshiro256++ stream with a Box-Muller normal sampler.
#[derive(Debug, Clone)]
pub struct Rng {
    s: [u64; 4],
    spare_normal: Option<f64>,
}

impl Rng {
    pub fn from_seed(seed: u64) -> Self {
        let mut sm = seed;
        let s = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        Rng {
            s,
            spare_normal: None,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.s;
        let result = s[0].wrapping_add(s[3]).rotate_left(23).wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `(0, 1]`, safe as a log argument.
    #[inline]
    fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Unbiased integer in `[0, bound)` via widening-multiply rejection.
    pub fn below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        loop {
            let x = self.next_u64();
            let m = (x as u128).wrapping_mul(bound as u128);
            let low = m as u64;
            if low >= bound {
                return (m >> 64) as u64;
            }
            // reject only inside the biased remainder zone
            let threshold = bound.wrapping_neg() % bound;
            if low >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    /// Standard normal via Box-Muller; pairs are cached.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform_open();
        let u2 = self.uniform();
        let radius = sqrt(-2.0 * log(u1));
        let angle = TWO_PI * u2;
        self.spare_normal = Some(radius * sin(angle));
        radius * cos(angle)
    }

    /// Normal with the given standard deviation.
    #[inline]
    pub fn normal_scaled(&mut self, std_dev: f64) -> f64 {
        self.normal() * std_dev
    }
}
