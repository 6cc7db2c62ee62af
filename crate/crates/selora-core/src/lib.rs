//! Spectral-encoding low-rank adaptation.
//!
//! Low-rank adapter factors are materialized as inverse 2D Fourier or wavelet
//! transforms of sparse, learnable spectral matrices. This crate carries the
//! numerics: the transforms and their exact adjoints, sparse spectral
//! parameter storage, adapter forward/merge under several update schemas,
//! analytic reverse-mode gradients with a finite-difference oracle, AdamW
//! training on deterministic toy tasks, sweep harnesses, and subspace
//! diagnostics.
//!
//! The crate is `no_std`-compatible (it allocates but performs no IO); file
//! formats and the command-line front end live in the companion `selora-cli`
//! crate.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod adapter;
pub mod analysis;
pub mod autograd;
pub mod error;
mod fft;
pub mod mat;
pub mod rng;
pub mod spectral;
pub mod trainer;

pub use error::{Result, SeloraError};
pub use mat::RealMatrix;
