//! Implicit delta method (IDM) for epistemic uncertainty of evaluations of
//! maximum-likelihood fits.
//!
//! The variance of `ψ(θ̂ₙ)` is read off from how far `ψ` moves when the
//! training objective is nudged by `+λψ(θ)`:
//! `V̂ = (ψ(θ̂ₙ(λ)) - ψ(θ̂ₙ)) / λ`. No Hessian, Jacobian or resampling is
//! needed; two fits suffice. The crate also carries the explicit delta
//! method, the bootstrap and ground-truth simulation as reference oracles,
//! and the synthetic data-generating processes used to check calibration.
//!
//! The crate is `no_std` with `alloc`; file formats, the CLI and parallel
//! replicate scheduling live in `idm-harness`.

#![no_std]

extern crate alloc;

pub mod baselines;
pub mod error;
pub mod idm;
pub mod linalg;
pub mod math;
pub mod model;
pub mod optim;
pub mod rng;
pub mod synthdata;

pub use error::{IdmError, Result};
pub use model::{Dataset, Family, LikelihoodModel, ModelSpec, ParamVec, PredictorKind, PredictorSpec};
