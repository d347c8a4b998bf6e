//! Learnable Gabor audio frontend with a grouped, strided fast path.
//!
//! The crate implements two functionally equivalent pipelines that turn raw
//! 16 kHz audio into a 40-band time-frequency representation at 100 frames
//! per second:
//!
//! * **`leaf`** — the dense reference: every band convolves the signal with a
//!   full-length complex Gabor filter at stride 1, takes the squared modulus,
//!   and applies Gaussian lowpass pooling subsampled by the hop.
//! * **`eleaf`** — the efficient variant: filters are truncated proportionally
//!   to their envelope width, convolved at the largest stride their band
//!   group tolerates, and pooled with a compensated (rescaled, shortened)
//!   Gaussian window so the output approximates the reference to a small
//!   relative error at a fraction of the arithmetic.
//!
//! On top of the frontends sit two compression heads (PCEN and
//! log/median/temporal-batch-norm), reverse-mode gradients for every
//! learnable parameter with a finite-difference verification harness, an
//! equivalence oracle between the two frontends, and a throughput benchmark.
//!
//! Modules mirror the processing stages: [`filterbank`] (parameters, kernel
//! generation, group planning), [`pipeline`] (convolution/modulus/pooling),
//! [`compression`] (PCEN and L-M-TBN heads), [`gradients`] (backward pass and
//! gradient checking), [`harness`] (equivalence and benchmarks), [`io`]
//! (WAV/feature-file/PGM), and [`config`] (run configuration and assembly).

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::AddAssign;

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub mod compression;
pub mod config;
pub mod error;
pub mod filterbank;
pub mod gradients;
pub mod harness;
pub mod io;
pub mod pipeline;

pub use config::{Frontend, Head, ModelParams, RunConfig};
pub use error::{Error, Result};

/// Floating-point element type of audio and feature tensors.
///
/// Implemented for `f32` (benchmark mode) and `f64` (test/oracle mode).
/// Learnable parameters are always held in `f64`; this trait only selects the
/// precision signals and features are processed in.
pub trait Sample:
    Float + FromPrimitive + ToPrimitive + AddAssign + Sum + Debug + Send + Sync + 'static
{
    /// True for the 8-byte variant; selects the feature-file payload width.
    const DOUBLE: bool;
}

impl Sample for f32 {
    const DOUBLE: bool = false;
}

impl Sample for f64 {
    const DOUBLE: bool = true;
}

/// Shorthand for casting an `f64` constant or parameter into the active
/// sample type. Infallible for finite inputs on the two supported types.
#[inline]
pub(crate) fn cast<S: Sample>(x: f64) -> S {
    S::from_f64(x).expect("f64 value representable in sample type")
}
