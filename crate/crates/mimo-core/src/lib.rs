//! Link-level building blocks for coded MIMO receivers.
//!
//! The crate covers the full chain: complex matrix algebra and seeded
//! random streams ([`matrix`], [`rng`]), short polar codes with exact
//! codebook decoding ([`polar`]), BPSK/QPSK mapping ([`modem`]), packet
//! assembly and flat-fading channel application ([`channel`]), the
//! model-based receivers ([`receivers`]), and a from-scratch MLP receiver
//! trained per channel estimate ([`dnn`]).
//!
//! Everything here is `no_std` + `alloc`; file formats, CLI, and the
//! Monte-Carlo harness live in the companion `mimo-lab` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

use alloc::string::String;
use core::fmt;

pub mod channel;
pub mod dnn;
pub mod matrix;
pub mod modem;
pub mod polar;
pub mod receivers;
pub mod rng;

/// Saturation bound for log-likelihood ratios.
///
/// Convention throughout the crate: `LLR = ln p(bit=0) / p(bit=1)`,
/// positive values favor bit 0. 40 is far beyond any probability ratio
/// distinguishable in double precision, so clamping never changes a
/// hard decision.
pub const LLR_MAX: f64 = 40.0;

/// Clamp an LLR into `[-LLR_MAX, +LLR_MAX]`, mapping NaN to 0.
#[inline]
pub fn clamp_llr(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else if x > LLR_MAX {
        LLR_MAX
    } else if x < -LLR_MAX {
        -LLR_MAX
    } else {
        x
    }
}

/// Errors shared by every module in the crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument violated a precondition (shape, length, range).
    InvalidArgument(String),
    /// A matrix was singular or too ill-conditioned to factor.
    SingularMatrix(String),
    /// An enumeration guard was exceeded (codebook or candidate space).
    CapacityExceeded(String),
    /// A serialized model or file did not match the expected layout.
    Format(String),
    /// Training diverged; carries (epoch, loss, max |gradient|).
    NonFiniteLoss {
        epoch: usize,
        loss: f64,
        max_abs_grad: f64,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::SingularMatrix(msg) => write!(f, "singular matrix: {msg}"),
            Error::CapacityExceeded(msg) => write!(f, "capacity exceeded: {msg}"),
            Error::Format(msg) => write!(f, "format error: {msg}"),
            Error::NonFiniteLoss {
                epoch,
                loss,
                max_abs_grad,
            } => write!(
                f,
                "non-finite loss at epoch {epoch}: loss={loss}, max|grad|={max_abs_grad}"
            ),
        }
    }
}

impl core::error::Error for Error {}

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;
