//! Behavioral, event-driven model of a dual-edge reset-free time-domain ADC.
//!
//! The signal chain is a dual-edge voltage-to-time converter ([`vtc`]) feeding
//! an 8-bit dual-edge asynchronous pipelined SAR time-to-digital converter
//! ([`tdc`]). Both edge polarities of the pulse pair carry a sample, so the
//! chain never spends time on an explicit reset. Around the chain sit a
//! foreground calibration engine ([`calib`]) and the measurement maths used
//! to characterize it ([`analysis`]).
//!
//! All times are [`TimeFs`] (femtoseconds). All randomness flows through
//! [`RngStream`], so any experiment is reproducible bit-for-bit from its seed,
//! whether or not the `parallel` feature is enabled.

// `!(x > 0.0)` style checks are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adc;
pub mod analysis;
pub mod calib;
pub mod error;
pub mod par;
pub mod rng;
pub mod signal;
pub mod tdc;
pub mod units;
pub mod vtc;

pub use adc::AdcConfig;
pub use error::{Error, Result};
pub use rng::RngStream;
pub use units::{
    ideal_quantize, t_lsb, timing_feasible, EdgePair, Polarity, SampledInput, TimeFs, TimingBudget,
};

/// Resolution of the modeled converter.
pub const N_BITS: usize = 8;

/// Number of output codes, `2^N_BITS`.
pub const N_CODES: usize = 1 << N_BITS;
