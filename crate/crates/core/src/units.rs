//! Shared domain types and the ideal-quantizer oracle.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A time quantity in femtoseconds.
///
/// `f64` keeps sub-attosecond resolution across ±10^9 fs, comfortably finer
/// than the 390.625 fs LSB of the nominal converter.
#[derive(Debug, Clone, Copy, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TimeFs(pub f64);

impl TimeFs {
    pub const ZERO: TimeFs = TimeFs(0.0);

    pub const fn fs(value: f64) -> Self {
        TimeFs(value)
    }

    pub fn ps(value: f64) -> Self {
        TimeFs(value * 1e3)
    }

    /// Period of a rate given in hertz.
    pub fn period_of(hz: f64) -> Self {
        TimeFs(1e15 / hz)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn abs(self) -> Self {
        TimeFs(self.0.abs())
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

impl fmt::Display for TimeFs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} fs", self.0)
    }
}

impl Add for TimeFs {
    type Output = TimeFs;
    fn add(self, rhs: TimeFs) -> TimeFs {
        TimeFs(self.0 + rhs.0)
    }
}

impl AddAssign for TimeFs {
    fn add_assign(&mut self, rhs: TimeFs) {
        self.0 += rhs.0;
    }
}

impl Sub for TimeFs {
    type Output = TimeFs;
    fn sub(self, rhs: TimeFs) -> TimeFs {
        TimeFs(self.0 - rhs.0)
    }
}

impl SubAssign for TimeFs {
    fn sub_assign(&mut self, rhs: TimeFs) {
        self.0 -= rhs.0;
    }
}

impl Neg for TimeFs {
    type Output = TimeFs;
    fn neg(self) -> TimeFs {
        TimeFs(-self.0)
    }
}

impl Mul<f64> for TimeFs {
    type Output = TimeFs;
    fn mul(self, rhs: f64) -> TimeFs {
        TimeFs(self.0 * rhs)
    }
}

impl Div<f64> for TimeFs {
    type Output = TimeFs;
    fn div(self, rhs: f64) -> TimeFs {
        TimeFs(self.0 / rhs)
    }
}

/// Edge polarity carrying a sample. Even sample indices ride the rising edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Rising,
    Falling,
}

impl Polarity {
    pub const BOTH: [Polarity; 2] = [Polarity::Rising, Polarity::Falling];

    pub fn for_index(sample_index: u64) -> Self {
        if sample_index.is_multiple_of(2) {
            Polarity::Rising
        } else {
            Polarity::Falling
        }
    }

    pub fn other(self) -> Self {
        match self {
            Polarity::Rising => Polarity::Falling,
            Polarity::Falling => Polarity::Rising,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Rising => "rising",
            Polarity::Falling => "falling",
        }
    }
}

/// The P-side and N-side edges of one polarity, carrying one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgePair {
    pub t_p: TimeFs,
    pub t_n: TimeFs,
    pub polarity: Polarity,
    pub sample_index: u64,
}

impl EdgePair {
    /// Builds a pair whose time difference `t_p - t_n` is `dt`, with the
    /// polarity implied by the sample index.
    pub fn from_dt(dt: TimeFs, sample_index: u64) -> Self {
        EdgePair {
            t_p: dt,
            t_n: TimeFs::ZERO,
            polarity: Polarity::for_index(sample_index),
            sample_index,
        }
    }

    pub fn dt(&self) -> TimeFs {
        self.t_p - self.t_n
    }
}

/// A sampled differential input, normalized so full scale is `diff ∈ [-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampledInput {
    pub v_sh_p: f64,
    pub v_sh_n: f64,
}

impl SampledInput {
    /// Zero common-mode split of a differential value.
    pub fn from_diff(diff: f64) -> Self {
        SampledInput {
            v_sh_p: 0.5 * diff,
            v_sh_n: -0.5 * diff,
        }
    }

    pub fn diff(&self) -> f64 {
        self.v_sh_p - self.v_sh_n
    }
}

/// The quantities of the quantization-period constraint `T_S ≥ T_FS/2 + T_M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingBudget {
    pub t_s: TimeFs,
    pub t_fs: TimeFs,
    pub t_m: TimeFs,
    /// Portion of `t_m` spent on reset. Dual-edge operation removes it.
    pub t_reset: TimeFs,
}

impl TimingBudget {
    pub fn validate(&self) -> Result<()> {
        for (name, t) in [
            ("t_s", self.t_s),
            ("t_fs", self.t_fs),
            ("t_m", self.t_m),
            ("t_reset", self.t_reset),
        ] {
            if !t.is_finite() || t.0 < 0.0 {
                return Err(Error::Config {
                    field: "timing",
                    reason: format!("{name} must be finite and non-negative, got {}", t.0),
                });
            }
        }
        if self.t_reset > self.t_m {
            return Err(Error::config("timing", "t_reset exceeds t_m"));
        }
        Ok(())
    }

    /// Effective minimum pulse width: reset-free operation drops the reset share.
    pub fn effective_t_m(&self, reset_free: bool) -> TimeFs {
        if reset_free {
            self.t_m - self.t_reset
        } else {
            self.t_m
        }
    }

    /// Shortest sample period satisfying the constraint.
    pub fn min_period(&self, reset_free: bool) -> TimeFs {
        self.t_fs / 2.0 + self.effective_t_m(reset_free)
    }
}

/// Checks `t_s ≥ t_fs/2 + t_m`, with `t_m - t_reset` in reset-free mode.
pub fn timing_feasible(budget: &TimingBudget, reset_free: bool) -> bool {
    budget.t_s >= budget.min_period(reset_free)
}

fn check_quantizer_args(t_fs: TimeFs, n_bits: u32) -> Result<()> {
    if !(1..=16).contains(&n_bits) {
        return Err(Error::config(
            "n_bits",
            format!("must be in [1, 16], got {n_bits}"),
        ));
    }
    if !(t_fs.0 > 0.0) || !t_fs.is_finite() {
        return Err(Error::config(
            "t_fs",
            format!("must be positive, got {}", t_fs.0),
        ));
    }
    Ok(())
}

/// Time resolution: `t_fs / 2^n_bits`.
pub fn t_lsb(t_fs: TimeFs, n_bits: u32) -> Result<TimeFs> {
    check_quantizer_args(t_fs, n_bits)?;
    Ok(t_fs / (1u32 << n_bits) as f64)
}

/// Ideal mid-rise quantizer over `[-t_fs/2, t_fs/2]`.
///
/// Exact code boundaries resolve upward, so `dt = 0` maps to `2^(n-1)`.
pub fn ideal_quantize(dt: TimeFs, t_fs: TimeFs, n_bits: u32) -> Result<u32> {
    let lsb = t_lsb(t_fs, n_bits)?;
    let max = (1i64 << n_bits) - 1;
    let code = ((dt.0 + t_fs.0 / 2.0) / lsb.0).floor();
    if code.is_nan() {
        return Err(Error::config("dt", "not a number"));
    }
    Ok((code.clamp(0.0, max as f64)) as u32)
}
