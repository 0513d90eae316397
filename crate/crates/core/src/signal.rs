//! Stimulus generation: coherent sines, full-scale ramps and DC levels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::SampledInput;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SignalSpec {
    /// `amplitude · sin(2π·bin·i/n + phase)`; `bin` must be coprime with `n`.
    Sine {
        amplitude: f64,
        bin: u64,
        phase: f64,
    },
    /// Uniform, strictly increasing sweep from -1 to +1 inclusive.
    Ramp,
    Dc {
        level: f64,
    },
}

impl SignalSpec {
    pub fn full_scale_sine(bin: u64) -> Self {
        SignalSpec::Sine {
            amplitude: 1.0,
            bin,
            phase: 0.0,
        }
    }

    /// Tone frequency of a coherent sine sampled at `f_s` over `n` points.
    pub fn tone_frequency(&self, f_s: f64, n: usize) -> Option<f64> {
        match *self {
            SignalSpec::Sine { bin, .. } => Some(bin as f64 * f_s / n as f64),
            _ => None,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match *self {
            SignalSpec::Sine {
                amplitude,
                bin,
                phase,
            } => {
                if !(0.0..=1.0).contains(&amplitude) {
                    return Err(Error::config(
                        "amplitude",
                        format!("must lie in [0, 1] (full scale), got {amplitude}"),
                    ));
                }
                if !phase.is_finite() {
                    return Err(Error::config("phase", "must be finite"));
                }
                if bin == 0 || 2 * bin >= n as u64 {
                    return Err(Error::config(
                        "bin",
                        format!("must lie in (0, n/2) for n = {n}, got {bin}"),
                    ));
                }
                if gcd(bin, n as u64) != 1 {
                    return Err(Error::config(
                        "bin",
                        format!("{bin} is not coprime with record length {n}"),
                    ));
                }
            }
            SignalSpec::Ramp => {
                if n < 2 {
                    return Err(Error::config("n", "a ramp needs at least two samples"));
                }
            }
            SignalSpec::Dc { level } => {
                if !(-1.0..=1.0).contains(&level) {
                    return Err(Error::config(
                        "level",
                        format!("must lie in [-1, 1], got {level}"),
                    ));
                }
            }
        }
        Ok(())
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Generates `n` zero-common-mode differential samples.
pub fn sample_signal(spec: &SignalSpec, n: usize) -> Result<Vec<SampledInput>> {
    spec.validate(n)?;
    let diffs: Vec<f64> = match *spec {
        SignalSpec::Sine {
            amplitude,
            bin,
            phase,
        } => (0..n as u64)
            .map(|i| {
                // integer phase accumulation keeps every period exact
                let k = (bin * i) % n as u64;
                amplitude * (std::f64::consts::TAU * k as f64 / n as f64 + phase).sin()
            })
            .collect(),
        SignalSpec::Ramp => {
            let last = (n - 1) as f64;
            (0..n).map(|i| -1.0 + 2.0 * i as f64 / last).collect()
        }
        SignalSpec::Dc { level } => vec![level; n],
    };
    Ok(diffs.into_iter().map(SampledInput::from_diff).collect())
}
