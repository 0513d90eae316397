//! Dual-edge voltage-to-time converter.
//!
//! One capacitive node is charged and discharged into a quasi-triangular
//! waveform. The up-ramp produces the rising-edge pair, the down-ramp the
//! falling-edge pair, with no dead time in between. The ramp expands
//! (`v·(1 + α·v²)`); a compressive comparator stage with a tanh-shaped
//! characteristic pre-distorts the input to cancel it.
//!
//! The differential transfer is `dt = slope · G(diff)` with
//! `G = expand ∘ compress` (or `expand` alone with compensation disabled).
//! Each side crosses at `h(v) = G(2v)/2`, so zero-common-mode halves
//! reproduce `G(diff)` exactly.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{EdgePair, Polarity, SampledInput, TimeFs};
use crate::N_BITS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VtcConfig {
    /// Up-ramp crossing gain, fs per unit of normalized input.
    pub slope_up: f64,
    /// Down-ramp crossing gain, fs per unit of normalized input.
    pub slope_down: f64,
    /// Cubic expanding coefficient of the ramp.
    pub expand_alpha: f64,
    pub compensated: bool,
    pub comp_gain: f64,
    /// Input level (normalized) where the compression sets in.
    pub comp_knee: f64,
    /// Linearity trim; scales the knee by `exp(comp_bias_1)`.
    pub comp_bias_1: f64,
    /// Gain trim; scales the gain by `exp(comp_bias_2)`.
    pub comp_bias_2: f64,
    pub dead_time: TimeFs,
    /// Full-scale peak-to-peak output the converter is designed for.
    pub t_fs_target: TimeFs,
    /// Per-side crossing-time noise.
    pub noise_sigma: TimeFs,
}

impl Default for VtcConfig {
    fn default() -> Self {
        Self::nominal()
    }
}

impl VtcConfig {
    /// Design-point model: expanding ramp with the compressive stage enabled.
    pub fn nominal() -> Self {
        VtcConfig {
            slope_up: 28_000.0,
            slope_down: 28_000.0,
            expand_alpha: 1.2,
            compensated: true,
            comp_gain: 1.41,
            comp_knee: 0.725,
            comp_bias_1: 0.0,
            comp_bias_2: 0.0,
            dead_time: TimeFs::ZERO,
            t_fs_target: TimeFs(100_000.0),
            noise_sigma: TimeFs::ZERO,
        }
    }

    /// Perfectly linear converter mapping full scale onto `±t_fs_target/2`.
    pub fn ideal() -> Self {
        VtcConfig {
            slope_up: 50_000.0,
            slope_down: 50_000.0,
            expand_alpha: 0.0,
            compensated: false,
            ..Self::nominal()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.slope_up > 0.0) || !(self.slope_down > 0.0) {
            return Err(Error::config("vtc.slope", "ramp slopes must be positive"));
        }
        if !(self.expand_alpha >= 0.0) {
            return Err(Error::config("vtc.expand_alpha", "must be non-negative"));
        }
        if !(self.comp_knee > 0.0) || !(self.comp_gain > 0.0) {
            return Err(Error::config("vtc.comp", "knee and gain must be positive"));
        }
        if !self.comp_bias_1.is_finite() || !self.comp_bias_2.is_finite() {
            return Err(Error::config("vtc.comp_bias", "must be finite"));
        }
        if !(self.dead_time.0 >= 0.0) {
            return Err(Error::config("vtc.dead_time", "must be non-negative"));
        }
        if !(self.t_fs_target.0 > 0.0) {
            return Err(Error::config("vtc.t_fs_target", "must be positive"));
        }
        if !(self.noise_sigma.0 >= 0.0) {
            return Err(Error::config("vtc.noise_sigma", "must be non-negative"));
        }
        Ok(())
    }

    pub fn slope(&self, polarity: Polarity) -> f64 {
        match polarity {
            Polarity::Rising => self.slope_up,
            Polarity::Falling => self.slope_down,
        }
    }

    fn expand(&self, v: f64) -> f64 {
        v * (1.0 + self.expand_alpha * v * v)
    }

    fn compress(&self, v: f64) -> f64 {
        let knee = self.comp_knee * self.comp_bias_1.exp();
        let gain = self.comp_gain * self.comp_bias_2.exp();
        gain * knee * (v / knee).tanh()
    }

    /// Dimensionless differential transfer `G(diff)`.
    pub fn transfer(&self, diff: f64, compensated: bool) -> f64 {
        if compensated {
            self.expand(self.compress(diff))
        } else {
            self.expand(diff)
        }
    }

    fn side(&self, v: f64) -> f64 {
        0.5 * self.transfer(2.0 * v, self.compensated)
    }

    /// Noiseless `t_p - t_n` for a differential input, identical for both
    /// polarities apart from the slope.
    pub fn nominal_dt(&self, diff: f64, polarity: Polarity) -> TimeFs {
        TimeFs(self.slope(polarity) * self.transfer(diff, self.compensated))
    }

    /// Converts one held sample into the edge pair of the given polarity.
    ///
    /// The down-ramp reaches the higher side first; the outputs are swapped
    /// for falling edges so `t_p - t_n` carries the same sign on both banks.
    /// Inputs beyond full scale yield [`Error::RangeExceeded`] with the
    /// conversion of the clipped input.
    pub fn convert<R: Rng + ?Sized>(
        &self,
        sample: &SampledInput,
        polarity: Polarity,
        sample_index: u64,
        rng: &mut R,
    ) -> Result<EdgePair> {
        let diff = sample.diff();
        if diff.abs() > 1.0 || !diff.is_finite() {
            let clipped = clip(sample);
            let pair = self.crossings(&clipped, polarity, sample_index, rng);
            return Err(Error::RangeExceeded {
                diff,
                clipped: pair,
            });
        }
        Ok(self.crossings(sample, polarity, sample_index, rng))
    }

    fn crossings<R: Rng + ?Sized>(
        &self,
        sample: &SampledInput,
        polarity: Polarity,
        sample_index: u64,
        rng: &mut R,
    ) -> EdgePair {
        let slope = self.slope(polarity);
        let top = self.side(1.0);
        let (hp, hn) = (self.side(sample.v_sh_p), self.side(sample.v_sh_n));
        let (mut t_p, mut t_n) = match polarity {
            Polarity::Rising => (slope * (top + hp), slope * (top + hn)),
            // raw down-ramp crossings are (top - hp, top - hn); swap sides
            Polarity::Falling => (slope * (top - hn), slope * (top - hp)),
        };
        if self.noise_sigma.0 > 0.0 {
            let normal = Normal::new(0.0, self.noise_sigma.0).expect("sigma validated");
            t_p += normal.sample(rng);
            t_n += normal.sample(rng);
        }
        EdgePair {
            t_p: self.dead_time + TimeFs(t_p),
            t_n: self.dead_time + TimeFs(t_n),
            polarity,
            sample_index,
        }
    }
}

fn clip(sample: &SampledInput) -> SampledInput {
    let diff = sample.diff();
    let cm = 0.5 * (sample.v_sh_p + sample.v_sh_n);
    let d = if diff.is_nan() {
        0.0
    } else {
        diff.clamp(-1.0, 1.0)
    };
    SampledInput {
        v_sh_p: cm + 0.5 * d,
        v_sh_n: cm - 0.5 * d,
    }
}

/// Noiseless transfer characteristic over a uniform grid of `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VtcCurve {
    pub inputs: Vec<f64>,
    pub dt_out: Vec<TimeFs>,
    /// Peak deviation from the endpoint line over `t_fs_target`.
    pub nl: f64,
    /// Output half-width of the widest symmetric input interval whose
    /// deviation from the endpoint line stays within one LSB.
    pub linear_range: TimeFs,
    /// The same interval as a normalized input half-width.
    pub linear_input: f64,
}

pub fn transfer_curve(cfg: &VtcConfig, n_points: usize, compensated: bool) -> Result<VtcCurve> {
    if n_points < 8 {
        return Err(Error::config("n_points", "need at least 8 points"));
    }
    cfg.validate()?;
    let cfg = VtcConfig {
        compensated,
        noise_sigma: TimeFs::ZERO,
        ..*cfg
    };
    let last = (n_points - 1) as f64;
    let inputs: Vec<f64> = (0..n_points)
        .map(|i| -1.0 + 2.0 * i as f64 / last)
        .collect();
    // noise is zeroed above, the generator is never drawn from
    let mut rng = crate::RngStream::new(0).rng();
    let dt_out: Vec<TimeFs> = inputs
        .iter()
        .map(|&d| {
            cfg.crossings(&SampledInput::from_diff(d), Polarity::Rising, 0, &mut rng)
                .dt()
        })
        .collect();

    let (d0, d1) = (dt_out[0].0, dt_out[n_points - 1].0);
    let deviation: Vec<f64> = inputs
        .iter()
        .zip(&dt_out)
        .map(|(&v, dt)| (dt.0 - (d0 + (d1 - d0) * (v + 1.0) / 2.0)).abs())
        .collect();
    let nl = deviation.iter().cloned().fold(0.0, f64::max) / cfg.t_fs_target.0;

    let lsb = cfg.t_fs_target.0 / (1u32 << N_BITS) as f64;
    let mut order: Vec<usize> = (0..n_points).collect();
    order.sort_by(|&a, &b| inputs[a].abs().total_cmp(&inputs[b].abs()));
    let mut linear_input = 0.0;
    let mut linear_range = TimeFs::ZERO;
    for (pos, &i) in order.iter().enumerate() {
        if deviation[i] > lsb {
            break;
        }
        // only extend the interval once both signs at this magnitude pass
        let mag = inputs[i].abs();
        let next_same = order
            .get(pos + 1)
            .is_some_and(|&j| (inputs[j].abs() - mag).abs() < 1e-12);
        if !next_same {
            linear_input = mag;
            linear_range = TimeFs(
                order[..=pos]
                    .iter()
                    .filter(|&&j| (inputs[j].abs() - mag).abs() < 1e-12)
                    .map(|&j| dt_out[j].0.abs())
                    .fold(f64::INFINITY, f64::min),
            );
        }
    }

    Ok(VtcCurve {
        inputs,
        dt_out,
        nl,
        linear_range,
        linear_input,
    })
}

/// Retunes the compensation trims for the configured ramp: `comp_bias_1` is
/// searched for minimum NL while `comp_bias_2` keeps full scale on
/// `±t_fs_target/2`.
pub fn tune_compensation(cfg: &VtcConfig, n_points: usize) -> Result<VtcConfig> {
    cfg.validate()?;
    let target = cfg.t_fs_target.0 / 2.0;
    let with_bias1 = |b1: f64| -> VtcConfig {
        let mut c = VtcConfig {
            compensated: true,
            comp_bias_1: b1,
            noise_sigma: TimeFs::ZERO,
            ..*cfg
        };
        // full-scale output is increasing in the gain trim
        let (mut lo, mut hi) = (-8.0f64, 8.0f64);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            c.comp_bias_2 = mid;
            if c.nominal_dt(1.0, Polarity::Rising).0 < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        c.comp_bias_2 = 0.5 * (lo + hi);
        c
    };
    let nl_of = |b1: f64| -> f64 {
        transfer_curve(&with_bias1(b1), n_points, true)
            .map(|c| c.nl)
            .unwrap_or(f64::INFINITY)
    };

    let (lo, hi, steps) = (-3.0, 8.0, 220);
    let step = (hi - lo) / steps as f64;
    let (mut best, mut best_nl) = (lo, f64::INFINITY);
    for i in 0..=steps {
        let b = lo + step * i as f64;
        let nl = nl_of(b);
        if nl < best_nl {
            (best, best_nl) = (b, nl);
        }
    }
    // golden-section refinement around the coarse optimum
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (best - step, best + step);
    for _ in 0..60 {
        let c = b - inv_phi * (b - a);
        let d = a + inv_phi * (b - a);
        if nl_of(c) < nl_of(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let refined = 0.5 * (a + b);
    let chosen = if nl_of(refined) <= best_nl {
        refined
    } else {
        best
    };
    Ok(VtcConfig {
        noise_sigma: cfg.noise_sigma,
        ..with_bias1(chosen)
    })
}
