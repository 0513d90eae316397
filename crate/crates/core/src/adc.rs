//! The full converter: VTC front end feeding the dual-edge TDC.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::signal::{sample_signal, SignalSpec};
use crate::tdc::{convert_pair, ConversionStream, TdcConfig};
use crate::units::{Polarity, SampledInput, TimeFs, TimingBudget};
use crate::vtc::VtcConfig;

const VTC_STREAM: u64 = 0x5654_4300;
const TDC_STREAM: u64 = 0x5444_4300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdcConfig {
    pub vtc: VtcConfig,
    pub tdc: TdcConfig,
    /// Sample rate in samples per second; each edge carries one sample.
    pub f_s: f64,
    pub n_samples: usize,
    /// Reset share of the minimum pulse width a single-edge design would pay.
    pub t_reset: TimeFs,
}

impl Default for AdcConfig {
    fn default() -> Self {
        Self::nominal()
    }
}

impl AdcConfig {
    pub fn nominal() -> Self {
        AdcConfig {
            vtc: VtcConfig::nominal(),
            tdc: TdcConfig::nominal(),
            f_s: 12.5e9,
            n_samples: 4096,
            t_reset: TimeFs(20_000.0),
        }
    }

    /// Linear VTC, noiseless TDC without mismatch.
    pub fn ideal() -> Self {
        AdcConfig {
            vtc: VtcConfig::ideal(),
            tdc: TdcConfig::ideal(),
            ..Self::nominal()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.vtc.validate()?;
        self.tdc.validate()?;
        if !(self.f_s > 0.0) || !self.f_s.is_finite() {
            return Err(Error::config("adc.f_s", "must be positive"));
        }
        if self.n_samples == 0 {
            return Err(Error::config("adc.n_samples", "must be positive"));
        }
        self.timing_budget().validate()
    }

    pub fn sample_period(&self) -> TimeFs {
        TimeFs::period_of(self.f_s)
    }

    /// Quantization-period budget. The comparator's forced-decision latency
    /// stands in for the minimum pulse width.
    pub fn timing_budget(&self) -> TimingBudget {
        TimingBudget {
            t_s: self.sample_period(),
            t_fs: self.tdc.t_fs,
            t_m: self.tdc.meta_latency_bound,
            t_reset: self.t_reset,
        }
    }

    /// Converts held samples in ping-pong order: sample `i` rides the rising
    /// edge when `i` is even and the falling edge when odd.
    ///
    /// Over-range inputs are clipped and flagged rather than rejected.
    pub fn convert_samples(
        &self,
        samples: &[SampledInput],
        rng: &RngStream,
    ) -> Result<ConversionStream> {
        self.convert_indexed(samples, 0, rng)
    }

    /// Like [`convert_samples`](Self::convert_samples) with sample indices
    /// starting at `first_index`.
    pub fn convert_indexed(
        &self,
        samples: &[SampledInput],
        first_index: u64,
        rng: &RngStream,
    ) -> Result<ConversionStream> {
        self.validate()?;
        let vtc_rng = rng.derive(VTC_STREAM);
        let tdc_rng = rng.derive(TDC_STREAM);
        let records = crate::par::map_range(samples.len(), |i| {
            let index = first_index + i as u64;
            let polarity = Polarity::for_index(index);
            let mut r = vtc_rng.derive(index).rng();
            let (pair, clipped) = match self.vtc.convert(&samples[i], polarity, index, &mut r) {
                Ok(p) => (p, false),
                Err(Error::RangeExceeded { clipped, .. }) => (clipped, true),
                Err(e) => unreachable!("vtc convert: {e}"),
            };
            let mut rec = convert_pair(&pair, &self.tdc, &mut tdc_rng.derive(index).rng());
            rec.out_of_range |= clipped;
            rec
        });
        Ok(ConversionStream { records })
    }

    /// Generates `n_samples` of the stimulus and converts them.
    pub fn simulate(&self, stimulus: &SignalSpec, rng: &RngStream) -> Result<ConversionStream> {
        let samples = sample_signal(stimulus, self.n_samples)?;
        self.convert_samples(&samples, rng)
    }
}
