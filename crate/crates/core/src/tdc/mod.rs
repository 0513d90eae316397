//! Dual-edge asynchronous pipelined SAR time-to-digital converter.
//!
//! Each of the eight stages compares the P and N edges of one polarity,
//! then delays the leading edge by the stage's ΔT so the residual
//! `Δ = t_p - t_n` shrinks by half the search space. Rising and falling
//! edges traverse the same chain but see independently tuned delays
//! (decoupled delay units plus shared conventional cells). Records of the
//! two polarities land in separate banks.
//!
//! The model is event-level: absolute edge times are propagated through the
//! chain, and every delay-element traversal adds its own Gaussian jitter.

mod stage;

pub use stage::{
    ddu_sweep, DduSetting, DduSweep, DduSweepRow, StageConfig, TuningSteps, CONV_INIT, CONV_MAX,
    DDU_INIT, DDU_MAX,
};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::rng::RngStream;
use crate::units::{EdgePair, Polarity, TimeFs};
use crate::N_BITS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TdcConfig {
    /// Stages 1..=8, MSB first.
    pub stages: Vec<StageConfig>,
    /// Full-scale peak-to-peak input interval.
    pub t_fs: TimeFs,
    /// Jitter added per delay-element traversal.
    pub jitter_sigma: TimeFs,
    /// Common propagation delay of one stage, seen by both edges.
    pub stage_delay: TimeFs,
    /// Inputs with `|Δ|` below this leave the comparator metastable.
    pub meta_window: TimeFs,
    /// Forces a deterministic `true` for metastable comparisons.
    pub meta_resolver: bool,
    /// Latency after which the resolver forces its decision.
    pub meta_latency_bound: TimeFs,
}

impl Default for TdcConfig {
    fn default() -> Self {
        Self::nominal()
    }
}

impl TdcConfig {
    pub fn with_steps(t_fs: TimeFs, steps: &TuningSteps) -> Self {
        TdcConfig {
            stages: (1..=N_BITS)
                .map(|i| StageConfig::nominal(i, t_fs, steps))
                .collect(),
            t_fs,
            jitter_sigma: TimeFs(20.0),
            stage_delay: TimeFs(8_000.0),
            meta_window: TimeFs(10.0),
            meta_resolver: true,
            meta_latency_bound: TimeFs(30_000.0),
        }
    }

    /// ±50 ps range with mild jitter and a resolved metastability window.
    pub fn nominal() -> Self {
        Self::with_steps(TimeFs(100_000.0), &TuningSteps::default())
    }

    /// No jitter, no metastability window, no mismatch.
    pub fn ideal() -> Self {
        TdcConfig {
            jitter_sigma: TimeFs::ZERO,
            meta_window: TimeFs::ZERO,
            ..Self::nominal()
        }
    }

    pub fn lsb(&self) -> TimeFs {
        self.t_fs / (1u32 << N_BITS) as f64
    }

    /// 1-based stage access.
    pub fn stage(&self, index: usize) -> &StageConfig {
        &self.stages[index - 1]
    }

    pub fn stage_mut(&mut self, index: usize) -> &mut StageConfig {
        &mut self.stages[index - 1]
    }

    /// Delay elements whose jitter reaches the last comparator: per ΔT stage,
    /// the common element on each side plus the selected ΔT path.
    pub fn jitter_elements(&self) -> usize {
        3 * (N_BITS - 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.len() != N_BITS {
            return Err(Error::config(
                "tdc.stages",
                format!("expected {N_BITS} stages, got {}", self.stages.len()),
            ));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if s.index != i + 1 {
                return Err(Error::config("tdc.stages", "stage indices must run 1..=8"));
            }
            s.validate()?;
        }
        if !(self.t_fs.0 > 0.0) || !self.t_fs.is_finite() {
            return Err(Error::config("tdc.t_fs", "must be positive"));
        }
        for (field, t) in [
            ("tdc.jitter_sigma", self.jitter_sigma),
            ("tdc.stage_delay", self.stage_delay),
            ("tdc.meta_window", self.meta_window),
            ("tdc.meta_latency_bound", self.meta_latency_bound),
        ] {
            if !(t.0 >= 0.0) || !t.is_finite() {
                return Err(Error::config(field, "must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

/// Outcome of one time comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    /// `true` when the P edge lags (`Δ ≥ 0`).
    pub bit: bool,
    pub metastable: bool,
}

/// Dual-edge time comparator with a metastability window.
///
/// Ties (`Δ = 0`) resolve to `true`, matching the upward tie of
/// [`crate::ideal_quantize`].
pub fn compare<R: Rng + ?Sized>(delta: TimeFs, cfg: &TdcConfig, rng: &mut R) -> Decision {
    if delta.0.abs() >= cfg.meta_window.0 {
        return Decision {
            bit: delta.0 >= 0.0,
            metastable: false,
        };
    }
    let bit = if cfg.meta_resolver {
        true
    } else {
        rng.random_bool(0.5)
    };
    Decision {
        bit,
        metastable: true,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversionRecord {
    pub code: u8,
    pub polarity: Polarity,
    /// MSB first.
    pub decisions: [bool; N_BITS],
    pub metastable_flags: [bool; N_BITS],
    /// `Δ_k` seen by each comparator.
    pub residuals: [TimeFs; N_BITS],
    pub sample_index: u64,
    /// `|Δ_1|` exceeded half the full scale; the code saturated.
    pub out_of_range: bool,
}

impl ConversionRecord {
    pub fn metastable_count(&self) -> usize {
        self.metastable_flags.iter().filter(|&&m| m).count()
    }
}

struct Jitter(Option<Normal<f64>>);

impl Jitter {
    fn new(sigma: TimeFs) -> Self {
        Jitter((sigma.0 > 0.0).then(|| Normal::new(0.0, sigma.0).expect("sigma validated")))
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> TimeFs {
        match &self.0 {
            Some(n) => TimeFs(n.sample(rng)),
            None => TimeFs::ZERO,
        }
    }
}

/// Runs the first `depth` comparisons. Bits past `depth` stay cleared.
fn run_chain<R: Rng + ?Sized>(
    pair: &EdgePair,
    cfg: &TdcConfig,
    rng: &mut R,
    depth: usize,
) -> ConversionRecord {
    let jitter = Jitter::new(cfg.jitter_sigma);
    let mut rec = ConversionRecord {
        code: 0,
        polarity: pair.polarity,
        decisions: [false; N_BITS],
        metastable_flags: [false; N_BITS],
        residuals: [TimeFs::ZERO; N_BITS],
        sample_index: pair.sample_index,
        out_of_range: pair.dt().0.abs() > cfg.t_fs.0 / 2.0,
    };
    let (mut t_p, mut t_n) = (pair.t_p, pair.t_n);
    for k in 0..depth {
        let delta = t_p - t_n;
        let d = compare(delta, cfg, rng);
        rec.residuals[k] = delta;
        rec.decisions[k] = d.bit;
        rec.metastable_flags[k] = d.metastable;
        if d.bit {
            rec.code |= 1 << (N_BITS - 1 - k);
        }
        if k + 1 == N_BITS || k + 1 == depth {
            break;
        }
        t_p += cfg.stage_delay + jitter.draw(rng);
        t_n += cfg.stage_delay + jitter.draw(rng);
        // the leading edge takes the ΔT path
        let delay = cfg.stages[k].effective_dt(pair.polarity) + jitter.draw(rng);
        if d.bit {
            t_n += delay;
        } else {
            t_p += delay;
        }
    }
    rec
}

/// Quantizes one edge pair using the delays of its polarity.
pub fn convert_pair<R: Rng + ?Sized>(
    pair: &EdgePair,
    cfg: &TdcConfig,
    rng: &mut R,
) -> ConversionRecord {
    run_chain(pair, cfg, rng, N_BITS)
}

/// Top `depth` bits of the conversion, only simulating the stages needed.
pub fn convert_pair_truncated<R: Rng + ?Sized>(
    pair: &EdgePair,
    cfg: &TdcConfig,
    rng: &mut R,
    depth: usize,
) -> u8 {
    assert!((1..=N_BITS).contains(&depth), "depth {depth} out of range");
    run_chain(pair, cfg, rng, depth).code >> (N_BITS - depth)
}

/// Interleaved conversion records, with per-bank views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversionStream {
    pub records: Vec<ConversionRecord>,
}

impl ConversionStream {
    pub fn codes(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.code).collect()
    }

    /// The flip-flop bank of one polarity, in sample order.
    pub fn bank(&self, polarity: Polarity) -> impl Iterator<Item = &ConversionRecord> + '_ {
        self.records.iter().filter(move |r| r.polarity == polarity)
    }

    pub fn bank_codes(&self, polarity: Polarity) -> Vec<u8> {
        self.bank(polarity).map(|r| r.code).collect()
    }

    pub fn out_of_range_count(&self) -> usize {
        self.records.iter().filter(|r| r.out_of_range).count()
    }

    pub fn metastable_count(&self) -> usize {
        self.records.iter().map(|r| r.metastable_count()).sum()
    }
}

/// Checks that polarities alternate with sample parity.
pub fn check_polarity_sequence(pairs: &[EdgePair]) -> Result<()> {
    for p in pairs {
        let expected = Polarity::for_index(p.sample_index);
        if p.polarity != expected {
            return Err(Error::PolaritySequence {
                sample_index: p.sample_index,
                expected,
                found: p.polarity,
            });
        }
    }
    Ok(())
}

/// Converts a ping-pong sequence of edge pairs. Sample `i` draws its noise
/// from `rng.derive(i)`, so the result is independent of scheduling.
pub fn convert_stream(
    pairs: &[EdgePair],
    cfg: &TdcConfig,
    rng: &RngStream,
) -> Result<ConversionStream> {
    cfg.validate()?;
    check_polarity_sequence(pairs)?;
    let records = par::map_slice(pairs, |p| {
        let mut r = rng.derive(p.sample_index).rng();
        convert_pair(p, cfg, &mut r)
    });
    Ok(ConversionStream { records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{ideal_quantize, RngStream};
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

    fn quantize(cfg: &TdcConfig, dt: f64, index: u64) -> ConversionRecord {
        convert_pair(
            &EdgePair::from_dt(TimeFs(dt), index),
            cfg,
            &mut RngStream::new(1).derive(index).rng(),
        )
    }

    fn oracle(dt: f64) -> u8 {
        ideal_quantize(TimeFs(dt), TimeFs(100_000.0), 8).unwrap() as u8
    }

    #[test]
    fn comparator_examples() {
        let cfg = TdcConfig {
            meta_window: TimeFs(50.0),
            ..TdcConfig::nominal()
        };
        let mut rng = RngStream::new(3).rng();
        assert_eq!(
            compare(TimeFs(1_000.0), &cfg, &mut rng),
            Decision {
                bit: true,
                metastable: false
            }
        );
        assert_eq!(
            compare(TimeFs(-1_000.0), &cfg, &mut rng),
            Decision {
                bit: false,
                metastable: false
            }
        );
        assert_eq!(
            compare(TimeFs(0.0), &cfg, &mut rng),
            Decision {
                bit: true,
                metastable: true
            }
        );
        let ideal = TdcConfig::ideal();
        assert_eq!(
            compare(TimeFs(0.0), &ideal, &mut rng),
            Decision {
                bit: true,
                metastable: false
            }
        );
    }

    #[test]
    fn unresolved_metastability_is_a_fair_coin() {
        let cfg = TdcConfig {
            meta_window: TimeFs(50.0),
            meta_resolver: false,
            ..TdcConfig::nominal()
        };
        let mut rng = RngStream::new(11).rng();
        let n = 100_000;
        let ones = (0..n)
            .filter(|_| {
                let d = compare(TimeFs(10.0), &cfg, &mut rng);
                assert!(d.metastable);
                d.bit
            })
            .count();
        let rate = ones as f64 / n as f64;
        assert!((rate - 0.5).abs() <= 0.01, "rate {rate}");

        // the decision is exactly the seeded draw
        let mut a = RngStream::new(12).rng();
        let mut b = RngStream::new(12).rng();
        assert_eq!(compare(TimeFs(10.0), &cfg, &mut a).bit, b.random_bool(0.5));
    }

    #[test]
    fn midscale_and_extremes() {
        let cfg = TdcConfig::ideal();
        assert_eq!(quantize(&cfg, 0.0, 0).code, 128);
        assert_eq!(quantize(&cfg, 50_000.0, 0).code, 255);
        assert_eq!(quantize(&cfg, -50_000.0, 1).code, 0);
        let sat = quantize(&cfg, 80_000.0, 0);
        assert_eq!(sat.code, 255);
        assert!(sat.out_of_range);
        assert_eq!(quantize(&cfg, -80_000.0, 0).code, 0);
    }

    #[test]
    fn record_bits_match_code() {
        let rec = quantize(&TdcConfig::nominal(), 12_345.0, 3);
        let code = rec
            .decisions
            .iter()
            .fold(0u8, |acc, &b| (acc << 1) | b as u8);
        assert_eq!(code, rec.code);
        for (m, r) in rec.metastable_flags.iter().zip(rec.residuals) {
            if *m {
                assert!(r.0.abs() < 10.0);
            }
        }
    }

    #[test]
    fn stage_one_fault_folds_residual_toward_midscale() {
        // +2 LSB on stage 1 rising: each half's residual shifts by 2 LSB
        // toward the middle and saturates there
        let mut cfg = TdcConfig::ideal();
        cfg.stage_mut(1).mismatch_rise = TimeFs(781.25);
        let lsb = 390.625;
        for code in 0..256u32 {
            let dt = -50_000.0 + (code as f64 + 0.5) * lsb;
            let rise = quantize(&cfg, dt, 0).code as u32;
            let fall = quantize(&cfg, dt, 1).code as u32;
            assert_eq!(fall, code);
            let want = if code < 128 {
                (code + 2).min(127)
            } else {
                (code - 2).max(128)
            };
            assert_eq!(rise, want, "code {code}");
        }
    }

    #[test]
    fn truncated_matches_top_bits() {
        let cfg = TdcConfig::ideal();
        for i in 0..200 {
            let dt = -50_000.0 + 500.0 * i as f64 + 3.3;
            let pair = EdgePair::from_dt(TimeFs(dt), 0);
            let full = convert_pair(&pair, &cfg, &mut RngStream::new(0).rng()).code;
            for depth in 1..=8 {
                let top = convert_pair_truncated(&pair, &cfg, &mut RngStream::new(0).rng(), depth);
                assert_eq!(top, full >> (8 - depth));
            }
        }
    }

    #[test]
    fn stream_rejects_broken_ping_pong() {
        let mut pairs: Vec<EdgePair> = (0..4).map(|i| EdgePair::from_dt(TimeFs(0.0), i)).collect();
        pairs[2].polarity = Polarity::Falling;
        let err = convert_stream(&pairs, &TdcConfig::ideal(), &RngStream::new(0)).unwrap_err();
        assert!(matches!(
            err,
            Error::PolaritySequence {
                sample_index: 2,
                ..
            }
        ));
    }

    #[test]
    fn zero_pairs_give_midscale_in_both_banks() {
        let pairs: Vec<EdgePair> = (0..64).map(|i| EdgePair::from_dt(TimeFs(0.0), i)).collect();
        let s = convert_stream(&pairs, &TdcConfig::ideal(), &RngStream::new(0)).unwrap();
        assert!(s.codes().iter().all(|&c| c == 128));
        assert_eq!(
            s.bank_codes(Polarity::Rising),
            s.bank_codes(Polarity::Falling)
        );
    }

    #[test]
    fn stream_is_deterministic() {
        let pairs: Vec<EdgePair> = (0..500)
            .map(|i| EdgePair::from_dt(TimeFs(-49_000.0 + 190.0 * i as f64), i))
            .collect();
        let cfg = TdcConfig {
            meta_resolver: false,
            meta_window: TimeFs(40.0),
            jitter_sigma: TimeFs(60.0),
            ..TdcConfig::nominal()
        };
        let a = convert_stream(&pairs, &cfg, &RngStream::new(77)).unwrap();
        let b = convert_stream(&pairs, &cfg, &RngStream::new(77)).unwrap();
        assert_eq!(a, b);
        let c = convert_stream(&pairs, &cfg, &RngStream::new(78)).unwrap();
        assert_ne!(a, c);
    }

    proptest! {
        #[test]
        fn ideal_matches_oracle(dt in -50_000.0f64..=50_000.0, idx in 0u64..4) {
            prop_assert_eq!(quantize(&TdcConfig::ideal(), dt, idx).code, oracle(dt));
        }

        #[test]
        fn residuals_contract(dt in -50_000.0f64..=50_000.0) {
            let rec = quantize(&TdcConfig::ideal(), dt, 0);
            for k in 1..N_BITS {
                // Δ_{k+1} bound t_fs / 2^{k+1}, 1-based
                let bound = 100_000.0 / (1u64 << (k + 1)) as f64;
                prop_assert!(rec.residuals[k].0.abs() <= bound + 1e-9);
            }
        }
    }
}
