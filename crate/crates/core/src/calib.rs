//! Foreground calibration: ramp histograms at growing bit depth drive a
//! search over each stage's delay codes, MSB stage first.

use serde::{Deserialize, Serialize};

use crate::adc::AdcConfig;
use crate::analysis::{code_density_linearity, Stimulus};
use crate::error::{Error, Result};
use crate::par;
use crate::rng::RngStream;
use crate::signal::{sample_signal, SignalSpec};
use crate::tdc::{convert_pair_truncated, CONV_MAX, DDU_MAX};
use crate::units::{Polarity, SampledInput};
use crate::N_BITS;

/// Ramp samples sharing one generator inside a histogram.
const BLOCK: usize = 1024;

/// Stream tag of the full-depth before/after check of a bank.
const CHECK_STREAM: u64 = 0xC4EC;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchStrategy {
    #[default]
    Exhaustive,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibSpec {
    /// Target max|DNL| in full-resolution LSB.
    pub dnl_tolerance: f64,
    /// Ramp length per histogram, both polarities together.
    pub ramp_points: usize,
    pub max_iterations_per_stage: usize,
    pub search_strategy: SearchStrategy,
    /// Bank that owns the conventional cells shared by both edges.
    pub conv_owner: Polarity,
}

impl Default for CalibSpec {
    fn default() -> Self {
        CalibSpec {
            dnl_tolerance: 0.3,
            ramp_points: 262_144,
            max_iterations_per_stage: 128,
            search_strategy: SearchStrategy::Exhaustive,
            conv_owner: Polarity::Rising,
        }
    }
}

impl CalibSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.dnl_tolerance > 0.0) {
            return Err(Error::config("calib.dnl_tolerance", "must be positive"));
        }
        if self.max_iterations_per_stage == 0 {
            return Err(Error::config(
                "calib.max_iterations_per_stage",
                "must be ≥ 1",
            ));
        }
        Ok(())
    }

    /// Samples of one polarity needed at `depth`: 64 per code.
    fn check_points(&self, depth: usize) -> Result<()> {
        let need = 64 << depth;
        if self.ramp_points / 2 < need {
            return Err(Error::config(
                "calib.ramp_points",
                format!(
                    "{} ramp points give {} per polarity; depth {depth} needs {need}",
                    self.ramp_points,
                    self.ramp_points / 2
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibEntry {
    pub stage: usize,
    pub polarity: Polarity,
    /// Histograms acquired for this stage.
    pub iterations: usize,
    pub code_rise: u8,
    pub code_fall: u8,
    pub conv_code: u8,
    /// Final max|DNL| at `depth`, in full-resolution LSB.
    pub max_dnl_lsb: f64,
    pub depth: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibReport {
    pub per_stage: Vec<CalibEntry>,
    pub total_histograms: usize,
    /// Banks restored to their starting codes because calibration left the
    /// full-depth max|DNL| worse than before.
    pub reverted_banks: Vec<Polarity>,
}

impl CalibReport {
    pub fn all_converged(&self) -> bool {
        self.per_stage.iter().all(|e| e.converged)
    }

    pub fn failed_stages(&self) -> Vec<(usize, Polarity)> {
        self.per_stage
            .iter()
            .filter(|e| !e.converged)
            .map(|e| (e.stage, e.polarity))
            .collect()
    }
}

fn ramp(spec: &CalibSpec) -> Result<Vec<SampledInput>> {
    sample_signal(&SignalSpec::Ramp, spec.ramp_points)
}

fn dnl_from_ramp(
    adc: &AdcConfig,
    ramp: &[SampledInput],
    depth: usize,
    polarity: Polarity,
    rng: &RngStream,
) -> Result<Vec<f64>> {
    // the polarity's share of the interleaved ramp
    let first = match polarity {
        Polarity::Rising => 0,
        Polarity::Falling => 1,
    };
    let indices: Vec<usize> = (first..ramp.len()).step_by(2).collect();
    let blocks: Vec<&[usize]> = indices.chunks(BLOCK).collect();
    let codes: Vec<Vec<u8>> = par::map_range(blocks.len(), |b| {
        let mut r = rng.derive(b as u64).rng();
        blocks[b]
            .iter()
            .map(|&i| {
                let pair = match adc.vtc.convert(&ramp[i], polarity, i as u64, &mut r) {
                    Ok(p) => p,
                    Err(Error::RangeExceeded { clipped, .. }) => clipped,
                    Err(e) => unreachable!("vtc convert: {e}"),
                };
                convert_pair_truncated(&pair, &adc.tdc, &mut r, depth)
            })
            .collect()
    });
    let codes: Vec<u8> = codes.concat();
    Ok(code_density_linearity(&codes, depth as u32, Stimulus::UniformRamp)?.dnl)
}

/// DNL of the top `depth` bits over one polarity's share of a full-scale
/// ramp. Endpoint codes are excluded, so depth 1 yields an empty vector.
pub fn partial_dnl(
    adc: &AdcConfig,
    depth: usize,
    polarity: Polarity,
    spec: &CalibSpec,
    rng: &RngStream,
) -> Result<Vec<f64>> {
    if !(1..=N_BITS).contains(&depth) {
        return Err(Error::config(
            "bit_depth",
            format!("must be in 1..=8, got {depth}"),
        ));
    }
    spec.check_points(depth)?;
    adc.validate()?;
    dnl_from_ramp(adc, &ramp(spec)?, depth, polarity, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Codes {
    ddu: u8,
    conv: u8,
}

fn apply(adc: &mut AdcConfig, stage: usize, polarity: Polarity, c: Codes) {
    let s = adc.tdc.stage_mut(stage);
    s.set_ddu_code(polarity, c.ddu);
    s.conv_code = c.conv;
}

struct StageSearch<'a> {
    adc: &'a AdcConfig,
    ramp: Vec<SampledInput>,
    stage: usize,
    polarity: Polarity,
    depth: usize,
    scale: f64,
    rng: RngStream,
    tune_conv: bool,
    start: Codes,
    evaluated: Vec<(Codes, f64)>,
}

impl StageSearch<'_> {
    fn score(&self, c: Codes) -> Result<f64> {
        let mut adc = self.adc.clone();
        apply(&mut adc, self.stage, self.polarity, c);
        let dnl = dnl_from_ramp(&adc, &self.ramp, self.depth, self.polarity, &self.rng)?;
        Ok(self.scale * dnl.iter().fold(0.0f64, |m, d| m.max(d.abs())))
    }

    fn cached(&self, c: Codes) -> Option<f64> {
        self.evaluated
            .iter()
            .find(|(e, _)| *e == c)
            .map(|&(_, v)| v)
    }

    /// Scores the candidates not seen yet, in parallel, and records them.
    fn evaluate(&mut self, candidates: &[Codes]) -> Result<()> {
        let fresh: Vec<Codes> = candidates
            .iter()
            .copied()
            .filter(|&c| self.cached(c).is_none())
            .collect();
        let scores = par::map_slice(&fresh, |&c| self.score(c));
        for (c, s) in fresh.into_iter().zip(scores) {
            self.evaluated.push((c, s?));
        }
        Ok(())
    }

    fn distance(&self, c: Codes) -> u32 {
        (c.ddu as i32 - self.start.ddu as i32).unsigned_abs()
            + (c.conv as i32 - self.start.conv as i32).unsigned_abs()
    }

    /// Lowest score, then nearest to the starting codes, then first seen.
    fn best(&self) -> (Codes, f64) {
        let mut best = self.evaluated[0];
        for &(c, s) in &self.evaluated[1..] {
            if s < best.1 || (s == best.1 && self.distance(c) < self.distance(best.0)) {
                best = (c, s);
            }
        }
        best
    }

    fn space(&self) -> Vec<Codes> {
        let convs: Vec<u8> = if self.tune_conv {
            (0..=CONV_MAX).collect()
        } else {
            vec![self.start.conv]
        };
        let mut all: Vec<Codes> = convs
            .iter()
            .flat_map(|&conv| (0..=DDU_MAX).map(move |ddu| Codes { ddu, conv }))
            .collect();
        // stable: equal distances keep enumeration order
        all.sort_by_key(|&c| self.distance(c));
        all
    }

    fn neighbours(&self, c: Codes) -> Vec<Codes> {
        let mut out = Vec::with_capacity(4);
        if c.ddu > 0 {
            out.push(Codes {
                ddu: c.ddu - 1,
                ..c
            });
        }
        if c.ddu < DDU_MAX {
            out.push(Codes {
                ddu: c.ddu + 1,
                ..c
            });
        }
        if self.tune_conv {
            if c.conv > 0 {
                out.push(Codes {
                    conv: c.conv - 1,
                    ..c
                });
            }
            if c.conv < CONV_MAX {
                out.push(Codes {
                    conv: c.conv + 1,
                    ..c
                });
            }
        }
        out
    }

    fn exhaustive(&mut self, budget: usize, tol: f64) -> Result<()> {
        if self.best().1 <= tol {
            return Ok(());
        }
        let remaining = budget.saturating_sub(self.evaluated.len());
        let candidates: Vec<Codes> = self.space().into_iter().take(remaining + 1).collect();
        let candidates: Vec<Codes> = candidates
            .into_iter()
            .filter(|&c| self.cached(c).is_none())
            .take(remaining)
            .collect();
        self.evaluate(&candidates)
    }

    fn climb(&mut self, from: Codes, budget: usize, tol: f64) -> Result<()> {
        let mut here = from;
        loop {
            let here_score = self.cached(here).expect("current point evaluated");
            if here_score <= tol {
                return Ok(());
            }
            let remaining = budget.saturating_sub(self.evaluated.len());
            let moves: Vec<Codes> = self
                .neighbours(here)
                .into_iter()
                .filter(|&c| self.cached(c).is_none())
                .take(remaining)
                .collect();
            self.evaluate(&moves)?;
            let next = self
                .neighbours(here)
                .into_iter()
                .filter_map(|c| self.cached(c).map(|s| (c, s)))
                .fold(None::<(Codes, f64)>, |acc, (c, s)| match acc {
                    Some((_, b)) if b <= s => acc,
                    _ => Some((c, s)),
                });
            match next {
                Some((c, s)) if s < here_score => here = c,
                _ => return Ok(()),
            }
        }
    }

    fn greedy(&mut self, budget: usize, tol: f64) -> Result<()> {
        self.climb(self.start, budget, tol)?;
        if self.best().1 <= tol || !self.tune_conv {
            return Ok(());
        }
        // restart from the best conventional code at the current DDU code
        let ddu = self.best().0.ddu;
        let remaining = budget.saturating_sub(self.evaluated.len());
        let scan: Vec<Codes> = (0..=CONV_MAX)
            .map(|conv| Codes { ddu, conv })
            .filter(|&c| self.cached(c).is_none())
            .take(remaining)
            .collect();
        self.evaluate(&scan)?;
        let restart = (0..=CONV_MAX)
            .map(|conv| Codes { ddu, conv })
            .filter_map(|c| self.cached(c).map(|s| (c, s)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(c, _)| c)
            .unwrap_or(self.start);
        self.climb(restart, budget, tol)
    }
}

/// Tunes stage `k`'s delay codes for one polarity by minimizing max|DNL| at
/// depth `k + 1`. Stages `1..k` of the polarity must already be calibrated.
///
/// The conventional cells are shared by both edges; they are searched only
/// for the owner bank and held for the other one.
pub fn calibrate_stage(
    adc: &mut AdcConfig,
    k: usize,
    polarity: Polarity,
    spec: &CalibSpec,
    rng: &RngStream,
) -> Result<CalibEntry> {
    if !(1..N_BITS).contains(&k) {
        return Err(Error::config(
            "stage",
            format!("calibrated stages are 1..=7, got {k}"),
        ));
    }
    spec.validate()?;
    adc.validate()?;
    let depth = k + 1;
    spec.check_points(depth)?;
    let stage = *adc.tdc.stage(k);
    let start = Codes {
        ddu: stage.ddu_code(polarity),
        conv: stage.conv_code,
    };
    let mut search = StageSearch {
        adc: &*adc,
        ramp: ramp(spec)?,
        stage: k,
        polarity,
        depth,
        scale: (1u32 << (N_BITS - depth)) as f64,
        rng: *rng,
        tune_conv: stage.has_conventional && polarity == spec.conv_owner,
        start,
        evaluated: Vec::new(),
    };
    let budget = spec.max_iterations_per_stage;
    let tol = spec.dnl_tolerance;
    search.evaluate(&[start])?;
    match spec.search_strategy {
        SearchStrategy::Exhaustive => search.exhaustive(budget, tol)?,
        SearchStrategy::Greedy => search.greedy(budget, tol)?,
    }
    let (best, score) = search.best();
    let iterations = search.evaluated.len();
    apply(adc, k, polarity, best);
    let s = adc.tdc.stage(k);
    Ok(CalibEntry {
        stage: k,
        polarity,
        iterations,
        code_rise: s.ddu.code_rise,
        code_fall: s.ddu.code_fall,
        conv_code: s.conv_code,
        max_dnl_lsb: score,
        depth,
        converged: score <= tol,
    })
}

fn full_depth_dnl(
    adc: &AdcConfig,
    polarity: Polarity,
    spec: &CalibSpec,
    rng: &RngStream,
) -> Result<f64> {
    let d = partial_dnl(adc, N_BITS, polarity, spec, rng)?;
    Ok(d.iter().fold(0.0, |m, x| m.max(x.abs())))
}

/// Calibrates both banks, owner bank first, each MSB stage to LSB stage.
/// The ADC is left at the calibrated codes.
///
/// A bank whose full-depth max|DNL| ends up worse than where it started is
/// put back to its starting codes. This happens when something outside the
/// tuning span, such as VTC nonlinearity, dominates the coarse histograms.
pub fn run_foreground_calibration(
    adc: &mut AdcConfig,
    spec: &CalibSpec,
    rng: &RngStream,
) -> Result<CalibReport> {
    spec.validate()?;
    spec.check_points(N_BITS)?;
    let mut per_stage = Vec::with_capacity(2 * (N_BITS - 1));
    let mut reverted_banks = Vec::new();
    for polarity in [spec.conv_owner, spec.conv_owner.other()] {
        let bank_rng = rng.derive(polarity as u64);
        let check_rng = bank_rng.derive(CHECK_STREAM);
        let before = adc.tdc.clone();
        let pre = full_depth_dnl(adc, polarity, spec, &check_rng)?;
        for k in 1..N_BITS {
            per_stage.push(calibrate_stage(
                adc,
                k,
                polarity,
                spec,
                &bank_rng.derive(k as u64),
            )?);
        }
        if full_depth_dnl(adc, polarity, spec, &check_rng)? > pre {
            adc.tdc = before;
            reverted_banks.push(polarity);
        }
    }
    Ok(CalibReport {
        total_histograms: per_stage.iter().map(|e| e.iterations).sum(),
        per_stage,
        reverted_banks,
    })
}
