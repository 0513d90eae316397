//! Experiment specs: a TOML file of flat `key = value` sections.
//!
//! Every key is optional. Missing keys take the defaults of the chosen
//! `[adc] preset`, and the fully resolved spec is echoed into every artifact.

use std::fmt;
use std::path::Path;

use serde::Deserialize;
use toml::{Table, Value};

use tdadc::analysis::SweepSpec;
use tdadc::calib::{CalibSpec, SearchStrategy};
use tdadc::signal::SignalSpec;
use tdadc::tdc::{TdcConfig, TuningSteps, CONV_MAX, DDU_MAX};
use tdadc::vtc::VtcConfig;
use tdadc::{timing_feasible, AdcConfig, Polarity, TimeFs, N_BITS};

use crate::error::{HarnessError, Result};

/// Per-stage arrays cover the ΔT stages 1..=7.
pub const TUNED_STAGES: usize = N_BITS - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    VtcCurve,
    DduSweep,
    SweepDt,
    Calibrate,
    PowerCompare,
    Feasibility,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Simulate,
        Command::VtcCurve,
        Command::DduSweep,
        Command::SweepDt,
        Command::Calibrate,
        Command::PowerCompare,
        Command::Feasibility,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::VtcCurve => "vtc-curve",
            Command::DduSweep => "ddu-sweep",
            Command::SweepDt => "sweep-dt",
            Command::Calibrate => "calibrate",
            Command::PowerCompare => "power-compare",
            Command::Feasibility => "feasibility",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|c| c.as_str()).collect();
                HarnessError::invalid(
                    "command",
                    format!("`{s}` is not one of {}", names.join(", ")),
                )
            })
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Nominal,
    Ideal,
}

impl Preset {
    fn as_str(self) -> &'static str {
        match self {
            Preset::Nominal => "nominal",
            Preset::Ideal => "ideal",
        }
    }

    pub fn adc(self) -> AdcConfig {
        match self {
            Preset::Nominal => AdcConfig::nominal(),
            Preset::Ideal => AdcConfig::ideal(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StimulusKind {
    Sine,
    Ramp,
    Dc,
}

impl StimulusKind {
    fn as_str(self) -> &'static str {
        match self {
            StimulusKind::Sine => "sine",
            StimulusKind::Ramp => "ramp",
            StimulusKind::Dc => "dc",
        }
    }
}

/// All stimulus keys, whichever kind is selected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StimulusSpec {
    pub kind: StimulusKind,
    pub amplitude: f64,
    pub bin: u64,
    pub phase: f64,
    pub level: f64,
}

impl Default for StimulusSpec {
    fn default() -> Self {
        StimulusSpec {
            kind: StimulusKind::Sine,
            amplitude: 1.0,
            bin: 127,
            phase: 0.0,
            level: 0.0,
        }
    }
}

impl StimulusSpec {
    pub fn signal(&self) -> SignalSpec {
        match self.kind {
            StimulusKind::Sine => SignalSpec::Sine {
                amplitude: self.amplitude,
                bin: self.bin,
                phase: self.phase,
            },
            StimulusKind::Ramp => SignalSpec::Ramp,
            StimulusKind::Dc => SignalSpec::Dc { level: self.level },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSpec {
    pub n_delay_elements: u64,
    pub n_samples: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub command: Command,
    pub seed: u64,
    pub trials: usize,
    pub output_format: OutputFormat,
    pub output_path: String,
    pub preset: Preset,
    pub adc: AdcConfig,
    pub stimulus: StimulusSpec,
    pub calib: CalibSpec,
    /// `trials` mirrors the top-level value.
    pub sweep: SweepSpec,
    pub vtc_curve_points: usize,
    pub ddu_sweep_stage: usize,
    pub power: PowerSpec,
    /// Non-fatal findings, such as a timing budget that violates the
    /// quantization-period constraint.
    pub warnings: Vec<String>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            command: Command::Simulate,
            seed: 0,
            trials: 10,
            output_format: OutputFormat::Csv,
            output_path: String::new(),
            preset: Preset::Nominal,
            adc: AdcConfig::nominal(),
            stimulus: StimulusSpec::default(),
            calib: CalibSpec::default(),
            sweep: SweepSpec::default(),
            vtc_curve_points: 64,
            ddu_sweep_stage: 1,
            power: PowerSpec {
                n_delay_elements: 56,
                n_samples: 4096,
            },
            warnings: Vec::new(),
        }
        .with_default_output()
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    command: Option<String>,
    seed: Option<u64>,
    trials: Option<usize>,
    output_format: Option<String>,
    output_path: Option<String>,
    #[serde(default)]
    adc: RawAdc,
    #[serde(default)]
    vtc: RawVtc,
    #[serde(default)]
    tdc: RawTdc,
    #[serde(default)]
    stimulus: RawStimulus,
    #[serde(default)]
    calib: RawCalib,
    #[serde(default)]
    sweep: RawSweep,
    #[serde(default)]
    vtc_curve: RawVtcCurve,
    #[serde(default)]
    ddu_sweep: RawDduSweep,
    #[serde(default)]
    power: RawPower,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAdc {
    preset: Option<String>,
    f_s: Option<f64>,
    n_samples: Option<usize>,
    t_reset: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVtc {
    slope_up: Option<f64>,
    slope_down: Option<f64>,
    expand_alpha: Option<f64>,
    compensated: Option<bool>,
    comp_gain: Option<f64>,
    comp_knee: Option<f64>,
    comp_bias_1: Option<f64>,
    comp_bias_2: Option<f64>,
    dead_time: Option<f64>,
    t_fs_target: Option<f64>,
    noise_sigma: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTdc {
    t_fs: Option<f64>,
    jitter_sigma: Option<f64>,
    stage_delay: Option<f64>,
    meta_window: Option<f64>,
    meta_resolver: Option<bool>,
    meta_latency_bound: Option<f64>,
    ddu_step_rise: Option<f64>,
    ddu_step_fall: Option<f64>,
    couple_rf: Option<f64>,
    couple_fr: Option<f64>,
    conv_step_rise: Option<f64>,
    conv_step_fall: Option<f64>,
    code_rise: Option<Vec<u8>>,
    code_fall: Option<Vec<u8>>,
    conv_code: Option<Vec<u8>>,
    mismatch_rise: Option<Vec<f64>>,
    mismatch_fall: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStimulus {
    kind: Option<String>,
    amplitude: Option<f64>,
    bin: Option<u64>,
    phase: Option<f64>,
    level: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCalib {
    dnl_tolerance: Option<f64>,
    ramp_points: Option<usize>,
    max_iterations_per_stage: Option<usize>,
    search_strategy: Option<String>,
    conv_owner: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    sigma_dt_lsb: Option<Vec<f64>>,
    jitter_sigma: Option<f64>,
    n_fft: Option<usize>,
    signal_bin: Option<u64>,
    amplitude: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVtcCurve {
    n_points: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDduSweep {
    stage: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPower {
    n_delay_elements: Option<u64>,
    n_samples: Option<u64>,
}

fn pick(field: &str, value: &str, options: &[&str]) -> Result<usize> {
    options.iter().position(|o| *o == value).ok_or_else(|| {
        HarnessError::invalid(
            field,
            format!("`{value}` is not one of {}", options.join(", ")),
        )
    })
}

fn per_stage<T: Copy>(field: &str, v: Option<Vec<T>>) -> Result<Option<Vec<T>>> {
    match v {
        Some(v) if v.len() != TUNED_STAGES => Err(HarnessError::invalid(
            field,
            format!(
                "expected {TUNED_STAGES} entries (stages 1..=7), got {}",
                v.len()
            ),
        )),
        v => Ok(v),
    }
}

impl RawSpec {
    fn resolve(self) -> Result<ExperimentSpec> {
        let d = ExperimentSpec::default();
        let command = match &self.command {
            Some(c) => Command::parse(c)?,
            None => d.command,
        };
        let output_format = match self.output_format.as_deref() {
            None => d.output_format,
            Some(f) => {
                [OutputFormat::Csv, OutputFormat::Json][pick("output_format", f, &["csv", "json"])?]
            }
        };
        let preset = match self.adc.preset.as_deref() {
            None => Preset::Nominal,
            Some(p) => {
                [Preset::Nominal, Preset::Ideal][pick("adc.preset", p, &["nominal", "ideal"])?]
            }
        };
        let base = preset.adc();

        let v = &self.vtc;
        let b = base.vtc;
        let vtc = VtcConfig {
            slope_up: v.slope_up.unwrap_or(b.slope_up),
            slope_down: v.slope_down.unwrap_or(b.slope_down),
            expand_alpha: v.expand_alpha.unwrap_or(b.expand_alpha),
            compensated: v.compensated.unwrap_or(b.compensated),
            comp_gain: v.comp_gain.unwrap_or(b.comp_gain),
            comp_knee: v.comp_knee.unwrap_or(b.comp_knee),
            comp_bias_1: v.comp_bias_1.unwrap_or(b.comp_bias_1),
            comp_bias_2: v.comp_bias_2.unwrap_or(b.comp_bias_2),
            dead_time: v.dead_time.map(TimeFs).unwrap_or(b.dead_time),
            t_fs_target: v.t_fs_target.map(TimeFs).unwrap_or(b.t_fs_target),
            noise_sigma: v.noise_sigma.map(TimeFs).unwrap_or(b.noise_sigma),
        };

        let t = self.tdc;
        let bt = &base.tdc;
        let s1 = bt.stage(1);
        let steps = TuningSteps {
            ddu_step_rise: t.ddu_step_rise.map(TimeFs).unwrap_or(s1.ddu.step_rise),
            ddu_step_fall: t.ddu_step_fall.map(TimeFs).unwrap_or(s1.ddu.step_fall),
            couple_rf: t.couple_rf.map(TimeFs).unwrap_or(s1.ddu.couple_rf),
            couple_fr: t.couple_fr.map(TimeFs).unwrap_or(s1.ddu.couple_fr),
            conv_step_rise: t.conv_step_rise.map(TimeFs).unwrap_or(s1.conv_step_rise),
            conv_step_fall: t.conv_step_fall.map(TimeFs).unwrap_or(s1.conv_step_fall),
        };
        let mut tdc = TdcConfig {
            jitter_sigma: t.jitter_sigma.map(TimeFs).unwrap_or(bt.jitter_sigma),
            stage_delay: t.stage_delay.map(TimeFs).unwrap_or(bt.stage_delay),
            meta_window: t.meta_window.map(TimeFs).unwrap_or(bt.meta_window),
            meta_resolver: t.meta_resolver.unwrap_or(bt.meta_resolver),
            meta_latency_bound: t
                .meta_latency_bound
                .map(TimeFs)
                .unwrap_or(bt.meta_latency_bound),
            ..TdcConfig::with_steps(t.t_fs.map(TimeFs).unwrap_or(bt.t_fs), &steps)
        };
        if let Some(codes) = per_stage("tdc.code_rise", t.code_rise)? {
            for (k, c) in codes.into_iter().enumerate() {
                check_code("tdc.code_rise", k, c, DDU_MAX)?;
                tdc.stage_mut(k + 1).ddu.code_rise = c;
            }
        }
        if let Some(codes) = per_stage("tdc.code_fall", t.code_fall)? {
            for (k, c) in codes.into_iter().enumerate() {
                check_code("tdc.code_fall", k, c, DDU_MAX)?;
                tdc.stage_mut(k + 1).ddu.code_fall = c;
            }
        }
        if let Some(codes) = per_stage("tdc.conv_code", t.conv_code)? {
            for (k, c) in codes.into_iter().enumerate() {
                check_code("tdc.conv_code", k, c, CONV_MAX)?;
                tdc.stage_mut(k + 1).conv_code = c;
            }
        }
        if let Some(m) = per_stage("tdc.mismatch_rise", t.mismatch_rise)? {
            for (k, e) in m.into_iter().enumerate() {
                tdc.stage_mut(k + 1).mismatch_rise = TimeFs(e);
            }
        }
        if let Some(m) = per_stage("tdc.mismatch_fall", t.mismatch_fall)? {
            for (k, e) in m.into_iter().enumerate() {
                tdc.stage_mut(k + 1).mismatch_fall = TimeFs(e);
            }
        }

        let adc = AdcConfig {
            vtc,
            tdc,
            f_s: self.adc.f_s.unwrap_or(base.f_s),
            n_samples: self.adc.n_samples.unwrap_or(base.n_samples),
            t_reset: self.adc.t_reset.map(TimeFs).unwrap_or(base.t_reset),
        };

        let st = self.stimulus;
        let ds = d.stimulus;
        let stimulus = StimulusSpec {
            kind: match st.kind.as_deref() {
                None => ds.kind,
                Some(k) => [StimulusKind::Sine, StimulusKind::Ramp, StimulusKind::Dc]
                    [pick("stimulus.kind", k, &["sine", "ramp", "dc"])?],
            },
            amplitude: st.amplitude.unwrap_or(ds.amplitude),
            bin: st.bin.unwrap_or(ds.bin),
            phase: st.phase.unwrap_or(ds.phase),
            level: st.level.unwrap_or(ds.level),
        };

        let c = self.calib;
        let dc = d.calib;
        let calib = CalibSpec {
            dnl_tolerance: c.dnl_tolerance.unwrap_or(dc.dnl_tolerance),
            ramp_points: c.ramp_points.unwrap_or(dc.ramp_points),
            max_iterations_per_stage: c
                .max_iterations_per_stage
                .unwrap_or(dc.max_iterations_per_stage),
            search_strategy: match c.search_strategy.as_deref() {
                None => dc.search_strategy,
                Some(s) => [SearchStrategy::Exhaustive, SearchStrategy::Greedy]
                    [pick("calib.search_strategy", s, &["exhaustive", "greedy"])?],
            },
            conv_owner: match c.conv_owner.as_deref() {
                None => dc.conv_owner,
                Some(p) => Polarity::BOTH[pick("calib.conv_owner", p, &["rising", "falling"])?],
            },
        };

        let trials = self.trials.unwrap_or(d.trials);
        let sw = self.sweep;
        let dw = d.sweep;
        let sweep = SweepSpec {
            sigma_dt_lsb: sw.sigma_dt_lsb.unwrap_or(dw.sigma_dt_lsb),
            jitter_sigma: sw.jitter_sigma.map(TimeFs).unwrap_or(dw.jitter_sigma),
            trials,
            n_fft: sw.n_fft.unwrap_or(dw.n_fft),
            signal_bin: sw.signal_bin.unwrap_or(dw.signal_bin),
            amplitude: sw.amplitude.unwrap_or(dw.amplitude),
        };

        let spec = ExperimentSpec {
            command,
            seed: self.seed.unwrap_or(d.seed),
            trials,
            output_format,
            output_path: self.output_path.unwrap_or_default(),
            preset,
            adc,
            stimulus,
            calib,
            sweep,
            vtc_curve_points: self.vtc_curve.n_points.unwrap_or(d.vtc_curve_points),
            ddu_sweep_stage: self.ddu_sweep.stage.unwrap_or(d.ddu_sweep_stage),
            power: PowerSpec {
                n_delay_elements: self
                    .power
                    .n_delay_elements
                    .unwrap_or(d.power.n_delay_elements),
                n_samples: self.power.n_samples.unwrap_or(d.power.n_samples),
            },
            warnings: Vec::new(),
        };
        spec.finish()
    }
}

fn check_code(field: &str, k: usize, code: u8, max: u8) -> Result<()> {
    if code > max {
        return Err(HarnessError::invalid(
            format!("{field}[{}]", k + 1),
            format!("{code} exceeds the maximum code {max}"),
        ));
    }
    Ok(())
}

/// 1-based line of byte offset `pos`.
fn line_of(text: &str, pos: usize) -> usize {
    text[..pos.min(text.len())].matches('\n').count() + 1
}

fn parse_error(text: &str, e: &toml::de::Error) -> HarnessError {
    HarnessError::Parse {
        line: e.span().map(|s| line_of(text, s.start)),
        message: e.message().to_string(),
    }
}

/// Line of `key = ...` inside `[section]` (or before any section header).
fn find_key_line(text: &str, section: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    for (i, line) in text.lines().enumerate() {
        let l = line.trim();
        if let Some(h) = l.strip_prefix('[') {
            current = Some(h.trim_end_matches(']').trim().to_string());
            continue;
        }
        let Some((k, _)) = l.split_once('=') else {
            continue;
        };
        let k = k.trim().trim_matches('"');
        if current.as_deref() == section && k == key {
            return Some(i + 1);
        }
        if let Some(s) = section {
            if current.is_none() && k == format!("{s}.{key}") {
                return Some(i + 1);
            }
        }
    }
    None
}

fn nearest<'a>(
    key: &str,
    candidates: impl IntoIterator<Item = &'a str>,
) -> Option<(usize, &'a str)> {
    candidates
        .into_iter()
        .map(|c| (strsim::levenshtein(key, c), c))
        .min()
}

fn close_enough(key: &str, dist: usize) -> bool {
    dist <= (key.chars().count() / 3).max(2)
}

/// Rejects keys outside the schema, suggesting the nearest valid key.
fn check_keys(text: &str, user: &Table) -> Result<()> {
    let schema = ExperimentSpec::default().to_table();
    let all_paths: Vec<String> = schema
        .iter()
        .flat_map(|(k, v)| match v {
            Value::Table(t) => t.keys().map(|s| format!("{k}.{s}")).collect(),
            _ => vec![k.clone()],
        })
        .collect();
    let global = |key: &str| {
        nearest(key, all_paths.iter().map(String::as_str))
            .filter(|(d, c)| close_enough(key, *d) || c.ends_with(&format!(".{key}")))
            .map(|(_, c)| c.to_string())
    };
    for (key, value) in user {
        match (schema.get(key), value) {
            (Some(Value::Table(section)), Value::Table(entries)) => {
                for sub in entries.keys() {
                    if section.contains_key(sub) {
                        continue;
                    }
                    let local = nearest(sub, section.keys().map(String::as_str))
                        .filter(|(d, _)| close_enough(sub, *d))
                        .map(|(_, c)| format!("{key}.{c}"));
                    return Err(HarnessError::UnknownKey {
                        key: format!("{key}.{sub}"),
                        line: find_key_line(text, Some(key), sub),
                        suggestion: local.or_else(|| global(sub)),
                    });
                }
            }
            (Some(Value::Table(_)), _) => {
                return Err(HarnessError::Parse {
                    line: find_key_line(text, None, key),
                    message: format!("`{key}` must be a table"),
                })
            }
            (Some(_), _) => {}
            (None, _) => {
                return Err(HarnessError::UnknownKey {
                    key: key.clone(),
                    line: find_key_line(text, None, key).or_else(|| {
                        text.lines()
                            .position(|l| l.trim() == format!("[{key}]"))
                            .map(|i| i + 1)
                    }),
                    suggestion: global(key),
                })
            }
        }
    }
    Ok(())
}

pub fn parse_spec(text: &str) -> Result<ExperimentSpec> {
    let table: Table = text.parse().map_err(|e| parse_error(text, &e))?;
    check_keys(text, &table)?;
    let raw: RawSpec = toml::from_str(text).map_err(|e| parse_error(text, &e))?;
    raw.resolve()
}

pub fn load_spec(path: &Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::io(path.display().to_string(), e))?;
    parse_spec(&text)
}

fn fs(t: TimeFs) -> Value {
    Value::Float(t.0)
}

fn int(n: impl TryInto<i64>) -> Value {
    Value::Integer(n.try_into().unwrap_or(i64::MAX))
}

fn array<T>(items: impl IntoIterator<Item = T>, f: impl Fn(T) -> Value) -> Value {
    Value::Array(items.into_iter().map(f).collect())
}

impl ExperimentSpec {
    fn with_default_output(mut self) -> Self {
        if self.output_path.is_empty() {
            self.output_path = format!("{}.{}", self.command, self.output_format.extension());
        }
        self
    }

    /// Applies command-line overrides, then revalidates. A default output
    /// path follows a changed command.
    pub fn with_overrides(
        mut self,
        command: Option<Command>,
        seed: Option<u64>,
        out: Option<String>,
    ) -> Result<Self> {
        if let Some(c) = command {
            if self.output_path == format!("{}.{}", self.command, self.output_format.extension()) {
                self.output_path.clear();
            }
            self.command = c;
        }
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(o) = out {
            self.output_path = o;
        }
        self.finish()
    }

    /// Resolves derived fields, validates, and collects warnings.
    fn finish(mut self) -> Result<Self> {
        self = self.with_default_output();
        self.sweep.trials = self.trials;
        self.validate()?;
        self.warnings.clear();
        let budget = self.adc.timing_budget();
        if !timing_feasible(&budget, true) {
            self.warnings.push(format!(
                "timing: sample period {} fs is shorter than T_FS/2 + T_M - T_reset = {} fs; \
                 conversions overlap the next sample",
                budget.t_s.0,
                budget.min_period(true).0
            ));
        }
        Ok(self)
    }

    /// General checks plus the ones specific to the selected command.
    pub fn validate(&self) -> Result<()> {
        if self.seed > i64::MAX as u64 {
            return Err(HarnessError::invalid(
                "seed",
                "must fit in a signed 64-bit integer",
            ));
        }
        self.adc.validate()?;
        match self.command {
            Command::Simulate => {
                self.stimulus.signal().validate(self.adc.n_samples)?;
                if self.stimulus.kind == StimulusKind::Ramp {
                    let need = 64 * tdadc::N_CODES;
                    if self.adc.n_samples < need {
                        return Err(HarnessError::invalid(
                            "adc.n_samples",
                            format!(
                                "a ramp needs at least {need} samples for code-density linearity"
                            ),
                        ));
                    }
                }
            }
            Command::VtcCurve => {
                if self.vtc_curve_points < 8 {
                    return Err(HarnessError::invalid(
                        "vtc_curve.n_points",
                        "need at least 8 points",
                    ));
                }
            }
            Command::DduSweep => {
                if !(1..=TUNED_STAGES).contains(&self.ddu_sweep_stage) {
                    return Err(HarnessError::invalid("ddu_sweep.stage", "must be in 1..=7"));
                }
            }
            Command::SweepDt => self.sweep.validate()?,
            Command::Calibrate => {
                self.calib.validate()?;
                let need = 2 * (64 << N_BITS);
                if self.calib.ramp_points < need {
                    return Err(HarnessError::invalid(
                        "calib.ramp_points",
                        format!("full-depth histograms need at least {need} points"),
                    ));
                }
                self.stimulus.signal().validate(self.adc.n_samples)?;
            }
            Command::PowerCompare | Command::Feasibility => {}
        }
        Ok(())
    }

    /// The resolved spec in the file schema. Every key is present.
    pub fn to_table(&self) -> Table {
        let mut top = Table::new();
        top.insert(
            "command".into(),
            Value::String(self.command.as_str().into()),
        );
        top.insert("seed".into(), int(self.seed));
        top.insert("trials".into(), int(self.trials));
        top.insert(
            "output_format".into(),
            Value::String(self.output_format.extension().into()),
        );
        top.insert(
            "output_path".into(),
            Value::String(self.output_path.clone()),
        );

        let a = &self.adc;
        let mut adc = Table::new();
        adc.insert("preset".into(), Value::String(self.preset.as_str().into()));
        adc.insert("f_s".into(), Value::Float(a.f_s));
        adc.insert("n_samples".into(), int(a.n_samples));
        adc.insert("t_reset".into(), fs(a.t_reset));
        top.insert("adc".into(), Value::Table(adc));

        let v = &a.vtc;
        let mut vtc = Table::new();
        vtc.insert("slope_up".into(), Value::Float(v.slope_up));
        vtc.insert("slope_down".into(), Value::Float(v.slope_down));
        vtc.insert("expand_alpha".into(), Value::Float(v.expand_alpha));
        vtc.insert("compensated".into(), Value::Boolean(v.compensated));
        vtc.insert("comp_gain".into(), Value::Float(v.comp_gain));
        vtc.insert("comp_knee".into(), Value::Float(v.comp_knee));
        vtc.insert("comp_bias_1".into(), Value::Float(v.comp_bias_1));
        vtc.insert("comp_bias_2".into(), Value::Float(v.comp_bias_2));
        vtc.insert("dead_time".into(), fs(v.dead_time));
        vtc.insert("t_fs_target".into(), fs(v.t_fs_target));
        vtc.insert("noise_sigma".into(), fs(v.noise_sigma));
        top.insert("vtc".into(), Value::Table(vtc));

        let t = &a.tdc;
        let s1 = t.stage(1);
        let stages = &t.stages[..TUNED_STAGES];
        let mut tdc = Table::new();
        tdc.insert("t_fs".into(), fs(t.t_fs));
        tdc.insert("jitter_sigma".into(), fs(t.jitter_sigma));
        tdc.insert("stage_delay".into(), fs(t.stage_delay));
        tdc.insert("meta_window".into(), fs(t.meta_window));
        tdc.insert("meta_resolver".into(), Value::Boolean(t.meta_resolver));
        tdc.insert("meta_latency_bound".into(), fs(t.meta_latency_bound));
        tdc.insert("ddu_step_rise".into(), fs(s1.ddu.step_rise));
        tdc.insert("ddu_step_fall".into(), fs(s1.ddu.step_fall));
        tdc.insert("couple_rf".into(), fs(s1.ddu.couple_rf));
        tdc.insert("couple_fr".into(), fs(s1.ddu.couple_fr));
        tdc.insert("conv_step_rise".into(), fs(s1.conv_step_rise));
        tdc.insert("conv_step_fall".into(), fs(s1.conv_step_fall));
        tdc.insert("code_rise".into(), array(stages, |s| int(s.ddu.code_rise)));
        tdc.insert("code_fall".into(), array(stages, |s| int(s.ddu.code_fall)));
        tdc.insert("conv_code".into(), array(stages, |s| int(s.conv_code)));
        tdc.insert(
            "mismatch_rise".into(),
            array(stages, |s| fs(s.mismatch_rise)),
        );
        tdc.insert(
            "mismatch_fall".into(),
            array(stages, |s| fs(s.mismatch_fall)),
        );
        top.insert("tdc".into(), Value::Table(tdc));

        let s = &self.stimulus;
        let mut stim = Table::new();
        stim.insert("kind".into(), Value::String(s.kind.as_str().into()));
        stim.insert("amplitude".into(), Value::Float(s.amplitude));
        stim.insert("bin".into(), int(s.bin));
        stim.insert("phase".into(), Value::Float(s.phase));
        stim.insert("level".into(), Value::Float(s.level));
        top.insert("stimulus".into(), Value::Table(stim));

        let c = &self.calib;
        let mut calib = Table::new();
        calib.insert("dnl_tolerance".into(), Value::Float(c.dnl_tolerance));
        calib.insert("ramp_points".into(), int(c.ramp_points));
        calib.insert(
            "max_iterations_per_stage".into(),
            int(c.max_iterations_per_stage),
        );
        calib.insert(
            "search_strategy".into(),
            Value::String(
                match c.search_strategy {
                    SearchStrategy::Exhaustive => "exhaustive",
                    SearchStrategy::Greedy => "greedy",
                }
                .into(),
            ),
        );
        calib.insert(
            "conv_owner".into(),
            Value::String(c.conv_owner.as_str().into()),
        );
        top.insert("calib".into(), Value::Table(calib));

        let w = &self.sweep;
        let mut sweep = Table::new();
        sweep.insert(
            "sigma_dt_lsb".into(),
            array(&w.sigma_dt_lsb, |x| Value::Float(*x)),
        );
        sweep.insert("jitter_sigma".into(), fs(w.jitter_sigma));
        sweep.insert("n_fft".into(), int(w.n_fft));
        sweep.insert("signal_bin".into(), int(w.signal_bin));
        sweep.insert("amplitude".into(), Value::Float(w.amplitude));
        top.insert("sweep".into(), Value::Table(sweep));

        let mut curve = Table::new();
        curve.insert("n_points".into(), int(self.vtc_curve_points));
        top.insert("vtc_curve".into(), Value::Table(curve));

        let mut ddu = Table::new();
        ddu.insert("stage".into(), int(self.ddu_sweep_stage));
        top.insert("ddu_sweep".into(), Value::Table(ddu));

        let mut power = Table::new();
        power.insert("n_delay_elements".into(), int(self.power.n_delay_elements));
        power.insert("n_samples".into(), int(self.power.n_samples));
        top.insert("power".into(), Value::Table(power));
        top
    }

    /// The resolved spec as TOML text; parses back to the same spec.
    pub fn echo(&self) -> String {
        toml::to_string(&self.to_table()).expect("spec tables always serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_spec_resolves_every_default() {
        let spec = parse_spec("command = \"simulate\"\nseed = 42\n").unwrap();
        assert_eq!(spec.seed, 42);
        assert_eq!(spec.adc, AdcConfig::nominal());
        assert_eq!(spec.calib, CalibSpec::default());
        assert_eq!(spec.output_path, "simulate.csv");
        assert!(spec.warnings.is_empty());
        let echo = spec.echo();
        for key in [
            "f_s",
            "jitter_sigma",
            "mismatch_fall",
            "dnl_tolerance",
            "n_delay_elements",
        ] {
            assert!(
                echo.contains(&format!("{key} = ")),
                "{key} missing from echo"
            );
        }
    }

    #[test]
    fn echo_round_trips() {
        let text = r#"
command = "calibrate"
seed = 7
output_format = "json"
[adc]
preset = "ideal"
f_s = 10e9
[tdc]
mismatch_rise = [0.0, -150.0, 0.0, 0.0, 40.0, 0.0, 0.0]
code_fall = [8, 8, 3, 8, 8, 8, 15]
couple_rf = 0.0
[calib]
search_strategy = "greedy"
conv_owner = "falling"
[stimulus]
kind = "dc"
level = 0.25
"#;
        let spec = parse_spec(text).unwrap();
        assert_eq!(spec.adc.tdc.stage(2).mismatch_rise, TimeFs(-150.0));
        assert_eq!(spec.adc.tdc.stage(7).ddu.code_fall, 15);
        assert_eq!(spec.adc.tdc.jitter_sigma, TimeFs::ZERO);
        let again = parse_spec(&spec.echo()).unwrap();
        assert_eq!(again, spec);
    }

    #[test]
    fn default_echo_round_trips() {
        let spec = ExperimentSpec::default();
        assert_eq!(parse_spec(&spec.echo()).unwrap(), spec);
    }

    #[test]
    fn unknown_key_suggests_nearest() {
        let text = "command = \"simulate\"\n\n[tdc]\njitter_sgma = 30.0\n";
        match parse_spec(text).unwrap_err() {
            HarnessError::UnknownKey {
                key,
                line,
                suggestion,
            } => {
                assert_eq!(key, "tdc.jitter_sgma");
                assert_eq!(line, Some(4));
                assert_eq!(suggestion.as_deref(), Some("tdc.jitter_sigma"));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn misplaced_key_points_to_its_section() {
        let e = parse_spec("jitter_sigma = 30.0\n").unwrap_err();
        let HarnessError::UnknownKey {
            suggestion, line, ..
        } = e
        else {
            panic!("{e}")
        };
        assert_eq!(line, Some(1));
        assert!(suggestion.unwrap().ends_with(".jitter_sigma"));
    }

    #[test]
    fn unknown_section() {
        let e = parse_spec("[vtcc]\nslope_up = 1.0\n").unwrap_err();
        let HarnessError::UnknownKey {
            key,
            line,
            suggestion,
        } = e
        else {
            panic!("{e}")
        };
        assert_eq!(key, "vtcc");
        assert_eq!(line, Some(1));
        assert_eq!(suggestion, None);
    }

    #[test]
    fn type_and_syntax_errors_carry_lines() {
        let e = parse_spec("seed = 1\n[adc]\nn_samples = \"many\"\n").unwrap_err();
        assert!(
            matches!(e, HarnessError::Parse { line: Some(3), .. }),
            "{e:?}"
        );
        let e = parse_spec("seed = 1\nthis is not toml\n").unwrap_err();
        assert!(
            matches!(e, HarnessError::Parse { line: Some(2), .. }),
            "{e:?}"
        );
    }

    #[test]
    fn validation_names_the_field() {
        let e = parse_spec("[tdc]\ncode_rise = [8, 8, 16, 8, 8, 8, 8]\n").unwrap_err();
        assert!(e.to_string().contains("tdc.code_rise[3]"), "{e}");
        let e = parse_spec("[tdc]\nmismatch_fall = [0.0]\n").unwrap_err();
        assert!(e.to_string().contains("tdc.mismatch_fall"), "{e}");
        let e = parse_spec("command = \"sweep-dt\"\ntrials = 3\n").unwrap_err();
        assert!(e.to_string().contains("sweep.trials"), "{e}");
        let e = parse_spec("command = \"plot\"\n").unwrap_err();
        assert!(e.to_string().contains("command"), "{e}");
        let e = parse_spec("[stimulus]\nbin = 128\n").unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn infeasible_budget_loads_with_warning() {
        // 12.5 GS/s sits exactly on the constraint; 14 GS/s violates it
        // even without the reset share
        let spec = parse_spec("[adc]\nf_s = 14e9\nt_reset = 0.0\n").unwrap();
        assert_eq!(spec.warnings.len(), 1);
        assert!(spec.warnings[0].starts_with("timing:"));
        assert!(parse_spec("[adc]\nf_s = 12.5e9\n")
            .unwrap()
            .warnings
            .is_empty());
    }

    #[test]
    fn overrides_revalidate() {
        let spec = parse_spec("seed = 1\n").unwrap();
        let s = spec
            .clone()
            .with_overrides(None, Some(9), Some("x.csv".into()))
            .unwrap();
        assert_eq!((s.seed, s.output_path.as_str()), (9, "x.csv"));
        let s = spec
            .clone()
            .with_overrides(Some(Command::Feasibility), None, None)
            .unwrap();
        assert_eq!(s.output_path, "feasibility.csv");
        assert!(spec.with_overrides(None, Some(u64::MAX), None).is_err());
    }
}
