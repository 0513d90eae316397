//! Command dispatch. Each command maps onto one model experiment.

use serde_json::{json, Value};

use tdadc::analysis::{
    code_density_linearity, dt_deviation_sweep, spectral_metrics, toggle_compare, SpectralMetrics,
    Stimulus, Window,
};
use tdadc::calib::{partial_dnl, run_foreground_calibration};
use tdadc::tdc::{ddu_sweep, ConversionStream};
use tdadc::vtc::transfer_curve;
use tdadc::{timing_feasible, AdcConfig, Polarity, RngStream, N_BITS};

use crate::config::{Command, ExperimentSpec, StimulusKind, TUNED_STAGES};
use crate::error::Result;
use crate::output::{num, CsvTable, Outcome};

/// Stream tags keep each command's draws independent of the others.
const CALIB_STREAM: u64 = 1;
const MEASURE_STREAM: u64 = 2;

pub fn run(spec: &ExperimentSpec) -> Result<Outcome> {
    spec.validate()?;
    let rng = RngStream::new(spec.seed);
    match spec.command {
        Command::Simulate => simulate(spec, &rng),
        Command::VtcCurve => vtc_curve(spec),
        Command::DduSweep => ddu(spec),
        Command::SweepDt => sweep_dt(spec, &rng),
        Command::Calibrate => calibrate(spec, &rng),
        Command::PowerCompare => power(spec),
        Command::Feasibility => feasibility(spec),
    }
}

fn line(name: impl Into<String>, value: impl ToString) -> (String, String) {
    (name.into(), value.to_string())
}

fn spectral(codes: &[u8], bin: u64) -> Result<SpectralMetrics> {
    let x: Vec<f64> = codes.iter().map(|&c| c as f64).collect();
    Ok(spectral_metrics(&x, bin as usize, x.len(), Window::None)?)
}

fn spectral_json(m: &SpectralMetrics) -> Value {
    json!({
        "sndr_db": m.sndr_db,
        "sfdr_db": m.sfdr_db,
        "enob": m.enob,
        "signal_bin": m.signal_bin,
        "spur_bin": m.spur_bin,
        "n_fft": m.n_fft,
        "leakage_warning": m.leakage_warning,
    })
}

fn stream_table(stream: &ConversionStream) -> (CsvTable, Value) {
    let mut t = CsvTable::new(&[
        "sample_index",
        "polarity",
        "code",
        "out_of_range",
        "metastable",
    ]);
    let mut records = Vec::with_capacity(stream.records.len());
    for r in &stream.records {
        t.push(vec![
            r.sample_index.to_string(),
            r.polarity.as_str().into(),
            r.code.to_string(),
            r.out_of_range.to_string(),
            r.metastable_count().to_string(),
        ]);
        records.push(json!({
            "sample_index": r.sample_index,
            "polarity": r.polarity.as_str(),
            "code": r.code,
            "out_of_range": r.out_of_range,
            "metastable": r.metastable_count(),
        }));
    }
    (t, Value::Array(records))
}

fn simulate(spec: &ExperimentSpec, rng: &RngStream) -> Result<Outcome> {
    let stream = spec.adc.simulate(&spec.stimulus.signal(), rng)?;
    let codes = stream.codes();
    let mut summary = Vec::new();
    let metrics = match spec.stimulus.kind {
        StimulusKind::Sine => {
            let m = spectral(&codes, spec.stimulus.bin)?;
            summary.push(line("sndr_db", format!("{:.3}", m.sndr_db)));
            summary.push(line("sfdr_db", format!("{:.3}", m.sfdr_db)));
            summary.push(line("enob", format!("{:.3}", m.enob)));
            spectral_json(&m)
        }
        StimulusKind::Ramp => {
            let lin = code_density_linearity(&codes, N_BITS as u32, Stimulus::UniformRamp)?;
            summary.push(line("max_abs_dnl_lsb", format!("{:.4}", lin.max_abs_dnl)));
            summary.push(line("max_abs_inl_lsb", format!("{:.4}", lin.max_abs_inl)));
            summary.push(line("missing_codes", lin.missing_codes.len()));
            serde_json::to_value(&lin).expect("linearity report serializes")
        }
        StimulusKind::Dc => {
            let n = codes.len() as f64;
            let mean = codes.iter().map(|&c| c as f64).sum::<f64>() / n;
            let var = codes
                .iter()
                .map(|&c| (c as f64 - mean).powi(2))
                .sum::<f64>()
                / n;
            summary.push(line("mean_code", format!("{mean:.4}")));
            summary.push(line("code_std", format!("{:.4}", var.sqrt())));
            json!({ "mean_code": mean, "code_std": var.sqrt() })
        }
    };
    summary.push(line("out_of_range", stream.out_of_range_count()));
    summary.push(line("metastable_decisions", stream.metastable_count()));
    let (table, records) = stream_table(&stream);
    Ok(Outcome {
        table,
        result: json!({
            "metrics": metrics,
            "out_of_range": stream.out_of_range_count(),
            "metastable_decisions": stream.metastable_count(),
            "records": records,
        }),
        summary,
        overlay: None,
    })
}

fn vtc_curve(spec: &ExperimentSpec) -> Result<Outcome> {
    let vtc = &spec.adc.vtc;
    let raw = transfer_curve(vtc, spec.vtc_curve_points, false)?;
    let comp = transfer_curve(vtc, spec.vtc_curve_points, true)?;
    let mut t = CsvTable::new(&["input", "dt_uncompensated_fs", "dt_compensated_fs"]);
    for i in 0..raw.inputs.len() {
        t.push(vec![
            num(raw.inputs[i]),
            num(raw.dt_out[i].0),
            num(comp.dt_out[i].0),
        ]);
    }
    let ratio = raw.nl / comp.nl;
    Ok(Outcome {
        table: t,
        result: json!({
            "uncompensated": raw,
            "compensated": comp,
            "improvement_ratio": ratio,
        }),
        summary: vec![
            line("nl_uncompensated", format!("{:.4}", raw.nl)),
            line("nl_compensated", format!("{:.4}", comp.nl)),
            line("improvement_ratio", format!("{ratio:.2}")),
            line(
                "linear_range_compensated_fs",
                format!("{:.1}", comp.linear_range.0),
            ),
        ],
        overlay: None,
    })
}

fn ddu(spec: &ExperimentSpec) -> Result<Outcome> {
    let sweep = ddu_sweep(spec.adc.tdc.stage(spec.ddu_sweep_stage));
    let mut t = CsvTable::new(&["swept", "code", "t_rise_fs", "t_fall_fs"]);
    for r in &sweep.rows {
        t.push(vec![
            r.swept.as_str().into(),
            r.code.to_string(),
            num(r.t_rise.0),
            num(r.t_fall.0),
        ]);
    }
    Ok(Outcome {
        table: t,
        result: serde_json::to_value(&sweep).expect("sweep serializes"),
        summary: vec![
            line("stage", sweep.stage),
            line(
                "rise_shift_under_fall_sweep_fs",
                num(sweep.rise_shift_under_fall_sweep.0),
            ),
            line(
                "fall_shift_under_rise_sweep_fs",
                num(sweep.fall_shift_under_rise_sweep.0),
            ),
            line("rise_range_fs", num(sweep.rise_range.0)),
            line("fall_range_fs", num(sweep.fall_range.0)),
        ],
        overlay: None,
    })
}

fn sweep_dt(spec: &ExperimentSpec, rng: &RngStream) -> Result<Outcome> {
    let table = dt_deviation_sweep(&spec.adc, &spec.sweep, rng)?;
    let mut t = CsvTable::new(&[
        "sigma_dt_lsb",
        "sndr_db_mean",
        "sndr_db_std",
        "sfdr_db_mean",
        "sfdr_db_std",
    ]);
    let mut summary = Vec::new();
    for r in &table.rows {
        t.push(vec![
            num(r.sigma_dt_lsb),
            num(r.sndr_db_mean),
            num(r.sndr_db_std),
            num(r.sfdr_db_mean),
            num(r.sfdr_db_std),
        ]);
        summary.push(line(
            format!("sndr_db[sigma_dt_lsb={}]", r.sigma_dt_lsb),
            format!("{:.2} ± {:.2}", r.sndr_db_mean, r.sndr_db_std),
        ));
        summary.push(line(
            format!("sfdr_db[sigma_dt_lsb={}]", r.sigma_dt_lsb),
            format!("{:.2} ± {:.2}", r.sfdr_db_mean, r.sfdr_db_std),
        ));
    }
    Ok(Outcome {
        table: t,
        result: serde_json::to_value(&table).expect("sweep table serializes"),
        summary,
        overlay: None,
    })
}

fn bank_dnl(adc: &AdcConfig, spec: &ExperimentSpec, rng: &RngStream) -> Result<[f64; 2]> {
    let mut out = [0.0; 2];
    for (i, p) in Polarity::BOTH.into_iter().enumerate() {
        let d = partial_dnl(adc, N_BITS, p, &spec.calib, &rng.derive(i as u64))?;
        out[i] = d.iter().fold(0.0, |m: f64, x| m.max(x.abs()));
    }
    Ok(out)
}

fn calibrate(spec: &ExperimentSpec, rng: &RngStream) -> Result<Outcome> {
    let measure = rng.derive(MEASURE_STREAM);
    let sine = spec.stimulus.kind == StimulusKind::Sine;
    let sndr = |adc: &AdcConfig| -> Result<Option<f64>> {
        if !sine {
            return Ok(None);
        }
        let s = adc.simulate(&spec.stimulus.signal(), &measure)?;
        Ok(Some(spectral(&s.codes(), spec.stimulus.bin)?.sndr_db))
    };

    let mut adc = spec.adc.clone();
    let pre_dnl = bank_dnl(&adc, spec, &measure)?;
    let pre_sndr = sndr(&adc)?;
    let report = run_foreground_calibration(&mut adc, &spec.calib, &rng.derive(CALIB_STREAM))?;
    let post_dnl = bank_dnl(&adc, spec, &measure)?;
    let post_sndr = sndr(&adc)?;

    let mut t = CsvTable::new(&[
        "stage",
        "polarity",
        "iterations",
        "code_rise",
        "code_fall",
        "conv_code",
        "max_dnl_lsb",
        "depth",
        "converged",
    ]);
    for e in &report.per_stage {
        t.push(vec![
            e.stage.to_string(),
            e.polarity.as_str().into(),
            e.iterations.to_string(),
            e.code_rise.to_string(),
            e.code_fall.to_string(),
            e.conv_code.to_string(),
            num(e.max_dnl_lsb),
            e.depth.to_string(),
            e.converged.to_string(),
        ]);
    }
    let stages = &adc.tdc.stages[..TUNED_STAGES];
    let converged = report.per_stage.iter().filter(|e| e.converged).count();
    let failed: Vec<String> = report
        .failed_stages()
        .iter()
        .map(|(k, p)| format!("{}:{k}", p.as_str()))
        .collect();
    let mut summary = vec![
        line(
            "converged_stages",
            format!("{converged}/{}", report.per_stage.len()),
        ),
        line(
            "failed_stages",
            if failed.is_empty() {
                "none".into()
            } else {
                failed.join(",")
            },
        ),
        line("total_histograms", report.total_histograms),
        line(
            "reverted_banks",
            if report.reverted_banks.is_empty() {
                "none".to_string()
            } else {
                report
                    .reverted_banks
                    .iter()
                    .map(|p| p.as_str())
                    .collect::<Vec<_>>()
                    .join(",")
            },
        ),
    ];
    for (i, p) in Polarity::BOTH.into_iter().enumerate() {
        summary.push(line(
            format!("max_abs_dnl_lsb[{}]", p.as_str()),
            format!("{:.4} -> {:.4}", pre_dnl[i], post_dnl[i]),
        ));
    }
    if let (Some(a), Some(b)) = (pre_sndr, post_sndr) {
        summary.push(line("sndr_db", format!("{a:.3} -> {b:.3}")));
    }
    let mut tdc = toml::Table::new();
    let codes = |f: fn(&tdadc::tdc::StageConfig) -> u8| {
        toml::Value::Array(
            stages
                .iter()
                .map(|s| toml::Value::Integer(f(s) as i64))
                .collect(),
        )
    };
    tdc.insert("code_rise".into(), codes(|s| s.ddu.code_rise));
    tdc.insert("code_fall".into(), codes(|s| s.ddu.code_fall));
    tdc.insert("conv_code".into(), codes(|s| s.conv_code));
    let mut doc = toml::Table::new();
    doc.insert("tdc".into(), toml::Value::Table(tdc));
    let overlay = format!(
        "# calibrated codes; seed = {}, all_converged = {}\n{}",
        spec.seed,
        report.all_converged(),
        toml::to_string(&doc).expect("overlay serializes")
    );
    Ok(Outcome {
        overlay: Some(overlay),
        table: t,
        result: json!({
            "report": report,
            "all_converged": report.all_converged(),
            "calibrated_tdc": {
                "code_rise": stages.iter().map(|s| s.ddu.code_rise).collect::<Vec<_>>(),
                "code_fall": stages.iter().map(|s| s.ddu.code_fall).collect::<Vec<_>>(),
                "conv_code": stages.iter().map(|s| s.conv_code).collect::<Vec<_>>(),
            },
            "max_abs_dnl_lsb": {
                "pre": { "rising": pre_dnl[0], "falling": pre_dnl[1] },
                "post": { "rising": post_dnl[0], "falling": post_dnl[1] },
            },
            "sndr_db": { "pre": pre_sndr, "post": post_sndr },
        }),
        summary,
    })
}

fn power(spec: &ExperimentSpec) -> Result<Outcome> {
    let c = toggle_compare(spec.power.n_delay_elements, spec.power.n_samples);
    let mut t = CsvTable::new(&[
        "mode",
        "n_delay_elements",
        "n_samples",
        "transitions",
        "transitions_per_sample_per_element",
    ]);
    for (name, r) in [("single_edge", &c.single), ("dual_edge", &c.dual)] {
        t.push(vec![
            name.into(),
            r.n_delay_elements.to_string(),
            r.n_samples.to_string(),
            r.transitions.to_string(),
            num(r.transitions_per_sample_per_element),
        ]);
    }
    Ok(Outcome {
        table: t,
        result: serde_json::to_value(&c).expect("comparison serializes"),
        summary: vec![
            line("transitions_single_edge", c.single.transitions),
            line("transitions_dual_edge", c.dual.transitions),
            line("reduction", num(c.reduction)),
        ],
        overlay: None,
    })
}

fn feasibility(spec: &ExperimentSpec) -> Result<Outcome> {
    let b = spec.adc.timing_budget();
    let mut t = CsvTable::new(&[
        "variant",
        "t_s_fs",
        "t_fs_fs",
        "t_m_fs",
        "t_reset_fs",
        "min_period_fs",
        "max_rate_hz",
        "feasible",
    ]);
    let mut variants = Vec::new();
    let mut summary = Vec::new();
    for (name, reset_free) in [("single_edge", false), ("reset_free", true)] {
        let min = b.min_period(reset_free);
        let ok = timing_feasible(&b, reset_free);
        let rate = 1e15 / min.0;
        t.push(vec![
            name.into(),
            num(b.t_s.0),
            num(b.t_fs.0),
            num(b.t_m.0),
            num(b.t_reset.0),
            num(min.0),
            num(rate),
            ok.to_string(),
        ]);
        variants.push(json!({
            "variant": name,
            "min_period_fs": min.0,
            "max_rate_hz": rate,
            "feasible": ok,
        }));
        summary.push(line(format!("feasible[{name}]"), ok));
        summary.push(line(format!("min_period_fs[{name}]"), num(min.0)));
    }
    Ok(Outcome {
        table: t,
        result: json!({ "budget": b, "variants": variants }),
        summary,
        overlay: None,
    })
}
