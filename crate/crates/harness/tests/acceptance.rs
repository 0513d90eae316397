//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits nonzero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::Rng;
use tdadc::analysis::{dt_deviation_sweep, spectral_metrics, toggle_compare, SweepSpec, Window};
use tdadc::calib::{partial_dnl, run_foreground_calibration, CalibSpec};
use tdadc::signal::SignalSpec;
use tdadc::tdc::{convert_pair, ddu_sweep, TdcConfig};
use tdadc::vtc::{transfer_curve, VtcConfig};
use tdadc::{
    ideal_quantize, timing_feasible, AdcConfig, EdgePair, Polarity, RngStream, SampledInput,
    TimeFs, TimingBudget, N_BITS,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sndr_enob(adc: &AdcConfig, seed: u64) -> (f64, f64) {
    let out = adc
        .simulate(&SignalSpec::full_scale_sine(127), &RngStream::new(seed))
        .unwrap();
    let x: Vec<f64> = out.codes().iter().map(|&c| c as f64).collect();
    let m = spectral_metrics(&x, 127, x.len(), Window::None).unwrap();
    (m.sndr_db, m.enob)
}

fn oracle_equivalence() -> Outcome {
    let tdc = TdcConfig::ideal();
    let t_fs = tdc.t_fs;
    let mut rng = RngStream::new(1).rng();
    let code_of = |dt: TimeFs, i: u64| {
        convert_pair(
            &EdgePair::from_dt(dt, i),
            &tdc,
            &mut RngStream::new(0).rng(),
        )
        .code as u32
    };
    let mut errors = 0;
    let n_grid = 1u64 << 14;
    for i in 0..n_grid {
        let dt = TimeFs(-t_fs.0 / 2.0 + t_fs.0 * i as f64 / n_grid as f64);
        errors += (code_of(dt, i) != ideal_quantize(dt, t_fs, 8).unwrap()) as usize;
    }
    for i in 0..10_000u64 {
        let dt = TimeFs(rng.random_range(-t_fs.0 / 2.0..t_fs.0 / 2.0));
        errors += (code_of(dt, i) != ideal_quantize(dt, t_fs, 8).unwrap()) as usize;
    }
    check(
        errors == 0,
        format!("{errors} code errors over 2^14 grid + 10^4 random inputs"),
    )
}

fn ideal_chain_sndr() -> Outcome {
    let (sndr, enob) = sndr_enob(&AdcConfig::ideal(), 42);
    check(
        (sndr - 49.9).abs() <= 0.5 && (enob - 8.0).abs() <= 0.1,
        format!("SNDR {sndr:.2} dB, ENOB {enob:.3}"),
    )
}

fn vtc_compensation() -> Outcome {
    let cfg = VtcConfig::nominal();
    let raw = transfer_curve(&cfg, 64, false).unwrap().nl;
    let comp = transfer_curve(&cfg, 64, true).unwrap().nl;
    let ratio = raw / comp;
    check(
        (raw - 0.130).abs() <= 0.02 && comp <= 0.020 && ratio >= 5.0,
        format!("NL {raw:.4} -> {comp:.4}, ratio {ratio:.2}"),
    )
}

fn ddu_decoupling() -> Outcome {
    let tdc = TdcConfig::nominal();
    let (mut rise, mut fall, mut zeroed) = (0.0f64, 0.0f64, 0.0f64);
    for k in 1..N_BITS {
        let s = ddu_sweep(tdc.stage(k));
        rise = rise.max(s.rise_shift_under_fall_sweep.0);
        fall = fall.max(s.fall_shift_under_rise_sweep.0);
        let mut st = *tdc.stage(k);
        st.ddu.couple_rf = TimeFs::ZERO;
        st.ddu.couple_fr = TimeFs::ZERO;
        st.recenter();
        let z = ddu_sweep(&st);
        zeroed = zeroed
            .max(z.rise_shift_under_fall_sweep.0)
            .max(z.fall_shift_under_rise_sweep.0);
    }
    check(
        rise <= 220.0 && fall <= 90.0 && zeroed == 0.0,
        format!("rise shift {rise} fs, fall shift {fall} fs, zero coupling {zeroed} fs"),
    )
}

/// Ideal VTC, nominal TDC, per-stage mismatch uniform in ±2 tuning steps.
fn mismatched(seed: u64) -> AdcConfig {
    let mut adc = AdcConfig {
        vtc: VtcConfig::ideal(),
        ..AdcConfig::nominal()
    };
    let mut r = RngStream::new(seed).derive(99).rng();
    for k in 1..N_BITS {
        let step = adc.tdc.stage(k).ddu.step_rise.0;
        for pol in Polarity::BOTH {
            *adc.tdc.stage_mut(k).mismatch_mut(pol) = TimeFs(r.random_range(-2.0..=2.0) * step);
        }
    }
    adc
}

fn calibration_recovery() -> Outcome {
    let spec = CalibSpec::default();
    let seeds = 20;
    let mut converged = 0;
    let (mut worst_dnl, mut min_sndr) = (0.0f64, f64::INFINITY);
    for seed in 0..seeds {
        let mut adc = mismatched(seed);
        let report = run_foreground_calibration(&mut adc, &spec, &RngStream::new(seed)).unwrap();
        converged += report.all_converged() as usize;
        for p in Polarity::BOTH {
            let d = partial_dnl(&adc, N_BITS, p, &spec, &RngStream::new(1000 + seed)).unwrap();
            worst_dnl = worst_dnl.max(d.iter().fold(0.0, |m, x| m.max(x.abs())));
        }
        min_sndr = min_sndr.min(sndr_enob(&adc, seed).0);
    }
    check(
        converged == seeds as usize && worst_dnl <= 0.5 && min_sndr >= 40.0,
        format!(
            "{converged}/{seeds} seeds converged, worst post max|DNL| {worst_dnl:.3} LSB, \
             min SNDR {min_sndr:.2} dB"
        ),
    )
}

fn sweep_shape() -> Outcome {
    let t = dt_deviation_sweep(
        &AdcConfig::ideal(),
        &SweepSpec::default(),
        &RngStream::new(6),
    )
    .unwrap();
    let monotone = t
        .rows
        .windows(2)
        .all(|w| w[1].sndr_db_mean <= w[0].sndr_db_mean + w[0].sndr_db_std.max(w[1].sndr_db_std));
    let sfdr_above = t
        .sndr_db
        .iter()
        .flatten()
        .zip(t.sfdr_db.iter().flatten())
        .all(|(n, f)| f >= n);
    let at_zero = t.rows[0].sndr_db_mean;
    let curve: Vec<String> = t
        .rows
        .iter()
        .map(|r| format!("{}:{:.1}", r.sigma_dt_lsb, r.sndr_db_mean))
        .collect();
    check(
        monotone && sfdr_above && (at_zero - 49.9).abs() <= 0.5,
        format!(
            "monotone {monotone}, SFDR >= SNDR {sfdr_above}, SNDR by sigma [{}]",
            curve.join(" ")
        ),
    )
}

fn power_proxy() -> Outcome {
    let cases = [(56, 4096), (21, 1001), (1, 1)];
    let r: Vec<f64> = cases
        .iter()
        .map(|&(e, s)| toggle_compare(e, s).reduction)
        .collect();
    check(r.iter().all(|&x| x == 0.5), format!("reduction {r:?}"))
}

fn timing_lint() -> Outcome {
    let b = |t_s: f64, t_reset: f64| TimingBudget {
        t_s: TimeFs(t_s),
        t_fs: TimeFs(100_000.0),
        t_m: TimeFs(30_000.0),
        t_reset: TimeFs(t_reset),
    };
    let got = [
        timing_feasible(&b(80_000.0, 0.0), false),
        timing_feasible(&b(79_999.0, 0.0), false),
        timing_feasible(&b(60_000.0, 20_000.0), true),
        timing_feasible(&b(60_000.0, 20_000.0), false),
    ];
    let want = [true, false, true, false];
    check(got == want, format!("got {got:?}, expected {want:?}"))
}

fn dual_edge_symmetry() -> Outcome {
    let mut r = RngStream::new(9).rng();
    let n = 4096;
    // every input twice: once on a rising edge, once on a falling edge
    let samples: Vec<SampledInput> = (0..n)
        .map(|_| SampledInput::from_diff(r.random_range(-1.0..1.0)))
        .flat_map(|s| [s, s])
        .collect();
    let mut adc = AdcConfig::ideal();
    let out = adc.convert_samples(&samples, &RngStream::new(0)).unwrap();
    let same = out.bank_codes(Polarity::Rising) == out.bank_codes(Polarity::Falling);

    adc.tdc.stage_mut(3).mismatch_fall = TimeFs(2_000.0);
    let out = adc.convert_samples(&samples, &RngStream::new(0)).unwrap();
    let oracle = |s: &SampledInput| {
        ideal_quantize(TimeFs(50_000.0 * s.diff()), TimeFs(100_000.0), 8).unwrap() as u8
    };
    let rising_exact = out
        .bank(Polarity::Rising)
        .all(|rec| rec.code == oracle(&samples[rec.sample_index as usize]));
    let falling_hit = out
        .bank(Polarity::Falling)
        .filter(|rec| rec.code != oracle(&samples[rec.sample_index as usize]))
        .count();
    check(
        same && rising_exact && falling_hit > 0,
        format!(
            "banks identical {same}; falling-only fault: rising oracle-exact {rising_exact}, \
             {falling_hit} falling codes moved"
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let spec = "seed = 11\n[calib]\nramp_points = 65536\n";
    std::fs::write(dir.path().join("spec.toml"), spec).unwrap();
    let run = |cmd: &str, out: &str| -> Vec<u8> {
        let status = Command::new(env!("CARGO_BIN_EXE_tdadc"))
            .args([cmd, "--spec", "spec.toml", "--out", out])
            .current_dir(dir.path())
            .output()
            .unwrap()
            .status;
        assert!(status.success(), "{cmd} failed");
        std::fs::read(Path::new(dir.path()).join(out)).unwrap()
    };
    let commands = [
        "simulate",
        "vtc-curve",
        "ddu-sweep",
        "sweep-dt",
        "calibrate",
        "power-compare",
        "feasibility",
    ];
    let mut differing = Vec::new();
    for cmd in commands {
        let out = format!("{cmd}.csv");
        if run(cmd, &out) != run(cmd, &out) {
            differing.push(cmd);
        }
    }
    check(
        differing.is_empty(),
        format!(
            "{} commands rerun, differing: {differing:?}",
            commands.len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("oracle equivalence", oracle_equivalence),
        ("ideal-chain SNDR", ideal_chain_sndr),
        ("VTC compensation", vtc_compensation),
        ("DDU decoupling", ddu_decoupling),
        ("calibration recovery", calibration_recovery),
        ("dt-deviation sweep shape", sweep_shape),
        ("reset-free power proxy", power_proxy),
        ("timing constraint lint", timing_lint),
        ("dual-edge symmetry", dual_edge_symmetry),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("[{tag}] {:>2} {name}: {detail} ({secs:.1} s)", i + 1);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
