use rand::Rng;
use tdadc::analysis::{spectral_metrics, Window};
use tdadc::calib::{partial_dnl, run_foreground_calibration, CalibSpec, SearchStrategy};
use tdadc::signal::SignalSpec;
use tdadc::tdc::TdcConfig;
use tdadc::vtc::VtcConfig;
use tdadc::{AdcConfig, Polarity, RngStream, TimeFs, N_BITS};

fn perturbed(seed: u64, span_steps: f64) -> AdcConfig {
    let mut adc = AdcConfig {
        vtc: VtcConfig::ideal(),
        tdc: TdcConfig::nominal(),
        ..AdcConfig::nominal()
    };
    let mut r = RngStream::new(seed).derive(99).rng();
    for k in 1..N_BITS {
        let step = adc.tdc.stage(k).ddu.step_rise.0;
        for pol in Polarity::BOTH {
            let e = r.random_range(-span_steps..=span_steps) * step;
            *adc.tdc.stage_mut(k).mismatch_mut(pol) = TimeFs(e);
        }
    }
    adc
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn bank_dnl(adc: &AdcConfig, pol: Polarity, spec: &CalibSpec) -> f64 {
    max_abs(&partial_dnl(adc, 8, pol, spec, &RngStream::new(5)).unwrap())
}

fn sndr(adc: &AdcConfig, seed: u64) -> f64 {
    let out = adc
        .simulate(&SignalSpec::full_scale_sine(127), &RngStream::new(seed))
        .unwrap();
    let codes: Vec<f64> = out.records.iter().map(|r| r.code as f64).collect();
    spectral_metrics(&codes, 127, 4096, Window::None)
        .unwrap()
        .sndr_db
}

#[test]
fn random_mismatch_within_span_recovers() {
    let spec = CalibSpec::default();
    for seed in 100..103 {
        let mut adc = perturbed(seed, 2.0);
        let pre = Polarity::BOTH.map(|p| bank_dnl(&adc, p, &spec));
        let report = run_foreground_calibration(&mut adc, &spec, &RngStream::new(seed)).unwrap();
        assert!(
            report.all_converged(),
            "seed {seed}: {:?}",
            report.failed_stages()
        );
        for (i, p) in Polarity::BOTH.into_iter().enumerate() {
            let post = bank_dnl(&adc, p, &spec);
            assert!(post <= 0.5, "seed {seed} {p:?}: {post}");
            assert!(post <= pre[i], "seed {seed} {p:?}: {post} > {}", pre[i]);
        }
        assert!(sndr(&adc, seed) >= 40.0);
    }
}

#[test]
fn out_of_span_faults_are_localized() {
    let mut adc = perturbed(7, 0.0);
    adc.tdc.stage_mut(2).mismatch_rise = TimeFs(-2_000.0);
    adc.tdc.stage_mut(5).mismatch_fall = TimeFs(1_500.0);
    let spec = CalibSpec {
        ramp_points: 65_536,
        ..CalibSpec::default()
    };
    let report = run_foreground_calibration(&mut adc, &spec, &RngStream::new(7)).unwrap();
    let failed = report.failed_stages();
    assert!(failed.contains(&(2, Polarity::Rising)), "{failed:?}");
    assert!(failed.contains(&(5, Polarity::Falling)), "{failed:?}");
    let rise2 = report
        .per_stage
        .iter()
        .find(|e| e.stage == 2 && e.polarity == Polarity::Rising)
        .unwrap();
    assert_eq!((rise2.code_rise, rise2.conv_code), (15, 3));
    for e in report.per_stage.iter().filter(|e| !e.converged) {
        assert!(e.max_dnl_lsb > spec.dnl_tolerance);
    }
}

#[test]
fn calibration_is_idempotent() {
    let spec = CalibSpec {
        ramp_points: 65_536,
        ..CalibSpec::default()
    };
    let mut adc = perturbed(3, 2.0);
    adc.tdc.jitter_sigma = TimeFs::ZERO;
    run_foreground_calibration(&mut adc, &spec, &RngStream::new(1)).unwrap();
    let once = adc.tdc.clone();
    let again = run_foreground_calibration(&mut adc, &spec, &RngStream::new(1)).unwrap();
    assert_eq!(adc.tdc, once);
    assert!(again.per_stage.iter().all(|e| e.iterations == 1));
}

#[test]
fn falling_calibration_leaves_rising_bank_alone_without_coupling() {
    let spec = CalibSpec {
        ramp_points: 65_536,
        ..CalibSpec::default()
    };
    let mut adc = perturbed(11, 2.0);
    for k in 1..=N_BITS {
        let s = adc.tdc.stage_mut(k);
        s.ddu.couple_rf = TimeFs::ZERO;
        s.ddu.couple_fr = TimeFs::ZERO;
        s.recenter();
    }
    let before_dnl = partial_dnl(&adc, 8, Polarity::Rising, &spec, &RngStream::new(2)).unwrap();
    let before_codes: Vec<u8> = adc.tdc.stages.iter().map(|s| s.ddu.code_rise).collect();
    for k in 1..N_BITS {
        tdadc::calib::calibrate_stage(
            &mut adc,
            k,
            Polarity::Falling,
            &spec,
            &RngStream::new(k as u64),
        )
        .unwrap();
    }
    let after_codes: Vec<u8> = adc.tdc.stages.iter().map(|s| s.ddu.code_rise).collect();
    assert_eq!(before_codes, after_codes);
    let after_dnl = partial_dnl(&adc, 8, Polarity::Rising, &spec, &RngStream::new(2)).unwrap();
    assert_eq!(before_dnl, after_dnl);
}

#[test]
fn greedy_also_converges() {
    let spec = CalibSpec {
        search_strategy: SearchStrategy::Greedy,
        ramp_points: 131_072,
        dnl_tolerance: 0.35,
        ..CalibSpec::default()
    };
    let mut adc = perturbed(21, 2.0);
    adc.tdc.jitter_sigma = TimeFs::ZERO;
    let report = run_foreground_calibration(&mut adc, &spec, &RngStream::new(21)).unwrap();
    assert!(report.all_converged(), "{:?}", report.failed_stages());
    assert!(report.total_histograms < 14 * 64);
}
