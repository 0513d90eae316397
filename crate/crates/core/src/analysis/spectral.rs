use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    None,
    Hann,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralMetrics {
    pub sndr_db: f64,
    pub sfdr_db: f64,
    pub enob: f64,
    pub signal_bin: usize,
    pub n_fft: usize,
    /// Largest non-signal bin.
    pub spur_bin: usize,
    /// Set when an unwindowed tone does not look bin-coherent.
    pub leakage_warning: bool,
}

/// Two-sided power spectrum `|X_k|² / n`, so that it sums to `Σ x²`.
pub fn power_spectrum(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf.iter().map(|c| c.norm_sqr() / n as f64).collect()
}

/// Single-tone SNDR, SFDR and ENOB of the first `n_fft` codes.
///
/// The signal occupies `signal_bin` (±1 bin with a Hann window). Everything
/// else between DC and Nyquist is noise and distortion; DC is excluded.
pub fn spectral_metrics(
    codes: &[f64],
    signal_bin: usize,
    n_fft: usize,
    window: Window,
) -> Result<SpectralMetrics> {
    if !n_fft.is_power_of_two() || n_fft < 8 {
        return Err(Error::config(
            "n_fft",
            format!("must be a power of two ≥ 8, got {n_fft}"),
        ));
    }
    if codes.len() < n_fft {
        return Err(Error::config(
            "n_fft",
            format!(
                "record has {} samples, fewer than n_fft = {n_fft}",
                codes.len()
            ),
        ));
    }
    let half = n_fft / 2;
    if signal_bin == 0 || signal_bin >= half {
        return Err(Error::config(
            "signal_bin",
            format!("must lie in (0, {half})"),
        ));
    }
    let x = &codes[..n_fft];
    let mean = x.iter().sum::<f64>() / n_fft as f64;
    let mut y: Vec<f64> = x.iter().map(|v| v - mean).collect();
    if let Window::Hann = window {
        for (i, v) in y.iter_mut().enumerate() {
            let w = 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n_fft as f64).cos();
            *v *= w;
        }
    }
    let p = power_spectrum(&y);
    // fold to one side; bins 1..half-1 appear twice, Nyquist once
    let one_sided: Vec<f64> = (0..=half)
        .map(|k| {
            if k == 0 || k == half {
                p[k]
            } else {
                2.0 * p[k]
            }
        })
        .collect();

    let guard = match window {
        Window::None => 0,
        Window::Hann => 1,
    };
    let sig_lo = signal_bin.saturating_sub(guard).max(1);
    let sig_hi = (signal_bin + guard).min(half);
    let first_noise_bin = 1 + guard;
    let is_signal = |k: usize| (sig_lo..=sig_hi).contains(&k);

    let p_sig: f64 = (sig_lo..=sig_hi).map(|k| one_sided[k]).sum();
    let total: f64 = one_sided[1..].iter().sum();
    if !(p_sig > 0.0) || p_sig <= 1e-24 * total.max(f64::MIN_POSITIVE) || total == 0.0 {
        return Err(Error::NoSignal { bin: signal_bin });
    }
    let mut p_noise = 0.0;
    let mut spur = (0usize, 0.0f64);
    for (k, &pk) in one_sided.iter().enumerate().skip(first_noise_bin) {
        if is_signal(k) {
            continue;
        }
        p_noise += pk;
        if pk > spur.1 {
            spur = (k, pk);
        }
    }
    // floor at 300 dB so exact tones stay finite
    let floor = p_sig * 1e-30;
    let sndr_db = 10.0 * (p_sig / p_noise.max(floor)).log10();
    let sfdr_db = 10.0 * (p_sig / spur.1.max(floor)).log10();

    let leakage_warning = match window {
        Window::Hann => false,
        Window::None => {
            let peak = (1..=half)
                .max_by(|&a, &b| one_sided[a].total_cmp(&one_sided[b]))
                .unwrap_or(signal_bin);
            let neighbours = one_sided[signal_bin - 1].max(one_sided[signal_bin + 1]);
            peak != signal_bin || neighbours > 1e-3 * one_sided[signal_bin]
        }
    };

    Ok(SpectralMetrics {
        sndr_db,
        sfdr_db,
        enob: (sndr_db - 1.76) / 6.02,
        signal_bin,
        n_fft,
        spur_bin: spur.0,
        leakage_warning,
    })
}
