use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum average hits per code for a usable histogram.
pub const MIN_HITS_PER_CODE: usize = 64;

/// Stimulus assumed by the code-density test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Stimulus {
    #[default]
    UniformRamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearityReport {
    pub n_bits: u32,
    /// Interior codes `1..2^n - 1`; element `i` belongs to code `i + 1`.
    pub dnl: Vec<f64>,
    pub inl: Vec<f64>,
    pub max_abs_dnl: f64,
    pub max_abs_inl: f64,
    pub missing_codes: Vec<u32>,
    pub histogram: Vec<u64>,
}

/// Code-density DNL/INL of a full-scale uniform ramp.
///
/// The end codes absorb over-range and are excluded. The average bin is the
/// interior mean, so the DNL sums to zero and the INL ends at zero.
pub fn code_density_linearity<C: Copy + Into<u32>>(
    codes: &[C],
    n_bits: u32,
    stimulus: Stimulus,
) -> Result<LinearityReport> {
    let Stimulus::UniformRamp = stimulus;
    if !(1..=16).contains(&n_bits) {
        return Err(Error::config(
            "n_bits",
            format!("must be in [1, 16], got {n_bits}"),
        ));
    }
    let n_codes = 1usize << n_bits;
    if codes.len() < MIN_HITS_PER_CODE * n_codes {
        return Err(Error::Statistics(format!(
            "{} samples for {n_codes} codes; need at least {MIN_HITS_PER_CODE} hits per code",
            codes.len()
        )));
    }
    let mut histogram = vec![0u64; n_codes];
    for &c in codes {
        let c: u32 = c.into();
        let slot = histogram
            .get_mut(c as usize)
            .ok_or_else(|| Error::Statistics(format!("code {c} exceeds {n_bits} bits")))?;
        *slot += 1;
    }
    let interior = &histogram[1..n_codes - 1];
    let total: u64 = interior.iter().sum();
    let (dnl, inl) = if interior.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        if total == 0 {
            return Err(Error::Statistics("no hits on interior codes".into()));
        }
        let mean = total as f64 / interior.len() as f64;
        let dnl: Vec<f64> = interior.iter().map(|&h| h as f64 / mean - 1.0).collect();
        let inl = dnl
            .iter()
            .scan(0.0, |acc, d| {
                *acc += d;
                Some(*acc)
            })
            .collect();
        (dnl, inl)
    };
    let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(LinearityReport {
        n_bits,
        max_abs_dnl: max_abs(&dnl),
        max_abs_inl: max_abs(&inl),
        missing_codes: (0..n_codes as u32)
            .filter(|&c| histogram[c as usize] == 0)
            .collect(),
        dnl,
        inl,
        histogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(n_bits: u32, per_code: usize) -> Vec<u32> {
        (0..1u32 << n_bits)
            .flat_map(|c| std::iter::repeat_n(c, per_code))
            .collect()
    }

    #[test]
    fn uniform_histogram_is_flat() {
        let r = code_density_linearity(&uniform(8, 64), 8, Stimulus::UniformRamp).unwrap();
        assert_eq!(r.dnl.len(), 254);
        assert!(r.dnl.iter().chain(&r.inl).all(|&x| x == 0.0));
        assert!(r.missing_codes.is_empty());
    }

    #[test]
    fn doubled_code_width() {
        // code 100 takes its neighbour's share: +1 there, -1 (missing) next door
        let mut codes = uniform(8, 100);
        for c in codes.iter_mut() {
            if *c == 101 {
                *c = 100;
            }
        }
        let r = code_density_linearity(&codes, 8, Stimulus::UniformRamp).unwrap();
        assert!((r.dnl[99] - 1.0).abs() < 1e-12);
        assert!((r.dnl[100] + 1.0).abs() < 1e-12);
        assert_eq!(r.missing_codes, vec![101]);
        assert!((r.inl[99] - 1.0).abs() < 1e-12);
        assert!(r.inl[100].abs() < 1e-12);
        assert!(r.inl.last().unwrap().abs() < 1e-9);
    }

    #[test]
    fn too_few_samples() {
        let err = code_density_linearity(&uniform(8, 10), 8, Stimulus::UniformRamp).unwrap_err();
        assert!(matches!(err, Error::Statistics(_)));
    }

    #[test]
    fn one_bit_has_no_interior() {
        let r = code_density_linearity(&uniform(1, 64), 1, Stimulus::UniformRamp).unwrap();
        assert!(r.dnl.is_empty());
        assert_eq!(r.max_abs_dnl, 0.0);
    }

    #[test]
    fn u8_codes_accepted() {
        let codes: Vec<u8> = (0..=255u8).flat_map(|c| [c; 64]).collect();
        let r = code_density_linearity(&codes, 8, Stimulus::UniformRamp).unwrap();
        assert_eq!(r.max_abs_dnl, 0.0);
    }
}
