//! Delay-chain transition counting as a relative power proxy.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ToggleMode {
    /// Each conversion is followed by a reset edge through every element.
    SingleEdge,
    /// Consecutive samples ride alternating edges; nothing is reset.
    DualEdge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToggleReport {
    pub mode: ToggleMode,
    pub n_delay_elements: u64,
    pub n_samples: u64,
    pub transitions: u64,
    pub transitions_per_sample_per_element: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToggleComparison {
    pub single: ToggleReport,
    pub dual: ToggleReport,
    /// `1 - dual / single` at the delay-element level.
    pub reduction: f64,
    pub note: String,
}

/// Logic levels an element passes through while handling one sample.
fn sample_levels(mode: ToggleMode, sample: u64) -> &'static [bool] {
    match mode {
        // data edge up, then reset back down
        ToggleMode::SingleEdge => &[true, false],
        ToggleMode::DualEdge => {
            if sample.is_multiple_of(2) {
                &[true]
            } else {
                &[false]
            }
        }
    }
}

/// Counts level changes of one element over `n_samples` conversions.
fn element_transitions(mode: ToggleMode, n_samples: u64) -> u64 {
    let mut level = false;
    let mut count = 0;
    for s in 0..n_samples {
        for &next in sample_levels(mode, s) {
            count += (next != level) as u64;
            level = next;
        }
    }
    count
}

fn report(mode: ToggleMode, n_delay_elements: u64, n_samples: u64) -> ToggleReport {
    // every element sees the same edge sequence
    let transitions = n_delay_elements * element_transitions(mode, n_samples);
    let rate = if n_delay_elements * n_samples > 0 {
        transitions as f64 / (n_delay_elements * n_samples) as f64
    } else {
        0.0
    };
    ToggleReport {
        mode,
        n_delay_elements,
        n_samples,
        transitions,
        transitions_per_sample_per_element: rate,
    }
}

/// Transition counts of a single-edge (reset) chain against the dual-edge
/// chain for the same workload.
pub fn toggle_compare(n_delay_elements: u64, n_samples: u64) -> ToggleComparison {
    let single = report(ToggleMode::SingleEdge, n_delay_elements, n_samples);
    let dual = report(ToggleMode::DualEdge, n_delay_elements, n_samples);
    // the ratio is a per-element property; probe one element when the
    // workload is empty
    let (s, d) = if single.transitions > 0 {
        (single.transitions, dual.transitions)
    } else {
        (
            element_transitions(ToggleMode::SingleEdge, 2),
            element_transitions(ToggleMode::DualEdge, 2),
        )
    };
    ToggleComparison {
        reduction: 1.0 - d as f64 / s as f64,
        single,
        dual,
        note: "delay-element transitions only; chain-level savings also carry \
               comparator, clocking and bank overhead, so they stay below this bound"
            .into(),
    }
}
