//! Measurement maths: spectra, code-density linearity, transition counts and
//! the ΔT deviation Monte Carlo.

mod linearity;
mod power;
mod spectral;
mod sweep;

pub use linearity::{code_density_linearity, LinearityReport, Stimulus};
pub use power::{toggle_compare, ToggleComparison, ToggleMode, ToggleReport};
pub use spectral::{power_spectrum, spectral_metrics, SpectralMetrics, Window};
pub use sweep::{dt_deviation_sweep, SweepRow, SweepSpec, SweepTable};
