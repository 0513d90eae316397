//! Stage delay configuration: decoupled delay units and conventional cells.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{Polarity, TimeFs};
use crate::N_BITS;

/// Largest 4-bit DDU code.
pub const DDU_MAX: u8 = 15;
/// Largest 2-bit conventional-cell code.
pub const CONV_MAX: u8 = 3;
/// Mid-scale DDU code; stages start here and nominal ΔT is realized here.
pub const DDU_INIT: u8 = 8;
/// Mid-scale conventional-cell code.
pub const CONV_INIT: u8 = 2;

/// A decoupled delay unit: independent rising and falling tuning networks
/// with a small bounded leak from each code into the other edge's delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DduSetting {
    pub code_rise: u8,
    pub code_fall: u8,
    pub step_rise: TimeFs,
    pub step_fall: TimeFs,
    /// Total rising-delay shift across a full `code_fall` sweep.
    pub couple_rf: TimeFs,
    /// Total falling-delay shift across a full `code_rise` sweep.
    pub couple_fr: TimeFs,
    pub base_rise: TimeFs,
    pub base_fall: TimeFs,
}

/// Tuning granularity shared by all stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningSteps {
    pub ddu_step_rise: TimeFs,
    pub ddu_step_fall: TimeFs,
    pub couple_rf: TimeFs,
    pub couple_fr: TimeFs,
    pub conv_step_rise: TimeFs,
    pub conv_step_fall: TimeFs,
}

impl Default for TuningSteps {
    fn default() -> Self {
        TuningSteps {
            ddu_step_rise: TimeFs(50.0),
            ddu_step_fall: TimeFs(50.0),
            couple_rf: TimeFs(210.0),
            couple_fr: TimeFs(85.0),
            // finer than the DDU step; moves the two edges unequally (1 : 1.3)
            conv_step_rise: TimeFs(30.0),
            conv_step_fall: TimeFs(39.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    /// 1-based, MSB first.
    pub index: usize,
    /// `t_fs / 2^(index+1)` for ΔT stages, zero for the last stage.
    pub dt_nominal: TimeFs,
    pub ddu: DduSetting,
    pub conv_code: u8,
    pub conv_step_rise: TimeFs,
    pub conv_step_fall: TimeFs,
    pub mismatch_rise: TimeFs,
    pub mismatch_fall: TimeFs,
    /// Stage 1 has no conventional cells, leaving room for its large ΔT.
    pub has_conventional: bool,
}

impl StageConfig {
    /// Stage at mid-scale codes whose effective delays equal the nominal ΔT.
    pub fn nominal(index: usize, t_fs: TimeFs, steps: &TuningSteps) -> Self {
        let dt_nominal = if index < N_BITS {
            t_fs / (1u64 << (index + 1)) as f64
        } else {
            TimeFs::ZERO
        };
        let mut s = StageConfig {
            index,
            dt_nominal,
            ddu: DduSetting {
                code_rise: DDU_INIT,
                code_fall: DDU_INIT,
                step_rise: steps.ddu_step_rise,
                step_fall: steps.ddu_step_fall,
                couple_rf: steps.couple_rf,
                couple_fr: steps.couple_fr,
                base_rise: TimeFs::ZERO,
                base_fall: TimeFs::ZERO,
            },
            conv_code: CONV_INIT,
            conv_step_rise: steps.conv_step_rise,
            conv_step_fall: steps.conv_step_fall,
            mismatch_rise: TimeFs::ZERO,
            mismatch_fall: TimeFs::ZERO,
            has_conventional: index != 1,
        };
        s.recenter();
        s
    }

    /// True for stages that insert a ΔT (all but the last).
    pub fn applies_delay(&self) -> bool {
        self.index < N_BITS
    }

    /// Code-dependent part of the stage delay, before the base offset.
    fn tuning(&self, polarity: Polarity) -> TimeFs {
        let ddu = &self.ddu;
        let conv = if self.has_conventional {
            self.conv_code as f64
        } else {
            0.0
        };
        match polarity {
            Polarity::Rising => {
                ddu.step_rise * ddu.code_rise as f64
                    + ddu.couple_rf * (ddu.code_fall as f64 / DDU_MAX as f64)
                    + self.conv_step_rise * conv
            }
            Polarity::Falling => {
                ddu.step_fall * ddu.code_fall as f64
                    + ddu.couple_fr * (ddu.code_rise as f64 / DDU_MAX as f64)
                    + self.conv_step_fall * conv
            }
        }
    }

    /// Sets the base offsets so mid-scale codes realize exactly `dt_nominal`.
    pub fn recenter(&mut self) {
        let saved = (self.ddu.code_rise, self.ddu.code_fall, self.conv_code);
        self.ddu.code_rise = DDU_INIT;
        self.ddu.code_fall = DDU_INIT;
        self.conv_code = CONV_INIT;
        self.ddu.base_rise = -self.tuning(Polarity::Rising);
        self.ddu.base_fall = -self.tuning(Polarity::Falling);
        (self.ddu.code_rise, self.ddu.code_fall, self.conv_code) = saved;
    }

    /// Delay inserted on the leading edge of the given polarity.
    pub fn effective_dt(&self, polarity: Polarity) -> TimeFs {
        if !self.applies_delay() {
            return TimeFs::ZERO;
        }
        let (base, mismatch) = match polarity {
            Polarity::Rising => (self.ddu.base_rise, self.mismatch_rise),
            Polarity::Falling => (self.ddu.base_fall, self.mismatch_fall),
        };
        self.dt_nominal + mismatch + (base + self.tuning(polarity))
    }

    pub fn ddu_code(&self, polarity: Polarity) -> u8 {
        match polarity {
            Polarity::Rising => self.ddu.code_rise,
            Polarity::Falling => self.ddu.code_fall,
        }
    }

    pub fn set_ddu_code(&mut self, polarity: Polarity, code: u8) {
        match polarity {
            Polarity::Rising => self.ddu.code_rise = code,
            Polarity::Falling => self.ddu.code_fall = code,
        }
    }

    pub fn mismatch(&self, polarity: Polarity) -> TimeFs {
        match polarity {
            Polarity::Rising => self.mismatch_rise,
            Polarity::Falling => self.mismatch_fall,
        }
    }

    pub fn mismatch_mut(&mut self, polarity: Polarity) -> &mut TimeFs {
        match polarity {
            Polarity::Rising => &mut self.mismatch_rise,
            Polarity::Falling => &mut self.mismatch_fall,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=N_BITS).contains(&self.index) {
            return Err(Error::config(
                "stage.index",
                format!("{} not in 1..=8", self.index),
            ));
        }
        if self.has_conventional == (self.index == 1) {
            return Err(Error::config(
                "stage.has_conventional",
                "only stage 1 omits conventional cells",
            ));
        }
        if self.ddu.code_rise > DDU_MAX || self.ddu.code_fall > DDU_MAX {
            return Err(Error::config("stage.ddu", "DDU codes must be in 0..=15"));
        }
        if self.conv_code > CONV_MAX {
            return Err(Error::config("stage.conv_code", "must be in 0..=3"));
        }
        if !(self.ddu.step_rise.0 > 0.0) || !(self.ddu.step_fall.0 > 0.0) {
            return Err(Error::config(
                "stage.ddu.step",
                "DDU steps must be positive",
            ));
        }
        if !(self.conv_step_rise.0 > 0.0) || !(self.conv_step_fall.0 > 0.0) {
            return Err(Error::config(
                "stage.conv_step",
                "conventional steps must be positive",
            ));
        }
        if !(self.ddu.couple_rf.0 >= 0.0) || !(self.ddu.couple_fr.0 >= 0.0) {
            return Err(Error::config(
                "stage.ddu.couple",
                "coupling must be non-negative",
            ));
        }
        for t in [
            self.mismatch_rise,
            self.mismatch_fall,
            self.ddu.base_rise,
            self.ddu.base_fall,
        ] {
            if !t.is_finite() {
                return Err(Error::config("stage.mismatch", "must be finite"));
            }
        }
        Ok(())
    }
}

/// One point of a DDU code sweep: effective stage delays of both edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DduSweepRow {
    /// Which edge's code is being swept.
    pub swept: Polarity,
    pub code: u8,
    pub t_rise: TimeFs,
    pub t_fall: TimeFs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DduSweep {
    pub stage: usize,
    pub rows: Vec<DduSweepRow>,
    /// Range of the rising delay while `code_fall` sweeps 0..=15.
    pub rise_shift_under_fall_sweep: TimeFs,
    /// Range of the falling delay while `code_rise` sweeps 0..=15.
    pub fall_shift_under_rise_sweep: TimeFs,
    /// Tuning range of each edge under its own code.
    pub rise_range: TimeFs,
    pub fall_range: TimeFs,
}

fn spread(values: impl Iterator<Item = f64>) -> TimeFs {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    TimeFs(hi - lo)
}

/// Sweeps each DDU code across its full range with the other code held.
pub fn ddu_sweep(stage: &StageConfig) -> DduSweep {
    let mut rows = Vec::with_capacity(2 * (DDU_MAX as usize + 1));
    for swept in Polarity::BOTH {
        for code in 0..=DDU_MAX {
            let mut s = *stage;
            s.set_ddu_code(swept, code);
            rows.push(DduSweepRow {
                swept,
                code,
                t_rise: s.effective_dt(Polarity::Rising),
                t_fall: s.effective_dt(Polarity::Falling),
            });
        }
    }
    let by = |swept: Polarity| rows.iter().filter(move |r| r.swept == swept);
    DduSweep {
        stage: stage.index,
        rise_shift_under_fall_sweep: spread(by(Polarity::Falling).map(|r| r.t_rise.0)),
        fall_shift_under_rise_sweep: spread(by(Polarity::Rising).map(|r| r.t_fall.0)),
        rise_range: spread(by(Polarity::Rising).map(|r| r.t_rise.0)),
        fall_range: spread(by(Polarity::Falling).map(|r| r.t_fall.0)),
        rows,
    }
}
