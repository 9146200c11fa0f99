//! Per-step learning-rate schedules. Fractions are of the total step count.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    /// Linear 0 → base over the first `peak` fraction, then linear base → 0.
    Triangular { peak: f64 },
    /// base · decay^(milestones passed).
    Stagewise { milestones: Vec<f64>, decay: f64 },
    /// Linear ramp 0 → base over the first `peak` fraction, then stagewise.
    RampupPiecewise { peak: f64, milestones: Vec<f64>, decay: f64 },
    Constant,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec::triangular_15()
    }
}

impl ScheduleSpec {
    /// ∧(15%): peak after 15% of the steps.
    pub fn triangular_15() -> Self {
        ScheduleSpec::Triangular { peak: 0.15 }
    }

    /// 15% ramp, then 10× decay at 30%, 60% and 90% of the steps.
    pub fn linear_rampup_piecewise_constant() -> Self {
        ScheduleSpec::RampupPiecewise {
            peak: 0.15,
            milestones: vec![0.3, 0.6, 0.9],
            decay: 0.1,
        }
    }

    /// Decay by 0.2 at epochs 60, 90 and 120 of 200.
    pub fn stagewise_resnet() -> Self {
        ScheduleSpec::Stagewise {
            milestones: vec![0.3, 0.45, 0.6],
            decay: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check_peak = |p: f64| {
            if p > 0.0 && p < 1.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("schedule peak {p} not in (0, 1)")))
            }
        };
        let check_milestones = |ms: &[f64], decay: f64| {
            if ms.iter().any(|&m| !(m > 0.0 && m < 1.0)) {
                return Err(Error::invalid("schedule milestones must lie in (0, 1)"));
            }
            if ms.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid("schedule milestones must be strictly increasing"));
            }
            if !(decay > 0.0 && decay.is_finite()) {
                return Err(Error::invalid("schedule decay must be > 0"));
            }
            Ok(())
        };
        match self {
            ScheduleSpec::Triangular { peak } => check_peak(*peak),
            ScheduleSpec::Stagewise { milestones, decay } => check_milestones(milestones, *decay),
            ScheduleSpec::RampupPiecewise { peak, milestones, decay } => {
                check_peak(*peak)?;
                check_milestones(milestones, *decay)
            }
            ScheduleSpec::Constant => Ok(()),
        }
    }

    /// Learning rate for `step` in `[0, total_steps)`.
    pub fn lr_at(&self, step: usize, total_steps: usize, base: f64) -> Result<f64> {
        self.validate()?;
        if step >= total_steps {
            return Err(Error::invalid(format!("step {step} outside [0, {total_steps})")));
        }
        Ok(self.rate(step as f64, total_steps as f64, base))
    }

    /// Unchecked variant for the training loop (validated once up front).
    pub(crate) fn rate(&self, step: f64, total: f64, base: f64) -> f64 {
        let stagewise = |milestones: &[f64], decay: f64| {
            let passed = milestones.iter().filter(|&&m| step >= m * total).count();
            base * decay.powi(passed as i32)
        };
        match self {
            ScheduleSpec::Triangular { peak } => {
                let top = peak * total;
                if step < top {
                    base * step / top
                } else {
                    base * (total - step) / (total - top)
                }
            }
            ScheduleSpec::Stagewise { milestones, decay } => stagewise(milestones, *decay),
            ScheduleSpec::RampupPiecewise { peak, milestones, decay } => {
                let top = peak * total;
                if step < top {
                    base * step / top
                } else {
                    stagewise(milestones, *decay)
                }
            }
            ScheduleSpec::Constant => base,
        }
    }
}
