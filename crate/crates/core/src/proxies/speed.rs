//! Learning-speed proxies from per-epoch training statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{EpochStats, TrainingTrace};

use super::{Orientation, ProxyKind, ProxyScores};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedStatistic {
    Accuracy,
    ProbCorrect,
    ProbMax,
    Entropy,
}

impl SpeedStatistic {
    pub const ALL: [SpeedStatistic; 4] = [
        SpeedStatistic::Accuracy,
        SpeedStatistic::ProbCorrect,
        SpeedStatistic::ProbMax,
        SpeedStatistic::Entropy,
    ];

    pub fn kind(self) -> ProxyKind {
        match self {
            SpeedStatistic::Accuracy => ProxyKind::CumAcc,
            SpeedStatistic::ProbCorrect => ProxyKind::CumPL,
            SpeedStatistic::ProbMax => ProxyKind::CumPmax,
            SpeedStatistic::Entropy => ProxyKind::CumEntropy,
        }
    }

    pub fn from_kind(kind: ProxyKind) -> Option<Self> {
        SpeedStatistic::ALL.into_iter().find(|s| s.kind() == kind)
    }

    fn value(self, stats: &EpochStats, j: usize) -> f64 {
        match self {
            SpeedStatistic::Accuracy => f64::from(u8::from(stats.correct[j])),
            SpeedStatistic::ProbCorrect => stats.prob_correct[j],
            SpeedStatistic::ProbMax => stats.prob_max[j],
            SpeedStatistic::Entropy => stats.entropy[j],
        }
    }
}

fn check_trace(trace: &TrainingTrace) -> Result<()> {
    if trace.is_empty() {
        return Err(Error::invalid("training trace has no epochs"));
    }
    let m = trace.eval_indices.len();
    if let Some(e) = trace.epochs.iter().position(|s| s.correct.len() != m) {
        return Err(Error::invalid(format!("epoch {} does not cover all {m} examples", e + 1)));
    }
    Ok(())
}

/// Mean of `stat` over epochs `1..=up_to_epoch`; entropy is negated.
pub fn learning_speed_scores(trace: &TrainingTrace, stat: SpeedStatistic, up_to_epoch: usize) -> Result<ProxyScores> {
    check_trace(trace)?;
    if up_to_epoch == 0 || up_to_epoch > trace.num_epochs() {
        return Err(Error::invalid(format!(
            "up_to_epoch {up_to_epoch} outside 1..={}",
            trace.num_epochs()
        )));
    }
    let m = trace.eval_indices.len();
    let epochs = &trace.epochs[..up_to_epoch];
    let sign = if stat == SpeedStatistic::Entropy { -1.0 } else { 1.0 };
    let scores = (0..m)
        .map(|j| sign * epochs.iter().map(|s| stat.value(s, j)).sum::<f64>() / up_to_epoch as f64)
        .collect();
    Ok(ProxyScores {
        kind: stat.kind(),
        space: None,
        indices: trace.eval_indices.clone(),
        scores,
        orientation: if sign < 0.0 {
            Orientation::Negated
        } else {
            Orientation::Identity
        },
    })
}

/// Negated count of correct-to-incorrect transitions between consecutive
/// epochs. An example that is never learned is never forgotten, so it ties
/// with one that is always right.
pub fn forgetting_counts(trace: &TrainingTrace) -> Result<ProxyScores> {
    check_trace(trace)?;
    let m = trace.eval_indices.len();
    let scores = (0..m)
        .map(|j| {
            let n = trace
                .epochs
                .windows(2)
                .filter(|w| w[0].correct[j] && !w[1].correct[j])
                .count();
            0.0 - n as f64
        })
        .collect();
    Ok(ProxyScores {
        kind: ProxyKind::Forgetting,
        space: None,
        indices: trace.eval_indices.clone(),
        scores,
        orientation: Orientation::Negated,
    })
}
