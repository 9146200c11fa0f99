//! Rank correlations, binning, detection rates and the retraining
//! experiments built on score rankings.
//!
//! Outputs are plain CSV: learning curves as `bin,epoch,accuracy` (the
//! overall curve uses bin `all`) and correlations as `kind,value,n`.

mod bins;
mod detection;
mod experiments;
mod rank;

pub use bins::{
    bin_by_score, histogram, learning_curves_by_bin, per_class_stats, BinAssignment, BinCurves, BinScheme, ClassStats,
    Histogram,
};
pub use detection::detection_rate;
pub use experiments::{
    ascending_ranking, equalized_group_experiment, removal_experiment, ArmResult, EqualizedGroups, RemovalPoint,
};
pub use rank::{average_ranks, correlate, kendall, spearman, CorrelationKind, RankCorrelation};

use std::path::Path;

use crate::error::{Error, Result};

pub fn write_curves_csv(curves: &BinCurves, path: &Path) -> Result<()> {
    let mut w = crate::error::csv_writer(path)?;
    w.write_record(["bin", "epoch", "accuracy"])?;
    for (b, curve) in curves.curves.iter().enumerate() {
        for (e, acc) in curve.iter().flatten().enumerate() {
            w.write_record([b.to_string(), (e + 1).to_string(), acc.to_string()])?;
        }
    }
    for (e, acc) in curves.overall.iter().enumerate() {
        w.write_record(["all".to_string(), (e + 1).to_string(), acc.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_correlations_csv(rows: &[RankCorrelation], path: &Path) -> Result<()> {
    let mut w = crate::error::csv_writer(path)?;
    w.write_record(["kind", "value", "n"])?;
    for r in rows {
        w.write_record([r.kind.to_string(), r.value.to_string(), r.n.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
