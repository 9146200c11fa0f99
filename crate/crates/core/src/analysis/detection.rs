use crate::error::{Error, Result};
use crate::proxies::ProxyScores;

/// Fraction of the `round(γ·N)` least consistent examples (lowest oriented
/// score, ties broken by lower example index) that are flagged in `truth`.
/// `truth` is indexed by dataset example.
pub fn detection_rate(proxy: &ProxyScores, truth: Option<&[bool]>, gamma: f64) -> Result<f64> {
    let truth = truth.ok_or_else(|| Error::invalid("detection rate needs a corruption mask"))?;
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid(format!("gamma {gamma} must lie in (0, 1)")));
    }
    if proxy.scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("proxy scores must not be NaN"));
    }
    if let Some(&bad) = proxy.indices.iter().find(|&&i| i >= truth.len()) {
        return Err(Error::invalid(format!("example {bad} outside the corruption mask")));
    }
    let take = (gamma * proxy.len() as f64).round_ties_even() as usize;
    if take == 0 {
        return Err(Error::invalid("gamma selects no examples"));
    }
    let mut order: Vec<usize> = (0..proxy.len()).collect();
    order.sort_by(|&a, &b| {
        (proxy.scores[a] + 0.0)
            .total_cmp(&(proxy.scores[b] + 0.0))
            .then(proxy.indices[a].cmp(&proxy.indices[b]))
    });
    let hits = order[..take].iter().filter(|&&j| truth[proxy.indices[j]]).count();
    Ok(hits as f64 / take as f64)
}
