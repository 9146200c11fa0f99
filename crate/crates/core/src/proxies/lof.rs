//! Local outlier factor with tie-expanded k-distance neighborhoods.
//!
//! `N_k(p)` holds every other point no farther than the k-th nearest one.
//! `reach(p, o) = max(kdist(o), d(p, o))`, `lrd(p) = |N_k(p)| / Σ reach(p, o)`
//! and `LOF(p) = Σ lrd(o) / (|N_k(p)| · lrd(p))`, neighbors summed in index
//! order. Duplicate points can make a reachability sum zero: such a point gets
//! `lrd = ∞` and `LOF = 1`; a finite-density point next to one gets `LOF = ∞`.

use rayon::prelude::*;

use crate::error::{Error, Result};

use super::{distance, Orientation, PointSet, ProxyKind, ProxyScores};

pub const DEFAULT_K_NEIGHBORS: usize = 3;

struct Neighborhoods {
    kdist: Vec<f64>,
    members: Vec<Vec<usize>>,
    dist: Vec<f64>,
    n: usize,
}

fn neighborhoods(points: &PointSet, k: usize) -> Neighborhoods {
    let n = points.len();
    let dist: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|ij| distance(points.row(ij / n), points.row(ij % n)))
        .collect();
    let (kdist, members): (Vec<f64>, Vec<Vec<usize>>) = (0..n)
        .into_par_iter()
        .map(|p| {
            let row = &dist[p * n..(p + 1) * n];
            let mut others: Vec<f64> = (0..n).filter(|&o| o != p).map(|o| row[o]).collect();
            let (_, kth, _) = others.select_nth_unstable_by(k - 1, f64::total_cmp);
            let kd = *kth;
            let members = (0..n).filter(|&o| o != p && row[o] <= kd).collect();
            (kd, members)
        })
        .unzip();
    Neighborhoods {
        kdist,
        members,
        dist,
        n,
    }
}

/// Raw LOF values (about 1 inside a cluster, larger for outliers).
pub fn lof_values(points: &PointSet, k_neighbors: usize) -> Result<Vec<f64>> {
    if k_neighbors == 0 {
        return Err(Error::invalid("k_neighbors must be >= 1"));
    }
    if points.len() <= k_neighbors {
        return Err(Error::invalid(format!(
            "LOF needs more than {k_neighbors} points, got {}",
            points.len()
        )));
    }
    let nb = neighborhoods(points, k_neighbors);
    let n = nb.n;
    let lrd: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|p| {
            let reach: f64 = nb.members[p]
                .iter()
                .map(|&o| nb.kdist[o].max(nb.dist[p * n + o]))
                .sum();
            if reach == 0.0 {
                f64::INFINITY
            } else {
                nb.members[p].len() as f64 / reach
            }
        })
        .collect();
    Ok((0..n)
        .into_par_iter()
        .map(|p| {
            if lrd[p].is_infinite() {
                return 1.0;
            }
            let sum: f64 = nb.members[p].iter().map(|&o| lrd[o]).sum();
            sum / (nb.members[p].len() as f64 * lrd[p])
        })
        .collect())
}

/// `-LOF`, so that points in dense regions rank first.
pub fn lof_scores(points: &PointSet, k_neighbors: usize) -> Result<ProxyScores> {
    let scores = lof_values(points, k_neighbors)?.into_iter().map(|v| -v).collect::<Vec<_>>();
    Ok(ProxyScores {
        kind: ProxyKind::CLof,
        space: Some(points.space),
        indices: (0..scores.len()).collect(),
        scores,
        orientation: Orientation::Negated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proxies::Space;

    fn pts(data: Vec<f64>, dim: usize) -> PointSet {
        let n = data.len() / dim;
        PointSet::new(data, dim, vec![0; n], Space::Input).unwrap()
    }

    #[test]
    fn unit_square_is_uniform() {
        let s = lof_scores(&pts(vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0], 2), 3).unwrap();
        for v in s.scores {
            assert!((v + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn far_outlier_ranks_last() {
        let mut data = Vec::new();
        for i in 0..9 {
            data.push((i % 3) as f64 * 0.1);
            data.push((i / 3) as f64 * 0.1);
        }
        data.extend([10.0, 10.0]);
        let s = lof_scores(&pts(data, 2), 3).unwrap().scores;
        assert!(s[..9].iter().all(|&v| v > s[9]));
    }

    #[test]
    fn duplicates_follow_the_convention() {
        // four copies of one point and one distinct point
        let v = lof_values(&pts(vec![0.0, 0.0, 0.0, 0.0, 5.0], 1), 3).unwrap();
        assert_eq!(&v[..4], &[1.0; 4]);
        assert_eq!(v[4], f64::INFINITY);
    }

    #[test]
    fn ties_expand_neighborhood() {
        // the point at 0 has three neighbors at distance 1 for k = 2
        let p = pts(vec![0.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 1.0], 2);
        let nb = neighborhoods(&p, 2);
        assert_eq!(nb.members[0], vec![1, 2, 3]);
    }

    #[test]
    fn preconditions() {
        assert!(lof_values(&pts(vec![0.0, 1.0, 2.0], 1), 3).is_err());
        assert!(lof_values(&pts(vec![0.0, 1.0, 2.0], 1), 0).is_err());
    }
}
