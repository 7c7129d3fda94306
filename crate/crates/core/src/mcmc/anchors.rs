//! Choice of anchor sites for the loading constraints.

use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::RandomSource;

const RESTARTS: usize = 10;
const MAX_LLOYD: usize = 100;
const MAX_EMPTY_RETRIES: usize = 10;

/// K-means (k-means++ seeding, best of several restarts) on row vectors.
/// Returns the cluster label of each point.
pub fn kmeans(points: &[Vec<f64>], k: usize, rng: &mut RandomSource) -> Result<Vec<usize>> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!("cannot form {k} clusters from {n} points")));
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut empty_retries = 0;
    let mut restart = 0;
    while restart < RESTARTS {
        match lloyd(points, k, rng) {
            Some((cost, labels)) => {
                if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                    best = Some((cost, labels));
                }
                restart += 1;
            }
            None => {
                empty_retries += 1;
                if empty_retries > MAX_EMPTY_RETRIES {
                    return Err(Error::EmptyCluster(k));
                }
            }
        }
    }
    Ok(best.expect("at least one restart").1)
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn lloyd(points: &[Vec<f64>], k: usize, rng: &mut RandomSource) -> Option<(f64, Vec<usize>)> {
    let n = points.len();
    let dim = points[0].len();
    // k-means++ seeding
    let mut centers: Vec<Vec<f64>> = vec![points[rng.random_range(0..n)].clone()];
    while centers.len() < k {
        let d: Vec<f64> = points.iter().map(|p| centers.iter().map(|c| dist2(p, c)).fold(f64::INFINITY, f64::min)).collect();
        let total: f64 = d.iter().sum();
        let idx = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, di) in d.iter().enumerate() {
                if u < *di {
                    pick = i;
                    break;
                }
                u -= di;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.push(points[idx].clone());
    }
    let mut labels = vec![usize::MAX; n];
    for _ in 0..MAX_LLOYD {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = (f64::INFINITY, 0);
            for (c, cen) in centers.iter().enumerate() {
                let d = dist2(p, cen);
                if d < best.0 {
                    best = (d, c);
                }
            }
            if labels[i] != best.1 {
                labels[i] = best.1;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&labels) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p) {
                *s += v;
            }
        }
        if counts.contains(&0) {
            return None;
        }
        for c in 0..k {
            centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
        }
        if !changed {
            break;
        }
    }
    let cost = points.iter().zip(&labels).map(|(p, &c)| dist2(p, &centers[c])).sum();
    Some((cost, labels))
}

/// Picks `k` anchor sites from `series[site]` (the site's series over time).
/// One site per cluster: an unused region label first, then the highest
/// series mean, then the largest distance to anchors already chosen.
/// Anchors are returned ordered by decreasing mean.
pub fn select_anchor_sites(series: &[Vec<f64>], k: usize, regions: Option<&[String]>, seed: u64) -> Result<Vec<usize>> {
    let n = series.len();
    if k == n {
        let mut all: Vec<usize> = (0..n).collect();
        all.sort_by(|a, b| site_mean(&series[*b]).total_cmp(&site_mean(&series[*a])).then(a.cmp(b)));
        return Ok(all);
    }
    let mut rng = RandomSource::seed_from_u64(seed);
    let labels = kmeans(series, k, &mut rng)?;
    let means: Vec<f64> = series.iter().map(|s| site_mean(s)).collect();
    // clusters visited in order of their best mean
    let mut clusters: Vec<usize> = (0..k).collect();
    let cluster_max = |c: usize| (0..n).filter(|&i| labels[i] == c).map(|i| means[i]).fold(f64::NEG_INFINITY, f64::max);
    clusters.sort_by(|a, b| cluster_max(*b).total_cmp(&cluster_max(*a)));
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    let mut used_regions: Vec<&str> = Vec::new();
    for c in clusters {
        let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
        let pool: Vec<usize> = match regions {
            Some(r) => {
                let fresh: Vec<usize> = members.iter().cloned().filter(|&i| !used_regions.contains(&r[i].as_str())).collect();
                if fresh.is_empty() {
                    members.clone()
                } else {
                    fresh
                }
            }
            None => members.clone(),
        };
        let top = pool.iter().map(|&i| means[i]).fold(f64::NEG_INFINITY, f64::max);
        let tied: Vec<usize> = pool.iter().cloned().filter(|&i| means[i] == top).collect();
        let pick = *tied
            .iter()
            .max_by(|&&a, &&b| {
                let da = chosen.iter().map(|&j| dist2(&series[a], &series[j])).fold(f64::INFINITY, f64::min);
                let db = chosen.iter().map(|&j| dist2(&series[b], &series[j])).fold(f64::INFINITY, f64::min);
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("non-empty cluster");
        if let Some(r) = regions {
            used_regions.push(r[pick].as_str());
        }
        chosen.push(pick);
    }
    chosen.sort_by(|a, b| means[*b].total_cmp(&means[*a]).then(a.cmp(b)));
    Ok(chosen)
}

fn site_mean(s: &[f64]) -> f64 {
    let obs: Vec<f64> = s.iter().cloned().filter(|v| !v.is_nan()).collect();
    if obs.is_empty() {
        f64::NEG_INFINITY
    } else {
        obs.iter().sum::<f64>() / obs.len() as f64
    }
}

/// Anchor rows for `H_y` and `H_x` from `T × (N·n_vars)` panels (site-major).
/// Each anchor row is the first variable of the chosen site.
#[allow(clippy::too_many_arguments)]
pub fn select_anchor_states(
    y: &nalgebra::DMatrix<f64>,
    x: &nalgebra::DMatrix<f64>,
    n_sites: usize,
    m: usize,
    l: usize,
    regions: Option<&[String]>,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if m > n_sites || l > n_sites {
        return Err(Error::InvalidConfig(format!("at most {n_sites} anchors available")));
    }
    let site_series = |z: &nalgebra::DMatrix<f64>| -> Vec<Vec<f64>> {
        let nv = z.ncols() / n_sites.max(1);
        (0..n_sites)
            .map(|s| {
                let mut v = Vec::with_capacity(z.nrows() * nv);
                for j in 0..nv {
                    v.extend(z.column(s * nv + j).iter().map(|x| if x.is_nan() { 0.0 } else { *x }));
                }
                v
            })
            .collect()
    };
    let ny = y.ncols() / n_sites.max(1);
    let nx = x.ncols() / n_sites.max(1);
    let ay = select_anchor_sites(&site_series(y), m, regions, seed)?;
    let ax = select_anchor_sites(&site_series(x), l, regions, seed.wrapping_add(1))?;
    Ok((ay.into_iter().map(|s| s * ny).collect(), ax.into_iter().map(|s| s * nx).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_clusters() -> Vec<Vec<f64>> {
        (0..8).map(|i| {
            let base = if i < 4 { 0.0 } else { 10.0 };
            (0..5).map(|t| base + 0.1 * ((i * 7 + t) % 3) as f64).collect()
        }).collect()
    }

    #[test]
    fn separated_clusters_give_one_anchor_each() {
        let s = two_clusters();
        let a = select_anchor_sites(&s, 2, None, 3).unwrap();
        assert_eq!(a.len(), 2);
        assert!(a[0] >= 4 && a[1] < 4);
    }

    #[test]
    fn all_sites_when_k_equals_n() {
        let s = two_clusters();
        let mut a = select_anchor_sites(&s, 8, None, 1).unwrap();
        a.sort();
        assert_eq!(a, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn deterministic_given_seed() {
        let s: Vec<Vec<f64>> = (0..12).map(|i| vec![(i as f64 * 1.7).sin(), (i as f64).cos()]).collect();
        assert_eq!(select_anchor_sites(&s, 3, None, 9).unwrap(), select_anchor_sites(&s, 3, None, 9).unwrap());
    }

    #[test]
    fn region_labels_spread_anchors() {
        let s = two_clusters();
        let regions: Vec<String> = (0..8).map(|i| if i % 2 == 0 { "a".into() } else { "b".into() }).collect();
        let a = select_anchor_sites(&s, 2, Some(&regions), 3).unwrap();
        assert_ne!(regions[a[0]], regions[a[1]]);
    }
}
