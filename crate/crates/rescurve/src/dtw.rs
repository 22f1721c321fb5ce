//! Dynamic time warping over value sequences: distance, optimal warping
//! path, and pairwise distance matrices.
//!
//! Local costs are squared differences accumulated along the path; the
//! distance is the square root of the minimal accumulated cost.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A warping path: monotone, continuous index pairs from (0,0) to (m-1,n-1).
pub type WarpingPath = Vec<(usize, usize)>;

#[derive(Debug, Clone, PartialEq)]
pub struct DtwResult {
    pub distance: f64,
    /// Optimal path, present when requested. Ties in backtracking break
    /// diagonal first, then vertical, then horizontal.
    pub path: Option<WarpingPath>,
}

fn check_input(name: &str, s: &[f64]) -> Result<()> {
    if s.is_empty() {
        return Err(Error::Domain(format!("{name}: empty sequence")));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("{name}: non-finite value")));
    }
    Ok(())
}

/// DTW distance between `p` and `q`, unconstrained.
pub fn dtw(p: &[f64], q: &[f64], return_path: bool) -> Result<DtwResult> {
    dtw_with_band(p, q, None, return_path)
}

/// DTW with an optional Sakoe-Chiba band of half-width `band`. `None` means
/// unconstrained. The band is widened to `|m - n|` when needed so the end
/// corner stays reachable.
pub fn dtw_with_band(
    p: &[f64],
    q: &[f64],
    band: Option<usize>,
    return_path: bool,
) -> Result<DtwResult> {
    check_input("p", p)?;
    check_input("q", q)?;
    let (m, n) = (p.len(), q.len());
    let band = band.map(|b| b.max(m.abs_diff(n)));
    let in_band = |i: usize, j: usize| match band {
        Some(b) => i.abs_diff(j) <= b,
        None => true,
    };

    // Accumulated-cost matrix, row-major, INF outside the band.
    let mut acc = vec![f64::INFINITY; m * n];
    for i in 0..m {
        for j in 0..n {
            if !in_band(i, j) {
                continue;
            }
            let cost = (p[i] - q[j]) * (p[i] - q[j]);
            let best_prev = if i == 0 && j == 0 {
                0.0
            } else {
                let mut best = f64::INFINITY;
                if i > 0 && j > 0 {
                    best = best.min(acc[(i - 1) * n + (j - 1)]);
                }
                if i > 0 {
                    best = best.min(acc[(i - 1) * n + j]);
                }
                if j > 0 {
                    best = best.min(acc[i * n + (j - 1)]);
                }
                best
            };
            acc[i * n + j] = cost + best_prev;
        }
    }

    let total = acc[(m - 1) * n + (n - 1)];
    let path = if return_path {
        let mut path = Vec::with_capacity(m.max(n));
        let (mut i, mut j) = (m - 1, n - 1);
        path.push((i, j));
        while i > 0 || j > 0 {
            // Prefer diagonal, then vertical (i-1, j), then horizontal.
            let mut next = None;
            let mut best = f64::INFINITY;
            if i > 0 && j > 0 && acc[(i - 1) * n + (j - 1)] < best {
                best = acc[(i - 1) * n + (j - 1)];
                next = Some((i - 1, j - 1));
            }
            if i > 0 && acc[(i - 1) * n + j] < best {
                best = acc[(i - 1) * n + j];
                next = Some((i - 1, j));
            }
            if j > 0 && acc[i * n + (j - 1)] < best {
                next = Some((i, j - 1));
            }
            let (ni, nj) = next.expect("backtracking from a reachable cell");
            path.push((ni, nj));
            i = ni;
            j = nj;
        }
        path.reverse();
        Some(path)
    } else {
        None
    };

    Ok(DtwResult { distance: total.sqrt(), path })
}

/// Check the three warping-path conditions against sequence lengths.
pub fn validate_path(path: &WarpingPath, m: usize, n: usize) -> Result<()> {
    if path.is_empty() {
        return Err(Error::Domain("empty warping path".into()));
    }
    if path[0] != (0, 0) || *path.last().unwrap() != (m - 1, n - 1) {
        return Err(Error::Domain("path violates boundary condition".into()));
    }
    for w in path.windows(2) {
        let ((i0, j0), (i1, j1)) = (w[0], w[1]);
        if i1 < i0 || j1 < j0 {
            return Err(Error::Domain("path violates monotonicity condition".into()));
        }
        if i1 - i0 > 1 || j1 - j0 > 1 || (i1 == i0 && j1 == j0) {
            return Err(Error::Domain("path violates continuity condition".into()));
        }
    }
    if path.len() < m.max(n) || path.len() > m + n - 1 {
        return Err(Error::Domain("path length out of bounds".into()));
    }
    Ok(())
}

/// Symmetric pairwise DTW distance matrix, each unordered pair computed once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub n: usize,
    /// Row-major full storage.
    pub data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.data[a * self.n + b]
    }
}

pub fn pairwise_matrix(series: &[Vec<f64>]) -> Result<DistanceMatrix> {
    if series.len() < 2 {
        return Err(Error::Domain("pairwise matrix needs at least 2 series".into()));
    }
    let n = series.len();
    let mut data = vec![0.0; n * n];
    for a in 0..n {
        for b in (a + 1)..n {
            let d = dtw(&series[a], &series[b], false)?.distance;
            data[a * n + b] = d;
            data[b * n + a] = d;
        }
    }
    Ok(DistanceMatrix { n, data })
}
