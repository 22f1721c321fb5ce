//! Cluster-count selection: DTW silhouette score, distortion, elbow
//! detection and the combined recommendation rule.

use serde::{Deserialize, Serialize};

use crate::cluster::{fit, ClusterModel, KMeansParams};
use crate::dtw::{dtw, DistanceMatrix};
use crate::error::{Error, Result};

/// Denominator of the per-curve silhouette. `Max` is the standard form and
/// keeps the score in [-1, 1]; `Min` exists as a compatibility option.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SilhouetteDenominator {
    Max,
    Min,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilhouetteSample {
    /// Mean DTW distance to same-cluster members.
    pub a: f64,
    /// Lowest mean DTW distance to any other cluster.
    pub b: f64,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilhouetteBreakdown {
    pub per_curve: Vec<SilhouetteSample>,
    pub overall: f64,
}

/// Per-curve and overall silhouette from a precomputed distance matrix.
///
/// Singleton-cluster members and 0/0 cases get s = 0 by convention.
pub fn silhouette(
    dm: &DistanceMatrix,
    labels: &[usize],
    denominator: SilhouetteDenominator,
) -> Result<SilhouetteBreakdown> {
    if labels.len() != dm.n {
        return Err(Error::Domain(format!(
            "labels cover {} rows but matrix has {}",
            labels.len(),
            dm.n
        )));
    }
    let k = labels.iter().copied().max().map(|m| m + 1).unwrap_or(0);
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::Domain("silhouette is undefined for a single cluster".into()));
    }

    let mut per_curve = Vec::with_capacity(dm.n);
    for i in 0..dm.n {
        let own = labels[i];
        let mut sums = vec![0.0; k];
        for j in 0..dm.n {
            if j != i {
                sums[labels[j]] += dm.get(i, j);
            }
        }
        let (a, s_forced_zero) = if counts[own] <= 1 {
            (0.0, true)
        } else {
            (sums[own] / (counts[own] - 1) as f64, false)
        };
        let b = (0..k)
            .filter(|&c| c != own && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = match denominator {
            SilhouetteDenominator::Max => a.max(b),
            SilhouetteDenominator::Min => a.min(b),
        };
        let s = if s_forced_zero || denom == 0.0 { 0.0 } else { (b - a) / denom };
        per_curve.push(SilhouetteSample { a, b, s });
    }
    let overall = per_curve.iter().map(|s| s.s).sum::<f64>() / per_curve.len() as f64;
    Ok(SilhouetteBreakdown { per_curve, overall })
}

/// Within-cluster sum of squared DTW distances, recomputed from scratch.
/// Equals the fitted model's inertia.
pub fn distortion(curves: &[Vec<f64>], model: &ClusterModel) -> Result<f64> {
    let mut total = 0.0;
    for (curve, &label) in curves.iter().zip(&model.labels) {
        let d = dtw(curve, &model.centers[label], false)?.distance;
        total += d * d;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSweepEntry {
    pub k: usize,
    pub seed: u64,
    pub silhouette: f64,
    pub distortion: f64,
    pub inertia: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSweepReport {
    pub entries: Vec<KSweepEntry>,
    pub elbow_k: usize,
    pub weak_elbow: bool,
    pub recommended_k: usize,
    pub rationale: String,
}

/// Elbow of a distortion-vs-k sequence: the interior k maximizing the
/// discrete second difference. Ties break toward smaller k.
///
/// The elbow is flagged weak when the distortion-vs-k sequence carries
/// little curvature signal: either the largest second difference is small
/// relative to the total decrease (near-linear decrease), or some second
/// difference is strongly negative (a jagged, non-convex sequence whose
/// curvature maximum is dominated by noise rather than structure).
pub fn elbow(distortions: &[(usize, f64)]) -> Result<(usize, bool)> {
    if distortions.len() < 3 {
        return Err(Error::Domain("elbow needs at least 3 consecutive k values".into()));
    }
    for w in distortions.windows(2) {
        if w[1].0 != w[0].0 + 1 {
            return Err(Error::Domain("elbow needs consecutive k values".into()));
        }
    }
    let mut best_k = distortions[1].0;
    let mut best = f64::NEG_INFINITY;
    let mut worst = f64::INFINITY;
    for t in 1..distortions.len() - 1 {
        let second_diff =
            distortions[t - 1].1 - 2.0 * distortions[t].1 + distortions[t + 1].1;
        if second_diff > best {
            best = second_diff;
            best_k = distortions[t].0;
        }
        worst = worst.min(second_diff);
    }
    let total_decrease = distortions[0].1 - distortions[distortions.len() - 1].1;
    let tol = 0.05 * total_decrease.max(0.0) + 1e-12;
    let weak = best <= tol || worst < -tol;
    Ok((best_k, weak))
}

/// The codified trade-off rule: around the elbow, pick the candidate with
/// the highest silhouette; a weak elbow falls back to the global silhouette
/// argmax. The analyst can always override the result.
pub fn recommend(
    entries: &[KSweepEntry],
    elbow_k: usize,
    weak_elbow: bool,
) -> Result<(usize, String)> {
    if entries.is_empty() {
        return Err(Error::Domain("recommend needs a non-empty report".into()));
    }
    let silhouette_of = |k: usize| entries.iter().find(|e| e.k == k).map(|e| e.silhouette);
    let global_argmax = entries
        .iter()
        .fold(entries[0].clone(), |best, e| if e.silhouette > best.silhouette { e.clone() } else { best });

    if weak_elbow {
        return Ok((
            global_argmax.k,
            format!(
                "weak elbow (near-linear distortion decrease); falling back to the \
                 global silhouette maximum {:.3} at k={}",
                global_argmax.silhouette, global_argmax.k
            ),
        ));
    }

    let candidates: Vec<usize> = [elbow_k.saturating_sub(1), elbow_k, elbow_k + 1]
        .into_iter()
        .filter(|&k| silhouette_of(k).is_some())
        .collect();
    let pick = candidates
        .iter()
        .copied()
        .max_by(|&a, &b| {
            silhouette_of(a)
                .unwrap()
                .partial_cmp(&silhouette_of(b).unwrap())
                .unwrap()
                .then(b.cmp(&a)) // tie toward smaller k
        })
        .unwrap();
    let pick_sil = silhouette_of(pick).unwrap();
    let distortion_at_pick =
        entries.iter().find(|e| e.k == pick).map(|e| e.distortion).unwrap();
    let rationale = if pick == elbow_k && pick == global_argmax.k {
        format!(
            "metrics agree: elbow and silhouette maximum coincide at k={pick} \
             (silhouette {pick_sil:.3}, distortion {distortion_at_pick:.3})"
        )
    } else {
        format!(
            "elbow at k={elbow_k}; among candidates {candidates:?} the highest \
             silhouette is {pick_sil:.3} at k={pick} (distortion {distortion_at_pick:.3})"
        )
    };
    Ok((pick, rationale))
}

/// Fit one model per k in [k_min, k_max], collecting silhouette and
/// distortion, and populate the elbow and recommendation.
pub fn sweep_k(
    curves: &[Vec<f64>],
    dm: &DistanceMatrix,
    k_min: usize,
    k_max: usize,
    base: &KMeansParams,
) -> Result<KSweepReport> {
    if k_min < 2 {
        return Err(Error::Config("k_min must be at least 2".into()));
    }
    if k_max < k_min {
        return Err(Error::Config("k_max must be >= k_min".into()));
    }
    if k_max > curves.len() {
        return Err(Error::Config(format!(
            "k_max = {k_max} exceeds curve count {}",
            curves.len()
        )));
    }
    let mut entries = Vec::with_capacity(k_max - k_min + 1);
    for k in k_min..=k_max {
        let mut params = base.clone();
        params.k = k;
        params.seed = base.seed.wrapping_add(0x5851_F42D_4C95_7F2Du64.wrapping_mul(k as u64));
        let model = fit(curves, &params)?;
        let sil = silhouette(dm, &model.labels, SilhouetteDenominator::Max)?;
        let dist = distortion(curves, &model)?;
        entries.push(KSweepEntry {
            k,
            seed: params.seed,
            silhouette: sil.overall,
            distortion: dist,
            inertia: model.inertia,
        });
    }
    let dist_by_k: Vec<(usize, f64)> = entries.iter().map(|e| (e.k, e.distortion)).collect();
    // A range under 3 values defines no elbow; treat it as weak and let the
    // silhouette decide.
    let (elbow_k, weak_elbow) =
        if dist_by_k.len() >= 3 { elbow(&dist_by_k)? } else { (entries[0].k, true) };
    let (recommended_k, rationale) = recommend(&entries, elbow_k, weak_elbow)?;
    Ok(KSweepReport { entries, elbow_k, weak_elbow, recommended_k, rationale })
}

/// Adjusted Rand index between two labelings, via the standard contingency
/// formula with midpoint normalization. 1.0 means identical up to relabeling.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must have equal length");
    let n = a.len();
    if n == 0 {
        return 1.0;
    }
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let choose2 = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let sum_cells: f64 = table.iter().flatten().map(|&c| choose2(c)).sum();
    let sum_rows: f64 = table.iter().map(|row| choose2(row.iter().sum())).sum();
    let sum_cols: f64 = (0..kb)
        .map(|j| choose2(table.iter().map(|row| row[j]).sum()))
        .sum();
    let total = choose2(n as u64);
    let expected = sum_rows * sum_cols / total;
    let max_index = (sum_rows + sum_cols) / 2.0;
    if (max_index - expected).abs() < 1e-12 {
        return 1.0; // both partitions trivial
    }
    (sum_cells - expected) / (max_index - expected)
}
