//! Seeded k-means over resilience curves under DTW, with DBA barycenter
//! centers. Minimizes the sum of squared DTW distances to assigned centers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dtw::dtw;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMethod {
    KMeansPlusPlus,
    RandomPick,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    pub n_restarts: usize,
    pub init: InitMethod,
    pub dba_max_iter: usize,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iter: 50,
            tol: 1e-6,
            n_restarts: 5,
            init: InitMethod::KMeansPlusPlus,
            dba_max_iter: 10,
        }
    }
}

/// Fitted model: labels, barycenter centers and the objective value, plus
/// the per-iteration inertia trace of every restart.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub seed: u64,
    pub labels: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    pub inertia: f64,
    pub n_iter: usize,
    pub converged: bool,
    /// Inertia after each assignment of the winning restart.
    pub inertia_trace: Vec<f64>,
    /// Inertia traces of all restarts, in restart order.
    pub restart_traces: Vec<Vec<f64>>,
}

/// Per-cluster reporting view of a model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub k: usize,
    pub seed: u64,
    pub inertia: f64,
    pub clusters: Vec<ClusterInfo>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterInfo {
    pub cluster: usize,
    pub members: Vec<String>,
    pub count: usize,
    pub center: Vec<f64>,
    pub mean_within_distance: f64,
    /// Clusters below 5 members are flagged for the analyst, not removed.
    pub small_cluster: bool,
}

/// Advisory size below which a cluster is flagged in the summary.
pub const SMALL_CLUSTER_SIZE: usize = 5;

fn derive_seed(seed: u64, index: u64) -> u64 {
    seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1)))
}

/// Pick `k` distinct input curves as initial centers, fully determined by `seed`.
pub fn init_centers(
    curves: &[Vec<f64>],
    k: usize,
    seed: u64,
    method: InitMethod,
) -> Result<Vec<usize>> {
    let n = curves.len();
    if k < 1 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::Config(format!("k = {k} exceeds curve count {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    match method {
        InitMethod::RandomPick => {
            let mut pool: Vec<usize> = (0..n).collect();
            for _ in 0..k {
                let idx = rng.gen_range(0..pool.len());
                chosen.push(pool.swap_remove(idx));
            }
        }
        InitMethod::KMeansPlusPlus => {
            chosen.push(rng.gen_range(0..n));
            let mut nearest_sq = vec![f64::INFINITY; n];
            while chosen.len() < k {
                let last = *chosen.last().unwrap();
                for i in 0..n {
                    let d = dtw(&curves[i], &curves[last], false)?.distance;
                    nearest_sq[i] = nearest_sq[i].min(d * d);
                }
                let total: f64 = nearest_sq.iter().sum();
                let next = if total > 0.0 {
                    let mut target = rng.gen::<f64>() * total;
                    let mut pick = None;
                    for (i, &w) in nearest_sq.iter().enumerate() {
                        if w <= 0.0 {
                            continue;
                        }
                        target -= w;
                        if target <= 0.0 {
                            pick = Some(i);
                            break;
                        }
                    }
                    pick.unwrap_or_else(|| {
                        (0..n).rev().find(|i| nearest_sq[*i] > 0.0).unwrap()
                    })
                } else {
                    // All remaining curves coincide with a chosen center;
                    // fall back to the lowest unchosen index.
                    (0..n).find(|i| !chosen.contains(i)).unwrap()
                };
                chosen.push(next);
            }
        }
    }
    Ok(chosen)
}

/// Label each curve with the nearest center; ties go to the lowest index.
pub fn assign(curves: &[Vec<f64>], centers: &[Vec<f64>]) -> Result<Vec<usize>> {
    if centers.is_empty() {
        return Err(Error::Domain("assign: no centers".into()));
    }
    curves
        .iter()
        .map(|curve| {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (j, center) in centers.iter().enumerate() {
                let d = dtw(curve, center, false)?.distance;
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            Ok(best)
        })
        .collect()
}

fn sum_sq_dtw(members: &[&[f64]], center: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for m in members {
        let d = dtw(m, center, false)?.distance;
        total += d * d;
    }
    Ok(total)
}

/// One DBA update: align members to the center, replace each center element
/// with the mean of the member elements aligned to it.
fn dba_update(members: &[&[f64]], center: &[f64]) -> Result<Vec<f64>> {
    let mut sums = vec![0.0; center.len()];
    let mut counts = vec![0usize; center.len()];
    for m in members {
        let result = dtw(m, center, true)?;
        for (i, j) in result.path.unwrap() {
            sums[j] += m[i];
            counts[j] += 1;
        }
    }
    Ok(sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s / c as f64) // every center index lies on some path
        .collect())
}

/// DBA barycenter of `members`, started from `init`. The objective (sum of
/// squared DTW distances to members) is non-increasing across iterations.
pub fn dba_barycenter(
    members: &[&[f64]],
    init: &[f64],
    max_iter: usize,
    tol: f64,
) -> Result<Vec<f64>> {
    if members.is_empty() {
        return Err(Error::Domain("dba_barycenter: empty member set".into()));
    }
    if members.len() == 1 {
        return Ok(members[0].to_vec());
    }
    let mut center = init.to_vec();
    let mut objective = sum_sq_dtw(members, &center)?;
    for _ in 0..max_iter {
        let candidate = dba_update(members, &center)?;
        let cand_obj = sum_sq_dtw(members, &candidate)?;
        if cand_obj <= objective {
            let improved = objective - cand_obj;
            center = candidate;
            objective = cand_obj;
            if improved < tol {
                break;
            }
        } else {
            break;
        }
    }
    Ok(center)
}

/// Inertia of a labeling: sum of squared DTW distances to assigned centers.
pub fn inertia(curves: &[Vec<f64>], labels: &[usize], centers: &[Vec<f64>]) -> Result<f64> {
    let mut total = 0.0;
    for (curve, &label) in curves.iter().zip(labels) {
        let d = dtw(curve, &centers[label], false)?.distance;
        total += d * d;
    }
    Ok(total)
}

/// Pointwise-mean centers, offered for reporting alongside DBA centers.
pub fn pointwise_mean_centers(
    curves: &[Vec<f64>],
    labels: &[usize],
    k: usize,
) -> Result<Vec<Vec<f64>>> {
    let len = curves.first().map(|c| c.len()).unwrap_or(0);
    let mut sums = vec![vec![0.0; len]; k];
    let mut counts = vec![0usize; k];
    for (curve, &label) in curves.iter().zip(labels) {
        counts[label] += 1;
        for (s, v) in sums[label].iter_mut().zip(curve) {
            *s += v;
        }
    }
    sums.iter_mut()
        .zip(&counts)
        .map(|(sum, &c)| {
            if c == 0 {
                return Err(Error::Domain("empty cluster in pointwise mean".into()));
            }
            Ok(sum.iter().map(|s| s / c as f64).collect())
        })
        .collect()
}

struct RestartOutcome {
    labels: Vec<usize>,
    centers: Vec<Vec<f64>>,
    inertia: f64,
    n_iter: usize,
    converged: bool,
    trace: Vec<f64>,
}

fn run_restart(curves: &[Vec<f64>], params: &KMeansParams, seed: u64) -> Result<RestartOutcome> {
    let indices = init_centers(curves, params.k, seed, params.init)?;
    let mut centers: Vec<Vec<f64>> = indices.iter().map(|&i| curves[i].clone()).collect();
    let mut labels = assign(curves, &centers)?;
    let mut trace = vec![inertia(curves, &labels, &centers)?];
    let mut converged = false;
    let mut n_iter = 0;

    for _ in 0..params.max_iter {
        n_iter += 1;
        // Update step: per-cluster DBA barycenters.
        for j in 0..params.k {
            let members: Vec<&[f64]> = curves
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == j)
                .map(|(c, _)| c.as_slice())
                .collect();
            if !members.is_empty() {
                centers[j] =
                    dba_barycenter(&members, &centers[j], params.dba_max_iter, params.tol)?;
            }
        }
        // Repair empty clusters by reseeding with the curve farthest from its center.
        let mut counts = vec![0usize; params.k];
        for &l in &labels {
            counts[l] += 1;
        }
        for j in 0..params.k {
            if counts[j] > 0 {
                continue;
            }
            let mut farthest = 0usize;
            let mut farthest_d = -1.0;
            for (i, curve) in curves.iter().enumerate() {
                if counts[labels[i]] <= 1 {
                    continue; // don't empty another cluster
                }
                let d = dtw(curve, &centers[labels[i]], false)?.distance;
                if d > farthest_d {
                    farthest_d = d;
                    farthest = i;
                }
            }
            centers[j] = curves[farthest].clone();
            counts[labels[farthest]] -= 1;
            labels[farthest] = j;
            counts[j] = 1;
        }

        let new_labels = assign(curves, &centers)?;
        trace.push(inertia(curves, &new_labels, &centers)?);
        let stalled = {
            let last = trace.len() - 1;
            trace[last - 1] - trace[last] < params.tol
        };
        if new_labels == labels {
            labels = new_labels;
            converged = true;
            break;
        }
        labels = new_labels;
        if stalled {
            converged = true;
            break;
        }
    }

    let final_inertia = *trace.last().unwrap();
    Ok(RestartOutcome { labels, centers, inertia: final_inertia, n_iter, converged, trace })
}

/// Fit k-means under DTW with DBA centers, keeping the best of
/// `n_restarts` seeded restarts. Fully reproducible from `(inputs, params)`.
pub fn fit(curves: &[Vec<f64>], params: &KMeansParams) -> Result<ClusterModel> {
    if params.k < 1 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if curves.len() < params.k {
        return Err(Error::Config(format!(
            "k = {} exceeds curve count {}",
            params.k,
            curves.len()
        )));
    }
    if params.n_restarts < 1 {
        return Err(Error::Config("n_restarts must be at least 1".into()));
    }
    let mut best: Option<RestartOutcome> = None;
    let mut restart_traces = Vec::with_capacity(params.n_restarts);
    for r in 0..params.n_restarts {
        let outcome = run_restart(curves, params, derive_seed(params.seed, r as u64))?;
        restart_traces.push(outcome.trace.clone());
        let better = match &best {
            Some(b) => outcome.inertia < b.inertia,
            None => true,
        };
        if better {
            best = Some(outcome);
        }
    }
    let best = best.unwrap();
    Ok(ClusterModel {
        k: params.k,
        seed: params.seed,
        labels: best.labels,
        centers: best.centers,
        inertia: best.inertia,
        n_iter: best.n_iter,
        converged: best.converged,
        inertia_trace: best.trace,
        restart_traces,
    })
}

/// Build the per-cluster reporting view.
pub fn summarize(
    model: &ClusterModel,
    curves: &[Vec<f64>],
    unit_ids: &[String],
) -> Result<ClusterSummary> {
    let mut clusters = Vec::with_capacity(model.k);
    for j in 0..model.k {
        let member_idx: Vec<usize> =
            (0..curves.len()).filter(|&i| model.labels[i] == j).collect();
        let mut total = 0.0;
        for &i in &member_idx {
            total += dtw(&curves[i], &model.centers[j], false)?.distance;
        }
        let count = member_idx.len();
        clusters.push(ClusterInfo {
            cluster: j,
            members: member_idx.iter().map(|&i| unit_ids[i].clone()).collect(),
            count,
            center: model.centers[j].clone(),
            mean_within_distance: if count > 0 { total / count as f64 } else { 0.0 },
            small_cluster: count < SMALL_CLUSTER_SIZE,
        });
    }
    Ok(ClusterSummary { k: model.k, seed: model.seed, inertia: model.inertia, clusters })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> Vec<f64> {
        vec![0.0, -0.6, -0.4, -0.2, 0.0, 0.0]
    }

    fn trapezoid() -> Vec<f64> {
        vec![0.0, -0.6, -0.6, -0.6, -0.3, 0.0]
    }

    #[test]
    fn init_rejects_bad_k() {
        let curves = vec![triangle(), trapezoid()];
        assert!(init_centers(&curves, 0, 1, InitMethod::RandomPick).is_err());
        assert!(init_centers(&curves, 3, 1, InitMethod::RandomPick).is_err());
    }

    #[test]
    fn init_exhausts_all_curves_when_k_equals_n() {
        let curves = vec![triangle(), trapezoid(), vec![0.0, -0.9, 0.0, 0.0, 0.0, 0.0]];
        for method in [InitMethod::RandomPick, InitMethod::KMeansPlusPlus] {
            let mut chosen = init_centers(&curves, 3, 7, method).unwrap();
            chosen.sort_unstable();
            assert_eq!(chosen, vec![0, 1, 2]);
        }
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let curves: Vec<Vec<f64>> =
            (0..8).map(|i| vec![0.0, -0.1 * (i + 1) as f64, 0.0]).collect();
        for method in [InitMethod::RandomPick, InitMethod::KMeansPlusPlus] {
            let a = init_centers(&curves, 3, 99, method).unwrap();
            let b = init_centers(&curves, 3, 99, method).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn init_random_pick_on_duplicates() {
        let curves = vec![triangle(), triangle(), trapezoid()];
        let a = init_centers(&curves, 2, 5, InitMethod::RandomPick).unwrap();
        let b = init_centers(&curves, 2, 5, InitMethod::RandomPick).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn assign_prefers_zero_distance_and_lowest_index() {
        let centers = vec![triangle(), trapezoid(), triangle()];
        let labels = assign(&[trapezoid()], &centers).unwrap();
        assert_eq!(labels, vec![1]);
        // Equidistant to centers 0 and 2 (identical centers): lowest wins.
        let labels = assign(&[triangle()], &centers).unwrap();
        assert_eq!(labels, vec![0]);
        let labels = assign(&[triangle()], &centers[..1].to_vec()).unwrap();
        assert_eq!(labels, vec![0]);
    }

    #[test]
    fn dba_fixed_points() {
        let c = triangle();
        let members: Vec<&[f64]> = vec![&c, &c];
        let center = dba_barycenter(&members, &c, 10, 1e-9).unwrap();
        assert_eq!(center, c);

        let single: Vec<&[f64]> = vec![&c];
        let center = dba_barycenter(&single, &trapezoid(), 10, 1e-9).unwrap();
        let d = dtw(&center, &c, false).unwrap().distance;
        assert!(d < 1e-12, "single-member barycenter should reach the member, d={d}");

        assert!(dba_barycenter(&[], &c, 10, 1e-9).is_err());
    }

    #[test]
    fn dba_beats_pointwise_mean_on_shifted_triangles() {
        let a = vec![0.0, -0.8, -0.4, 0.0, 0.0, 0.0, 0.0];
        let b = vec![0.0, 0.0, 0.0, -0.8, -0.4, 0.0, 0.0];
        let members: Vec<&[f64]> = vec![&a, &b];
        let mean: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x + y) / 2.0).collect();
        let bary = dba_barycenter(&members, &mean, 30, 1e-12).unwrap();
        let obj_bary = sum_sq_dtw(&members, &bary).unwrap();
        let obj_mean = sum_sq_dtw(&members, &mean).unwrap();
        assert!(obj_bary <= obj_mean + 1e-12, "bary {obj_bary} vs mean {obj_mean}");
    }

    fn two_group_set() -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut curves = Vec::new();
        let mut truth = Vec::new();
        for i in 0..6 {
            let bump = 0.01 * i as f64;
            curves.push(vec![0.0, -0.6 - bump, -0.4, -0.2, 0.0, 0.0]);
            truth.push(0);
            curves.push(vec![0.0, -0.6, -0.6, -0.6 - bump, -0.3, 0.0]);
            truth.push(1);
        }
        (curves, truth)
    }

    #[test]
    fn fit_k1_builds_global_barycenter() {
        let (curves, _) = two_group_set();
        let model = fit(&curves, &KMeansParams::new(1, 42)).unwrap();
        assert!(model.labels.iter().all(|&l| l == 0));
        let expect = inertia(&curves, &model.labels, &model.centers).unwrap();
        assert!((model.inertia - expect).abs() <= 1e-9 * expect.max(1.0));
    }

    #[test]
    fn fit_k_equals_n_distinct_gives_zero_inertia() {
        let curves = vec![
            vec![0.0, -0.2, 0.0, 0.0],
            vec![0.0, -0.5, -0.1, 0.0],
            vec![0.0, -0.9, -0.9, 0.0],
        ];
        let model = fit(&curves, &KMeansParams::new(3, 7)).unwrap();
        assert_eq!(model.inertia, 0.0);
    }

    #[test]
    fn fit_recovers_two_well_separated_groups() {
        let (curves, truth) = two_group_set();
        let model = fit(&curves, &KMeansParams::new(2, 42)).unwrap();
        let ari = crate::modelselect::adjusted_rand_index(&model.labels, &truth);
        assert_eq!(ari, 1.0);
    }

    #[test]
    fn fit_is_bitwise_deterministic() {
        let (curves, _) = two_group_set();
        let a = fit(&curves, &KMeansParams::new(2, 11)).unwrap();
        let b = fit(&curves, &KMeansParams::new(2, 11)).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.centers, b.centers);
        assert_eq!(a.inertia.to_bits(), b.inertia.to_bits());
    }

    #[test]
    fn inertia_trace_is_non_increasing() {
        let (curves, _) = two_group_set();
        let model = fit(&curves, &KMeansParams::new(2, 3)).unwrap();
        for trace in &model.restart_traces {
            for w in trace.windows(2) {
                assert!(
                    w[1] <= w[0] * (1.0 + 1e-12) + 1e-12,
                    "inertia increased: {} -> {}",
                    w[0],
                    w[1]
                );
            }
        }
    }

    #[test]
    fn permutation_of_inputs_relabels_only() {
        let (curves, _) = two_group_set();
        let model_a = fit(&curves, &KMeansParams::new(2, 42)).unwrap();
        let mut reversed = curves.clone();
        reversed.reverse();
        let model_b = fit(&reversed, &KMeansParams::new(2, 42)).unwrap();
        let relabels: Vec<usize> = model_b.labels.iter().rev().copied().collect();
        let ari = crate::modelselect::adjusted_rand_index(&model_a.labels, &relabels);
        assert_eq!(ari, 1.0);
    }

    #[test]
    fn no_empty_clusters_in_returned_model() {
        let (curves, _) = two_group_set();
        for k in 1..=4 {
            let model = fit(&curves, &KMeansParams::new(k, 9)).unwrap();
            let mut counts = vec![0usize; k];
            for &l in &model.labels {
                counts[l] += 1;
            }
            assert!(counts.iter().all(|&c| c > 0), "k={k}: empty cluster");
        }
    }

    #[test]
    fn summary_flags_small_clusters_and_counts_sum() {
        let (curves, _) = two_group_set();
        let ids: Vec<String> = (0..curves.len()).map(|i| format!("u{i:02}")).collect();
        let model = fit(&curves, &KMeansParams::new(2, 42)).unwrap();
        let summary = summarize(&model, &curves, &ids).unwrap();
        let total: usize = summary.clusters.iter().map(|c| c.count).sum();
        assert_eq!(total, curves.len());
        for c in &summary.clusters {
            assert_eq!(c.small_cluster, c.count < SMALL_CLUSTER_SIZE);
        }
    }
}
