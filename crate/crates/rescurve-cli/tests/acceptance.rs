//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (visible with `--nocapture`). Oracle checks use an
//! independent brute-force DTW implementation defined at the bottom.

use std::panic::AssertUnwindSafe;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rescurve::archetype::{classify, duration_rate_relation, ArchetypeLabel, ArchetypeParams};
use rescurve::cluster::{fit, KMeansParams};
use rescurve::dtw::{dtw, pairwise_matrix};
use rescurve::modelselect::{
    adjusted_rand_index, distortion, silhouette, sweep_k, SilhouetteDenominator,
};
use rescurve::synth::{generate, generate_dataset, presets, ArchetypeTemplate, Mixture,
    TemplateShape};

fn criterion(n: u32, name: &str, f: impl FnOnce()) {
    let start = Instant::now();
    match std::panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(()) => println!("acceptance {n:2} ({name}): PASS [{:.2?}]", start.elapsed()),
        Err(cause) => {
            println!("acceptance {n:2} ({name}): FAIL");
            std::panic::resume_unwind(cause);
        }
    }
}

fn random_sequence(rng: &mut ChaCha8Rng, max_len: usize) -> Vec<f64> {
    let len = rng.gen_range(1..=max_len);
    (0..len).map(|_| -rng.gen::<f64>()).collect()
}

#[test]
fn a01_dtw_oracle_equivalence() {
    criterion(1, "dtw matches exhaustive path enumeration", || {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        for _ in 0..1_000 {
            let p = random_sequence(&mut rng, 6);
            let q = random_sequence(&mut rng, 6);
            let fast = dtw(&p, &q, false).unwrap().distance;
            let oracle = dtw_brute_force(&p, &q);
            let tol = 1e-12 * oracle.max(1.0);
            assert!(
                (fast - oracle).abs() <= tol,
                "dtw {fast} vs oracle {oracle} on {p:?} / {q:?}"
            );
        }
        assert!(start.elapsed().as_secs() < 10, "oracle check too slow");
    });
}

#[test]
fn a02_dtw_metric_properties() {
    criterion(2, "dtw non-negativity, symmetry, identity, euclidean bound", || {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(202);
        for _ in 0..10_000 {
            let p = random_sequence(&mut rng, 12);
            let q = random_sequence(&mut rng, 12);
            let d_pq = dtw(&p, &q, false).unwrap().distance;
            let d_qp = dtw(&q, &p, false).unwrap().distance;
            assert!(d_pq >= 0.0);
            assert!(d_pq == d_qp, "symmetry violated: {d_pq} vs {d_qp}");
            assert_eq!(dtw(&p, &p, false).unwrap().distance, 0.0);
            if p.len() == q.len() {
                let euclid: f64 =
                    p.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                assert!(d_pq <= euclid + 1e-12, "bound violated: {d_pq} > {euclid}");
            }
        }
        assert!(start.elapsed().as_secs() < 10, "metric check too slow");
    });
}

fn two_archetype_mixture() -> Mixture {
    Mixture { templates: vec![(presets::triangular(14), 40), (presets::trapezoidal(14), 40)] }
}

#[test]
fn a03_clustering_recovery() {
    criterion(3, "k=2 recovers the synthetic two-archetype partition", || {
        let start = Instant::now();
        let (set, truth) = generate_dataset(&two_archetype_mixture(), 0.02, 42).unwrap();
        let values = set.values();
        let truth_labels: Vec<usize> = truth.iter().map(|t| t.group).collect();
        for seed in 1..=5u64 {
            let model = fit(&values, &KMeansParams::new(2, seed)).unwrap();
            let ari = adjusted_rand_index(&model.labels, &truth_labels);
            assert!(ari >= 0.95, "seed {seed}: ARI {ari} < 0.95");
        }
        let (set0, truth0) = generate_dataset(&two_archetype_mixture(), 0.0, 42).unwrap();
        let labels0: Vec<usize> = truth0.iter().map(|t| t.group).collect();
        let model0 = fit(&set0.values(), &KMeansParams::new(2, 1)).unwrap();
        assert_eq!(adjusted_rand_index(&model0.labels, &labels0), 1.0);
        assert!(start.elapsed().as_secs() < 60, "clustering recovery too slow");
    });
}

#[test]
fn a04_monotone_inertia() {
    criterion(4, "inertia non-increasing within every restart", || {
        let (set, _) = generate_dataset(&two_archetype_mixture(), 0.02, 42).unwrap();
        let values = set.values();
        let mut models = Vec::new();
        for seed in 1..=5u64 {
            models.push(fit(&values, &KMeansParams::new(2, seed)).unwrap());
        }
        let (set0, _) = generate_dataset(&two_archetype_mixture(), 0.0, 42).unwrap();
        models.push(fit(&set0.values(), &KMeansParams::new(2, 1)).unwrap());
        for model in &models {
            assert!(!model.restart_traces.is_empty());
            for trace in &model.restart_traces {
                for step in trace.windows(2) {
                    assert!(
                        step[1] <= step[0] + 1e-9 * step[0].abs().max(1.0),
                        "inertia rose within a restart: {step:?}"
                    );
                }
            }
        }
    });
}

#[test]
fn a05_k_selection() {
    criterion(5, "sweep recommends k=2 on the two-archetype set", || {
        let start = Instant::now();
        let (set, _) = generate_dataset(&two_archetype_mixture(), 0.02, 42).unwrap();
        let values = set.values();
        let dm = pairwise_matrix(&values).unwrap();
        let report = sweep_k(&values, &dm, 2, 8, &KMeansParams::new(2, 7)).unwrap();
        let argmax = report
            .entries
            .iter()
            .max_by(|a, b| a.silhouette.partial_cmp(&b.silhouette).unwrap())
            .unwrap();
        assert_eq!(argmax.k, 2, "silhouette argmax at k={}", argmax.k);
        assert_eq!(report.recommended_k, 2, "rationale: {}", report.rationale);
        let at_two = report.entries.iter().find(|e| e.k == 2).unwrap();
        assert!(at_two.silhouette >= 0.5, "silhouette at k=2 is {}", at_two.silhouette);
        assert!(start.elapsed().as_secs() < 300, "k sweep too slow");
    });
}

#[test]
fn a06_silhouette_and_distortion_exactness() {
    criterion(6, "silhouette exactly 1.0 and distortion exactly 0 in degenerate cases", || {
        let mut curves = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..4 {
            curves.push(vec![0.0, -0.7, -0.45, -0.2, 0.0, 0.0]);
            labels.push(0);
            curves.push(vec![0.0, -0.7, -0.7, -0.7, -0.35, 0.0]);
            labels.push(1);
        }
        let dm = pairwise_matrix(&curves).unwrap();
        let breakdown = silhouette(&dm, &labels, SilhouetteDenominator::Max).unwrap();
        assert_eq!(breakdown.overall, 1.0);

        let distinct: Vec<Vec<f64>> = (1..=5)
            .map(|i| vec![0.0, -0.1 * i as f64, -0.05 * i as f64, 0.0])
            .collect();
        let model = fit(&distinct, &KMeansParams::new(distinct.len(), 3)).unwrap();
        assert_eq!(distortion(&distinct, &model).unwrap(), 0.0);
    });
}

#[test]
fn a07_property_extraction_grid() {
    criterion(7, "noiseless template properties recovered to 1e-9", || {
        let start = Instant::now();
        let params = ArchetypeParams::default();
        let losses = [0.2, 0.4, 0.6, 0.8, 1.0];
        let pivot_fracs = [0.1, 0.2, 0.3, 0.4, 0.5];
        let step_pairs = [(2usize, 4usize), (3, 6), (2, 8)];
        for &max_loss in &losses {
            for &frac in &pivot_fracs {
                for &(n_fast, n_slow) in &step_pairs {
                    let pivot = frac * max_loss;
                    let template = ArchetypeTemplate {
                        shape: TemplateShape::Triangular {
                            max_loss,
                            pivot_level: Some(pivot),
                            fast_rate: (max_loss - pivot) / n_fast as f64,
                            slow_rate: pivot / n_slow as f64,
                        },
                        t_drop: 1,
                        len: 20,
                        noise_sigma: 0.0,
                        seed: 0,
                    };
                    let (values, truth) = generate(&template).unwrap();
                    let report = classify(&values, &params).unwrap();
                    assert_eq!(report.label, ArchetypeLabel::Triangular);
                    let got = &report.properties;
                    assert_eq!(got.pivot_time, truth.pivot_time, "pivot time mismatch");
                    let close = |a: Option<f64>, b: Option<f64>| {
                        (a.unwrap() - b.unwrap()).abs() <= 1e-9
                    };
                    assert!(close(
                        got.critical_functionality_threshold,
                        truth.critical_functionality_threshold
                    ));
                    assert!(close(got.fast_rate, truth.fast_rate));
                    assert!(close(got.slow_rate, truth.slow_rate));
                }
            }
        }
        for &max_loss in &losses {
            for plateau in [2usize, 3, 4] {
                for n_rec in [2usize, 4, 5] {
                    let template = ArchetypeTemplate {
                        shape: TemplateShape::Trapezoidal {
                            max_loss,
                            plateau_duration: plateau,
                            recovery_rate: max_loss / n_rec as f64,
                        },
                        t_drop: 1,
                        len: 20,
                        noise_sigma: 0.0,
                        seed: 0,
                    };
                    let (values, truth) = generate(&template).unwrap();
                    let report = classify(&values, &params).unwrap();
                    assert_eq!(report.label, ArchetypeLabel::Trapezoidal);
                    let got = &report.properties;
                    assert_eq!(got.plateau_duration, truth.plateau_duration);
                    let rate = got.constant_recovery_rate.unwrap();
                    assert!((rate - truth.constant_recovery_rate.unwrap()).abs() <= 1e-9);
                }
            }
        }
        assert!(start.elapsed().as_secs() < 10, "property grid too slow");
    });
}

#[test]
fn a08_fake_peak_suppression() {
    criterion(8, "tiny post-drop gradients yield zero turning points and Flat", || {
        let mut values = vec![0.0, -0.5];
        values.push(values[1] + 0.00531);
        values.push(values[2] + 0.000118);
        while values.len() < 10 {
            values.push(values[3]);
        }
        let report = classify(&values, &ArchetypeParams::default()).unwrap();
        assert_eq!(report.label, ArchetypeLabel::Flat);
        assert!(report.evidence.accepted.is_empty(), "{:?}", report.evidence.accepted);
        assert!(!report.evidence.suppressed.is_empty(), "fake peaks should be listed");
    });
}

#[test]
fn a09_duration_rate_relation() {
    criterion(9, "plateau duration anti-correlates with recovery rate", || {
        let mut props = Vec::new();
        for duration in 2..=9usize {
            let rate = 0.3 / (1.0 + duration as f64);
            let template = ArchetypeTemplate {
                shape: TemplateShape::Trapezoidal {
                    max_loss: 0.6,
                    plateau_duration: duration,
                    recovery_rate: rate,
                },
                t_drop: 1,
                len: 36,
                noise_sigma: 0.0,
                seed: 0,
            };
            let (values, _) = generate(&template).unwrap();
            let report = classify(&values, &ArchetypeParams::default()).unwrap();
            assert_eq!(report.label, ArchetypeLabel::Trapezoidal);
            props.push(report.properties);
        }
        let rho = duration_rate_relation(&props).expect("enough trapezoids");
        assert!(rho <= -0.9, "Spearman {rho} > -0.9");
    });
}

#[test]
fn a10_spot_value_fixtures() {
    criterion(10, "hand-built fixtures reproduce anchored pivot levels", || {
        let params = ArchetypeParams::default();

        // Daily grid, two-rate recovery pivoting at -0.205.
        let daily = vec![0.0, -0.605, -0.405, -0.205, -0.164, -0.123, -0.082, -0.041, 0.0];
        let report = classify(&daily, &params).unwrap();
        assert_eq!(report.label, ArchetypeLabel::Triangular);
        let threshold = report.properties.critical_functionality_threshold.unwrap();
        assert!((threshold - 0.205).abs() <= 0.005, "threshold {threshold}");
        let pivot = report.properties.pivot_time.unwrap() as i64;
        assert!((pivot - 3).abs() <= 1, "pivot at {pivot}");

        // Critical functionality threshold around 16.8%.
        let storm = vec![0.0, -0.468, -0.318, -0.168, -0.126, -0.084, -0.042, 0.0];
        let report = classify(&storm, &params).unwrap();
        assert_eq!(report.label, ArchetypeLabel::Triangular);
        let threshold = report.properties.critical_functionality_threshold.unwrap();
        assert!((threshold - 0.168).abs() <= 0.005, "threshold {threshold}");

        // Six-hour grid: a one-sample plateau with a 12.9% threshold is
        // transitional, not trapezoidal.
        let six_hour = vec![0.0, -0.529, -0.529, -0.329, -0.129, -0.086, -0.043, 0.0];
        let report = classify(&six_hour, &params).unwrap();
        assert_eq!(report.label, ArchetypeLabel::Transitional);
        assert_eq!(report.properties.plateau_duration, 1);
        let threshold = report.properties.critical_functionality_threshold.unwrap();
        assert!((threshold - 0.129).abs() <= 0.005, "threshold {threshold}");
        let pivot = report.properties.pivot_time.unwrap() as i64;
        assert!((pivot - 4).abs() <= 1, "pivot at {pivot}");
    });
}

#[test]
fn a11_end_to_end_determinism() {
    criterion(11, "run-all twice with one seed is byte-identical", || {
        use std::process::Command;
        let bin = env!("CARGO_BIN_EXE_rescurve");
        let dir = tempfile::tempdir().unwrap();
        let synth_dir = dir.path().join("synth");
        let status = Command::new(bin)
            .args([
                "synth",
                "--triangular",
                "10",
                "--trapezoidal",
                "10",
                "--len",
                "14",
                "--noise-sigma",
                "0.02",
                "--seed",
                "42",
                "--out-dir",
            ])
            .arg(&synth_dir)
            .status()
            .unwrap();
        assert!(status.success());
        let curves = synth_dir.join("curves.json");

        let mut outputs = Vec::new();
        for run in ["a", "b"] {
            let out_dir = dir.path().join(run);
            let status = Command::new(bin)
                .args(["run-all", "--curves"])
                .arg(&curves)
                .args(["--k-min", "2", "--k-max", "4", "--seed", "7", "--out-dir"])
                .arg(&out_dir)
                .status()
                .unwrap();
            assert!(status.success());
            let mut files: Vec<_> = std::fs::read_dir(&out_dir)
                .unwrap()
                .map(|e| e.unwrap().path())
                .collect();
            files.sort();
            assert!(!files.is_empty());
            assert!(files.iter().any(|f| f.extension().is_some_and(|e| e == "svg")));
            outputs.push(
                files
                    .iter()
                    .map(|f| (f.file_name().unwrap().to_owned(), std::fs::read(f).unwrap()))
                    .collect::<Vec<_>>(),
            );
        }
        assert_eq!(outputs[0].len(), outputs[1].len());
        for (a, b) in outputs[0].iter().zip(&outputs[1]) {
            assert_eq!(a.0, b.0);
            assert_eq!(a.1, b.1, "{:?} differs between runs", a.0);
        }
    });
}

/// Independent DTW oracle: enumerate every monotone, continuous warping
/// path, take the minimal accumulated squared cost, and return its root.
fn dtw_brute_force(p: &[f64], q: &[f64]) -> f64 {
    fn explore(p: &[f64], q: &[f64], i: usize, j: usize, acc: f64, best: &mut f64) {
        let acc = acc + (p[i] - q[j]) * (p[i] - q[j]);
        if acc >= *best {
            return;
        }
        if i == p.len() - 1 && j == q.len() - 1 {
            *best = acc;
            return;
        }
        if i + 1 < p.len() && j + 1 < q.len() {
            explore(p, q, i + 1, j + 1, acc, best);
        }
        if i + 1 < p.len() {
            explore(p, q, i + 1, j, acc, best);
        }
        if j + 1 < q.len() {
            explore(p, q, i, j + 1, acc, best);
        }
    }
    let mut best = f64::INFINITY;
    explore(p, q, 0, 0, 0.0, &mut best);
    best.sqrt()
}
