//! Gradient-based analysis of cluster-average resilience curves:
//! archetype classification (Triangular / Trapezoidal / Transitional / Flat)
//! and extraction of the fundamental properties of each shape.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Analysis tolerances. Defaults suppress near-zero "fake peak" gradients
/// while keeping genuine slow recovery rates (~0.01 per step) visible.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ArchetypeParams {
    /// Gradients below this magnitude count as no movement.
    pub eps_grad: f64,
    /// Minimum |percentage change| for a significant turning point.
    pub pc_peak_threshold: f64,
    /// Plateau membership tolerance, as a fraction of the maximum loss.
    pub plateau_tol: f64,
    /// Plateaus at least this many steps long make a curve Trapezoidal;
    /// shorter non-zero plateaus with a pivot are Transitional.
    pub min_plateau: usize,
    /// Values within this distance of 0 count as recovered.
    pub eps_rec: f64,
}

impl Default for ArchetypeParams {
    fn default() -> Self {
        Self {
            eps_grad: 0.01,
            pc_peak_threshold: 1.0,
            plateau_tol: 0.02,
            min_plateau: 2,
            eps_rec: 0.02,
        }
    }
}

/// Forward-difference gradients and their percentage changes.
///
/// `gradients[t] = v[t+1] - v[t]` (one per step). `pc[t - 1]` compares
/// `gradients[t]` against `gradients[t-1]` and is `None` whenever the
/// previous gradient is below `eps_grad` in magnitude (the fake-peak guard).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientProfile {
    pub gradients: Vec<f64>,
    pub pc: Vec<Option<f64>>,
    pub eps_grad: f64,
}

pub fn gradient_profile(values: &[f64], eps_grad: f64) -> Result<GradientProfile> {
    if values.len() < 3 {
        return Err(Error::Domain("gradient profile needs at least 3 samples".into()));
    }
    let gradients: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let pc = gradients
        .windows(2)
        .map(|g| {
            if g[0].abs() < eps_grad {
                None
            } else {
                Some((g[1] - g[0]) / g[0].abs())
            }
        })
        .collect();
    Ok(GradientProfile { gradients, pc, eps_grad })
}

/// A detected change of gradient regime at curve sample `index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurningPoint {
    /// Sample index of the curve where the gradient changes.
    pub index: usize,
    /// Percentage change, when the previous gradient was large enough to
    /// define one.
    pub pc: Option<f64>,
    pub grad_before: f64,
    pub grad_after: f64,
    pub note: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TurningPoints {
    pub accepted: Vec<TurningPoint>,
    /// Candidates whose new gradient is below `eps_grad`: large percentage
    /// changes between tiny gradients are reported, not acted on.
    pub suppressed: Vec<TurningPoint>,
}

/// Significant gradient-regime changes in a profile.
///
/// A candidate is a local maximum of |pc| at or above `pc_peak_threshold`
/// (with |pc| taken as unbounded when the previous gradient is below
/// `eps_grad`). It is accepted when the gradient it turns *into* is itself
/// significant, and suppressed as a fake peak otherwise.
pub fn detect_turning_points(
    profile: &GradientProfile,
    pc_peak_threshold: f64,
) -> TurningPoints {
    let g = &profile.gradients;
    let eps = profile.eps_grad;
    // |pc| with division-by-tiny treated as infinite.
    let magnitude = |t: usize| -> f64 {
        // t indexes the gradient pair (g[t-1], g[t]); valid for t >= 1.
        if g[t - 1].abs() < eps {
            if (g[t] - g[t - 1]).abs() == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            ((g[t] - g[t - 1]) / g[t - 1].abs()).abs()
        }
    };

    let mut points = TurningPoints::default();
    for t in 1..g.len() {
        let m = magnitude(t);
        if m < pc_peak_threshold {
            continue;
        }
        // Local maximum; equal-magnitude runs keep only their last point.
        let left = if t > 1 { magnitude(t - 1) } else { 0.0 };
        let right = if t + 1 < g.len() { magnitude(t + 1) } else { 0.0 };
        if m < left || m <= right {
            continue;
        }
        let tp = TurningPoint {
            index: t,
            pc: profile.pc[t - 1],
            grad_before: g[t - 1],
            grad_after: g[t],
            note: String::new(),
        };
        if g[t].abs() >= eps {
            points.accepted.push(tp);
        } else {
            points.suppressed.push(TurningPoint {
                note: "fake peak: gradients too small to act on".into(),
                ..tp
            });
        }
    }
    points
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArchetypeLabel {
    Triangular,
    Trapezoidal,
    Transitional,
    Flat,
}

impl std::fmt::Display for ArchetypeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ArchetypeLabel::Triangular => "Triangular",
            ArchetypeLabel::Trapezoidal => "Trapezoidal",
            ArchetypeLabel::Transitional => "Transitional",
            ArchetypeLabel::Flat => "Flat",
        };
        f.write_str(s)
    }
}

/// Extracted fundamental properties; fields are populated per label.
/// All rates and times are in performance units per grid step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeProperties {
    /// Sample index of the maximum performance loss.
    pub t_min: usize,
    /// |min value| in [0, 1].
    pub max_loss: f64,
    /// Grid steps of sustained maximum loss.
    pub plateau_duration: usize,
    pub constant_recovery_rate: Option<f64>,
    pub pivot_time: Option<usize>,
    /// |curve value at the pivot|: the critical functionality threshold.
    pub critical_functionality_threshold: Option<f64>,
    pub fast_rate: Option<f64>,
    pub slow_rate: Option<f64>,
    pub fully_recovered: bool,
    /// Recovery truncated by the observation window.
    pub partial_recovery: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeReport {
    pub cluster: usize,
    pub label: ArchetypeLabel,
    pub properties: ArchetypeProperties,
    pub evidence: TurningPoints,
}

/// Shape geometry shared by the property extractors.
struct ShapeContext {
    t_min: usize,
    max_loss: f64,
    /// Last sample still on the plateau.
    plateau_end: usize,
    plateau_duration: usize,
    /// First sample at/after plateau_end whose value is within eps_rec of 0,
    /// or the last sample when recovery is truncated.
    recovery_end: usize,
    fully_recovered: bool,
}

fn shape_context(values: &[f64], params: &ArchetypeParams) -> ShapeContext {
    let t_min = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .unwrap();
    let min = values[t_min];
    let max_loss = -min;

    let mut plateau_end = t_min;
    while plateau_end + 1 < values.len()
        && (values[plateau_end + 1] - min).abs() <= params.plateau_tol * max_loss
    {
        plateau_end += 1;
    }

    let mut recovery_end = values.len() - 1;
    let mut fully_recovered = false;
    for t in plateau_end..values.len() {
        if values[t] >= -params.eps_rec {
            recovery_end = t;
            fully_recovered = true;
            break;
        }
    }

    ShapeContext {
        t_min,
        max_loss,
        plateau_end,
        plateau_duration: plateau_end - t_min,
        recovery_end,
        fully_recovered,
    }
}

/// The dominant recovery pivot: the deceleration (fast -> slow) inside the
/// recovery phase with the largest relative gradient change. The plateau-exit
/// turning point itself is excluded from candidacy.
fn find_pivot(values: &[f64], ctx: &ShapeContext, params: &ArchetypeParams) -> Option<usize> {
    let gradients: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let rec_start = ctx.plateau_end;
    let mut best: Option<(usize, f64)> = None;
    for t in (rec_start + 1)..ctx.recovery_end {
        let before = gradients[t - 1];
        let after = gradients[t];
        // Recovery deceleration: was rising meaningfully, still rising, but slower.
        if before < params.eps_grad || after < 0.0 {
            continue;
        }
        if before - after < params.eps_grad {
            continue;
        }
        let pc = ((after - before) / before.abs()).abs();
        let better = match best {
            Some((_, best_pc)) => pc > best_pc,
            None => true,
        };
        if better {
            best = Some((t, pc));
        }
    }
    best.map(|(t, _)| t)
}

/// Classify one curve and extract its label-specific properties.
/// Every curve receives exactly one label.
pub fn classify(values: &[f64], params: &ArchetypeParams) -> Result<ArchetypeReport> {
    let profile = gradient_profile(values, params.eps_grad)?;
    let evidence = detect_turning_points(&profile, params.pc_peak_threshold);
    let ctx = shape_context(values, params);

    let post_loss_flat = profile.gradients[ctx.t_min.min(profile.gradients.len())..]
        .iter()
        .all(|g| g.abs() < params.eps_grad);
    let final_recovered = *values.last().unwrap() >= -params.eps_rec;

    let pivot = find_pivot(values, &ctx, params);

    let label = if post_loss_flat && !final_recovered {
        ArchetypeLabel::Flat
    } else if ctx.plateau_duration >= params.min_plateau && pivot.is_none() {
        ArchetypeLabel::Trapezoidal
    } else if (1..params.min_plateau).contains(&ctx.plateau_duration) && pivot.is_some() {
        ArchetypeLabel::Transitional
    } else {
        ArchetypeLabel::Triangular
    };

    let properties = match label {
        ArchetypeLabel::Flat => ArchetypeProperties {
            t_min: ctx.t_min,
            max_loss: ctx.max_loss,
            plateau_duration: ctx.plateau_duration,
            fully_recovered: false,
            note: Some("no recovery within the observation window".into()),
            ..Default::default()
        },
        ArchetypeLabel::Trapezoidal => trapezoid_properties(values, params)?,
        ArchetypeLabel::Triangular => triangle_properties(values, params)?,
        ArchetypeLabel::Transitional => {
            // Bears properties of both archetypes: the short plateau plus
            // the two-rate recovery around the pivot.
            let mut props = triangle_properties(values, params)?;
            props.plateau_duration = ctx.plateau_duration;
            props
        }
    };

    Ok(ArchetypeReport { cluster: 0, label, properties, evidence })
}

/// Plateau duration and constant recovery rate of a trapezoidal (or
/// transitional) curve.
pub fn trapezoid_properties(
    values: &[f64],
    params: &ArchetypeParams,
) -> Result<ArchetypeProperties> {
    if values.len() < 3 {
        return Err(Error::Domain("curve too short".into()));
    }
    let ctx = shape_context(values, params);
    let mut props = ArchetypeProperties {
        t_min: ctx.t_min,
        max_loss: ctx.max_loss,
        plateau_duration: ctx.plateau_duration,
        fully_recovered: ctx.fully_recovered,
        partial_recovery: !ctx.fully_recovered,
        ..Default::default()
    };
    if ctx.recovery_end > ctx.plateau_end {
        let rate = (values[ctx.recovery_end] - values[ctx.plateau_end])
            / (ctx.recovery_end - ctx.plateau_end) as f64;
        props.constant_recovery_rate = Some(rate);
        if !ctx.fully_recovered {
            props.note = Some("recovery truncated by window end; rate over observed recovery only".into());
        }
    } else {
        props.note = Some("no recovery turning point; flat-degenerate".into());
    }
    Ok(props)
}

/// Recovery pivot, critical functionality threshold and fast/slow rates of a
/// triangular (or transitional) curve.
pub fn triangle_properties(
    values: &[f64],
    params: &ArchetypeParams,
) -> Result<ArchetypeProperties> {
    if values.len() < 3 {
        return Err(Error::Domain("curve too short".into()));
    }
    let ctx = shape_context(values, params);
    let mut props = ArchetypeProperties {
        t_min: ctx.t_min,
        max_loss: ctx.max_loss,
        plateau_duration: ctx.plateau_duration,
        fully_recovered: ctx.fully_recovered,
        partial_recovery: !ctx.fully_recovered,
        ..Default::default()
    };
    let rec_start = ctx.plateau_end;
    match find_pivot(values, &ctx, params) {
        Some(pivot) => {
            props.pivot_time = Some(pivot);
            props.critical_functionality_threshold = Some(values[pivot].abs());
            props.fast_rate =
                Some((values[pivot] - values[rec_start]) / (pivot - rec_start) as f64);
            if ctx.recovery_end > pivot {
                props.slow_rate = Some(
                    (values[ctx.recovery_end] - values[pivot])
                        / (ctx.recovery_end - pivot) as f64,
                );
            }
        }
        None => {
            if ctx.recovery_end > rec_start {
                props.constant_recovery_rate = Some(
                    (values[ctx.recovery_end] - values[rec_start])
                        / (ctx.recovery_end - rec_start) as f64,
                );
            }
            props.note = Some("single recovery rate: loss below critical threshold".into());
        }
    }
    Ok(props)
}

/// Spearman rank correlation (midranks for ties) between plateau duration
/// and constant recovery rate across trapezoidal reports. `None` when fewer
/// than 3 reports carry both fields.
pub fn duration_rate_relation(reports: &[ArchetypeProperties]) -> Option<f64> {
    let pairs: Vec<(f64, f64)> = reports
        .iter()
        .filter_map(|p| {
            p.constant_recovery_rate.map(|r| (p.plateau_duration as f64, r))
        })
        .collect();
    if pairs.len() < 3 {
        return None;
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Some(pearson(&midranks(&x), &midranks(&y)))
}

fn midranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}
