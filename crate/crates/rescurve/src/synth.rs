//! Seeded generators of ground-truth resilience curves for every archetype,
//! so the pipeline can be exercised end to end without proprietary outage
//! data. Noiseless templates classify back to their own label exactly.

use chrono::{TimeZone, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::archetype::{ArchetypeLabel, ArchetypeProperties};
use crate::error::{Error, Result};
use crate::types::{CurveSet, Provenance, ResilienceCurve, TimeGrid};

/// Shape parameters per archetype. Rates are per grid step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "label")]
pub enum TemplateShape {
    Triangular {
        max_loss: f64,
        /// Loss level at the recovery pivot; `None` generates a single-rate
        /// triangle (loss below the critical threshold).
        pivot_level: Option<f64>,
        fast_rate: f64,
        slow_rate: f64,
    },
    Trapezoidal {
        max_loss: f64,
        plateau_duration: usize,
        recovery_rate: f64,
    },
    Transitional {
        max_loss: f64,
        plateau_duration: usize,
        pivot_level: f64,
        fast_rate: f64,
        slow_rate: f64,
    },
    Flat {
        max_loss: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeTemplate {
    pub shape: TemplateShape,
    /// Sample index of the drop to maximum loss (>= 1; sample 0 is baseline).
    pub t_drop: usize,
    /// Total curve length in samples, baseline included.
    pub len: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl ArchetypeTemplate {
    pub fn label(&self) -> ArchetypeLabel {
        match self.shape {
            TemplateShape::Triangular { .. } => ArchetypeLabel::Triangular,
            TemplateShape::Trapezoidal { .. } => ArchetypeLabel::Trapezoidal,
            TemplateShape::Transitional { .. } => ArchetypeLabel::Transitional,
            TemplateShape::Flat { .. } => ArchetypeLabel::Flat,
        }
    }
}

fn check_loss(max_loss: f64) -> Result<()> {
    if !(max_loss > ResilienceCurve::MIN_IMPACT && max_loss <= 1.0) {
        return Err(Error::Config(format!(
            "max_loss must be in ({}, 1], got {max_loss}",
            ResilienceCurve::MIN_IMPACT
        )));
    }
    Ok(())
}

/// Number of whole steps a segment of height `span` takes at `rate`;
/// the template is infeasible when the division is not near-integral.
fn segment_steps(span: f64, rate: f64, what: &str) -> Result<usize> {
    if !(rate > 0.0) {
        return Err(Error::Config(format!("{what}: rate must be positive, got {rate}")));
    }
    let steps = span / rate;
    let rounded = steps.round();
    if rounded < 1.0 || (steps - rounded).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "{what}: span {span} is not a whole number of steps at rate {rate}"
        )));
    }
    Ok(rounded as usize)
}

/// Generate the curve a template describes, together with its ground-truth
/// properties. With `noise_sigma = 0` the curve realizes the template
/// exactly; noise is seeded Gaussian, re-clamped to [-1, 0], baseline forced.
pub fn generate(template: &ArchetypeTemplate) -> Result<(Vec<f64>, ArchetypeProperties)> {
    if template.t_drop < 1 {
        return Err(Error::Config("t_drop must be at least 1".into()));
    }
    if template.noise_sigma < 0.0 {
        return Err(Error::Config("noise_sigma must be non-negative".into()));
    }

    let mut values = vec![0.0; template.t_drop];
    let mut props = ArchetypeProperties { t_min: template.t_drop, ..Default::default() };

    match &template.shape {
        TemplateShape::Flat { max_loss } => {
            check_loss(*max_loss)?;
            props.max_loss = *max_loss;
            while values.len() < template.len {
                values.push(-max_loss);
            }
            props.plateau_duration = template.len - 1 - template.t_drop;
            props.fully_recovered = false;
        }
        TemplateShape::Trapezoidal { max_loss, plateau_duration, recovery_rate } => {
            check_loss(*max_loss)?;
            if *plateau_duration < 1 {
                return Err(Error::Config("trapezoid plateau_duration must be >= 1".into()));
            }
            let rec_steps = segment_steps(*max_loss, *recovery_rate, "trapezoid recovery")?;
            props.max_loss = *max_loss;
            props.plateau_duration = *plateau_duration;
            props.constant_recovery_rate = Some(*recovery_rate);
            props.fully_recovered = true;
            for _ in 0..=*plateau_duration {
                values.push(-max_loss);
            }
            for s in 1..=rec_steps {
                values.push(-max_loss + recovery_rate * s as f64);
            }
        }
        TemplateShape::Triangular { max_loss, pivot_level, fast_rate, slow_rate } => {
            build_two_rate(
                &mut values,
                &mut props,
                *max_loss,
                0,
                *pivot_level,
                *fast_rate,
                *slow_rate,
            )?;
        }
        TemplateShape::Transitional { max_loss, plateau_duration, pivot_level, fast_rate, slow_rate } => {
            if *plateau_duration < 1 {
                return Err(Error::Config("transitional plateau_duration must be >= 1".into()));
            }
            build_two_rate(
                &mut values,
                &mut props,
                *max_loss,
                *plateau_duration,
                Some(*pivot_level),
                *fast_rate,
                *slow_rate,
            )?;
        }
    }

    if values.len() > template.len {
        return Err(Error::Config(format!(
            "infeasible template: shape needs {} samples but len is {}",
            values.len(),
            template.len
        )));
    }
    let tail = *values.last().unwrap();
    while values.len() < template.len {
        values.push(tail);
    }
    // Segment arithmetic can overshoot the bounds by a few ulps
    // (e.g. -0.6 + 6 * 0.1 > 0); snap back into range.
    for v in values.iter_mut() {
        *v = v.clamp(-1.0, 0.0);
    }

    if template.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(template.seed);
        let normal = Normal::new(0.0, template.noise_sigma)
            .map_err(|e| Error::Config(format!("bad noise sigma: {e}")))?;
        for v in values.iter_mut().skip(1) {
            *v = (*v + normal.sample(&mut rng)).clamp(-1.0, 0.0);
        }
        values[0] = 0.0;
    }
    Ok((values, props))
}

fn build_two_rate(
    values: &mut Vec<f64>,
    props: &mut ArchetypeProperties,
    max_loss: f64,
    plateau_duration: usize,
    pivot_level: Option<f64>,
    fast_rate: f64,
    slow_rate: f64,
) -> Result<()> {
    check_loss(max_loss)?;
    props.max_loss = max_loss;
    props.plateau_duration = plateau_duration;
    for _ in 0..=plateau_duration {
        values.push(-max_loss);
    }
    match pivot_level {
        Some(pivot) => {
            if !(pivot > 0.0 && pivot < max_loss) {
                return Err(Error::Config(format!(
                    "pivot_level must lie in (0, max_loss), got {pivot}"
                )));
            }
            if fast_rate <= slow_rate {
                return Err(Error::Config("fast_rate must exceed slow_rate".into()));
            }
            let fast_steps = segment_steps(max_loss - pivot, fast_rate, "fast recovery")?;
            let slow_steps = segment_steps(pivot, slow_rate, "slow recovery")?;
            for s in 1..=fast_steps {
                values.push(-max_loss + fast_rate * s as f64);
            }
            for s in 1..=slow_steps {
                values.push(-pivot + slow_rate * s as f64);
            }
            props.pivot_time = Some(props.t_min + plateau_duration + fast_steps);
            props.critical_functionality_threshold = Some(pivot);
            props.fast_rate = Some(fast_rate);
            props.slow_rate = Some(slow_rate);
        }
        None => {
            let steps = segment_steps(max_loss, slow_rate, "single-rate recovery")?;
            for s in 1..=steps {
                values.push(-max_loss + slow_rate * s as f64);
            }
            props.constant_recovery_rate = Some(slow_rate);
        }
    }
    props.fully_recovered = true;
    Ok(())
}

/// A mixture of templates with per-template counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mixture {
    pub templates: Vec<(ArchetypeTemplate, usize)>,
}

/// Ground-truth record for one generated curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub unit_id: String,
    /// Index of the template in the mixture (cluster ground truth).
    pub group: usize,
    pub label: ArchetypeLabel,
    pub properties: ArchetypeProperties,
}

/// Generate a curve set plus ground-truth labels from a template mixture.
/// Per-curve seeds are derived from `seed`; identical inputs give identical
/// output.
pub fn generate_dataset(
    mixture: &Mixture,
    noise_sigma: f64,
    seed: u64,
) -> Result<(CurveSet, Vec<GroundTruth>)> {
    if mixture.templates.is_empty() || mixture.templates.iter().all(|(_, n)| *n == 0) {
        return Err(Error::Config("mixture must contain at least one template".into()));
    }
    let len = mixture.templates[0].0.len;
    if mixture.templates.iter().any(|(t, _)| t.len != len) {
        return Err(Error::Config("all templates in a mixture must share one length".into()));
    }

    let mut curves = Vec::new();
    let mut truths = Vec::new();
    let mut curve_index = 0u64;
    for (group, (template, count)) in mixture.templates.iter().enumerate() {
        for _ in 0..*count {
            let mut t = template.clone();
            t.noise_sigma = noise_sigma;
            t.seed = seed
                .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(curve_index.wrapping_add(1)));
            let (values, properties) = generate(&t)?;
            let unit_id = format!("synth-{curve_index:04}");
            curves.push(ResilienceCurve { unit_id: unit_id.clone(), values });
            truths.push(GroundTruth {
                unit_id,
                group,
                label: template.label(),
                properties,
            });
            curve_index += 1;
        }
    }

    // Synthetic daily grid; the epoch is arbitrary but fixed for determinism.
    let start = Utc.with_ymd_and_hms(2021, 8, 28, 0, 0, 0).unwrap();
    let grid = TimeGrid { start, step_seconds: 86_400, n_steps: len };
    let set = CurveSet {
        event_name: "synthetic".into(),
        grid,
        curves,
        provenance: Provenance {
            source: format!("synth seed={seed} noise_sigma={noise_sigma}"),
            filters: vec![],
            n_input_units: truths.len(),
            n_dropped: 0,
        },
    };
    set.validate()?;
    Ok((set, truths))
}

/// Convenience templates used by tests and the CLI presets.
pub mod presets {
    use super::*;

    pub fn triangular(len: usize) -> ArchetypeTemplate {
        ArchetypeTemplate {
            shape: TemplateShape::Triangular {
                max_loss: 0.5,
                pivot_level: Some(0.2),
                fast_rate: 0.15,
                slow_rate: 0.05,
            },
            t_drop: 1,
            len,
            noise_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn trapezoidal(len: usize) -> ArchetypeTemplate {
        ArchetypeTemplate {
            shape: TemplateShape::Trapezoidal {
                max_loss: 0.6,
                plateau_duration: 4,
                recovery_rate: 0.1,
            },
            t_drop: 1,
            len,
            noise_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn transitional(len: usize) -> ArchetypeTemplate {
        ArchetypeTemplate {
            shape: TemplateShape::Transitional {
                max_loss: 0.5,
                plateau_duration: 1,
                pivot_level: 0.2,
                fast_rate: 0.15,
                slow_rate: 0.05,
            },
            t_drop: 1,
            len,
            noise_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn flat(len: usize) -> ArchetypeTemplate {
        ArchetypeTemplate {
            shape: TemplateShape::Flat { max_loss: 0.4 },
            t_drop: 1,
            len,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archetype::{classify, ArchetypeParams};

    #[test]
    fn triangular_template_realizes_worked_curve() {
        let (values, props) = generate(&presets::triangular(8)).unwrap();
        let expected = [0.0, -0.5, -0.35, -0.2, -0.15, -0.1, -0.05, 0.0];
        assert_eq!(values.len(), expected.len());
        for (v, e) in values.iter().zip(expected) {
            assert!((v - e).abs() < 1e-12, "{v} vs {e}");
        }
        assert_eq!(props.pivot_time, Some(3));
        assert_eq!(props.critical_functionality_threshold, Some(0.2));
    }

    #[test]
    fn flat_template_is_constant_after_drop() {
        let (values, _) = generate(&presets::flat(6)).unwrap();
        assert_eq!(values, vec![0.0, -0.4, -0.4, -0.4, -0.4, -0.4]);
    }

    #[test]
    fn infeasible_templates_are_config_errors() {
        // Recovery does not fit in the window.
        let mut t = presets::trapezoidal(5);
        assert!(matches!(generate(&t).unwrap_err(), Error::Config(_)));
        // Span not a whole number of steps at the given rate.
        t = presets::triangular(20);
        if let TemplateShape::Triangular { fast_rate, .. } = &mut t.shape {
            *fast_rate = 0.17;
        }
        assert!(matches!(generate(&t).unwrap_err(), Error::Config(_)));
    }

    #[test]
    fn noiseless_roundtrip_classifies_to_own_label() {
        let params = ArchetypeParams::default();
        for template in [
            presets::triangular(12),
            presets::trapezoidal(14),
            presets::transitional(14),
            presets::flat(8),
        ] {
            let (values, props) = generate(&template).unwrap();
            let report = classify(&values, &params).unwrap();
            assert_eq!(report.label, template.label(), "template {:?}", template.shape);
            assert_eq!(report.properties.plateau_duration, props.plateau_duration);
            assert_eq!(report.properties.pivot_time, props.pivot_time);
        }
    }

    #[test]
    fn noisy_curve_is_reproducible_and_still_classifies() {
        let mut t = presets::triangular(14);
        t.noise_sigma = 0.01;
        t.seed = 77;
        let (a, _) = generate(&t).unwrap();
        let (b, _) = generate(&t).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0], 0.0);
        assert!(a.iter().all(|v| (-1.0..=0.0).contains(v)));
        let report = classify(&a, &ArchetypeParams::default()).unwrap();
        assert_eq!(report.label, ArchetypeLabel::Triangular);
    }

    #[test]
    fn dataset_counts_groups_and_determinism() {
        let mixture = Mixture {
            templates: vec![(presets::triangular(14), 40), (presets::trapezoidal(14), 40)],
        };
        let (set, truth) = generate_dataset(&mixture, 0.02, 42).unwrap();
        assert_eq!(set.curves.len(), 80);
        assert_eq!(truth.iter().filter(|t| t.group == 0).count(), 40);
        let (set2, truth2) = generate_dataset(&mixture, 0.02, 42).unwrap();
        assert_eq!(set, set2);
        assert_eq!(truth, truth2);
    }

    #[test]
    fn empty_mixture_is_config_error() {
        let err = generate_dataset(&Mixture { templates: vec![] }, 0.0, 1).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
