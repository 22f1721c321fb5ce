//! Core data types shared across the pipeline: time grids, gridded series,
//! resilience curves and curve sets.

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A uniform time grid: `n_steps` cells of width `step_seconds` starting at `start`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub start: DateTime<Utc>,
    pub step_seconds: u64,
    pub n_steps: usize,
}

impl TimeGrid {
    /// A curve needs a baseline, a loss and at least one recovery sample,
    /// so fewer than 3 steps is rejected.
    pub const MIN_STEPS: usize = 3;

    pub fn new(start: DateTime<Utc>, step_seconds: u64, n_steps: usize) -> Result<Self> {
        if step_seconds == 0 {
            return Err(Error::Config("grid step must be positive".into()));
        }
        if n_steps < Self::MIN_STEPS {
            return Err(Error::Config(format!(
                "grid needs at least {} steps, got {n_steps}",
                Self::MIN_STEPS
            )));
        }
        Ok(Self { start, step_seconds, n_steps })
    }

    pub fn step(&self) -> Duration {
        Duration::seconds(self.step_seconds as i64)
    }

    pub fn end(&self) -> DateTime<Utc> {
        self.start + self.step() * self.n_steps as i32
    }

    /// Index of the cell containing `t`, or `None` if `t` falls outside the grid.
    pub fn cell_index(&self, t: DateTime<Utc>) -> Option<usize> {
        if t < self.start || t >= self.end() {
            return None;
        }
        let offset = (t - self.start).num_seconds() as u64;
        Some((offset / self.step_seconds) as usize)
    }

    pub fn cell_start(&self, index: usize) -> DateTime<Utc> {
        self.start + self.step() * index as i32
    }

    /// The grid of a resilience curve: one extra step prepended for the baseline sample.
    pub fn with_baseline_prepended(&self) -> TimeGrid {
        TimeGrid {
            start: self.start - self.step(),
            step_seconds: self.step_seconds,
            n_steps: self.n_steps + 1,
        }
    }
}

/// Outage fractions for one spatial unit on a shared grid; `None` marks a cell
/// with no observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GriddedSeries {
    pub unit_id: String,
    pub values: Vec<Option<f64>>,
}

impl GriddedSeries {
    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    pub fn missing_ratio(&self) -> f64 {
        self.missing_count() as f64 / self.values.len() as f64
    }

    /// Maximum present fraction, `None` when all cells are missing.
    pub fn peak(&self) -> Option<f64> {
        self.values
            .iter()
            .flatten()
            .copied()
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
    }
}

/// A baseline-anchored, negated outage-fraction series: the normalized
/// performance measure that clustering and archetype analysis operate on.
///
/// `values[0]` is always exactly 0 and every sample lies in `[-1, 0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResilienceCurve {
    pub unit_id: String,
    pub values: Vec<f64>,
}

impl ResilienceCurve {
    /// Impact filter level: retained curves must dip to at least this loss.
    pub const MIN_IMPACT: f64 = 0.10;

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Domain(format!("curve {}: empty", self.unit_id)));
        }
        if self.values[0] != 0.0 {
            return Err(Error::Domain(format!(
                "curve {}: baseline sample is {}, expected 0",
                self.unit_id, self.values[0]
            )));
        }
        if self.values.iter().any(|v| !v.is_finite() || *v < -1.0 || *v > 0.0) {
            return Err(Error::Domain(format!(
                "curve {}: values must be finite and in [-1, 0]",
                self.unit_id
            )));
        }
        let min = self.values.iter().cloned().fold(f64::INFINITY, f64::min);
        if min > -Self::MIN_IMPACT {
            return Err(Error::Domain(format!(
                "curve {}: peak loss {:.3} is below the {:.0}% impact filter",
                self.unit_id,
                -min,
                Self::MIN_IMPACT * 100.0
            )));
        }
        Ok(())
    }
}

/// Provenance notes carried along with a curve set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub filters: Vec<String>,
    pub n_input_units: usize,
    pub n_dropped: usize,
}

/// A set of resilience curves sharing one grid; the unit the rest of the
/// pipeline consumes and the on-disk curve-set file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSet {
    pub event_name: String,
    /// Grid of the curves themselves, baseline step included.
    pub grid: TimeGrid,
    pub curves: Vec<ResilienceCurve>,
    pub provenance: Provenance,
}

impl CurveSet {
    pub fn validate(&self) -> Result<()> {
        for curve in &self.curves {
            curve.validate()?;
            if curve.values.len() != self.grid.n_steps {
                return Err(Error::Domain(format!(
                    "curve {}: length {} does not match grid length {}",
                    curve.unit_id,
                    curve.values.len(),
                    self.grid.n_steps
                )));
            }
        }
        Ok(())
    }

    pub fn unit_ids(&self) -> Vec<String> {
        self.curves.iter().map(|c| c.unit_id.clone()).collect()
    }

    pub fn values(&self) -> Vec<Vec<f64>> {
        self.curves.iter().map(|c| c.values.clone()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: CurveSet = serde_json::from_str(text)?;
        set.validate()?;
        Ok(set)
    }
}

/// One dropped spatial unit and why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedUnit {
    pub unit_id: String,
    pub reason: String,
}

/// A rejected input row and why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub record: u64,
    pub raw: String,
    pub reason: String,
}

/// Full accounting of what the ingest pipeline kept and discarded.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DropReport {
    pub rejected_rows: Vec<RejectedRow>,
    pub observations_outside_grid: usize,
    pub fractions_clamped: usize,
    pub dropped_units: Vec<DroppedUnit>,
    pub n_input_units: usize,
    pub n_retained: usize,
}
