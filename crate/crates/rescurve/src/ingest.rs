//! Raw outage observations -> normalized resilience curves.
//!
//! Pipeline order is fixed: regrid -> missing-ratio filter -> linear fill ->
//! impact filter -> baseline + negation. Interpolating before the peak test
//! avoids dropping units whose peak fell in a missing cell.

use std::collections::BTreeMap;
use std::io::Read;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{
    CurveSet, DropReport, DroppedUnit, GriddedSeries, Provenance, RejectedRow, ResilienceCurve,
    TimeGrid,
};

/// Input CSV layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schema {
    /// `unit_id,timestamp,affected,total`
    Counts,
    /// `unit_id,timestamp,outage_fraction`
    Fraction,
}

impl Schema {
    pub fn columns(&self) -> &'static [&'static str] {
        match self {
            Schema::Counts => &["unit_id", "timestamp", "affected", "total"],
            Schema::Fraction => &["unit_id", "timestamp", "outage_fraction"],
        }
    }
}

impl std::str::FromStr for Schema {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "counts" => Ok(Schema::Counts),
            "fraction" => Ok(Schema::Fraction),
            other => Err(Error::Config(format!(
                "unknown schema '{other}' (expected 'counts' or 'fraction')"
            ))),
        }
    }
}

/// What a row reported: customer counts or a ready-made fraction.
#[derive(Debug, Clone, PartialEq)]
pub enum ObservedValue {
    Counts { affected: f64, total: f64 },
    Fraction(f64),
}

/// One raw observation for one spatial unit.
#[derive(Debug, Clone, PartialEq)]
pub struct OutageObservation {
    pub unit_id: String,
    pub timestamp: DateTime<Utc>,
    pub value: ObservedValue,
}

impl OutageObservation {
    /// Outage fraction of this observation; counts go through [`outage_fraction`].
    /// Returns the fraction and whether it was clamped.
    pub fn fraction(&self) -> Result<(f64, bool)> {
        match self.value {
            ObservedValue::Counts { affected, total } => outage_fraction(affected, total),
            ObservedValue::Fraction(f) => Ok((f, false)),
        }
    }
}

/// Ratio of affected customers to the unit's customer base.
///
/// Values above 1 are clamped with a warning: population is only an
/// approximation of the customer count, so overshoot happens in real data.
pub fn outage_fraction(affected: f64, total: f64) -> Result<(f64, bool)> {
    if !(total > 0.0) {
        return Err(Error::Domain(format!("total must be positive, got {total}")));
    }
    if !affected.is_finite() || affected < 0.0 {
        return Err(Error::Domain(format!("affected must be finite and >= 0, got {affected}")));
    }
    let f = affected / total;
    if f > 1.0 {
        log::warn!("outage fraction {f:.4} exceeds 1, clamping (affected={affected}, total={total})");
        Ok((1.0, true))
    } else {
        Ok((f, false))
    }
}

/// Parse a character-delimited observation stream.
///
/// Malformed rows land in the rejects list rather than being silently
/// dropped; more than 50% rejects is treated as a wrong-schema signal.
pub fn parse_observations<R: Read>(
    input: R,
    schema: Schema,
) -> Result<(Vec<OutageObservation>, Vec<RejectedRow>)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("cannot read header row: {e}")))?
        .clone();
    let expected = schema.columns();
    let actual: Vec<&str> = headers.iter().map(|h| h.trim()).collect();
    if actual != expected {
        return Err(Error::Config(format!(
            "header {:?} does not match schema columns {:?}",
            actual, expected
        )));
    }

    let mut observations = Vec::new();
    let mut rejects = Vec::new();
    let mut total_rows: u64 = 0;
    for (idx, record) in reader.records().enumerate() {
        let record_number = idx as u64 + 1;
        total_rows += 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                rejects.push(RejectedRow {
                    record: record_number,
                    raw: String::new(),
                    reason: format!("unparseable row: {e}"),
                });
                continue;
            }
        };
        let raw = record.iter().collect::<Vec<_>>().join(",");
        match parse_record(&record, schema) {
            Ok(obs) => observations.push(obs),
            Err(reason) => {
                rejects.push(RejectedRow { record: record_number, raw, reason });
            }
        }
    }

    if total_rows == 0 {
        log::warn!("input contained a header but no data rows");
    } else if rejects.len() * 2 > total_rows as usize {
        return Err(Error::Data(format!(
            "{} of {} rows rejected (>50%); the declared schema is likely wrong",
            rejects.len(),
            total_rows
        )));
    }
    Ok((observations, rejects))
}

fn parse_record(record: &csv::StringRecord, schema: Schema) -> std::result::Result<OutageObservation, String> {
    let field = |i: usize| record.get(i).map(str::trim).ok_or_else(|| format!("missing column {i}"));
    let unit_id = field(0)?.to_string();
    if unit_id.is_empty() {
        return Err("empty unit_id".into());
    }
    let timestamp = DateTime::parse_from_rfc3339(field(1)?)
        .map_err(|e| format!("bad timestamp: {e}"))?
        .with_timezone(&Utc);
    let value = match schema {
        Schema::Counts => {
            let affected: f64 =
                field(2)?.parse().map_err(|e| format!("bad affected count: {e}"))?;
            let total: f64 = field(3)?.parse().map_err(|e| format!("bad total count: {e}"))?;
            if !affected.is_finite() || affected < 0.0 {
                return Err(format!("affected must be finite and >= 0, got {affected}"));
            }
            if !(total > 0.0) {
                return Err(format!("total must be positive, got {total}"));
            }
            ObservedValue::Counts { affected, total }
        }
        Schema::Fraction => {
            let f: f64 = field(2)?.parse().map_err(|e| format!("bad fraction: {e}"))?;
            if !f.is_finite() || !(0.0..=1.0).contains(&f) {
                return Err(format!("fraction must be in [0,1], got {f}"));
            }
            ObservedValue::Fraction(f)
        }
    };
    Ok(OutageObservation { unit_id, timestamp, value })
}

/// Result of regridding: per-unit series plus counts of ignored/clamped inputs.
#[derive(Debug, Clone)]
pub struct Regridded {
    pub series: BTreeMap<String, GriddedSeries>,
    pub observations_outside_grid: usize,
    pub fractions_clamped: usize,
}

/// Average observations into grid cells; cells with no observations stay missing.
///
/// Per-cell values are sorted before summing so the result is independent of
/// input order.
pub fn regrid(observations: &[OutageObservation], grid: &TimeGrid) -> Result<Regridded> {
    let mut cells: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    let mut outside = 0usize;
    let mut clamped = 0usize;
    for obs in observations {
        let Some(cell) = grid.cell_index(obs.timestamp) else {
            outside += 1;
            continue;
        };
        let (fraction, was_clamped) = obs.fraction()?;
        if was_clamped {
            clamped += 1;
        }
        cells
            .entry(obs.unit_id.clone())
            .or_insert_with(|| vec![Vec::new(); grid.n_steps])[cell]
            .push(fraction);
    }

    let series = cells
        .into_iter()
        .map(|(unit_id, mut unit_cells)| {
            let values = unit_cells
                .iter_mut()
                .map(|vals| {
                    if vals.is_empty() {
                        None
                    } else {
                        vals.sort_by(f64::total_cmp);
                        Some(vals.iter().sum::<f64>() / vals.len() as f64)
                    }
                })
                .collect();
            (unit_id.clone(), GriddedSeries { unit_id, values })
        })
        .collect();
    Ok(Regridded { series, observations_outside_grid: outside, fractions_clamped: clamped })
}

/// Fill missing cells by linear interpolation between the nearest present
/// neighbors; leading/trailing gaps hold the nearest present value.
pub fn fill_linear(series: &GriddedSeries) -> Result<GriddedSeries> {
    let n = series.values.len();
    let present: Vec<usize> =
        (0..n).filter(|&i| series.values[i].is_some()).collect();
    if present.is_empty() {
        return Err(Error::Domain(format!(
            "series {}: cannot interpolate an all-missing series",
            series.unit_id
        )));
    }
    let mut values = vec![0.0; n];
    for i in 0..n {
        values[i] = match series.values[i] {
            Some(v) => v,
            None => {
                let next = present.iter().find(|&&p| p > i);
                let prev = present.iter().rev().find(|&&p| p < i);
                match (prev, next) {
                    (Some(&a), Some(&b)) => {
                        let va = series.values[a].unwrap();
                        let vb = series.values[b].unwrap();
                        va + (vb - va) * (i - a) as f64 / (b - a) as f64
                    }
                    (Some(&a), None) => series.values[a].unwrap(),
                    (None, Some(&b)) => series.values[b].unwrap(),
                    (None, None) => unreachable!(),
                }
            }
        };
    }
    Ok(GriddedSeries { unit_id: series.unit_id.clone(), values: values.into_iter().map(Some).collect() })
}

/// Prepend the zero baseline and negate fractions into performance values.
pub fn to_resilience_curve(series: &GriddedSeries, grid: &TimeGrid) -> Result<ResilienceCurve> {
    if grid.n_steps < TimeGrid::MIN_STEPS {
        return Err(Error::Domain(format!("grid too short ({} steps)", grid.n_steps)));
    }
    if series.values.len() != grid.n_steps {
        return Err(Error::Domain(format!(
            "series {}: length {} does not match grid length {}",
            series.unit_id,
            series.values.len(),
            grid.n_steps
        )));
    }
    let mut values = Vec::with_capacity(grid.n_steps + 1);
    values.push(0.0);
    for (i, v) in series.values.iter().enumerate() {
        let v = v.ok_or_else(|| {
            Error::Domain(format!("series {}: missing value at cell {i}", series.unit_id))
        })?;
        values.push(-v);
    }
    Ok(ResilienceCurve { unit_id: series.unit_id.clone(), values })
}

/// Quality thresholds of the ingest pipeline.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IngestParams {
    /// Drop units with more than this fraction of missing cells.
    pub max_missing_ratio: f64,
    /// Drop units whose peak outage fraction is below this level.
    pub min_peak: f64,
}

impl Default for IngestParams {
    fn default() -> Self {
        Self { max_missing_ratio: 0.5, min_peak: 0.10 }
    }
}

impl IngestParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.max_missing_ratio) {
            return Err(Error::Config("max_missing_ratio must be in [0,1]".into()));
        }
        if !(0.0..=1.0).contains(&self.min_peak) {
            return Err(Error::Config("min_peak must be in [0,1]".into()));
        }
        Ok(())
    }
}

/// Full pipeline: observations -> curve set + drop report.
pub fn build_curves(
    event_name: &str,
    source: &str,
    observations: &[OutageObservation],
    rejects: Vec<RejectedRow>,
    grid: &TimeGrid,
    params: &IngestParams,
) -> Result<(CurveSet, DropReport)> {
    params.validate()?;
    let regridded = regrid(observations, grid)?;
    let n_input_units = regridded.series.len();
    if n_input_units == 0 {
        return Err(Error::Data("no observations fell inside the grid".into()));
    }

    let mut dropped = Vec::new();
    let mut curves = Vec::new();
    for (unit_id, series) in &regridded.series {
        let ratio = series.missing_ratio();
        if ratio > params.max_missing_ratio {
            dropped.push(DroppedUnit {
                unit_id: unit_id.clone(),
                reason: format!("missing {ratio:.3} > {}", params.max_missing_ratio),
            });
            continue;
        }
        let filled = fill_linear(series)?;
        let peak = filled.peak().unwrap_or(0.0);
        if peak < params.min_peak {
            dropped.push(DroppedUnit {
                unit_id: unit_id.clone(),
                reason: format!("peak {peak:.3} < {}", params.min_peak),
            });
            continue;
        }
        curves.push(to_resilience_curve(&filled, grid)?);
    }

    if curves.is_empty() {
        return Err(Error::Data(format!(
            "all {n_input_units} units dropped by quality filters \
             (max_missing_ratio={}, min_peak={})",
            params.max_missing_ratio, params.min_peak
        )));
    }

    let report = DropReport {
        rejected_rows: rejects,
        observations_outside_grid: regridded.observations_outside_grid,
        fractions_clamped: regridded.fractions_clamped,
        dropped_units: dropped,
        n_input_units,
        n_retained: curves.len(),
    };
    let set = CurveSet {
        event_name: event_name.to_string(),
        grid: grid.with_baseline_prepended(),
        curves,
        provenance: Provenance {
            source: source.to_string(),
            filters: vec![
                format!("max_missing_ratio={}", params.max_missing_ratio),
                format!("min_peak={}", params.min_peak),
            ],
            n_input_units,
            n_dropped: report.dropped_units.len(),
        },
    };
    set.validate()?;
    Ok((set, report))
}
