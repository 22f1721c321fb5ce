//! Resilience-curve analytics for power outage data.
//!
//! Turns raw outage observations into normalized resilience curves, clusters
//! them by shape with DTW k-means (DBA barycenter centers), selects the
//! cluster count via silhouette and distortion, and classifies cluster
//! averages into resilience archetypes with quantified properties.

pub mod archetype;
pub mod cluster;
pub mod dtw;
pub mod error;
pub mod ingest;
pub mod modelselect;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use types::{CurveSet, DropReport, GriddedSeries, ResilienceCurve, TimeGrid};
