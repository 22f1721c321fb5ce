//! Command implementations: each takes fully merged configuration and
//! writes its reports and plots atomically into the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use rescurve::archetype::{classify, gradient_profile, ArchetypeParams, ArchetypeReport};
use rescurve::cluster::{fit, summarize, ClusterSummary, KMeansParams};
use rescurve::dtw::pairwise_matrix;
use rescurve::ingest::{build_curves, parse_observations, IngestParams, Schema};
use rescurve::modelselect::{silhouette, sweep_k, KSweepReport, SilhouetteBreakdown,
    SilhouetteDenominator};
use rescurve::synth::{generate_dataset, presets, Mixture};
use rescurve::{CurveSet, Error, Result, TimeGrid};
use serde::{Deserialize, Serialize};

/// Write-then-rename so readers never observe a half-written file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, &text)
}

/// Curve-set files are data inputs: unreadable or invalid ones are data
/// errors, not configuration mistakes.
fn load_curve_set(path: &Path) -> Result<CurveSet> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read curve set {}: {e}", path.display())))?;
    CurveSet::from_json(&text)
        .map_err(|e| Error::Data(format!("bad curve set {}: {e}", path.display())))
}

/// Report files handed to `plot` are produced by this tool; handing it a
/// malformed one is a usage error.
fn load_report<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read report {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("malformed report {}: {e}", path.display())))
}

pub struct IngestArgs {
    pub input: PathBuf,
    pub event_name: String,
    pub schema: Schema,
    pub grid: TimeGrid,
    pub params: IngestParams,
    pub out_dir: PathBuf,
}

pub fn cmd_ingest(args: &IngestArgs) -> Result<CurveSet> {
    let file = fs::File::open(&args.input)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", args.input.display())))?;
    let (observations, rejects) = parse_observations(file, args.schema)?;
    let source = args.input.display().to_string();
    let (set, report) =
        build_curves(&args.event_name, &source, &observations, rejects, &args.grid, &args.params)?;
    write_json(&args.out_dir.join("curves.json"), &set)?;
    write_json(&args.out_dir.join("drop_report.json"), &report)?;
    log::info!(
        "ingest: kept {} of {} units ({} rows rejected)",
        report.n_retained,
        report.n_input_units,
        report.rejected_rows.len()
    );
    Ok(set)
}

pub struct SelectKArgs {
    pub curves: PathBuf,
    pub k_min: usize,
    pub k_max: usize,
    pub seed: u64,
    pub restarts: usize,
    pub emit_distances: bool,
    pub out_dir: PathBuf,
}

pub fn cmd_select_k(args: &SelectKArgs) -> Result<KSweepReport> {
    let set = load_curve_set(&args.curves)?;
    select_k_inner(&set, args)
}

fn select_k_inner(set: &CurveSet, args: &SelectKArgs) -> Result<KSweepReport> {
    let values = set.values();
    let dm = pairwise_matrix(&values)?;
    let mut base = KMeansParams::new(args.k_min, args.seed);
    base.n_restarts = args.restarts;
    let report = sweep_k(&values, &dm, args.k_min, args.k_max, &base)?;
    write_json(&args.out_dir.join("ksweep.json"), &report)?;
    if args.emit_distances {
        write_json(&args.out_dir.join("distances.json"), &dm)?;
    }
    let (svg, data) = crate::plot::k_selection(&report);
    write_atomic(&args.out_dir.join("k_selection.svg"), &svg)?;
    write_json(&args.out_dir.join("k_selection_data.json"), &data)?;
    log::info!(
        "select-k: recommended k={} ({})",
        report.recommended_k,
        report.rationale
    );
    Ok(report)
}

pub struct AnalyzeArgs {
    pub curves: PathBuf,
    pub k: usize,
    pub seed: u64,
    pub restarts: usize,
    pub archetype: ArchetypeParams,
    pub emit_distances: bool,
    pub out_dir: PathBuf,
}

/// Recovery rates converted to per-day units using the curve-set grid step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatesPerDay {
    pub constant_recovery_rate: Option<f64>,
    pub fast_rate: Option<f64>,
    pub slow_rate: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterArchetype {
    #[serde(flatten)]
    pub report: ArchetypeReport,
    pub rates_per_day: RatesPerDay,
}

/// The `analyze` output document: clustering summary, silhouette breakdown
/// (absent for k=1, where it is undefined) and per-cluster archetypes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisDoc {
    pub event_name: String,
    pub grid: TimeGrid,
    pub k: usize,
    pub seed: u64,
    pub archetype_params: ArchetypeParams,
    pub summary: ClusterSummary,
    pub silhouette: Option<SilhouetteBreakdown>,
    pub archetypes: Vec<ClusterArchetype>,
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<AnalysisDoc> {
    let set = load_curve_set(&args.curves)?;
    analyze_inner(&set, args)
}

fn analyze_inner(set: &CurveSet, args: &AnalyzeArgs) -> Result<AnalysisDoc> {
    let values = set.values();
    let unit_ids = set.unit_ids();
    let mut params = KMeansParams::new(args.k, args.seed);
    params.n_restarts = args.restarts;
    let model = fit(&values, &params)?;
    let summary = summarize(&model, &values, &unit_ids)?;

    let breakdown = if args.k >= 2 {
        let dm = pairwise_matrix(&values)?;
        if args.emit_distances {
            write_json(&args.out_dir.join("distances.json"), &dm)?;
        }
        Some(silhouette(&dm, &model.labels, SilhouetteDenominator::Max)?)
    } else {
        None
    };

    let steps_per_day = 86_400.0 / set.grid.step_seconds as f64;
    let mut archetypes = Vec::with_capacity(summary.clusters.len());
    for info in &summary.clusters {
        let mut report = classify(&info.center, &args.archetype)?;
        report.cluster = info.cluster;
        let p = &report.properties;
        let rates = RatesPerDay {
            constant_recovery_rate: p.constant_recovery_rate.map(|r| r * steps_per_day),
            fast_rate: p.fast_rate.map(|r| r * steps_per_day),
            slow_rate: p.slow_rate.map(|r| r * steps_per_day),
        };
        archetypes.push(ClusterArchetype { report, rates_per_day: rates });
    }

    let doc = AnalysisDoc {
        event_name: set.event_name.clone(),
        grid: set.grid.clone(),
        k: args.k,
        seed: args.seed,
        archetype_params: args.archetype.clone(),
        summary,
        silhouette: breakdown,
        archetypes,
    };
    write_json(&args.out_dir.join("analysis.json"), &doc)?;
    render_analysis_plots(&doc, &args.out_dir)?;
    for a in &doc.archetypes {
        log::info!("analyze: cluster {} labeled {}", a.report.cluster, a.report.label);
    }
    Ok(doc)
}

fn render_analysis_plots(doc: &AnalysisDoc, out_dir: &Path) -> Result<()> {
    let (svg, data) = crate::plot::cluster_averages(&doc.summary);
    write_atomic(&out_dir.join("cluster_averages.svg"), &svg)?;
    write_json(&out_dir.join("cluster_averages_data.json"), &data)?;
    for info in &doc.summary.clusters {
        let profile = gradient_profile(&info.center, doc.archetype_params.eps_grad)?;
        let (svg, data) = crate::plot::triptych(info.cluster, &info.center, &profile);
        write_atomic(&out_dir.join(format!("cluster_{}_triptych.svg", info.cluster)), &svg)?;
        write_json(&out_dir.join(format!("cluster_{}_triptych_data.json", info.cluster)), &data)?;
    }
    Ok(())
}

pub struct SynthArgs {
    pub triangular: usize,
    pub trapezoidal: usize,
    pub transitional: usize,
    pub flat: usize,
    pub len: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
}

pub fn cmd_synth(args: &SynthArgs) -> Result<CurveSet> {
    let templates = [
        (presets::triangular(args.len), args.triangular),
        (presets::trapezoidal(args.len), args.trapezoidal),
        (presets::transitional(args.len), args.transitional),
        (presets::flat(args.len), args.flat),
    ]
    .into_iter()
    .filter(|(_, n)| *n > 0)
    .collect::<Vec<_>>();
    let mixture = Mixture { templates };
    let (set, truth) = generate_dataset(&mixture, args.noise_sigma, args.seed)?;
    write_json(&args.out_dir.join("curves.json"), &set)?;
    write_json(&args.out_dir.join("ground_truth.json"), &truth)?;
    log::info!("synth: generated {} curves", set.curves.len());
    Ok(set)
}

pub struct PlotArgs {
    pub sweep: Option<PathBuf>,
    pub analysis: Option<PathBuf>,
    pub out_dir: PathBuf,
}

pub fn cmd_plot(args: &PlotArgs) -> Result<()> {
    if args.sweep.is_none() && args.analysis.is_none() {
        return Err(Error::Config("plot needs --sweep and/or --analysis".into()));
    }
    if let Some(path) = &args.sweep {
        let report: KSweepReport = load_report(path)?;
        if report.entries.is_empty() {
            return Err(Error::Config(format!("empty sweep report {}", path.display())));
        }
        let (svg, data) = crate::plot::k_selection(&report);
        write_atomic(&args.out_dir.join("k_selection.svg"), &svg)?;
        write_json(&args.out_dir.join("k_selection_data.json"), &data)?;
    }
    if let Some(path) = &args.analysis {
        let doc: AnalysisDoc = load_report(path)?;
        if doc.summary.clusters.is_empty() {
            return Err(Error::Config(format!("empty analysis report {}", path.display())));
        }
        render_analysis_plots(&doc, &args.out_dir)?;
    }
    Ok(())
}

pub enum RunAllInput {
    Csv(IngestArgs),
    CurveSet(PathBuf),
}

pub struct RunAllArgs {
    pub input: RunAllInput,
    pub k_min: usize,
    pub k_max: usize,
    pub seed: u64,
    pub restarts: usize,
    pub archetype: ArchetypeParams,
    pub emit_distances: bool,
    pub out_dir: PathBuf,
}

/// The whole pipeline: ingest (or load), sweep k, then analyze at the
/// recommended k.
pub fn cmd_run_all(args: &RunAllArgs) -> Result<()> {
    let set = match &args.input {
        RunAllInput::Csv(ingest) => cmd_ingest(ingest)?,
        RunAllInput::CurveSet(path) => load_curve_set(path)?,
    };
    let select = SelectKArgs {
        curves: PathBuf::new(),
        k_min: args.k_min,
        k_max: args.k_max,
        seed: args.seed,
        restarts: args.restarts,
        emit_distances: args.emit_distances,
        out_dir: args.out_dir.clone(),
    };
    let sweep = select_k_inner(&set, &select)?;
    let analyze = AnalyzeArgs {
        curves: PathBuf::new(),
        k: sweep.recommended_k,
        seed: args.seed,
        restarts: args.restarts,
        archetype: args.archetype.clone(),
        emit_distances: false,
        out_dir: args.out_dir.clone(),
    };
    analyze_inner(&set, &analyze)?;
    Ok(())
}
