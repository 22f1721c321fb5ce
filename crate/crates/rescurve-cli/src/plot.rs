//! Deterministic SVG rendering for the report plots.
//!
//! Everything is drawn from sorted inputs with fixed-precision coordinate
//! formatting, so identical reports always produce byte-identical files.

use rescurve::archetype::GradientProfile;
use rescurve::cluster::ClusterSummary;
use rescurve::modelselect::KSweepReport;

/// Fixed qualitative palette; cluster `j` always gets `PALETTE[j % len]`.
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 260.0;
const MARGIN: f64 = 48.0;

pub fn color(index: usize) -> &'static str {
    PALETTE[index % PALETTE.len()]
}

/// One polyline; `None` samples break the line into segments.
struct Series {
    name: String,
    color: &'static str,
    points: Vec<(f64, Option<f64>)>,
}

struct Panel {
    title: String,
    x_label: String,
    y_label: String,
    series: Vec<Series>,
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

fn fmt_tick(v: f64) -> String {
    format!("{v:.3}")
}

impl Panel {
    /// Render into a `<g>` translated to `(ox, oy)`.
    fn render(&self, ox: f64, oy: f64) -> String {
        let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in &self.series {
            for &(x, y) in &s.points {
                x_min = x_min.min(x);
                x_max = x_max.max(x);
                if let Some(y) = y {
                    y_min = y_min.min(y);
                    y_max = y_max.max(y);
                }
            }
        }
        if !x_min.is_finite() || !y_min.is_finite() {
            x_min = 0.0;
            x_max = 1.0;
            y_min = 0.0;
            y_max = 1.0;
        }
        if x_max - x_min < 1e-12 {
            x_max = x_min + 1.0;
        }
        if y_max - y_min < 1e-12 {
            y_max = y_min + 1.0;
        }
        let plot_w = PANEL_W - 2.0 * MARGIN;
        let plot_h = PANEL_H - 2.0 * MARGIN;
        let px = |x: f64| MARGIN + (x - x_min) / (x_max - x_min) * plot_w;
        let py = |y: f64| PANEL_H - MARGIN - (y - y_min) / (y_max - y_min) * plot_h;

        let mut out = String::new();
        out.push_str(&format!("<g transform=\"translate({},{})\">\n", fmt(ox), fmt(oy)));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n",
            fmt(PANEL_W / 2.0),
            self.title
        ));
        // Axes.
        out.push_str(&format!(
            "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"#333\"/>\n",
            m = fmt(MARGIN),
            b = fmt(PANEL_H - MARGIN),
            r = fmt(PANEL_W - MARGIN)
        ));
        out.push_str(&format!(
            "<line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"#333\"/>\n",
            m = fmt(MARGIN),
            t = fmt(MARGIN),
            b = fmt(PANEL_H - MARGIN)
        ));
        // Extremal tick labels.
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"9\" text-anchor=\"middle\">{}</text>\n",
            fmt(MARGIN),
            fmt(PANEL_H - MARGIN + 14.0),
            fmt_tick(x_min)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"9\" text-anchor=\"middle\">{}</text>\n",
            fmt(PANEL_W - MARGIN),
            fmt(PANEL_H - MARGIN + 14.0),
            fmt_tick(x_max)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"9\" text-anchor=\"end\">{}</text>\n",
            fmt(MARGIN - 4.0),
            fmt(PANEL_H - MARGIN),
            fmt_tick(y_min)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"9\" text-anchor=\"end\">{}</text>\n",
            fmt(MARGIN - 4.0),
            fmt(MARGIN + 4.0),
            fmt_tick(y_max)
        ));
        // Axis labels.
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\">{}</text>\n",
            fmt(PANEL_W / 2.0),
            fmt(PANEL_H - 8.0),
            self.x_label
        ));
        out.push_str(&format!(
            "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\" \
             transform=\"rotate(-90 14 {})\">{}</text>\n",
            fmt(PANEL_H / 2.0),
            fmt(PANEL_H / 2.0),
            self.y_label
        ));
        // Series polylines, split at gaps, plus sample markers.
        for s in &self.series {
            let mut segment: Vec<String> = Vec::new();
            let flush = |seg: &mut Vec<String>, out: &mut String| {
                if seg.len() >= 2 {
                    out.push_str(&format!(
                        "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" \
                         points=\"{}\"/>\n",
                        s.color,
                        seg.join(" ")
                    ));
                }
                seg.clear();
            };
            for &(x, y) in &s.points {
                match y {
                    Some(y) => segment.push(format!("{},{}", fmt(px(x)), fmt(py(y)))),
                    None => flush(&mut segment, &mut out),
                }
            }
            flush(&mut segment, &mut out);
            for &(x, y) in &s.points {
                if let Some(y) = y {
                    out.push_str(&format!(
                        "<circle cx=\"{}\" cy=\"{}\" r=\"2\" fill=\"{}\"/>\n",
                        fmt(px(x)),
                        fmt(py(y)),
                        s.color
                    ));
                }
            }
        }
        // Legend for multi-series panels.
        if self.series.len() > 1 {
            for (i, s) in self.series.iter().enumerate() {
                let y = MARGIN + 12.0 * i as f64;
                out.push_str(&format!(
                    "<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"3\" fill=\"{}\"/>\n",
                    fmt(PANEL_W - MARGIN - 84.0),
                    fmt(y),
                    s.color
                ));
                out.push_str(&format!(
                    "<text x=\"{}\" y=\"{}\" font-size=\"9\">{}</text>\n",
                    fmt(PANEL_W - MARGIN - 70.0),
                    fmt(y + 4.0),
                    s.name
                ));
            }
        }
        out.push_str("</g>\n");
        out
    }
}

fn document(panels: &[Panel], columns: usize) -> String {
    let columns = columns.max(1);
    let rows = panels.len().div_ceil(columns);
    let width = PANEL_W * columns as f64;
    let height = PANEL_H * rows as f64;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" \
         viewBox=\"0 0 {} {}\" font-family=\"sans-serif\">\n",
        fmt(width),
        fmt(height),
        fmt(width),
        fmt(height)
    );
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    for (i, panel) in panels.iter().enumerate() {
        let ox = PANEL_W * (i % columns) as f64;
        let oy = PANEL_H * (i / columns) as f64;
        out.push_str(&panel.render(ox, oy));
    }
    out.push_str("</svg>\n");
    out
}

fn single_series(name: &str, color: &'static str, ys: &[f64]) -> Series {
    Series {
        name: name.to_string(),
        color,
        points: ys.iter().enumerate().map(|(i, &y)| (i as f64, Some(y))).collect(),
    }
}

/// Two-panel k-selection figure: silhouette vs k and distortion vs k.
pub fn k_selection(report: &KSweepReport) -> (String, serde_json::Value) {
    let ks: Vec<f64> = report.entries.iter().map(|e| e.k as f64).collect();
    let sil = Series {
        name: "silhouette".into(),
        color: color(0),
        points: ks
            .iter()
            .zip(&report.entries)
            .map(|(&k, e)| (k, Some(e.silhouette)))
            .collect(),
    };
    let dist = Series {
        name: "distortion".into(),
        color: color(1),
        points: ks
            .iter()
            .zip(&report.entries)
            .map(|(&k, e)| (k, Some(e.distortion)))
            .collect(),
    };
    let panels = vec![
        Panel {
            title: "Silhouette score by cluster count".into(),
            x_label: "k".into(),
            y_label: "silhouette".into(),
            series: vec![sil],
        },
        Panel {
            title: "Distortion by cluster count".into(),
            x_label: "k".into(),
            y_label: "distortion".into(),
            series: vec![dist],
        },
    ];
    let data = serde_json::json!({
        "kind": "k_selection",
        "k": report.entries.iter().map(|e| e.k).collect::<Vec<_>>(),
        "silhouette": report.entries.iter().map(|e| e.silhouette).collect::<Vec<_>>(),
        "distortion": report.entries.iter().map(|e| e.distortion).collect::<Vec<_>>(),
        "elbow_k": report.elbow_k,
        "weak_elbow": report.weak_elbow,
        "recommended_k": report.recommended_k,
    });
    (document(&panels, 2), data)
}

/// Overlay of all cluster-average curves.
pub fn cluster_averages(summary: &ClusterSummary) -> (String, serde_json::Value) {
    let series = summary
        .clusters
        .iter()
        .map(|c| {
            single_series(
                &format!("cluster {} (n={})", c.cluster, c.count),
                color(c.cluster),
                &c.center,
            )
        })
        .collect();
    let panels = vec![Panel {
        title: format!("Cluster-average resilience curves (k={})", summary.k),
        x_label: "grid step".into(),
        y_label: "performance".into(),
        series,
    }];
    let data = serde_json::json!({
        "kind": "cluster_averages",
        "k": summary.k,
        "clusters": summary.clusters.iter().map(|c| serde_json::json!({
            "cluster": c.cluster,
            "count": c.count,
            "center": c.center,
        })).collect::<Vec<_>>(),
    });
    (document(&panels, 1), data)
}

/// Per-cluster triptych: average curve, its gradients, and the gradient
/// percentage changes (gaps where the previous gradient is insignificant).
pub fn triptych(
    cluster: usize,
    center: &[f64],
    profile: &GradientProfile,
) -> (String, serde_json::Value) {
    let curve = single_series("curve", color(cluster), center);
    let grads = single_series("gradient", color(cluster), &profile.gradients);
    let pc = Series {
        name: "pc".into(),
        color: color(cluster),
        // pc[t-1] describes the change arriving at gradient t.
        points: profile.pc.iter().enumerate().map(|(i, v)| ((i + 1) as f64, *v)).collect(),
    };
    let panels = vec![
        Panel {
            title: format!("Cluster {cluster}: average resilience curve"),
            x_label: "grid step".into(),
            y_label: "performance".into(),
            series: vec![curve],
        },
        Panel {
            title: format!("Cluster {cluster}: gradients"),
            x_label: "step".into(),
            y_label: "gradient".into(),
            series: vec![grads],
        },
        Panel {
            title: format!("Cluster {cluster}: gradient percentage change"),
            x_label: "step".into(),
            y_label: "pc".into(),
            series: vec![pc],
        },
    ];
    let data = serde_json::json!({
        "kind": "triptych",
        "cluster": cluster,
        "center": center,
        "gradients": profile.gradients,
        "pc": profile.pc,
        "eps_grad": profile.eps_grad,
    });
    (document(&panels, 3), data)
}
