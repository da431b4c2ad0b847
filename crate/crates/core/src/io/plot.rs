//! Static SVG curve plots with a log-scale y axis.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::engine::RoundReport;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveMetric {
    GlobalLoss,
    /// Falls back to the global loss for rows without a known optimum.
    Suboptimality,
    GradNormSq,
}

impl CurveMetric {
    fn value(self, r: &RoundReport) -> f64 {
        match self {
            CurveMetric::GlobalLoss => r.global_loss,
            CurveMetric::Suboptimality => r.suboptimality.unwrap_or(r.global_loss),
            CurveMetric::GradNormSq => r.grad_norm_sq,
        }
    }

    fn label(self) -> &'static str {
        match self {
            CurveMetric::GlobalLoss => "f(x)",
            CurveMetric::Suboptimality => "f(x) - f*",
            CurveMetric::GradNormSq => "||grad f(x)||^2",
        }
    }
}

pub struct Curve<'a> {
    pub label: &'a str,
    pub rows: &'a [RoundReport],
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];
const FLOOR: f64 = 1e-16;
const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders one polyline per curve, `log10` on the y axis.
pub fn render_curves(curves: &[Curve<'_>], metric: CurveMetric) -> Result<String> {
    if curves.is_empty() || curves.iter().all(|c| c.rows.is_empty()) {
        return Err(Error::EmptyInput("plot rows"));
    }
    let logv = |r: &RoundReport| {
        let v = metric.value(r);
        if v.is_finite() {
            v.max(FLOOR).log10()
        } else {
            f64::NAN
        }
    };
    let pts = curves.iter().flat_map(|c| c.rows.iter());
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for r in pts {
        let y = logv(r);
        xmin = xmin.min(r.round as f64);
        xmax = xmax.max(r.round as f64);
        if y.is_finite() {
            ymin = ymin.min(y);
            ymax = ymax.max(y);
        }
    }
    if !ymin.is_finite() {
        ymin = 0.0;
        ymax = 1.0;
    }
    ymin = ymin.floor();
    ymax = ymax.ceil().max(ymin + 1.0);
    if xmax <= xmin {
        xmax = xmin + 1.0;
    }
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - xmin) / (xmax - xmin) * pw;
    let sy = |y: f64| TOP + (ymax - y) / (ymax - ymin) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let mut decade = ymin as i64;
    while decade as f64 <= ymax {
        let y = sy(decade as f64);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{decade}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0
        );
        decade += 1;
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">round</text><text x="{LEFT}" y="{:.2}" text-anchor="start">{}</text>"#,
        LEFT + pw / 2.0,
        H - 12.0,
        TOP - 10.0,
        escape(metric.label())
    );
    let _ = writeln!(
        s,
        r#"<text x="{LEFT}" y="{:.2}" text-anchor="middle">{xmin}</text><text x="{:.2}" y="{:.2}" text-anchor="middle">{xmax}</text>"#,
        TOP + ph + 16.0,
        LEFT + pw,
        TOP + ph + 16.0
    );
    for (k, c) in curves.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let points: Vec<String> = c
            .rows
            .iter()
            .filter_map(|r| {
                let y = logv(r);
                y.is_finite().then(|| format!("{:.2},{:.2}", sx(r.round as f64), sy(y)))
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline id="curve-{k}" data-label="{}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            escape(c.label),
            points.join(" ")
        );
        let ly = TOP + 14.0 + 18.0 * k as f64;
        let lx = W - RIGHT + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{:.2}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(c.label)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn plot_curves(curves: &[Curve<'_>], metric: CurveMetric, path: &Path) -> Result<()> {
    let svg = render_curves(curves, metric)?;
    fs::write(path, svg).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(scale: f64) -> Vec<RoundReport> {
        (0..10)
            .map(|t| RoundReport {
                round: t,
                trial_loss: 0.0,
                global_loss: scale * 0.5f64.powi(t as i32),
                grad_norm_sq: 1.0,
                suboptimality: None,
                weights: vec![1.0],
                byzantine: vec![false],
                wall_micros: 0,
            })
            .collect()
    }

    #[test]
    fn two_runs_two_polylines() {
        let a = rows(1.0);
        let b = rows(10.0);
        let svg = render_curves(
            &[Curve { label: "bant", rows: &a }, Curve { label: "mean <x>", rows: &b }],
            CurveMetric::GlobalLoss,
        )
        .unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("id=\"curve-0\"") && svg.contains("id=\"curve-1\""));
        assert!(svg.contains(PALETTE[0]) && svg.contains(PALETTE[1]));
        assert!(svg.contains("mean &lt;x&gt;"));
    }

    #[test]
    fn empty_rows_rejected() {
        assert!(render_curves(&[Curve { label: "x", rows: &[] }], CurveMetric::GlobalLoss).is_err());
    }
}
