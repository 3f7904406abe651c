//! Star-annotated tables, plot-ready series and minimal SVG charts.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::NaiveDate;
use decentralab_core::econometrics::{stars, Clustering, LagEstimate, RegressionResult, SdidResult};
use serde::{Deserialize, Serialize};

use crate::io::fmt_sig9;

/// Serialized form of one regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionDoc {
    pub label: String,
    pub terms: Vec<String>,
    pub coefficients: BTreeMap<String, f64>,
    pub std_errors: BTreeMap<String, f64>,
    pub p_values: BTreeMap<String, f64>,
    pub clustering: Clustering,
    pub n_clusters: Vec<(String, usize)>,
    pub month_fe: bool,
    pub n_obs: usize,
    pub r_squared: f64,
    pub covariance: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl RegressionDoc {
    pub fn new(label: &str, r: &RegressionResult) -> Self {
        let map = |v: &[f64]| r.terms.iter().cloned().zip(v.iter().copied()).collect();
        let p: Vec<f64> = r.terms.iter().map(|t| r.p_value(t).unwrap_or(f64::NAN)).collect();
        RegressionDoc {
            label: label.into(),
            terms: r.terms.clone(),
            coefficients: map(&r.estimates),
            std_errors: map(&r.std_errors),
            p_values: map(&p),
            clustering: r.clustering,
            n_clusters: r.n_clusters.clone(),
            month_fe: r.month_fe,
            n_obs: r.n_obs,
            r_squared: r.r_squared,
            covariance: r.covariance.clone(),
            warnings: r.warnings.clone(),
        }
    }
}

/// A set of regressions rendered side by side, one column each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultSet {
    pub command: String,
    pub results: Vec<RegressionDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Lag coefficients per metric, as written by `lagged-did`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagDoc {
    pub command: String,
    pub lag_step: u32,
    pub max_lag: u32,
    pub results: Vec<RegressionDoc>,
    pub lags: BTreeMap<String, Vec<LagEstimate>>,
}

/// Bandwidth sweeps per metric, as written by `sdid`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdidDoc {
    pub command: String,
    pub results: BTreeMap<String, Vec<SdidResult>>,
}

/// One table per metric, as written by `sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepDoc {
    pub command: String,
    pub over: String,
    pub tables: BTreeMap<String, ResultSet>,
}

fn cell(estimate: f64, p: f64) -> String {
    format!("{estimate:.3}{}", stars(p))
}

fn pad_table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(i, s)| if i == 0 { format!("{s:<w$}", w = widths[i]) } else { format!("{s:>w$}", w = widths[i]) })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}

/// Coefficients with standard errors in parentheses beneath, one column per regression.
pub fn coefficient_table(set: &ResultSet) -> String {
    let mut terms: Vec<String> = Vec::new();
    for r in &set.results {
        for t in &r.terms {
            if !terms.contains(t) {
                terms.push(t.clone());
            }
        }
    }
    let mut rows = vec![std::iter::once(String::new()).chain(set.results.iter().map(|r| r.label.clone())).collect::<Vec<_>>()];
    for t in &terms {
        let mut est = vec![t.clone()];
        let mut se = vec![String::new()];
        for r in &set.results {
            match (r.coefficients.get(t), r.std_errors.get(t)) {
                (Some(b), Some(s)) => {
                    est.push(cell(*b, r.p_values.get(t).copied().unwrap_or(f64::NAN)));
                    se.push(format!("({s:.3})"));
                }
                _ => {
                    est.push(String::new());
                    se.push(String::new());
                }
            }
        }
        rows.push(est);
        rows.push(se);
    }
    rows.push(std::iter::once("Observations".to_string()).chain(set.results.iter().map(|r| r.n_obs.to_string())).collect());
    rows.push(std::iter::once("R²".to_string()).chain(set.results.iter().map(|r| format!("{:.3}", r.r_squared))).collect());
    rows.push(std::iter::once("Month FE".to_string()).chain(set.results.iter().map(|r| if r.month_fe { "yes" } else { "no" }.to_string())).collect());
    let mut out = pad_table(&rows);
    let mut clustering: Vec<&str> = set.results.iter().map(|r| r.clustering.name()).collect();
    clustering.dedup();
    let label = match clustering.as_slice() {
        [] => "none".to_string(),
        [one] => one.to_string(),
        _ => "varies by column".to_string(),
    };
    let _ = writeln!(out, "Standard errors in parentheses, clustering: {label}.");
    let _ = writeln!(out, "* p<0.05, ** p<0.01, *** p<0.001");
    for n in &set.notes {
        let _ = writeln!(out, "{n}");
    }
    for r in &set.results {
        for w in &r.warnings {
            let _ = writeln!(out, "warning ({}): {w}", r.label);
        }
    }
    out
}

pub fn lag_csv(lags: &[LagEstimate]) -> String {
    let mut s = String::from("lag,estimate,ci_low,ci_high\n");
    for l in lags {
        let _ = writeln!(s, "{},{},{},{}", l.lag, fmt_sig9(l.estimate), fmt_sig9(l.ci_low), fmt_sig9(l.ci_high));
    }
    s
}

pub fn lag_table(label: &str, lags: &[LagEstimate]) -> String {
    let mut rows = vec![vec!["lag".to_string(), label.to_string(), "se".into()]];
    for l in lags {
        let p = decentralab_core::econometrics::two_sided_p(l.estimate / l.std_error);
        rows.push(vec![
            l.lag.to_string(),
            if l.reference { "(ref)".into() } else { cell(l.estimate, p) },
            if l.reference { String::new() } else { format!("({:.3})", l.std_error) },
        ]);
    }
    pad_table(&rows)
}

pub fn sdid_table(results: &[SdidResult]) -> String {
    let mut rows = vec![["bandwidth", "att", "placebo_se", "n_placebos", "n_pre", "n_post"].map(String::from).to_vec()];
    for r in results {
        let p = decentralab_core::econometrics::two_sided_p(r.att / r.placebo_se);
        rows.push(vec![
            format!("±{}", r.bandwidth),
            cell(r.att, p),
            format!("({:.3})", r.placebo_se),
            r.n_placebos.to_string(),
            r.n_pre.to_string(),
            r.n_post.to_string(),
        ]);
    }
    let mut out = pad_table(&rows);
    let _ = writeln!(out, "Standard errors from placebo reassignment to control chains.");
    let _ = writeln!(out, "* p<0.05, ** p<0.01, *** p<0.001");
    out
}

pub fn sdid_csv(results: &[SdidResult]) -> String {
    let mut s = String::from("bandwidth,att,placebo_se,ci_low,ci_high,n_placebos\n");
    for r in results {
        let (lo, hi) = decentralab_core::econometrics::ci95(r.att, r.placebo_se);
        let _ = writeln!(s, "{},{},{},{},{},{}", r.bandwidth, fmt_sig9(r.att), fmt_sig9(r.placebo_se), fmt_sig9(lo), fmt_sig9(hi), r.n_placebos);
    }
    s
}

const W: f64 = 640.0;
const H: f64 = 360.0;
const M: f64 = 48.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let fold = |it: &mut dyn Iterator<Item = f64>| it.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let (mut x0, mut x1) = fold(&mut xs.clone());
        let (mut y0, mut y1) = fold(&mut ys.clone());
        if x1.partial_cmp(&x0) != Some(Ordering::Greater) {
            x0 -= 1.0;
            x1 += 1.0;
        }
        if y1.partial_cmp(&y0) != Some(Ordering::Greater) {
            y0 -= 1.0;
            y1 += 1.0;
        }
        let pad = (y1 - y0) * 0.05;
        Frame { x0, x1, y0: y0 - pad, y1: y1 + pad }
    }

    fn x(&self, v: f64) -> f64 {
        M + (v - self.x0) / (self.x1 - self.x0) * (W - 2.0 * M)
    }

    fn y(&self, v: f64) -> f64 {
        H - M - (v - self.y0) / (self.y1 - self.y0) * (H - 2.0 * M)
    }
}

fn svg_open(title: &str) -> String {
    let mut s = format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"11\">\n");
    let _ = writeln!(s, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let _ = writeln!(s, "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">{}</text>", W / 2.0, escape(title));
    s
}

fn axes(s: &mut String, f: &Frame, x_label: &str) {
    let _ = writeln!(s, "<line x1=\"{M}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>", H - M, W - M, H - M);
    let _ = writeln!(s, "<line x1=\"{M}\" y1=\"{M}\" x2=\"{M}\" y2=\"{}\" stroke=\"black\"/>", H - M);
    for v in [f.y0, (f.y0 + f.y1) / 2.0, f.y1] {
        let _ = writeln!(s, "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{v:.3}</text>", M - 4.0, f.y(v) + 4.0);
    }
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>", W / 2.0, H - 12.0, escape(x_label));
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Lag coefficients as points with 95% interval bars and a zero line.
pub fn lag_svg(title: &str, lags: &[LagEstimate]) -> String {
    let f = Frame::new(
        lags.iter().map(|l| l.lag as f64),
        lags.iter().flat_map(|l| [l.ci_low, l.ci_high, 0.0]),
    );
    let mut s = svg_open(title);
    axes(&mut s, &f, "lag");
    let _ = writeln!(s, "<line x1=\"{M}\" y1=\"{0:.1}\" x2=\"{1}\" y2=\"{0:.1}\" stroke=\"grey\" stroke-dasharray=\"4 3\"/>", f.y(0.0), W - M);
    for l in lags {
        let x = f.x(l.lag as f64);
        let _ = writeln!(s, "<line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"steelblue\"/>", f.y(l.ci_low), f.y(l.ci_high));
        let _ = writeln!(s, "<circle cx=\"{x:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"steelblue\"/>", f.y(l.estimate));
        let _ = writeln!(s, "<text x=\"{x:.1}\" y=\"{}\" text-anchor=\"middle\">{}</text>", H - M + 14.0, l.lag);
    }
    s.push_str("</svg>\n");
    s
}

/// Daily series as polylines with a vertical marker on the event date.
pub fn series_svg(title: &str, series: &[(String, Vec<(NaiveDate, f64)>)], event: Option<NaiveDate>) -> String {
    let origin = series
        .iter()
        .flat_map(|(_, v)| v.iter().map(|(d, _)| *d))
        .min()
        .unwrap_or(NaiveDate::MIN);
    let xnum = |d: NaiveDate| (d - origin).num_days() as f64;
    let f = Frame::new(
        series.iter().flat_map(|(_, v)| v.iter().map(move |(d, _)| xnum(*d))),
        series.iter().flat_map(|(_, v)| v.iter().map(|(_, y)| *y)),
    );
    let mut s = svg_open(title);
    axes(&mut s, &f, "day");
    const COLORS: [&str; 6] = ["steelblue", "darkorange", "seagreen", "firebrick", "slateblue", "goldenrod"];
    for (i, (name, v)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = v.iter().map(|(d, y)| format!("{:.1},{:.1}", f.x(xnum(*d)), f.y(*y))).collect();
        let _ = writeln!(s, "<polyline fill=\"none\" stroke=\"{color}\" points=\"{}\"/>", pts.join(" "));
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{}</text>", W - M - 90.0, M + 14.0 * i as f64, escape(name));
    }
    if let Some(e) = event {
        let x = f.x(xnum(e));
        let _ = writeln!(s, "<line x1=\"{x:.1}\" y1=\"{M}\" x2=\"{x:.1}\" y2=\"{}\" stroke=\"grey\" stroke-dasharray=\"4 3\"/>", H - M);
    }
    s.push_str("</svg>\n");
    s
}
