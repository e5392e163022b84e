//! Markdown summary and static SVG figures for an analysis run.
//!
//! Everything here is a pure function of the report data, so the same
//! report always renders to the same bytes. Sections with nothing to show
//! are left out entirely.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::pipeline::{AfcReport, AnalysisReport, ConditionReport, Estimate};
use crate::stats::{BlandAltman, CalibrationReport, Statistic};

const W: f64 = 420.0;
const H: f64 = 360.0;
const MARGIN: f64 = 48.0;
const PALETTE: [&str; 8] = [
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666",
];

/// One plotting panel with linear axes.
struct Svg {
    body: String,
    x: (f64, f64),
    y: (f64, f64),
    ox: f64,
    oy: f64,
    w: f64,
    h: f64,
}

impl Svg {
    fn panel(x: (f64, f64), y: (f64, f64), ox: f64, oy: f64, w: f64, h: f64) -> Self {
        Self {
            body: String::new(),
            x,
            y,
            ox,
            oy,
            w,
            h,
        }
    }

    fn px(&self, v: f64) -> f64 {
        self.ox + MARGIN + (v - self.x.0) / (self.x.1 - self.x.0) * (self.w - 1.5 * MARGIN)
    }

    fn py(&self, v: f64) -> f64 {
        self.oy + self.h - MARGIN + (v - self.y.0) / (self.y.1 - self.y.0) * -(self.h - 1.5 * MARGIN)
    }

    fn axes(&mut self, xlabel: &str, ylabel: &str, title: &str) {
        let (x0, x1, y0, y1) = (
            self.px(self.x.0),
            self.px(self.x.1),
            self.py(self.y.0),
            self.py(self.y.1),
        );
        let _ = write!(
            self.body,
            r##"<rect x="{x0:.2}" y="{y1:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#000"/>"##,
            x1 - x0,
            y0 - y1
        );
        for i in 0..=4 {
            let t = f64::from(i) / 4.0;
            let xv = self.x.0 + t * (self.x.1 - self.x.0);
            let yv = self.y.0 + t * (self.y.1 - self.y.0);
            let _ = write!(
                self.body,
                r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="middle">{}</text>"#,
                self.px(xv),
                y0 + 14.0,
                tick(xv)
            );
            let _ = write!(
                self.body,
                r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{}</text>"#,
                x0 - 4.0,
                self.py(yv) + 3.0,
                tick(yv)
            );
        }
        let _ = write!(
            self.body,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            y0 + 30.0,
            esc(xlabel)
        );
        let _ = write!(
            self.body,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle" transform="rotate(-90 {:.2} {:.2})">{}</text>"#,
            x0 - 34.0,
            (y0 + y1) / 2.0,
            x0 - 34.0,
            (y0 + y1) / 2.0,
            esc(ylabel)
        );
        let _ = write!(
            self.body,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            y1 - 8.0,
            esc(title)
        );
    }

    fn polyline(&mut self, pts: &[(f64, f64)], color: &str, dashed: bool) {
        if pts.is_empty() {
            return;
        }
        let coords: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y)))
            .collect();
        let dash = if dashed { r#" stroke-dasharray="4 3""# } else { "" };
        let _ = write!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
            coords.join(" ")
        );
    }

    fn points(&mut self, pts: &[(f64, f64)], color: &str) {
        for &(x, y) in pts {
            let _ = write!(
                self.body,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#,
                self.px(x),
                self.py(y)
            );
        }
    }

    fn label(&mut self, x: f64, y: f64, text: &str, color: &str) {
        let _ = write!(
            self.body,
            r#"<text x="{:.2}" y="{:.2}" font-size="9" fill="{color}">{}</text>"#,
            self.px(x) + 4.0,
            self.py(y) - 4.0,
            esc(text)
        );
    }

    fn legend(&mut self, entries: &[(String, &str)]) {
        for (i, (name, color)) in entries.iter().enumerate() {
            let y = self.oy + MARGIN / 2.0 + 12.0 * (i as f64 + 1.0);
            let x = self.ox + self.w - 1.5 * MARGIN - 40.0;
            let _ = write!(
                self.body,
                r#"<rect x="{x:.2}" y="{:.2}" width="8" height="8" fill="{color}"/><text x="{:.2}" y="{:.2}" font-size="9">{}</text>"#,
                y - 7.0,
                x + 11.0,
                y,
                esc(name)
            );
        }
    }
}

fn document(width: f64, height: f64, panels: &[Svg]) -> String {
    let mut s = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    s.push_str(r##"<rect width="100%" height="100%" fill="#fff"/>"##);
    for p in panels {
        s.push_str(&p.body);
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo { (hi - lo) * 0.08 } else { 0.5 };
    (lo - pad, hi + pad)
}

fn with_ends(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts = vec![(0.0, 0.0)];
    let mut inner = points.to_vec();
    inner.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.extend(inner);
    pts.push((1.0, 1.0));
    pts
}

fn model_curve(r: &ConditionReport) -> Vec<(f64, f64)> {
    (0..=120)
        .map(|i| {
            let c = 6.0 - f64::from(i) * 0.1;
            r.uvsd.params.operating_point(c)
        })
        .collect()
}

pub fn roc_svg(r: &ConditionReport) -> String {
    let mut p = Svg::panel((0.0, 1.0), (0.0, 1.0), 0.0, 0.0, W, H);
    p.axes("false-alarm rate", "hit rate", &format!("ROC {}", r.key));
    p.polyline(&[(0.0, 0.0), (1.0, 1.0)], "#999", true);
    p.polyline(&model_curve(r), PALETTE[1], false);
    let pts = with_ends(&r.roc.points());
    p.polyline(&pts, PALETTE[0], false);
    p.points(&r.roc.points(), PALETTE[0]);
    document(W, H, &[p])
}

pub fn zroc_svg(r: &ConditionReport) -> String {
    let pts = &r.zroc.points;
    let xr = range(pts.iter().map(|p| p.0));
    let yr = range(pts.iter().map(|p| p.1));
    let mut p = Svg::panel(xr, yr, 0.0, 0.0, W, H);
    p.axes(
        "z(FAR)",
        "z(HR)",
        &format!("z-ROC {} (slope {:.3})", r.key, r.zroc.slope),
    );
    let line = |x: f64| (x, r.zroc.intercept + r.zroc.slope * x);
    p.polyline(&[line(xr.0), line(xr.1)], PALETTE[1], false);
    p.points(pts, PALETTE[0]);
    document(W, H, &[p])
}

pub fn overlay_svg(title: &str, reports: &[&ConditionReport]) -> String {
    let mut p = Svg::panel((0.0, 1.0), (0.0, 1.0), 0.0, 0.0, W, H);
    p.axes("false-alarm rate", "hit rate", title);
    p.polyline(&[(0.0, 0.0), (1.0, 1.0)], "#999", true);
    let mut legend = Vec::new();
    for (i, r) in reports.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        p.polyline(&with_ends(&r.roc.points()), color, false);
        legend.push((format!("T={}", r.key.temperature), color));
    }
    p.legend(&legend);
    document(W, H, &[p])
}

fn estimate_of(r: &ConditionReport, s: Statistic) -> &Estimate {
    match s {
        Statistic::Auc => &r.summary.auc,
        Statistic::DA => &r.summary.d_a,
        Statistic::C => &r.summary.c,
        Statistic::ZSlope => &r.summary.zslope,
    }
}

/// Four panels: AUC, d_a, c and z-slope against temperature, with CI bars.
pub fn parameters_svg(title: &str, reports: &[&ConditionReport]) -> String {
    let (pw, ph) = (W, 260.0);
    let temps: Vec<f64> = reports.iter().map(|r| r.key.temperature).collect();
    let xr = range(temps.iter().copied());
    let panels: Vec<Svg> = Statistic::ALL
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let ests: Vec<&Estimate> = reports.iter().map(|r| estimate_of(r, s)).collect();
            let yr = range(ests.iter().flat_map(|e| {
                let (lo, hi) = e.ci.unwrap_or((e.point, e.point));
                [e.point, lo, hi]
            }));
            let mut p = Svg::panel(xr, yr, (i % 2) as f64 * pw, (i / 2) as f64 * ph, pw, ph);
            p.axes("temperature", s.name(), &format!("{title}: {}", s.name()));
            let line: Vec<(f64, f64)> = temps.iter().zip(&ests).map(|(t, e)| (*t, e.point)).collect();
            p.polyline(&line, PALETTE[0], false);
            p.points(&line, PALETTE[0]);
            for (t, e) in temps.iter().zip(&ests) {
                if let Some((lo, hi)) = e.ci {
                    p.polyline(&[(*t, lo), (*t, hi)], PALETTE[0], false);
                }
            }
            p
        })
        .collect();
    document(2.0 * pw, 2.0 * ph, &panels)
}

/// Sensitivity (d_a) against criterion (c), one point per condition.
pub fn scatter_svg(reports: &[&ConditionReport]) -> String {
    let pts: Vec<(f64, f64)> = reports
        .iter()
        .map(|r| (r.summary.c.point, r.summary.d_a.point))
        .collect();
    let mut p = Svg::panel(
        range(pts.iter().map(|p| p.0)),
        range(pts.iter().map(|p| p.1)),
        0.0,
        0.0,
        W,
        H,
    );
    p.axes("criterion c", "d_a", "sensitivity vs bias");
    let mut families: BTreeMap<(String, String), usize> = BTreeMap::new();
    for r in reports {
        let n = families.len();
        families
            .entry((r.key.model.clone(), r.key.dataset.clone()))
            .or_insert(n);
    }
    for (r, &pt) in reports.iter().zip(&pts) {
        let color = PALETTE[families[&(r.key.model.clone(), r.key.dataset.clone())] % PALETTE.len()];
        p.points(&[pt], color);
        p.label(pt.0, pt.1, &format!("T={}", r.key.temperature), color);
    }
    let legend: Vec<(String, &str)> = families
        .iter()
        .map(|((m, d), &i)| (format!("{m}/{d}"), PALETTE[i % PALETTE.len()]))
        .collect();
    p.legend(&legend);
    document(W, H, &[p])
}

pub fn reliability_svg(title: &str, c: &CalibrationReport) -> String {
    let mut p = Svg::panel((0.0, 1.0), (0.0, 1.0), 0.0, 0.0, W, H);
    p.axes("mean confidence", "accuracy", &format!("{title} (ECE {:.3})", c.ece));
    p.polyline(&[(0.0, 0.0), (1.0, 1.0)], "#999", true);
    let pts: Vec<(f64, f64)> = c
        .reliability_diagram
        .iter()
        .map(|b| (b.confidence_mean, b.accuracy))
        .collect();
    p.polyline(&pts, PALETTE[2], false);
    p.points(&pts, PALETTE[2]);
    document(W, H, &[p])
}

pub fn bland_altman_svg(b: &BlandAltman) -> String {
    let xr = range(b.pairs.iter().map(|p| p.0));
    let yr = range(b.pairs.iter().map(|p| p.1).chain([b.loa_low, b.loa_high, 0.0]));
    let mut p = Svg::panel(xr, yr, 0.0, 0.0, W, H);
    p.axes("mean of d_a and d'", "d_a − d'", "Bland–Altman");
    p.polyline(&[(xr.0, b.mean_diff), (xr.1, b.mean_diff)], PALETTE[1], false);
    p.polyline(&[(xr.0, b.loa_low), (xr.1, b.loa_low)], PALETTE[1], true);
    p.polyline(&[(xr.0, b.loa_high), (xr.1, b.loa_high)], PALETTE[1], true);
    p.points(&b.pairs, PALETTE[0]);
    document(W, H, &[p])
}

fn fmt_est(e: &Estimate) -> String {
    match e.ci {
        Some((lo, hi)) => format!("{:.3} [{:.3}, {:.3}]", e.point, lo, hi),
        None => format!("{:.3} (point only)", e.point),
    }
}

fn family_slug(model: &str, dataset: &str) -> String {
    format!("{model}_{dataset}")
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Rendered bundle: file name (relative to the output directory) → contents.
pub fn render(report: &AnalysisReport, afc: Option<&AfcReport>) -> BTreeMap<String, String> {
    let mut files = BTreeMap::new();
    let mut md = String::from("# Signal detection analysis\n\n");
    let s = &report.settings;
    let _ = writeln!(
        md,
        "Bins: {} ({:?}), correction: {:?}, bootstrap resamples: {}, seed: {}, equivalence bound: {}, ECE bins: {}.\n",
        s.bins, s.bin_kind, s.correction, s.boot, s.seed, s.equiv_bound, s.ece_bins
    );

    let reports: Vec<&ConditionReport> = report.reports().collect();
    if !reports.is_empty() {
        md.push_str("## Conditions\n\n");
        md.push_str(
            "| condition | n signal | n noise | AUC | d_a | c | z-slope | s (fit) | ΔAIC | ΔBIC | ECE | Brier |\n",
        );
        md.push_str("|---|---|---|---|---|---|---|---|---|---|---|---|\n");
        for r in &reports {
            let cmp = r.comparison.as_ref();
            let cal = r.calibration.as_ref();
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} | {} | {} | {:.3} | {} | {} | {} | {} |",
                r.key,
                r.n_signal,
                r.n_noise,
                fmt_est(&r.summary.auc),
                fmt_est(&r.summary.d_a),
                fmt_est(&r.summary.c),
                fmt_est(&r.summary.zslope),
                r.summary.s_fitted,
                cmp.map_or("n/a".into(), |c| format!("{:.2}", c.delta_aic)),
                cmp.map_or("n/a".into(), |c| format!("{:.2}", c.delta_bic)),
                cal.map_or("n/a".into(), |c| format!("{:.3}", c.ece)),
                cal.map_or("n/a".into(), |c| format!("{:.3}", c.brier)),
            );
        }
        md.push('\n');
    }

    let failed: Vec<_> = report.conditions.iter().filter(|c| c.report.is_none()).collect();
    if !failed.is_empty() {
        md.push_str("## Failed conditions\n\n");
        for c in failed {
            let _ = writeln!(md, "- {}: {}", c.key, c.error.as_deref().unwrap_or("unknown error"));
        }
        md.push('\n');
    }

    let warned: Vec<_> = reports.iter().filter(|r| !r.diagnostics.warnings.is_empty()).collect();
    if !warned.is_empty() {
        md.push_str("## Diagnostics\n\n");
        for r in warned {
            let _ = writeln!(md, "- {}: {}", r.key, r.diagnostics.warnings.join("; "));
        }
        md.push('\n');
    }

    if !report.trends.is_empty() {
        md.push_str("## Temperature trends (Spearman)\n\n");
        md.push_str("| model | dataset | statistic | ρ | p (two-sided) | p (one-sided) | method |\n|---|---|---|---|---|---|---|\n");
        for t in &report.trends {
            match &t.result {
                Some(r) => {
                    let _ = writeln!(
                        md,
                        "| {} | {} | {} | {:.3} | {:.4} | {:.4} | {:?} |",
                        t.model,
                        t.dataset,
                        t.statistic.name(),
                        r.rho,
                        r.p_two_sided,
                        r.p_one_sided,
                        r.method
                    );
                }
                None => {
                    let _ = writeln!(
                        md,
                        "| {} | {} | {} | n/a | n/a | n/a | {} |",
                        t.model,
                        t.dataset,
                        t.statistic.name(),
                        t.error.as_deref().unwrap_or("")
                    );
                }
            }
        }
        md.push('\n');
    }

    if !report.tost.is_empty() {
        md.push_str("## Equivalence tests (ΔAUC)\n\n");
        md.push_str(
            "| model | dataset | T_a | T_b | ΔAUC | 90% CI | bound | verdict |\n|---|---|---|---|---|---|---|---|\n",
        );
        for t in &report.tost {
            match &t.result {
                Some(v) => {
                    let _ = writeln!(
                        md,
                        "| {} | {} | {} | {} | {:.4} | [{:.4}, {:.4}] | {} | {:?} |",
                        t.model,
                        t.dataset,
                        t.temperature_a,
                        t.temperature_b,
                        v.delta_observed,
                        v.ci90.0,
                        v.ci90.1,
                        v.bound,
                        v.verdict
                    );
                }
                None => {
                    let _ = writeln!(
                        md,
                        "| {} | {} | {} | {} | n/a | n/a | n/a | {} |",
                        t.model,
                        t.dataset,
                        t.temperature_a,
                        t.temperature_b,
                        t.error.as_deref().unwrap_or("")
                    );
                }
            }
        }
        md.push('\n');
    }

    if !report.domains.is_empty() {
        md.push_str(
            "## Domain split\n\n| condition | domain | n signal | n noise | AUC | d_a |\n|---|---|---|---|---|---|\n",
        );
        for d in &report.domains {
            let f = |v: Option<f64>| v.map_or_else(|| d.error.clone().unwrap_or_default(), |v| format!("{v:.3}"));
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} | {} |",
                d.key.without_domain(),
                d.key.domain.as_deref().unwrap_or(""),
                d.n_signal,
                d.n_noise,
                f(d.auc),
                f(d.d_a)
            );
        }
        md.push('\n');
    }

    if let Some(a) = afc {
        md.push_str(&format!("## Forced choice ({}AFC)\n\n", a.m));
        md.push_str(
            "| domain | correct | total | pc | d' | d_a | Δ | convergent |\n|---|---|---|---|---|---|---|---|\n",
        );
        for r in &a.rows {
            let _ = writeln!(
                md,
                "| {} | {} | {} | {:.3} | {:.3} | {} | {} | {} |",
                r.domain,
                r.result.n_correct.unwrap_or(0),
                r.result.n_total.unwrap_or(0),
                r.result.proportion_correct,
                r.result.d_prime,
                r.d_a.map_or("n/a".into(), |v| format!("{v:.3}")),
                r.delta.map_or("n/a".into(), |v| format!("{v:.3}")),
                r.convergent.map_or("n/a".into(), |v| v.to_string()),
            );
        }
        md.push('\n');
        if let Some(b) = &a.bland_altman {
            let _ = writeln!(
                md,
                "Bland–Altman: mean difference {:.3}, limits of agreement [{:.3}, {:.3}].\n",
                b.mean_diff, b.loa_low, b.loa_high
            );
            files.insert("figures/bland_altman.svg".into(), bland_altman_svg(b));
        }
    }

    let mut figures = Vec::new();
    for r in &reports {
        let slug = r.key.slug();
        for (kind, svg) in [("roc", roc_svg(r)), ("zroc", zroc_svg(r))] {
            let name = format!("figures/{kind}_{slug}.svg");
            files.insert(name.clone(), svg);
            figures.push(name);
        }
        if let Some(c) = &r.calibration {
            let name = format!("figures/reliability_{slug}.svg");
            files.insert(name.clone(), reliability_svg(&r.key.to_string(), c));
            figures.push(name);
        }
    }
    let mut by_family: BTreeMap<(String, String), Vec<&ConditionReport>> = BTreeMap::new();
    for r in &reports {
        by_family
            .entry((r.key.model.clone(), r.key.dataset.clone()))
            .or_default()
            .push(r);
    }
    for ((m, d), rs) in &by_family {
        if rs.len() < 2 {
            continue;
        }
        let fam = family_slug(m, d);
        let title = format!("{m}/{d}");
        let name = format!("figures/roc_overlay_{fam}.svg");
        files.insert(name.clone(), overlay_svg(&title, rs));
        figures.push(name);
        let name = format!("figures/parameters_{fam}.svg");
        files.insert(name.clone(), parameters_svg(&title, rs));
        figures.push(name);
    }
    if reports.len() >= 2 {
        let name = "figures/sensitivity_bias.svg".to_string();
        files.insert(name.clone(), scatter_svg(&reports));
        figures.push(name);
    }
    if files.contains_key("figures/bland_altman.svg") {
        figures.push("figures/bland_altman.svg".into());
    }
    if !figures.is_empty() {
        md.push_str("## Figures\n\n");
        for f in &figures {
            let _ = writeln!(md, "- [{f}]({f})");
        }
    }
    files.insert("report.md".into(), md);
    files
}

/// Render and write the bundle; returns the written file names.
pub fn write_bundle(report: &AnalysisReport, afc: Option<&AfcReport>, out: &Path) -> Result<Vec<String>> {
    let files = render(report, afc);
    for (name, body) in &files {
        let path = out.join(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, body)?;
    }
    Ok(files.into_keys().collect())
}
