//! Plain-text tables and SVG charts for reports.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

/// Method-by-task table of metric values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub metric: String,
    pub methods: Vec<String>,
    pub tasks: Vec<String>,
    /// `values[task][method]`.
    pub values: Vec<Vec<f64>>,
}

impl MetricsTable {
    pub fn to_text(&self) -> String {
        let width = self.methods.iter().map(String::len).max().unwrap_or(0).max(8);
        let task_w = self.tasks.iter().map(String::len).max().unwrap_or(0).max(self.metric.len());
        let mut out = format!("{:<task_w$}", self.metric);
        for m in &self.methods {
            let _ = write!(out, "  {m:>width$}");
        }
        out.push('\n');
        for (t, row) in self.tasks.iter().zip(&self.values) {
            let _ = write!(out, "{t:<task_w$}");
            for v in row {
                let _ = write!(out, "  {:>width$.4}", v);
            }
            out.push('\n');
        }
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Critical-difference diagram: methods placed on a rank axis, with a bar
/// of length CD and thick lines joining methods that are not significantly different.
pub fn cd_diagram_svg(methods: &[String], avg_ranks: &[f64], cd: f64) -> String {
    let k = methods.len().max(2);
    let (width, left, right) = (640.0, 60.0, 580.0);
    let scale = (right - left) / (k as f64 - 1.0);
    let x = |r: f64| left + (r - 1.0) * scale;
    let mut order: Vec<usize> = (0..methods.len()).collect();
    order.sort_by(|&a, &b| avg_ranks[a].total_cmp(&avg_ranks[b]));
    let height = 140.0 + 22.0 * methods.len() as f64;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<line x1="{left}" y1="60" x2="{right}" y2="60" stroke="black"/>"#);
    for r in 1..=k {
        let xr = x(r as f64);
        let _ = writeln!(s, r#"<line x1="{xr:.2}" y1="55" x2="{xr:.2}" y2="60" stroke="black"/>"#);
        let _ = writeln!(s, r#"<text x="{xr:.2}" y="50" text-anchor="middle">{r}</text>"#);
    }
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="20" x2="{:.2}" y2="20" stroke="black" stroke-width="2"/><text x="{left}" y="14">CD = {cd:.3}</text>"#,
        left + cd * scale
    );
    for (row, &i) in order.iter().enumerate() {
        let xr = x(avg_ranks[i]);
        let y = 90.0 + 22.0 * row as f64;
        let _ = writeln!(s, r#"<line x1="{xr:.2}" y1="60" x2="{xr:.2}" y2="{y}" stroke="gray"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.1}">{} ({:.2})</text>"#,
            xr + 4.0,
            y + 4.0,
            escape(&methods[i]),
            avg_ranks[i]
        );
    }
    // cliques of methods within CD of each other
    let mut y = 68.0;
    let mut last_end = None;
    for a in 0..order.len() {
        let mut b = a;
        while b + 1 < order.len() && avg_ranks[order[b + 1]] - avg_ranks[order[a]] <= cd {
            b += 1;
        }
        if b > a && last_end.is_none_or(|e| b > e) {
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{y}" x2="{:.2}" y2="{y}" stroke="black" stroke-width="4"/>"#,
                x(avg_ranks[order[a]]) - 3.0,
                x(avg_ranks[order[b]]) + 3.0
            );
            y += 6.0;
            last_end = Some(b);
        }
    }
    s.push_str("</svg>\n");
    s
}

/// One named polyline for [`line_chart_svg`].
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// Line chart of each series against its index.
pub fn line_chart_svg(title: &str, x_label: &str, series: &[Series]) -> String {
    let (w, h, l, r, t, b) = (640.0, 360.0, 60.0, 500.0, 40.0, 310.0);
    let finite = series.iter().flat_map(|s| s.values.iter().copied()).filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    let n = series.iter().map(|s| s.values.len()).max().unwrap_or(1).max(2);
    let px = |i: usize| l + (r - l) * i as f64 / (n - 1) as f64;
    let py = |v: f64| b - (b - t) * (v - lo) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, (l + r) / 2.0, escape(title));
    let _ = writeln!(s, r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#, r - l, b - t);
    let _ = writeln!(s, r#"<text x="{l}" y="{}" text-anchor="end">{lo:.3}</text>"#, b + 4.0);
    let _ = writeln!(s, r#"<text x="{l}" y="{}" text-anchor="end">{hi:.3}</text>"#, t + 4.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (l + r) / 2.0, b + 30.0, escape(x_label));
    for (k, ser) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = ser
            .values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, &v)| format!("{:.2},{:.2}", px(i), py(v)))
            .collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        let ly = t + 14.0 + 16.0 * k as f64;
        let _ = writeln!(s, r#"<line x1="510" y1="{ly}" x2="530" y2="{ly}" stroke="{color}" stroke-width="2"/>"#);
        let _ = writeln!(s, r#"<text x="535" y="{}">{}</text>"#, ly + 4.0, escape(&ser.name));
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagram_lists_every_method() {
        let names: Vec<String> = ["a", "b<c", "d"].iter().map(|s| s.to_string()).collect();
        let svg = cd_diagram_svg(&names, &[1.2, 2.0, 2.8], 1.0);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("b&lt;c (2.00)"));
        assert!(svg.contains("CD = 1.000"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn chart_handles_flat_and_missing_values() {
        let svg = line_chart_svg("loss", "epoch", &[Series { name: "x".into(), values: vec![1.0, 1.0, f64::NAN] }]);
        assert!(svg.contains("polyline"));
        let empty = line_chart_svg("none", "epoch", &[]);
        assert!(empty.contains("</svg>"));
    }

    #[test]
    fn table_text_has_one_line_per_task() {
        let t = MetricsTable {
            metric: "b-acc".into(),
            methods: vec!["m1".into(), "m2".into()],
            tasks: vec!["t1".into(), "t2".into()],
            values: vec![vec![0.5, 0.25], vec![1.0, 0.0]],
        };
        let text = t.to_text();
        assert_eq!(text.lines().count(), 3);
        assert!(text.contains("0.2500"));
    }
}
