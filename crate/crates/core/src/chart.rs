//! Horizontal stacked bar charts of global attributions, one SVG per output.
//! Output is plain text built by hand so the same report always renders to
//! the same bytes.

use std::fmt::Write as _;

use crate::attribution::AttributionReport;
use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const LABEL_W: f64 = 150.0;
const BAR_H: f64 = 18.0;
const GAP: f64 = 6.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 40.0;
const DIRECT_FILL: &str = "#1f77b4";
const INDIRECT_FILL: &str = "#ff7f0e";

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// `(feature, direct, indirect)` sorted by total descending, ties broken by
/// feature order; features with zero total are left out.
pub fn bar_rows(report: &AttributionReport, output: usize) -> Vec<(String, f64, f64)> {
    let g = &report.global;
    let mut rows: Vec<(usize, f64)> = (0..report.feature_names.len())
        .map(|i| (i, g.total(output, i)))
        .filter(|&(_, t)| t > 0.0)
        .collect();
    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    rows.into_iter()
        .map(|(i, _)| {
            (
                report.feature_names[i].clone(),
                g.direct[output][i],
                g.indirect[output][i],
            )
        })
        .collect()
}

pub fn render_output_svg(report: &AttributionReport, output: usize) -> Result<String> {
    let name = report.output_names.get(output).ok_or_else(|| {
        Error::Report(format!("output index {output} out of range"))
    })?;
    let rows = bar_rows(report, output);
    let max = rows.iter().map(|r| r.1 + r.2).fold(0.0, f64::max);
    let plot_w = WIDTH - LABEL_W - 70.0;
    let scale = if max > 0.0 { plot_w / max } else { 0.0 };
    let height = TOP + BOTTOM + rows.len() as f64 * (BAR_H + GAP);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" font-size="14" text-anchor="middle">{} ({})</text>"#,
        WIDTH / 2.0,
        escape(name),
        escape(&report.label)
    );
    for (k, (feature, direct, indirect)) in rows.iter().enumerate() {
        let y = TOP + k as f64 * (BAR_H + GAP);
        let wd = direct * scale;
        let wi = indirect * scale;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LABEL_W - 6.0,
            y + BAR_H * 0.75,
            escape(feature)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{LABEL_W:.2}" y="{y:.2}" width="{wd:.2}" height="{BAR_H:.2}" fill="{DIRECT_FILL}"><title>direct {direct:.6}</title></rect>"#
        );
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{y:.2}" width="{wi:.2}" height="{BAR_H:.2}" fill="{INDIRECT_FILL}"><title>indirect {indirect:.6}</title></rect>"#,
            LABEL_W + wd
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{:.3}</text>"#,
            LABEL_W + wd + wi + 4.0,
            y + BAR_H * 0.75,
            direct + indirect
        );
    }
    let ly = height - BOTTOM / 2.0;
    let _ = writeln!(
        s,
        r#"<rect x="{LABEL_W:.2}" y="{:.2}" width="12" height="12" fill="{DIRECT_FILL}"/><text x="{:.2}" y="{ly:.2}">direct</text>"#,
        ly - 10.0,
        LABEL_W + 16.0
    );
    let _ = writeln!(
        s,
        r#"<rect x="{:.2}" y="{:.2}" width="12" height="12" fill="{INDIRECT_FILL}"/><text x="{:.2}" y="{ly:.2}">indirect</text>"#,
        LABEL_W + 90.0,
        ly - 10.0,
        LABEL_W + 106.0
    );
    s.push_str("</svg>\n");
    Ok(s)
}

/// Every chart for a report as `(file name, svg)`, named
/// `<label>_<output>.svg`.
pub fn render_report_svgs(report: &AttributionReport) -> Result<Vec<(String, String)>> {
    (0..report.output_names.len())
        .map(|o| {
            let file = format!("{}_{}.svg", report.label, report.output_names[o]);
            Ok((file, render_output_svg(report, o)?))
        })
        .collect()
}
