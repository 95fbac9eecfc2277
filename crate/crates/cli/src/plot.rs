//! Log-log cumulative regret curves as a standalone SVG.

use std::collections::BTreeMap;
use std::fmt::Write;

use noisefree_bo::analysis::REGRET_FLOOR;
use noisefree_bo::experiment::TraceFile;

/// Seed-mean cumulative regret per round with a min/max band.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub n_traces: usize,
    /// `(t, mean, min, max)`.
    pub points: Vec<(usize, f64, f64, f64)>,
}

/// One series per policy, ordered by name; rounds missing from shorter
/// traces are averaged over the traces that have them.
pub fn series_from_traces(files: &[TraceFile]) -> Vec<Series> {
    let mut groups: BTreeMap<&str, Vec<&TraceFile>> = BTreeMap::new();
    for f in files {
        groups.entry(f.policy.as_str()).or_default().push(f);
    }
    groups
        .into_iter()
        .map(|(label, traces)| {
            let mut by_t: BTreeMap<usize, (f64, usize, f64, f64)> = BTreeMap::new();
            for tr in &traces {
                for row in &tr.rows {
                    let e = by_t.entry(row.t).or_insert((0.0, 0, f64::INFINITY, f64::NEG_INFINITY));
                    e.0 += row.cum_regret;
                    e.1 += 1;
                    e.2 = e.2.min(row.cum_regret);
                    e.3 = e.3.max(row.cum_regret);
                }
            }
            Series {
                label: label.to_string(),
                n_traces: traces.len(),
                points: by_t
                    .into_iter()
                    .map(|(t, (sum, n, lo, hi))| (t, sum / n as f64, lo, hi))
                    .collect(),
            }
        })
        .collect()
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn log(v: f64) -> f64 {
    v.max(REGRET_FLOOR).log10()
}

/// Renders every series on shared log-log axes: one `<polyline>` per series
/// for the mean and one `<polygon>` for its band.
pub fn render_svg(series: &[Series]) -> String {
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(t, _, lo, hi) in pts {
        let x = (t.max(1) as f64).log10();
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(log(lo));
        y1 = y1.max(log(hi));
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let (x0, x1) = (x0.floor(), x1.ceil().max(x0.floor() + 1.0));
    let (y0, y1) = (y0.floor(), y1.ceil().max(y0.floor() + 1.0));
    let px = |t: usize| MARGIN + ((t.max(1) as f64).log10() - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |v: f64| HEIGHT - MARGIN - (log(v) - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(s, r#"<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{left}" y1="{bottom}" x2="{left}" y2="{top}" stroke="black"/>"#);
    for k in x0 as i32..=x1 as i32 {
        let x = left + (k as f64 - x0) / (x1 - x0) * (right - left);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">1e{k}</text>"#, bottom + 18.0);
    }
    for k in y0 as i32..=y1 as i32 {
        let y = bottom - (k as f64 - y0) / (y1 - y0) * (bottom - top);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{y:.2}" text-anchor="end">1e{k}</text>"#, left - 6.0);
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">round t</text>"#,
        WIDTH / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{:.2}" text-anchor="middle" transform="rotate(-90 15 {:.2})">cumulative regret R(t)</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );

    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut band = String::new();
        for &(t, _, _, hi) in &ser.points {
            let _ = write!(band, "{:.2},{:.2} ", px(t), py(hi));
        }
        for &(t, _, lo, _) in ser.points.iter().rev() {
            let _ = write!(band, "{:.2},{:.2} ", px(t), py(lo));
        }
        let _ = writeln!(
            s,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#,
            band.trim_end()
        );
        let line: Vec<String> = ser
            .points
            .iter()
            .map(|&(t, m, _, _)| format!("{:.2},{:.2}", px(t), py(m)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            line.join(" ")
        );
        let ly = top + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{ly:.2}" fill="{color}">{} ({} traces)</text>"#,
            left + 10.0,
            escape(&ser.label),
            ser.n_traces
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use noisefree_bo::experiment::TraceRow;

    fn trace(policy: &str, seed: u64, inst: &[f64]) -> TraceFile {
        let mut cum = 0.0;
        TraceFile {
            config_hash: "h".into(),
            policy: policy.into(),
            seed,
            rows: inst
                .iter()
                .enumerate()
                .map(|(i, &r)| {
                    cum += r;
                    TraceRow {
                        t: i + 1,
                        x: vec![0.0],
                        f_x: 1.0 - r,
                        inst_regret: r,
                        cum_regret: cum,
                        sigma2_hat: 1.0,
                        lengthscale_hat: 1.0,
                        post_sd_at_x: 0.0,
                        jitter: 1e-10,
                    }
                })
                .collect(),
        }
    }

    #[test]
    fn groups_by_policy_and_averages() {
        let files = [
            trace("ucb", 0, &[1.0, 1.0]),
            trace("ts", 0, &[0.5]),
            trace("ucb", 1, &[3.0, 0.0, 1.0]),
        ];
        let series = series_from_traces(&files);
        assert_eq!(series.len(), 2);
        assert_eq!(series[0].label, "ts");
        let ucb = &series[1];
        assert_eq!(ucb.n_traces, 2);
        assert_eq!(ucb.points[0], (1, 2.0, 1.0, 3.0));
        assert_eq!(ucb.points[1], (2, 2.5, 2.0, 3.0));
        assert_eq!(ucb.points[2], (3, 4.0, 4.0, 4.0));
    }

    #[test]
    fn one_polyline_per_series() {
        let files = [trace("ucb", 0, &[1.0, 0.5, 0.25]), trace("ts", 0, &[0.0, 0.0])];
        let svg = render_svg(&series_from_traces(&files));
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("<polygon").count(), 2);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
        assert_eq!(svg, render_svg(&series_from_traces(&files)));
    }

    #[test]
    fn empty_input_renders_axes_only() {
        let svg = render_svg(&[]);
        assert_eq!(svg.matches("<polyline").count(), 0);
        assert_eq!(svg.matches("<line").count(), 2);
    }
}
