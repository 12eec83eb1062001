//! Static SVG line charts drawn from result CSVs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::HarnessError;
use crate::output::read_table;
use crate::report::PlotHint;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;
const COLOURS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: &[f64], log: bool) -> Self {
        let map = |v: f64| if log { v.log10() } else { v };
        let (mut lo, mut hi) = values
            .iter()
            .map(|&v| map(v))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !(hi > lo) {
            lo -= 0.5;
            hi += 0.5;
        }
        Self { lo, hi, log }
    }

    fn frac(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    fn label(&self, f: f64) -> String {
        let v = self.lo + f * (self.hi - self.lo);
        if self.log {
            format!("1e{v:.1}")
        } else {
            format!("{v:.3}")
        }
    }
}

fn column(header: &[String], name: &str) -> Result<usize, HarnessError> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| HarnessError::Plot(format!("no column named {name}")))
}

fn numeric(rows: &[Vec<String>], col: usize) -> Option<Vec<f64>> {
    rows.iter().map(|r| r[col].parse::<f64>().ok()).collect()
}

/// Picks the first all-numeric column as x and the rest as y.
fn default_hint(header: &[String], rows: &[Vec<String>]) -> Result<PlotHint, HarnessError> {
    let cols: Vec<usize> = (0..header.len())
        .filter(|&c| numeric(rows, c).is_some_and(|v| v.iter().all(|x| x.is_finite())))
        .collect();
    if cols.len() < 2 {
        return Err(HarnessError::Plot("need at least two numeric columns".into()));
    }
    let wide = |c: usize| {
        let v = numeric(rows, c).unwrap_or_default();
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(0.0, f64::max);
        lo > 0.0 && hi / lo > 100.0
    };
    Ok(PlotHint {
        x: header[cols[0]].clone(),
        y: cols[1..].iter().map(|&c| header[c].clone()).collect(),
        log_x: wide(cols[0]),
        log_y: cols[1..].iter().all(|&c| wide(c)),
    })
}

/// Renders the CSV at `csv` to an SVG next to it and returns its path.
pub fn plot_csv(csv: &Path, hint: Option<&PlotHint>) -> Result<PathBuf, HarnessError> {
    let (header, rows) = read_table(csv)?;
    if rows.is_empty() {
        return Err(HarnessError::Plot(format!("{} has no rows", csv.display())));
    }
    let hint = match hint {
        Some(h) => h.clone(),
        None => default_hint(&header, &rows)?,
    };
    let xc = column(&header, &hint.x)?;
    let xs = numeric(&rows, xc).ok_or_else(|| HarnessError::Plot(format!("column {} is not numeric", hint.x)))?;
    let mut series = Vec::new();
    for name in &hint.y {
        let c = column(&header, name)?;
        let ys = numeric(&rows, c).ok_or_else(|| HarnessError::Plot(format!("column {name} is not numeric")))?;
        let pts: Vec<(f64, f64)> = xs
            .iter()
            .zip(&ys)
            .map(|(&x, &y)| (x, y))
            .filter(|(x, y)| {
                x.is_finite() && y.is_finite() && (!hint.log_x || *x > 0.0) && (!hint.log_y || *y > 0.0)
            })
            .collect();
        series.push((name.clone(), pts));
    }
    let all_x: Vec<f64> = series.iter().flat_map(|s| s.1.iter().map(|p| p.0)).collect();
    let all_y: Vec<f64> = series.iter().flat_map(|s| s.1.iter().map(|p| p.1)).collect();
    if all_x.is_empty() {
        return Err(HarnessError::Plot("no plottable points".into()));
    }
    let ax = Axis::fit(&all_x, hint.log_x);
    let ay = Axis::fit(&all_y, hint.log_y);
    let px = |x: f64| MARGIN + ax.frac(x) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - ay.frac(y) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, MARGIN);
    let _ = writeln!(
        svg,
        r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let gx = x0 + f * (x1 - x0);
        let gy = y0 - f * (y0 - y1);
        let _ = writeln!(svg, r#"<text x="{gx}" y="{}" text-anchor="middle">{}</text>"#, y0 + 16.0, ax.label(f));
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, x0 - 4.0, gy + 4.0, ay.label(f));
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        0.5 * (x0 + x1),
        HEIGHT - 16.0,
        hint.x
    );
    for (i, (name, pts)) in series.iter().enumerate() {
        let colour = COLOURS[i % COLOURS.len()];
        let d: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        if !d.is_empty() {
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#,
                d.join(" ")
            );
        }
        for &(x, y) in pts {
            let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{colour}"/>"#, px(x), py(y));
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" fill="{colour}">{name}</text>"#,
            x1 - 120.0,
            y1 + 14.0 * (i as f64 + 1.0)
        );
    }
    svg.push_str("</svg>\n");
    let out = csv.with_extension("svg");
    std::fs::write(&out, svg)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::output::write_table;
    use crate::report::Table;

    #[test]
    fn draws_numeric_columns() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new("decay", &["lambda", "error", "label"]);
        for (l, e) in [(4.0, 1e-2), (8.0, 5e-3), (16.0, 2.4e-3)] {
            t.push(vec![l.to_string(), e.to_string(), "a".into()]);
        }
        let csv = write_table(dir.path(), "s", "h", &t).unwrap();
        let svg = plot_csv(&csv, None).unwrap();
        let text = std::fs::read_to_string(svg).unwrap();
        assert!(text.contains("<polyline") && text.contains(">error<"));
        assert!(!text.contains(">label<"));
    }
}
