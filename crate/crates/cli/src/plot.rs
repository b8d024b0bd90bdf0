//! Line plots of CSV columns as standalone SVG.

use std::fmt::Write as _;

use bsch::output::Table;

use crate::error::CliError;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 500.0;
const MARGIN: [f64; 4] = [70.0, 30.0, 30.0, 60.0]; // left, right, top, bottom
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Exact header name, else `<name>_total`.
pub fn resolve_column<'a>(table: &'a Table, name: &str) -> Result<&'a str, CliError> {
    let total = format!("{name}_total");
    table
        .header
        .iter()
        .find(|h| *h == name)
        .or_else(|| table.header.iter().find(|h| **h == total))
        .map(String::as_str)
        .ok_or_else(|| CliError::Validation(format!("column `{name}` not found (available: {})", table.header.join(","))))
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo <= 1e-300_f64.max(1e-12 * hi.abs()) {
        (lo - 0.5 * (1.0 + lo.abs()), hi + 0.5 * (1.0 + hi.abs()))
    } else {
        (lo, hi)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// First column is the abscissa; every further column becomes one polyline.
pub fn render(table: &Table, columns: &[&str]) -> Result<String, CliError> {
    if columns.len() < 2 {
        return Err(CliError::Validation("plot needs an x column and at least one y column".into()));
    }
    let names: Vec<&str> = columns.iter().map(|c| resolve_column(table, c)).collect::<Result<_, _>>()?;
    let col = |n: &str| table.column(n).expect("resolved column");
    let xs = col(names[0]);
    let ys: Vec<Vec<f64>> = names[1..].iter().map(|n| col(n)).collect();
    let (x0, x1) = range(xs.iter().copied());
    let (y0, y1) = range(ys.iter().flatten().copied());
    let [ml, mr, mt, mb] = MARGIN;
    let (pw, ph) = (WIDTH - ml - mr, HEIGHT - mt - mb);
    let px = |x: f64| ml + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| mt + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#);
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<g stroke="black" stroke-width="1"><line x1="{ml}" y1="{}" x2="{}" y2="{}"/><line x1="{ml}" y1="{mt}" x2="{ml}" y2="{}"/></g>"#, mt + ph, ml + pw, mt + ph, mt + ph);
    let _ = writeln!(s, r#"<g font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<text x="{ml}" y="{}" text-anchor="start">{x0:.4e}</text>"#, mt + ph + 16.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{x1:.4e}</text>"#, ml + pw, mt + ph + 16.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{y0:.4e}</text>"#, ml - 4.0, mt + ph);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{y1:.4e}</text>"#, ml - 4.0, mt + 10.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, ml + pw / 2.0, HEIGHT - 15.0, escape(names[0]));
    let ylabel = escape(&names[1..].join(", "));
    let _ = writeln!(s, r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{ylabel}</text>"#, mt + ph / 2.0, mt + ph / 2.0);
    let _ = writeln!(s, "</g>");
    for (k, (name, y)) in names[1..].iter().zip(&ys).enumerate() {
        let pts: Vec<String> = xs.iter().zip(y).filter(|(a, b)| a.is_finite() && b.is_finite()).map(|(&a, &b)| format!("{:.3},{:.3}", px(a), py(b))).collect();
        let color = COLORS[k % COLORS.len()];
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" data-column="{}" points="{}"/>"#, escape(name), pts.join(" "));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> Table {
        Table { header: vec!["t".into(), "energy_total".into(), "mass_bulk".into()], rows: vec![vec![0.0, 2.0, 1.0], vec![0.5, 1.0, 1.0], vec![1.0, 0.5, 1.0]] }
    }

    #[test]
    fn one_polyline_per_column_with_all_points() {
        let svg = render(&table(), &["t", "energy"]).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        let points = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(points.split(' ').count(), 3);
        assert!(svg.contains(r#"width="800""#) && svg.contains(r#"height="500""#));
        assert!(svg.contains(">energy_total<"));
        // Flat data gets a padded range instead of a division by zero.
        let svg = render(&table(), &["t", "energy_total", "mass_bulk"]).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn corners_map_to_plot_area() {
        let svg = render(&table(), &["t", "energy_total"]).unwrap();
        assert!(svg.contains("70.000,30.000") && svg.contains("770.000,440.000"));
    }

    #[test]
    fn unknown_column() {
        assert!(render(&table(), &["t", "nope"]).is_err());
        assert!(render(&table(), &["t"]).is_err());
    }
}
