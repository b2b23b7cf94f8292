//! Column-oriented CSV output with 17 significant digits.

use std::fmt::Write;

/// Formats a float with 17 significant digits.
pub fn sci(x: f64) -> String {
    format!("{x:.16e}")
}

/// Renders equal-length columns under a comma-separated header.
pub fn render(header: &[String], columns: &[&[f64]]) -> String {
    debug_assert_eq!(header.len(), columns.len());
    let rows = columns.iter().map(|c| c.len()).min().unwrap_or(0);
    let mut out = String::with_capacity(rows * columns.len() * 24 + 64);
    out.push_str(&header.join(","));
    out.push('\n');
    for r in 0..rows {
        for (i, col) in columns.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{}", sci(col[r])).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Parses a CSV produced by [`render`] back into header and columns.
pub fn parse(text: &str) -> Option<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let header: Vec<String> = lines.next()?.split(',').map(str::to_owned).collect();
    let mut cols = vec![Vec::new(); header.len()];
    for line in lines.filter(|l| !l.is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return None;
        }
        for (c, f) in cols.iter_mut().zip(fields) {
            c.push(f.trim().parse().ok()?);
        }
    }
    Some((header, cols))
}
