//! Plain CSV writers. Every file starts with `#`-prefixed `key: value`
//! metadata lines, then one header row, then data rows. Numbers use `{:e}`
//! with 17 significant digits so identical runs give identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::error::Result;
use crate::grid::{ComplexField, RealField};
use crate::state::DensityMatrix;

/// Ordered metadata for a CSV header block.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metadata {
    pub entries: Vec<(String, String)>,
    /// Emit a `# generated-unix-seconds:` line.
    pub timestamp: bool,
}

impl Metadata {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    fn render(&self, out: &mut String) {
        if self.timestamp {
            let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
            let _ = writeln!(out, "# generated-unix-seconds: {secs}");
        }
        for (k, v) in &self.entries {
            let _ = writeln!(out, "# {k}: {}", v.replace('\n', " "));
        }
    }
}

pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Renders a table of numbers.
pub fn csv_string(meta: &Metadata, header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = String::new();
    meta.render(&mut out);
    out.push_str(&header.join(","));
    out.push('\n');
    for r in rows {
        let cells: Vec<String> = r.iter().map(|v| fmt_num(*v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Renders a table whose cells are already strings.
pub fn csv_string_text(meta: &Metadata, header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    meta.render(&mut out);
    out.push_str(&header.join(","));
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

pub fn write_csv(path: &Path, meta: &Metadata, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    write_text(path, &csv_string(meta, header, rows))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

/// Columns `x, re, im`.
pub fn complex_field_rows(f: &ComplexField) -> Vec<Vec<f64>> {
    f.values.iter().enumerate().map(|(j, v)| vec![f.grid.x(j), v.re, v.im]).collect()
}

/// Columns `x, value`.
pub fn real_field_rows(f: &RealField) -> Vec<Vec<f64>> {
    f.values.iter().enumerate().map(|(j, v)| vec![f.grid.x(j), *v]).collect()
}

/// Row-major `row, col, re, im` with rows indexed by `x′`.
pub fn density_matrix_rows(rho: &DensityMatrix) -> Vec<Vec<f64>> {
    let n = rho.kernel.nrows();
    let mut rows = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let v = rho.kernel[(i, j)];
            rows.push(vec![i as f64, j as f64, v.re, v.im]);
        }
    }
    rows
}

/// Parses the data rows of a file written by [`csv_string`].
pub fn parse_csv(text: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().map(|h| h.split(',').map(str::to_string).collect()).unwrap_or_default();
    let rows = lines.map(|l| l.split(',').map(|c| c.trim().parse().unwrap_or(f64::NAN)).collect()).collect();
    (header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid1D;
    use crate::state::families::gaussian;

    #[test]
    fn roundtrip_is_exact() {
        let g = Grid1D::symmetric(64, 8.0).unwrap();
        let psi = gaussian(g, 1.0, 1.0, 0.3, 1.0, 0.7).unwrap();
        let meta = Metadata::new().with("scenario", "t").with("grid", "64");
        let text = csv_string(&meta, &["x", "re", "im"], &complex_field_rows(&psi.field));
        assert!(text.starts_with("# scenario: t\n# grid: 64\nx,re,im\n"));
        let (h, rows) = parse_csv(&text);
        assert_eq!(h, vec!["x", "re", "im"]);
        for (r, v) in rows.iter().zip(psi.values()) {
            assert_eq!(r[1], v.re);
            assert_eq!(r[2], v.im);
        }
    }

    #[test]
    fn timestamp_line_is_optional() {
        let mut meta = Metadata::new().with("k", 1);
        assert!(!csv_string(&meta, &["a"], &[]).contains("generated"));
        meta.timestamp = true;
        assert!(csv_string(&meta, &["a"], &[]).starts_with("# generated-unix-seconds:"));
    }
}
