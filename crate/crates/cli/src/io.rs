//! Matrix file I/O.
//!
//! Matrices travel as comma-separated files with one header row. The first
//! header cell names the row dimension (`obs` for observations, `coef` for
//! coefficients) and the remaining cells label the columns; each data row
//! starts with its 1-based row label. Values are written with 17 significant
//! digits so files re-parse to bit-identical matrices.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use ndarray::{Array1, Array2};

/// Row dimension declared by a matrix file's header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Observations,
    Coefficients,
}

impl RowKind {
    pub fn label(self) -> &'static str {
        match self {
            RowKind::Observations => "obs",
            RowKind::Coefficients => "coef",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "obs" => Some(RowKind::Observations),
            "coef" => Some(RowKind::Coefficients),
            _ => None,
        }
    }
}

/// Render a matrix in the on-disk format.
pub fn matrix_to_csv(m: &Array2<f64>, rows: RowKind, col_prefix: &str) -> String {
    let mut out = String::new();
    out.push_str(rows.label());
    for c in 0..m.ncols() {
        let _ = write!(out, ",{}{}", col_prefix, c + 1);
    }
    out.push('\n');
    for (r, row) in m.rows().into_iter().enumerate() {
        let _ = write!(out, "{}", r + 1);
        for v in row.iter() {
            let _ = write!(out, ",{v:.16e}");
        }
        out.push('\n');
    }
    out
}

pub fn write_matrix(path: &Path, m: &Array2<f64>, rows: RowKind, col_prefix: &str) -> Result<()> {
    std::fs::write(path, matrix_to_csv(m, rows, col_prefix))
        .with_context(|| format!("writing {}", path.display()))
}

/// Parse a matrix file, reporting the declared row kind. Parse failures name
/// the 1-based line and column of the offending cell.
pub fn read_matrix(path: &Path) -> Result<(Array2<f64>, RowKind)> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_matrix(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn parse_matrix(text: &str) -> Result<(Array2<f64>, RowKind)> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().context("empty file: missing header row")?;
    let mut header_cells = header.split(',');
    let kind_cell = header_cells.next().unwrap_or("");
    let kind = RowKind::parse(kind_cell).with_context(|| {
        format!("line 1, column 1: row kind must be 'obs' or 'coef', got {kind_cell:?}")
    })?;
    let ncols = header_cells.count();
    if ncols == 0 {
        bail!("line 1: header declares no data columns");
    }

    let mut values: Vec<f64> = Vec::new();
    let mut nrows = 0usize;
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let mut cells = line.split(',');
        let _label = cells.next();
        let mut count = 0usize;
        for (c, cell) in cells.enumerate() {
            let v: f64 = cell.trim().parse().with_context(|| {
                format!("line {lineno}, column {}: invalid number {cell:?}", c + 2)
            })?;
            if !v.is_finite() {
                bail!("line {lineno}, column {}: non-finite value {cell:?}", c + 2);
            }
            values.push(v);
            count += 1;
        }
        if count != ncols {
            bail!("line {lineno}: expected {ncols} data columns, found {count}");
        }
        nrows += 1;
    }
    if nrows == 0 {
        bail!("no data rows");
    }
    let m = Array2::from_shape_vec((nrows, ncols), values).expect("counted shape");
    Ok((m, kind))
}

/// Read a single-column file as a vector.
pub fn read_vector(path: &Path) -> Result<(Array1<f64>, RowKind)> {
    let (m, kind) = read_matrix(path)?;
    if m.ncols() != 1 {
        bail!(
            "{} must have exactly one data column, found {}",
            path.display(),
            m.ncols()
        );
    }
    Ok((m.column(0).to_owned(), kind))
}
