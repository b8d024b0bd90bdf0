//! Diagnostics CSV and field snapshot I/O.

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};
use std::path::Path;

use thiserror::Error;

use crate::assembly::{BulkSurfacePair, FemOperators};
use crate::numeric::Real;
use crate::stepper::DiagnosticsRow;

pub const DIAGNOSTICS_HEADER: &str = "step,t,mass_bulk,mass_surf,mass_weighted,energy_total,energy_grad_bulk,energy_grad_surf,energy_pot_bulk,energy_pot_surf,energy_coupling,dissipation,balance_residual,max_abs_phi,max_abs_psi,newton_iters";

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Seventeen significant digits, round-trip exact for `f64`.
pub fn fmt_real<T: Real>(x: T) -> String {
    format!("{:.16e}", x.to_f64_lossy())
}

pub fn diagnostics_line<T: Real>(r: &DiagnosticsRow<T>) -> String {
    let vals = [
        r.t,
        r.mass.bulk,
        r.mass.surf,
        r.mass.weighted_total,
        r.energy.total,
        r.energy.grad_bulk,
        r.energy.grad_surf,
        r.energy.pot_bulk,
        r.energy.pot_surf,
        r.energy.coupling,
        r.dissipation,
        r.balance_residual,
        r.max_abs_phi,
        r.max_abs_psi,
    ];
    let mut s = r.step.to_string();
    for v in vals {
        s.push(',');
        s.push_str(&fmt_real(v));
    }
    let _ = write!(s, ",{}", r.newton_iters);
    s
}

pub fn diagnostics_csv<T: Real>(rows: &[DiagnosticsRow<T>]) -> String {
    let mut s = String::from(DIAGNOSTICS_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&diagnostics_line(r));
        s.push('\n');
    }
    s
}

/// Generic table with a header row; values use [`fmt_real`].
pub fn table_csv(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        let cells: Vec<String> = r.iter().map(|&v| fmt_real(v)).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn write_string(path: &Path, contents: &str) -> Result<(), OutputError> {
    let mut f = io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(contents.as_bytes())?;
    f.flush()?;
    Ok(())
}

/// Parsed CSV: header names and numeric rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

pub fn parse_table(text: &str) -> Result<Table, OutputError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, head) = lines.next().ok_or(OutputError::Parse { line: 1, message: "empty table".into() })?;
    let header: Vec<String> = head.split(',').map(|h| h.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (i, l) in lines {
        let row = l
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| OutputError::Parse { line: i + 1, message: e.to_string() })?;
        if row.len() != header.len() {
            return Err(OutputError::Parse { line: i + 1, message: format!("expected {} cells, got {}", header.len(), row.len()) });
        }
        rows.push(row);
    }
    Ok(Table { header, rows })
}

/// `bsfield 1` snapshot: bulk nodes with coordinates, then surface nodes with arc length.
pub fn field_to_string<T: Real>(ops: &FemOperators<T>, field: &BulkSurfacePair<T>) -> String {
    let mut s = String::from("bsfield 1\n");
    let _ = writeln!(s, "bulk {}", ops.n_bulk);
    for (p, v) in ops.nodes.iter().zip(&field.bulk) {
        let _ = writeln!(s, "{} {} {}", fmt_real(p[0]), fmt_real(p[1]), fmt_real(*v));
    }
    let _ = writeln!(s, "surf {}", ops.n_surf);
    for (sc, v) in ops.surface_coords.iter().zip(&field.surf) {
        let _ = writeln!(s, "{} {}", fmt_real(*sc), fmt_real(*v));
    }
    s
}

/// Reads the values of a `bsfield 1` snapshot; coordinates are checked for arity only.
pub fn read_field<T: Real>(reader: impl BufRead) -> Result<BulkSurfacePair<T>, OutputError> {
    let mut lines = reader.lines().enumerate();
    let mut next = |what: &str| -> Result<(usize, String), OutputError> {
        match lines.next() {
            Some((i, l)) => Ok((i + 1, l?)),
            None => Err(OutputError::Parse { line: 0, message: format!("unexpected end of file, expected {what}") }),
        }
    };
    let (ln, head) = next("header")?;
    if head.trim() != "bsfield 1" {
        return Err(OutputError::Parse { line: ln, message: "expected `bsfield 1`".into() });
    }
    let mut section = |name: &str, arity: usize| -> Result<Vec<T>, OutputError> {
        let (ln, l) = next(name)?;
        let mut it = l.split_whitespace();
        let count = match (it.next(), it.next().map(str::parse::<usize>)) {
            (Some(k), Some(Ok(n))) if k == name => n,
            _ => return Err(OutputError::Parse { line: ln, message: format!("expected `{name} <count>`") }),
        };
        let mut vals = Vec::with_capacity(count);
        for _ in 0..count {
            let (ln, l) = next("value line")?;
            let cells: Vec<&str> = l.split_whitespace().collect();
            if cells.len() != arity {
                return Err(OutputError::Parse { line: ln, message: format!("expected {arity} numbers") });
            }
            let v: T = cells[arity - 1]
                .parse()
                .map_err(|_| OutputError::Parse { line: ln, message: format!("invalid number `{}`", cells[arity - 1]) })?;
            vals.push(v);
        }
        Ok(vals)
    };
    let bulk = section("bulk", 3)?;
    let surf = section("surf", 2)?;
    Ok(BulkSurfacePair::new(bulk, surf))
}
