//! Columnar numeric files.
//!
//! * graded cochains: `degree,cell,fiber,value`, rows in (degree, cell id,
//!   fiber) order; cell ids follow the lexicographic `(axes, base)` ordering.
//! * per-vertex matrix fields: `vertex,row,col,value`.
//! * per-edge transport matrices: `edge,row,col,value`.
//!
//! Values are written in Rust's shortest round-trip float format, so a dump
//! read back reproduces the cochain bit for bit.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::bundle::Mat;
use crate::calculus::{Cochain, GradedCochain};
use crate::error::{Error, Result};
use crate::mesh::TorusGrid;
use crate::structures::{JField, TwoFormField};

pub fn write_graded<W: Write>(g: &GradedCochain, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["degree", "cell", "fiber", "value"])?;
    for c in g.components() {
        let m = c.rank();
        for (i, x) in c.values().iter().enumerate() {
            w.write_record([
                c.degree().to_string(),
                (i / m).to_string(),
                (i % m).to_string(),
                fmt_f64(*x),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a graded cochain of the given rank. Degrees not mentioned are absent;
/// entries not mentioned within a present degree are zero.
pub fn read_graded<R: Read>(input: R, grid: &TorusGrid, rank: usize) -> Result<GradedCochain> {
    let mut rdr = csv::Reader::from_reader(input);
    expect_header(&mut rdr, &["degree", "cell", "fiber", "value"])?;
    let mut out = GradedCochain::zero(grid.dim(), rank);
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = line + 2;
        let degree: usize = field(&rec, 0, row)?;
        let cell: usize = field(&rec, 1, row)?;
        let fiber: usize = field(&rec, 2, row)?;
        let value: f64 = field(&rec, 3, row)?;
        if degree > grid.dim() || cell >= grid.cell_count(degree) || fiber >= rank {
            return Err(Error::Parse(format!(
                "row {row}: entry (degree {degree}, cell {cell}, fiber {fiber}) out of range"
            )));
        }
        if out.component(degree).is_none() {
            out.set(Cochain::zeros(grid, rank, degree));
        }
        out.component_mut(degree).expect("just inserted").value_mut(cell)[fiber] = value;
    }
    Ok(out)
}

pub fn write_graded_file(g: &GradedCochain, path: impl AsRef<Path>) -> Result<()> {
    write_graded(g, File::create(path)?)
}

pub fn read_graded_file(path: impl AsRef<Path>, grid: &TorusGrid, rank: usize) -> Result<GradedCochain> {
    read_graded(File::open(path)?, grid, rank)
}

pub fn write_matrix_field<W: Write>(mats: &[Mat], out: W) -> Result<()> {
    write_matrices(mats, "vertex", out)
}

pub fn read_matrix_field<R: Read>(input: R, count: usize, n: usize) -> Result<Vec<Mat>> {
    read_matrices(input, "vertex", count, n)
}

pub fn write_j_field<W: Write>(j: &JField, out: W) -> Result<()> {
    write_matrix_field(j.matrices(), out)
}

pub fn write_two_form_field<W: Write>(f: &TwoFormField, out: W) -> Result<()> {
    let mats: Vec<Mat> = (0..f.vertex_count()).map(|v| f.matrix(v)).collect();
    write_matrix_field(&mats, out)
}

pub fn write_edge_matrices<W: Write>(mats: &[Mat], out: W) -> Result<()> {
    write_matrices(mats, "edge", out)
}

/// Per-edge transports; edges not listed keep the identity.
pub fn read_edge_matrices(path: impl AsRef<Path>, grid: &TorusGrid, rank: usize) -> Result<Vec<Mat>> {
    let path = path.as_ref();
    let file = File::open(path)
        .map_err(|e| Error::Parse(format!("cannot open edge matrix file {}: {e}", path.display())))?;
    read_matrices(file, "edge", grid.edge_count(), rank)
}

fn write_matrices<W: Write>(mats: &[Mat], key: &str, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([key, "row", "col", "value"])?;
    for (i, m) in mats.iter().enumerate() {
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                w.write_record([
                    i.to_string(),
                    r.to_string(),
                    c.to_string(),
                    fmt_f64(m[(r, c)]),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn read_matrices<R: Read>(input: R, key: &str, count: usize, n: usize) -> Result<Vec<Mat>> {
    let mut rdr = csv::Reader::from_reader(input);
    expect_header(&mut rdr, &[key, "row", "col", "value"])?;
    let mut mats = vec![Mat::identity(n, n); count];
    let mut touched = vec![false; count];
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = line + 2;
        let i: usize = field(&rec, 0, row)?;
        let r: usize = field(&rec, 1, row)?;
        let c: usize = field(&rec, 2, row)?;
        let value: f64 = field(&rec, 3, row)?;
        if i >= count || r >= n || c >= n {
            return Err(Error::Parse(format!(
                "row {row}: entry ({key} {i}, row {r}, col {c}) out of range"
            )));
        }
        // a listed matrix starts from zero, not identity
        if !touched[i] {
            mats[i].fill(0.0);
            touched[i] = true;
        }
        mats[i][(r, c)] = value;
    }
    Ok(mats)
}

/// Shortest round-trip text; exponent form for very small or large magnitudes.
pub(crate) fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

fn expect_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let headers = rdr.headers()?;
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::Parse(format!(
            "header {got:?} does not match expected {expected:?}"
        )));
    }
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, row: usize) -> Result<T> {
    let raw = rec
        .get(i)
        .ok_or_else(|| Error::Parse(format!("row {row}: missing column {i}")))?;
    raw.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("row {row}, column {i}: cannot parse {raw:?}")))
}
