//! Run artifacts: CSV tables, JSON summaries, field slices and binary states.
//!
//! CSV numbers use the shortest representation that round-trips, so reruns
//! with the same inputs are bit-identical. States are stored as raw
//! little-endian spectra to make reloading exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid3;
use crate::soliton::{FieldPair, PhaseState};

const STATE_MAGIC: &[u8; 8] = b"SOLISTA1";

/// Incremental CSV table.
pub struct Table {
    inner: csv::Writer<BufWriter<File>>,
    width: usize,
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

impl Table {
    pub fn create(path: &Path, header: &[&str]) -> Result<Table> {
        let mut inner = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
        inner.write_record(header).map_err(csv_err)?;
        Ok(Table { inner, width: header.len() })
    }

    pub fn row(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.width {
            return Err(Error::Argument(format!("row of {} values for {} columns", values.len(), self.width)));
        }
        self.inner.write_record(values.iter().map(|v| format!("{v:?}"))).map_err(csv_err)
    }

    /// Row with a trailing text column.
    pub fn row_with(&mut self, values: &[f64], last: &str) -> Result<()> {
        if values.len() + 1 != self.width {
            return Err(Error::Argument(format!("row of {} values for {} columns", values.len() + 1, self.width)));
        }
        let mut rec: Vec<String> = values.iter().map(|v| format!("{v:?}")).collect();
        rec.push(last.to_string());
        self.inner.write_record(&rec).map_err(csv_err)
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

/// Appends the components of `v` to `out`.
pub fn push3(out: &mut Vec<f64>, v: &Vector3<f64>) {
    out.extend_from_slice(v.as_slice());
}

/// Column names `prefix_x, prefix_y, prefix_z`.
pub fn cols3(prefix: &str) -> [String; 3] {
    [format!("{prefix}_x"), format!("{prefix}_y"), format!("{prefix}_z")]
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Writes the `x₃ = 0` plane of `ψ` and `π` as `x, y, psi, pi` rows.
pub fn write_slice(path: &Path, grid: &Grid3, fields: &FieldPair) -> Result<()> {
    let psi = grid.inverse(&fields.psi);
    let pi = grid.inverse(&fields.pi);
    let n = grid.n();
    let k = n / 2;
    let mut t = Table::create(path, &["x", "y", "psi", "pi"])?;
    for i in 0..n {
        for j in 0..n {
            let idx = grid.index(i, j, k);
            t.row(&[grid.coord(i), grid.coord(j), psi[idx], pi[idx]])?;
        }
    }
    t.flush()
}

fn put_f64(w: &mut impl Write, x: f64) -> Result<()> {
    w.write_all(&x.to_le_bytes())?;
    Ok(())
}

fn get_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Binary state: magic, `n`, `L`, `t`, `q`, `p`, then the spectra of `ψ` and `π`.
pub fn save_state(path: &Path, grid: &Grid3, t: f64, y: &PhaseState) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(STATE_MAGIC)?;
    w.write_all(&(grid.n() as u64).to_le_bytes())?;
    put_f64(&mut w, grid.l())?;
    put_f64(&mut w, t)?;
    for x in y.q.iter().chain(y.p.iter()) {
        put_f64(&mut w, *x)?;
    }
    for z in y.fields.psi.iter().chain(y.fields.pi.iter()) {
        put_f64(&mut w, z.re)?;
        put_f64(&mut w, z.im)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a state written by [`save_state`]; the grid must match.
pub fn load_state(path: &Path, grid: &Grid3) -> Result<(f64, PhaseState)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != STATE_MAGIC {
        return Err(Error::Argument(format!("{} is not a state file", path.display())));
    }
    let mut nb = [0u8; 8];
    r.read_exact(&mut nb)?;
    let n = u64::from_le_bytes(nb) as usize;
    let l = get_f64(&mut r)?;
    if n != grid.n() || l != grid.l() {
        return Err(Error::Argument(format!("state grid n={n}, L={l} differs from n={}, L={}", grid.n(), grid.l())));
    }
    let t = get_f64(&mut r)?;
    let mut y = PhaseState::zeros(grid);
    for i in 0..3 {
        y.q[i] = get_f64(&mut r)?;
    }
    for i in 0..3 {
        y.p[i] = get_f64(&mut r)?;
    }
    for s in [&mut y.fields.psi, &mut y.fields.pi] {
        for z in s.iter_mut() {
            let re = get_f64(&mut r)?;
            let im = get_f64(&mut r)?;
            *z = Complex64::new(re, im);
        }
    }
    Ok((t, y))
}
