//! Matrix Market coordinate format for sparse matrices.

use std::io::{BufRead, Write};

use num_complex::Complex64;

use crate::error::{LabError, Result};
use crate::scalar::{exact_to_f64, Exact, Scalar};
use crate::sparse::SparseCols;

/// Scalars with a Matrix Market field. Exact values are written as their
/// nearest doubles.
pub trait MmValue: Scalar {
    const FIELD: &'static str;
    fn write_value(&self) -> String;
    fn parse_value(parts: &[&str], complex: bool) -> Result<Self>;
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|e| LabError::Parse(format!("bad number {s:?}: {e}")))
}

impl MmValue for f64 {
    const FIELD: &'static str = "real";
    fn write_value(&self) -> String {
        format!("{self:e}")
    }
    fn parse_value(parts: &[&str], complex: bool) -> Result<Self> {
        let v = parse_f64(parts[0])?;
        if complex && parse_f64(parts[1])? != 0.0 {
            return Err(LabError::FieldMismatch("complex entry in a real matrix".into()));
        }
        Ok(v)
    }
}

impl MmValue for Complex64 {
    const FIELD: &'static str = "complex";
    fn write_value(&self) -> String {
        format!("{:e} {:e}", self.re, self.im)
    }
    fn parse_value(parts: &[&str], complex: bool) -> Result<Self> {
        let im = if complex { parse_f64(parts[1])? } else { 0.0 };
        Ok(Complex64::new(parse_f64(parts[0])?, im))
    }
}

impl MmValue for Exact {
    const FIELD: &'static str = "real";
    fn write_value(&self) -> String {
        format!("{:e}", exact_to_f64(self))
    }
    fn parse_value(parts: &[&str], complex: bool) -> Result<Self> {
        Ok(<Exact as Scalar>::from_float(f64::parse_value(parts, complex)?))
    }
}

pub fn write_matrix<S: MmValue, W: Write>(m: &SparseCols<S>, mut w: W) -> Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate {} general", S::FIELD)?;
    writeln!(w, "{} {} {}", m.n_rows(), m.n_cols(), m.nnz())?;
    for (i, j, v) in m.triplets() {
        writeln!(w, "{} {} {}", i + 1, j + 1, v.write_value())?;
    }
    Ok(())
}

pub fn read_matrix<S: MmValue, R: BufRead>(r: R) -> Result<SparseCols<S>> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| LabError::Parse("empty file".into()))??;
    let h: Vec<String> = header.split_whitespace().map(|s| s.to_ascii_lowercase()).collect();
    if h.len() != 5 || h[0] != "%%matrixmarket" || h[1] != "matrix" || h[2] != "coordinate" {
        return Err(LabError::Parse(format!("unsupported header {header:?}")));
    }
    let complex = match h[3].as_str() {
        "real" | "integer" => false,
        "complex" => true,
        other => return Err(LabError::Parse(format!("unsupported field {other}"))),
    };
    let symmetric = match h[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(LabError::Parse(format!("unsupported symmetry {other}"))),
    };
    let mut size: Option<(usize, usize, usize)> = None;
    let mut entries: Vec<(usize, usize, S)> = Vec::new();
    for line in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = t.split_whitespace().collect();
        let parse_idx = |s: &str| s.parse::<usize>().map_err(|e| LabError::Parse(format!("bad index {s:?}: {e}")));
        match size {
            None => {
                if parts.len() != 3 {
                    return Err(LabError::Parse(format!("bad size line {t:?}")));
                }
                size = Some((parse_idx(parts[0])?, parse_idx(parts[1])?, parse_idx(parts[2])?));
            }
            Some((rows, cols, _)) => {
                let want = if complex { 4 } else { 3 };
                if parts.len() != want {
                    return Err(LabError::Parse(format!("bad entry line {t:?}")));
                }
                let (i, j) = (parse_idx(parts[0])?, parse_idx(parts[1])?);
                if i == 0 || j == 0 || i > rows || j > cols {
                    return Err(LabError::Parse(format!("entry ({i}, {j}) outside {rows} x {cols}")));
                }
                let v = S::parse_value(&parts[2..], complex)?;
                if symmetric && i != j {
                    entries.push((j - 1, i - 1, v.clone()));
                }
                entries.push((i - 1, j - 1, v));
            }
        }
    }
    let (rows, cols, nnz) = size.ok_or_else(|| LabError::Parse("missing size line".into()))?;
    let declared = if symmetric { entries.iter().filter(|(i, j, _)| i >= j).count() } else { entries.len() };
    if declared != nnz {
        return Err(LabError::Parse(format!("declared {nnz} entries, found {declared}")));
    }
    entries.sort_by_key(|(i, j, _)| (*j, *i));
    let mut m = SparseCols::with_capacity(rows, cols, entries.len());
    let mut it = entries.into_iter().peekable();
    for j in 0..cols {
        let mut col: Vec<(usize, S)> = Vec::new();
        while let Some((i, _, _)) = it.peek().filter(|e| e.1 == j) {
            let i = *i;
            let (_, _, v) = it.next().expect("peeked");
            match col.last_mut() {
                Some((last, acc)) if *last == i => *acc = acc.clone() + v,
                _ => col.push((i, v)),
            }
        }
        m.push_column(col);
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_real() {
        let mut m = SparseCols::<f64>::new(3);
        m.push_column(vec![(0, 1.5), (2, -1e-300)]);
        m.push_column(vec![]);
        m.push_column(vec![(1, std::f64::consts::PI)]);
        let mut buf = Vec::new();
        write_matrix(&m, &mut buf).unwrap();
        let back: SparseCols<f64> = read_matrix(&buf[..]).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn roundtrip_complex() {
        let mut m = SparseCols::<Complex64>::new(2);
        m.push_column(vec![(1, Complex64::new(0.25, -3.0))]);
        m.push_column(vec![(0, Complex64::new(1.0, 0.0))]);
        let mut buf = Vec::new();
        write_matrix(&m, &mut buf).unwrap();
        assert_eq!(read_matrix::<Complex64, _>(&buf[..]).unwrap(), m);
    }

    #[test]
    fn symmetric_is_mirrored() {
        let text = "%%MatrixMarket matrix coordinate real symmetric\n% c\n2 2 2\n1 1 1\n2 1 5\n";
        let m: SparseCols<f64> = read_matrix(text.as_bytes()).unwrap();
        assert_eq!(m.get(0, 1), 5.0);
        assert_eq!(m.get(1, 0), 5.0);
    }

    #[test]
    fn malformed_input() {
        assert!(read_matrix::<f64, _>("%%MatrixMarket matrix array real general\n".as_bytes()).is_err());
        assert!(read_matrix::<f64, _>("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1\n".as_bytes()).is_err());
        assert!(read_matrix::<f64, _>("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1\n".as_bytes()).is_err());
    }
}
