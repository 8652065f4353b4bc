//! Reading and writing point sets: headerless numeric CSV with
//! full-precision `%.17g` values, and a JSON envelope carrying provenance.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::densities::FrequencySet;
use crate::error::{Error, Result};
use crate::sequences::UnitPointSet;

/// Format like C's `printf("%.17g", x)`.
pub fn format_g17(x: f64) -> String {
    const P: i32 = 17;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..P).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", strip_zeros(mantissa), sign, exp.abs())
    } else {
        strip_zeros(&format!("{:.*}", (P - 1 - exp) as usize, x)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Write one row per line, comma separated.
pub fn write_matrix_csv<W: Write>(mut w: W, m: ArrayView2<f64>) -> Result<()> {
    let mut line = String::new();
    for row in m.rows() {
        line.clear();
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&format_g17(*v));
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_matrix_csv_file(path: &Path, m: ArrayView2<f64>) -> Result<()> {
    write_matrix_csv(BufWriter::new(File::create(path)?), m)
}

/// Parse comma-separated numeric rows. All rows must have the same arity.
/// `source` names the input in error messages; line numbers are 1-based
/// and count the skipped header line.
pub fn read_matrix_csv<R: Read>(reader: R, header: bool, source: &str) -> Result<Array2<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut data = Vec::new();
    let mut ncols = None;
    let mut nrows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            path: source.into(),
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: source.into(),
            line,
            msg,
        };
        match ncols {
            None => ncols = Some(rec.len()),
            Some(n) if n != rec.len() => {
                return Err(parse_err(format!("expected {n} fields, found {}", rec.len())));
            }
            _ => {}
        }
        for field in rec.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(format!("not a number: {field:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(format!("non-finite value: {field:?}")));
            }
            data.push(v);
        }
        nrows += 1;
    }
    let Some(ncols) = ncols else {
        return Err(Error::Empty(source.into()));
    };
    Ok(Array2::from_shape_vec((nrows, ncols), data).expect("rows checked for equal arity"))
}

pub fn read_matrix_csv_file(path: &Path, header: bool) -> Result<Array2<f64>> {
    read_matrix_csv(File::open(path)?, header, &path.display().to_string())
}

/// JSON form of a point set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSetEnvelope {
    pub generator: String,
    pub s: usize,
    pub d: usize,
    pub seed_or_start: Option<u64>,
    pub points: Vec<Vec<f64>>,
}

impl PointSetEnvelope {
    pub fn from_matrix(generator: impl Into<String>, seed_or_start: Option<u64>, m: ArrayView2<f64>) -> Self {
        Self {
            generator: generator.into(),
            s: m.nrows(),
            d: m.ncols(),
            seed_or_start,
            points: m.rows().into_iter().map(|r| r.to_vec()).collect(),
        }
    }

    pub fn to_matrix(&self) -> Result<Array2<f64>> {
        if self.points.len() != self.s {
            return Err(Error::DimensionMismatch {
                expected: self.s,
                got: self.points.len(),
            });
        }
        let mut flat = Vec::with_capacity(self.s * self.d);
        for row in &self.points {
            if row.len() != self.d {
                return Err(Error::DimensionMismatch {
                    expected: self.d,
                    got: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        Ok(Array2::from_shape_vec((self.s, self.d), flat).expect("shape checked"))
    }
}

impl From<&UnitPointSet> for PointSetEnvelope {
    fn from(set: &UnitPointSet) -> Self {
        Self::from_matrix(set.generator.name(), Some(set.seed_or_start), set.points.view())
    }
}

impl From<&FrequencySet> for PointSetEnvelope {
    fn from(set: &FrequencySet) -> Self {
        Self::from_matrix(set.provenance.clone(), None, set.points.view())
    }
}
