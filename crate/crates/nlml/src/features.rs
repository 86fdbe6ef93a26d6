//! Feature files.
//!
//! CSV: a header line `d,N`, then `N` lines `identity,view,f_1,...,f_d`.
//! Binary: `NLMLFEAT`, then `u32` version, `u32` d, `u32` N, then `N` records
//! of `i64` identity, `i32` view and `d` values, all little-endian.
//!
//! Values are written in shortest round-trip decimal form, so both formats
//! reproduce every finite `f64` bit for bit.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use nlml_core::{FeatureMatrix, IdentityLabels};

use crate::atomic::write_atomic;
use crate::codec::{ByteReader, ByteWriter};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"NLMLFEAT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureFormat {
    Csv,
    Binary,
}

impl FeatureFormat {
    /// `.csv` or `.bin`.
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("csv") => Ok(FeatureFormat::Csv),
            Some("bin") => Ok(FeatureFormat::Binary),
            _ => Err(Error::Config(format!(
                "cannot tell the feature format of {}; use a .csv or .bin extension",
                path.display()
            ))),
        }
    }
}

/// Samples together with their labels, aligned by index.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub x: FeatureMatrix,
    pub labels: IdentityLabels,
}

impl FeatureSet {
    pub fn new(x: FeatureMatrix, labels: IdentityLabels) -> Result<Self> {
        if x.count() != labels.len() {
            return Err(nlml_core::Error::DimensionMismatch {
                expected: x.count(),
                got: labels.len(),
            }
            .into());
        }
        Ok(Self { x, labels })
    }

    fn view(&self, i: usize) -> i32 {
        self.labels.view(i).unwrap_or(0)
    }
}

fn parse_error(line: u64, column: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        msg: msg.into(),
    }
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    parse_error(line, 0, e.to_string())
}

fn field<T: std::str::FromStr>(s: &str, line: u64, column: usize, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| parse_error(line, column, format!("expected {what}, got `{s}`")))
}

pub fn read_csv<R: Read>(reader: R) -> Result<FeatureSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = records
        .next()
        .ok_or_else(|| parse_error(1, 1, "missing `d,N` header"))?
        .map_err(csv_error)?;
    if header.len() != 2 {
        return Err(parse_error(1, header.len().min(3), "header must be `d,N`"));
    }
    let d: usize = field(&header[0], 1, 1, "the dimension d")?;
    let n: usize = field(&header[1], 1, 2, "the sample count N")?;
    if d == 0 {
        return Err(parse_error(1, 1, "dimension must be positive"));
    }

    let mut data = Vec::with_capacity(d.saturating_mul(n).min(1 << 24));
    let mut ids = Vec::with_capacity(n.min(1 << 20));
    let mut views = Vec::with_capacity(n.min(1 << 20));
    for rec in records {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if ids.len() == n {
            return Err(parse_error(line, 1, format!("more than the {n} samples declared")));
        }
        if rec.len() != d + 2 {
            return Err(parse_error(
                line,
                rec.len().min(d + 2) + 1,
                format!("expected {} fields, found {}", d + 2, rec.len()),
            ));
        }
        ids.push(field::<i64>(&rec[0], line, 1, "an integer identity")?);
        views.push(field::<i32>(&rec[1], line, 2, "an integer view")?);
        for (c, s) in rec.iter().enumerate().skip(2) {
            let v: f64 = field(s, line, c + 1, "a number")?;
            if !v.is_finite() {
                return Err(parse_error(line, c + 1, format!("non-finite value `{s}`")));
            }
            data.push(v);
        }
    }
    if ids.len() != n {
        return Err(parse_error(
            n as u64 + 1,
            1,
            format!("header declares {n} samples, found {}", ids.len()),
        ));
    }
    FeatureSet::new(FeatureMatrix::from_columns(d, n, data)?, IdentityLabels::new(ids, Some(views))?)
}

pub fn write_csv<W: Write>(mut w: W, set: &FeatureSet) -> std::io::Result<()> {
    let x = &set.x;
    writeln!(w, "{},{}", x.dim(), x.count())?;
    let mut line = String::new();
    for (i, s) in x.samples().enumerate() {
        line.clear();
        write!(line, "{},{}", set.labels.id(i), set.view(i)).expect("writing to a String");
        for v in s {
            write!(line, ",{v}").expect("writing to a String");
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

pub fn to_binary(set: &FeatureSet) -> Result<Vec<u8>> {
    let x = &set.x;
    let narrow = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit the binary header")))
    };
    let mut w = ByteWriter::default();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.u32(narrow(x.dim(), "dimension")?);
    w.u32(narrow(x.count(), "sample count")?);
    for (i, s) in x.samples().enumerate() {
        w.i64(set.labels.id(i));
        w.i32(set.view(i));
        w.f64s(s);
    }
    Ok(w.into_bytes())
}

pub fn from_binary(bytes: &[u8]) -> Result<FeatureSet> {
    let mut r = ByteReader::new(bytes);
    if r.take(8)? != MAGIC {
        return Err(Error::Format("not a feature file: bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported feature file version {version}")));
    }
    let d = r.u32()? as usize;
    let n = r.u32()? as usize;
    if d == 0 {
        return Err(Error::Format("dimension must be positive".into()));
    }
    r.check_fits(n, 12 + 8 * d, r.offset())?;
    let mut data = Vec::with_capacity(d * n);
    let mut ids = Vec::with_capacity(n);
    let mut views = Vec::with_capacity(n);
    for i in 0..n {
        ids.push(r.i64()?);
        views.push(r.i32()?);
        for c in 0..d {
            let v = r.f64()?;
            if !v.is_finite() {
                return Err(Error::Format(format!("non-finite value in record {}, feature {}", i + 1, c + 1)));
            }
            data.push(v);
        }
    }
    r.finish()?;
    FeatureSet::new(FeatureMatrix::from_columns(d, n, data)?, IdentityLabels::new(ids, Some(views))?)
}

pub fn load_features(path: &Path, format: FeatureFormat) -> Result<FeatureSet> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    match format {
        FeatureFormat::Csv => read_csv(bytes.as_slice()),
        FeatureFormat::Binary => from_binary(&bytes),
    }
    .map_err(|e| e.in_file(path))
}

pub fn save_features(path: &Path, format: FeatureFormat, set: &FeatureSet) -> Result<()> {
    match format {
        FeatureFormat::Csv => write_atomic(path, |w| write_csv(w, set).map_err(|e| Error::io(path, e))),
        FeatureFormat::Binary => crate::atomic::write_bytes(path, &to_binary(set)?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> FeatureSet {
        let x = FeatureMatrix::from_samples(&[[0.1, -2.0], [3.0, 4.5], [1e-300, 7.0]]).unwrap();
        FeatureSet::new(x, IdentityLabels::new(vec![0, 0, 1], Some(vec![0, 1, 0])).unwrap()).unwrap()
    }

    #[test]
    fn three_sample_csv() {
        let set = read_csv("2,3\n0,0,0.1,-2\n0,1,3,4.5\n1,0,1e-300,7\n".as_bytes()).unwrap();
        assert_eq!(set, small());
        assert_eq!((set.x.dim(), set.x.count()), (2, 3));
        assert_eq!(set.labels.ids(), &[0, 0, 1]);
    }

    #[test]
    fn csv_text_round_trip() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &small()).unwrap();
        assert_eq!(read_csv(buf.as_slice()).unwrap(), small());
    }

    #[test]
    fn nan_is_reported_at_its_coordinates() {
        let err = read_csv("2,2\n0,0,1,2\n1,0,3,NaN\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, column: 4, .. }), "{err}");
        let err = read_csv("2,1\n0,0,inf,2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, column: 3, .. }), "{err}");
    }

    #[test]
    fn malformed_csv() {
        for (text, line) in [
            ("", 1),
            ("2\n", 1),
            ("x,1\n0,0,1,2\n", 1),
            ("2,2\n0,0,1,2\n", 3),
            ("2,1\n0,0,1\n", 2),
            ("2,1\n0,0,1,2\n1,0,1,2\n", 3),
            ("2,1\nid,0,1,2\n", 2),
        ] {
            match read_csv(text.as_bytes()) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn binary_round_trip_and_corruption() {
        let bytes = to_binary(&small()).unwrap();
        assert_eq!(bytes.len(), 8 + 12 + 3 * (12 + 16));
        assert_eq!(from_binary(&bytes).unwrap(), small());
        assert!(matches!(from_binary(&bytes[..bytes.len() - 1]), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(from_binary(&bad).is_err());
        let mut nan = bytes;
        let at = 20 + 12;
        nan[at..at + 8].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(from_binary(&nan).is_err());
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(FeatureFormat::from_path(Path::new("a/b.CSV")).unwrap(), FeatureFormat::Csv);
        assert_eq!(FeatureFormat::from_path(Path::new("b.bin")).unwrap(), FeatureFormat::Binary);
        assert!(FeatureFormat::from_path(Path::new("b.txt")).is_err());
    }
}
