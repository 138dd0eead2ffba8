//! CSV input and output.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use haciv_core::model::IVDataset;
use haciv_core::numerics::SymPd;
use nalgebra::{DMatrix, DVector};

use crate::error::{CliError, CliResult};

/// Reads `y1, y2, x1..xp, z1..zk` (header required, any column order).
pub fn read_dataset(path: &Path) -> CliResult<IVDataset> {
    let file = File::open(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
    parse_dataset(file, &path.display().to_string())
}

fn numbered(header: &[String], prefix: char) -> CliResult<Vec<usize>> {
    let mut cols = Vec::new();
    for j in 1.. {
        match header.iter().position(|h| *h == format!("{prefix}{j}")) {
            Some(c) => cols.push(c),
            None => break,
        }
    }
    let stray = header.iter().filter(|h| {
        h.strip_prefix(prefix).is_some_and(|n| n.parse::<usize>().is_ok_and(|n| n == 0 || n > cols.len()))
    });
    if let Some(h) = stray.into_iter().next() {
        return Err(CliError::Data(format!("column `{h}` is out of sequence ({prefix}1..{prefix}{} expected)", cols.len())));
    }
    Ok(cols)
}

pub fn parse_dataset<R: Read>(input: R, name: &str) -> CliResult<IVDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::Data(format!("{name}: {e}")))?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();
    let find = |c: &str| {
        header
            .iter()
            .position(|h| h == c)
            .ok_or_else(|| CliError::Data(format!("{name}: header has no `{c}` column")))
    };
    let (c1, c2) = (find("y1")?, find("y2")?);
    let xs = numbered(&header, 'x')?;
    let zs = numbered(&header, 'z')?;
    if zs.is_empty() {
        return Err(CliError::Data(format!("{name}: header has no instrument columns z1..zk")));
    }
    if let Some(h) = header.iter().enumerate().find(|(i, _)| ![c1, c2].contains(i) && !xs.contains(i) && !zs.contains(i)) {
        return Err(CliError::Data(format!("{name}: unrecognised column `{}`", h.1)));
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| record_error(name, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut row = Vec::with_capacity(header.len());
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                CliError::Data(format!("{name}: line {line}: column `{}`: cannot parse `{field}` as a number", header[j]))
            })?;
            if !v.is_finite() {
                return Err(CliError::Data(format!("{name}: line {line}: column `{}` is not finite", header[j])));
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!("{name}: no data rows")));
    }
    let n = rows.len();
    let col = |c: usize| DVector::from_iterator(n, rows.iter().map(|r| r[c]));
    let mat = |cs: &[usize]| DMatrix::from_fn(n, cs.len(), |i, j| rows[i][cs[j]]);
    Ok(IVDataset::new(col(c1), col(c2), mat(&xs), mat(&zs))?)
}

/// Reads a square symmetric positive definite matrix from a header-less CSV.
pub fn read_matrix(path: &Path, expected_dim: Option<usize>) -> CliResult<SymPd> {
    let file = File::open(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
    parse_matrix(file, &path.display().to_string(), expected_dim)
}

fn record_error(name: &str, e: csv::Error) -> CliError {
    match e.kind() {
        csv::ErrorKind::UnequalLengths { pos: Some(p), expected_len, len } => {
            CliError::Data(format!("{name}: line {}: expected {expected_len} fields, found {len}", p.line()))
        }
        _ => CliError::Data(format!("{name}: {e}")),
    }
}

pub fn parse_matrix<R: Read>(input: R, name: &str, expected_dim: Option<usize>) -> CliResult<SymPd> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| record_error(name, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| CliError::Data(format!("{name}: line {line}: cannot parse `{f}`"))))
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(row);
    }
    let d = rows.len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(CliError::Data(format!("{name}: expected a square matrix, got {d} rows")));
    }
    if let Some(e) = expected_dim.filter(|e| *e != d) {
        return Err(CliError::Data(format!("{name}: matrix is {d}x{d}, expected {e}x{e}")));
    }
    let m = DMatrix::from_fn(d, d, |i, j| rows[i][j]);
    SymPd::new(m).map_err(|e| CliError::Data(format!("{name}: {e}")))
}

/// A CSV writer over `--out` or standard output.
pub fn csv_writer(path: Option<&Path>) -> CliResult<csv::Writer<Box<dyn Write>>> {
    let sink: Box<dyn Write> = match path {
        Some(p) => Box::new(io::BufWriter::new(File::create(p).map_err(|e| CliError::io(p.display().to_string(), e))?)),
        None => Box::new(io::stdout().lock()),
    };
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(sink))
}

/// Shortest decimal form that reads back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

pub fn write_err(path: Option<&Path>, e: impl std::fmt::Display) -> CliError {
    let name = path.map_or_else(|| "<stdout>".to_string(), |p| p.display().to_string());
    CliError::io(name, io::Error::other(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_any_column_order() {
        let text = "z2,y1,z1,y2,x1\n1,2,3,4,1\n0,1,1,2,1\n5,1,0,3,1\n2,2,2,2,1\n1,0,4,1,1\n";
        let d = parse_dataset(text.as_bytes(), "t").unwrap();
        assert_eq!((d.n(), d.k(), d.p()), (5, 2, 1));
        assert_eq!(d.instruments()[(0, 0)], 3.0);
        assert_eq!(d.instruments()[(0, 1)], 1.0);
        assert_eq!(d.y()[(0, 1)], 4.0);
    }

    #[test]
    fn reports_line_numbers() {
        let text = "y1,y2,z1\n1,2,3\n1,x,3\n";
        let err = parse_dataset(text.as_bytes(), "d.csv").unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("`y2`"), "{err}");
        let err = parse_dataset("y1,y2,z1\n1,2,3\n1,2\n".as_bytes(), "d.csv").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn header_problems() {
        assert!(parse_dataset("y1,z1\n1,2\n".as_bytes(), "d").is_err());
        assert!(parse_dataset("y1,y2\n1,2\n".as_bytes(), "d").is_err());
        assert!(parse_dataset("y1,y2,z1,z3\n1,2,3,4\n".as_bytes(), "d").is_err());
        assert!(parse_dataset("y1,y2,z1,w\n1,2,3,4\n".as_bytes(), "d").is_err());
    }

    #[test]
    fn matrix_file() {
        let m = parse_matrix("# sigma\n2,1\n1,2\n".as_bytes(), "s", Some(2)).unwrap();
        assert_eq!(m.matrix()[(0, 1)], 1.0);
        assert!(parse_matrix("2,1\n1,2\n".as_bytes(), "s", Some(4)).is_err());
        assert!(parse_matrix("1,2\n2,1\n".as_bytes(), "s", None).is_err());
        assert!(parse_matrix("1,2,3\n2,1\n".as_bytes(), "s", None).is_err());
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1e-300, -2.5, 12345.678, 1.0 / 3.0] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }
}
