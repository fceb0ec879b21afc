//! CSV reports with 9-significant-digit numbers.

use std::path::Path;

use crate::error::{Error, Result};

/// Formats `x` with 9 significant digits, in fixed notation for moderate
/// magnitudes and exponent notation otherwise. The text parses back with
/// `str::parse::<f64>`.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let exp = x.abs().log10().floor() as i32;
    let s = if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        // rounding can carry into a new digit (9.99999999995 -> 10.00000000)
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        s
    } else {
        let s = format!("{x:.8e}");
        let (mant, e) = s.split_once('e').expect("exponent form");
        let mant = if mant.contains('.') {
            mant.trim_end_matches('0').trim_end_matches('.')
        } else {
            mant
        };
        format!("{mant}e{e}")
    };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

/// A header plus rows of text cells.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Report {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Report {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) -> Result<()> {
        if row.len() != self.header.len() {
            return Err(Error::invalid(format!(
                "row has {} cells, header has {}",
                row.len(),
                self.header.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn column(&self, name: &str) -> Result<Vec<&str>> {
        let i = self
            .column_index(name)
            .ok_or_else(|| Error::invalid(format!("no column '{name}'")))?;
        Ok(self.rows.iter().map(|r| r[i].as_str()).collect())
    }

    pub fn numeric_column(&self, name: &str) -> Result<Vec<f64>> {
        self.column(name)?
            .into_iter()
            .map(|s| {
                s.parse()
                    .map_err(|_| Error::invalid(format!("column '{name}': '{s}' is not a number")))
            })
            .collect()
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.iter().map(String::from).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Report { header, rows })
    }
}

/// Writes a matrix as headerless CSV, one row per line.
pub fn write_matrix(path: impl AsRef<Path>, m: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for row in m {
        w.write_record(row.iter().map(|&v| fmt_sig(v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Smallest 9-digit decimal that is `>= x`, as text.
fn fmt_sig_ceil(x: f64) -> String {
    let s = fmt_sig(x);
    if x == 0.0 || s.parse::<f64>().is_ok_and(|v| v >= x) {
        return s;
    }
    let unit = 10f64.powi(x.abs().log10().floor() as i32 - 8);
    let mut k = (x / unit).ceil();
    loop {
        let s = fmt_sig(k * unit);
        if s.parse::<f64>().is_ok_and(|v| v >= x) {
            return s;
        }
        k += 1.0;
    }
}

/// Writes a symmetric positive semidefinite matrix with 9-digit entries.
/// Off-diagonal rounding errors are added to the diagonal before it is
/// rounded up, so the written matrix differs from `m` by a diagonally
/// dominant perturbation and stays positive semidefinite.
pub fn write_psd_matrix(path: impl AsRef<Path>, m: &[Vec<f64>]) -> Result<()> {
    let n = m.len();
    let mut cells = vec![vec![String::new(); n]; n];
    let mut slack = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let s = fmt_sig(m[i][j]);
            let v: f64 = s.parse().expect("fmt_sig output parses");
            slack[i] += (v - m[i][j]).abs();
            cells[i][j] = s;
        }
    }
    for i in 0..n {
        // twice the slack also covers the f64 error of the sum itself
        cells[i][i] = fmt_sig_ceil(m[i][i] + 2.0 * slack[i]);
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for row in &cells {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let path = path.as_ref();
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let row = rec?
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::format(path, e.to_string()))?;
        out.push(row);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_digits() {
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(1.0), "1");
        assert_eq!(fmt_sig(0.123456789123), "0.123456789");
        assert_eq!(fmt_sig(-2.5), "-2.5");
        assert_eq!(fmt_sig(1234567891.0), "1.23456789e9");
        assert_eq!(fmt_sig(5e-7), "5e-7");
        assert_eq!(fmt_sig(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_sig(9.999999999), "10");
        for x in [0.000123456789, 98765.4321, 1e-300, -7.25e12] {
            let back: f64 = fmt_sig(x).parse().unwrap();
            assert!(((back - x) / x).abs() < 1e-8, "{x}");
        }
    }

    #[test]
    fn report_round_trip() {
        let dir = std::env::temp_dir().join(format!("agos-report-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let mut r = Report::new(["variant", "oa_mean"]);
        r.push(vec!["a,b".into(), fmt_sig(0.5)]).unwrap();
        assert!(r.push(vec!["x".into()]).is_err());
        r.write(dir.join("r.csv")).unwrap();
        let back = Report::read(dir.join("r.csv")).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.numeric_column("oa_mean").unwrap(), vec![0.5]);
        write_matrix(dir.join("m.csv"), &[vec![1.0, -0.25], vec![-0.25, 3.0]]).unwrap();
        assert_eq!(
            read_matrix(dir.join("m.csv")).unwrap(),
            vec![vec![1.0, -0.25], vec![-0.25, 3.0]]
        );
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn ceil_rounding() {
        assert_eq!(fmt_sig_ceil(0.1234567891), "0.12345679");
        assert_eq!(fmt_sig_ceil(0.5), "0.5");
        assert_eq!(fmt_sig_ceil(-0.1234567891), "-0.123456789");
        for x in [1.0 / 3.0, 2.0 / 3.0, 1e-7 / 3.0, 12345.678912345] {
            assert!(fmt_sig_ceil(x).parse::<f64>().unwrap() >= x);
        }
    }
}
