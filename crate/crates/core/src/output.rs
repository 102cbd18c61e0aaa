//! CSV emission with fixed 9-significant-digit formatting, and run
//! manifests with content digests.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::engine::{Table, TableCell, TimeSeriesRecord};

pub const SERIES_HEADER: &str =
    "t_s,dT_outer_K,dT_inner_K,tip_disp_mm,ref_disp_mm,kappa_fit_per_cm,P_outer_W,P_inner_W";

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("non-finite value in column {column} of row {row}")]
    NonFinite { row: usize, column: usize },
    #[error("malformed CSV: {0}")]
    Parse(String),
}

/// Shortest rendering of `v` rounded to 9 significant digits: fixed notation
/// for exponents in [-5, 9), otherwise `d.ddde±XX`. Zero (of either sign)
/// is `0`.
pub fn format_sig(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..9).contains(&exp) {
        let m = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (8 - exp) as usize;
    trim_fraction(&format!("{v:.decimals$}")).to_string()
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn row_values(r: &TimeSeriesRecord) -> [f64; 8] {
    [
        r.t,
        r.dt_outer,
        r.dt_inner,
        r.tip_disp,
        r.ref_disp,
        r.kappa_fit,
        r.p_outer,
        r.p_inner,
    ]
}

pub fn series_csv(records: &[TimeSeriesRecord]) -> Result<String, OutputError> {
    let mut s = String::with_capacity(96 * (records.len() + 1));
    s.push_str(SERIES_HEADER);
    s.push('\n');
    for (i, r) in records.iter().enumerate() {
        let values = row_values(r);
        if let Some(column) = values.iter().position(|v| !v.is_finite()) {
            return Err(OutputError::NonFinite { row: i, column });
        }
        let cells: Vec<String> = values.iter().map(|v| format_sig(*v)).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    Ok(s)
}

/// Reads a series file written by [`series_csv`].
pub fn parse_series_csv(text: &str) -> Result<Vec<TimeSeriesRecord>, OutputError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| OutputError::Parse(e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != SERIES_HEADER {
        return Err(OutputError::Parse("unexpected header".into()));
    }
    reader
        .records()
        .map(|row| {
            let row = row.map_err(|e| OutputError::Parse(e.to_string()))?;
            let v: Vec<f64> = row
                .iter()
                .map(|c| {
                    c.parse::<f64>()
                        .map_err(|e| OutputError::Parse(format!("`{c}`: {e}")))
                })
                .collect::<Result<_, _>>()?;
            if v.len() != 8 {
                return Err(OutputError::Parse(format!(
                    "expected 8 columns, found {}",
                    v.len()
                )));
            }
            Ok(TimeSeriesRecord {
                t: v[0],
                dt_outer: v[1],
                dt_inner: v[2],
                tip_disp: v[3],
                ref_disp: v[4],
                kappa_fit: v[5],
                p_outer: v[6],
                p_inner: v[7],
            })
        })
        .collect()
}

fn cell_text(c: &TableCell) -> String {
    match c {
        TableCell::Num(v) => format_sig(*v),
        TableCell::Text(t) => t.clone(),
        TableCell::Empty => String::new(),
    }
}

pub fn table_csv(table: &Table) -> String {
    let mut s = table.columns.join(",");
    s.push('\n');
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(cell_text).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub const MANIFEST_NAME: &str = "manifest.sha256";

/// Files written into one output directory, with their digests.
#[derive(Debug)]
pub struct RunManifest {
    pub dir: PathBuf,
    pub files: Vec<(String, String)>,
}

impl RunManifest {
    pub fn create(dir: &Path) -> Result<Self, OutputError> {
        fs::create_dir_all(dir).map_err(|source| OutputError::Io {
            path: dir.into(),
            source,
        })?;
        Ok(RunManifest {
            dir: dir.into(),
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), OutputError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|source| OutputError::Io { path, source })?;
        self.files
            .push((name.into(), sha256_hex(contents.as_bytes())));
        Ok(())
    }

    /// `<digest>  <name>` lines sorted by file name.
    pub fn render(&self) -> String {
        let mut files = self.files.clone();
        files.sort();
        files
            .iter()
            .map(|(name, digest)| format!("{digest}  {name}\n"))
            .collect()
    }

    pub fn finish(self) -> Result<PathBuf, OutputError> {
        let path = self.dir.join(MANIFEST_NAME);
        fs::write(&path, self.render()).map_err(|source| OutputError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_renderings() {
        let cases = [
            (0.0, "0"),
            (-0.0, "0"),
            (1.0, "1"),
            (-2.5, "-2.5"),
            (0.1, "0.1"),
            (1.0 / 3.0, "0.333333333"),
            (123456789.4, "123456789"),
            (1234567894.0, "1.23456789e+09"),
            (0.00001234, "0.00001234"),
            (0.000001234, "1.234e-06"),
            (9.9999999999, "10"),
            (299.99999999, "300"),
            (-37.80123456789, "-37.8012346"),
        ];
        for (v, s) in cases {
            assert_eq!(format_sig(v), s, "{v}");
        }
    }

    #[test]
    fn empty_series_is_header_only() {
        assert_eq!(series_csv(&[]).unwrap(), format!("{SERIES_HEADER}\n"));
    }

    #[test]
    fn zero_record_is_a_row_of_zeros() {
        let r = TimeSeriesRecord {
            t: 0.0,
            dt_outer: 0.0,
            dt_inner: 0.0,
            tip_disp: 0.0,
            ref_disp: 0.0,
            kappa_fit: 0.0,
            p_outer: 0.0,
            p_inner: 0.0,
        };
        assert_eq!(
            series_csv(&[r]).unwrap(),
            format!("{SERIES_HEADER}\n0,0,0,0,0,0,0,0\n")
        );
    }

    #[test]
    fn non_finite_values_are_refused() {
        let r = TimeSeriesRecord {
            t: 1.0,
            dt_outer: f64::NAN,
            dt_inner: 0.0,
            tip_disp: 0.0,
            ref_disp: 0.0,
            kappa_fit: 0.0,
            p_outer: 0.0,
            p_inner: 0.0,
        };
        assert!(matches!(
            series_csv(&[r]),
            Err(OutputError::NonFinite { row: 0, column: 1 })
        ));
    }

    #[test]
    fn manifest_lists_sorted_digests() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::create(dir.path()).unwrap();
        m.write("b.csv", "x\n").unwrap();
        m.write("a.csv", "").unwrap();
        let text = m.render();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855  a.csv"
        );
        assert!(lines[1].ends_with("  b.csv"));
        let path = m.finish().unwrap();
        assert_eq!(fs::read_to_string(path).unwrap(), text);
    }

    fn sig_digits_equal(a: f64, b: f64) -> bool {
        format!("{a:.8e}") == format!("{b:.8e}")
    }

    proptest! {
        #[test]
        fn rendering_round_trips_at_nine_digits(m in -1.0f64..1.0, e in -12i32..12) {
            let v = m * 10f64.powi(e);
            let s = format_sig(v);
            let back: f64 = s.parse().unwrap();
            prop_assert!(sig_digits_equal(back, v) || v == 0.0, "{} -> {} -> {}", v, s, back);
            prop_assert_eq!(format_sig(back), s);
        }

        #[test]
        fn series_round_trip(values in prop::collection::vec(-1e4f64..1e4, 8)) {
            let r = TimeSeriesRecord {
                t: values[0].abs(), dt_outer: values[1], dt_inner: values[2], tip_disp: values[3],
                ref_disp: values[4], kappa_fit: values[5], p_outer: values[6].abs(), p_inner: values[7].abs(),
            };
            let text = series_csv(&[r]).unwrap();
            let back = parse_series_csv(&text).unwrap();
            prop_assert_eq!(back.len(), 1);
            for (a, b) in row_values(&back[0]).iter().zip(row_values(&r)) {
                prop_assert!(sig_digits_equal(*a, b) || b == 0.0);
            }
            prop_assert_eq!(series_csv(&back).unwrap(), text);
        }
    }
}
