//! Tabular results and their CSV form.
//!
//! CSV dialect: comma separated, `.` decimal point, 17 significant digits,
//! metadata on leading lines that start with `#`.

use std::fmt::Write as _;
use std::io::Write;

use sha2::{Digest, Sha256};

/// Formats with 17 significant digits so doubles round-trip exactly.
pub fn format_number(x: f64) -> String {
    format_digits(x, 17)
}

/// Scientific notation with `digits` significant digits (1 to 17).
pub fn format_digits(x: f64, digits: usize) -> String {
    let digits = digits.clamp(1, 17);
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.*e}", digits - 1)
    }
}

/// Hex SHA-256 of a text blob.
pub fn content_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// `(key, value)` header entries, written in order.
    pub metadata: Vec<(String, String)>,
    /// Row index and message for rows whose evaluation failed (their values
    /// are NaN).
    pub errors: Vec<(usize, String)>,
}

impl ResultTable {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            ..Self::default()
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match columns");
        self.rows.push(row);
    }

    pub fn push_error(&mut self, message: impl Into<String>) {
        let idx = self.rows.len();
        self.rows.push(vec![f64::NAN; self.columns.len()]);
        self.errors.push((idx, message.into()));
    }

    pub fn meta(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.metadata.push((key.into(), value.into()));
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }

    /// Body without metadata: header line plus rows.
    pub fn body_csv(&self) -> String {
        self.body_csv_with(17)
    }

    pub fn body_csv_with(&self, digits: usize) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(|v| format_digits(*v, digits)).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        self.write_csv_with(out, 17)
    }

    pub fn write_csv_with<W: Write>(&self, mut out: W, digits: usize) -> std::io::Result<()> {
        for (k, v) in &self.metadata {
            for (i, line) in v.lines().enumerate() {
                if i == 0 {
                    writeln!(out, "# {k}: {line}")?;
                } else {
                    writeln!(out, "#   {line}")?;
                }
            }
            if v.is_empty() {
                writeln!(out, "# {k}:")?;
            }
        }
        for (i, msg) in &self.errors {
            writeln!(out, "# error row {i}: {msg}")?;
        }
        out.write_all(self.body_csv_with(digits).as_bytes())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            let s = format_number(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(format_number(f64::NAN), "nan");
        assert_eq!(format_digits(1234.5678, 3), "1.23e3");
    }

    #[test]
    fn csv_layout() {
        let mut t = ResultTable::new(["a", "b"]);
        t.meta("config", "x = 1\ny = 2");
        t.push(vec![1.0, 2.0]);
        t.push_error("boom");
        let csv = t.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "# config: x = 1");
        assert_eq!(lines[1], "#   y = 2");
        assert_eq!(lines[2], "# error row 1: boom");
        assert_eq!(lines[3], "a,b");
        assert!(lines[5].starts_with("nan,nan"));
        assert_eq!(t.column("b").unwrap()[0], 2.0);
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(
            content_hash("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
