//! Uniformly sampled multi-channel waveform storage and its CSV layout.
//!
//! ```text
//! # sample_rate_hz=100000
//! # key=value
//! t,source_v,line_current,...
//! 0.000000000,0e0,0e0,...
//! ```
//!
//! The time column is fixed-point with 9 decimals; channel values use the
//! shortest exponent form that round-trips the f64 exactly.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct WaveformRecord {
    sample_rate: f64,
    metadata: Vec<(String, String)>,
    time: Vec<f64>,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl WaveformRecord {
    pub fn new(sample_rate: f64, names: &[&str]) -> Self {
        Self {
            sample_rate,
            metadata: Vec::new(),
            time: Vec::new(),
            names: names.iter().map(|s| s.to_string()).collect(),
            columns: vec![Vec::new(); names.len()],
        }
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn time(&self) -> &[f64] {
        &self.time
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|k| self.columns[k].as_slice())
    }

    pub fn metadata(&self) -> &[(String, String)] {
        &self.metadata
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Sets a metadata entry, replacing an existing key.
    pub fn push_meta(&mut self, key: impl Into<String>, value: impl Into<String>) {
        let key = key.into();
        let value = value.into();
        match self.metadata.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.metadata.push((key, value)),
        }
    }

    pub fn push_row(&mut self, t: f64, values: &[f64]) {
        assert_eq!(values.len(), self.columns.len(), "row width mismatch");
        self.time.push(t);
        for (col, &v) in self.columns.iter_mut().zip(values) {
            col.push(v);
        }
    }

    /// Indices of the samples with `start <= t < end`.
    pub fn window(&self, start: f64, end: f64) -> std::ops::Range<usize> {
        let eps = 0.25 / self.sample_rate;
        let lo = self.time.partition_point(|&t| t < start - eps);
        let hi = self.time.partition_point(|&t| t < end - eps);
        lo..hi
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 + self.len() * (12 + 24 * self.names.len()));
        let _ = writeln!(out, "# sample_rate_hz={}", self.sample_rate);
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k}={v}");
        }
        out.push('t');
        for name in &self.names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (row, t) in self.time.iter().enumerate() {
            let _ = write!(out, "{t:.9}");
            for col in &self.columns {
                let _ = write!(out, ",{:e}", col[row]);
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut sample_rate = None;
        let mut metadata = Vec::new();
        let mut lines = text.lines().enumerate();
        let header = loop {
            let Some((ln, line)) = lines.next() else {
                return Err(Error::Csv("missing header row".into()));
            };
            if let Some(comment) = line.strip_prefix('#') {
                let Some((k, v)) = comment.trim().split_once('=') else {
                    return Err(Error::Csv(format!("line {}: metadata without '='", ln + 1)));
                };
                if k == "sample_rate_hz" {
                    sample_rate = Some(
                        v.parse::<f64>()
                            .map_err(|e| Error::Csv(format!("line {}: {e}", ln + 1)))?,
                    );
                } else {
                    metadata.push((k.to_string(), v.to_string()));
                }
            } else {
                break line;
            }
        };
        let sample_rate = sample_rate.ok_or_else(|| Error::Csv("missing sample_rate_hz".into()))?;
        let mut fields = header.split(',');
        if fields.next() != Some("t") {
            return Err(Error::Csv("first column must be `t`".into()));
        }
        let names: Vec<&str> = fields.collect();
        let mut record = Self::new(sample_rate, &names);
        record.metadata = metadata;
        let mut row = vec![0.0; names.len()];
        for (ln, line) in lines {
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64> {
                s.ok_or_else(|| Error::Csv(format!("line {}: short row", ln + 1)))?
                    .parse::<f64>()
                    .map_err(|e| Error::Csv(format!("line {}: {e}", ln + 1)))
            };
            let t = parse(parts.next())?;
            for slot in row.iter_mut() {
                *slot = parse(parts.next())?;
            }
            if parts.next().is_some() {
                return Err(Error::Csv(format!("line {}: long row", ln + 1)));
            }
            record.push_row(t, &row);
        }
        Ok(record)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_and_time_format() {
        let mut rec = WaveformRecord::new(1e5, &["a", "b"]);
        rec.push_meta("seed", "7");
        rec.push_row(0.0, &[1.5, -0.25]);
        rec.push_row(1e-5, &[0.0, 3e-12]);
        let csv = rec.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "# sample_rate_hz=100000");
        assert_eq!(lines[1], "# seed=7");
        assert_eq!(lines[2], "t,a,b");
        assert_eq!(lines[3], "0.000000000,1.5e0,-2.5e-1");
        assert_eq!(lines[4], "0.000010000,0e0,3e-12");
    }

    #[test]
    fn empty_record_is_header_only() {
        let rec = WaveformRecord::new(1e4, &["x"]);
        assert_eq!(rec.to_csv(), "# sample_rate_hz=10000\nt,x\n");
        assert_eq!(WaveformRecord::from_csv(&rec.to_csv()).unwrap(), rec);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(WaveformRecord::from_csv("# sample_rate_hz=1\nt,a\n0.0,1,2\n").is_err());
        assert!(WaveformRecord::from_csv("t,a\n0.0,1\n").is_err());
        assert!(WaveformRecord::from_csv("# sample_rate_hz=1\nx,a\n").is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trip(values in proptest::collection::vec((-1e6f64..1e6, -1e-3f64..1e-3), 0..40)) {
            let mut rec = WaveformRecord::new(1e5, &["big", "small"]);
            rec.push_meta("note", "x");
            for (k, (a, b)) in values.iter().enumerate() {
                rec.push_row(k as f64 * 1e-5, &[*a, *b]);
            }
            let back = WaveformRecord::from_csv(&rec.to_csv()).unwrap();
            prop_assert_eq!(back.channel("big"), rec.channel("big"));
            prop_assert_eq!(back.channel("small"), rec.channel("small"));
            prop_assert_eq!(back.metadata(), rec.metadata());
        }
    }
}
