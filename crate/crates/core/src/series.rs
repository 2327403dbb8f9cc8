//! Uniformly sampled real-valued records.
//!
//! Two on-disk forms are supported:
//!
//! * CSV with header `t_seconds,value`, one row per sample, `t = i / fs`.
//! * A binary record, little-endian throughout:
//!
//! ```text
//! offset  size  field
//! 0       6     magic "FESTS1"
//! 6       8     sample rate fs (f64)
//! 14      8     sample count n (u64)
//! 22      8*n   samples (f64)
//! ```

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, invalid, FesError, Result};

pub const BINARY_MAGIC: &[u8; 6] = b"FESTS1";

/// Shortest round-trip text for `x`, in exponent form outside `[1e-3, 1e7)`.
pub fn format_f64(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-3..1e7).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    samples: Vec<f64>,
    sample_rate: f64,
    unit: String,
}

impl TimeSeries {
    pub fn new(samples: Vec<f64>, sample_rate: f64, unit: impl Into<String>) -> Result<Self> {
        ensure_positive("sample rate", sample_rate)?;
        if samples.len() < 2 {
            return Err(invalid(format!(
                "a time series needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(invalid(format!("sample {i} is not finite")));
        }
        Ok(TimeSeries {
            samples,
            sample_rate,
            unit: unit.into(),
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn unit(&self) -> &str {
        &self.unit
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Element-wise sum of two series with identical rate and length.
    pub fn add(&self, other: &TimeSeries) -> Result<TimeSeries> {
        if self.len() != other.len() || self.sample_rate != other.sample_rate {
            return Err(invalid("cannot add series with different length or sample rate"));
        }
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| a + b)
            .collect();
        TimeSeries::new(samples, self.sample_rate, self.unit.clone())
    }

    pub fn scaled(&self, factor: f64, unit: impl Into<String>) -> Result<TimeSeries> {
        TimeSeries::new(
            self.samples.iter().map(|x| x * factor).collect(),
            self.sample_rate,
            unit,
        )
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t_seconds", "value"]).map_err(csv_err)?;
        for (i, x) in self.samples.iter().enumerate() {
            let t = i as f64 / self.sample_rate;
            w.write_record([format_f64(t), format_f64(*x)]).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV form. The sample rate is recovered from the first time step.
    pub fn read_csv<R: Read>(reader: R, unit: impl Into<String>) -> Result<TimeSeries> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers().map_err(csv_err)?.clone();
        if headers.len() != 2 || &headers[0] != "t_seconds" || &headers[1] != "value" {
            return Err(FesError::Format(format!(
                "expected header `t_seconds,value`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut times = Vec::new();
        let mut samples = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let parse = |s: &str| -> Result<f64> {
                s.trim().parse::<f64>().map_err(|e| {
                    FesError::Format(format!("row {}: cannot parse `{s}`: {e}", line + 2))
                })
            };
            times.push(parse(&rec[0])?);
            samples.push(parse(&rec[1])?);
        }
        if times.len() < 2 {
            return Err(FesError::Format("CSV series needs at least 2 rows".into()));
        }
        let dt = times[1] - times[0];
        if !(dt > 0.0) {
            return Err(FesError::Format("time column must be increasing".into()));
        }
        let mut fs = 1.0 / dt;
        // decimal time stamps lose the last bits of 1/fs; snap integral rates back
        if (fs - fs.round()).abs() <= 1e-9 * fs {
            fs = fs.round();
        }
        TimeSeries::new(samples, fs, unit)
    }

    pub fn write_binary<W: Write>(&self, mut writer: W) -> Result<()> {
        writer.write_all(BINARY_MAGIC)?;
        writer.write_all(&self.sample_rate.to_le_bytes())?;
        writer.write_all(&(self.samples.len() as u64).to_le_bytes())?;
        for x in &self.samples {
            writer.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut reader: R, unit: impl Into<String>) -> Result<TimeSeries> {
        let mut magic = [0u8; 6];
        reader.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(FesError::Format("bad magic, expected FESTS1".into()));
        }
        let mut word = [0u8; 8];
        reader.read_exact(&mut word)?;
        let fs = f64::from_le_bytes(word);
        reader.read_exact(&mut word)?;
        let n = u64::from_le_bytes(word) as usize;
        let mut samples = Vec::with_capacity(n.min(1 << 26));
        for _ in 0..n {
            reader.read_exact(&mut word)?;
            samples.push(f64::from_le_bytes(word));
        }
        let mut rest = Vec::new();
        reader.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(FesError::Format(format!("{} trailing bytes after samples", rest.len())));
        }
        TimeSeries::new(samples, fs, unit)
    }

    pub fn to_binary_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(22 + 8 * self.samples.len());
        self.write_binary(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }
}

fn csv_err(e: csv::Error) -> FesError {
    FesError::Format(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_short_or_non_finite() {
        assert!(TimeSeries::new(vec![1.0], 10.0, "V").is_err());
        assert!(TimeSeries::new(vec![1.0, f64::NAN], 10.0, "V").is_err());
        assert!(TimeSeries::new(vec![1.0, 2.0], 0.0, "V").is_err());
    }

    #[test]
    fn binary_layout_is_little_endian() {
        let ts = TimeSeries::new(vec![1.0, -2.5], 1000.0, "V").unwrap();
        let bytes = ts.to_binary_bytes();
        assert_eq!(&bytes[..6], b"FESTS1");
        assert_eq!(&bytes[6..14], &1000.0f64.to_le_bytes());
        assert_eq!(&bytes[14..22], &2u64.to_le_bytes());
        assert_eq!(&bytes[22..30], &1.0f64.to_le_bytes());
        assert_eq!(bytes.len(), 38);
    }

    #[test]
    fn binary_rejects_bad_magic_and_trailing_bytes() {
        let ts = TimeSeries::new(vec![1.0, 2.0], 10.0, "V").unwrap();
        let mut bytes = ts.to_binary_bytes();
        bytes.push(0);
        assert!(TimeSeries::read_binary(&bytes[..], "V").is_err());
        bytes.pop();
        bytes[0] = b'X';
        assert!(TimeSeries::read_binary(&bytes[..], "V").is_err());
    }

    #[test]
    fn csv_header_is_checked() {
        let data = "time,value\n0,1\n0.1,2\n";
        assert!(TimeSeries::read_csv(data.as_bytes(), "V").is_err());
    }

    proptest! {
        #[test]
        fn both_formats_round_trip(
            samples in prop::collection::vec(-1e6f64..1e6, 2..64),
            fs_exp in 0u32..5,
        ) {
            let fs = 10f64.powi(fs_exp as i32);
            let ts = TimeSeries::new(samples, fs, "V").unwrap();
            let bin = TimeSeries::read_binary(&ts.to_binary_bytes()[..], "V").unwrap();
            prop_assert_eq!(&bin, &ts);
            let csv = TimeSeries::read_csv(&ts.to_csv_bytes()[..], "V").unwrap();
            prop_assert_eq!(csv.samples(), ts.samples());
            prop_assert!((csv.sample_rate() - fs).abs() <= 1e-9 * fs);
        }
    }
}
