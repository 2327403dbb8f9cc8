//! Spectral estimation: one-sided Welch PSD, bispectrum and plateau detection.
//!
//! PSDs are one-sided: positive-frequency bins carry a factor 2, the DC and
//! Nyquist bins do not, so that `sum(values) * delta_f` is the variance of the
//! (de-trended) record. Frequencies are `k / t_w`, so the bin spacing is
//! exactly `1 / t_w`.

mod bispectrum;
mod plateau;

use std::io::Write;

use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, invalid, FesError, Result};
use crate::series::{format_f64, TimeSeries};

pub use bispectrum::{bispectrum, bispectrum_cell, symmetry_reduce_count, BispectrumEstimate};
pub use plateau::{detect_plateau, detect_plateau_with, Plateau, PlateauConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    Raw,
    PerUSquared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    Hann,
    Rectangular,
}

impl Window {
    pub fn label(self) -> &'static str {
        match self {
            Window::Hann => "hann",
            Window::Rectangular => "rectangular",
        }
    }

    /// Periodic (DFT-even) window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|i| {
                    0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEstimate {
    pub freqs: Vec<f64>,
    pub values: Vec<f64>,
    pub n_averages: usize,
    pub window_label: String,
    pub one_sided: bool,
    pub normalization: Normalization,
}

impl SpectrumEstimate {
    pub fn new(
        freqs: Vec<f64>,
        values: Vec<f64>,
        n_averages: usize,
        window_label: impl Into<String>,
        normalization: Normalization,
    ) -> Result<Self> {
        let s = SpectrumEstimate {
            freqs,
            values,
            n_averages,
            window_label: window_label.into(),
            one_sided: true,
            normalization,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.freqs.len() != self.values.len() {
            return Err(invalid("frequency and value arrays differ in length"));
        }
        if self.freqs.is_empty() {
            return Err(invalid("a spectrum needs at least one frequency"));
        }
        if self.n_averages < 1 {
            return Err(invalid("n_averages must be at least 1"));
        }
        if self.freqs.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(invalid("frequencies must be finite and non-negative"));
        }
        if self.freqs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("frequencies must be strictly ascending"));
        }
        if self.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(invalid("spectral values must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    /// Spacing of the first two bins (uniform grids only).
    pub fn delta_f(&self) -> Option<f64> {
        (self.freqs.len() >= 2).then(|| self.freqs[1] - self.freqs[0])
    }

    pub fn same_grid(&self, other: &SpectrumEstimate) -> bool {
        self.freqs.len() == other.freqs.len()
            && self
                .freqs
                .iter()
                .zip(&other.freqs)
                .all(|(a, b)| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300))
    }

    /// Mean PSD over bins with `f_lo <= f < f_hi`.
    pub fn band_mean(&self, f_lo: f64, f_hi: f64) -> Result<f64> {
        let (sum, count) = self
            .freqs
            .iter()
            .zip(&self.values)
            .filter(|(f, _)| **f >= f_lo && **f < f_hi)
            .fold((0.0, 0usize), |(s, c), (_, v)| (s + v, c + 1));
        if count == 0 {
            return Err(invalid(format!("no spectral bins in band [{f_lo}, {f_hi}) Hz")));
        }
        Ok(sum / count as f64)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["freq_hz", "psd"]).map_err(csv_err)?;
        for (f, v) in self.freqs.iter().zip(&self.values) {
            w.write_record([format_f64(*f), format_f64(*v)]).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }
}

pub(crate) fn csv_err(e: csv::Error) -> FesError {
    FesError::Format(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptureConfig {
    pub t_w: f64,
    pub t_m: f64,
    pub fs: f64,
    #[serde(default = "default_overlap")]
    pub overlap_fraction: f64,
    #[serde(default)]
    pub window: Window,
}

fn default_overlap() -> f64 {
    0.5
}

impl CaptureConfig {
    /// Hann window, 50% overlap.
    pub fn new(t_w: f64, t_m: f64, fs: f64) -> Self {
        CaptureConfig {
            t_w,
            t_m,
            fs,
            overlap_fraction: 0.5,
            window: Window::Hann,
        }
    }

    pub fn with_window(mut self, window: Window) -> Self {
        self.window = window;
        self
    }

    pub fn with_overlap(mut self, overlap_fraction: f64) -> Self {
        self.overlap_fraction = overlap_fraction;
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("t_w", self.t_w)?;
        ensure_positive("fs", self.fs)?;
        ensure_positive("t_m", self.t_m)?;
        if self.t_m < self.t_w {
            return Err(invalid(format!(
                "t_m ({}) must not be shorter than t_w ({})",
                self.t_m, self.t_w
            )));
        }
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return Err(invalid("overlap fraction must lie in [0, 1)"));
        }
        let n = self.t_w * self.fs;
        if (n - n.round()).abs() > 1e-6 * n.max(1.0) {
            return Err(invalid(format!(
                "t_w * fs = {n} must be an integer number of samples"
            )));
        }
        if n.round() < 2.0 {
            return Err(invalid("a window must hold at least 2 samples"));
        }
        Ok(())
    }

    pub fn segment_len(&self) -> usize {
        (self.t_w * self.fs).round() as usize
    }

    pub fn hop(&self) -> usize {
        let n = self.segment_len();
        let overlap = (self.overlap_fraction * n as f64).round() as usize;
        (n - overlap).max(1)
    }

    pub fn delta_f(&self) -> f64 {
        1.0 / self.t_w
    }

    /// Number of segments that fit in `samples` analysed samples.
    pub fn segment_count(&self, samples: usize) -> usize {
        let n = self.segment_len();
        if samples < n {
            0
        } else {
            (samples - n) / self.hop() + 1
        }
    }

    /// `t_m` long enough for `averages` segments at the configured overlap.
    pub fn t_m_for_averages(&self, averages: usize) -> f64 {
        let n = self.segment_len();
        (n + (averages.max(1) - 1) * self.hop()) as f64 / self.fs
    }
}

/// Segments of `ts` selected by `cfg`, each with its mean removed.
pub(crate) fn segments<'a>(
    ts: &'a TimeSeries,
    cfg: &CaptureConfig,
) -> Result<impl Iterator<Item = Vec<f64>> + 'a> {
    cfg.validate()?;
    if (ts.sample_rate() - cfg.fs).abs() > 1e-9 * cfg.fs {
        return Err(invalid(format!(
            "series sampled at {} Hz but capture expects {} Hz",
            ts.sample_rate(),
            cfg.fs
        )));
    }
    let n = cfg.segment_len();
    let hop = cfg.hop();
    let analysed = ts.len().min((cfg.t_m * cfg.fs).round() as usize);
    let count = cfg.segment_count(analysed);
    if count == 0 {
        return Err(invalid(format!(
            "series of {} samples is shorter than one {}-sample window",
            analysed, n
        )));
    }
    let samples = ts.samples();
    Ok((0..count).map(move |s| {
        let seg = &samples[s * hop..s * hop + n];
        let mean = seg.iter().sum::<f64>() / n as f64;
        seg.iter().map(|x| x - mean).collect()
    }))
}

/// Welch estimate: mean-removed, windowed, overlapped segments; one-sided and
/// scaled by `1 / (fs * sum(w^2))`.
pub fn welch_psd(ts: &TimeSeries, cfg: &CaptureConfig) -> Result<SpectrumEstimate> {
    let segs = segments(ts, cfg)?;
    let n = cfg.segment_len();
    let w = cfg.window.coefficients(n);
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut acc = vec![0.0; n / 2 + 1];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut count = 0usize;
    for seg in segs {
        for ((b, x), wi) in buf.iter_mut().zip(&seg).zip(&w) {
            *b = Complex64::new(x * wi, 0.0);
        }
        fft.process(&mut buf);
        for (a, z) in acc.iter_mut().zip(&buf) {
            *a += z.norm_sqr();
        }
        count += 1;
    }
    let power: f64 = w.iter().map(|x| x * x).sum();
    let scale = 1.0 / (cfg.fs * power * count as f64);
    let values = acc
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let edge = k == 0 || 2 * k == n;
            a * scale * if edge { 1.0 } else { 2.0 }
        })
        .collect();
    let freqs = (0..=n / 2).map(|k| k as f64 / cfg.t_w).collect();
    SpectrumEstimate::new(freqs, values, count, cfg.window.label(), Normalization::Raw)
}

/// Divides a raw spectrum by `U^2`.
pub fn normalize_per_bias(spec: &SpectrumEstimate, u: f64) -> Result<SpectrumEstimate> {
    if !u.is_finite() || u == 0.0 {
        return Err(invalid(format!("bias voltage must be finite and non-zero, got {u}")));
    }
    if spec.normalization != Normalization::Raw {
        return Err(invalid("spectrum is already normalized"));
    }
    let mut out = spec.clone();
    out.values.iter_mut().for_each(|v| *v /= u * u);
    out.normalization = Normalization::PerUSquared;
    Ok(out)
}

/// Inverse of [`normalize_per_bias`].
pub fn denormalize(spec: &SpectrumEstimate, u: f64) -> Result<SpectrumEstimate> {
    if !u.is_finite() || u == 0.0 {
        return Err(invalid(format!("bias voltage must be finite and non-zero, got {u}")));
    }
    if spec.normalization != Normalization::PerUSquared {
        return Err(invalid("spectrum is not normalized"));
    }
    let mut out = spec.clone();
    out.values.iter_mut().for_each(|v| *v *= u * u);
    out.normalization = Normalization::Raw;
    Ok(out)
}

/// Geometric frequency grid with `per_decade` points from `f_lo` to `f_hi`.
pub fn log_grid(f_lo: f64, f_hi: f64, per_decade: usize) -> Vec<f64> {
    let decades = (f_hi / f_lo).log10();
    let steps = (decades * per_decade as f64).round().max(1.0) as usize;
    (0..=steps)
        .map(|i| f_lo * 10f64.powf(decades * i as f64 / steps as f64))
        .collect()
}

/// Averages positive-frequency bins into logarithmic bins. Returns
/// `(f_center, mean_value, raw_bins)` with the geometric-mean frequency of the
/// member bins as the centre.
pub fn log_bin(spec: &SpectrumEstimate, per_decade: usize) -> Vec<(f64, f64, usize)> {
    let mut out: Vec<(f64, f64, usize)> = Vec::new();
    let mut current: Option<i64> = None;
    let (mut log_f, mut sum, mut count) = (0.0, 0.0, 0usize);
    for (&f, &v) in spec.freqs.iter().zip(&spec.values) {
        if f <= 0.0 {
            continue;
        }
        let bin = (f.log10() * per_decade as f64 + 1e-9).floor() as i64;
        if current != Some(bin) {
            if count > 0 {
                out.push((10f64.powf(log_f / count as f64), sum / count as f64, count));
            }
            current = Some(bin);
            log_f = 0.0;
            sum = 0.0;
            count = 0;
        }
        log_f += f.log10();
        sum += v;
        count += 1;
    }
    if count > 0 {
        out.push((10f64.powf(log_f / count as f64), sum / count as f64, count));
    }
    out
}

/// Least-squares slope of `log10(value)` against `log10(f)` over `[f_lo, f_hi]`.
pub fn loglog_slope(freqs: &[f64], values: &[f64], f_lo: f64, f_hi: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = freqs
        .iter()
        .zip(values)
        .filter(|(f, v)| **f >= f_lo && **f <= f_hi && **f > 0.0 && **v > 0.0)
        .map(|(f, v)| (f.log10(), v.log10()))
        .collect();
    if pts.len() < 2 {
        return Err(invalid("need at least two positive points to fit a slope"));
    }
    Ok(line_fit(&pts).1)
}

/// Ordinary least-squares line `y = a + b x`, returned as `(a, b)`.
pub(crate) fn line_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    weighted_line_fit(pts, &vec![1.0; pts.len()])
}

pub(crate) fn weighted_line_fit(pts: &[(f64, f64)], w: &[f64]) -> (f64, f64) {
    let sw: f64 = w.iter().sum();
    let mx = pts.iter().zip(w).map(|(p, w)| w * p.0).sum::<f64>() / sw;
    let my = pts.iter().zip(w).map(|(p, w)| w * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().zip(w).map(|(p, w)| w * (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().zip(w).map(|(p, w)| w * (p.0 - mx) * (p.1 - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - b * mx, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::Seed;
    use crate::synth::white_noise;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn noise(n: usize, fs: f64, seed: u64) -> TimeSeries {
        // unit variance: one-sided level 2/fs
        TimeSeries::new(white_noise(2.0 / fs, n, fs, Seed::new(seed)), fs, "V").unwrap()
    }

    #[test]
    fn white_noise_level_matches_parseval() {
        let fs = 1000.0;
        let ts = noise(400_000, fs, 1);
        let cfg = CaptureConfig::new(1.0, 400.0, fs);
        let psd = welch_psd(&ts, &cfg).unwrap();
        let inner = &psd.values[1..psd.len() - 1];
        let mean = inner.iter().sum::<f64>() / inner.len() as f64;
        assert_relative_eq!(mean, 0.002, max_relative = 0.03);
        assert_eq!(psd.n_averages, 799);
    }

    #[test]
    fn sinusoid_power_is_half_amplitude_squared() {
        let fs = 1000.0;
        let amp = 3.0;
        let samples: Vec<f64> = (0..100_000)
            .map(|i| amp * (2.0 * std::f64::consts::PI * 50.3 * i as f64 / fs).sin())
            .collect();
        let ts = TimeSeries::new(samples, fs, "V").unwrap();
        for window in [Window::Hann, Window::Rectangular] {
            let psd = welch_psd(&ts, &CaptureConfig::new(2.0, 100.0, fs).with_window(window)).unwrap();
            let df = psd.delta_f().unwrap();
            let total: f64 = psd.values.iter().sum::<f64>() * df;
            assert_relative_eq!(total, amp * amp / 2.0, max_relative = 0.05);
        }
    }

    #[test]
    fn grid_contract() {
        let fs = 512.0;
        let ts = noise(4096, fs, 2);
        let cfg = CaptureConfig::new(0.5, 8.0, fs);
        let psd = welch_psd(&ts, &cfg).unwrap();
        assert_eq!(psd.delta_f().unwrap(), 2.0);
        assert_eq!(*psd.freqs.last().unwrap(), fs / 2.0);
        assert!(psd.freqs.iter().enumerate().all(|(k, f)| *f == k as f64 / 0.5));
    }

    #[test]
    fn rejects_short_series_and_bad_configs() {
        let ts = noise(100, 100.0, 3);
        assert!(welch_psd(&ts, &CaptureConfig::new(2.0, 2.0, 100.0)).is_err());
        assert!(welch_psd(&ts, &CaptureConfig::new(0.5, 0.4, 100.0)).is_err());
        assert!(welch_psd(&ts, &CaptureConfig::new(0.5, 1.0, 50.0)).is_err());
        assert!(welch_psd(&ts, &CaptureConfig::new(0.123, 1.0, 100.0)).is_err());
        assert!(welch_psd(&ts, &CaptureConfig::new(0.5, 1.0, 100.0).with_overlap(1.0)).is_err());
    }

    #[test]
    fn quadrupling_averages_halves_the_spread() {
        let fs = 256.0;
        let rel_sd = |averages: usize, seed: u64| {
            let cfg = CaptureConfig::new(1.0, 1.0, fs).with_overlap(0.0);
            let cfg = CaptureConfig { t_m: cfg.t_m_for_averages(averages), ..cfg };
            let ts = noise((cfg.t_m * fs) as usize, fs, seed);
            let psd = welch_psd(&ts, &cfg).unwrap();
            assert_eq!(psd.n_averages, averages);
            let v = &psd.values[1..psd.len() - 1];
            let m = v.iter().sum::<f64>() / v.len() as f64;
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt() / m
        };
        let ratio = rel_sd(16, 10) / rel_sd(64, 11);
        assert!((1.4..=2.6).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn normalization_examples() {
        let s = SpectrumEstimate::new(vec![0.0, 1.0], vec![4.0, 8.0], 1, "x", Normalization::Raw).unwrap();
        assert_eq!(normalize_per_bias(&s, 1.0).unwrap().values, s.values);
        let n = normalize_per_bias(&s, 2.0).unwrap();
        assert_eq!(n.values, vec![1.0, 2.0]);
        assert_eq!(n.normalization, Normalization::PerUSquared);
        assert!(normalize_per_bias(&s, 0.0).is_err());
        assert!(normalize_per_bias(&n, 2.0).is_err());
        assert_eq!(denormalize(&n, 2.0).unwrap(), s);
    }

    #[test]
    fn log_binning_and_slope() {
        let freqs: Vec<f64> = (0..=10_000).map(|k| k as f64 * 0.1).collect();
        let values: Vec<f64> = freqs.iter().map(|f| if *f > 0.0 { 1.0 / f } else { 0.0 }).collect();
        let spec = SpectrumEstimate::new(freqs.clone(), values.clone(), 1, "a", Normalization::Raw).unwrap();
        let bins = log_bin(&spec, 10);
        assert!(bins.windows(2).all(|w| w[1].0 > w[0].0));
        assert_eq!(bins.iter().map(|b| b.2).sum::<usize>(), 10_000);
        assert_relative_eq!(loglog_slope(&freqs, &values, 1.0, 100.0).unwrap(), -1.0, max_relative = 1e-12);
    }

    proptest! {
        #[test]
        fn parseval_holds_for_both_windows(seed in 0u64..1000, rect in any::<bool>()) {
            let fs = 100.0;
            let ts = noise(20_000, fs, seed);
            let window = if rect { Window::Rectangular } else { Window::Hann };
            let cfg = CaptureConfig::new(1.0, 200.0, fs).with_window(window);
            let psd = welch_psd(&ts, &cfg).unwrap();
            let total: f64 = psd.values.iter().sum::<f64>() * psd.delta_f().unwrap();
            let segs: Vec<Vec<f64>> = segments(&ts, &cfg).unwrap().collect();
            let var = segs.iter().flatten().map(|x| x * x).sum::<f64>() / (segs.len() * 100) as f64;
            let tol = if rect { 0.02 } else { 0.03 };
            prop_assert!((total - var).abs() <= tol * var, "{total} vs {var}");
        }

        #[test]
        fn normalize_round_trip(u in prop::num::f64::NORMAL.prop_filter("moderate", |u| u.abs() > 1e-6 && u.abs() < 1e6),
                                vals in prop::collection::vec(0.0f64..1e3, 1..20)) {
            let freqs: Vec<f64> = (0..vals.len()).map(|k| k as f64).collect();
            let s = SpectrumEstimate::new(freqs, vals, 1, "x", Normalization::Raw).unwrap();
            let back = denormalize(&normalize_per_bias(&s, u).unwrap(), u).unwrap();
            for (a, b) in back.values.iter().zip(&s.values) {
                prop_assert!((a - b).abs() <= 4.0 * f64::EPSILON * b.abs());
            }
        }
    }
}
