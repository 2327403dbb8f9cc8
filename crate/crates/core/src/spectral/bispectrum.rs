//! Direct (FFT-based) bispectrum estimator.
//!
//! For each mean-removed, windowed segment the transform is scaled as
//! `X_k / sqrt(fs * sum(w^2))` and the triple product `X(k1) X(k2) X*(k1+k2)`
//! is averaged over segments. Only the principal domain
//! `0 <= k2 <= k1, k1 + k2 <= n/2` is stored; every other cell of the
//! non-aliased plane follows from the six symmetries of a real signal's
//! bispectrum, see [`BispectrumEstimate::value_at`].

use rustfft::{num_complex::Complex64, FftPlanner};

use super::{segments, CaptureConfig};
use crate::error::Result;
use crate::series::{format_f64, TimeSeries};

#[derive(Debug, Clone, PartialEq)]
pub struct BispectrumEstimate {
    /// Frequencies of `k1 = 0..=n/2`.
    pub f1_grid: Vec<f64>,
    /// Frequencies of `k2 = 0..=n/2`.
    pub f2_grid: Vec<f64>,
    /// `values[k1][k2]` for `k2 <= min(k1, n/2 - k1)`.
    pub values: Vec<Vec<Complex64>>,
    /// Squared bicoherence on the same layout, in `[0, 1]`.
    pub bicoherence: Vec<Vec<f64>>,
    pub n_averages: usize,
    pub segment_len: usize,
}

impl BispectrumEstimate {
    /// Value at principal-domain indices, `None` outside it.
    pub fn value(&self, k1: usize, k2: usize) -> Option<Complex64> {
        self.values.get(k1).and_then(|row| row.get(k2)).copied()
    }

    /// Value at any bin pair, mapped into the principal domain through
    /// `B(a, b) = B(b, a) = B(a, -a-b) = conj(B(-a, -b))`. Indices are taken
    /// modulo the segment length; pairs whose sum aliases past Nyquist return
    /// `None`.
    pub fn value_at(&self, k1: i64, k2: i64) -> Option<Complex64> {
        let (p, q, conj) = canonical(k1, k2, self.segment_len as i64)?;
        let v = self.value(p, q)?;
        Some(if conj { v.conj() } else { v })
    }

    /// Iterates `(f1, f2, value)` over the principal domain, row by row.
    pub fn cells(&self) -> impl Iterator<Item = (f64, f64, Complex64)> + '_ {
        self.values.iter().enumerate().flat_map(move |(k1, row)| {
            row.iter()
                .enumerate()
                .map(move |(k2, v)| (self.f1_grid[k1], self.f2_grid[k2], *v))
        })
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["f1_hz", "f2_hz", "real", "imag"])
            .map_err(super::csv_err)?;
        for (f1, f2, v) in self.cells() {
            w.write_record([format_f64(f1), format_f64(f2), format_f64(v.re), format_f64(v.im)])
                .map_err(super::csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn wrap(k: i64, n: i64) -> i64 {
    let r = k.rem_euclid(n);
    if 2 * r > n {
        r - n
    } else {
        r
    }
}

/// Maps `(k1, k2)` to principal indices `(p, q)` and whether to conjugate.
fn canonical(k1: i64, k2: i64, n: i64) -> Option<(usize, usize, bool)> {
    let mut t = [wrap(k1, n), wrap(k2, n), wrap(-(k1 + k2), n)];
    let sum: i64 = t.iter().sum();
    if sum != 0 {
        // a Nyquist index may stand for -n/2 instead of +n/2
        let idx = t.iter().position(|&x| 2 * x == n && sum == n)?;
        t[idx] -= n;
        if t.iter().sum::<i64>() != 0 {
            return None;
        }
    }
    let negatives = t.iter().filter(|&&x| x < 0).count();
    let conj = negatives >= 2;
    if conj {
        t.iter_mut().for_each(|x| *x = -*x);
    }
    let mut pos: Vec<i64> = t.iter().copied().filter(|&x| x >= 0).collect();
    if pos.len() == 3 {
        // only (0, 0, 0) has three non-negative entries
        pos.truncate(2);
    }
    pos.sort_unstable_by(|a, b| b.cmp(a));
    Some((pos[0] as usize, pos[1] as usize, conj))
}

fn scaled_transforms(ts: &TimeSeries, cfg: &CaptureConfig) -> Result<Vec<Vec<Complex64>>> {
    let n = cfg.segment_len();
    let w = cfg.window.coefficients(n);
    let norm = (cfg.fs * w.iter().map(|x| x * x).sum::<f64>()).sqrt();
    let fft = FftPlanner::new().plan_fft_forward(n);
    Ok(segments(ts, cfg)?
        .map(|seg| {
            let mut buf: Vec<Complex64> = seg
                .iter()
                .zip(&w)
                .map(|(x, wi)| Complex64::new(x * wi / norm, 0.0))
                .collect();
            fft.process(&mut buf);
            buf
        })
        .collect())
}

pub fn bispectrum(ts: &TimeSeries, cfg: &CaptureConfig) -> Result<BispectrumEstimate> {
    let n = cfg.segment_len();
    let half = n / 2;
    let transforms = scaled_transforms(ts, cfg)?;
    let count = transforms.len();
    let shape: Vec<usize> = (0..=half).map(|k1| k1.min(half - k1) + 1).collect();
    let mut triple: Vec<Vec<Complex64>> = shape.iter().map(|&m| vec![Complex64::new(0.0, 0.0); m]).collect();
    let mut pair_power: Vec<Vec<f64>> = shape.iter().map(|&m| vec![0.0; m]).collect();
    let mut sum_power = vec![0.0; half + 1];
    for x in &transforms {
        for (k, p) in sum_power.iter_mut().enumerate() {
            *p += x[k].norm_sqr();
        }
        for k1 in 0..=half {
            for k2 in 0..shape[k1] {
                let prod = x[k1] * x[k2];
                triple[k1][k2] += prod * x[k1 + k2].conj();
                pair_power[k1][k2] += prod.norm_sqr();
            }
        }
    }
    let inv = 1.0 / count as f64;
    let mut bicoherence = Vec::with_capacity(half + 1);
    for k1 in 0..=half {
        let row: Vec<f64> = (0..shape[k1])
            .map(|k2| {
                let denom = pair_power[k1][k2] * sum_power[k1 + k2];
                if denom > 0.0 {
                    (triple[k1][k2].norm_sqr() / denom).min(1.0)
                } else {
                    0.0
                }
            })
            .collect();
        bicoherence.push(row);
        triple[k1].iter_mut().for_each(|v| *v *= inv);
    }
    let grid: Vec<f64> = (0..=half).map(|k| k as f64 / cfg.t_w).collect();
    Ok(BispectrumEstimate {
        f1_grid: grid.clone(),
        f2_grid: grid,
        values: triple,
        bicoherence,
        n_averages: count,
        segment_len: n,
    })
}

/// Direct estimate of a single cell anywhere in the plane, without using any
/// symmetry. Negative indices address the upper half of the FFT.
pub fn bispectrum_cell(ts: &TimeSeries, cfg: &CaptureConfig, k1: i64, k2: i64) -> Result<Complex64> {
    let n = cfg.segment_len() as i64;
    let transforms = scaled_transforms(ts, cfg)?;
    let idx = |k: i64| k.rem_euclid(n) as usize;
    let sum: Complex64 = transforms
        .iter()
        .map(|x| x[idx(k1)] * x[idx(k2)] * x[idx(k1 + k2)].conj())
        .sum();
    Ok(sum / transforms.len() as f64)
}

/// Independent-information estimate for `n_lines` spectral lines after the
/// sixfold bispectrum symmetry, `floor(n^2 / 6)`, clamped to at least 1.
pub fn symmetry_reduce_count(n_lines: u64) -> u64 {
    (n_lines * n_lines / 6).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::Seed;
    use crate::synth::white_noise;

    fn noise(n: usize, fs: f64, seed: u64) -> TimeSeries {
        TimeSeries::new(white_noise(2.0 / fs, n, fs, Seed::new(seed)), fs, "V").unwrap()
    }

    #[test]
    fn reduce_count_examples() {
        assert_eq!(symmetry_reduce_count(18), 54);
        assert_eq!(symmetry_reduce_count(1), 1);
        assert_eq!(symmetry_reduce_count(10_000), 16_666_666);
    }

    #[test]
    fn canonical_mapping_of_the_six_symmetries() {
        let n = 64;
        let base = canonical(10, 3, n).unwrap();
        assert_eq!(base, (10, 3, false));
        for (a, b) in [(3, 10), (10, -13), (-13, 10), (3, -13), (-13, 3)] {
            assert_eq!(canonical(a, b, n).unwrap(), (10, 3, false), "({a},{b})");
        }
        for (a, b) in [(-10, -3), (-3, -10), (-10, 13), (13, -10), (-3, 13), (13, -3)] {
            assert_eq!(canonical(a, b, n).unwrap(), (10, 3, true), "({a},{b})");
        }
        // Nyquist row and the outer (aliased) triangle
        assert_eq!(canonical(32, 0, n).unwrap(), (32, 0, false));
        assert!(canonical(30, 10, n).is_none());
        assert_eq!(canonical(0, 0, n).unwrap(), (0, 0, false));
    }

    #[test]
    fn principal_domain_matches_full_plane_estimator() {
        let fs = 64.0;
        // a skewed signal so the bispectrum is not trivially zero
        let x: Vec<f64> = white_noise(2.0 / fs, 4096, fs, Seed::new(8))
            .into_iter()
            .map(|v| v * v + v)
            .collect();
        let ts = TimeSeries::new(x, fs, "V").unwrap();
        let cfg = CaptureConfig::new(1.0, 64.0, fs);
        let est = bispectrum(&ts, &cfg).unwrap();
        for (a, b) in [(10, 3), (3, 10), (-10, -3), (13, -3), (-13, 10), (5, 5), (20, 12)] {
            let direct = bispectrum_cell(&ts, &cfg, a, b).unwrap();
            let mapped = est.value_at(a, b).unwrap();
            assert!((direct - mapped).norm() <= 1e-9 * direct.norm().max(1e-12), "({a},{b})");
        }
    }

    #[test]
    fn gaussian_noise_is_consistent_with_zero() {
        let fs = 128.0;
        let ts = noise(128 * 400, fs, 21);
        let cfg = CaptureConfig::new(1.0, 400.0, fs);
        let est = bispectrum(&ts, &cfg).unwrap();
        let psd = crate::spectral::welch_psd(&ts, &cfg).unwrap();
        // two-sided scaled power per bin is half the one-sided PSD
        let p = |k: usize| psd.values[k] / 2.0;
        let k = est.n_averages as f64;
        let mut ratios = Vec::new();
        for k1 in 2..60 {
            for k2 in 1..est.values[k1].len().min(k1) {
                let se = (p(k1) * p(k2) * p(k1 + k2) / k).sqrt();
                ratios.push(est.values[k1][k2].norm() / se);
            }
        }
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!(mean < 5.0, "mean |B| / SE = {mean}");
    }
}
