//! Plateau (flat-then-falling) feature detection on log-log spectra.
//!
//! The spectrum is averaged into logarithmic bins (DC excluded) and a local
//! slope is fitted around every bin. A plateau is a maximal run of bins whose
//! local slope lies inside `(-slope_threshold, +slope_threshold)` and spans at
//! least `min_run_decades`. Its corner is where the run's fitted line meets the
//! line fitted over the steep bins that follow it; a run that reaches the top
//! of the band reports the band edge instead.
//!
//! When the spectrum sits on a falling (1/f-like) background, the background
//! is estimated as a power-law lower envelope (asymmetric least squares in
//! log-log) and a plateau only counts if its peak rises `prominence_db` above
//! the background at the corner. If the total spectrum shows no such plateau,
//! the search is repeated on the excess over the background, which exposes
//! Lorentzian bumps too weak to flatten the total.
//!
//! None of the thresholds has a physical derivation; they are tuning constants
//! with defaults that separate a 6 dB bump from a clean 1/f.

use serde::{Deserialize, Serialize};

use super::{line_fit, log_bin, weighted_line_fit, SpectrumEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlateauConfig {
    pub slope_threshold: f64,
    pub prominence_db: f64,
    pub bins_per_decade: usize,
    pub slope_half_width_decades: f64,
    pub min_run_decades: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        PlateauConfig {
            slope_threshold: 0.3,
            prominence_db: 6.0,
            bins_per_decade: 10,
            slope_half_width_decades: 0.25,
            min_run_decades: 1.0 / 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub corner_frequency: f64,
    /// Mean level over the flat run (of the excess when found on the excess).
    pub plateau_level: f64,
    /// Flatness in `(0, 1]`: `1 - |slope| / slope_threshold`.
    pub decision_score: f64,
    pub slope: f64,
    pub f_low: f64,
    pub f_high: f64,
    /// Level above the power-law background at the corner, when one was fitted.
    pub prominence_db: Option<f64>,
}

pub fn detect_plateau(spec: &SpectrumEstimate) -> Vec<Plateau> {
    detect_plateau_with(spec, &PlateauConfig::default())
}

pub fn detect_plateau_with(spec: &SpectrumEstimate, cfg: &PlateauConfig) -> Vec<Plateau> {
    let raw: Vec<(f64, f64)> = spec
        .freqs
        .iter()
        .zip(&spec.values)
        .filter(|(f, v)| **f > 0.0 && **v > 0.0)
        .map(|(f, v)| (*f, *v))
        .collect();
    if raw.len() < 2 {
        return Vec::new();
    }
    let decades = (raw[raw.len() - 1].0 / raw[0].0).log10();
    if decades < 2.0 || (raw.len() as f64) < 2.0 * decades {
        return Vec::new();
    }
    let binned = log_bin(spec, cfg.bins_per_decade);
    let pts: Vec<(f64, f64)> = binned
        .iter()
        .filter(|b| b.1 > 0.0)
        .map(|b| (b.0.log10(), b.1.log10()))
        .collect();
    if pts.len() < 4 {
        return Vec::new();
    }

    let background = lower_envelope(&pts);
    let steep_background = background.1 < -cfg.slope_threshold;
    let bg_at = |x: f64| 10f64.powf(background.0 + background.1 * x);
    let min_ratio = 10f64.powf(cfg.prominence_db / 10.0);

    let slopes = local_slopes(&pts, cfg.slope_half_width_decades);
    let mut found: Vec<Plateau> = Vec::new();
    for run in flat_runs(&pts, &slopes, &vec![true; pts.len()], cfg) {
        let (mut p, bounded, peak) = describe(&pts, &slopes, run, cfg);
        if steep_background {
            let ratio = peak / bg_at(p.corner_frequency.log10());
            p.prominence_db = Some(10.0 * ratio.log10());
            if !bounded || ratio < min_ratio {
                continue;
            }
        }
        found.push(p);
    }
    if !found.is_empty() || !steep_background {
        return found;
    }

    // excess over the background; bins where it is not clearly above the
    // background (-6 dB) cannot belong to a plateau
    let excess: Vec<(f64, f64)> = pts
        .iter()
        .map(|&(x, y)| (x, (10f64.powf(y) - bg_at(x)).max(1e-300)))
        .collect();
    let significant: Vec<bool> = excess.iter().map(|&(x, e)| e >= 0.25 * bg_at(x)).collect();
    let epts: Vec<(f64, f64)> = excess.iter().map(|&(x, e)| (x, e.log10())).collect();
    let eslopes = local_slopes(&epts, cfg.slope_half_width_decades);
    for run in flat_runs(&epts, &eslopes, &significant, cfg) {
        let (mut p, bounded, peak) = describe(&epts, &eslopes, run, cfg);
        let ratio = peak / bg_at(p.corner_frequency.log10());
        p.prominence_db = Some(10.0 * ratio.log10());
        if bounded && ratio >= min_ratio {
            found.push(p);
        }
    }
    found
}

/// Power-law lower envelope: a line in log-log fitted by asymmetric least
/// squares, points above the line weighted down.
fn lower_envelope(pts: &[(f64, f64)]) -> (f64, f64) {
    const P: f64 = 0.001;
    let mut w = vec![1.0; pts.len()];
    let mut line = line_fit(pts);
    for _ in 0..50 {
        let next: Vec<f64> = pts
            .iter()
            .map(|&(x, y)| if y > line.0 + line.1 * x { P } else { 1.0 - P })
            .collect();
        if next == w {
            break;
        }
        w = next;
        line = weighted_line_fit(pts, &w);
    }
    line
}

fn local_slopes(pts: &[(f64, f64)], half_width: f64) -> Vec<f64> {
    (0..pts.len())
        .map(|i| {
            let x0 = pts[i].0;
            let mut window: Vec<(f64, f64)> = pts
                .iter()
                .copied()
                .filter(|p| (p.0 - x0).abs() <= half_width + 1e-12)
                .collect();
            if window.len() < 3 {
                let lo = i.saturating_sub(1);
                let hi = (i + 2).min(pts.len());
                window = pts[lo..hi].to_vec();
            }
            line_fit(&window).1
        })
        .collect()
}

fn flat_runs(
    pts: &[(f64, f64)],
    slopes: &[f64],
    eligible: &[bool],
    cfg: &PlateauConfig,
) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start: Option<usize> = None;
    for i in 0..=pts.len() {
        let flat = i < pts.len() && eligible[i] && slopes[i].abs() < cfg.slope_threshold;
        match (flat, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if pts[i - 1].0 - pts[s].0 >= cfg.min_run_decades - 1e-9 {
                    runs.push((s, i - 1));
                }
                start = None;
            }
            _ => {}
        }
    }
    runs
}

/// Builds the plateau record for a run. Also returns whether a steep region
/// follows it (otherwise the run reaches the band edge) and the run's peak level.
fn describe(
    pts: &[(f64, f64)],
    slopes: &[f64],
    (s, e): (usize, usize),
    cfg: &PlateauConfig,
) -> (Plateau, bool, f64) {
    let run = &pts[s..=e];
    let (a, b) = line_fit(run);
    let level = run.iter().map(|p| 10f64.powf(p.1)).sum::<f64>() / run.len() as f64;
    let peak = run.iter().map(|p| 10f64.powf(p.1)).fold(0.0, f64::max);
    let x_end = pts[e].0;

    let follow: Vec<usize> = (e + 1..pts.len())
        .take_while(|&i| pts[i].0 <= x_end + 1.0)
        .collect();
    let steepest = follow
        .iter()
        .map(|&i| slopes[i])
        .fold(f64::INFINITY, f64::min);
    let mut corner_x = x_end;
    let mut bounded = false;
    if steepest <= -cfg.slope_threshold {
        bounded = true;
        let steep: Vec<(f64, f64)> = follow
            .iter()
            .filter(|&&i| slopes[i] <= 0.75 * steepest)
            .map(|&i| pts[i])
            .collect();
        if steep.len() >= 2 {
            let (c, d) = line_fit(&steep);
            if (b - d).abs() > 1e-9 {
                let x = (c - a) / (b - d);
                if x >= x_end - 0.5 && x <= x_end + 1.0 {
                    corner_x = x;
                }
            }
        }
    }
    let plateau = Plateau {
        corner_frequency: 10f64.powf(corner_x),
        plateau_level: level,
        decision_score: (1.0 - b.abs() / cfg.slope_threshold).clamp(f64::MIN_POSITIVE, 1.0),
        slope: b,
        f_low: 10f64.powf(pts[s].0),
        f_high: 10f64.powf(x_end),
        prominence_db: None,
    };
    (plateau, bounded, peak)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{log_grid, Normalization};

    fn spectrum(f: impl Fn(f64) -> f64) -> SpectrumEstimate {
        let freqs = log_grid(0.01, 1e4, 40);
        let values = freqs.iter().map(|&x| f(x)).collect();
        SpectrumEstimate::new(freqs, values, 1, "analytic", Normalization::Raw).unwrap()
    }

    fn bump(level_db: f64, corner: f64) -> impl Fn(f64) -> f64 {
        // 1/f background k/f with k = 1; plateau c sits level_db above k/corner
        let c = 10f64.powf(level_db / 10.0) / corner;
        move |f: f64| 1.0 / f + c / (1.0 + (f / corner).powi(2))
    }

    #[test]
    fn pure_one_over_f_has_no_plateau() {
        assert!(detect_plateau(&spectrum(|f| 3.0 / f)).is_empty());
    }

    #[test]
    fn white_spectrum_is_one_full_band_plateau() {
        let found = detect_plateau(&spectrum(|_| 2e-3));
        assert_eq!(found.len(), 1);
        let p = &found[0];
        assert!(p.f_low <= 0.011 && p.f_high >= 0.9e4, "{p:?}");
        assert!((p.plateau_level - 2e-3).abs() < 1e-12);
        assert_eq!(p.decision_score, 1.0);
    }

    #[test]
    fn lorentzian_bump_on_one_over_f_is_found_near_its_corner() {
        for (db, corner) in [(8.0, 10.0), (12.0, 3.0), (20.0, 50.0)] {
            let found = detect_plateau(&spectrum(bump(db, corner)));
            assert_eq!(found.len(), 1, "{db} dB: {found:?}");
            let err = (found[0].corner_frequency / corner).log10().abs();
            assert!(err <= 1.0 / 3.0, "{db} dB: corner {} vs {corner}", found[0].corner_frequency);
            assert!(found[0].prominence_db.unwrap() >= 6.0);
        }
    }

    #[test]
    fn weak_bump_is_rejected() {
        assert!(detect_plateau(&spectrum(bump(2.0, 10.0))).is_empty());
    }

    #[test]
    fn bare_lorentzian_is_found() {
        let found = detect_plateau(&spectrum(|f| 1.0 / (1.0 + (f / 5.0).powi(2))));
        assert_eq!(found.len(), 1);
        let err = (found[0].corner_frequency / 5.0).log10().abs();
        assert!(err <= 1.0 / 3.0, "{found:?}");
    }

    #[test]
    fn narrow_band_yields_nothing() {
        let freqs = log_grid(1.0, 50.0, 20);
        let values = vec![1.0; freqs.len()];
        let spec = SpectrumEstimate::new(freqs, values, 1, "a", Normalization::Raw).unwrap();
        assert!(detect_plateau(&spec).is_empty());
    }
}
