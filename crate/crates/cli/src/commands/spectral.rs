use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use fes_core::spectral::{bispectrum, detect_plateau, welch_psd};
use fes_core::{CaptureConfig, TimeSeries, Window};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::output::{sha256_hex, Outputs, ResultEnvelope, SpectrumRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WindowArg {
    Hann,
    Rectangular,
}

#[derive(Debug, Clone, Args)]
pub struct SpectralArgs {
    /// Time series as CSV (`t_seconds,value`) or FESTS1 binary.
    #[arg(long)]
    pub input: PathBuf,
    /// Window length, s.
    #[arg(long)]
    pub t_w: Option<f64>,
    /// Analysed length, s (defaults to the whole record).
    #[arg(long)]
    pub t_m: Option<f64>,
    /// Segment overlap fraction in [0, 1).
    #[arg(long)]
    pub overlap: Option<f64>,
    #[arg(long, value_enum)]
    pub window: Option<WindowArg>,
}

fn read_series(path: &Path) -> CliResult<(TimeSeries, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path.display(), e))?;
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let ts = if is_csv {
        TimeSeries::read_csv(bytes.as_slice(), "")
    } else {
        TimeSeries::read_binary(bytes.as_slice(), "")
    }
    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok((ts, bytes))
}

/// Capture settings from the configuration, overridden by flags.
fn capture_for(
    cfg: &ExperimentConfig,
    args: &SpectralArgs,
    ts: &TimeSeries,
) -> CliResult<CaptureConfig> {
    let fs = ts.sample_rate();
    if let Some(c) = cfg.capture {
        if (c.fs - fs).abs() > 1e-9 * fs {
            return Err(CliError::Config(format!(
                "capture.fs is {} Hz but {} Hz was recorded",
                c.fs, fs
            )));
        }
    }
    let t_w = args
        .t_w
        .or(cfg.capture.map(|c| c.t_w))
        .ok_or_else(|| CliError::Config("give --t-w or a [capture] section".into()))?;
    let t_m = args
        .t_m
        .or(cfg.capture.map(|c| c.t_m))
        .unwrap_or(ts.duration());
    let mut cap = CaptureConfig::new(t_w, t_m, fs);
    if let Some(c) = cfg.capture {
        cap = cap.with_overlap(c.overlap_fraction).with_window(c.window);
    }
    if let Some(o) = args.overlap {
        cap = cap.with_overlap(o);
    }
    if let Some(w) = args.window {
        cap = cap.with_window(match w {
            WindowArg::Hann => Window::Hann,
            WindowArg::Rectangular => Window::Rectangular,
        });
    }
    cap.validate()
        .map_err(|e| CliError::Config(format!("capture: {e}")))?;
    Ok(cap)
}

pub fn psd(
    cfg: &ExperimentConfig,
    args: &SpectralArgs,
    out: &mut Outputs,
) -> CliResult<ResultEnvelope> {
    let (ts, bytes) = read_series(&args.input)?;
    let cap = capture_for(cfg, args, &ts)?;
    let est = welch_psd(&ts, &cap)?;
    let cfg = ExperimentConfig {
        capture: Some(cap),
        ..cfg.clone()
    };
    let mut env = ResultEnvelope::new("psd", &cfg);
    env.inputs.insert("input".into(), sha256_hex(&bytes));
    env.metric("n_averages", est.n_averages as f64);
    env.metric("delta_f_hz", cap.delta_f());
    let plateaus = detect_plateau(&est);
    env.metric("plateau_count", plateaus.len() as f64);
    for (i, p) in plateaus.iter().enumerate() {
        env.metric(format!("plateau_{i}.corner_hz"), p.corner_frequency);
        env.metric(format!("plateau_{i}.level"), p.plateau_level);
        env.metric(format!("plateau_{i}.decision_score"), p.decision_score);
    }
    env.spectra
        .push(SpectrumRecord::new("psd", "unit^2/Hz", &est));
    out.add_csv("psd.csv", est.to_csv_bytes());
    Ok(env)
}

pub fn bispec(
    cfg: &ExperimentConfig,
    args: &SpectralArgs,
    out: &mut Outputs,
) -> CliResult<ResultEnvelope> {
    let (ts, bytes) = read_series(&args.input)?;
    let cap = capture_for(cfg, args, &ts)?;
    let est = bispectrum(&ts, &cap)?;
    let cfg = ExperimentConfig {
        capture: Some(cap),
        ..cfg.clone()
    };
    let mut env = ResultEnvelope::new("bispec", &cfg);
    env.inputs.insert("input".into(), sha256_hex(&bytes));
    env.metric("n_averages", est.n_averages as f64);
    env.metric("segment_len", est.segment_len as f64);

    // strongest coupling away from the DC row and column
    let mut best: Option<(usize, usize, f64)> = None;
    for (k1, row) in est.bicoherence.iter().enumerate() {
        for (k2, &b) in row.iter().enumerate().skip(1) {
            if k1 > 0 && best.is_none_or(|(_, _, v)| b > v) {
                best = Some((k1, k2, b));
            }
        }
    }
    if let Some((k1, k2, b)) = best {
        env.metric("max_bicoherence", b);
        env.metric("max_bicoherence.f1_hz", est.f1_grid[k1]);
        env.metric("max_bicoherence.f2_hz", est.f2_grid[k2]);
    }
    let mut csv = Vec::new();
    est.write_csv(&mut csv)?;
    out.add_csv("bispectrum.csv", csv);
    Ok(env)
}
