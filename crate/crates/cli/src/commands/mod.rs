//! Subcommand implementations.
//!
//! Each command computes everything first and stages its files in an
//! [`Outputs`]; nothing touches the disk until the command has succeeded.

mod budget;
mod metrics;
mod pipeline;
mod spectral;
mod synth;

use std::collections::BTreeMap;

use fes_core::instrument::{filter_through_chain, Chain, DutModel};
use fes_core::sensor::{apply_gas_mixture, run_sample_and_hold, SensorState};
use fes_core::spectral::welch_psd;
use fes_core::synth::{johnson_current_psd, johnson_noise_psd, render_bank, white_noise};
use fes_core::{format_f64, CaptureConfig, Normalization, Seed, SpectrumEstimate, TimeSeries};

pub use budget::budget;
pub use metrics::metrics;
pub use pipeline::{calibrate, fes_pipeline};
pub use spectral::{bispec, psd, SpectralArgs};
pub use synth::synth;

use crate::config::{ExperimentConfig, PipelineMode};
use crate::error::{CliError, CliResult};

/// Positive-frequency Welch grid of `cap`.
fn welch_grid(cap: &CaptureConfig) -> Vec<f64> {
    let n = cap.segment_len();
    (1..=n / 2).map(|k| k as f64 / cap.t_w).collect()
}

fn drop_dc(est: SpectrumEstimate) -> CliResult<SpectrumEstimate> {
    let keep: Vec<usize> = (0..est.len()).filter(|&k| est.freqs[k] > 0.0).collect();
    Ok(SpectrumEstimate::new(
        keep.iter().map(|&k| est.freqs[k]).collect(),
        keep.iter().map(|&k| est.values[k]).collect(),
        est.n_averages,
        est.window_label,
        est.normalization,
    )?)
}

/// Resistance-fluctuation PSD (ohm^2/Hz) of the sensor exposed to `gases`.
///
/// In analytic mode this is the expected spectrum of the fluctuator bank. In
/// simulated mode the resistance is rendered, read out through the sensor
/// bias and the configured chain, Welch-averaged and referred back to the
/// resistance. Calls with the same `seed` share their random draws, so the
/// difference between two gas mixtures is free of most sampling noise.
fn measure(
    cfg: &ExperimentConfig,
    base: &SensorState,
    gases: &BTreeMap<String, f64>,
    seed: Seed,
) -> CliResult<SpectrumEstimate> {
    let cap = *cfg.require_capture()?;
    let db = cfg.species_db();
    let loaded = apply_gas_mixture(base, gases, &db)?;
    let temperature = cfg
        .protocol
        .map(|p| p.cold_temperature)
        .unwrap_or(loaded.temperature);

    if cfg.analysis.mode == PipelineMode::Analytic {
        let state = SensorState {
            temperature,
            ..loaded
        };
        return Ok(state.resistance_psd(&welch_grid(&cap))?);
    }

    let resistance = match &cfg.protocol {
        Some(p) => {
            run_sample_and_hold(base, p, gases, &db, cap.fs, seed.labeled("sample_hold"))?.cold
        }
        None => {
            let dr = render_bank(
                &loaded.bank,
                Some(temperature),
                cap.t_m,
                cap.fs,
                seed.labeled("bank"),
            )?;
            let r = dr.samples().iter().map(|x| loaded.mean_r + x).collect();
            TimeSeries::new(r, cap.fs, "ohm")?
        }
    };
    let mean_r = loaded.mean_r;
    let n = resistance.len();
    let dut = DutModel::new(mean_r);

    // signal at the chain input and the small-signal gain from dR to it
    let (signal, sensitivity) = match &cfg.chain {
        Some(Chain::Tia(c)) => {
            let level = johnson_current_psd(mean_r, temperature)?;
            let noise = white_noise(level, n, cap.fs, seed.labeled("johnson"));
            let i: Vec<f64> = resistance
                .samples()
                .iter()
                .zip(&noise)
                .map(|(r, e)| c.v_b / r + e)
                .collect();
            (TimeSeries::new(i, cap.fs, "A")?, c.v_b / (mean_r * mean_r))
        }
        other => {
            let bias = match other {
                Some(Chain::Vnm(c)) => c.bias_current(&dut),
                _ => cfg.require_sensor()?.bias_current.ok_or_else(|| {
                    CliError::Config(
                        "sensor.bias_current is required when no [chain] is configured".into(),
                    )
                })?,
            };
            let level = johnson_noise_psd(mean_r, temperature)?;
            let noise = white_noise(level, n, cap.fs, seed.labeled("johnson"));
            let v: Vec<f64> = resistance
                .samples()
                .iter()
                .zip(&noise)
                .map(|(r, e)| bias * r + e)
                .collect();
            (TimeSeries::new(v, cap.fs, "V")?, bias)
        }
    };
    if sensitivity == 0.0 {
        return Err(CliError::Config(
            "the readout bias is zero, so resistance changes are invisible".into(),
        ));
    }
    let out = match &cfg.chain {
        Some(chain) => filter_through_chain(&signal, chain, &dut, seed.labeled("chain"))?,
        None => signal,
    };
    let mut est = drop_dc(welch_psd(&out, &cap)?)?;
    for (v, f) in est.values.iter_mut().zip(&est.freqs) {
        let h = cfg.chain.as_ref().map_or(1.0, |c| c.gain_magnitude(*f));
        *v /= (sensitivity * h).powi(2);
    }
    est.normalization = Normalization::Raw;
    Ok(est)
}

/// Seed shared by every measurement of one command run.
fn measurement_seed(cfg: &ExperimentConfig) -> Seed {
    Seed::new(cfg.seed).labeled("measure")
}

fn concentration_rows(values: &BTreeMap<String, f64>) -> Vec<Vec<String>> {
    values
        .iter()
        .map(|(k, v)| vec![k.clone(), format_f64(*v)])
        .collect()
}
