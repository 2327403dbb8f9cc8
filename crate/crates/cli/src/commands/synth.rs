use fes_core::sensor::{apply_gas_mixture, render_sensor_voltage};
use fes_core::spectral::log_grid;
use fes_core::synth::render_bank;
use fes_core::{Seed, TimeSeries};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::output::{Outputs, ResultEnvelope, SpectrumRecord};

/// Renders the configured sensor and reports its expected spectrum.
pub fn synth(cfg: &ExperimentConfig, out: &mut Outputs) -> CliResult<ResultEnvelope> {
    let sensor = cfg.require_sensor()?;
    let state = apply_gas_mixture(&sensor.build()?, &cfg.gases, &cfg.species_db())?;
    let spec = cfg.synth.clone();
    let duration = spec
        .as_ref()
        .and_then(|s| s.duration)
        .or(cfg.capture.map(|c| c.t_m))
        .ok_or_else(|| CliError::Config("set synth.duration or [capture]".into()))?;
    let fs = spec
        .as_ref()
        .and_then(|s| s.fs)
        .or(cfg.capture.map(|c| c.fs))
        .ok_or_else(|| CliError::Config("set synth.fs or [capture]".into()))?;
    let f_min = spec
        .as_ref()
        .and_then(|s| s.f_min)
        .unwrap_or(1.0 / duration);
    let f_max = spec.as_ref().and_then(|s| s.f_max).unwrap_or(fs / 2.0);
    let per_decade = spec.as_ref().map_or(20, |s| s.points_per_decade);
    if !(f_min > 0.0 && f_max > f_min) || per_decade == 0 {
        return Err(CliError::Config(format!(
            "synth frequency range [{f_min}, {f_max}] with {per_decade} points per decade is empty"
        )));
    }

    let grid = log_grid(f_min, f_max, per_decade);
    let seed = Seed::new(cfg.seed).labeled("synth");
    let mut env = ResultEnvelope::new("synth", cfg);
    let resistance_psd = state.resistance_psd(&grid)?;
    env.spectra.push(SpectrumRecord::new(
        "resistance_psd",
        "ohm^2/Hz",
        &resistance_psd,
    ));
    out.add_csv("synth_resistance_psd.csv", resistance_psd.to_csv_bytes());

    let series = match sensor.bias_current {
        Some(i) => {
            let voltage_psd = state.voltage_psd(i, &grid)?;
            env.spectra
                .push(SpectrumRecord::new("voltage_psd", "V^2/Hz", &voltage_psd));
            out.add_csv("synth_voltage_psd.csv", voltage_psd.to_csv_bytes());
            render_sensor_voltage(&state, i, duration, fs, seed)?
        }
        None => {
            let dr = render_bank(
                &state.bank,
                Some(state.temperature),
                duration,
                fs,
                seed.labeled("bank"),
            )?;
            let r = dr.samples().iter().map(|x| state.mean_r + x).collect();
            TimeSeries::new(r, fs, "ohm")?
        }
    };

    let mean = series.mean();
    let variance = series
        .samples()
        .iter()
        .map(|x| (x - mean).powi(2))
        .sum::<f64>()
        / series.len() as f64;
    env.metric("mean_resistance_ohm", state.mean_r);
    env.metric("fluctuators", state.bank.len() as f64);
    env.metric("clamp_events", state.clamp_events as f64);
    env.metric(
        "expected_resistance_variance",
        state.bank.iter().map(|f| f.variance()).sum(),
    );
    env.metric("series_mean", mean);
    env.metric("series_variance", variance);
    env.metric("samples", series.len() as f64);
    env.metric("sample_rate_hz", fs);

    if out.format().csv() {
        out.add("synth_timeseries.csv", series.to_csv_bytes());
    }
    if out.format().json() {
        out.add("synth_timeseries.bin", series.to_binary_bytes());
    }
    Ok(env)
}
