use fes_core::analysis::{
    classical_capacity, fes_capacity_scaling, selectivity_enhancement, CapacityQuery,
    SelectivityMode,
};
use fes_core::format_f64;
use fes_core::sensor::min_measurement_time;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::output::{csv_table, Outputs, ResultEnvelope};

pub fn metrics(cfg: &ExperimentConfig, out: &mut Outputs) -> CliResult<ResultEnvelope> {
    let m = cfg
        .metrics
        .as_ref()
        .ok_or_else(|| CliError::Config("the metrics command needs a [metrics] section".into()))?;
    let geometry = match (m.geometry, &cfg.sensor) {
        (Some(g), _) => g,
        (None, Some(s)) => s.geometry,
        (None, None) => return Err(CliError::Config("set metrics.geometry or [sensor]".into())),
    };
    let q = CapacityQuery {
        t_m: m.t_m,
        t_w: m.t_w,
        fs: m.fs,
        delta_f: m.delta_f.unwrap_or(1.0 / m.t_w),
        geometry,
        r: m.r,
        r0: m.r0.unwrap_or(geometry.r0),
    };

    let mut env = ResultEnvelope::new("metrics", cfg);
    let unit = if m.bits { "bits_per_s" } else { "nats_per_s" };
    env.metric(
        format!("classical_capacity_{unit}"),
        classical_capacity(&q, geometry.hooge_a, m.bits)?,
    );
    env.metric("fes_capacity_scaling", fes_capacity_scaling(&q)?);
    env.metric("min_measurement_time_s", min_measurement_time(&geometry)?);
    let modes = match m.selectivity_mode {
        Some(mode) => vec![mode],
        None => vec![SelectivityMode::Psd, SelectivityMode::Bispectrum],
    };
    for mode in modes {
        let name = match mode {
            SelectivityMode::Psd => "selectivity_psd",
            SelectivityMode::Bispectrum => "selectivity_bispectrum",
        };
        env.metric(
            name,
            selectivity_enhancement(m.per_decade, m.decades, mode)? as f64,
        );
    }

    let rows: Vec<Vec<String>> = env
        .metrics
        .iter()
        .map(|(k, v)| vec![k.clone(), format_f64(*v)])
        .collect();
    out.add_csv("metrics.csv", csv_table(&["metric", "value"], &rows));
    Ok(env)
}
