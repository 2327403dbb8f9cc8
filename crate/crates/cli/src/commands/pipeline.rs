use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use fes_core::analysis::{
    calibrate as fit_calibration, unmix, CalibrationMatrix, ConcentrationVector,
};
use fes_core::{format_f64, FesError};

use super::{concentration_rows, measure, measurement_seed};
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::output::{csv_table, sha256_hex, Outputs, ResultEnvelope, SpectrumRecord};

pub fn calibration_path(cfg: &ExperimentConfig, out_dir: &Path) -> PathBuf {
    cfg.analysis
        .calibration
        .clone()
        .unwrap_or_else(|| out_dir.join("calibration.json"))
}

/// Training runs with every species present in every run (absent ones at 0).
fn training_runs(cfg: &ExperimentConfig) -> CliResult<Vec<BTreeMap<String, f64>>> {
    let runs: Vec<BTreeMap<String, f64>> = if cfg.training.is_empty() {
        cfg.species
            .keys()
            .map(|k| [(k.clone(), 1.0)].into())
            .collect()
    } else {
        cfg.training.clone()
    };
    if runs.is_empty() {
        return Err(CliError::Config(
            "calibration needs [species] or [[training]] runs".into(),
        ));
    }
    let species: BTreeSet<&String> = runs.iter().flat_map(|r| r.keys()).collect();
    Ok(runs
        .iter()
        .map(|r| {
            species
                .iter()
                .map(|s| ((*s).clone(), r.get(*s).copied().unwrap_or(0.0)))
                .collect()
        })
        .collect())
}

pub fn calibrate(cfg: &ExperimentConfig, out: &mut Outputs) -> CliResult<ResultEnvelope> {
    let bands = cfg.require_bands()?.to_vec();
    let base = cfg.require_sensor()?.build()?;
    let seed = measurement_seed(cfg);
    let reference = measure(cfg, &base, &BTreeMap::new(), seed)?;
    let mut training = Vec::new();
    for run in training_runs(cfg)? {
        let spec = measure(cfg, &base, &run, seed)?;
        training.push((ConcentrationVector::new(run), spec));
    }
    let calib = fit_calibration(&training, &reference, &bands).map_err(|e| match e {
        FesError::DegenerateCalibration { .. } => {
            CliError::Degenerate(format!("calibration rejected: {e}"))
        }
        other => other.into(),
    })?;

    let target = calibration_path(cfg, out.dir());
    let json = calib.to_json().into_bytes();
    let mut env = ResultEnvelope::new("calibrate", cfg);
    env.metric("condition_number", calib.condition_number);
    env.metric("bands", calib.rows as f64);
    env.metric("species", calib.cols as f64);
    env.spectra
        .push(SpectrumRecord::new("reference", "ohm^2/Hz", &reference));
    for (conc, spec) in &training {
        let label = conc
            .values
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(",");
        env.spectra.push(SpectrumRecord::new(
            &format!("training[{label}]"),
            "ohm^2/Hz",
            spec,
        ));
    }
    env.inputs
        .insert("calibration_provenance".into(), calib.provenance.clone());

    let mut header = vec!["band_lo_hz", "band_hi_hz"];
    header.extend(calib.species.iter().map(String::as_str));
    let rows: Vec<Vec<String>> = (0..calib.rows)
        .map(|i| {
            let mut row = vec![format_f64(calib.bands[i].0), format_f64(calib.bands[i].1)];
            row.extend((0..calib.cols).map(|j| format_f64(calib.get(i, j))));
            row
        })
        .collect();
    out.add_csv("calibration_matrix.csv", csv_table(&header, &rows));

    if target.parent() == Some(out.dir()) {
        let name = target
            .file_name()
            .expect("calibration path has a file name")
            .to_string_lossy()
            .into_owned();
        out.add(&name, json);
    } else {
        if let Some(dir) = target.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
        }
        crate::output::write_atomic(&target, &json)?;
    }
    Ok(env)
}

pub fn fes_pipeline(cfg: &ExperimentConfig, out: &mut Outputs) -> CliResult<ResultEnvelope> {
    let path = calibration_path(cfg, out.dir());
    if !path.exists() {
        return Err(CliError::MissingCalibration(path));
    }
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(path.display(), e))?;
    let calib = CalibrationMatrix::from_json(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if cfg.gases.is_empty() {
        return Err(CliError::Config(
            "[gases] must list at least one species to measure".into(),
        ));
    }

    let base = cfg.require_sensor()?.build()?;
    let seed = measurement_seed(cfg);
    let reference = measure(cfg, &base, &BTreeMap::new(), seed)?;
    let measured = measure(cfg, &base, &cfg.gases, seed)?;
    let conc = unmix(&measured, &reference, &calib, cfg.analysis.nonneg)?;

    let mut env = ResultEnvelope::new("fes-pipeline", cfg);
    env.inputs
        .insert("calibration".into(), sha256_hex(text.as_bytes()));
    env.inputs
        .insert("calibration_provenance".into(), calib.provenance.clone());
    env.metric("residual_norm", conc.residual_norm);
    env.metric("condition_number", calib.condition_number);
    env.metric("n_averages", measured.n_averages as f64);
    env.spectra
        .push(SpectrumRecord::new("reference", "ohm^2/Hz", &reference));
    env.spectra
        .push(SpectrumRecord::new("measured", "ohm^2/Hz", &measured));

    out.add_csv("pipeline_reference_psd.csv", reference.to_csv_bytes());
    out.add_csv("pipeline_measured_psd.csv", measured.to_csv_bytes());
    out.add_csv(
        "pipeline_concentrations.csv",
        csv_table(
            &["species", "concentration"],
            &concentration_rows(&conc.values),
        ),
    );
    env.concentrations = Some(conc);
    Ok(env)
}
