//! Experiment configuration files.
//!
//! Configurations are TOML with an explicit `schema_version`; unknown keys are
//! errors. Inside `[chain]`, any noise source may be written as
//! `{ amplifier = "name" }` to pull a voltage-noise table from the component
//! library; the resolved configuration stores the table itself.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use fes_core::analysis::{Band, SelectivityMode};
use fes_core::instrument::{Chain, ComponentLibrary, DutModel};
use fes_core::sensor::{
    apply_uv, GasSpecies, SampleHoldProtocol, SensorGeometry, SensorState, SpeciesDb, UvConfig,
};
use fes_core::{CaptureConfig, Fluctuator};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

fn default_temperature() -> f64 {
    300.0
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoogeBankSpec {
    pub decades: u32,
    pub per_decade: u32,
    pub tau_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSpec {
    pub geometry: SensorGeometry,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// DC bias current for voltage readout, A.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias_current: Option<f64>,
    /// Log-uniform bank scaled to the Hooge level of `geometry`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hooge_bank: Option<HoogeBankSpec>,
    /// Extra fluctuators appended after the Hooge bank.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fluctuators: Vec<Fluctuator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uv: Option<UvConfig>,
}

impl SensorSpec {
    /// The sensor state with UV (if any) already applied.
    pub fn build(&self) -> CliResult<SensorState> {
        let mut state = match &self.hooge_bank {
            Some(h) => SensorState::with_hooge_bank(
                self.geometry,
                self.temperature,
                h.decades,
                h.per_decade,
                h.tau_min,
            )?,
            None => SensorState::new(self.geometry, Vec::new(), self.temperature)?,
        };
        state.bank.extend(self.fluctuators.iter().cloned());
        if state.bank.is_empty() {
            return Err(CliError::Config(
                "sensor needs a `hooge_bank` or at least one entry in `fluctuators`".into(),
            ));
        }
        state.validate()?;
        if let Some(uv) = self.uv {
            state = apply_uv(&state.with_uv(uv)?)?;
        }
        Ok(state)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineMode {
    /// Expected spectra straight from the fluctuator bank, no sampling noise.
    Analytic,
    /// Rendered time series, measured through the chain and Welch-averaged.
    #[default]
    Simulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    #[serde(default)]
    pub bands: Vec<Band>,
    /// Calibration file; defaults to `calibration.json` in the output directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<PathBuf>,
    #[serde(default = "default_true")]
    pub nonneg: bool,
    #[serde(default)]
    pub mode: PipelineMode,
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        AnalysisSpec {
            bands: Vec::new(),
            calibration: None,
            nonneg: true,
            mode: PipelineMode::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    /// Record length, s (defaults to `capture.t_m`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    /// Sample rate, Hz (defaults to `capture.fs`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_max: Option<f64>,
    #[serde(default = "default_points_per_decade")]
    pub points_per_decade: usize,
}

fn default_points_per_decade() -> usize {
    20
}

fn default_margin() -> f64 {
    0.5
}

fn default_compare_frequencies() -> Vec<f64> {
    vec![0.1, 1.0, 1000.0]
}

fn default_budget_points() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSpec {
    pub f_min: f64,
    pub f_max: f64,
    #[serde(default = "default_budget_points")]
    pub points_per_decade: usize,
    /// DC current for the headroom rows, A (defaults to `V_B / R_D`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias_current: Option<f64>,
    #[serde(default = "default_margin")]
    pub margin: f64,
    /// Library amplifiers to compare pairwise.
    #[serde(default)]
    pub compare: Vec<String>,
    #[serde(default = "default_compare_frequencies")]
    pub compare_frequencies: Vec<f64>,
}

fn default_per_decade() -> u32 {
    3
}

fn default_decades() -> u32 {
    6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSpec {
    pub t_m: f64,
    pub t_w: f64,
    pub fs: f64,
    /// Frequency resolution, Hz (defaults to `1 / t_w`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_f: Option<f64>,
    /// Sensor resistance with the agent present, ohm.
    pub r: f64,
    /// Defaults to `geometry.r0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r0: Option<f64>,
    /// Defaults to `sensor.geometry`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<SensorGeometry>,
    #[serde(default = "default_per_decade")]
    pub per_decade: u32,
    #[serde(default = "default_decades")]
    pub decades: u32,
    #[serde(default)]
    pub bits: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selectivity_mode: Option<SelectivityMode>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
    #[default]
    Both,
}

impl OutputFormat {
    pub fn csv(self) -> bool {
        matches!(self, OutputFormat::Csv | OutputFormat::Both)
    }

    pub fn json(self) -> bool {
        matches!(self, OutputFormat::Json | OutputFormat::Both)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<OutputFormat>,
}

/// A full experiment description. `C` is the chain representation: raw TOML
/// while parsing, [`Chain`] once amplifier references are resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    deny_unknown_fields,
    bound(deserialize = "C: Deserialize<'de>", serialize = "C: Serialize")
)]
pub struct ExperimentConfig<C = Chain> {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensor: Option<SensorSpec>,
    #[serde(default)]
    pub species: BTreeMap<String, GasSpecies>,
    #[serde(default)]
    pub gases: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capture: Option<CaptureConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<C>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dut: Option<DutModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<SampleHoldProtocol>,
    #[serde(default)]
    pub analysis: AnalysisSpec,
    /// Concentration maps of the calibration runs.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub training: Vec<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<BudgetSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsSpec>,
    /// Where results go; not part of the experiment identity.
    #[serde(default, skip_serializing)]
    pub outputs: OutputSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            sensor: None,
            species: BTreeMap::new(),
            gases: BTreeMap::new(),
            capture: None,
            chain: None,
            dut: None,
            protocol: None,
            analysis: AnalysisSpec::default(),
            training: Vec::new(),
            synth: None,
            budget: None,
            metrics: None,
            outputs: OutputSpec::default(),
        }
    }
}

pub fn load(path: &Path, library: &ComponentLibrary) -> CliResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
    parse(&text, library).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse(text: &str, library: &ComponentLibrary) -> CliResult<ExperimentConfig> {
    let raw: ExperimentConfig<toml::Value> =
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    if raw.schema_version != SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "schema_version {} is not supported (expected {SCHEMA_VERSION})",
            raw.schema_version
        )));
    }
    let chain = match raw.chain {
        Some(mut value) => {
            resolve_amplifiers(&mut value, library)?;
            Some(
                value
                    .try_into::<Chain>()
                    .map_err(|e| CliError::Config(format!("in [chain]: {e}")))?,
            )
        }
        None => None,
    };
    let mut cfg = ExperimentConfig {
        schema_version: raw.schema_version,
        seed: raw.seed,
        sensor: raw.sensor,
        species: raw.species,
        gases: raw.gases,
        capture: raw.capture,
        chain,
        dut: raw.dut,
        protocol: raw.protocol,
        analysis: raw.analysis,
        training: raw.training,
        synth: raw.synth,
        budget: raw.budget,
        metrics: raw.metrics,
        outputs: raw.outputs,
    };
    for (name, s) in cfg.species.iter_mut() {
        if s.name.is_empty() {
            s.name = name.clone();
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn resolve_amplifiers(value: &mut toml::Value, library: &ComponentLibrary) -> CliResult<()> {
    let Some(table) = value.as_table_mut() else {
        return Err(CliError::Config("[chain] must be a table".into()));
    };
    for (key, entry) in table.iter_mut() {
        let Some(inner) = entry.as_table() else {
            continue;
        };
        let Some(name) = inner.get("amplifier") else {
            continue;
        };
        if inner.len() != 1 {
            return Err(CliError::Config(format!(
                "chain.{key}: `amplifier` cannot be combined with other keys"
            )));
        }
        let name = name
            .as_str()
            .ok_or_else(|| CliError::Config(format!("chain.{key}.amplifier must be a string")))?;
        let spec = library
            .get(name)
            .map_err(|e| CliError::Config(format!("chain.{key}: {e}")))?;
        *entry = toml::Value::try_from(spec).map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn validate(&self) -> CliResult<()> {
        for (name, s) in &self.species {
            s.validate()
                .map_err(|e| CliError::Config(format!("species.{name}: {e}")))?;
        }
        let check_species = |map: &BTreeMap<String, f64>, what: &str| -> CliResult<()> {
            for (name, c) in map {
                if !self.species.contains_key(name) {
                    return Err(CliError::Config(format!(
                        "{what} names unknown species `{name}`"
                    )));
                }
                if !(c.is_finite() && *c >= 0.0) {
                    return Err(CliError::Config(format!(
                        "{what}: concentration of `{name}` must be >= 0"
                    )));
                }
            }
            Ok(())
        };
        check_species(&self.gases, "gases")?;
        for (i, run) in self.training.iter().enumerate() {
            check_species(run, &format!("training[{i}]"))?;
        }
        if let Some(c) = &self.capture {
            c.validate()
                .map_err(|e| CliError::Config(format!("capture: {e}")))?;
        }
        if let Some(c) = &self.chain {
            c.validate()
                .map_err(|e| CliError::Config(format!("chain: {e}")))?;
        }
        if let Some(d) = &self.dut {
            d.validate()
                .map_err(|e| CliError::Config(format!("dut: {e}")))?;
        }
        if let Some(p) = &self.protocol {
            p.validate()
                .map_err(|e| CliError::Config(format!("protocol: {e}")))?;
        }
        if let Some(s) = &self.sensor {
            s.build().map_err(|e| match e {
                CliError::Config(m) => CliError::Config(format!("sensor: {m}")),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn species_db(&self) -> SpeciesDb {
        self.species.clone()
    }

    pub fn require_sensor(&self) -> CliResult<&SensorSpec> {
        self.sensor
            .as_ref()
            .ok_or_else(|| CliError::Config("this command needs a [sensor] section".into()))
    }

    pub fn require_capture(&self) -> CliResult<&CaptureConfig> {
        self.capture
            .as_ref()
            .ok_or_else(|| CliError::Config("this command needs a [capture] section".into()))
    }

    pub fn require_bands(&self) -> CliResult<&[Band]> {
        if self.analysis.bands.is_empty() {
            return Err(CliError::Config(
                "analysis.bands must list at least one band".into(),
            ));
        }
        Ok(&self.analysis.bands)
    }

    /// Canonical JSON of the configuration (outputs excluded).
    pub fn resolved_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("configuration serializes")
    }

    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.resolved_json()).expect("configuration serializes");
        crate::output::sha256_hex(&bytes)
    }
}

/// Re-reads a configuration from its resolved JSON form.
pub fn from_resolved(value: &serde_json::Value) -> CliResult<ExperimentConfig> {
    serde_json::from_value(value.clone()).map_err(|e| CliError::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
seed = 7

[sensor]
geometry = { surface_a_s = 1e-6, thickness_d = 1e-6, diffusion_d = 1e-12, r0 = 1e4, hooge_a = 1e-4 }
fluctuators = [{ strength_c = 1e-3, tau = 0.01 }]

[species.co]
band_coeffs = [[0, 1e-4]]

[gases]
co = 2.0
"#;

    #[test]
    fn minimal_config_parses_and_hashes_stably() {
        let lib = ComponentLibrary::builtin();
        let cfg = parse(MINIMAL, &lib).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.species["co"].name, "co");
        let again = from_resolved(&cfg.resolved_json()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.hash(), cfg.hash());
    }

    #[test]
    fn unknown_keys_and_species_are_rejected() {
        let lib = ComponentLibrary::builtin();
        let typo = MINIMAL.replace("seed = 7", "seed = 7\nsede = 3");
        let err = parse(&typo, &lib).unwrap_err().to_string();
        assert!(err.contains("sede"), "{err}");
        assert!(err.contains("line"), "{err}");
        let unknown = MINIMAL.replace("co = 2.0", "c0 = 2.0");
        assert!(parse(&unknown, &lib)
            .unwrap_err()
            .to_string()
            .contains("c0"));
        let version = MINIMAL.replace("schema_version = 1", "schema_version = 9");
        assert!(matches!(parse(&version, &lib), Err(CliError::Config(_))));
    }

    #[test]
    fn amplifier_references_resolve_to_tables() {
        let lib = ComponentLibrary::builtin();
        let text = format!(
            "{MINIMAL}\n[chain]\ntype = \"vnm\"\nr_a = 1e6\nc_a = 1e-5\nr_bias = 1e6\nv_bias = 9.0\ngain_stage1_db = 40.0\nlnva_evn = {{ amplifier = \"if3601\" }}\n"
        );
        let cfg = parse(&text, &lib).unwrap();
        match cfg.chain.unwrap() {
            Chain::Vnm(c) => assert_eq!(c.lnva_evn, lib.get("if3601").unwrap()),
            other => panic!("{other:?}"),
        }
        let bad = text.replace("if3601", "nope");
        assert!(parse(&bad, &lib).unwrap_err().to_string().contains("nope"));
    }
}
