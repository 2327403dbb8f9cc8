//! Resistive gas-sensor simulator.
//!
//! A sensor is a film with a mean resistance and a bank of fluctuators that
//! describe its resistance noise (strengths in ohm^2 s). Gases act linearly:
//! each species adds `coeff * C` to the strength of selected fluctuators and
//! `dR_coeff * C` to the mean resistance. UV light thins the conduction path of
//! a shallow outer layer and adds a Lorentzian plateau. A heat/cool protocol
//! loads the agent while hot and reads the noise out cold, where thermally
//! activated fluctuators are slowed down.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_positive, invalid, Result};
use crate::seed::Seed;
use crate::series::TimeSeries;
use crate::spectral::SpectrumEstimate;
use crate::synth::{self, Fluctuator, BOLTZMANN};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorGeometry {
    pub surface_a_s: f64,
    pub thickness_d: f64,
    pub diffusion_d: f64,
    pub r0: f64,
    pub hooge_a: f64,
}

impl SensorGeometry {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("surface A_S", self.surface_a_s)?;
        ensure_positive("thickness d", self.thickness_d)?;
        ensure_positive("diffusion coefficient D", self.diffusion_d)?;
        ensure_positive("reference resistance R0", self.r0)?;
        ensure_positive("Hooge parameter", self.hooge_a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasSpecies {
    #[serde(default)]
    pub name: String,
    /// `(fluctuator index, strength change per unit concentration)`.
    pub band_coeffs: Vec<(usize, f64)>,
    #[serde(rename = "dR_coeff", default)]
    pub dr_coeff: f64,
    /// Optional saturating response `C / (1 + C / C_sat)`; linear when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saturation: Option<f64>,
}

impl GasSpecies {
    pub fn validate(&self) -> Result<()> {
        if self.band_coeffs.iter().any(|(_, c)| !c.is_finite()) || !self.dr_coeff.is_finite() {
            return Err(invalid(format!("species `{}` has non-finite coefficients", self.name)));
        }
        if self.band_coeffs.iter().all(|(_, c)| *c == 0.0) && self.dr_coeff == 0.0 {
            return Err(invalid(format!("species `{}` has no nonzero coefficient", self.name)));
        }
        if let Some(cs) = self.saturation {
            ensure_positive("saturation concentration", cs)?;
        }
        Ok(())
    }

    fn response(&self, concentration: f64) -> f64 {
        match self.saturation {
            Some(cs) => concentration / (1.0 + concentration / cs),
            None => concentration,
        }
    }
}

pub type SpeciesDb = BTreeMap<String, GasSpecies>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UvConfig {
    pub intensity: f64,
    pub saturation_intensity: f64,
    pub wavelength_nm: f64,
    pub penetration_fraction: f64,
    pub plateau_corner_hz: f64,
    /// Relative resistance drop of the illuminated layer at full drive.
    pub modulation_depth: f64,
    /// Plateau strength at full drive, relative to the dark PSD at the corner.
    pub plateau_gain: f64,
}

impl Default for UvConfig {
    fn default() -> Self {
        UvConfig {
            intensity: 0.0,
            saturation_intensity: 1.0,
            wavelength_nm: 365.0,
            penetration_fraction: 0.01,
            plateau_corner_hz: 10.0,
            modulation_depth: 0.3,
            plateau_gain: 40.0,
        }
    }
}

impl UvConfig {
    pub fn validate(&self) -> Result<()> {
        ensure_finite("UV intensity", self.intensity)?;
        if self.intensity < 0.0 {
            return Err(invalid("UV intensity must be non-negative"));
        }
        ensure_positive("UV saturation intensity", self.saturation_intensity)?;
        if !(self.penetration_fraction > 0.0 && self.penetration_fraction <= 1.0) {
            return Err(invalid("penetration fraction must lie in (0, 1]"));
        }
        ensure_positive("plateau corner", self.plateau_corner_hz)?;
        if !(0.0..1.0).contains(&self.modulation_depth) {
            return Err(invalid("modulation depth must lie in [0, 1)"));
        }
        ensure_finite("plateau gain", self.plateau_gain)?;
        if self.plateau_gain < 0.0 {
            return Err(invalid("plateau gain must be non-negative"));
        }
        Ok(())
    }

    /// Saturating drive `I / (I + I_sat)`.
    pub fn drive(&self) -> f64 {
        self.intensity / (self.intensity + self.saturation_intensity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorState {
    pub geometry: SensorGeometry,
    pub bank: Vec<Fluctuator>,
    pub mean_r: f64,
    pub temperature: f64,
    pub uv: UvConfig,
    /// Whether `uv` has already been folded into `mean_r` and `bank`.
    #[serde(default)]
    pub uv_applied: bool,
    /// Fluctuator strengths that had to be clamped to stay positive.
    #[serde(default)]
    pub clamp_events: usize,
}

impl SensorState {
    pub fn new(geometry: SensorGeometry, bank: Vec<Fluctuator>, temperature: f64) -> Result<Self> {
        let s = SensorState {
            mean_r: geometry.r0,
            geometry,
            bank,
            temperature,
            uv: UvConfig::default(),
            uv_applied: false,
            clamp_events: 0,
        };
        s.validate()?;
        Ok(s)
    }

    /// Sensor whose resistance noise follows the Hooge law `S_R / R^2 = A / f`
    /// across the corner frequencies of a log-uniform bank.
    ///
    /// A bank with `m` equal-variance fluctuators per decade, each of variance
    /// `v`, has `S(f) = m v / (ln 10 f)` between its corners, so
    /// `v = R0^2 A ln 10 / m`.
    pub fn with_hooge_bank(
        geometry: SensorGeometry,
        temperature: f64,
        decades: u32,
        per_decade: u32,
        tau_min: f64,
    ) -> Result<Self> {
        geometry.validate()?;
        let v = geometry.r0.powi(2) * geometry.hooge_a * std::f64::consts::LN_10 / per_decade as f64;
        let total = v * (decades * per_decade) as f64;
        let bank = synth::build_one_over_f_bank(decades, per_decade, tau_min, Some(total))?;
        SensorState::new(geometry, bank, temperature)
    }

    pub fn with_uv(mut self, uv: UvConfig) -> Result<Self> {
        uv.validate()?;
        self.uv = uv;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        ensure_positive("mean resistance", self.mean_r)?;
        ensure_positive("temperature", self.temperature)?;
        self.uv.validate()?;
        self.bank.iter().try_for_each(Fluctuator::validate)
    }

    /// Analytic one-sided resistance-noise PSD (ohm^2/Hz) at the state's temperature.
    pub fn resistance_psd(&self, f_grid: &[f64]) -> Result<SpectrumEstimate> {
        synth::superpose_psd_at(&self.bank, self.temperature, f_grid)
    }

    /// Analytic voltage PSD under DC bias: `I^2 S_R(f) + 4 k T R`.
    pub fn voltage_psd(&self, bias_current: f64, f_grid: &[f64]) -> Result<SpectrumEstimate> {
        let mut s = self.resistance_psd(f_grid)?;
        let johnson = 4.0 * BOLTZMANN * self.temperature * self.mean_r;
        s.values
            .iter_mut()
            .for_each(|v| *v = bias_current * bias_current * *v + johnson);
        Ok(s)
    }
}

/// Applies a gas mixture with the linear response model.
pub fn apply_gas_mixture(
    base: &SensorState,
    concentrations: &BTreeMap<String, f64>,
    species_db: &SpeciesDb,
) -> Result<SensorState> {
    let mut delta = vec![0.0; base.bank.len()];
    let mut delta_r = 0.0;
    for (name, &c) in concentrations {
        ensure_finite("concentration", c)?;
        if c < 0.0 {
            return Err(invalid(format!("concentration of `{name}` is negative")));
        }
        let species = species_db
            .get(name)
            .ok_or_else(|| invalid(format!("unknown species `{name}`")))?;
        species.validate()?;
        let r = species.response(c);
        for &(idx, coeff) in &species.band_coeffs {
            let slot = delta.get_mut(idx).ok_or_else(|| {
                invalid(format!(
                    "species `{name}` refers to fluctuator {idx}, bank has {}",
                    base.bank.len()
                ))
            })?;
            *slot += coeff * r;
        }
        delta_r += species.dr_coeff * r;
    }

    let mut out = base.clone();
    for (fl, d) in out.bank.iter_mut().zip(&delta) {
        let floor = fl.strength_c * 1e-12;
        let c = fl.strength_c + d;
        if c > floor {
            fl.strength_c = c;
        } else {
            fl.strength_c = floor;
            out.clamp_events += 1;
        }
    }
    out.mean_r = base.mean_r + delta_r;
    if !(out.mean_r > 0.0) {
        return Err(invalid(format!(
            "gas response drives the mean resistance to {} ohm",
            out.mean_r
        )));
    }
    Ok(out)
}

/// Folds the state's UV configuration into its resistance and fluctuator bank.
///
/// The film is two resistors in parallel: an outer layer holding
/// `penetration_fraction` of the material, whose resistance drops by
/// `modulation_depth * u`, and the unilluminated inner layer. The UV plateau
/// is a Lorentzian at `plateau_corner_hz` with strength
/// `plateau_gain * u * S_dark(corner)`, where `S_dark` is the bank spectrum
/// (or the Hooge level for an empty bank). Already-illuminated states are
/// returned unchanged.
pub fn apply_uv(state: &SensorState) -> Result<SensorState> {
    state.uv.validate()?;
    if state.uv_applied || state.uv.intensity == 0.0 {
        return Ok(state.clone());
    }
    let uv = &state.uv;
    let u = uv.drive();
    let p = uv.penetration_fraction;
    let r_outer = state.mean_r / p * (1.0 - uv.modulation_depth * u);
    let g_inner = if p < 1.0 { (1.0 - p) / state.mean_r } else { 0.0 };
    let mut out = state.clone();
    out.mean_r = 1.0 / (g_inner + 1.0 / r_outer);

    let corner = uv.plateau_corner_hz;
    let dark = if state.bank.is_empty() {
        state.mean_r.powi(2) * state.geometry.hooge_a / corner
    } else {
        state.resistance_psd(&[corner])?.values[0]
    };
    let strength = uv.plateau_gain * u * dark;
    if strength > 0.0 {
        let tau = 1.0 / (2.0 * std::f64::consts::PI * corner);
        out.bank.push(Fluctuator::new(strength, tau)?);
    }
    out.uv_applied = true;
    Ok(out)
}

/// Low-frequency disturbance present only while the heater runs
/// (convection and heater-temperature wander).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatingDisturbance {
    pub strength_c: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleHoldProtocol {
    pub heat_temperature: f64,
    pub heat_duration: f64,
    pub cold_temperature: f64,
    pub measure_duration: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disturbance: Option<HeatingDisturbance>,
}

impl SampleHoldProtocol {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("cold temperature", self.cold_temperature)?;
        ensure_positive("heat temperature", self.heat_temperature)?;
        if self.heat_temperature < self.cold_temperature {
            return Err(invalid("heat temperature must not be below the cold temperature"));
        }
        ensure_positive("heat duration", self.heat_duration)?;
        ensure_positive("measure duration", self.measure_duration)?;
        if let Some(d) = self.disturbance {
            ensure_positive("disturbance strength", d.strength_c)?;
            ensure_positive("disturbance time constant", d.tau)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleHoldRun {
    /// Resistance `R(t)` while heated, ohm.
    pub hot: TimeSeries,
    /// Resistance `R(t)` after cooling, ohm.
    pub cold: TimeSeries,
}

/// Heat with the gas present, then measure cold with the loaded bank kept.
pub fn run_sample_and_hold(
    state: &SensorState,
    protocol: &SampleHoldProtocol,
    concentrations: &BTreeMap<String, f64>,
    species_db: &SpeciesDb,
    fs: f64,
    seed: Seed,
) -> Result<SampleHoldRun> {
    protocol.validate()?;
    let loaded = apply_gas_mixture(state, concentrations, species_db)?;

    let mut hot_bank = loaded.bank.clone();
    if let Some(d) = protocol.disturbance {
        hot_bank.push(Fluctuator::new(d.strength_c, d.tau)?);
    }
    let hot = resistance_series(
        &hot_bank,
        loaded.mean_r,
        protocol.heat_temperature,
        protocol.heat_duration,
        fs,
        seed.labeled("hot"),
    )?;
    let cold = resistance_series(
        &loaded.bank,
        loaded.mean_r,
        protocol.cold_temperature,
        protocol.measure_duration,
        fs,
        seed.labeled("cold"),
    )?;
    Ok(SampleHoldRun { hot, cold })
}

fn resistance_series(
    bank: &[Fluctuator],
    mean_r: f64,
    temperature: f64,
    duration: f64,
    fs: f64,
    seed: Seed,
) -> Result<TimeSeries> {
    let dr = synth::render_bank(bank, Some(temperature), duration, fs, seed)?;
    let samples = dr.samples().iter().map(|x| mean_r + x).collect();
    TimeSeries::new(samples, fs, "ohm")
}

/// Sensor voltage under DC bias current: `I (R + dR(t)) + e_J(t)`, with the
/// Johnson noise of the mean resistance. Sub-seeds: `"bank"`, `"johnson"`.
pub fn render_sensor_voltage(
    state: &SensorState,
    bias_current: f64,
    duration: f64,
    fs: f64,
    seed: Seed,
) -> Result<TimeSeries> {
    ensure_finite("bias current", bias_current)?;
    state.validate()?;
    let dr = synth::render_bank(
        &state.bank,
        Some(state.temperature),
        duration,
        fs,
        seed.labeled("bank"),
    )?;
    let johnson_level = synth::johnson_noise_psd(state.mean_r, state.temperature)?;
    let ej = synth::white_noise(johnson_level, dr.len(), fs, seed.labeled("johnson"));
    let samples = dr
        .samples()
        .iter()
        .zip(&ej)
        .map(|(d, e)| bias_current * (state.mean_r + d) + e)
        .collect();
    TimeSeries::new(samples, fs, "V")
}

/// Diffusion time through the film, `d^2 / D`.
pub fn min_measurement_time(geom: &SensorGeometry) -> Result<f64> {
    geom.validate()?;
    Ok(geom.thickness_d * geom.thickness_d / geom.diffusion_d)
}
