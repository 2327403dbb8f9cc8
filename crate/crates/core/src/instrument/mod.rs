//! Measurement-chain models for low-frequency noise measurements.
//!
//! Two front ends are covered. A voltage noise measurement ([`VnmChain`])
//! biases the device with a quasi-ideal current source (battery plus a large
//! series resistor), AC-couples the device voltage through `R_A C_A` and
//! amplifies it with a low-noise voltage amplifier. A current noise
//! measurement ([`TiaChain`]) holds the device at a bias voltage and converts
//! its current with a transimpedance stage whose feedback resistor `R_R` also
//! carries the DC bias current.
//!
//! Budgets are evaluated per frequency and itemised so that the parts always
//! add up to the total exactly. Thermal terms use the chain temperature
//! (300 K unless configured). The stage after the first amplifier is treated
//! as a noiseless gain.

mod library;
mod realize;

pub use library::{AmplifierEntry, ComponentLibrary, COMPONENT_DB_ENV};
pub use realize::filter_through_chain;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_positive, invalid, FesError, Result};
use crate::synth::BOLTZMANN;

/// Largest feedback resistance ever reported; stands in for "unbounded" when
/// the bias current vanishes.
pub const MAX_FEEDBACK_RESISTANCE: f64 = 1e15;

fn default_temperature() -> f64 {
    300.0
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    White,
    OneOverFPlusWhite,
}

/// A noise source PSD in `unit^2/Hz`.
///
/// The parametric form is `white_level * (1 + corner_frequency / f)` (or just
/// `white_level`). A table of `(f, amplitude density)` points overrides it;
/// between points the density is interpolated linearly in log-log, outside
/// the table it is held at the end values. A zero white level is a noiseless
/// source.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSourceSpec {
    #[serde(default)]
    pub kind: NoiseKind,
    #[serde(default)]
    pub white_level: f64,
    #[serde(default)]
    pub corner_frequency: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<(f64, f64)>>,
}

impl NoiseSourceSpec {
    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn white(level: f64) -> Self {
        NoiseSourceSpec {
            white_level: level,
            ..Self::default()
        }
    }

    pub fn one_over_f_plus_white(white_level: f64, corner_frequency: f64) -> Self {
        NoiseSourceSpec {
            kind: NoiseKind::OneOverFPlusWhite,
            white_level,
            corner_frequency,
            table: None,
        }
    }

    /// `points` are `(frequency, amplitude density)` pairs.
    pub fn from_table(points: Vec<(f64, f64)>) -> Result<Self> {
        let spec = NoiseSourceSpec {
            table: Some(points),
            ..Self::default()
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("white_level", self.white_level)?;
        ensure_finite("corner_frequency", self.corner_frequency)?;
        if self.white_level < 0.0 || self.corner_frequency < 0.0 {
            return Err(invalid("noise white level and corner frequency must be non-negative"));
        }
        if let Some(table) = &self.table {
            if table.is_empty() {
                return Err(invalid("noise table is empty"));
            }
            for &(f, d) in table {
                ensure_positive("noise table frequency", f)?;
                ensure_positive("noise table density", d)?;
            }
            if table.windows(2).any(|w| w[1].0 <= w[0].0) {
                return Err(invalid("noise table frequencies must be strictly ascending"));
            }
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.table.is_none() && self.white_level == 0.0
    }

    /// PSD at `f > 0`.
    pub fn psd(&self, f: f64) -> f64 {
        if let Some(table) = &self.table {
            return table_density(table, f).powi(2);
        }
        match self.kind {
            NoiseKind::White => self.white_level,
            NoiseKind::OneOverFPlusWhite => self.white_level * (1.0 + self.corner_frequency / f),
        }
    }

    pub fn density(&self, f: f64) -> f64 {
        self.psd(f).sqrt()
    }
}

fn table_density(table: &[(f64, f64)], f: f64) -> f64 {
    let first = table[0];
    let last = table[table.len() - 1];
    if f <= first.0 {
        return first.1;
    }
    if f >= last.0 {
        return last.1;
    }
    let i = table.partition_point(|p| p.0 <= f);
    let (f0, d0) = table[i - 1];
    let (f1, d1) = table[i];
    let t = (f / f0).ln() / (f1 / f0).ln();
    (d0.ln() + t * (d1 / d0).ln()).exp()
}

/// The device under test: a resistance with an optional parallel capacitance.
/// `intrinsic_noise` is read as a voltage PSD by voltage chains and as a
/// current PSD by transimpedance chains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DutModel {
    pub r_d: f64,
    #[serde(default)]
    pub c_parallel: f64,
    #[serde(default)]
    pub intrinsic_noise: NoiseSourceSpec,
}

impl DutModel {
    pub fn new(r_d: f64) -> Self {
        DutModel {
            r_d,
            c_parallel: 0.0,
            intrinsic_noise: NoiseSourceSpec::noiseless(),
        }
    }

    pub fn with_capacitance(mut self, c: f64) -> Self {
        self.c_parallel = c;
        self
    }

    pub fn with_noise(mut self, noise: NoiseSourceSpec) -> Self {
        self.intrinsic_noise = noise;
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("r_d", self.r_d)?;
        ensure_finite("c_parallel", self.c_parallel)?;
        if self.c_parallel < 0.0 {
            return Err(invalid("c_parallel must be non-negative"));
        }
        self.intrinsic_noise.validate()
    }

    /// `|Z|^2` of `R_D || C_parallel`.
    pub fn impedance_sq(&self, f: f64) -> f64 {
        let wrc = 2.0 * std::f64::consts::PI * f * self.r_d * self.c_parallel;
        self.r_d * self.r_d / (1.0 + wrc * wrc)
    }

    /// `1/Z = 1/R_D + j w C` as `(re, im)`.
    pub fn admittance(&self, f: f64) -> (f64, f64) {
        (1.0 / self.r_d, 2.0 * std::f64::consts::PI * f * self.c_parallel)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VnmChain {
    pub r_a: f64,
    pub c_a: f64,
    pub r_bias: f64,
    pub v_bias: f64,
    #[serde(default)]
    pub lnva_evn: NoiseSourceSpec,
    #[serde(default)]
    pub lnva_eicn: NoiseSourceSpec,
    pub gain_stage1_db: f64,
    #[serde(default)]
    pub gain_stage2_db: f64,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// Treat the bias network as noiseless (drop the `R_BIAS` thermal current).
    #[serde(default)]
    pub ideal_bias: bool,
    /// Bypass the `R_A C_A` coupling network: flat response, no `R_A` noise.
    #[serde(default)]
    pub dc_coupled: bool,
}

impl VnmChain {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("r_a", self.r_a)?;
        ensure_positive("c_a", self.c_a)?;
        ensure_positive("r_bias", self.r_bias)?;
        ensure_finite("v_bias", self.v_bias)?;
        ensure_finite("gain_stage1_db", self.gain_stage1_db)?;
        ensure_finite("gain_stage2_db", self.gain_stage2_db)?;
        ensure_positive("temperature", self.temperature)?;
        self.lnva_evn.validate()?;
        self.lnva_eicn.validate()
    }

    /// Linear voltage gain of both stages.
    pub fn gain(&self) -> f64 {
        10f64.powf((self.gain_stage1_db + self.gain_stage2_db) / 20.0)
    }

    pub fn coupling_corner(&self) -> f64 {
        1.0 / (2.0 * std::f64::consts::PI * self.r_a * self.c_a)
    }

    /// Bias current noise PSD `S_IBN` (A^2/Hz).
    pub fn bias_current_psd(&self, f: f64) -> f64 {
        let thermal = if self.ideal_bias {
            0.0
        } else {
            4.0 * BOLTZMANN * self.temperature / self.r_bias
        };
        thermal + self.lnva_eicn.psd(f)
    }

    /// DC current delivered to the device.
    pub fn bias_current(&self, dut: &DutModel) -> f64 {
        self.v_bias / (self.r_bias + dut.r_d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiaTopology {
    /// The bias source drives the device, whose current returns through `R_R`.
    BiasThroughFeedback,
    /// The device is grounded and the bias sits on the non-inverting input.
    GroundedDut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TiaChain {
    pub r_r: f64,
    pub v_b: f64,
    pub supply_limit: f64,
    #[serde(default)]
    pub oa_evn: NoiseSourceSpec,
    /// Voltage noise of the bias source.
    #[serde(default)]
    pub bias_evn: NoiseSourceSpec,
    pub topology: TiaTopology,
    pub c_b: f64,
    pub r_b: f64,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// Bypass the `C_B R_B` output filter.
    #[serde(default)]
    pub dc_coupled: bool,
}

impl TiaChain {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("r_r", self.r_r)?;
        ensure_finite("v_b", self.v_b)?;
        ensure_positive("supply_limit", self.supply_limit)?;
        ensure_positive("c_b", self.c_b)?;
        ensure_positive("r_b", self.r_b)?;
        ensure_positive("temperature", self.temperature)?;
        self.oa_evn.validate()?;
        self.bias_evn.validate()
    }

    pub fn output_filter_corner(&self) -> f64 {
        1.0 / (2.0 * std::f64::consts::PI * self.r_b * self.c_b)
    }

    pub fn with_feedback(&self, r_r: f64) -> TiaChain {
        TiaChain { r_r, ..self.clone() }
    }
}

/// Either measurement chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Chain {
    Vnm(VnmChain),
    Tia(TiaChain),
}

impl Chain {
    pub fn validate(&self) -> Result<()> {
        match self {
            Chain::Vnm(c) => c.validate(),
            Chain::Tia(c) => c.validate(),
        }
    }

    /// Complex transfer from the device signal (V for voltage chains, A for
    /// transimpedance chains) to the output voltage at `f >= 0`.
    pub fn transfer(&self, f: f64) -> (f64, f64) {
        match self {
            Chain::Vnm(c) => {
                let (re, im) = if c.dc_coupled {
                    (1.0, 0.0)
                } else {
                    high_pass(f, c.coupling_corner())
                };
                (c.gain() * re, c.gain() * im)
            }
            Chain::Tia(c) => {
                let (re, im) = if c.dc_coupled {
                    (1.0, 0.0)
                } else {
                    high_pass(f, c.output_filter_corner())
                };
                (-c.r_r * re, -c.r_r * im)
            }
        }
    }

    pub fn gain_magnitude(&self, f: f64) -> f64 {
        let (re, im) = self.transfer(f);
        re.hypot(im)
    }

    /// Chain-only noise at the output (V^2/Hz), itemised. The device's own
    /// noise is not included.
    pub fn output_noise(&self, dut: &DutModel, f: f64) -> Result<Budget> {
        check_frequency(f)?;
        self.validate()?;
        dut.validate()?;
        let mut parts = Vec::new();
        match self {
            Chain::Vnm(c) => {
                let g2 = c.gain().powi(2);
                let h2 = if c.dc_coupled {
                    1.0
                } else {
                    high_pass_sq(f, c.coupling_corner())
                };
                parts.push(("bias_current_term", g2 * h2 * c.bias_current_psd(f) * dut.impedance_sq(f)));
                parts.push(("evn", g2 * c.lnva_evn.psd(f)));
                let ra = if c.dc_coupled {
                    0.0
                } else {
                    vnm_coupling_response(c, f)?.ra_noise_contribution
                };
                parts.push(("ra_thermal", g2 * ra));
            }
            Chain::Tia(c) => {
                let h2 = if c.dc_coupled {
                    1.0
                } else {
                    high_pass_sq(f, c.output_filter_corner())
                };
                let b = tia_equivalent_input_noise(c, &dut.clone().with_noise(NoiseSourceSpec::noiseless()), f)?;
                let scale = h2 * c.r_r * c.r_r;
                parts.push(("bias_term", scale * b.bias_term));
                parts.push(("evn_term", scale * b.evn_term));
                parts.push(("feedback", scale * b.feedback));
            }
        }
        Ok(Budget::from_parts(parts))
    }
}

fn high_pass(f: f64, corner: f64) -> (f64, f64) {
    let x = f / corner;
    let d = 1.0 + x * x;
    (x * x / d, x / d)
}

fn high_pass_sq(f: f64, corner: f64) -> f64 {
    let x2 = (f / corner).powi(2);
    x2 / (1.0 + x2)
}

fn check_frequency(f: f64) -> Result<()> {
    ensure_positive("frequency", f)
}

/// An itemised PSD whose `total` is the sum of `parts` in order.
#[derive(Debug, Clone, PartialEq)]
pub struct Budget {
    pub total: f64,
    pub parts: Vec<(&'static str, f64)>,
}

impl Budget {
    fn from_parts(parts: Vec<(&'static str, f64)>) -> Self {
        let total = parts.iter().map(|p| p.1).sum();
        Budget { total, parts }
    }

    pub fn part(&self, name: &str) -> Option<f64> {
        self.parts.iter().find(|p| p.0 == name).map(|p| p.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VnmBudget {
    pub total: f64,
    pub dut: f64,
    pub evn: f64,
    pub bias_current_term: f64,
}

/// Equivalent input voltage PSD `S_IBN |Z|^2 + S_VDN + S_VN` in the coupling
/// passband.
pub fn vnm_input_psd(chain: &VnmChain, dut: &DutModel, f: f64) -> Result<VnmBudget> {
    check_frequency(f)?;
    chain.validate()?;
    dut.validate()?;
    let bias_current_term = chain.bias_current_psd(f) * dut.impedance_sq(f);
    let dut_part = dut.intrinsic_noise.psd(f);
    let evn = chain.lnva_evn.psd(f);
    Ok(VnmBudget {
        total: bias_current_term + dut_part + evn,
        dut: dut_part,
        evn,
        bias_current_term,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingResponse {
    pub gain_magnitude: f64,
    /// `R_A` thermal noise reaching the amplifier input, V^2/Hz.
    pub ra_noise_contribution: f64,
    pub corner_frequency: f64,
    /// Five time constants of the coupling network.
    pub settle_time: f64,
}

pub fn vnm_coupling_response(chain: &VnmChain, f: f64) -> Result<CouplingResponse> {
    check_frequency(f)?;
    chain.validate()?;
    let corner = chain.coupling_corner();
    let x2 = (f / corner).powi(2);
    Ok(CouplingResponse {
        gain_magnitude: (x2 / (1.0 + x2)).sqrt(),
        ra_noise_contribution: 4.0 * BOLTZMANN * chain.temperature * chain.r_a / (1.0 + x2),
        corner_frequency: corner,
        settle_time: 5.0 * chain.r_a * chain.c_a,
    })
}

/// Inductance an `L_A R_L` network needs for a high-pass corner at `corner`.
pub fn required_inductance(r_l: f64, corner: f64) -> Result<f64> {
    ensure_positive("r_l", r_l)?;
    ensure_positive("corner", corner)?;
    Ok(r_l / (2.0 * std::f64::consts::PI * corner))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiaBudget {
    pub s_in: f64,
    pub feedback: f64,
    pub evn_term: f64,
    pub bias_term: f64,
    pub dut: f64,
}

/// Equivalent input current PSD of the transimpedance front end.
///
/// With the bias through the feedback path the bias source noise sees the
/// device impedance alone (`S_VB / |Z|^2`); with a grounded device it sits on
/// the non-inverting input and shares the amplifier's noise gain
/// (`S_VB |1/R_R + 1/Z|^2`).
pub fn tia_equivalent_input_noise(chain: &TiaChain, dut: &DutModel, f: f64) -> Result<TiaBudget> {
    check_frequency(f)?;
    chain.validate()?;
    dut.validate()?;
    let (yr, yi) = dut.admittance(f);
    let noise_gain_sq = (1.0 / chain.r_r + yr).powi(2) + yi * yi;
    let evn_term = chain.oa_evn.psd(f) * noise_gain_sq;
    let bias_term = chain.bias_evn.psd(f)
        * match chain.topology {
            TiaTopology::BiasThroughFeedback => 1.0 / dut.impedance_sq(f),
            TiaTopology::GroundedDut => noise_gain_sq,
        };
    let feedback = 4.0 * BOLTZMANN * chain.temperature / chain.r_r;
    let dut_part = dut.intrinsic_noise.psd(f);
    Ok(TiaBudget {
        s_in: bias_term + evn_term + feedback + dut_part,
        feedback,
        evn_term,
        bias_term,
        dut: dut_part,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcOperatingPoint {
    pub v_odc: f64,
    pub in_linearity: bool,
}

pub fn tia_dc_operating_point(chain: &TiaChain, i_b: f64) -> DcOperatingPoint {
    let v_odc = match chain.topology {
        TiaTopology::BiasThroughFeedback => -chain.r_r * i_b,
        TiaTopology::GroundedDut => -chain.v_b - chain.r_r * i_b,
    };
    DcOperatingPoint {
        v_odc,
        in_linearity: v_odc.abs() < chain.supply_limit,
    }
}

/// Largest `R_R` keeping the DC output within `supply_limit - margin`,
/// capped at [`MAX_FEEDBACK_RESISTANCE`].
pub fn max_feedback_resistance(chain: &TiaChain, i_b: f64, margin: f64) -> Result<f64> {
    ensure_finite("bias current", i_b)?;
    ensure_finite("margin", margin)?;
    if margin < 0.0 || margin >= chain.supply_limit {
        return Err(invalid(format!(
            "margin {margin} V must lie in [0, supply_limit = {} V)",
            chain.supply_limit
        )));
    }
    let room = chain.supply_limit - margin;
    let available = match chain.topology {
        TiaTopology::BiasThroughFeedback => room,
        TiaTopology::GroundedDut => room - chain.v_b.abs(),
    };
    if available <= 0.0 {
        return Err(FesError::NoFeasibleGain(format!(
            "bias voltage {} V leaves no headroom below {room} V",
            chain.v_b
        )));
    }
    if i_b == 0.0 {
        return Ok(MAX_FEEDBACK_RESISTANCE);
    }
    Ok((available / i_b.abs()).min(MAX_FEEDBACK_RESISTANCE))
}

/// PSD ratio of two amplifiers' input voltage noise at `f`.
pub fn amplifier_bn_psd_ratio(a: &NoiseSourceSpec, b: &NoiseSourceSpec, f: f64) -> Result<f64> {
    check_frequency(f)?;
    a.validate()?;
    b.validate()?;
    let pb = b.psd(f);
    if pb <= 0.0 {
        return Err(invalid("reference amplifier is noiseless"));
    }
    Ok(a.psd(f) / pb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn vnm() -> VnmChain {
        VnmChain {
            r_a: 1e6,
            c_a: 50e-6,
            r_bias: 1e6,
            v_bias: 9.0,
            lnva_evn: NoiseSourceSpec::white(1e-18),
            lnva_eicn: NoiseSourceSpec::noiseless(),
            gain_stage1_db: 40.0,
            gain_stage2_db: 0.0,
            temperature: 300.0,
            ideal_bias: false,
            dc_coupled: false,
        }
    }

    fn tia(topology: TiaTopology) -> TiaChain {
        TiaChain {
            r_r: 1e6,
            v_b: 1.0,
            supply_limit: 5.0,
            oa_evn: NoiseSourceSpec::noiseless(),
            bias_evn: NoiseSourceSpec::noiseless(),
            topology,
            c_b: 10e-6,
            r_b: 1e6,
            temperature: 300.0,
            dc_coupled: false,
        }
    }

    #[test]
    fn noise_table_interpolates_in_log_log() {
        let spec = NoiseSourceSpec::from_table(vec![(0.1, 50e-9), (1.0, 16e-9), (1000.0, 5e-9)]).unwrap();
        assert_relative_eq!(spec.density(0.1), 50e-9, max_relative = 1e-12);
        assert_relative_eq!(spec.density(1.0), 16e-9, max_relative = 1e-12);
        assert_relative_eq!(spec.density(0.01), 50e-9, max_relative = 1e-12);
        assert_relative_eq!(spec.density(1e5), 5e-9, max_relative = 1e-12);
        // geometric midpoint of a segment gets the geometric mean density
        assert_relative_eq!(spec.density(10f64.sqrt() / 10.0), (50e-9f64 * 16e-9).sqrt(), max_relative = 1e-12);
        assert!(NoiseSourceSpec::from_table(vec![(1.0, 1e-9), (1.0, 2e-9)]).is_err());
        assert!(NoiseSourceSpec::from_table(vec![(1.0, 0.0)]).is_err());
    }

    #[test]
    fn parametric_flicker_form() {
        let s = NoiseSourceSpec::one_over_f_plus_white(2e-18, 10.0);
        assert_relative_eq!(s.psd(10.0), 4e-18, max_relative = 1e-15);
        assert_relative_eq!(s.psd(1e6), 2e-18, max_relative = 1e-4);
    }

    #[test]
    fn noiseless_chain_reports_the_device_noise_only() {
        let mut c = vnm();
        c.ideal_bias = true;
        c.lnva_evn = NoiseSourceSpec::noiseless();
        let dut = DutModel::new(1e3).with_noise(NoiseSourceSpec::white(3.3e-17));
        let b = vnm_input_psd(&c, &dut, 1.0).unwrap();
        assert_eq!(b.total, 3.3e-17);
    }

    #[test]
    fn bias_network_term_is_device_thermal_noise_scaled_by_resistance_ratio() {
        let c = vnm();
        let dut = DutModel::new(1e3);
        let b = vnm_input_psd(&c, &dut, 1.0).unwrap();
        let thermal = 4.0 * BOLTZMANN * 300.0 * 1e3;
        assert_relative_eq!(b.bias_current_term, thermal * 1e3 / 1e6, max_relative = 1e-12);
        assert_relative_eq!(thermal, 1.657e-17, max_relative = 1e-3);
        assert_relative_eq!(b.bias_current_term, 1.657e-20, max_relative = 1e-3);
    }

    #[test]
    fn coupling_network_examples() {
        let c = vnm();
        let corner = c.coupling_corner();
        let r = vnm_coupling_response(&c, corner).unwrap();
        assert_relative_eq!(r.gain_magnitude, std::f64::consts::FRAC_1_SQRT_2, max_relative = 1e-12);
        let plateau = 4.0 * BOLTZMANN * 300.0 * 1e6;
        let far = vnm_coupling_response(&c, 100.0 * corner).unwrap();
        assert_relative_eq!(plateau / far.ra_noise_contribution, 1e4 + 1.0, max_relative = 1e-12);
        assert_relative_eq!(r.settle_time, 250.0, max_relative = 1e-12);
    }

    #[test]
    fn inductive_coupling_is_impractical() {
        assert!(required_inductance(1e3, 0.1).unwrap() > 1e3);
    }

    #[test]
    fn ideal_transimpedance_noise_is_feedback_thermal_noise() {
        let c = tia(TiaTopology::BiasThroughFeedback);
        let b = tia_equivalent_input_noise(&c, &DutModel::new(1e6), 1.0).unwrap();
        assert_eq!(b.s_in, b.feedback);
        assert_relative_eq!(b.s_in, 1.657e-26, max_relative = 1e-3);
        assert_relative_eq!(4.0 * BOLTZMANN * 300.0 * c.r_r, 1.657e-14, max_relative = 1e-3);
    }

    #[test]
    fn amplifier_voltage_noise_term_example() {
        let mut c = tia(TiaTopology::BiasThroughFeedback).with_feedback(1e7);
        c.oa_evn = NoiseSourceSpec::white(3.6e-15);
        let b = tia_equivalent_input_noise(&c, &DutModel::new(1e7), 1.0).unwrap();
        assert_relative_eq!(b.evn_term, 1.44e-28, max_relative = 1e-12);
        assert!(b.evn_term < b.feedback);
        assert_relative_eq!(b.feedback, 1.657e-27, max_relative = 1e-3);
    }

    #[test]
    fn capacitive_device_raises_voltage_noise_term_with_frequency() {
        let mut c = tia(TiaTopology::BiasThroughFeedback);
        c.oa_evn = NoiseSourceSpec::white(1e-16);
        let dut = DutModel::new(1e8).with_capacitance(1e-10);
        let mut last = 0.0;
        for f in [0.1, 1.0, 10.0, 100.0, 1e3] {
            let t = tia_equivalent_input_noise(&c, &dut, f).unwrap().evn_term;
            assert!(t > last);
            last = t;
        }
    }

    #[test]
    fn dc_operating_points() {
        let a = tia(TiaTopology::BiasThroughFeedback);
        assert_relative_eq!(tia_dc_operating_point(&a, 1e-6).v_odc, -1.0, max_relative = 1e-12);
        let b = tia(TiaTopology::GroundedDut);
        assert_relative_eq!(tia_dc_operating_point(&b, 1e-6).v_odc, -2.0, max_relative = 1e-12);
        let z = tia_dc_operating_point(&a, 0.0);
        assert_eq!(z.v_odc, 0.0);
        assert!(z.in_linearity);
        assert!(!tia_dc_operating_point(&a, 1e-5).in_linearity);
    }

    #[test]
    fn feedback_resistance_worked_cases() {
        let a = tia(TiaTopology::BiasThroughFeedback);
        assert_relative_eq!(max_feedback_resistance(&a, 1e-6, 0.5).unwrap(), 4.5e6, max_relative = 1e-12);
        let b = tia(TiaTopology::GroundedDut);
        assert_relative_eq!(max_feedback_resistance(&b, 1e-6, 0.5).unwrap(), 3.5e6, max_relative = 1e-12);
        assert_eq!(max_feedback_resistance(&a, 1e-30, 0.5).unwrap(), MAX_FEEDBACK_RESISTANCE);
        assert_eq!(max_feedback_resistance(&a, 0.0, 0.5).unwrap(), MAX_FEEDBACK_RESISTANCE);
        let mut c = tia(TiaTopology::GroundedDut);
        c.v_b = 4.5;
        assert!(matches!(max_feedback_resistance(&c, 1e-6, 0.5), Err(FesError::NoFeasibleGain(_))));
        assert!(max_feedback_resistance(&a, 1e-6, 5.0).is_err());
    }

    #[test]
    fn amplifier_ratios() {
        let opa = NoiseSourceSpec::from_table(vec![(0.1, 50e-9), (1.0, 16e-9), (1000.0, 5e-9)]).unwrap();
        let jfet = NoiseSourceSpec::from_table(vec![(0.1, 5.6e-9), (1.0, 1.4e-9)]).unwrap();
        let low = NoiseSourceSpec::from_table(vec![(0.1, 14e-9), (1.0, 1.4e-9), (1000.0, 0.8e-9)]).unwrap();
        let r = amplifier_bn_psd_ratio(&opa, &jfet, 0.1).unwrap();
        assert_relative_eq!(r, (50.0f64 / 5.6).powi(2), max_relative = 1e-12);
        assert!((r - 80.0).abs() < 1.0);
        assert_eq!(amplifier_bn_psd_ratio(&opa, &opa, 3.0).unwrap(), 1.0);
        assert_relative_eq!(amplifier_bn_psd_ratio(&low, &opa, 1e3).unwrap(), 0.0256, max_relative = 1e-12);
        assert_relative_eq!(amplifier_bn_psd_ratio(&opa, &low, 1e3).unwrap(), 39.0625, max_relative = 1e-12);
        assert!(amplifier_bn_psd_ratio(&opa, &NoiseSourceSpec::noiseless(), 1.0).is_err());
    }

    #[test]
    fn chain_serde_round_trip() {
        let chain = Chain::Tia(tia(TiaTopology::GroundedDut));
        let text = serde_json::to_string(&chain).unwrap();
        assert!(text.contains("\"type\":\"tia\""));
        assert_eq!(serde_json::from_str::<Chain>(&text).unwrap(), chain);
    }

    proptest! {
        #[test]
        fn budgets_are_additive(f in 1e-3f64..1e4, rd in 1e1f64..1e9, cp in 0.0f64..1e-9, w in 0.0f64..1e-15) {
            let dut = DutModel::new(rd).with_capacitance(cp).with_noise(NoiseSourceSpec::white(w));
            let mut v = vnm();
            v.lnva_eicn = NoiseSourceSpec::one_over_f_plus_white(1e-28, 3.0);
            let b = vnm_input_psd(&v, &dut, f).unwrap();
            prop_assert_eq!(b.total, b.bias_current_term + b.dut + b.evn);
            let mut t = tia(TiaTopology::GroundedDut);
            t.oa_evn = NoiseSourceSpec::white(w);
            t.bias_evn = NoiseSourceSpec::white(w / 3.0);
            let b = tia_equivalent_input_noise(&t, &dut, f).unwrap();
            prop_assert_eq!(b.s_in, b.bias_term + b.evn_term + b.feedback + b.dut);
            for chain in [Chain::Vnm(v.clone()), Chain::Tia(t.clone())] {
                let o = chain.output_noise(&dut, f).unwrap();
                prop_assert_eq!(o.total, o.parts.iter().map(|p| p.1).sum::<f64>());
            }
        }

        #[test]
        fn bias_term_ratio_is_exact(rd in 1.0f64..1e5, k in 1.0f64..1e4, t in 50.0f64..600.0) {
            let mut c = vnm();
            c.r_bias = rd * k;
            c.temperature = t;
            let b = vnm_input_psd(&c, &DutModel::new(rd), 1.0).unwrap();
            let thermal = 4.0 * BOLTZMANN * t * rd;
            prop_assert!((b.bias_current_term / thermal - rd / c.r_bias).abs() <= 1e-12 * rd / c.r_bias);
            prop_assert!(b.bias_current_term < thermal);
        }

        #[test]
        fn headroom_duality(ib in 1e-12f64..1e-2, margin in 0.0f64..2.0, vb in 0.0f64..2.5, grounded in any::<bool>()) {
            let mut c = tia(if grounded { TiaTopology::GroundedDut } else { TiaTopology::BiasThroughFeedback });
            c.v_b = vb;
            let r = max_feedback_resistance(&c, ib, margin).unwrap();
            prop_assume!(r < MAX_FEEDBACK_RESISTANCE);
            let v = tia_dc_operating_point(&c.with_feedback(r), ib).v_odc.abs();
            let bound = c.supply_limit - margin;
            prop_assert!((v - bound).abs() <= 1e-9 * bound);
        }

        #[test]
        fn input_noise_falls_with_feedback_resistance(r1 in 1e3f64..1e9, k in 1.001f64..100.0, f in 0.01f64..1e3) {
            let mut c = tia(TiaTopology::BiasThroughFeedback);
            c.oa_evn = NoiseSourceSpec::one_over_f_plus_white(1e-17, 10.0);
            c.bias_evn = NoiseSourceSpec::white(1e-18);
            let dut = DutModel::new(1e6).with_noise(NoiseSourceSpec::white(1e-27));
            let a = tia_equivalent_input_noise(&c.with_feedback(r1), &dut, f).unwrap().s_in;
            let b = tia_equivalent_input_noise(&c.with_feedback(r1 * k), &dut, f).unwrap().s_in;
            prop_assert!(b < a);
        }
    }
}
