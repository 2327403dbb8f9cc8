//! Elementary noise sources.
//!
//! A [`Fluctuator`] is a two-state trap whose switching produces a Lorentzian
//! spectrum
//!
//! ```text
//! s(f) = c / (1 + (2*pi*f*tau)^2)
//! ```
//!
//! The square in the denominator is what gives the 1/f^2 tail above the corner
//! `1/(2*pi*tau)`; forms without it are not the spectrum of a telegraph signal.
//!
//! A symmetric random telegraph signal with half-swing `a` and mean dwell time
//! `T` has autocorrelation `a^2 exp(-2|t|/T)`, so it maps onto a fluctuator with
//! `tau = T/2` and `c = 4 a^2 tau`. The variance of a fluctuator is the integral
//! of its one-sided spectrum, `c / (4 tau)`.
//!
//! Thermally activated fluctuators carry an activation energy `E` and prefactor
//! `tau0`; at temperature `T` their time constant becomes `tau0 exp(E / kT)`
//! while the variance is held fixed.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_positive, invalid, Result};
use crate::seed::Seed;
use crate::series::TimeSeries;
use crate::spectral::{Normalization, SpectrumEstimate};

/// Boltzmann constant, J/K (exact SI value).
pub const BOLTZMANN: f64 = 1.380649e-23;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fluctuator {
    pub strength_c: f64,
    pub tau: f64,
    #[serde(default)]
    pub activation_energy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau0: Option<f64>,
}

impl Fluctuator {
    pub fn new(strength_c: f64, tau: f64) -> Result<Self> {
        let f = Fluctuator {
            strength_c,
            tau,
            activation_energy: 0.0,
            tau0: None,
        };
        f.validate()?;
        Ok(f)
    }

    /// Thermally activated fluctuator. `tau` is taken as the time constant at
    /// `reference_temperature`, and `tau0` is chosen to match it.
    pub fn activated(
        strength_c: f64,
        tau: f64,
        activation_energy: f64,
        reference_temperature: f64,
    ) -> Result<Self> {
        ensure_positive("activation energy", activation_energy)?;
        ensure_positive("reference temperature", reference_temperature)?;
        let tau0 = tau * (-activation_energy / (BOLTZMANN * reference_temperature)).exp();
        let f = Fluctuator {
            strength_c,
            tau,
            activation_energy,
            tau0: Some(tau0),
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("fluctuator strength", self.strength_c)?;
        ensure_positive("fluctuator time constant", self.tau)?;
        ensure_finite("activation energy", self.activation_energy)?;
        if self.activation_energy < 0.0 {
            return Err(invalid("activation energy must be non-negative"));
        }
        if self.activation_energy > 0.0 {
            match self.tau0 {
                Some(t0) => ensure_positive("tau0", t0)?,
                None => return Err(invalid("an activated fluctuator needs tau0")),
            }
        }
        Ok(())
    }

    pub fn is_activated(&self) -> bool {
        self.activation_energy > 0.0
    }

    pub fn corner_frequency(&self) -> f64 {
        1.0 / (2.0 * std::f64::consts::PI * self.tau)
    }

    /// Variance of the underlying signal, `c / (4 tau)`.
    pub fn variance(&self) -> f64 {
        self.strength_c / (4.0 * self.tau)
    }

    pub fn effective_tau(&self, temperature: Option<f64>) -> Result<f64> {
        match (self.is_activated(), temperature) {
            (true, Some(t)) => {
                ensure_positive("temperature", t)?;
                let tau0 = self.tau0.expect("validated activated fluctuator has tau0");
                Ok(tau0 * (self.activation_energy / (BOLTZMANN * t)).exp())
            }
            _ => Ok(self.tau),
        }
    }

    /// The same trap at another temperature: `tau` follows Arrhenius, the
    /// variance is unchanged. Non-activated fluctuators are returned as is.
    pub fn at_temperature(&self, temperature: f64) -> Result<Fluctuator> {
        if !self.is_activated() {
            return Ok(self.clone());
        }
        let tau_eff = self.effective_tau(Some(temperature))?;
        let mut out = self.clone();
        out.strength_c = 4.0 * self.variance() * tau_eff;
        out.tau = tau_eff;
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RtsParams {
    pub amplitude_a: f64,
    pub dwell_mean: f64,
}

impl RtsParams {
    pub fn new(amplitude_a: f64, dwell_mean: f64) -> Result<Self> {
        ensure_positive("RTS amplitude", amplitude_a)?;
        ensure_positive("RTS dwell time", dwell_mean)?;
        Ok(RtsParams {
            amplitude_a,
            dwell_mean,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoogeNoiseSpec {
    pub hooge_a: f64,
    pub bias_voltage_u: f64,
    #[serde(default = "unit_volume")]
    pub normalization_volume: f64,
}

fn unit_volume() -> f64 {
    1.0
}

impl HoogeNoiseSpec {
    pub fn new(hooge_a: f64, bias_voltage_u: f64) -> Self {
        HoogeNoiseSpec {
            hooge_a,
            bias_voltage_u,
            normalization_volume: 1.0,
        }
    }
}

pub fn lorentzian_psd(fluct: &Fluctuator, f: f64) -> Result<f64> {
    ensure_finite("frequency", f)?;
    ensure_finite("fluctuator strength", fluct.strength_c)?;
    ensure_finite("fluctuator time constant", fluct.tau)?;
    if f < 0.0 {
        return Err(invalid(format!("frequency must be non-negative, got {f}")));
    }
    let x = 2.0 * std::f64::consts::PI * f * fluct.tau;
    Ok(fluct.strength_c / (1.0 + x * x))
}

/// Sum of the Lorentzians of `bank`, evaluated on `f_grid`.
pub fn superpose_psd(bank: &[Fluctuator], f_grid: &[f64]) -> Result<SpectrumEstimate> {
    if bank.is_empty() {
        return Err(invalid("cannot superpose an empty fluctuator bank"));
    }
    let mut values = vec![0.0; f_grid.len()];
    for fl in bank {
        for (v, &f) in values.iter_mut().zip(f_grid) {
            *v += lorentzian_psd(fl, f)?;
        }
    }
    SpectrumEstimate::new(
        f_grid.to_vec(),
        values,
        1,
        "analytic",
        Normalization::Raw,
    )
}

/// Analytic bank spectrum with every activated fluctuator moved to `temperature`.
pub fn superpose_psd_at(
    bank: &[Fluctuator],
    temperature: f64,
    f_grid: &[f64],
) -> Result<SpectrumEstimate> {
    let moved = bank
        .iter()
        .map(|f| f.at_temperature(temperature))
        .collect::<Result<Vec<_>>>()?;
    superpose_psd(&moved, f_grid)
}

/// Log-uniform bank of `decades * per_decade` equal-variance fluctuators.
///
/// Time constants run from `tau_min` upward in steps of `10^(1/per_decade)`.
/// Each fluctuator carries variance `v`, so `c_j = 4 v tau_j`. With
/// `total_power_target` the variances sum to that value, otherwise `v = 1`.
pub fn build_one_over_f_bank(
    decades: u32,
    per_decade: u32,
    tau_min: f64,
    total_power_target: Option<f64>,
) -> Result<Vec<Fluctuator>> {
    if decades < 1 || per_decade < 1 {
        return Err(invalid("a 1/f bank needs at least one decade and one fluctuator per decade"));
    }
    ensure_positive("tau_min", tau_min)?;
    let count = decades * per_decade;
    let per_fluct = match total_power_target {
        Some(p) => {
            ensure_positive("total power target", p)?;
            p / count as f64
        }
        None => 1.0,
    };
    (0..count)
        .map(|j| {
            let tau = tau_min * 10f64.powf(j as f64 / per_decade as f64);
            Fluctuator::new(4.0 * per_fluct * tau, tau)
        })
        .collect()
}

pub fn rts_to_fluctuator(params: &RtsParams) -> Fluctuator {
    let tau = params.dwell_mean / 2.0;
    Fluctuator {
        strength_c: 4.0 * params.amplitude_a * params.amplitude_a * tau,
        tau,
        activation_energy: 0.0,
        tau0: None,
    }
}

fn sample_count(duration: f64, fs: f64) -> Result<usize> {
    ensure_positive("duration", duration)?;
    ensure_positive("sample rate", fs)?;
    let n = (duration * fs).round();
    if n < 2.0 {
        return Err(invalid(format!(
            "duration * fs = {} gives fewer than 2 samples",
            duration * fs
        )));
    }
    Ok(n as usize)
}

/// Adds one symmetric telegraph signal to `out`. Switching instants are drawn
/// in continuous time and read out with a zero-order hold at `i / fs`.
fn accumulate_rts<R: Rng>(out: &mut [f64], amplitude: f64, dwell: f64, fs: f64, rng: &mut R) {
    let mut state = if rng.random::<bool>() { amplitude } else { -amplitude };
    if !dwell.is_finite() {
        out.iter_mut().for_each(|x| *x += state);
        return;
    }
    let exp = Exp::new(1.0 / dwell).expect("dwell is positive and finite");
    let mut next_switch: f64 = exp.sample(rng);
    for (i, x) in out.iter_mut().enumerate() {
        let t = i as f64 / fs;
        while next_switch <= t {
            state = -state;
            next_switch += exp.sample(rng);
        }
        *x += state;
    }
}

pub fn generate_rts(params: &RtsParams, duration: f64, fs: f64, seed: Seed) -> Result<TimeSeries> {
    ensure_positive("RTS amplitude", params.amplitude_a)?;
    ensure_positive("RTS dwell time", params.dwell_mean)?;
    let n = sample_count(duration, fs)?;
    let mut out = vec![0.0; n];
    accumulate_rts(
        &mut out,
        params.amplitude_a,
        params.dwell_mean,
        fs,
        &mut seed.rng(),
    );
    TimeSeries::new(out, fs, "")
}

/// Sum of independent telegraph signals, one per fluctuator, using sub-seed
/// `seed.child(j)` for fluctuator `j`.
///
/// Activated fluctuators switch with their Arrhenius time constant at
/// `temperature` (required when any are present); the signal amplitude stays
/// `sqrt(c / (4 tau))` from the stored parameters.
pub fn render_bank(
    bank: &[Fluctuator],
    temperature: Option<f64>,
    duration: f64,
    fs: f64,
    seed: Seed,
) -> Result<TimeSeries> {
    let n = sample_count(duration, fs)?;
    let mut out = vec![0.0; n];
    for (j, fl) in bank.iter().enumerate() {
        fl.validate()?;
        if fl.is_activated() && temperature.is_none() {
            return Err(invalid("temperature is required for activated fluctuators"));
        }
        let tau_eff = fl.effective_tau(temperature)?;
        let amplitude = fl.variance().sqrt();
        accumulate_rts(&mut out, amplitude, 2.0 * tau_eff, fs, &mut seed.child(j as u64).rng());
    }
    TimeSeries::new(out, fs, "")
}

pub fn johnson_noise_psd(r: f64, t: f64) -> Result<f64> {
    ensure_positive("resistance", r)?;
    ensure_positive("temperature", t)?;
    Ok(4.0 * BOLTZMANN * t * r)
}

pub fn johnson_current_psd(r: f64, t: f64) -> Result<f64> {
    ensure_positive("resistance", r)?;
    ensure_positive("temperature", t)?;
    Ok(4.0 * BOLTZMANN * t / r)
}

/// `U^2 A / (nu f)`.
pub fn hooge_psd(spec: &HoogeNoiseSpec, f: f64) -> Result<f64> {
    ensure_finite("frequency", f)?;
    if f <= 0.0 {
        return Err(invalid("the Hooge spectrum diverges at f = 0"));
    }
    if spec.hooge_a < 0.0 {
        return Err(invalid("Hooge parameter must be non-negative"));
    }
    ensure_finite("bias voltage", spec.bias_voltage_u)?;
    ensure_positive("normalization volume", spec.normalization_volume)?;
    let u = spec.bias_voltage_u;
    Ok(u * u * spec.hooge_a / (spec.normalization_volume * f))
}

/// Gaussian white noise with one-sided PSD `level`, i.e. variance `level * fs / 2`.
pub fn white_noise(level: f64, n: usize, fs: f64, seed: Seed) -> Vec<f64> {
    let sigma = (level * fs / 2.0).sqrt();
    let mut rng = seed.rng();
    (0..n)
        .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

pub fn render_johnson_voltage(r: f64, t: f64, duration: f64, fs: f64, seed: Seed) -> Result<TimeSeries> {
    let n = sample_count(duration, fs)?;
    TimeSeries::new(white_noise(johnson_noise_psd(r, t)?, n, fs, seed), fs, "V")
}

pub fn render_johnson_current(r: f64, t: f64, duration: f64, fs: f64, seed: Seed) -> Result<TimeSeries> {
    let n = sample_count(duration, fs)?;
    TimeSeries::new(white_noise(johnson_current_psd(r, t)?, n, fs, seed), fs, "A")
}

/// Gaussian noise of length `n` whose one-sided PSD is `psd(f)`.
///
/// Built in the frequency domain: bin `k` gets a complex normal amplitude with
/// `E|X_k|^2 = psd(f_k) fs n / 2` (the Nyquist bin is real with twice that
/// power), the DC bin is zero, and the record is the inverse transform. The
/// result is periodic in `n`.
pub fn shaped_noise<F: Fn(f64) -> f64>(psd: F, n: usize, fs: f64, seed: Seed) -> Vec<f64> {
    let mut rng = seed.rng();
    let mut spec = vec![Complex64::new(0.0, 0.0); n];
    let nf = n as f64;
    for k in 1..=n / 2 {
        let f = k as f64 * fs / nf;
        let s = psd(f).max(0.0);
        if 2 * k == n {
            let g: f64 = rng.sample(StandardNormal);
            spec[k] = Complex64::new((s * fs * nf).sqrt() * g, 0.0);
        } else {
            let sd = (s * fs * nf / 4.0).sqrt();
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            spec[k] = Complex64::new(sd * re, sd * im);
            spec[n - k] = spec[k].conj();
        }
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut spec);
    spec.iter().map(|z| z.re / nf).collect()
}
