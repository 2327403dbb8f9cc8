//! Physical quantities recovered from spectra.
//!
//! * Johnson thermometry: `T = sqrt(S_u S_i) / 4k`, `R = sqrt(S_u / S_i)`.
//! * Spectral unmixing: the PSD change in band `i` is `dS_i = sum_j A_ij C_j`;
//!   [`calibrate`] estimates `A` from training runs and [`unmix`] inverts it.
//!   Band powers are band means of the PSD, so `A` stays in PSD units per
//!   concentration unit.
//! * Capacity and selectivity figures of merit.
//!
//! The classical capacity formula is evaluated with the natural logarithm
//! (nats per second); pass `bits = true` to divide by `ln 2`.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ensure_positive, invalid, FesError, Result};
use crate::linalg;
use crate::sensor::SensorGeometry;
use crate::spectral::SpectrumEstimate;
use crate::synth::BOLTZMANN;

/// Condition numbers above this are treated as rank deficiency.
pub const MAX_CONDITION: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thermometry {
    pub temperature: f64,
    pub resistance: f64,
}

pub fn johnson_thermometry(s_u: f64, s_i: f64) -> Result<Thermometry> {
    ensure_positive("voltage PSD", s_u)?;
    ensure_positive("current PSD", s_i)?;
    Ok(Thermometry {
        temperature: (s_u * s_i).sqrt() / (4.0 * BOLTZMANN),
        resistance: (s_u / s_i).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConcentrationVector {
    pub values: BTreeMap<String, f64>,
    #[serde(default)]
    pub residual_norm: f64,
}

impl ConcentrationVector {
    pub fn new(values: BTreeMap<String, f64>) -> Self {
        ConcentrationVector {
            values,
            residual_norm: 0.0,
        }
    }
}

pub type Band = (f64, f64);

fn validate_bands(bands: &[Band]) -> Result<()> {
    if bands.is_empty() {
        return Err(invalid("at least one band is required"));
    }
    for (i, &(lo, hi)) in bands.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi > lo) {
            return Err(invalid(format!("band {i} [{lo}, {hi}) is not a valid interval")));
        }
        if i > 0 && lo < bands[i - 1].1 {
            return Err(invalid(format!("band {i} overlaps or precedes band {}", i - 1)));
        }
    }
    Ok(())
}

/// Mean PSD in each band.
pub fn band_powers(spec: &SpectrumEstimate, bands: &[Band]) -> Result<Vec<f64>> {
    bands.iter().map(|&(lo, hi)| spec.band_mean(lo, hi)).collect()
}

fn band_deltas(
    measured: &SpectrumEstimate,
    reference: &SpectrumEstimate,
    bands: &[Band],
) -> Result<Vec<f64>> {
    if !measured.same_grid(reference) {
        return Err(invalid("measured and reference spectra use different frequency grids"));
    }
    if measured.normalization != reference.normalization {
        return Err(invalid("measured and reference spectra use different normalizations"));
    }
    let m = band_powers(measured, bands)?;
    let r = band_powers(reference, bands)?;
    Ok(m.iter().zip(&r).map(|(a, b)| a - b).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationMatrix {
    pub bands: Vec<Band>,
    pub species: Vec<String>,
    pub rows: usize,
    pub cols: usize,
    /// `A[i][j]` in row-major order: band `i`, species `j`.
    pub a: Vec<f64>,
    pub condition_number: f64,
    /// SHA-256 of the training inputs, hex encoded.
    pub provenance: String,
}

impl CalibrationMatrix {
    pub fn validate(&self) -> Result<()> {
        validate_bands(&self.bands)?;
        if self.rows != self.bands.len() || self.cols != self.species.len() {
            return Err(invalid("calibration shape does not match bands and species"));
        }
        if self.cols == 0 || self.rows < self.cols {
            return Err(invalid(format!(
                "calibration needs at least as many bands as species ({} < {})",
                self.rows, self.cols
            )));
        }
        if self.a.len() != self.rows * self.cols || self.a.iter().any(|v| !v.is_finite()) {
            return Err(invalid("calibration coefficients are missing or not finite"));
        }
        Ok(())
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.a)
    }

    pub fn get(&self, band: usize, species: usize) -> f64 {
        self.a[band * self.cols + species]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("calibration serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: CalibrationMatrix =
            serde_json::from_str(text).map_err(|e| FesError::Format(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        CalibrationMatrix::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Pair of columns with the largest absolute cosine similarity; a zero column
/// is paired with itself.
fn most_collinear_pair(m: &DMatrix<f64>) -> (usize, usize) {
    let n = m.ncols();
    for j in 0..n {
        if m.column(j).norm() == 0.0 {
            return (j, j);
        }
    }
    let mut best = (0, 0.min(n.saturating_sub(1)));
    let mut best_cos = -1.0;
    for i in 0..n {
        for j in i + 1..n {
            let (ci, cj) = (m.column(i), m.column(j));
            let cos = (ci.dot(&cj) / (ci.norm() * cj.norm())).abs();
            if cos > best_cos {
                best_cos = cos;
                best = (i, j);
            }
        }
    }
    best
}

fn degenerate(m: &DMatrix<f64>, species: &[String], condition: f64) -> FesError {
    let (i, j) = most_collinear_pair(m);
    FesError::DegenerateCalibration {
        first: species[i].clone(),
        second: species[j].clone(),
        condition,
    }
}

#[derive(Serialize)]
struct TrainingDigest<'a> {
    bands: &'a [Band],
    reference: &'a SpectrumEstimate,
    training: Vec<(&'a BTreeMap<String, f64>, &'a SpectrumEstimate)>,
}

/// Estimates `A` band by band from training runs against a reference spectrum.
///
/// Species are the keys of the training concentration maps (all must share
/// the same keys). Fails with [`FesError::DegenerateCalibration`] when either
/// the training design or the resulting `A` has a condition number above
/// [`MAX_CONDITION`].
pub fn calibrate(
    training: &[(ConcentrationVector, SpectrumEstimate)],
    reference: &SpectrumEstimate,
    bands: &[Band],
) -> Result<CalibrationMatrix> {
    validate_bands(bands)?;
    let first = training
        .first()
        .ok_or_else(|| invalid("calibration needs at least one training run"))?;
    let species: Vec<String> = first.0.values.keys().cloned().collect();
    let n = species.len();
    if n == 0 {
        return Err(invalid("training runs name no species"));
    }
    if bands.len() < n {
        return Err(invalid(format!(
            "{} bands cannot separate {} species",
            bands.len(),
            n
        )));
    }
    if training.len() < n {
        return Err(invalid(format!(
            "{} training runs cannot determine {} species",
            training.len(),
            n
        )));
    }

    let t = training.len();
    let mut conc = DMatrix::zeros(t, n);
    let mut deltas = DMatrix::zeros(t, bands.len());
    for (r, (cv, spec)) in training.iter().enumerate() {
        if cv.values.len() != n || !species.iter().all(|s| cv.values.contains_key(s)) {
            return Err(invalid(format!("training run {r} names a different species set")));
        }
        for (j, s) in species.iter().enumerate() {
            conc[(r, j)] = cv.values[s];
        }
        for (k, d) in band_deltas(spec, reference, bands)?.into_iter().enumerate() {
            deltas[(r, k)] = d;
        }
    }

    let design_cond = linalg::condition_number(&conc);
    if !(design_cond <= MAX_CONDITION) {
        return Err(degenerate(&conc, &species, design_cond));
    }

    let mut a = DMatrix::zeros(bands.len(), n);
    for k in 0..bands.len() {
        let rhs: Vec<f64> = deltas.column(k).iter().copied().collect();
        let sol = linalg::lstsq(&conc, &rhs)?;
        for j in 0..n {
            a[(k, j)] = sol.x[j];
        }
    }
    let condition_number = linalg::condition_number(&a);
    if !(condition_number <= MAX_CONDITION) {
        return Err(degenerate(&a, &species, condition_number));
    }

    let digest = TrainingDigest {
        bands,
        reference,
        training: training.iter().map(|(c, s)| (&c.values, s)).collect(),
    };
    let provenance = hex::encode(Sha256::digest(
        serde_json::to_vec(&digest).expect("training inputs serialize"),
    ));

    let mut row_major = Vec::with_capacity(bands.len() * n);
    for k in 0..bands.len() {
        for j in 0..n {
            row_major.push(a[(k, j)]);
        }
    }
    Ok(CalibrationMatrix {
        bands: bands.to_vec(),
        species,
        rows: bands.len(),
        cols: n,
        a: row_major,
        condition_number,
        provenance,
    })
}

/// Solves `dS = A C` for band deltas already computed.
pub fn unmix_delta(delta: &[f64], calib: &CalibrationMatrix, nonneg: bool) -> Result<ConcentrationVector> {
    calib.validate()?;
    if delta.len() != calib.rows {
        return Err(invalid(format!(
            "{} band deltas given, calibration has {} bands",
            delta.len(),
            calib.rows
        )));
    }
    let a = calib.matrix();
    let sol = if nonneg {
        linalg::nnls(&a, delta)?
    } else {
        linalg::lstsq(&a, delta)?
    };
    Ok(ConcentrationVector {
        values: calib.species.iter().cloned().zip(sol.x).collect(),
        residual_norm: sol.residual_norm,
    })
}

pub fn unmix(
    measured: &SpectrumEstimate,
    reference: &SpectrumEstimate,
    calib: &CalibrationMatrix,
    nonneg: bool,
) -> Result<ConcentrationVector> {
    let delta = band_deltas(measured, reference, &calib.bands)?;
    unmix_delta(&delta, calib, nonneg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityQuery {
    pub t_m: f64,
    pub t_w: f64,
    pub fs: f64,
    pub delta_f: f64,
    pub geometry: SensorGeometry,
    pub r: f64,
    pub r0: f64,
}

impl CapacityQuery {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("t_m", self.t_m)?;
        ensure_positive("t_w", self.t_w)?;
        ensure_positive("fs", self.fs)?;
        ensure_positive("delta_f", self.delta_f)?;
        ensure_positive("R", self.r)?;
        ensure_positive("R0", self.r0)?;
        self.geometry.validate()?;
        if self.t_m < self.t_w {
            return Err(invalid("t_m must not be shorter than t_w"));
        }
        Ok(())
    }
}

/// `1/(2 t_m) ln(1 + 8 pi^2 A_S d (R - R0)^2 / (A R^2))`, in nats/s, or bits/s
/// when `bits` is set.
pub fn classical_capacity(q: &CapacityQuery, hooge_a: f64, bits: bool) -> Result<f64> {
    q.validate()?;
    ensure_positive("Hooge parameter", hooge_a)?;
    let g = &q.geometry;
    let x = 8.0 * std::f64::consts::PI.powi(2) * g.surface_a_s * g.thickness_d * (q.r - q.r0).powi(2)
        / (hooge_a * q.r * q.r);
    let nats = x.ln_1p() / (2.0 * q.t_m);
    Ok(if bits { nats / std::f64::consts::LN_2 } else { nats })
}

/// `t_m t_w fs^2 / delta_f`; a proportionality, not an absolute capacity.
pub fn fes_capacity_scaling(q: &CapacityQuery) -> Result<f64> {
    q.validate()?;
    Ok(q.t_m * q.t_w * q.fs * q.fs / q.delta_f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectivityMode {
    Psd,
    Bispectrum,
}

/// Number of independent spectral features: one per fluctuator for a PSD,
/// `floor(n^2 / 6)` (at least 1) for a bispectrum.
pub fn selectivity_enhancement(per_decade: u32, decades: u32, mode: SelectivityMode) -> Result<u64> {
    if per_decade < 1 || decades < 1 {
        return Err(invalid("per_decade and decades must be at least 1"));
    }
    let n = u64::from(per_decade) * u64::from(decades);
    Ok(match mode {
        SelectivityMode::Psd => n,
        SelectivityMode::Bispectrum => crate::spectral::symmetry_reduce_count(n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Normalization;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn geometry() -> SensorGeometry {
        SensorGeometry {
            surface_a_s: 1e-6,
            thickness_d: 1e-6,
            diffusion_d: 1e-12,
            r0: 1e3,
            hooge_a: 1e-5,
        }
    }

    fn query(r: f64) -> CapacityQuery {
        CapacityQuery {
            t_m: 10.0,
            t_w: 1.0,
            fs: 1000.0,
            delta_f: 1.0,
            geometry: geometry(),
            r,
            r0: 1e3,
        }
    }

    fn flat(level: &[f64]) -> SpectrumEstimate {
        // one bin per unit band
        let freqs: Vec<f64> = (0..level.len()).map(|k| k as f64 + 0.5).collect();
        SpectrumEstimate::new(freqs, level.to_vec(), 1, "analytic", Normalization::Raw).unwrap()
    }

    fn unit_bands(k: usize) -> Vec<Band> {
        (0..k).map(|i| (i as f64, i as f64 + 1.0)).collect()
    }

    fn conc(pairs: &[(&str, f64)]) -> ConcentrationVector {
        ConcentrationVector::new(pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect())
    }

    #[test]
    fn thermometry_round_trip() {
        let (t, r) = (300.0, 1000.0);
        let th = johnson_thermometry(4.0 * BOLTZMANN * t * r, 4.0 * BOLTZMANN * t / r).unwrap();
        assert_relative_eq!(th.temperature, t, max_relative = 1e-9);
        assert_relative_eq!(th.resistance, r, max_relative = 1e-9);
        let th = johnson_thermometry(1.6568e-17, 1.6568e-23).unwrap();
        assert_relative_eq!(th.temperature, 300.0, max_relative = 1e-3);
        assert_relative_eq!(th.resistance, 1000.0, max_relative = 1e-9);
        assert!(johnson_thermometry(0.0, 1.0).is_err());
        assert!(johnson_thermometry(1.0, -1.0).is_err());
    }

    #[test]
    fn scalar_calibration() {
        let reference = flat(&[1.0]);
        let measured = flat(&[7.0]);
        let cal = calibrate(&[(conc(&[("x", 2.0)]), measured)], &reference, &unit_bands(1)).unwrap();
        assert_eq!(cal.a, vec![3.0]);
        assert_eq!(cal.condition_number, 1.0);
    }

    #[test]
    fn duplicated_profiles_are_degenerate() {
        let reference = flat(&[0.0, 0.0, 0.0]);
        // species y responds exactly like x
        let training = vec![
            (conc(&[("x", 1.0), ("y", 0.0)]), flat(&[1.0, 2.0, 3.0])),
            (conc(&[("x", 0.0), ("y", 1.0)]), flat(&[1.0, 2.0, 3.0])),
        ];
        match calibrate(&training, &reference, &unit_bands(3)) {
            Err(FesError::DegenerateCalibration { first, second, .. }) => {
                assert_eq!((first.as_str(), second.as_str()), ("x", "y"));
            }
            other => panic!("expected degenerate calibration, got {other:?}"),
        }
        // co-varying training concentrations are just as useless
        let training = vec![
            (conc(&[("x", 1.0), ("y", 2.0)]), flat(&[1.0, 2.0, 3.0])),
            (conc(&[("x", 2.0), ("y", 4.0)]), flat(&[2.0, 4.0, 6.0])),
        ];
        assert!(matches!(
            calibrate(&training, &reference, &unit_bands(3)),
            Err(FesError::DegenerateCalibration { .. })
        ));
    }

    #[test]
    fn calibration_json_round_trip() {
        let reference = flat(&[0.0, 0.0]);
        let training = vec![
            (conc(&[("x", 1.0), ("y", 0.0)]), flat(&[1.0, 0.5])),
            (conc(&[("x", 0.0), ("y", 1.0)]), flat(&[0.2, 2.0])),
        ];
        let cal = calibrate(&training, &reference, &unit_bands(2)).unwrap();
        assert_eq!(cal.provenance.len(), 64);
        let back = CalibrationMatrix::from_json(&cal.to_json()).unwrap();
        assert_eq!(back, cal);
        assert!(CalibrationMatrix::from_json("{\"bands\": []}").is_err());
    }

    #[test]
    fn unmix_identity_and_zero() {
        let reference = flat(&[0.0, 0.0, 0.0]);
        let training = vec![
            (conc(&[("a", 1.0), ("b", 0.0), ("c", 0.0)]), flat(&[1.0, 0.0, 0.0])),
            (conc(&[("a", 0.0), ("b", 1.0), ("c", 0.0)]), flat(&[0.0, 1.0, 0.0])),
            (conc(&[("a", 0.0), ("b", 0.0), ("c", 1.0)]), flat(&[0.0, 0.0, 1.0])),
        ];
        let cal = calibrate(&training, &reference, &unit_bands(3)).unwrap();
        let c = unmix(&flat(&[1.0, 2.0, 3.0]), &reference, &cal, false).unwrap();
        assert_eq!(c.values.values().copied().collect::<Vec<_>>(), vec![1.0, 2.0, 3.0]);
        let zero = unmix(&reference, &reference, &cal, true).unwrap();
        assert!(zero.values.values().all(|v| *v == 0.0));
        assert_eq!(zero.residual_norm, 0.0);
        let other_grid = SpectrumEstimate::new(vec![0.1, 1.1, 2.1], vec![0.0; 3], 1, "a", Normalization::Raw).unwrap();
        assert!(unmix(&other_grid, &reference, &cal, false).is_err());
    }

    #[test]
    fn capacity_examples() {
        assert_eq!(classical_capacity(&query(1e3), 1e-5, false).unwrap(), 0.0);
        let base = classical_capacity(&query(2e3), 1e-5, false).unwrap();
        let mut bigger = query(2e3);
        bigger.geometry.surface_a_s *= 2.0;
        assert!(classical_capacity(&bigger, 1e-5, false).unwrap() > base);
        assert_relative_eq!(
            classical_capacity(&query(2e3), 1e-5, true).unwrap(),
            base / std::f64::consts::LN_2,
            max_relative = 1e-12
        );

        // choose hooge_a so the log argument is e - 1
        let q = query(2e3);
        let g = q.geometry;
        let x_unit = 8.0 * std::f64::consts::PI.powi(2) * g.surface_a_s * g.thickness_d * 0.25;
        let a = x_unit / (std::f64::consts::E - 1.0);
        assert_relative_eq!(classical_capacity(&q, a, false).unwrap(), 1.0 / (2.0 * q.t_m), max_relative = 1e-12);
    }

    #[test]
    fn scaling_examples() {
        let q = query(2e3);
        assert_relative_eq!(fes_capacity_scaling(&q).unwrap(), 1e7, max_relative = 1e-15);
        let longer = CapacityQuery { t_m: 20.0, ..q };
        assert_relative_eq!(fes_capacity_scaling(&longer).unwrap(), 2e7, max_relative = 1e-15);
        let faster = CapacityQuery { fs: 2000.0, ..q };
        assert_relative_eq!(fes_capacity_scaling(&faster).unwrap(), 4e7, max_relative = 1e-15);
    }

    #[test]
    fn selectivity_examples() {
        assert_eq!(selectivity_enhancement(3, 6, SelectivityMode::Psd).unwrap(), 18);
        assert_eq!(selectivity_enhancement(3, 6, SelectivityMode::Bispectrum).unwrap(), 54);
        assert_eq!(selectivity_enhancement(1, 1, SelectivityMode::Psd).unwrap(), 1);
        assert_eq!(selectivity_enhancement(1, 1, SelectivityMode::Bispectrum).unwrap(), 1);
        assert!(selectivity_enhancement(0, 1, SelectivityMode::Psd).is_err());
    }

    proptest! {
        #[test]
        fn thermometry_scale_invariance(su in 1e-20f64..1e-10, si in 1e-28f64..1e-18, alpha in 1e-3f64..1e3) {
            let base = johnson_thermometry(su, si).unwrap();
            let scaled = johnson_thermometry(alpha * su, si / alpha).unwrap();
            prop_assert!((scaled.temperature - base.temperature).abs() <= 1e-12 * base.temperature);
            prop_assert!((scaled.resistance - alpha * base.resistance).abs() <= 1e-12 * alpha * base.resistance);
        }

        #[test]
        fn capacity_is_monotone(extra in 1.01f64..10.0) {
            let q = query(3e3);
            let c = classical_capacity(&q, 1e-5, false).unwrap();
            let mut g = q;
            g.geometry.thickness_d *= extra;
            prop_assert!(classical_capacity(&g, 1e-5, false).unwrap() > c);
            prop_assert!(classical_capacity(&q, 1e-5 * extra, false).unwrap() < c);
            let longer = CapacityQuery { t_m: q.t_m * extra, ..q };
            prop_assert!(classical_capacity(&longer, 1e-5, false).unwrap() < c);
            let further = CapacityQuery { r: 1e3 + 2e3 * extra, ..q };
            prop_assert!(classical_capacity(&further, 1e-5, false).unwrap() > c);
        }
    }
}
