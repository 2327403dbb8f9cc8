use std::collections::BTreeMap;

use fes_core::sensor::{
    run_sample_and_hold, GasSpecies, HeatingDisturbance, SampleHoldProtocol, SensorGeometry, SensorState, SpeciesDb,
};
use fes_core::spectral::welch_psd;
use fes_core::{CaptureConfig, Fluctuator, Seed, TimeSeries, BOLTZMANN};

const HOT: f64 = 600.0;
const COLD: f64 = 300.0;
const FS: f64 = 200.0;

fn sensor() -> SensorState {
    let geometry = SensorGeometry {
        surface_a_s: 1e-6,
        thickness_d: 1e-6,
        diffusion_d: 1e-12,
        r0: 1e4,
        hooge_a: 1e-4,
    };
    // activation energy that slows every fluctuator 100x on cooling
    let e = 100f64.ln() * BOLTZMANN / (1.0 / COLD - 1.0 / HOT);
    let bank = [1e-3, 3e-3, 1e-2, 3e-2]
        .iter()
        .map(|&tau| Fluctuator::activated(4.0 * tau, tau, e, HOT).unwrap())
        .collect();
    SensorState::new(geometry, bank, COLD).unwrap()
}

fn db() -> SpeciesDb {
    let mut db = SpeciesDb::new();
    db.insert(
        "co".into(),
        GasSpecies {
            name: "co".into(),
            band_coeffs: vec![(1, 0.01), (2, 0.02)],
            dr_coeff: 50.0,
            saturation: None,
        },
    );
    db
}

fn band_power(ts: &TimeSeries) -> f64 {
    let cfg = CaptureConfig::new(1.0, ts.duration(), FS);
    welch_psd(ts, &cfg).unwrap().band_mean(1.0, 20.0).unwrap()
}

fn variance(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

#[test]
fn cold_readout_is_more_reproducible_than_the_heated_phase() {
    let protocol = SampleHoldProtocol {
        heat_temperature: HOT,
        heat_duration: 20.0,
        cold_temperature: COLD,
        measure_duration: 20.0,
        disturbance: Some(HeatingDisturbance { strength_c: 32.0, tau: 2.0 }),
    };
    let conc: BTreeMap<String, f64> = [("co".to_string(), 1.0)].into();
    let (mut hot, mut cold) = (Vec::new(), Vec::new());
    for s in 0..20 {
        let run = run_sample_and_hold(&sensor(), &protocol, &conc, &db(), FS, Seed::new(1000 + s)).unwrap();
        hot.push(band_power(&run.hot));
        cold.push(band_power(&run.cold));
    }
    let (vh, vc) = (variance(&hot), variance(&cold));
    assert!(vc < vh, "cold variance {vc} vs hot {vh}");
}
