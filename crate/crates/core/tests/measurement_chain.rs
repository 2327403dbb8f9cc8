use fes_core::instrument::{
    filter_through_chain, Chain, ComponentLibrary, DutModel, NoiseSourceSpec, TiaChain, TiaTopology, VnmChain,
};
use fes_core::spectral::welch_psd;
use fes_core::synth::shaped_noise;
use fes_core::{CaptureConfig, Seed, SpectrumEstimate, TimeSeries};

fn band_ratios(est: &SpectrumEstimate, model: impl Fn(f64) -> f64, lo: f64, hi: f64, per_decade: f64) -> Vec<f64> {
    let bands = ((hi / lo).log10() * per_decade).round() as usize;
    (0..bands)
        .map(|b| {
            let a = lo * 10f64.powf(b as f64 / per_decade);
            let z = lo * 10f64.powf((b + 1) as f64 / per_decade);
            let idx: Vec<usize> = (0..est.len()).filter(|&k| est.freqs[k] >= a && est.freqs[k] < z).collect();
            assert!(idx.len() >= 8, "band [{a}, {z}) has only {} bins", idx.len());
            let e: f64 = idx.iter().map(|&k| est.values[k]).sum();
            let m: f64 = idx.iter().map(|&k| model(est.freqs[k])).sum();
            e / m
        })
        .collect()
}

fn vnm() -> VnmChain {
    VnmChain {
        r_a: 1e6,
        c_a: 20e-6,
        r_bias: 1e6,
        v_bias: 9.0,
        lnva_evn: ComponentLibrary::builtin().get("opa_x140").unwrap(),
        lnva_eicn: NoiseSourceSpec::noiseless(),
        gain_stage1_db: 40.0,
        gain_stage2_db: 20.0,
        temperature: 300.0,
        ideal_bias: false,
        dc_coupled: false,
    }
}

fn capture(t_w: f64, fs: f64, averages: usize) -> CaptureConfig {
    CaptureConfig::new(t_w, CaptureConfig::new(t_w, t_w, fs).t_m_for_averages(averages), fs)
}

fn zeros(cfg: &CaptureConfig, unit: &str) -> TimeSeries {
    let n = (cfg.t_m * cfg.fs).round() as usize;
    TimeSeries::new(vec![0.0; n], cfg.fs, unit).unwrap()
}

#[test]
fn voltage_chain_noise_matches_its_budget() {
    let chain = Chain::Vnm(vnm());
    let dut = DutModel::new(50e3);
    let cfg = capture(10.0, 200.0, 100);
    let out = filter_through_chain(&zeros(&cfg, "V"), &chain, &dut, Seed::new(5)).unwrap();
    let est = welch_psd(&out, &cfg).unwrap();
    let model = |f: f64| chain.output_noise(&dut, f).unwrap().total;
    for r in band_ratios(&est, model, 1.0, 90.0, 4.0) {
        assert!((r - 1.0).abs() < 0.2, "band ratio {r}");
    }
}

#[test]
fn transimpedance_chain_noise_matches_its_budget() {
    let chain = Chain::Tia(TiaChain {
        r_r: 1e7,
        v_b: 1.0,
        supply_limit: 5.0,
        oa_evn: NoiseSourceSpec::one_over_f_plus_white(3.6e-15 / 11.0, 10.0),
        bias_evn: NoiseSourceSpec::white(1e-16),
        topology: TiaTopology::GroundedDut,
        c_b: 10e-6,
        r_b: 1e6,
        temperature: 300.0,
        dc_coupled: false,
    });
    let dut = DutModel::new(1e7).with_capacitance(1e-9);
    let cfg = capture(10.0, 200.0, 100);
    let out = filter_through_chain(&zeros(&cfg, "A"), &chain, &dut, Seed::new(6)).unwrap();
    let est = welch_psd(&out, &cfg).unwrap();
    let model = |f: f64| chain.output_noise(&dut, f).unwrap().total;
    for r in band_ratios(&est, model, 1.0, 90.0, 4.0) {
        assert!((r - 1.0).abs() < 0.2, "band ratio {r}");
    }
}

#[test]
fn strong_device_noise_passes_with_the_chain_gain() {
    let chain = Chain::Vnm(vnm());
    let dut = DutModel::new(10e3);
    let cfg = capture(10.0, 200.0, 100);
    let n = (cfg.t_m * cfg.fs).round() as usize;
    // flicker-like device noise far above the amplifier floor
    let device = |f: f64| 1e-12 / f;
    let input = TimeSeries::new(shaped_noise(device, n, cfg.fs, Seed::new(70)), cfg.fs, "V").unwrap();
    let out = filter_through_chain(&input, &chain, &dut, Seed::new(71)).unwrap();
    let est_in = welch_psd(&input, &cfg).unwrap();
    let est_out = welch_psd(&out, &cfg).unwrap();
    let in_band = |s: &SpectrumEstimate| s.band_mean(1.0, 50.0).unwrap();
    let g2: f64 = est_out
        .freqs
        .iter()
        .filter(|f| **f >= 1.0 && **f < 50.0)
        .map(|&f| chain.gain_magnitude(f).powi(2))
        .sum::<f64>()
        / est_out.freqs.iter().filter(|f| **f >= 1.0 && **f < 50.0).count() as f64;
    let ratio = in_band(&est_out) / g2 / in_band(&est_in);
    assert!((ratio - 1.0).abs() < 0.1, "ratio {ratio}");
}
