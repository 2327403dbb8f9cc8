//! Time-domain observation of a device signal through a measurement chain.

use rustfft::{num_complex::Complex64, FftPlanner};

use super::{Chain, DutModel};
use crate::error::Result;
use crate::seed::Seed;
use crate::series::TimeSeries;
use crate::synth::shaped_noise;

/// Passes `ts` (device voltage for voltage chains, device current for
/// transimpedance chains) through the chain's frequency response and adds
/// one independent realization of every chain noise part, each drawn with a
/// seed labelled by the part name. The amplifier voltage noise of a
/// transimpedance chain is drawn once with its combined noise gain.
///
/// Filtering is circular (done on the whole record in the frequency domain).
/// The output is in volts.
pub fn filter_through_chain(ts: &TimeSeries, chain: &Chain, dut: &DutModel, seed: Seed) -> Result<TimeSeries> {
    chain.validate()?;
    dut.validate()?;
    let n = ts.len();
    let fs = ts.sample_rate();
    let nf = n as f64;

    let mut spec: Vec<Complex64> = ts.samples().iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut spec);
    for k in 0..=n / 2 {
        let (re, im) = chain.transfer(k as f64 * fs / nf);
        let h = Complex64::new(re, im);
        spec[k] *= h;
        if k > 0 && n - k != k {
            spec[n - k] *= h.conj();
        }
    }
    planner.plan_fft_inverse(n).process(&mut spec);
    let mut out: Vec<f64> = spec.iter().map(|z| z.re / nf).collect();

    let names: Vec<&'static str> = chain.output_noise(dut, 1.0)?.parts.iter().map(|p| p.0).collect();
    for name in names {
        let psd = |f: f64| {
            chain
                .output_noise(dut, f)
                .ok()
                .and_then(|b| b.part(name))
                .unwrap_or(0.0)
        };
        if (1..=n / 2).all(|k| psd(k as f64 * fs / nf) == 0.0) {
            continue;
        }
        let noise = shaped_noise(psd, n, fs, seed.labeled(name));
        out.iter_mut().zip(noise).for_each(|(o, v)| *o += v);
    }
    TimeSeries::new(out, fs, "V")
}
