use fes_core::instrument::{
    amplifier_bn_psd_ratio, max_feedback_resistance, tia_dc_operating_point,
    tia_equivalent_input_noise, vnm_coupling_response, vnm_input_psd, Chain, ComponentLibrary,
    DutModel, TiaChain, TiaTopology,
};
use fes_core::spectral::log_grid;
use fes_core::{format_f64 as num, FesError, Normalization, SpectrumEstimate};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::output::{csv_table, Outputs, ResultEnvelope, SpectrumRecord};

fn topology_name(t: TiaTopology) -> &'static str {
    match t {
        TiaTopology::BiasThroughFeedback => "bias_through_feedback",
        TiaTopology::GroundedDut => "grounded_dut",
    }
}

pub fn budget(
    cfg: &ExperimentConfig,
    library: &ComponentLibrary,
    out: &mut Outputs,
) -> CliResult<ResultEnvelope> {
    let spec = cfg
        .budget
        .as_ref()
        .ok_or_else(|| CliError::Config("the budget command needs a [budget] section".into()))?;
    let chain = cfg
        .chain
        .as_ref()
        .ok_or_else(|| CliError::Config("the budget command needs a [chain] section".into()))?;
    let dut = match (&cfg.dut, &cfg.sensor) {
        (Some(d), _) => d.clone(),
        (None, Some(s)) => DutModel::new(s.build()?.mean_r),
        (None, None) => {
            return Err(CliError::Config(
                "set [dut] or [sensor] to describe the device".into(),
            ))
        }
    };
    if !(spec.f_min > 0.0 && spec.f_max > spec.f_min) || spec.points_per_decade == 0 {
        return Err(CliError::Config(format!(
            "budget frequency range [{}, {}] is empty",
            spec.f_min, spec.f_max
        )));
    }
    let grid = log_grid(spec.f_min, spec.f_max, spec.points_per_decade);
    let mut env = ResultEnvelope::new("budget", cfg);

    // input-referred sweep; `total` is the sum of the part columns in order
    let mut rows = Vec::with_capacity(grid.len());
    let mut totals = Vec::with_capacity(grid.len());
    let header: &[&str] = match chain {
        Chain::Vnm(c) => {
            let mut coupling = Vec::with_capacity(grid.len());
            for &f in &grid {
                let b = vnm_input_psd(c, &dut, f)?;
                rows.push(vec![
                    num(f),
                    num(b.bias_current_term),
                    num(b.dut),
                    num(b.evn),
                    num(b.total),
                ]);
                totals.push(b.total);
                let r = vnm_coupling_response(c, f)?;
                coupling.push(vec![
                    num(f),
                    num(r.gain_magnitude),
                    num(r.ra_noise_contribution),
                ]);
            }
            out.add_csv(
                "budget_coupling.csv",
                csv_table(
                    &["freq_hz", "gain_magnitude", "ra_noise_v2_per_hz"],
                    &coupling,
                ),
            );
            let r = vnm_coupling_response(c, spec.f_min)?;
            let bias = c.bias_current(&dut);
            env.metric("coupling_corner_hz", r.corner_frequency);
            env.metric("settle_time_s", r.settle_time);
            env.metric("bias_current_a", bias);
            env.metric("gain", c.gain());
            out.add_csv(
                "budget_headroom.csv",
                csv_table(
                    &[
                        "bias_current_a",
                        "coupling_corner_hz",
                        "settle_time_s",
                        "gain",
                    ],
                    &[vec![
                        num(bias),
                        num(r.corner_frequency),
                        num(r.settle_time),
                        num(c.gain()),
                    ]],
                ),
            );
            &["freq_hz", "bias_current_term", "dut", "evn", "total"]
        }
        Chain::Tia(c) => {
            for &f in &grid {
                let b = tia_equivalent_input_noise(c, &dut, f)?;
                rows.push(vec![
                    num(f),
                    num(b.bias_term),
                    num(b.evn_term),
                    num(b.feedback),
                    num(b.dut),
                    num(b.s_in),
                ]);
                totals.push(b.s_in);
            }
            let i_b = spec.bias_current.unwrap_or(c.v_b / dut.r_d);
            out.add_csv(
                "budget_headroom.csv",
                headroom_table(c, i_b, spec.margin, &mut env)?,
            );
            &[
                "freq_hz",
                "bias_term",
                "evn_term",
                "feedback",
                "dut",
                "total",
            ]
        }
    };
    out.add_csv("budget_sweep.csv", csv_table(header, &rows));
    let unit = match chain {
        Chain::Vnm(_) => "V^2/Hz",
        Chain::Tia(_) => "A^2/Hz",
    };
    let est = SpectrumEstimate::new(grid.clone(), totals, 1, "analytic", Normalization::Raw)?;
    env.spectra
        .push(SpectrumRecord::new("input_noise", unit, &est));
    let output: Vec<f64> = grid
        .iter()
        .map(|&f| chain.output_noise(&dut, f).map(|b| b.total))
        .collect::<Result<_, _>>()?;
    let est = SpectrumEstimate::new(grid, output, 1, "analytic", Normalization::Raw)?;
    env.spectra
        .push(SpectrumRecord::new("chain_output_noise", "V^2/Hz", &est));

    if !spec.compare.is_empty() {
        out.add_csv(
            "budget_amplifiers.csv",
            compare_table(library, &spec.compare, &spec.compare_frequencies, &mut env)?,
        );
    }
    Ok(env)
}

fn headroom_table(
    chain: &TiaChain,
    i_b: f64,
    margin: f64,
    env: &mut ResultEnvelope,
) -> CliResult<Vec<u8>> {
    let header = [
        "topology",
        "bias_current_a",
        "margin_v",
        "supply_limit_v",
        "bias_voltage_v",
        "max_feedback_ohm",
        "output_dc_at_max_v",
        "feasible",
        "configured_feedback_ohm",
        "configured_output_dc_v",
        "configured_in_linearity",
    ];
    let mut rows = Vec::new();
    for topology in [TiaTopology::BiasThroughFeedback, TiaTopology::GroundedDut] {
        let c = TiaChain {
            topology,
            ..chain.clone()
        };
        let name = topology_name(topology);
        let configured = tia_dc_operating_point(&c, i_b);
        let (r_max, v_at_max, feasible) = match max_feedback_resistance(&c, i_b, margin) {
            Ok(r) => {
                let v = tia_dc_operating_point(&c.with_feedback(r), i_b).v_odc;
                env.metric(format!("max_feedback_ohm.{name}"), r);
                (num(r), num(v), true)
            }
            Err(FesError::NoFeasibleGain(_)) => (String::new(), String::new(), false),
            Err(e) => return Err(e.into()),
        };
        env.metric(format!("feasible.{name}"), if feasible { 1.0 } else { 0.0 });
        rows.push(vec![
            name.to_string(),
            num(i_b),
            num(margin),
            num(c.supply_limit),
            num(c.v_b),
            r_max,
            v_at_max,
            feasible.to_string(),
            num(c.r_r),
            num(configured.v_odc),
            configured.in_linearity.to_string(),
        ]);
    }
    Ok(csv_table(&header, &rows))
}

fn compare_table(
    library: &ComponentLibrary,
    names: &[String],
    freqs: &[f64],
    env: &mut ResultEnvelope,
) -> CliResult<Vec<u8>> {
    let specs = names
        .iter()
        .map(|n| {
            library
                .get(n)
                .map_err(|e| CliError::Config(format!("budget.compare: {e}")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let mut rows = Vec::new();
    for i in 0..names.len() {
        for j in 0..names.len() {
            if i == j {
                continue;
            }
            for &f in freqs {
                let ratio = amplifier_bn_psd_ratio(&specs[i], &specs[j], f)?;
                env.metric(
                    format!("psd_ratio.{}/{}@{}hz", names[i], names[j], f),
                    ratio,
                );
                rows.push(vec![names[i].clone(), names[j].clone(), num(f), num(ratio)]);
            }
        }
    }
    Ok(csv_table(
        &["amplifier_a", "amplifier_b", "freq_hz", "psd_ratio"],
        &rows,
    ))
}
