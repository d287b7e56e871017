//! `drlab generate`: ideal and noisy state files plus the fidelity scaling
//! table.

use drlab::channels::{
    chain_logical_success, compose_chain, fidelity_scaling_curve, ideal_emission_channel,
    noisy_emission_channel,
};
use drlab::io;
use drlab::states::{make_ideal_cluster, Branch};
use drlab::Result;

use crate::config::RunConfig;

pub fn run(
    cfg: &RunConfig,
    n_max: Option<usize>,
    ideal: bool,
    noise: Option<&str>,
) -> Result<()> {
    let n_max = n_max.unwrap_or(8);
    cfg.prepare(
        "generate",
        serde_json::json!({ "n_max": n_max, "ideal": ideal, "noise": noise }),
    )?;

    let (channel, calibration) = if ideal {
        (ideal_emission_channel(), None)
    } else if let Some(text) = noise {
        let p = super::parse_noise(text)?;
        (noisy_emission_channel(&p)?, None)
    } else {
        let report = super::calibrated().clone();
        let ch = noisy_emission_channel(&report.noise_params())?;
        (ch, Some(report))
    };
    if let Some(report) = &calibration {
        std::fs::write(
            cfg.out.join("calibration.json"),
            serde_json::to_string_pretty(report)?,
        )?;
    }
    io::save_channel(&cfg.out.join("channel.json"), &channel)?;

    // dense states up to four logical qubits
    for n in 1..=n_max.min(4) {
        let ideal_state = make_ideal_cluster(n, Branch::Plus)?;
        io::save_state(&cfg.out.join(format!("ideal_n{n}.json")), &ideal_state)?;
        let noisy_state = compose_chain(&channel, n, Branch::Plus)?;
        io::save_state(&cfg.out.join(format!("state_n{n}.json")), &noisy_state)?;
    }

    let raw = fidelity_scaling_curve(&channel, n_max, false)?;
    let logical = fidelity_scaling_curve(&channel, n_max, true)?;
    let mut rows = Vec::new();
    for (r, l) in raw.rows.iter().zip(&logical.rows) {
        let p_logical = if r.extrapolated {
            f64::NAN
        } else {
            chain_logical_success(&channel, r.n, Branch::Plus)?
        };
        rows.push(vec![
            r.n.to_string(),
            io::fmt_f64(r.fidelity),
            io::fmt_f64(r.stderr),
            (r.extrapolated as u8).to_string(),
            io::fmt_f64(l.fidelity),
            io::fmt_f64(l.stderr),
            (l.extrapolated as u8).to_string(),
            if p_logical.is_nan() { String::from("") } else { io::fmt_f64(p_logical) },
        ]);
    }
    io::write_csv(
        &cfg.out.join("fidelity.csv"),
        "n,raw_fidelity,raw_stderr,raw_extrapolated,logical_fidelity,logical_stderr,logical_extrapolated,logical_success_probability",
        &rows,
    )?;
    let summary = serde_json::json!({
        "raw_threshold_half": raw.threshold_half,
        "logical_threshold_half": logical.threshold_half,
    });
    std::fs::write(
        cfg.out.join("thresholds.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(())
}
