//! `drlab compare`: side-by-side dual-rail (raw and logical-subspace) versus
//! single-rail fidelity and LE tables from the same calibrated noise.

use drlab::channels::{fidelity_scaling_curve, noisy_emission_channel, single_rail_channel};
use drlab::entanglement::{le_distance_curve, LeVariant};
use drlab::io;
use drlab::Result;

use crate::config::RunConfig;

pub fn run(cfg: &RunConfig, n_max: Option<usize>, threshold: Option<f64>) -> Result<()> {
    let n_max = n_max.unwrap_or(8);
    let threshold = threshold.unwrap_or(0.05);
    cfg.prepare(
        "compare",
        serde_json::json!({ "n_max": n_max, "threshold": threshold }),
    )?;

    let report = super::calibrated().clone();
    let params = report.noise_params();
    let dual = noisy_emission_channel(&params)?;
    let single = single_rail_channel(&params)?;

    let dual_raw = fidelity_scaling_curve(&dual, n_max, false)?;
    let dual_logical = fidelity_scaling_curve(&dual, n_max, true)?;
    let single_raw = fidelity_scaling_curve(&single, n_max, false)?;
    let mut rows = Vec::new();
    for k in 0..dual_raw.rows.len() {
        rows.push(vec![
            dual_raw.rows[k].n.to_string(),
            io::fmt_f64(dual_raw.rows[k].fidelity),
            io::fmt_f64(dual_logical.rows[k].fidelity),
            io::fmt_f64(single_raw.rows[k].fidelity),
            (dual_raw.rows[k].extrapolated as u8).to_string(),
        ]);
    }
    io::write_csv(
        &cfg.out.join("compare_fidelity.csv"),
        "n,dual_raw,dual_logical,single_rail,extrapolated",
        &rows,
    )?;

    let le_logical = le_distance_curve(&dual, threshold, LeVariant::Logical)?;
    let le_physical = le_distance_curve(&dual, threshold, LeVariant::Physical)?;
    let le_single = le_distance_curve(&single, threshold, LeVariant::SingleRail)?;
    let max_len = le_logical
        .rows
        .len()
        .max(le_physical.rows.len())
        .max(le_single.rows.len());
    let cell = |rows: &[(usize, f64)], k: usize| -> String {
        rows.get(k).map(|(_, v)| io::fmt_f64(*v)).unwrap_or_default()
    };
    let mut rows = Vec::new();
    for k in 0..max_len {
        rows.push(vec![
            (k + 2).to_string(),
            cell(&le_logical.rows, k),
            cell(&le_physical.rows, k),
            cell(&le_single.rows, k),
        ]);
    }
    io::write_csv(
        &cfg.out.join("compare_le.csv"),
        "chain_length,dual_logical,dual_physical,single_rail",
        &rows,
    )?;

    let summary = serde_json::json!({
        "fidelity_threshold_half": {
            "dual_raw": dual_raw.threshold_half,
            "dual_logical": dual_logical.threshold_half,
            "single_rail": single_raw.threshold_half,
        },
        "le_threshold_length": {
            "dual_logical": le_logical.threshold_length,
            "dual_physical": le_physical.threshold_length,
            "single_rail": le_single.threshold_length,
        },
        "calibration": report,
    });
    std::fs::write(
        cfg.out.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(())
}
