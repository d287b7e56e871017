//! `drlab le`: pairwise LE matrix (physical lower-left, logical
//! upper-right), distance curves, and threshold lengths.

use drlab::channels::{noisy_emission_channel, single_rail_channel};
use drlab::entanglement::{
    le_chain_logical, le_chain_physical, le_distance_curve, LeVariant,
};
use drlab::io;
use drlab::Result;

use crate::config::RunConfig;

pub fn run(cfg: &RunConfig, threshold: Option<f64>, n_logical: Option<usize>) -> Result<()> {
    let threshold = threshold.unwrap_or(0.05);
    let n_logical = n_logical.unwrap_or(4);
    cfg.prepare(
        "le",
        serde_json::json!({ "threshold": threshold, "n_logical": n_logical }),
    )?;

    let report = super::calibrated().clone();
    let params = report.noise_params();
    let dual = noisy_emission_channel(&params)?;
    let single = single_rail_channel(&params)?;

    // pairwise matrix mirroring the triangular layout: physical modes in the
    // lower-left triangle, logical qubits in the upper-right
    let n_modes = 2 * n_logical;
    let mut rows = Vec::new();
    for i in 0..n_modes {
        for j in 0..i {
            let le = le_chain_physical(&dual, n_logical, j, i)?;
            rows.push(vec![
                "physical".into(),
                i.to_string(),
                j.to_string(),
                io::fmt_f64(le.value),
                io::fmt_f64(le.stderr),
            ]);
        }
    }
    for i in 0..n_logical {
        for j in (i + 1)..n_logical {
            let le = le_chain_logical(&dual, n_logical, i, j)?;
            rows.push(vec![
                "logical".into(),
                i.to_string(),
                j.to_string(),
                io::fmt_f64(le.value),
                io::fmt_f64(le.stderr),
            ]);
        }
    }
    io::write_csv(
        &cfg.out.join("le_matrix.csv"),
        "variant,row,col,value,stderr",
        &rows,
    )?;

    let physical = le_distance_curve(&dual, threshold, LeVariant::Physical)?;
    let logical = le_distance_curve(&dual, threshold, LeVariant::Logical)?;
    let single_rail = le_distance_curve(&single, threshold, LeVariant::SingleRail)?;
    for (name, curve) in [
        ("le_physical.csv", &physical),
        ("le_logical.csv", &logical),
        ("le_single_rail.csv", &single_rail),
    ] {
        let rows: Vec<Vec<String>> = curve
            .rows
            .iter()
            .map(|(n, v)| vec![n.to_string(), io::fmt_f64(*v)])
            .collect();
        io::write_csv(&cfg.out.join(name), "chain_length,value", &rows)?;
    }
    let summary = serde_json::json!({
        "threshold": threshold,
        "physical_threshold_length": physical.threshold_length,
        "logical_threshold_length": logical.threshold_length,
        "single_rail_threshold_length": single_rail.threshold_length,
    });
    std::fs::write(
        cfg.out.join("thresholds.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(())
}
