//! `drlab tomo`: synthesize (or load) heterodyne shots, estimate moments,
//! reconstruct by MLE, and cross-validate against the MPO fit.

use std::path::Path;

use drlab::channels::{compose_chain, noisy_emission_channel};
use drlab::io;
use drlab::states::{fidelity, make_ideal_cluster, project_logical_subspace, Branch};
use drlab::tomography::{
    estimate_moments, mle_reconstruct, mpo_reconstruct, sampling_requirement,
    synthesize_shots, NoiseCalibration, ShotRecord, DEFAULT_BOOTSTRAP,
};
use drlab::{Error, Result};

use crate::config::RunConfig;

fn trace_distance(a: &drlab::linalg::CMat, b: &drlab::linalg::CMat) -> f64 {
    let diff = a - b;
    let (vals, _) = drlab::linalg::eigh(&diff);
    0.5 * vals.iter().map(|v| v.abs()).sum::<f64>()
}

pub fn run(
    cfg: &RunConfig,
    n_logical: Option<usize>,
    shots: Option<usize>,
    shot_file: Option<&Path>,
    no_mpo: bool,
) -> Result<()> {
    let n_logical = n_logical.unwrap_or(2);
    let n_shots = shots.unwrap_or(1_000_000);
    if n_shots == 0 {
        return Err(Error::InvalidArgument("shot count must be positive".into()));
    }
    cfg.prepare(
        "tomo",
        serde_json::json!({
            "n_logical": n_logical,
            "shots": n_shots,
            "shot_file": shot_file.map(|p| p.display().to_string()),
            "no_mpo": no_mpo,
        }),
    )?;
    let n_modes = 2 * n_logical;

    // reference state from the calibrated channel
    let report = super::calibrated().clone();
    let channel = noisy_emission_channel(&report.noise_params())?;
    let model_state = compose_chain(&channel, n_logical, Branch::Plus)?;
    let cal = NoiseCalibration::paper_for_modes(n_modes);

    let record: ShotRecord = match shot_file {
        Some(stem) => io::load_shots(
            &stem.with_extension("drshot"),
            &stem.with_extension("vac.drshot"),
        )?,
        None => {
            let rec = synthesize_shots(&model_state, &cal, n_shots, cfg.seed)?;
            io::save_shots(&cfg.out.join("shots"), &rec)?;
            rec
        }
    };
    if record.mode_count() != n_modes {
        return Err(Error::DimensionMismatch(format!(
            "shot record has {} modes, expected {n_modes}",
            record.mode_count()
        )));
    }

    let window: Vec<usize> = (0..n_modes).collect();
    let table = estimate_moments(&record, 2, &window, DEFAULT_BOOTSTRAP, cfg.seed + 1)?;
    io::save_moments(&cfg.out.join("moments.json"), &table)?;

    let (mle_state, mle_info) = mle_reconstruct(&table, &vec![2; n_modes])?;
    io::save_state(&cfg.out.join("mle_state.json"), &mle_state)?;

    let ideal = make_ideal_cluster(n_logical, Branch::Plus)?;
    let f_vs_model = fidelity(&mle_state, &model_state)?;
    let f_vs_ideal = fidelity(&mle_state, &ideal)?;
    let (logical_state, p_logical) = project_logical_subspace(&mle_state)?;
    let ideal_logical = project_logical_subspace(&ideal)?.0;
    let f_logical = fidelity(&logical_state, &ideal_logical)?;

    // sampling requirement for full tomography of this chain
    let required = sampling_requirement(&cal.n0, &vec![2; n_modes])?;

    let mut mpo_report = serde_json::Value::Null;
    if !no_mpo && n_modes >= 5 {
        let windows: Vec<_> = (0..=n_modes - 5)
            .map(|s| {
                let w: Vec<usize> = (s..s + 5).collect();
                estimate_moments(&record, 2, &w, DEFAULT_BOOTSTRAP, cfg.seed + 2)
            })
            .collect::<Result<_>>()?;
        let (mpo_state, mpo_info) = mpo_reconstruct(&windows, n_modes)?;
        io::save_state(&cfg.out.join("mpo_state.json"), &mpo_state)?;
        let dist = trace_distance(mpo_state.matrix(), mle_state.matrix());
        mpo_report = serde_json::json!({
            "trace_distance_to_mle": dist,
            "objective": mpo_info.objective,
            "sweeps": mpo_info.sweeps,
            "converged": mpo_info.converged,
            "projection_shift": mpo_info.projection_shift,
        });
    }

    let report = serde_json::json!({
        "n_logical": n_logical,
        "shots": record.shot_count(),
        "fidelity_vs_model": f_vs_model,
        "fidelity_vs_ideal": f_vs_ideal,
        "logical_fidelity_vs_ideal": f_logical,
        "logical_success_probability": p_logical,
        "mle_iterations": mle_info.iterations,
        "mle_objective": mle_info.objective,
        "mle_converged": mle_info.converged,
        "mle_warnings": mle_info.warnings,
        "moment_warnings": table.warnings,
        "sampling_requirement_full_tomography": required,
        "mpo": mpo_report,
    });
    std::fs::write(
        cfg.out.join("report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    Ok(())
}
