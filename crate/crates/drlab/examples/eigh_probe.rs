// instrument the process-tomography pipeline
use drlab::channels::{ideal_emission_channel, process_fidelity};
use drlab::tomography::{
    process_tomography, synthesize_process_shots, NoiseCalibration, ProcessInput,
};
use std::collections::BTreeMap;

fn main() {
    let ch = ideal_emission_channel();
    let cal = NoiseCalibration::paper_for_modes(2);
    let shots: BTreeMap<_, _> = ProcessInput::ALL
        .iter()
        .enumerate()
        .map(|(k, &input)| {
            (input, synthesize_process_shots(&ch, input, &cal, 60_000, 71 + k as u64).unwrap())
        })
        .collect();
    let (rec, info) = process_tomography(&shots, &cal).unwrap();
    let f_true = process_fidelity(&ch, &ideal_emission_channel()).unwrap();
    println!(
        "F_rec {:.5} vs true {:.5}, iters {}, obj {:.4e}, tp_def {:.4}",
        info.process_fidelity_vs_ideal, f_true, info.choi_iterations, info.choi_objective,
        rec.tp_deficit()
    );
}
