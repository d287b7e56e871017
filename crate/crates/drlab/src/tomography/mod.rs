//! Heterodyne moment tomography: synthetic shot records, noise-deconvolved
//! moment estimation, constrained maximum-likelihood reconstruction, the
//! local-correlation MPO variant, and process tomography.

mod mle;
mod moments;
mod mpo;
mod process;
mod shots;

pub use mle::{mle_reconstruct, solve_psd, MleInfo, SparseOp, WeightedLsq};
pub use moments::{
    estimate_moments, exponent_tuples, forward_convolve, moments_from_state,
    sampling_requirement, ExpKey, MomentEntry, MomentTable, DEFAULT_BOOTSTRAP,
};
pub use mpo::{mpo_ideal_sites, mpo_reconstruct, MpoInfo, MpoSiteTensors, BOND_DIM};
pub use process::{
    process_tomography, synthesize_process_shots, ProcessInput, ProcessShotRecord,
    ProcessTomoInfo,
};
pub use shots::{synthesize_shots, NoiseCalibration, ShotRecord};
