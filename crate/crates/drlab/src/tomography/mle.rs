//! Constrained maximum-likelihood reconstruction: projected gradient descent
//! on the weighted quadratic moment objective over the PSD trace-one set.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::states::{MultimodeState, Rail, SubsystemLabel};

use super::moments::{ExpKey, MomentTable};

/// Sparse operator on the product space: (row, col, value) triples.
#[derive(Debug, Clone)]
pub struct SparseOp {
    pub dim: usize,
    pub entries: Vec<(usize, usize, C64)>,
}

impl SparseOp {
    pub fn expectation(&self, rho: &CMat) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for &(r, c, v) in &self.entries {
            acc += rho[(c, r)] * v;
        }
        acc
    }

    pub fn add_scaled_into(&self, m: &mut CMat, factor: C64) {
        for &(r, c, v) in &self.entries {
            m[(r, c)] += factor * v;
        }
    }

    pub fn adjoint_add_scaled_into(&self, m: &mut CMat, factor: C64) {
        for &(r, c, v) in &self.entries {
            m[(c, r)] += factor * v.conj();
        }
    }
}

/// Per-mode factors of `(a^dag)^m a^n` on a two-dimensional Fock space:
/// exponents of two or more give the zero operator.
fn mode_factor(m: u8, n: u8) -> Vec<(usize, usize, C64)> {
    let one = C64::new(1.0, 0.0);
    match (m, n) {
        (0, 0) => vec![(0, 0, one), (1, 1, one)],
        (0, 1) => vec![(0, 1, one)],
        (1, 0) => vec![(1, 0, one)],
        (1, 1) => vec![(1, 1, one)],
        _ => vec![],
    }
}

/// Sparse normally-ordered moment operator over `n_modes` qubits, acting on
/// the window modes and as identity elsewhere.
pub(crate) fn moment_sparse_op(n_modes: usize, window: &[usize], key: &ExpKey) -> SparseOp {
    let dim = 1usize << n_modes;
    // factor per mode: identity unless the mode is in the window
    let mut factors: Vec<Vec<(usize, usize, C64)>> = vec![mode_factor(0, 0); n_modes];
    for (slot, &(m, n)) in key.iter().enumerate() {
        factors[window[slot]] = mode_factor(m, n);
    }
    let mut entries: Vec<(usize, usize, C64)> = vec![(0, 0, C64::new(1.0, 0.0))];
    for f in &factors {
        let mut next = Vec::with_capacity(entries.len() * f.len());
        for &(r, c, v) in &entries {
            for &(fr, fc, fv) in f {
                next.push((r * 2 + fr, c * 2 + fc, v * fv));
            }
        }
        entries = next;
    }
    SparseOp { dim, entries }
}

/// Weighted least-squares problem `sum_k w_k |t_k - Tr(rho O_k)|^2`.
pub struct WeightedLsq {
    pub dim: usize,
    pub ops: Vec<SparseOp>,
    pub targets: Vec<C64>,
    pub weights: Vec<f64>,
}

impl WeightedLsq {
    pub fn objective(&self, rho: &CMat) -> f64 {
        let mut acc = 0.0;
        for ((op, t), w) in self.ops.iter().zip(&self.targets).zip(&self.weights) {
            acc += w * (op.expectation(rho) - t).norm_sqr();
        }
        acc
    }

    fn gradient(&self, rho: &CMat) -> CMat {
        let mut g = CMat::zeros(self.dim, self.dim);
        for ((op, t), w) in self.ops.iter().zip(&self.targets).zip(&self.weights) {
            let e = op.expectation(rho) - t;
            // d/d rho of w |e|^2 over Hermitian rho: w (conj(e) O + e O^dag)
            op.add_scaled_into(&mut g, C64::new(*w, 0.0) * e.conj());
            op.adjoint_add_scaled_into(&mut g, C64::new(*w, 0.0) * e);
        }
        g
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MleInfo {
    pub iterations: usize,
    pub objective: f64,
    pub converged: bool,
    pub warnings: Vec<String>,
}

pub const MLE_MAX_ITER: usize = 5000;
pub const MLE_REL_TOL: f64 = 1e-8;

/// Projected gradient descent onto {rho PSD, Tr rho = trace_target} with a
/// monotone backtracking line search and momentum restarts. The objective
/// never increases across accepted iterates; convergence is declared after
/// several consecutive accepted steps below the relative tolerance.
pub fn solve_psd(problem: &WeightedLsq, trace_target: f64) -> (CMat, MleInfo) {
    let d = problem.dim;
    let mut rho = CMat::identity(d, d).scale(trace_target / d as f64);
    let mut obj = problem.objective(&rho);
    let mut prev = rho.clone();
    let mut step = 1.0 / (1.0 + problem.weights.iter().sum::<f64>());
    let mut iterations = 0;
    let mut converged = false;
    let mut small_streak = 0usize;
    let mut momentum = 0.0f64;
    while iterations < MLE_MAX_ITER {
        iterations += 1;
        // extrapolated point; fall back to the plain iterate on failure
        let y = if momentum > 0.0 {
            let extr = &rho + (&rho - &prev).scale(momentum);
            linalg::project_psd_trace(&extr, trace_target)
        } else {
            rho.clone()
        };
        let grad = problem.gradient(&y);
        let mut accepted = false;
        for _ in 0..60 {
            let cand = linalg::project_psd_trace(&(&y - grad.scale(step)), trace_target);
            let cand_obj = problem.objective(&cand);
            if cand_obj <= obj {
                let rel = (obj - cand_obj) / obj.max(1e-300);
                prev = std::mem::replace(&mut rho, cand);
                obj = cand_obj;
                step *= 1.4;
                momentum = (momentum * 2.0 + 0.4).min(0.95);
                accepted = true;
                small_streak = if rel < MLE_REL_TOL { small_streak + 1 } else { 0 };
                break;
            }
            step *= 0.5;
            momentum = 0.0;
        }
        if !accepted {
            // a full backtracking sweep failed from the plain iterate: the
            // projected gradient step cannot improve any further
            if momentum == 0.0 {
                converged = true;
                break;
            }
            momentum = 0.0;
            continue;
        }
        if small_streak >= 4 {
            converged = true;
            break;
        }
    }
    (
        rho,
        MleInfo { iterations, objective: obj, converged, warnings: Vec::new() },
    )
}

/// Most-likely density matrix for the measured moments: minimizes
/// `sum 1/std^2 |<moment> - Tr(rho O)|^2` subject to `rho >= 0`, `Tr rho = 1`.
pub fn mle_reconstruct(moments: &MomentTable, dims: &[usize]) -> Result<(MultimodeState, MleInfo)> {
    if dims.iter().any(|&d| d != 2) {
        return Err(Error::InvalidArgument(
            "reconstruction expects two-dimensional photon modes".into(),
        ));
    }
    let n_modes = dims.len();
    if moments.modes.len() != n_modes {
        return Err(Error::DimensionMismatch(format!(
            "moment window covers {} modes, dims imply {}",
            moments.modes.len(),
            n_modes
        )));
    }
    let window: Vec<usize> = (0..n_modes).collect();
    let mut ops = Vec::new();
    let mut targets = Vec::new();
    let mut weights = Vec::new();
    let mut nonzero_ops = 0usize;
    for (key, entry) in &moments.entries {
        let op = moment_sparse_op(n_modes, &window, key);
        if !op.entries.is_empty() {
            nonzero_ops += 1;
        }
        targets.push(entry.value());
        weights.push(1.0 / (entry.std * entry.std));
        ops.push(op);
    }
    let dim = 1usize << n_modes;
    let mut warnings = Vec::new();
    if nonzero_ops < dim * dim {
        warnings.push(format!(
            "{nonzero_ops} independent moment operators for a {dim}x{dim} state; \
             reconstruction may be under-determined"
        ));
    }
    let problem = WeightedLsq { dim, ops, targets, weights };
    let (rho, mut info) = solve_psd(&problem, 1.0);
    info.warnings.extend(warnings);
    if !info.converged {
        info.warnings.push(format!(
            "projected gradient descent stopped at the iteration cap with objective {:.3e}",
            info.objective
        ));
    }
    let labels: Vec<SubsystemLabel> = (0..n_modes)
        .map(|m| SubsystemLabel::Mode {
            time_bin: m / 2,
            rail: if m % 2 == 0 { Rail::Omega2 } else { Rail::Omega1 },
        })
        .collect();
    let state = MultimodeState::new(dims.to_vec(), labels, rho, true)?;
    Ok((state, info))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{fidelity, make_ideal_cluster, Branch};
    use crate::tomography::moments_from_state;

    #[test]
    fn exact_moments_recover_the_state() {
        let psi = make_ideal_cluster(1, Branch::Plus).unwrap();
        let table = moments_from_state(&psi, &[0, 1], 2).unwrap();
        let (rec, info) = mle_reconstruct(&table, &[2, 2]).unwrap();
        let f = fidelity(&rec, &psi).unwrap();
        assert!(f > 0.999, "fidelity {f}, objective {}", info.objective);
    }

    #[test]
    fn objective_is_monotone_and_reported() {
        let psi = make_ideal_cluster(1, Branch::Plus).unwrap();
        let table = moments_from_state(&psi, &[0, 1], 2).unwrap();
        let (_, info) = mle_reconstruct(&table, &[2, 2]).unwrap();
        assert!(info.objective >= 0.0);
        assert!(info.iterations >= 1);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let psi = make_ideal_cluster(1, Branch::Plus).unwrap();
        let table = moments_from_state(&psi, &[0, 1], 2).unwrap();
        assert!(mle_reconstruct(&table, &[2, 2, 2]).is_err());
    }
}
