//! Multimode density operators and ideal dual-rail cluster states.
//!
//! Conventions used across the crate:
//!
//! * Subsystem 0 is the emitter register when present; photon modes follow in
//!   emission order, two per time bin.
//! * Within a time bin the two frequency rails are ordered (omega2, omega1),
//!   so the single-photon kets read `|w1> = |01>` and `|w2> = |10>`. The
//!   dual-rail logical basis is `|0_L> = |w1>`, `|1_L> = |w2>`.
//! * Pure states are compared after fixing the global phase so that the first
//!   nonzero amplitude is real and positive.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, cr, CMat, CVec, ONE, ZERO};

/// Tolerance for `max |rho - rho^dag|`.
pub const HERMITICITY_TOL: f64 = 1e-10;
/// Tolerance for `|Tr rho - 1|` of normalized states.
pub const TRACE_TOL: f64 = 1e-9;
/// Eigenvalues may undershoot zero by at most this much.
pub const POSITIVITY_TOL: f64 = 1e-9;

/// Largest logical-qubit count for which a dense density matrix is
/// materialized (dimension 4^n).
pub const MAX_DENSE_LOGICAL: usize = 5;

/// Emitter levels. Ordering g < e < f < h is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QubitLevel {
    G,
    E,
    F,
    H,
}

impl QubitLevel {
    pub const ALL: [QubitLevel; 4] = [Self::G, Self::E, Self::F, Self::H];

    pub fn index(self) -> usize {
        match self {
            Self::G => 0,
            Self::E => 1,
            Self::F => 2,
            Self::H => 3,
        }
    }
}

/// Frequency rail of a photon mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rail {
    Omega1,
    Omega2,
}

/// Per-subsystem tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubsystemLabel {
    /// Emitter register (dimension 2 or 4).
    Qubit,
    /// Photon mode in a given time bin and frequency rail.
    Mode { time_bin: usize, rail: Rail },
    /// Dual-rail logical qubit.
    Logical { index: usize },
    /// Graph-state vertex.
    Vertex { index: usize },
}

/// Labels for `n` time bins in emission order: (omega2, omega1) per bin.
pub fn pair_labels(n_logical: usize) -> Vec<SubsystemLabel> {
    let mut labels = Vec::with_capacity(2 * n_logical);
    for bin in 0..n_logical {
        labels.push(SubsystemLabel::Mode { time_bin: bin, rail: Rail::Omega2 });
        labels.push(SubsystemLabel::Mode { time_bin: bin, rail: Rail::Omega1 });
    }
    labels
}

/// Post-selection branch of the final emitter X-basis measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Plus,
    Minus,
}

/// Hermitian density operator over an ordered list of subsystems.
#[derive(Debug, Clone)]
pub struct MultimodeState {
    dims: Vec<usize>,
    labels: Vec<SubsystemLabel>,
    matrix: CMat,
    normalized: bool,
}

impl MultimodeState {
    pub fn new(
        dims: Vec<usize>,
        labels: Vec<SubsystemLabel>,
        matrix: CMat,
        normalized: bool,
    ) -> Result<Self> {
        let total: usize = dims.iter().product();
        if labels.len() != dims.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} subsystems",
                labels.len(),
                dims.len()
            )));
        }
        if matrix.nrows() != total || matrix.ncols() != total {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {}x{}, dims imply {}",
                matrix.nrows(),
                matrix.ncols(),
                total
            )));
        }
        let state = Self { dims, labels, matrix, normalized };
        state.validate()?;
        Ok(state)
    }

    pub fn from_pure(
        dims: Vec<usize>,
        labels: Vec<SubsystemLabel>,
        vector: &CVec,
    ) -> Result<Self> {
        let norm = vector.norm();
        if norm < 1e-14 {
            return Err(Error::InvalidState("zero pure-state vector".into()));
        }
        let v = vector.scale(1.0 / norm);
        Self::new(dims, labels, linalg::outer(&v), true)
    }

    pub fn validate(&self) -> Result<()> {
        let herm = linalg::hermiticity_violation(&self.matrix);
        if herm > HERMITICITY_TOL {
            return Err(Error::InvalidState(format!(
                "hermiticity violation {herm:.3e} exceeds {HERMITICITY_TOL:.1e}"
            )));
        }
        if self.normalized {
            let tr = linalg::trace(&self.matrix);
            if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
                return Err(Error::InvalidState(format!(
                    "trace {tr} deviates from 1 beyond {TRACE_TOL:.1e}"
                )));
            }
        }
        let min_ev = linalg::min_eigenvalue(&self.matrix);
        if min_ev < -POSITIVITY_TOL {
            return Err(Error::InvalidState(format!(
                "minimum eigenvalue {min_ev:.3e} below -{POSITIVITY_TOL:.1e}"
            )));
        }
        Ok(())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn labels(&self) -> &[SubsystemLabel] {
        &self.labels
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).diagonal().sum().re
    }

    pub fn is_pure(&self, tol: f64) -> bool {
        (self.purity() - 1.0).abs() < tol
    }

    /// Dominant eigenvector; exact for pure states. Power iteration with a
    /// full eigendecomposition fallback.
    pub fn principal_vector(&self) -> CVec {
        let d = self.dim();
        let mut v = CVec::from_fn(d, |k, _| {
            C64::new(1.0 + (k as f64 * 0.7).sin(), (k as f64 * 1.3).cos())
        });
        v.scale_mut(1.0 / v.norm());
        for _ in 0..200 {
            let w = &self.matrix * &v;
            let norm = w.norm();
            if norm < 1e-300 {
                break;
            }
            let next = w.scale(1.0 / norm);
            let delta = (&next - &v).norm().min((&next + &v).norm());
            v = next;
            if delta < 1e-14 {
                let residual = (&self.matrix * &v - v.scale(norm)).norm();
                if residual < 1e-10 * norm.max(1.0) {
                    linalg::fix_global_phase(&mut v);
                    return v;
                }
            }
        }
        let (vals, vecs) = linalg::eigh(&self.matrix);
        let k = vals.len() - 1;
        let mut v = CVec::from_column_slice(vecs.column(k).as_slice());
        linalg::fix_global_phase(&mut v);
        v
    }
}

/// Pure dual-rail cluster-state vector over `2 n_logical` photon modes
/// (dimension `4^n_logical`), built by iterating the emission round.
///
/// Each round applies a Hadamard on the emitter followed by the pair
/// emission `|g> -> |g>|w1>`, `|e> -> |e>|w2>`; the emitter is projected on
/// `<+|` or `<-|` at the end and the global phase is fixed.
pub fn ideal_cluster_vector(n_logical: usize, branch: Branch) -> Result<CVec> {
    if n_logical < 1 {
        return Err(Error::InvalidArgument("n_logical must be >= 1".into()));
    }
    if n_logical > 8 {
        return Err(Error::Overflow(format!(
            "n_logical = {n_logical} exceeds the supported bound of 8"
        )));
    }
    // amplitudes indexed as (emitter, pair_1, ..., pair_k): emitter most significant
    let mut amps: Vec<C64> = vec![ONE, ZERO]; // |g>
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for _ in 0..n_logical {
        let half = amps.len() / 2;
        // Hadamard on the emitter
        for m in 0..half {
            let g = amps[m];
            let e = amps[half + m];
            amps[m] = (g + e).scale(s);
            amps[half + m] = (g - e).scale(s);
        }
        // emission appends a fresh pair: g -> pair index 1 (|01> = |w1>),
        // e -> pair index 2 (|10> = |w2>)
        let mut next = vec![ZERO; amps.len() * 4];
        for m in 0..half {
            next[(m) * 4 + 1] = amps[m];
            next[(half + m) * 4 + 2] = amps[half + m];
        }
        amps = next;
    }
    // emitter X-basis projection
    let half = amps.len() / 2;
    let sign = match branch {
        Branch::Plus => 1.0,
        Branch::Minus => -1.0,
    };
    let mut out = CVec::zeros(half);
    for m in 0..half {
        out[m] = (amps[m] + amps[half + m].scale(sign)).scale(s);
    }
    let norm = out.norm();
    if norm < 1e-12 {
        return Err(Error::ZeroProbability("emitter projection branch".into()));
    }
    out.scale_mut(1.0 / norm);
    linalg::fix_global_phase(&mut out);
    Ok(out)
}

/// Ideal dual-rail cluster state as a dense density matrix.
pub fn make_ideal_cluster(n_logical: usize, branch: Branch) -> Result<MultimodeState> {
    if n_logical > MAX_DENSE_LOGICAL {
        return Err(Error::Overflow(format!(
            "dense density matrix for n_logical = {n_logical} would be 4^{n_logical} x 4^{n_logical}; \
             use ideal_cluster_vector or the chain transfer routines instead"
        )));
    }
    let v = ideal_cluster_vector(n_logical, branch)?;
    MultimodeState::from_pure(vec![2; 2 * n_logical], pair_labels(n_logical), &v)
}

/// State fidelity. Uses `<psi|rho|psi>` when either input is pure and the
/// Uhlmann fidelity `(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2` otherwise.
pub fn fidelity(rho: &MultimodeState, target: &MultimodeState) -> Result<f64> {
    if rho.dims() != target.dims() {
        return Err(Error::DimensionMismatch(format!(
            "dims {:?} vs {:?}",
            rho.dims(),
            target.dims()
        )));
    }
    let pure_tol = 1e-10;
    if target.is_pure(pure_tol) {
        let psi = target.principal_vector();
        let f = (psi.adjoint() * rho.matrix() * &psi)[(0, 0)].re;
        return Ok(f.clamp(0.0, 1.0 + 1e-9).min(1.0));
    }
    if rho.is_pure(pure_tol) {
        return fidelity(target, rho);
    }
    let sr = linalg::sqrt_psd(rho.matrix());
    let inner = &sr * target.matrix() * &sr;
    let s = linalg::sqrt_psd(&inner);
    let f = linalg::trace(&s).re.powi(2);
    Ok(f.clamp(0.0, 1.0 + 1e-9).min(1.0))
}

/// Indices of the dual-rail logical basis within one mode pair: `|w1>` and
/// `|w2>` in the (omega2, omega1) slot order.
pub const LOGICAL_PAIR_INDICES: [usize; 2] = [1, 2];

/// Project every mode pair onto the dual-rail logical subspace
/// span{|01>, |10>} and renormalize. Returns the state re-expressed on
/// `n_logical` two-dimensional subsystems and the pre-normalization trace.
pub fn project_logical_subspace(rho: &MultimodeState) -> Result<(MultimodeState, f64)> {
    let n_modes = rho.dims().len();
    if n_modes % 2 != 0 || rho.dims().iter().any(|&d| d != 2) {
        return Err(Error::InvalidArgument(
            "expected an even number of two-dimensional photon modes".into(),
        ));
    }
    if rho.labels().iter().any(|l| matches!(l, SubsystemLabel::Qubit)) {
        return Err(Error::InvalidArgument(
            "emitter register must be projected out first".into(),
        ));
    }
    let n_logical = n_modes / 2;
    let dim_l = 1usize << n_logical;
    // full-space index of a logical basis index
    let full_index = |li: usize| -> usize {
        let mut idx = 0usize;
        for k in 0..n_logical {
            let bit = (li >> (n_logical - 1 - k)) & 1;
            idx = idx * 4 + LOGICAL_PAIR_INDICES[bit];
        }
        idx
    };
    let mut block = CMat::zeros(dim_l, dim_l);
    for r in 0..dim_l {
        let fr = full_index(r);
        for c_ in 0..dim_l {
            block[(r, c_)] = rho.matrix()[(fr, full_index(c_))];
        }
    }
    let success = linalg::trace(&block).re;
    if success < 1e-12 {
        return Err(Error::ZeroTrace(
            "no support left in the dual-rail logical subspace".into(),
        ));
    }
    let normalized = block.scale(1.0 / success);
    let labels = (0..n_logical)
        .map(|k| SubsystemLabel::Logical { index: k })
        .collect();
    let state = MultimodeState::new(vec![2; n_logical], labels, normalized, rho.is_normalized())?;
    Ok((state, success))
}

/// Partial trace keeping the listed subsystems (ascending original order).
pub fn partial_trace(rho: &MultimodeState, keep: &[usize]) -> Result<MultimodeState> {
    let reduced = linalg::partial_trace(rho.matrix(), rho.dims(), keep)?;
    let mut keep_sorted = keep.to_vec();
    keep_sorted.sort_unstable();
    keep_sorted.dedup();
    let dims = keep_sorted.iter().map(|&k| rho.dims()[k]).collect();
    let labels = keep_sorted.iter().map(|&k| rho.labels()[k]).collect();
    MultimodeState::new(dims, labels, reduced, rho.is_normalized())
}

/// Z operator on the omega2 rail of the last time bin, the local correction
/// relating the two post-selection branches.
pub fn last_pair_omega2_z(n_logical: usize) -> CMat {
    let dims = vec![2usize; 2 * n_logical];
    let z = CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]);
    linalg::op_on(&dims, 2 * n_logical - 2, &z)
}

/// Maximally mixed state on the given dims.
pub fn maximally_mixed(dims: Vec<usize>, labels: Vec<SubsystemLabel>) -> Result<MultimodeState> {
    let d: usize = dims.iter().product();
    MultimodeState::new(dims, labels, CMat::identity(d, d).scale(1.0 / d as f64), true)
}

pub(crate) fn hadamard() -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_row_slice(2, 2, &[cr(s), cr(s), cr(s), cr(-s)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn amp(v: &CVec, idx: usize) -> C64 {
        v[idx]
    }

    // |w1 w1>, |w1 w2>, |w2 w1>, |w2 w2> as indices in the 4^2 space
    fn pair_index(bits: &[usize]) -> usize {
        bits.iter().fold(0, |acc, &b| acc * 4 + LOGICAL_PAIR_INDICES[b])
    }

    #[test]
    fn two_qubit_plus_branch_amplitudes() {
        let v = ideal_cluster_vector(2, Branch::Plus).unwrap();
        // (|w1w1> + |w1w2> + |w2w1> - |w2w2>)/2
        assert_abs_diff_eq!(amp(&v, pair_index(&[0, 0])).re, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(amp(&v, pair_index(&[0, 1])).re, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(amp(&v, pair_index(&[1, 0])).re, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(amp(&v, pair_index(&[1, 1])).re, -0.5, epsilon = 1e-12);
        let off: f64 = (0..16)
            .filter(|i| ![5usize, 6, 9, 10].contains(i))
            .map(|i| v[i].norm())
            .sum();
        assert!(off < 1e-12);
    }

    #[test]
    fn single_round_is_uniform_superposition() {
        let v = ideal_cluster_vector(1, Branch::Plus).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(v[1].re, s, epsilon = 1e-12);
        assert_abs_diff_eq!(v[2].re, s, epsilon = 1e-12);
        assert!(v[0].norm() < 1e-12 && v[3].norm() < 1e-12);
    }

    #[test]
    fn rejects_invalid_sizes() {
        assert!(make_ideal_cluster(0, Branch::Plus).is_err());
        assert!(ideal_cluster_vector(9, Branch::Plus).is_err());
    }

    #[test]
    fn minus_branch_equals_plus_after_last_rail_z() {
        for n in [2usize, 3] {
            let plus = ideal_cluster_vector(n, Branch::Plus).unwrap();
            let minus = ideal_cluster_vector(n, Branch::Minus).unwrap();
            let corr = last_pair_omega2_z(n);
            let mut corrected = &corr * &minus;
            linalg::fix_global_phase(&mut corrected);
            let overlap = (plus.adjoint() * &corrected)[(0, 0)].norm_sqr();
            assert!(overlap > 1.0 - 1e-10, "n = {n}: overlap {overlap}");
        }
    }

    #[test]
    fn fidelity_identical_and_mixed() {
        let psi = make_ideal_cluster(2, Branch::Plus).unwrap();
        assert_abs_diff_eq!(fidelity(&psi, &psi).unwrap(), 1.0, epsilon = 1e-12);
        let mixed = maximally_mixed(vec![2; 4], pair_labels(2)).unwrap();
        assert_abs_diff_eq!(fidelity(&mixed, &psi).unwrap(), 1.0 / 16.0, epsilon = 1e-12);
    }

    #[test]
    fn fidelity_invariant_under_global_phase() {
        let psi = ideal_cluster_vector(2, Branch::Plus).unwrap();
        let rho = make_ideal_cluster(2, Branch::Plus).unwrap();
        let phased = psi.scale(1.0).map(|z| z * C64::from_polar(1.0, 0.7));
        let target =
            MultimodeState::from_pure(vec![2; 4], pair_labels(2), &phased).unwrap();
        assert_abs_diff_eq!(fidelity(&rho, &target).unwrap(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn logical_projection_of_ideal_state_is_lossless() {
        let psi = make_ideal_cluster(2, Branch::Plus).unwrap();
        let (logical, p) = project_logical_subspace(&psi).unwrap();
        assert_abs_diff_eq!(p, 1.0, epsilon = 1e-10);
        assert_eq!(logical.dims(), &[2, 2]);
        // logical state is (|00> + |01> + |10> - |11>)/2
        let m = logical.matrix();
        assert_abs_diff_eq!(m[(0, 0)].re, 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(m[(0, 3)].re, -0.25, epsilon = 1e-12);
    }

    #[test]
    fn logical_projection_rejects_erasure_only_input() {
        let mut zero_pair = CVec::zeros(4);
        zero_pair[0] = ONE; // |00>: photon lost
        let rho = MultimodeState::from_pure(vec![2, 2], pair_labels(1), &zero_pair).unwrap();
        assert!(matches!(
            project_logical_subspace(&rho),
            Err(Error::ZeroTrace(_))
        ));
    }

    #[test]
    fn partial_trace_of_bell_pair_is_maximally_mixed() {
        let psi = make_ideal_cluster(1, Branch::Plus).unwrap();
        let reduced = partial_trace(&psi, &[1]).unwrap();
        assert_abs_diff_eq!(reduced.matrix()[(0, 0)].re, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(reduced.matrix()[(1, 1)].re, 0.5, epsilon = 1e-12);
        assert!(reduced.matrix()[(0, 1)].norm() < 1e-12);
    }

    #[test]
    fn validation_rejects_non_hermitian() {
        let mut m = CMat::identity(2, 2).scale(0.5);
        m[(0, 1)] = cr(0.3);
        let labels = vec![SubsystemLabel::Logical { index: 0 }];
        assert!(MultimodeState::new(vec![2], labels, m, true).is_err());
    }
}
