//! Exact transfer-matrix evaluation of chain-composed emission rounds.
//!
//! A chain of `n` identical rounds applied to the emitter, followed by an
//! X-basis emitter projection, defines both the ideal cluster state and its
//! noisy counterparts. Fidelities against the ideal chain and
//! localizable-entanglement values under fixed Pauli plans contract exactly
//! over the emitted modes round by round, so chain length never forces a
//! dense many-mode density matrix.

use std::collections::HashMap;

use crate::channels::EmissionChannel;
use crate::error::{Error, Result};
use crate::linalg::{self, cr, CMat, ZERO};
use crate::states::{hadamard, Branch, LOGICAL_PAIR_INDICES};

/// Kraus operators of one emission round, including the ideal emitter
/// rotation that precedes the emission, mapping emitter -> emitter (x) block.
pub(crate) struct RoundOps {
    /// Per Kraus operator, per fresh-block index p: the 2x2 emitter map
    /// `M[j][p]` with `M[j][p][a][b] = K_j[(a, p), b]`.
    pub factors: Vec<Vec<CMat>>,
    /// Dimension of the fresh block (4 dual-rail pair, 2 single-rail mode).
    pub block_dim: usize,
    /// Number of physical modes per block (2 dual-rail, 1 single-rail).
    pub modes_per_block: usize,
}

impl RoundOps {
    fn from_kraus(kraus: &[CMat], block_dim: usize, modes_per_block: usize) -> Self {
        let h = hadamard();
        let factors = kraus
            .iter()
            .map(|k| {
                let kh = k * &h;
                (0..block_dim)
                    .map(|p| {
                        CMat::from_fn(2, 2, |a, b| kh[(a * block_dim + p, b)])
                    })
                    .collect()
            })
            .collect();
        Self { factors, block_dim, modes_per_block }
    }

    pub fn from_channel(ch: &EmissionChannel) -> Result<Self> {
        let out_dim: usize = ch.out_dims().iter().product();
        if ch.out_dims().first() != Some(&2) || ch.in_dim() != 2 {
            return Err(Error::InvalidChannel(
                "chain composition expects a qubit-emitter channel".into(),
            ));
        }
        let block_dim = out_dim / 2;
        let modes_per_block = ch.out_dims().len() - 1;
        Ok(Self::from_kraus(&ch.kraus(), block_dim, modes_per_block))
    }
}

fn branch_vector(branch: Branch) -> [f64; 2] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    match branch {
        Branch::Plus => [s, s],
        Branch::Minus => [s, -s],
    }
}

/// Indices of the fresh block retained by a logical-subspace restriction;
/// `None` keeps the full block.
fn block_indices(block_dim: usize, logical: bool) -> Vec<usize> {
    if logical && block_dim == 4 {
        LOGICAL_PAIR_INDICES.to_vec()
    } else {
        (0..block_dim).collect()
    }
}

/// Fidelity of the `n`-round chain state of `noisy` against the ideal chain
/// with the same block structure. With `logical` set, both the state and the
/// normalization are restricted to the dual-rail logical subspace first.
pub(crate) fn chain_fidelity(
    noisy: &RoundOps,
    n_rounds: usize,
    branch: Branch,
    logical: bool,
) -> Result<f64> {
    if n_rounds == 0 {
        return Err(Error::InvalidArgument("n_rounds must be >= 1".into()));
    }
    let ideal = ideal_round(noisy.block_dim, noisy.modes_per_block);
    let indices = block_indices(noisy.block_dim, logical);

    // numerator: T = sum over Kraus branches of vec(G) vec(G)^dag, where
    // G is the 2x2 mode-contracted cross overlap between the noisy chain and
    // the ideal chain; one round maps vec(G) -> S_j vec(G).
    let mut t = CMat::zeros(4, 4);
    t[(0, 0)] = cr(1.0);
    let s_ops: Vec<CMat> = noisy
        .factors
        .iter()
        .map(|mj| {
            let mut s = CMat::zeros(4, 4);
            for &p in &indices {
                s += linalg::kron(&mj[p], &ideal.factors[0][p].map(|z| z.conj()));
            }
            s
        })
        .collect();
    for _ in 0..n_rounds {
        let mut next = CMat::zeros(4, 4);
        for s in &s_ops {
            next += s * &t * s.adjoint();
        }
        t = next;
    }
    let bv = branch_vector(branch);
    let mut u = [0.0f64; 4];
    for a in 0..2 {
        for b in 0..2 {
            u[a * 2 + b] = bv[a] * bv[b];
        }
    }
    let mut num = ZERO;
    for r in 0..4 {
        for c_ in 0..4 {
            num += cr(u[r]) * t[(r, c_)] * cr(u[c_]);
        }
    }

    // noisy normalization (restricted when logical)
    let mut y = CMat::zeros(2, 2);
    y[(0, 0)] = cr(1.0);
    for _ in 0..n_rounds {
        let mut next = CMat::zeros(2, 2);
        for mj in &noisy.factors {
            for &p in &indices {
                next += &mj[p] * &y * mj[p].adjoint();
            }
        }
        y = next;
    }
    let mut psi = CMat::zeros(2, 2);
    psi[(0, 0)] = cr(1.0);
    for _ in 0..n_rounds {
        let mut next = CMat::zeros(2, 2);
        for &p in &indices {
            next += &ideal.factors[0][p] * &psi * ideal.factors[0][p].adjoint();
        }
        psi = next;
    }
    let proj = |m: &CMat| -> f64 {
        let mut acc = ZERO;
        for a in 0..2 {
            for b in 0..2 {
                acc += cr(bv[a]) * m[(a, b)] * cr(bv[b]);
            }
        }
        acc.re
    };
    let denom = proj(&y) * proj(&psi);
    if denom < 1e-300 {
        return Err(Error::ZeroProbability("chain projection branch".into()));
    }
    Ok((num.re / denom).clamp(0.0, 1.0 + 1e-9).min(1.0))
}

/// Probability that every pair of the projected `n`-round chain state lies in
/// the dual-rail logical subspace.
pub(crate) fn chain_logical_success(
    noisy: &RoundOps,
    n_rounds: usize,
    branch: Branch,
) -> Result<f64> {
    let bv = branch_vector(branch);
    let run = |logical: bool| -> f64 {
        let indices = block_indices(noisy.block_dim, logical);
        let mut y = CMat::zeros(2, 2);
        y[(0, 0)] = cr(1.0);
        for _ in 0..n_rounds {
            let mut next = CMat::zeros(2, 2);
            for mj in &noisy.factors {
                for &p in &indices {
                    next += &mj[p] * &y * mj[p].adjoint();
                }
            }
            y = next;
        }
        let mut acc = ZERO;
        for a in 0..2 {
            for b in 0..2 {
                acc += cr(bv[a]) * y[(a, b)] * cr(bv[b]);
            }
        }
        acc.re
    };
    let full = run(false);
    if full < 1e-300 {
        return Err(Error::ZeroProbability("chain projection branch".into()));
    }
    Ok(run(true) / full)
}

fn ideal_kraus(block_dim: usize) -> CMat {
    // |g> -> |g>(x)|w1>, |e> -> |e>(x)|w2> (dual rail, block_dim 4)
    // |g> -> |g>(x)|0>,  |e> -> |e>(x)|1>  (single rail, block_dim 2)
    let mut v = CMat::zeros(2 * block_dim, 2);
    match block_dim {
        4 => {
            v[(LOGICAL_PAIR_INDICES[0], 0)] = cr(1.0);
            v[(block_dim + LOGICAL_PAIR_INDICES[1], 1)] = cr(1.0);
        }
        2 => {
            v[(0, 0)] = cr(1.0);
            v[(block_dim + 1, 1)] = cr(1.0);
        }
        _ => panic!("unsupported block dimension"),
    }
    v
}

pub(crate) fn ideal_round(block_dim: usize, modes_per_block: usize) -> RoundOps {
    RoundOps::from_kraus(&[ideal_kraus(block_dim)], block_dim, modes_per_block)
}

/// What happens to one emitted subsystem in a localizable-entanglement plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Action {
    Keep,
    /// Measure the Pauli with this index (1 = X, 2 = Y, 3 = Z).
    Measure(usize),
}

const TERM_CAP: usize = 200_000;

struct TermSet {
    /// (canonical PSD operator with unit trace, accumulated weight)
    terms: Vec<(CMat, f64)>,
}

impl TermSet {
    fn single(e: CMat) -> Self {
        Self { terms: vec![(e, 1.0)] }
    }

    fn dedup(self) -> Result<Self> {
        let mut map: HashMap<Vec<i64>, (CMat, f64)> = HashMap::new();
        let total: f64 = self
            .terms
            .iter()
            .map(|(e, w)| w * linalg::trace(e).re)
            .sum();
        let floor = total.abs() * 1e-14;
        for (e, w) in self.terms {
            let tr = linalg::trace(&e).re;
            let weight = w * tr;
            if weight <= floor || tr <= 0.0 {
                continue;
            }
            let canon = e.scale(1.0 / tr);
            let key: Vec<i64> = canon
                .iter()
                .flat_map(|z| {
                    [(z.re * 1e10).round() as i64, (z.im * 1e10).round() as i64]
                })
                .collect();
            map.entry(key)
                .and_modify(|(_, acc)| *acc += weight)
                .or_insert((canon, weight));
        }
        if map.len() > TERM_CAP {
            return Err(Error::NonConvergence(format!(
                "localizable-entanglement branch count exceeded {TERM_CAP}"
            )));
        }
        Ok(Self { terms: map.into_values().collect() })
    }
}

fn pauli_projectors(pauli_index: usize) -> [CMat; 2] {
    let p = linalg::pauli(pauli_index);
    let id = CMat::identity(2, 2);
    [(&id + &p).scale(0.5), (&id - &p).scale(0.5)]
}

/// Negativity of a two-qubit density operator (sum of |negative eigenvalues|
/// of the partial transpose); homogeneous of degree one in the input.
pub(crate) fn negativity(rho: &CMat) -> f64 {
    let pt = linalg::partial_transpose(rho, &[2, 2], &[1]);
    let (vals, _) = linalg::eigh(&pt);
    vals.iter().filter(|&&v| v < 0.0).map(|v| -v).sum()
}

/// Outcome-averaged negativity between the two `Keep` subsystems of a chain
/// state, measuring every other subsystem in its assigned Pauli basis.
///
/// `actions` has one entry per emitted physical mode when `logical` is
/// false, or one entry per logical site (each pair projected onto the
/// dual-rail subspace first) when `logical` is true. Exactly two entries
/// must be `Keep`. Branches with negligible probability contribute zero.
pub(crate) fn chain_le(
    noisy: &RoundOps,
    n_rounds: usize,
    actions: &[Action],
    logical: bool,
    branch: Branch,
) -> Result<f64> {
    let sites_per_round = if logical {
        if noisy.block_dim != 4 {
            return Err(Error::InvalidArgument(
                "logical plans require dual-rail rounds".into(),
            ));
        }
        1
    } else {
        noisy.modes_per_block
    };
    if actions.len() != n_rounds * sites_per_round {
        return Err(Error::DimensionMismatch(format!(
            "{} plan entries for {} sites",
            actions.len(),
            n_rounds * sites_per_round
        )));
    }
    let kept = actions.iter().filter(|a| matches!(a, Action::Keep)).count();
    if kept != 2 {
        return Err(Error::InvalidArgument(format!(
            "plan must keep exactly two subsystems, found {kept}"
        )));
    }

    let mut init = CMat::zeros(2, 2);
    init[(0, 0)] = cr(1.0);
    let mut set = TermSet::single(init);
    let mut n_open = 0usize;

    for round in 0..n_rounds {
        // lift each term through the round Kraus: (e (x) open) -> (e (x) block (x) open)
        let d_open = 1usize << n_open;
        let block = noisy.block_dim;
        let mut lifted: Vec<(CMat, f64)> = Vec::with_capacity(set.terms.len());
        for (e, w) in &set.terms {
            let dim_out = 2 * block * d_open;
            let mut acc = CMat::zeros(dim_out, dim_out);
            for mj in &noisy.factors {
                // build K (x) I_open once per Kraus: K maps (e) -> (e (x) block)
                // applied on the emitter factor of (e (x) open)
                let mut klift = CMat::zeros(dim_out, 2 * d_open);
                for a in 0..2 {
                    for p in 0..block {
                        for b in 0..2 {
                            let z = {
                                // reconstruct K[(a,p), b] from the stored factors
                                mj[p][(a, b)]
                            };
                            if z != ZERO {
                                for o in 0..d_open {
                                    klift[((a * block + p) * d_open + o, b * d_open + o)] = z;
                                }
                            }
                        }
                    }
                }
                acc += &klift * e * klift.adjoint();
            }
            lifted.push((acc, *w));
        }

        // process the fresh block sites in order; dims are (e, remaining block sites, open)
        let site_actions: Vec<Action> = if logical {
            vec![actions[round]]
        } else {
            (0..noisy.modes_per_block)
                .map(|m| actions[round * noisy.modes_per_block + m])
                .collect()
        };

        let mut current: Vec<(CMat, f64)> = lifted;
        if logical {
            // project the pair onto span{|w1>, |w2>}, leaving a 2-dim site
            let mut lmap = CMat::zeros(2, 4);
            lmap[(0, LOGICAL_PAIR_INDICES[0])] = cr(1.0);
            lmap[(1, LOGICAL_PAIR_INDICES[1])] = cr(1.0);
            let d_open_now = 1usize << n_open;
            let full = linalg::kron(
                &linalg::kron(&CMat::identity(2, 2), &lmap),
                &CMat::identity(d_open_now, d_open_now),
            );
            current = current
                .into_iter()
                .map(|(e, w)| (&full * &e * full.adjoint(), w))
                .collect();
        }
        // now each term lives on (e, site_0 .. site_{k-1}, opens) with all sites dim 2
        let n_sites = site_actions.len();
        for (s_idx, act) in site_actions.iter().enumerate() {
            // dims: e, remaining sites (n_sites - s_idx of them), opens
            let rem_sites = n_sites - s_idx;
            let mut dims = vec![2usize];
            dims.extend(std::iter::repeat(2).take(rem_sites));
            dims.extend(std::iter::repeat(2).take(n_open));
            match act {
                Action::Measure(pidx) => {
                    let projs = pauli_projectors(*pidx);
                    let mut next: Vec<(CMat, f64)> = Vec::with_capacity(current.len() * 2);
                    for (e, w) in &current {
                        for proj in &projs {
                            let op = linalg::op_on(&dims, 1, proj);
                            let measured = &op * e * op.adjoint();
                            let keep: Vec<usize> =
                                (0..dims.len()).filter(|&k| k != 1).collect();
                            let reduced =
                                linalg::partial_trace(&measured, &dims, &keep)?;
                            next.push((reduced, *w));
                        }
                    }
                    current = next;
                }
                Action::Keep => {
                    // move the site to the end of the open list
                    let nd = dims.len();
                    let mut perm: Vec<usize> = Vec::with_capacity(nd);
                    perm.push(0);
                    perm.extend(2..nd); // remaining sites then existing opens
                    perm.push(1);
                    current = current
                        .into_iter()
                        .map(|(e, w)| (linalg::permute_subsystems(&e, &dims, &perm), w))
                        .collect();
                    n_open += 1;
                }
            }
        }
        set = TermSet { terms: current }.dedup()?;
    }

    debug_assert_eq!(n_open, 2);
    let bv = branch_vector(branch);
    let mut le_sum = 0.0;
    let mut total = 0.0;
    for (e, w) in &set.terms {
        // <+-| e |+-> over the emitter factor
        let mut wmat = CMat::zeros(4, 4);
        for o in 0..4 {
            for o2 in 0..4 {
                let mut acc = ZERO;
                for a in 0..2 {
                    for b in 0..2 {
                        acc += cr(bv[a]) * e[(a * 4 + o, b * 4 + o2)] * cr(bv[b]);
                    }
                }
                wmat[(o, o2)] = acc;
            }
        }
        let p = linalg::trace(&wmat).re * w;
        if p < 1e-12 {
            continue;
        }
        le_sum += w * negativity(&wmat);
        total += p;
    }
    if total < 1e-12 {
        return Err(Error::ZeroProbability(
            "all measurement branches have negligible probability".into(),
        ));
    }
    Ok(le_sum / total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ideal_chain_has_unit_fidelity() {
        let ideal = ideal_round(4, 2);
        for n in 1..=6 {
            let f = chain_fidelity(&ideal, n, Branch::Plus, false).unwrap();
            assert!((f - 1.0).abs() < 1e-12, "n = {n}: {f}");
            let fl = chain_fidelity(&ideal, n, Branch::Plus, true).unwrap();
            assert!((fl - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ideal_chain_le_is_half() {
        let ideal = ideal_round(4, 2);
        // physical plan on 2 logical qubits keeping modes 0 and 3
        let actions = [
            Action::Keep,
            Action::Measure(1),
            Action::Measure(1),
            Action::Keep,
        ];
        let le = chain_le(&ideal, 2, &actions, false, Branch::Plus).unwrap();
        assert!((le - 0.5).abs() < 1e-10, "le = {le}");
    }
}
