//! Normally-ordered moment estimation with amplifier-noise deconvolution and
//! bootstrap error bars.
//!
//! The measured moments `<(S^dag)^m S^n ...>` mix signal and noise through a
//! binomial product; the signal moments follow by solving that system in
//! increasing total order, with the noise moments taken from the vacuum
//! record. The multimode form is the per-mode product of the single-mode
//! binomials, validated by the forward-convolution round trip.

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::states::MultimodeState;
use rand::Rng;

use super::shots::ShotRecord;

/// Exponent tuple ((m_1, n_1), ..., (m_k, n_k)) for `prod (a^dag)^m a^n`.
pub type ExpKey = Vec<(u8, u8)>;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MomentEntry {
    pub re: f64,
    pub im: f64,
    pub std: f64,
}

impl MomentEntry {
    pub fn value(&self) -> C64 {
        C64::new(self.re, self.im)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MomentRecord {
    exp: ExpKey,
    re: f64,
    im: f64,
    std: f64,
}

/// Estimated moments keyed by per-mode exponent tuples.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "MomentTableSerde", into = "MomentTableSerde")]
pub struct MomentTable {
    pub modes: Vec<usize>,
    pub entries: BTreeMap<ExpKey, MomentEntry>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MomentTableSerde {
    modes: Vec<usize>,
    entries: Vec<MomentRecord>,
    #[serde(default)]
    warnings: Vec<String>,
}

impl From<MomentTable> for MomentTableSerde {
    fn from(t: MomentTable) -> Self {
        Self {
            modes: t.modes.clone(),
            entries: t
                .entries
                .into_iter()
                .map(|(exp, e)| MomentRecord { exp, re: e.re, im: e.im, std: e.std })
                .collect(),
            warnings: t.warnings,
        }
    }
}

impl TryFrom<MomentTableSerde> for MomentTable {
    type Error = Error;

    fn try_from(s: MomentTableSerde) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for r in s.entries {
            if r.exp.len() != s.modes.len() {
                return Err(Error::Format(format!(
                    "exponent tuple {:?} does not cover {} modes",
                    r.exp,
                    s.modes.len()
                )));
            }
            entries.insert(r.exp, MomentEntry { re: r.re, im: r.im, std: r.std });
        }
        let table = MomentTable { modes: s.modes, entries, warnings: s.warnings };
        table.validate()?;
        Ok(table)
    }
}

impl MomentTable {
    pub fn validate(&self) -> Result<()> {
        for (key, e) in &self.entries {
            if key.len() != self.modes.len() {
                return Err(Error::Format("exponent tuple length mismatch".into()));
            }
            if !e.re.is_finite() || !e.im.is_finite() || !e.std.is_finite() || e.std < 0.0 {
                return Err(Error::Format(format!("bad entry for {key:?}")));
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &ExpKey) -> Option<C64> {
        self.entries.get(key).map(|e| e.value())
    }

    /// Largest |value| in the table.
    pub fn max_abs(&self) -> f64 {
        self.entries
            .values()
            .map(|e| e.value().norm())
            .fold(0.0, f64::max)
    }

    /// Max conjugate-symmetry violation in combined standard deviations:
    /// swapping every (m, n) -> (n, m) must conjugate the value.
    pub fn conjugate_symmetry_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (key, e) in &self.entries {
            let flipped: ExpKey = key.iter().map(|&(m, n)| (n, m)).collect();
            if let Some(other) = self.entries.get(&flipped) {
                let diff = (e.value() - other.value().conj()).norm();
                let scale = (e.std + other.std).max(1e-12);
                worst = worst.max(diff / scale);
            }
        }
        worst
    }
}

/// All exponent tuples over `n_modes` modes with per-mode exponents
/// `m, n <= floor(max_order / 2)` and per-mode total `m + n <= max_order`.
/// `max_order = 2` yields the operator-complete set {1, a, a^dag, a^dag a}
/// per mode; `max_order = 4` adds the fourth-order diagnostics up to
/// `(a^dag)^2 a^2`.
pub fn exponent_tuples(n_modes: usize, max_order: usize) -> Vec<ExpKey> {
    let cap = (max_order / 2) as u8;
    let mut per_mode = Vec::new();
    for m in 0..=cap {
        for n in 0..=cap {
            if (m + n) as usize <= max_order {
                per_mode.push((m, n));
            }
        }
    }
    let mut out: Vec<ExpKey> = vec![Vec::new()];
    for _ in 0..n_modes {
        let mut next = Vec::with_capacity(out.len() * per_mode.len());
        for key in &out {
            for &mn in &per_mode {
                let mut k = key.clone();
                k.push(mn);
                next.push(k);
            }
        }
        out = next;
    }
    out
}

fn binomial(n: u8, k: u8) -> f64 {
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

fn total_order(key: &ExpKey) -> usize {
    key.iter().map(|&(m, n)| (m + n) as usize).sum()
}

/// All componentwise-dominated tuples s <= t (including t itself).
fn dominated(key: &ExpKey) -> Vec<ExpKey> {
    let mut out: Vec<ExpKey> = vec![Vec::new()];
    for &(m, n) in key {
        let mut next = Vec::new();
        for prefix in &out {
            for i in 0..=m {
                for j in 0..=n {
                    let mut k = prefix.clone();
                    k.push((i, j));
                    next.push(k);
                }
            }
        }
        out = next;
    }
    out
}

fn binom_coeff(t: &ExpKey, s: &ExpKey) -> f64 {
    t.iter()
        .zip(s)
        .map(|(&(m, n), &(i, j))| binomial(m, i) * binomial(n, j))
        .product()
}

fn complement(t: &ExpKey, s: &ExpKey) -> ExpKey {
    t.iter()
        .zip(s)
        .map(|(&(m, n), &(i, j))| (m - i, n - j))
        .collect()
}

/// Forward direction of the measured-moment relation: given signal moments
/// and vacuum (noise) moments, produce the S-moments
/// `<prod (S^dag)^m S^n> = sum binom * <a-moment> * <h-moment>`.
pub fn forward_convolve(
    signal: &BTreeMap<ExpKey, C64>,
    noise: &BTreeMap<ExpKey, C64>,
) -> Result<BTreeMap<ExpKey, C64>> {
    let mut out = BTreeMap::new();
    for key in signal.keys() {
        let mut acc = C64::new(0.0, 0.0);
        for sub in dominated(key) {
            let a = signal
                .get(&sub)
                .ok_or_else(|| Error::InvalidArgument(format!("missing sub-moment {sub:?}")))?;
            let h = noise.get(&complement(key, &sub)).ok_or_else(|| {
                Error::InvalidArgument(format!("missing noise moment for {key:?}"))
            })?;
            acc += binom_coeff(key, &sub) * a * h;
        }
        out.insert(key.clone(), acc);
    }
    Ok(out)
}

/// Inverse of `forward_convolve`: solve for the signal moments in increasing
/// total order.
pub fn deconvolve(
    measured: &BTreeMap<ExpKey, C64>,
    noise: &BTreeMap<ExpKey, C64>,
) -> Result<BTreeMap<ExpKey, C64>> {
    let mut keys: Vec<ExpKey> = measured.keys().cloned().collect();
    keys.sort_by_key(|k| (total_order(k), k.clone()));
    let mut signal: BTreeMap<ExpKey, C64> = BTreeMap::new();
    for key in keys {
        let mut acc = measured[&key];
        for sub in dominated(&key) {
            if sub == key {
                continue;
            }
            let a = signal.get(&sub).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "moment set is not downward closed: {sub:?} missing below {key:?}"
                ))
            })?;
            let h = noise.get(&complement(&key, &sub)).ok_or_else(|| {
                Error::InvalidArgument(format!("missing noise moment for {key:?}"))
            })?;
            acc -= binom_coeff(&key, &sub) * a * h;
        }
        // the s = t term has coefficient 1 and noise moment <1> = 1
        signal.insert(key, acc);
    }
    Ok(signal)
}

/// Monomial `prod_m conj(S_m)^{m_m} S_m^{n_m}` for one shot.
fn monomial(shot: &[C64], window: &[usize], key: &ExpKey) -> C64 {
    let mut acc = C64::new(1.0, 0.0);
    for (slot, &(m, n)) in key.iter().enumerate() {
        let s = shot[window[slot]];
        let sc = s.conj();
        for _ in 0..m {
            acc *= sc;
        }
        for _ in 0..n {
            acc *= s;
        }
    }
    acc
}

struct BlockSums {
    /// per block, per tuple
    signal: Vec<Vec<C64>>,
    vacuum: Vec<Vec<C64>>,
    block_len: Vec<usize>,
}

fn block_sums(rec: &ShotRecord, window: &[usize], keys: &[ExpKey], n_blocks: usize) -> BlockSums {
    let shots = rec.shot_count();
    let bounds: Vec<(usize, usize)> = (0..n_blocks)
        .map(|b| (b * shots / n_blocks, (b + 1) * shots / n_blocks))
        .collect();
    let sums: Vec<(Vec<C64>, Vec<C64>, usize)> = bounds
        .par_iter()
        .map(|&(lo, hi)| {
            let mut sig = vec![C64::new(0.0, 0.0); keys.len()];
            let mut vac = vec![C64::new(0.0, 0.0); keys.len()];
            for s in lo..hi {
                let shot = rec.signal_shot(s);
                let vshot = rec.vacuum_shot(s);
                for (t, key) in keys.iter().enumerate() {
                    sig[t] += monomial(shot, window, key);
                    vac[t] += monomial(vshot, window, key);
                }
            }
            (sig, vac, hi - lo)
        })
        .collect();
    BlockSums {
        signal: sums.iter().map(|s| s.0.clone()).collect(),
        vacuum: sums.iter().map(|s| s.1.clone()).collect(),
        block_len: sums.iter().map(|s| s.2).collect(),
    }
}

fn means_from_blocks(
    sums: &[Vec<C64>],
    lens: &[usize],
    pick: Option<&[usize]>,
) -> Vec<C64> {
    let nt = sums[0].len();
    let mut acc = vec![C64::new(0.0, 0.0); nt];
    let mut count = 0usize;
    match pick {
        None => {
            for (b, s) in sums.iter().enumerate() {
                for t in 0..nt {
                    acc[t] += s[t];
                }
                count += lens[b];
            }
        }
        Some(idx) => {
            for &b in idx {
                for t in 0..nt {
                    acc[t] += sums[b][t];
                }
                count += lens[b];
            }
        }
    }
    for a in acc.iter_mut() {
        *a /= count.max(1) as f64;
    }
    acc
}

/// Floor applied to degenerate standard deviations, relative to the largest
/// moment magnitude.
pub const STD_FLOOR_REL: f64 = 1e-6;

/// Default bootstrap resample count.
pub const DEFAULT_BOOTSTRAP: usize = 100;

/// Estimate noise-deconvolved signal moments over `window` with bootstrap
/// standard deviations (`n_bootstrap = 0` skips the bootstrap and floors all
/// deviations).
pub fn estimate_moments(
    rec: &ShotRecord,
    max_order: usize,
    window: &[usize],
    n_bootstrap: usize,
    seed: u64,
) -> Result<MomentTable> {
    if window.is_empty() || window.len() > 5 {
        return Err(Error::InvalidArgument(format!(
            "window must cover 1..=5 modes, got {}",
            window.len()
        )));
    }
    if max_order > 4 || max_order < 1 {
        return Err(Error::InvalidArgument(format!(
            "max_order must lie in 1..=4, got {max_order}"
        )));
    }
    if window.iter().any(|&m| m >= rec.mode_count()) {
        return Err(Error::InvalidArgument("window index out of range".into()));
    }
    let keys = exponent_tuples(window.len(), max_order);
    let n_blocks = rec.shot_count().min(1000).max(1);
    let sums = block_sums(rec, window, &keys, n_blocks);

    let to_map = |vals: &[C64]| -> BTreeMap<ExpKey, C64> {
        keys.iter().cloned().zip(vals.iter().copied()).collect()
    };
    let s_means = means_from_blocks(&sums.signal, &sums.block_len, None);
    let h_means = means_from_blocks(&sums.vacuum, &sums.block_len, None);
    let center = deconvolve(&to_map(&s_means), &to_map(&h_means))?;

    // bootstrap over blocks
    let mut boots: Vec<BTreeMap<ExpKey, C64>> = Vec::with_capacity(n_bootstrap);
    for b in 0..n_bootstrap {
        let mut rng = stream_rng(seed, 0x00b0_0000 + b as u64);
        let sig_idx: Vec<usize> =
            (0..n_blocks).map(|_| rng.random_range(0..n_blocks)).collect();
        let vac_idx: Vec<usize> =
            (0..n_blocks).map(|_| rng.random_range(0..n_blocks)).collect();
        let sm = means_from_blocks(&sums.signal, &sums.block_len, Some(&sig_idx));
        let hm = means_from_blocks(&sums.vacuum, &sums.block_len, Some(&vac_idx));
        boots.push(deconvolve(&to_map(&sm), &to_map(&hm))?);
    }

    let max_abs = center.values().map(|v| v.norm()).fold(0.0, f64::max);
    let floor = STD_FLOOR_REL * max_abs.max(1.0);
    let mut entries = BTreeMap::new();
    for key in &keys {
        let v = center[key];
        let std = if boots.is_empty() {
            floor
        } else {
            let mean: C64 =
                boots.iter().map(|b| b[key]).sum::<C64>() / boots.len() as f64;
            let var: f64 = boots
                .iter()
                .map(|b| (b[key] - mean).norm_sqr())
                .sum::<f64>()
                / boots.len() as f64;
            var.sqrt().max(floor)
        };
        entries.insert(key.clone(), MomentEntry { re: v.re, im: v.im, std });
    }

    // sampling-requirement warning from the vacuum-estimated noise photon
    // numbers
    let mut warnings = Vec::new();
    let n_modes_w = window.len();
    let n0_est: Vec<f64> = (0..n_modes_w)
        .map(|slot| {
            let mut acc = 0.0;
            for s in 0..rec.shot_count() {
                acc += rec.vacuum_shot(s)[window[slot]].norm_sqr();
            }
            (acc / rec.shot_count() as f64 - 1.0).max(0.0)
        })
        .collect();
    let orders: Vec<usize> = vec![max_order.min(2); n_modes_w];
    if let Ok(required) = sampling_requirement(&n0_est, &orders) {
        if (rec.shot_count() as u64) < required {
            warnings.push(format!(
                "shot count {} below the sampling requirement {} for this window",
                rec.shot_count(),
                required
            ));
        }
    }

    Ok(MomentTable { modes: window.to_vec(), entries, warnings })
}

/// Least sampling number `ceil(prod (1 + N0_i)^{o_i})` required to estimate
/// a moment of the given per-mode total orders.
pub fn sampling_requirement(n0: &[f64], orders: &[usize]) -> Result<u64> {
    if n0.len() != orders.len() {
        return Err(Error::DimensionMismatch(
            "n0 and orders lists differ in length".into(),
        ));
    }
    if n0.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidArgument("noise photon numbers must be >= 0".into()));
    }
    let mut acc = 1.0f64;
    for (&n, &o) in n0.iter().zip(orders) {
        acc *= (1.0 + n).powi(o as i32);
    }
    Ok(acc.ceil() as u64)
}

/// Exact moment table of a photon-only state (no sampling); every standard
/// deviation is set to the relative floor.
pub fn moments_from_state(
    rho: &MultimodeState,
    window: &[usize],
    max_order: usize,
) -> Result<MomentTable> {
    let keys = exponent_tuples(window.len(), max_order);
    let n = rho.dims().len();
    if window.iter().any(|&m| m >= n) {
        return Err(Error::InvalidArgument("window index out of range".into()));
    }
    let mut values = BTreeMap::new();
    for key in &keys {
        // build the sparse operator on the window and take Tr(rho O)
        let ops = super::mle::moment_sparse_op(n, window, key);
        let mut acc = C64::new(0.0, 0.0);
        for &(r, c, v) in &ops.entries {
            acc += rho.matrix()[(c, r)] * v;
        }
        values.insert(key.clone(), acc);
    }
    let max_abs = values.values().map(|v| v.norm()).fold(0.0, f64::max);
    let floor = STD_FLOOR_REL * max_abs.max(1.0);
    let entries = values
        .into_iter()
        .map(|(k, v)| (k, MomentEntry { re: v.re, im: v.im, std: floor }))
        .collect();
    Ok(MomentTable { modes: window.to_vec(), entries, warnings: Vec::new() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::pair_labels;
    use crate::tomography::shots::NoiseCalibration;
    use crate::tomography::synthesize_shots;
    use nalgebra::DVector;

    #[test]
    fn tuple_enumeration_counts() {
        assert_eq!(exponent_tuples(1, 2).len(), 4);
        assert_eq!(exponent_tuples(2, 2).len(), 16);
        assert_eq!(exponent_tuples(5, 2).len(), 1024);
        assert_eq!(exponent_tuples(1, 4).len(), 9);
    }

    #[test]
    fn sampling_requirement_examples() {
        assert_eq!(sampling_requirement(&[0.0], &[2]).unwrap(), 1);
        assert_eq!(sampling_requirement(&[2.4, 3.5], &[2, 2]).unwrap(), 235);
        let three_logical =
            sampling_requirement(&[3.5, 2.4, 3.5, 2.4, 3.5, 2.4], &[2; 6]).unwrap();
        assert!(three_logical > 10_000_000 && three_logical < 20_000_000);
    }

    #[test]
    fn deconvolution_inverts_forward_convolution() {
        // arbitrary signal and thermal-like noise moments on two modes
        let keys = exponent_tuples(2, 2);
        let mut signal = BTreeMap::new();
        let mut noise = BTreeMap::new();
        for (i, k) in keys.iter().enumerate() {
            let v = C64::new(0.1 * i as f64 - 0.3, 0.05 * (i as f64).sin());
            signal.insert(k.clone(), v);
            // noise moments: delta-correlated thermal values
            let nval: C64 = k
                .iter()
                .map(|&(p, q)| {
                    if p == q {
                        C64::new((1.0 + 2.4f64).powi(p as i32) * factorial(p), 0.0)
                    } else {
                        C64::new(0.0, 0.0)
                    }
                })
                .product();
            noise.insert(k.clone(), nval);
        }
        signal.insert(vec![(0, 0), (0, 0)], C64::new(1.0, 0.0));
        noise.insert(vec![(0, 0), (0, 0)], C64::new(1.0, 0.0));
        let measured = forward_convolve(&signal, &noise).unwrap();
        let recovered = deconvolve(&measured, &noise).unwrap();
        for (k, v) in &signal {
            let diff = (recovered[k] - v).norm();
            assert!(diff < 1e-12, "{k:?}: {diff}");
        }
    }

    fn factorial(n: u8) -> f64 {
        (1..=n as u64).product::<u64>() as f64
    }

    #[test]
    fn vacuum_record_moments_vanish() {
        let mut v = DVector::zeros(4);
        v[0] = C64::new(1.0, 0.0);
        let rho =
            crate::states::MultimodeState::from_pure(vec![2, 2], pair_labels(1), &v).unwrap();
        let cal = NoiseCalibration::new(vec![1.5, 0.8], vec![0.5, 0.5]).unwrap();
        let rec = synthesize_shots(&rho, &cal, 50_000, 3).unwrap();
        let table = estimate_moments(&rec, 2, &[0, 1], 50, 17).unwrap();
        for (key, e) in &table.entries {
            if key.iter().all(|&(m, n)| m == 0 && n == 0) {
                continue;
            }
            assert!(
                e.value().norm() < 3.0 * e.std + 1e-9,
                "{key:?}: {} vs std {}",
                e.value().norm(),
                e.std
            );
        }
    }

    #[test]
    fn single_photon_signature() {
        let mut v = DVector::zeros(2);
        v[1] = C64::new(1.0, 0.0);
        let rho = crate::states::MultimodeState::from_pure(
            vec![2],
            vec![crate::states::SubsystemLabel::Mode {
                time_bin: 0,
                rail: crate::states::Rail::Omega1,
            }],
            &v,
        )
        .unwrap();
        let cal = NoiseCalibration::new(vec![2.4], vec![0.294]).unwrap();
        let rec = synthesize_shots(&rho, &cal, 400_000, 23).unwrap();
        let table = estimate_moments(&rec, 4, &[0], 60, 29).unwrap();
        let nbar = table.entries[&vec![(1u8, 1u8)]];
        assert!(
            (nbar.value().re - 1.0).abs() < 3.0 * nbar.std,
            "<n> = {} +- {}",
            nbar.value().re,
            nbar.std
        );
        let fourth = table.entries[&vec![(2u8, 2u8)]];
        assert!(
            fourth.value().norm() < 3.0 * fourth.std,
            "<adag adag a a> = {} +- {}",
            fourth.value().norm(),
            fourth.std
        );
    }

    #[test]
    fn conjugate_symmetry_holds() {
        let rho = crate::states::make_ideal_cluster(1, crate::states::Branch::Plus).unwrap();
        let cal = NoiseCalibration::paper_for_modes(2);
        let rec = synthesize_shots(&rho, &cal, 100_000, 31).unwrap();
        let table = estimate_moments(&rec, 2, &[0, 1], 50, 37).unwrap();
        assert!(table.conjugate_symmetry_violation() < 3.0);
    }

    #[test]
    fn bootstrap_scales_as_inverse_sqrt_shots() {
        let rho = crate::states::make_ideal_cluster(1, crate::states::Branch::Plus).unwrap();
        let cal = NoiseCalibration::paper_for_modes(2);
        let key: ExpKey = vec![(1, 1), (0, 0)];
        let mut stds = Vec::new();
        for (i, n) in [20_000usize, 200_000].iter().enumerate() {
            let rec = synthesize_shots(&rho, &cal, *n, 41 + i as u64).unwrap();
            let table = estimate_moments(&rec, 2, &[0, 1], 80, 43).unwrap();
            stds.push(table.entries[&key].std);
        }
        let ratio = stds[0] / stds[1];
        let expect = (200_000f64 / 20_000.0).sqrt();
        assert!(
            ratio > expect / 2.0 && ratio < expect * 2.0,
            "ratio {ratio}, expected about {expect}"
        );
    }
}
