//! Synthetic heterodyne shot records.
//!
//! Measurement model: each shot of mode m returns `S = a + h^dag`, where the
//! amplifier-chain noise mode h carries `N0` thermal photons. Sampling the
//! signal part from the Husimi distribution of the state and adding a
//! circular complex Gaussian of mean photon number `N0` reproduces exactly
//! the antinormally-ordered moment model used by the deconvolution: a vacuum
//! signal gives per-quadrature variance `(1 + N0)/2`, i.e. 1/2 at `N0 = 0`.

use num_complex::Complex64 as C64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CVec};
use crate::rng::stream_rng;
use crate::states::{MultimodeState, Rail, SubsystemLabel};

/// Published effective noise photon numbers per rail.
pub const PAPER_N0_OMEGA1: f64 = 2.4;
pub const PAPER_N0_OMEGA2: f64 = 3.5;
/// Published measurement efficiencies per rail (recorded metadata; the
/// effective noise photon numbers already absorb them).
pub const PAPER_EFF_OMEGA1: f64 = 0.294;
pub const PAPER_EFF_OMEGA2: f64 = 0.222;

/// Per-mode effective noise photon number and measurement efficiency.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseCalibration {
    pub n0: Vec<f64>,
    pub efficiency: Vec<f64>,
}

impl NoiseCalibration {
    pub fn new(n0: Vec<f64>, efficiency: Vec<f64>) -> Result<Self> {
        let cal = Self { n0, efficiency };
        cal.validate()?;
        Ok(cal)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n0.len() != self.efficiency.len() {
            return Err(Error::DimensionMismatch(
                "n0 and efficiency lists differ in length".into(),
            ));
        }
        if self.n0.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::InvalidArgument("noise photon numbers must be >= 0".into()));
        }
        if self.efficiency.iter().any(|&v| !(v > 0.0 && v <= 1.0)) {
            return Err(Error::InvalidArgument("efficiencies must lie in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn mode_count(&self) -> usize {
        self.n0.len()
    }

    /// Published values assigned by rail for `n_modes` in the standard
    /// (omega2, omega1) per-bin ordering.
    pub fn paper_for_modes(n_modes: usize) -> Self {
        let mut n0 = Vec::with_capacity(n_modes);
        let mut eff = Vec::with_capacity(n_modes);
        for m in 0..n_modes {
            if m % 2 == 0 {
                n0.push(PAPER_N0_OMEGA2);
                eff.push(PAPER_EFF_OMEGA2);
            } else {
                n0.push(PAPER_N0_OMEGA1);
                eff.push(PAPER_EFF_OMEGA1);
            }
        }
        Self { n0, efficiency: eff }
    }

    /// Published values assigned by the rail tags of the labels.
    pub fn paper_for_labels(labels: &[SubsystemLabel]) -> Result<Self> {
        let mut n0 = Vec::new();
        let mut eff = Vec::new();
        for l in labels {
            match l {
                SubsystemLabel::Mode { rail: Rail::Omega1, .. } => {
                    n0.push(PAPER_N0_OMEGA1);
                    eff.push(PAPER_EFF_OMEGA1);
                }
                SubsystemLabel::Mode { rail: Rail::Omega2, .. } => {
                    n0.push(PAPER_N0_OMEGA2);
                    eff.push(PAPER_EFF_OMEGA2);
                }
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "calibration needs photon-mode labels, found {other:?}"
                    )))
                }
            }
        }
        Ok(Self { n0, efficiency: eff })
    }
}

/// Per-shot complex amplitudes for every mode, plus a vacuum-reference
/// record of identical shape.
#[derive(Debug, Clone)]
pub struct ShotRecord {
    mode_count: usize,
    shot_count: usize,
    signal: Vec<C64>,
    vacuum: Vec<C64>,
}

impl ShotRecord {
    pub fn from_flat(mode_count: usize, signal: Vec<C64>, vacuum: Vec<C64>) -> Result<Self> {
        if mode_count == 0 {
            return Err(Error::InvalidArgument("mode_count must be positive".into()));
        }
        if signal.len() != vacuum.len() || signal.len() % mode_count != 0 {
            return Err(Error::DimensionMismatch(
                "signal and vacuum records must have identical shot-major shapes".into(),
            ));
        }
        if signal.iter().chain(vacuum.iter()).any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::InvalidArgument("shot records must be finite".into()));
        }
        Ok(Self { mode_count, shot_count: signal.len() / mode_count, signal, vacuum })
    }

    pub fn mode_count(&self) -> usize {
        self.mode_count
    }

    pub fn shot_count(&self) -> usize {
        self.shot_count
    }

    pub fn signal_flat(&self) -> &[C64] {
        &self.signal
    }

    pub fn vacuum_flat(&self) -> &[C64] {
        &self.vacuum
    }

    pub fn signal_shot(&self, s: usize) -> &[C64] {
        &self.signal[s * self.mode_count..(s + 1) * self.mode_count]
    }

    pub fn vacuum_shot(&self, s: usize) -> &[C64] {
        &self.vacuum[s * self.mode_count..(s + 1) * self.mode_count]
    }
}

/// Sample `x` with density `exp(-|x|^2) |a + b x|^2 / (pi (|a|^2 + |b|^2))`
/// by rejection from a two-component envelope.
fn sample_pure_husimi<R: Rng>(a: C64, b: C64, rng: &mut R) -> C64 {
    let wa = a.norm_sqr();
    let wb = b.norm_sqr();
    let total = wa + wb;
    loop {
        let x = if rng.random::<f64>() * total < wa {
            // density exp(-|x|^2)/pi: per-quadrature variance 1/2
            let s = 0.5f64.sqrt();
            C64::new(sample_normal(rng) * s, sample_normal(rng) * s)
        } else {
            // density |x|^2 exp(-|x|^2)/pi: radius^2 ~ Gamma(2, 1)
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            let v: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            let r = (-(u.ln() + v.ln())).sqrt();
            let theta = rng.random::<f64>() * std::f64::consts::TAU;
            C64::from_polar(r, theta)
        };
        let num = (a + b * x).norm_sqr();
        let env = 2.0 * (wa + wb * x.norm_sqr());
        if rng.random::<f64>() * env < num {
            return x;
        }
    }
}

fn sample_normal<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller; adequate and dependency-light for this sampler
    let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let v: f64 = rng.random::<f64>();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

fn sample_complex_gaussian<R: Rng>(mean_photons: f64, rng: &mut R) -> C64 {
    if mean_photons <= 0.0 {
        return C64::new(0.0, 0.0);
    }
    let s = (mean_photons / 2.0).sqrt();
    C64::new(sample_normal(rng) * s, sample_normal(rng) * s)
}

pub(crate) fn complex_gaussian<R: Rng>(mean_photons: f64, rng: &mut R) -> C64 {
    sample_complex_gaussian(mean_photons, rng)
}

/// Husimi sample of the vacuum: per-quadrature variance 1/2.
pub(crate) fn vacuum_sample<R: Rng>(rng: &mut R) -> C64 {
    let s = 0.5f64.sqrt();
    C64::new(sample_normal(rng) * s, sample_normal(rng) * s)
}

pub(crate) fn sample_pure_modes<R: Rng>(amps: &CVec, n_modes: usize, rng: &mut R) -> Vec<C64> {
    heterodyne_sample_pure(amps, n_modes, rng)
}

/// Sequential heterodyne sample of every mode of the pure state `amps`
/// (modes most-significant-first), returning the per-mode signal amplitudes
/// `a`-part (before amplifier noise).
fn heterodyne_sample_pure<R: Rng>(amps: &CVec, n_modes: usize, rng: &mut R) -> Vec<C64> {
    let mut current: Vec<C64> = amps.iter().copied().collect();
    let mut out = Vec::with_capacity(n_modes);
    for s in 0..n_modes {
        let half = 1usize << (n_modes - s - 1);
        // 2x2 marginal of the leading mode
        let mut r00 = 0.0;
        let mut r11 = 0.0;
        let mut r01 = C64::new(0.0, 0.0);
        for k in 0..half {
            let a0 = current[k];
            let a1 = current[half + k];
            r00 += a0.norm_sqr();
            r11 += a1.norm_sqr();
            r01 += a0 * a1.conj();
        }
        let tr = (r00 + r11).max(1e-300);
        // eigendecompose the 2x2 marginal and pick a pure component
        let (p0, v0, p1, v1) = eig2(r00 / tr, r01 / tr, r11 / tr);
        let (a, b) = if rng.random::<f64>() < p0 / (p0 + p1) { v0 } else { v1 };
        let x = sample_pure_husimi(a, b, rng);
        let alpha = x.conj();
        out.push(alpha);
        // condition the remaining modes on <alpha| and renormalize
        let mut norm = 0.0;
        for k in 0..half {
            let nk = current[k] + x * current[half + k];
            norm += nk.norm_sqr();
            current[k] = nk;
        }
        current.truncate(half);
        let scale = 1.0 / norm.sqrt().max(1e-300);
        for z in current.iter_mut() {
            *z *= scale;
        }
    }
    out
}

/// Eigendecomposition of a 2x2 Hermitian matrix given (r00, r01, r11);
/// returns (p0, (a0, b0), p1, (a1, b1)).
fn eig2(r00: f64, r01: C64, r11: f64) -> (f64, (C64, C64), f64, (C64, C64)) {
    let tr = r00 + r11;
    let det = r00 * r11 - r01.norm_sqr();
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let l0 = tr / 2.0 + disc;
    let l1 = (tr / 2.0 - disc).max(0.0);
    let mk = |lam: f64| -> (C64, C64) {
        // (r00 - lam) a + r01 b = 0
        let a = r01;
        let b = C64::new(lam - r00, 0.0);
        let n = (a.norm_sqr() + b.norm_sqr()).sqrt();
        if n < 1e-15 {
            if r00 >= r11 {
                (C64::new(1.0, 0.0), C64::new(0.0, 0.0))
            } else {
                (C64::new(0.0, 0.0), C64::new(1.0, 0.0))
            }
        } else {
            (a / n, b / n)
        }
    };
    (l0, mk(l0), l1, mk(l1))
}

/// Synthesize heterodyne shots from a photon-only state under the
/// `S = a + h^dag` model, together with a matching vacuum record.
/// Deterministic under a fixed seed, independent of thread count.
pub fn synthesize_shots(
    rho: &MultimodeState,
    cal: &NoiseCalibration,
    n_shots: usize,
    seed: u64,
) -> Result<ShotRecord> {
    cal.validate()?;
    let n_modes = rho.dims().len();
    if rho.dims().iter().any(|&d| d != 2) {
        return Err(Error::InvalidArgument("expected two-dimensional photon modes".into()));
    }
    if rho.labels().iter().any(|l| matches!(l, SubsystemLabel::Qubit)) {
        return Err(Error::InvalidArgument(
            "emitter register must be traced out or projected before sampling".into(),
        ));
    }
    if cal.mode_count() != n_modes {
        return Err(Error::DimensionMismatch(format!(
            "calibration covers {} modes, state has {}",
            cal.mode_count(),
            n_modes
        )));
    }
    if n_shots == 0 {
        return Err(Error::InvalidArgument("n_shots must be >= 1".into()));
    }

    // spectral decomposition once; sampling mixes the pure components
    let (vals, vecs) = linalg::eigh(rho.matrix());
    let mut comps: Vec<(f64, CVec)> = Vec::new();
    for (k, &p) in vals.iter().enumerate() {
        if p > 1e-12 {
            comps.push((p, CVec::from_column_slice(vecs.column(k).as_slice())));
        }
    }
    let psum: f64 = comps.iter().map(|c| c.0).sum();
    let mut acc = 0.0;
    let cdf: Vec<f64> = comps
        .iter()
        .map(|c| {
            acc += c.0 / psum;
            acc
        })
        .collect();

    const CHUNK: usize = 4096;
    let n_chunks = n_shots.div_ceil(CHUNK);
    let chunks: Vec<(Vec<C64>, Vec<C64>)> = (0..n_chunks)
        .into_par_iter()
        .map(|ci| {
            let mut rng = stream_rng(seed, ci as u64);
            let lo = ci * CHUNK;
            let hi = ((ci + 1) * CHUNK).min(n_shots);
            let mut signal = Vec::with_capacity((hi - lo) * n_modes);
            let mut vacuum = Vec::with_capacity((hi - lo) * n_modes);
            for _ in lo..hi {
                let u: f64 = rng.random();
                let pick = cdf.iter().position(|&c| u <= c).unwrap_or(comps.len() - 1);
                let alphas = heterodyne_sample_pure(&comps[pick].1, n_modes, &mut rng);
                for (m, &alpha) in alphas.iter().enumerate() {
                    signal.push(alpha + sample_complex_gaussian(cal.n0[m], &mut rng));
                }
                for &n0 in cal.n0.iter() {
                    let s = 0.5f64.sqrt();
                    let vac = C64::new(sample_normal(&mut rng) * s, sample_normal(&mut rng) * s);
                    vacuum.push(vac + sample_complex_gaussian(n0, &mut rng));
                }
            }
            (signal, vacuum)
        })
        .collect();

    let mut signal = Vec::with_capacity(n_shots * n_modes);
    let mut vacuum = Vec::with_capacity(n_shots * n_modes);
    for (s, v) in chunks {
        signal.extend(s);
        vacuum.extend(v);
    }
    ShotRecord::from_flat(n_modes, signal, vacuum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{pair_labels, Branch, MultimodeState};

    fn vacuum_state(n_modes: usize) -> MultimodeState {
        let mut v = CVec::zeros(1 << n_modes);
        v[0] = C64::new(1.0, 0.0);
        MultimodeState::from_pure(vec![2; n_modes], pair_labels(n_modes / 2), &v).unwrap()
    }

    #[test]
    fn vacuum_quadrature_variance_is_half() {
        let rho = vacuum_state(2);
        let cal = NoiseCalibration::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let rec = synthesize_shots(&rho, &cal, 40_000, 7).unwrap();
        for m in 0..2 {
            let mut vi = 0.0;
            let mut vq = 0.0;
            for s in 0..rec.shot_count() {
                let z = rec.signal_shot(s)[m];
                vi += z.re * z.re;
                vq += z.im * z.im;
            }
            vi /= rec.shot_count() as f64;
            vq /= rec.shot_count() as f64;
            // 3 sigma of the variance estimate ~ 3 * 0.5 * sqrt(2/N)
            let tol = 3.0 * 0.5 * (2.0 / rec.shot_count() as f64).sqrt();
            assert!((vi - 0.5).abs() < tol, "I variance {vi}");
            assert!((vq - 0.5).abs() < tol, "Q variance {vq}");
        }
    }

    #[test]
    fn single_photon_mean_photon_number() {
        // |1> on a single mode
        let mut v = CVec::zeros(2);
        v[1] = C64::new(1.0, 0.0);
        let rho = MultimodeState::from_pure(
            vec![2],
            vec![SubsystemLabel::Mode { time_bin: 0, rail: Rail::Omega1 }],
            &v,
        )
        .unwrap();
        let cal = NoiseCalibration::new(vec![0.0], vec![1.0]).unwrap();
        let rec = synthesize_shots(&rho, &cal, 60_000, 11).unwrap();
        let n = rec.shot_count() as f64;
        let sig: f64 = (0..rec.shot_count())
            .map(|s| rec.signal_shot(s)[0].norm_sqr())
            .sum::<f64>()
            / n;
        let vac: f64 = (0..rec.shot_count())
            .map(|s| rec.vacuum_shot(s)[0].norm_sqr())
            .sum::<f64>()
            / n;
        let est = sig - vac;
        assert!((est - 1.0).abs() < 0.05, "<a^dag a> estimate {est}");
    }

    #[test]
    fn reproducible_under_fixed_seed() {
        let rho = vacuum_state(2);
        let cal = NoiseCalibration::paper_for_modes(2);
        let a = synthesize_shots(&rho, &cal, 1000, 123).unwrap();
        let b = synthesize_shots(&rho, &cal, 1000, 123).unwrap();
        assert_eq!(a.signal_flat(), b.signal_flat());
        assert_eq!(a.vacuum_flat(), b.vacuum_flat());
    }

    #[test]
    fn rejects_qubit_register() {
        let mut v = CVec::zeros(4);
        v[0] = C64::new(1.0, 0.0);
        let labels = vec![
            SubsystemLabel::Qubit,
            SubsystemLabel::Mode { time_bin: 0, rail: Rail::Omega1 },
        ];
        let rho = MultimodeState::from_pure(vec![2, 2], labels, &v).unwrap();
        let cal = NoiseCalibration::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!(synthesize_shots(&rho, &cal, 10, 1).is_err());
    }

    #[test]
    fn cluster_state_sampling_runs() {
        let rho = crate::states::make_ideal_cluster(2, Branch::Plus).unwrap();
        let cal = NoiseCalibration::paper_for_modes(4);
        let rec = synthesize_shots(&rho, &cal, 2000, 5).unwrap();
        assert_eq!(rec.mode_count(), 4);
        assert_eq!(rec.shot_count(), 2000);
    }
}
