//! Device-level numerics: parameters, waveforms and spectra, ac Stark
//! shifts, resonator-filter response, and the effective Lindblad emission
//! model.
//!
//! Unit conventions: frequencies are ordinary (not angular) in MHz, times in
//! microseconds, rates in inverse microseconds. Angular factors of 2 pi are
//! applied inside the dynamical routines.

mod emission;
mod spectra;
mod stark;

pub use emission::{
    coherence_limit, coherence_limit_channel, emission_simulation,
    photon_generation_efficiency, CoherenceReport, EmissionResult, ROUND_DURATION,
};
pub use spectra::{dressed_peaks, system_spectra, SpectraResult};
pub use stark::{stark_shift, stark_shift_numeric, Transition};

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// All device quantities: transition frequencies, couplings, decoherence
/// times with their spreads, drive calibrations, emission rates, and the
/// heterodyne noise/efficiency figures.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceParams {
    /// Qubit transition frequencies (MHz).
    pub omega_ge: f64,
    pub omega_ef: f64,
    pub omega_fh: f64,
    /// (mean, std) energy-relaxation and Ramsey dephasing times (us).
    pub t1_ge: (f64, f64),
    pub t2_ge: (f64, f64),
    pub t1_ef: (f64, f64),
    pub t2_ef: (f64, f64),
    pub t1_fh: (f64, f64),
    pub t2_fh: (f64, f64),
    /// Resonator and filter (MHz).
    pub omega_r_bare: f64,
    pub omega_r_dressed_g: f64,
    pub dispersive_shift_2chi: f64,
    pub omega_filter: f64,
    pub kappa_filter: f64,
    pub coupling_g: f64,
    pub coupling_j: f64,
    /// Effective resonator linewidth (MHz).
    pub kappa_eff: f64,
    /// Raman drive calibrations (MHz).
    pub rabi_f0g1: f64,
    pub rabi_h0e1: f64,
    pub drive_f0g1: f64,
    pub drive_h0e1: f64,
    /// Emission rates (1/us).
    pub gamma_f0g1: f64,
    pub gamma_h0e1: f64,
    /// Emitted-mode centers (MHz).
    pub omega_mode1: f64,
    pub omega_mode2: f64,
    /// Heterodyne chain noise photon numbers and efficiencies per rail.
    pub noise_photon_f0g1: f64,
    pub noise_photon_h0e1: f64,
    pub efficiency_f0g1: f64,
    pub efficiency_h0e1: f64,
}

impl DeviceParams {
    /// Anharmonicity `omega_ef - omega_ge` (negative for a transmon).
    pub fn alpha(&self) -> f64 {
        self.omega_ef - self.omega_ge
    }

    /// Sextic ladder coefficient fixed by the measured transitions:
    /// with level energies `E_n = n w + (alpha/2) n(n-1) + (alpha_h/6) n(n-1)(n-2)`,
    /// the f-h transition forces `alpha_h = omega_fh - omega_ge - 2 alpha`.
    pub fn alpha_h(&self) -> f64 {
        self.omega_fh - self.omega_ge - 2.0 * self.alpha()
    }

    /// Qubit ladder level energy (MHz) for n = 0..=3 (and beyond, for the
    /// numerical Stark oracle).
    pub fn level_energy(&self, n: usize) -> f64 {
        let nf = n as f64;
        nf * self.omega_ge
            + 0.5 * self.alpha() * nf * (nf - 1.0)
            + self.alpha_h() / 6.0 * nf * (nf - 1.0) * (nf - 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("omega_ge", self.omega_ge),
            ("omega_ef", self.omega_ef),
            ("omega_fh", self.omega_fh),
            ("omega_r_bare", self.omega_r_bare),
            ("omega_filter", self.omega_filter),
            ("kappa_filter", self.kappa_filter),
            ("coupling_g", self.coupling_g),
            ("coupling_j", self.coupling_j),
            ("kappa_eff", self.kappa_eff),
            ("gamma_f0g1", self.gamma_f0g1),
            ("gamma_h0e1", self.gamma_h0e1),
        ] {
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.alpha() >= 0.0 {
            return Err(Error::Config(format!(
                "transmon anharmonicity must be negative, got {}",
                self.alpha()
            )));
        }
        for (name, (mean, std)) in [
            ("t1_ge", self.t1_ge),
            ("t2_ge", self.t2_ge),
            ("t1_ef", self.t1_ef),
            ("t2_ef", self.t2_ef),
            ("t1_fh", self.t1_fh),
            ("t2_fh", self.t2_fh),
        ] {
            if mean <= 0.0 || std < 0.0 {
                return Err(Error::Config(format!(
                    "{name} = ({mean}, {std}) must have positive mean and nonnegative std"
                )));
            }
        }
        Ok(())
    }

    /// The measured device, shipped as the named preset "paper-device".
    pub fn paper_device() -> Self {
        Self {
            omega_ge: 8021.8,
            omega_ef: 7702.9,
            omega_fh: 7347.6,
            t1_ge: (32.6, 5.0),
            t2_ge: (21.5, 4.4),
            t1_ef: (23.0, 1.6),
            t2_ef: (10.3, 1.4),
            t1_fh: (11.3, 2.2),
            t2_fh: (4.8, 0.9),
            omega_r_bare: 10286.6,
            omega_r_dressed_g: 10299.5,
            dispersive_shift_2chi: 4.1,
            omega_filter: 10273.5,
            kappa_filter: 449.3,
            coupling_g: 192.9,
            coupling_j: 94.6,
            kappa_eff: 53.2,
            rabi_f0g1: 699.0,
            rabi_h0e1: 528.0,
            drive_f0g1: 5405.0,
            drive_h0e1: 4665.0,
            gamma_f0g1: 1.0 / 0.131,
            gamma_h0e1: 1.0 / 0.135,
            omega_mode1: 10283.0,
            omega_mode2: 10315.0,
            noise_photon_f0g1: 2.4,
            noise_photon_h0e1: 3.5,
            efficiency_f0g1: 0.294,
            efficiency_h0e1: 0.222,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper-device" => Ok(Self::paper_device()),
            other => Err(Error::Config(format!("unknown device preset {other:?}"))),
        }
    }
}

/// Complex envelope on a uniform time grid with a carrier frequency tag.
#[derive(Debug, Clone)]
pub struct Waveform {
    pub t0: f64,
    pub dt: f64,
    pub samples: Vec<C64>,
    pub carrier_mhz: f64,
}

impl Waveform {
    pub fn norm_sq(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.dt
    }

    /// Discrete Fourier transform with absolute frequencies in MHz, sorted
    /// ascending. Satisfies Parseval: `sum |X|^2 df = sum |x|^2 dt`.
    pub fn spectrum(&self) -> Spectrum {
        let n = self.samples.len();
        let mut buf: Vec<rustfft::num_complex::Complex<f64>> =
            self.samples.iter().map(|z| rustfft::num_complex::Complex::new(z.re, z.im)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let df = 1.0 / (n as f64 * self.dt);
        let mut freqs = Vec::with_capacity(n);
        let mut amps = Vec::with_capacity(n);
        // unwrap the FFT ordering to ascending frequency
        let half = n.div_ceil(2);
        for k in half..n {
            freqs.push(self.carrier_mhz + (k as f64 - n as f64) * df);
            amps.push(C64::new(buf[k].re, buf[k].im) * self.dt);
        }
        for (k, b) in buf.iter().enumerate().take(half) {
            freqs.push(self.carrier_mhz + k as f64 * df);
            amps.push(C64::new(b.re, b.im) * self.dt);
        }
        Spectrum { freqs, amps }
    }
}

/// Complex spectrum on an ascending frequency grid (MHz).
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    pub amps: Vec<C64>,
}

impl Spectrum {
    /// Rectangle-rule norm on the (uniform) grid; exactly Parseval-dual to
    /// the time-domain norm.
    pub fn norm_sq(&self) -> f64 {
        if self.freqs.len() < 2 {
            return 0.0;
        }
        let df = self.freqs[1] - self.freqs[0];
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>() * df
    }

    fn interp(&self, f: f64) -> C64 {
        if f < self.freqs[0] || f > *self.freqs.last().unwrap() {
            return C64::new(0.0, 0.0);
        }
        match self.freqs.binary_search_by(|x| x.partial_cmp(&f).unwrap()) {
            Ok(k) => self.amps[k],
            Err(k) => {
                let (f0, f1) = (self.freqs[k - 1], self.freqs[k]);
                let w = (f - f0) / (f1 - f0);
                self.amps[k - 1] * (1.0 - w) + self.amps[k] * w
            }
        }
    }

    /// Peak frequency by parabolic refinement of the |amp|^2 maximum.
    pub fn peak_frequency(&self) -> f64 {
        let powers: Vec<f64> = self.amps.iter().map(|a| a.norm_sqr()).collect();
        let mut kmax = 0;
        for (k, &p) in powers.iter().enumerate() {
            if p > powers[kmax] {
                kmax = k;
            }
        }
        if kmax == 0 || kmax + 1 == powers.len() {
            return self.freqs[kmax];
        }
        let (ym, y0, yp) = (powers[kmax - 1], powers[kmax], powers[kmax + 1]);
        let denom = ym - 2.0 * y0 + yp;
        if denom.abs() < 1e-30 {
            return self.freqs[kmax];
        }
        let delta = 0.5 * (ym - yp) / denom;
        self.freqs[kmax] + delta * (self.freqs[1] - self.freqs[0])
    }
}

/// Normalized spectral inner product `int f1^* f2 dw / (|f1| |f2|)`,
/// resampling onto the finer common grid when the grids differ.
pub fn spectral_overlap(f1: &Spectrum, f2: &Spectrum) -> Result<C64> {
    let n1 = f1.norm_sq();
    let n2 = f2.norm_sq();
    if n1 < 1e-300 || n2 < 1e-300 {
        return Err(Error::InvalidArgument("zero-norm spectrum".into()));
    }
    let lo = f1.freqs[0].min(f2.freqs[0]);
    let hi = f1.freqs.last().unwrap().max(*f2.freqs.last().unwrap());
    let df = (f1.freqs[1] - f1.freqs[0]).min(f2.freqs[1] - f2.freqs[0]);
    let n = ((hi - lo) / df).ceil() as usize + 1;
    let mut acc = C64::new(0.0, 0.0);
    for k in 0..n {
        let f = lo + k as f64 * df;
        acc += f1.interp(f).conj() * f2.interp(f) * df;
    }
    Ok(acc / (n1 * n2).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn paper_device_is_valid() {
        let p = DeviceParams::paper_device();
        p.validate().unwrap();
        assert_abs_diff_eq!(p.alpha(), -318.9, epsilon = 1e-9);
        // ladder reproduces the measured transitions
        assert_abs_diff_eq!(p.level_energy(1) - p.level_energy(0), 8021.8, epsilon = 1e-9);
        assert_abs_diff_eq!(p.level_energy(2) - p.level_energy(1), 7702.9, epsilon = 1e-9);
        assert_abs_diff_eq!(p.level_energy(3) - p.level_energy(2), 7347.6, epsilon = 1e-9);
    }

    #[test]
    fn parseval_between_time_and_frequency() {
        let n = 1024;
        let dt = 0.002;
        let gamma: f64 = 7.6;
        let samples: Vec<C64> = (0..n)
            .map(|j| {
                let t = j as f64 * dt;
                C64::new((gamma).sqrt() * (-0.5 * gamma * t).exp(), 0.0)
            })
            .collect();
        let w = Waveform { t0: 0.0, dt, samples, carrier_mhz: 10283.0 };
        let time_norm = w.norm_sq();
        let freq_norm = w.spectrum().norm_sq();
        assert!(
            (time_norm - freq_norm).abs() < 1e-9 * time_norm.max(1.0),
            "time {time_norm} vs freq {freq_norm}"
        );
    }

    #[test]
    fn overlap_of_identical_and_disjoint_spectra() {
        let mk = |center: f64| -> Spectrum {
            let freqs: Vec<f64> = (0..400).map(|k| center - 50.0 + 0.25 * k as f64).collect();
            let amps: Vec<C64> = freqs
                .iter()
                .map(|&f| C64::new((-(f - center).powi(2) / 40.0).exp(), 0.0))
                .collect();
            Spectrum { freqs, amps }
        };
        let a = mk(10283.0);
        let same = spectral_overlap(&a, &a).unwrap();
        assert_abs_diff_eq!(same.re, 1.0, epsilon = 1e-6);
        let b = mk(11000.0);
        let disj = spectral_overlap(&a, &b).unwrap();
        assert!(disj.norm() < 1e-12);
    }

    #[test]
    fn overlap_is_conjugate_symmetric() {
        let mk = |center: f64, chirp: f64| -> Spectrum {
            let freqs: Vec<f64> = (0..500).map(|k| 10200.0 + 0.4 * k as f64).collect();
            let amps: Vec<C64> = freqs
                .iter()
                .map(|&f| {
                    C64::from_polar(
                        (-(f - center).powi(2) / 300.0).exp(),
                        chirp * (f - center),
                    )
                })
                .collect();
            Spectrum { freqs, amps }
        };
        let a = mk(10283.0, 0.02);
        let b = mk(10315.0, -0.013);
        let ab = spectral_overlap(&a, &b).unwrap();
        let ba = spectral_overlap(&b, &a).unwrap();
        assert!((ab - ba.conj()).norm() < 1e-12);
    }

    #[test]
    fn exponential_modes_32_mhz_apart_overlap_three_percent() {
        let p = DeviceParams::paper_device();
        let n = 1 << 14;
        let dt = 1.0 / n as f64; // 1 us total
        let mk = |gamma: f64, carrier: f64| -> Spectrum {
            let samples: Vec<C64> = (0..n)
                .map(|j| {
                    let t = j as f64 * dt;
                    C64::new(gamma.sqrt() * (-0.5 * gamma * t).exp(), 0.0)
                })
                .collect();
            Waveform { t0: 0.0, dt, samples, carrier_mhz: carrier }.spectrum()
        };
        let s1 = mk(p.gamma_f0g1, p.omega_mode1);
        let s2 = mk(p.gamma_h0e1, p.omega_mode2);
        let ov = spectral_overlap(&s1, &s2).unwrap().norm();
        // Lorentzian pair separated by 32 MHz: |<1|2>| ~ 0.037
        assert!(ov > 0.03 / 1.5 && ov < 0.03 * 1.5, "overlap {ov}");
    }
}
