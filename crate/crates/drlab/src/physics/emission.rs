//! Effective Lindblad model of the two-frequency emission round and the
//! coherence-limit estimate.
//!
//! The two Raman processes enter as direct collapse channels at the measured
//! emission rates (f -> g into the omega1 register, h -> e into omega2);
//! drives appear only through those rates and the Stark calibration. The
//! emitted field is accumulated into two-level capture registers by a
//! cascaded master equation whose time-dependent coupling absorbs the
//! temporal mode extracted from a calibration run.

use num_complex::Complex64 as C64;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::channels::{ideal_emission_channel, process_fidelity, EmissionChannel};
use crate::error::{Error, Result};
use crate::linalg::{self, cr, CMat, CVec};
use crate::rng::stream_rng;
use crate::states::{MultimodeState, Rail, SubsystemLabel};

use super::stark::Transition;
use super::{DeviceParams, Waveform};

/// Trace drift tolerance of the master-equation integration.
pub const TRACE_DRIFT_TOL: f64 = 1e-6;
const REL_TOL: f64 = 1e-8;
const ABS_TOL: f64 = 1e-10;

/// Emitter decoherence rates derived from the measured T1/T2 pairs: ladder
/// relaxation plus independent per-level pure dephasing (g carries none).
#[derive(Debug, Clone, Copy)]
pub(crate) struct DecoherenceRates {
    pub relax_ge: f64,
    pub relax_ef: f64,
    pub relax_fh: f64,
    pub deph_e: f64,
    pub deph_f: f64,
    pub deph_h: f64,
}

impl DecoherenceRates {
    pub fn from_times(
        t1_ge: f64,
        t2_ge: f64,
        t1_ef: f64,
        t2_ef: f64,
        t1_fh: f64,
        t2_fh: f64,
    ) -> Self {
        let relax_ge = 1.0 / t1_ge;
        let relax_ef = 1.0 / t1_ef;
        let relax_fh = 1.0 / t1_fh;
        // pure dephasing of each coherence, then per-level rates
        let phi_ge = (1.0 / t2_ge - 0.5 * relax_ge).max(0.0);
        let phi_ef = (1.0 / t2_ef - 0.5 * (relax_ge + relax_ef)).max(0.0);
        let phi_fh = (1.0 / t2_fh - 0.5 * (relax_ef + relax_fh)).max(0.0);
        let deph_e = phi_ge;
        let deph_f = (phi_ef - deph_e).max(0.0);
        let deph_h = (phi_fh - deph_f).max(0.0);
        Self { relax_ge, relax_ef, relax_fh, deph_e, deph_f, deph_h }
    }

    fn jumps(&self) -> Vec<CMat> {
        let proj = |k: usize| -> CMat {
            let mut m = CMat::zeros(4, 4);
            m[(k, k)] = cr(1.0);
            m
        };
        let lower = |to: usize, from: usize, rate: f64| -> CMat {
            let mut m = CMat::zeros(4, 4);
            m[(to, from)] = cr(rate.sqrt());
            m
        };
        let mut out = vec![
            lower(0, 1, self.relax_ge),
            lower(1, 2, self.relax_ef),
            lower(2, 3, self.relax_fh),
        ];
        for (k, rate) in [(1, self.deph_e), (2, self.deph_f), (3, self.deph_h)] {
            if rate > 0.0 {
                out.push(proj(k).scale((2.0 * rate).sqrt()));
            }
        }
        out
    }
}

fn lindblad_dissipator(rho: &CMat, jumps: &[CMat]) -> CMat {
    let mut acc = CMat::zeros(rho.nrows(), rho.ncols());
    for l in jumps {
        let l_rho = l * rho;
        acc += &l_rho * l.adjoint();
        let ldl = l.adjoint() * l;
        acc -= (&ldl * rho + rho * &ldl).scale(0.5);
    }
    acc
}

/// Cash-Karp adaptive RK45 for the master equation, sampling the solution at
/// `outputs` (ascending, starting at or after t0). The trace drift guard
/// halves the step and ultimately fails on persistent drift.
fn integrate_me<F>(rho0: &CMat, rhs: F, t0: f64, outputs: &[f64]) -> Result<Vec<CMat>>
where
    F: Fn(f64, &CMat) -> CMat,
{
    const A2: f64 = 0.2;
    const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
    const A4: [f64; 3] = [0.3, -0.9, 1.2];
    const A5: [f64; 4] = [-11.0 / 54.0, 2.5, -70.0 / 27.0, 35.0 / 27.0];
    const A6: [f64; 5] = [
        1631.0 / 55296.0,
        175.0 / 512.0,
        575.0 / 13824.0,
        44275.0 / 110592.0,
        253.0 / 4096.0,
    ];
    const B5: [f64; 6] = [37.0 / 378.0, 0.0, 250.0 / 621.0, 125.0 / 594.0, 0.0, 512.0 / 1771.0];
    const B4: [f64; 6] = [
        2825.0 / 27648.0,
        0.0,
        18575.0 / 48384.0,
        13525.0 / 55296.0,
        277.0 / 14336.0,
        0.25,
    ];
    let mut rho = rho0.clone();
    let mut t = t0;
    let mut h = 1e-4f64;
    let mut out = Vec::with_capacity(outputs.len());
    let mut next_out = 0usize;
    while next_out < outputs.len() && outputs[next_out] <= t + 1e-15 {
        out.push(rho.clone());
        next_out += 1;
    }
    let t_end = *outputs.last().unwrap();
    let mut rejected_in_a_row = 0usize;
    while t < t_end - 1e-15 {
        let target = outputs[next_out];
        let mut step = h.min(target - t);
        loop {
            let k1 = rhs(t, &rho);
            let k2 = rhs(t + A2 * step, &(&rho + k1.scale(A2 * step)));
            let k3 = rhs(
                t + 0.3 * step,
                &(&rho + k1.scale(A3[0] * step) + k2.scale(A3[1] * step)),
            );
            let k4 = rhs(
                t + 0.6 * step,
                &(&rho + k1.scale(A4[0] * step) + k2.scale(A4[1] * step) + k3.scale(A4[2] * step)),
            );
            let k5 = rhs(
                t + step,
                &(&rho
                    + k1.scale(A5[0] * step)
                    + k2.scale(A5[1] * step)
                    + k3.scale(A5[2] * step)
                    + k4.scale(A5[3] * step)),
            );
            let k6 = rhs(
                t + 0.875 * step,
                &(&rho
                    + k1.scale(A6[0] * step)
                    + k2.scale(A6[1] * step)
                    + k3.scale(A6[2] * step)
                    + k4.scale(A6[3] * step)
                    + k5.scale(A6[4] * step)),
            );
            let ks = [&k1, &k2, &k3, &k4, &k5, &k6];
            let mut sol5 = rho.clone();
            let mut sol4 = rho.clone();
            for (i, k) in ks.iter().enumerate() {
                if B5[i] != 0.0 {
                    sol5 += k.scale(B5[i] * step);
                }
                if B4[i] != 0.0 {
                    sol4 += k.scale(B4[i] * step);
                }
            }
            let scale_ref = rho.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
            let err = (&sol5 - &sol4)
                .iter()
                .map(|z| z.norm())
                .fold(0.0f64, f64::max)
                / (ABS_TOL + REL_TOL * scale_ref.max(1.0));
            let trace_drift = (linalg::trace(&sol5).re - 1.0).abs();
            if err <= 1.0 && trace_drift <= TRACE_DRIFT_TOL {
                t += step;
                rho = sol5;
                rejected_in_a_row = 0;
                let grow = 0.9 * err.max(1e-10).powf(-0.2);
                h = (step * grow.min(5.0)).min(0.05);
                break;
            }
            rejected_in_a_row += 1;
            step *= if trace_drift > TRACE_DRIFT_TOL { 0.5 } else { (0.9 * err.powf(-0.25)).clamp(0.1, 0.5) };
            if step < 1e-12 || rejected_in_a_row > 200 {
                return Err(Error::Integration(format!(
                    "step collapsed at t = {t:.6} (trace drift {trace_drift:.2e})"
                )));
            }
        }
        while next_out < outputs.len() && outputs[next_out] <= t + 1e-12 {
            out.push(rho.clone());
            next_out += 1;
        }
    }
    while next_out < outputs.len() {
        out.push(rho.clone());
        next_out += 1;
    }
    Ok(out)
}

/// Temporal-mode data from a calibration run: normalized samples and the
/// cumulative captured fraction.
struct TemporalMode {
    dt: f64,
    samples: Vec<C64>,
    cumulative: Vec<f64>,
    norm_sq: f64,
}

impl TemporalMode {
    fn from_envelope(dt: f64, raw: &[C64]) -> Self {
        // trapezoid norm and cumulative with cumulative[0] = 0, so the
        // absorber coupling keeps its 1/sqrt(t) onset
        let mut norm_sq = 0.0;
        for k in 1..raw.len() {
            norm_sq += 0.5 * (raw[k].norm_sqr() + raw[k - 1].norm_sqr()) * dt;
        }
        let scale = 1.0 / norm_sq.sqrt().max(1e-300);
        let samples: Vec<C64> = raw.iter().map(|z| z.scale(scale)).collect();
        let mut cumulative = Vec::with_capacity(samples.len());
        cumulative.push(0.0);
        let mut acc = 0.0;
        for k in 1..samples.len() {
            acc += 0.5 * (samples[k].norm_sqr() + samples[k - 1].norm_sqr()) * dt;
            cumulative.push(acc.min(1.0));
        }
        Self { dt, samples, cumulative, norm_sq }
    }

    fn value(&self, t: f64) -> C64 {
        let pos = (t / self.dt).max(0.0);
        let k = pos as usize;
        if k + 1 >= self.samples.len() {
            return *self.samples.last().unwrap();
        }
        let w = pos - k as f64;
        self.samples[k].scale(1.0 - w) + self.samples[k + 1].scale(w)
    }

    fn captured(&self, t: f64) -> f64 {
        let pos = (t / self.dt).max(0.0);
        let k = pos as usize;
        if k + 1 >= self.cumulative.len() {
            return *self.cumulative.last().unwrap();
        }
        let w = pos - k as f64;
        self.cumulative[k] * (1.0 - w) + self.cumulative[k + 1] * w
    }

    /// Absorbing-cavity coupling `-u*(t)/sqrt(int_0^t |u|^2)`, capped.
    fn coupling(&self, t: f64, cap: f64) -> C64 {
        let denom = self.captured(t).max(1e-12).sqrt();
        let g = -self.value(t).conj() / denom;
        if g.norm() > cap {
            g.scale(cap / g.norm())
        } else {
            g
        }
    }
}

const ENVELOPE_SAMPLES: usize = 2000;

struct EnvelopeRun {
    dt: f64,
    coherence_gf: Vec<C64>,
    coherence_eh: Vec<C64>,
    emitted_w1: f64,
    emitted_w2: f64,
}

/// Emitter-only run: evolve a 4-level initial state under emission and
/// decoherence, recording the two mean-field envelopes and the emitted
/// photon numbers.
fn envelope_run(
    p: &DeviceParams,
    rates: &DecoherenceRates,
    initial: &CVec,
    duration: f64,
) -> Result<EnvelopeRun> {
    let mut jumps = rates.jumps();
    let mut l1 = CMat::zeros(4, 4);
    l1[(0, 2)] = cr(p.gamma_f0g1.sqrt()); // f -> g, omega1 photon
    let mut l2 = CMat::zeros(4, 4);
    l2[(1, 3)] = cr(p.gamma_h0e1.sqrt()); // h -> e, omega2 photon
    jumps.push(l1);
    jumps.push(l2);
    let rho0 = linalg::outer(initial);
    let dt = duration / ENVELOPE_SAMPLES as f64;
    let outputs: Vec<f64> = (0..=ENVELOPE_SAMPLES).map(|k| k as f64 * dt).collect();
    let rhs = move |_t: f64, rho: &CMat| lindblad_dissipator(rho, &jumps);
    let states = integrate_me(&rho0, rhs, 0.0, &outputs)?;
    let mut coherence_gf = Vec::with_capacity(states.len());
    let mut coherence_eh = Vec::with_capacity(states.len());
    let mut pop_f = Vec::with_capacity(states.len());
    let mut pop_h = Vec::with_capacity(states.len());
    for s in &states {
        coherence_gf.push(s[(2, 0)] * cr(p.gamma_f0g1.sqrt()));
        coherence_eh.push(s[(3, 1)] * cr(p.gamma_h0e1.sqrt()));
        pop_f.push(s[(2, 2)].re);
        pop_h.push(s[(3, 3)].re);
    }
    let trapz = |v: &[f64]| -> f64 {
        let mut acc = 0.0;
        for k in 1..v.len() {
            acc += 0.5 * (v[k] + v[k - 1]) * dt;
        }
        acc
    };
    Ok(EnvelopeRun {
        dt,
        coherence_gf,
        coherence_eh,
        emitted_w1: p.gamma_f0g1 * trapz(&pop_f),
        emitted_w2: p.gamma_h0e1 * trapz(&pop_h),
    })
}

/// Joint emitter + capture-register run. Register order matches the channel
/// convention: (emitter, omega2 slot, omega1 slot).
fn capture_run(
    p: &DeviceParams,
    rates: &DecoherenceRates,
    u1: &TemporalMode,
    u2: &TemporalMode,
    initial: &CMat,
    duration: f64,
) -> Result<CMat> {
    let dims = [4usize, 2, 2];
    let lift = |m: &CMat, site: usize| linalg::op_on(&dims, site, m);
    let static_jumps: Vec<CMat> = rates
        .jumps()
        .into_iter()
        .map(|j| lift(&j, 0))
        .collect();
    let mut l1 = CMat::zeros(4, 4);
    l1[(0, 2)] = cr(p.gamma_f0g1.sqrt());
    let mut l2 = CMat::zeros(4, 4);
    l2[(1, 3)] = cr(p.gamma_h0e1.sqrt());
    let l1 = lift(&l1, 0);
    let l2 = lift(&l2, 0);
    let a_lower = CMat::from_row_slice(2, 2, &[cr(0.0), cr(1.0), cr(0.0), cr(0.0)]);
    let a_w2 = lift(&a_lower, 1);
    let a_w1 = lift(&a_lower, 2);
    let cap = 100.0 * p.gamma_f0g1.max(p.gamma_h0e1).sqrt();
    let l1d = l1.adjoint();
    let l2d = l2.adjoint();
    let a1d = a_w1.adjoint();
    let a2d = a_w2.adjoint();

    let ld_a1 = &l1d * &a_w1;
    let ad_l1 = &a1d * &l1;
    let ld_a2 = &l2d * &a_w2;
    let ad_l2 = &a2d * &l2;

    let rho0 = initial.clone();
    let outputs = vec![duration];
    let rhs = move |t: f64, rho: &CMat| {
        let g1 = u1.coupling(t, cap);
        let g2 = u2.coupling(t, cap);
        let lt1 = &l1 + a_w1.map(|z| z * g1);
        let lt2 = &l2 + a_w2.map(|z| z * g2);
        // cascade Hamiltonian (i/2)(g L^dag a - g* a^dag L) per channel
        let h_cas = ld_a1.map(|z| z * C64::new(0.0, 0.5) * g1)
            - ad_l1.map(|z| z * C64::new(0.0, 0.5) * g1.conj())
            + ld_a2.map(|z| z * C64::new(0.0, 0.5) * g2)
            - ad_l2.map(|z| z * C64::new(0.0, 0.5) * g2.conj());
        let mut d = lindblad_dissipator(rho, &static_jumps);
        d += lindblad_dissipator(rho, std::slice::from_ref(&lt1));
        d += lindblad_dissipator(rho, std::slice::from_ref(&lt2));
        let comm = &h_cas * rho - rho * &h_cas;
        d + comm * C64::new(0.0, -1.0)
    };
    let finals = integrate_me(&rho0, rhs, 0.0, &outputs)?;
    Ok(finals.into_iter().next().unwrap())
}

fn ket4(amps: [C64; 4]) -> CVec {
    let v = CVec::from_vec(amps.to_vec());
    let n = v.norm();
    v.scale(1.0 / n)
}

/// Result of a full emission simulation.
#[derive(Debug, Clone)]
pub struct EmissionResult {
    pub waveform_w1: Waveform,
    pub waveform_w2: Waveform,
    /// Joint (emitter {g,e}, omega2 slot, omega1 slot) state after the round.
    pub joint_state: MultimodeState,
    /// Emitter population left outside {g,e} at the end of the round.
    pub leakage: f64,
}

/// Simulate one emission round from a four-level emitter superposition.
/// Returns the two emitted temporal envelopes (scaled so that the squared
/// norm equals the emitted photon number per channel) and the joint
/// discrete state.
pub fn emission_simulation(
    p: &DeviceParams,
    initial: [C64; 4],
    duration: f64,
) -> Result<EmissionResult> {
    p.validate()?;
    let gamma_min = p.gamma_f0g1.min(p.gamma_h0e1);
    if duration < 5.0 / gamma_min {
        return Err(Error::InvalidArgument(format!(
            "duration {duration} us is shorter than 5/Gamma = {}",
            5.0 / gamma_min
        )));
    }
    let rates = DecoherenceRates::from_times(
        p.t1_ge.0, p.t2_ge.0, p.t1_ef.0, p.t2_ef.0, p.t1_fh.0, p.t2_fh.0,
    );
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let run1 = envelope_run(p, &rates, &ket4([cr(s), cr(0.0), cr(s), cr(0.0)]), duration)?;
    let run2 = envelope_run(p, &rates, &ket4([cr(0.0), cr(s), cr(0.0), cr(s)]), duration)?;
    let u1 = TemporalMode::from_envelope(run1.dt, &run1.coherence_gf);
    let u2 = TemporalMode::from_envelope(run2.dt, &run2.coherence_eh);

    let init_vec = ket4(initial);
    let own = envelope_run(p, &rates, &init_vec, duration)?;
    let mk_wave = |u: &TemporalMode, n_photons: f64, carrier: f64| -> Waveform {
        let amp = n_photons.max(0.0).sqrt();
        Waveform {
            t0: 0.0,
            dt: u.dt,
            samples: u.samples.iter().map(|z| z.scale(amp)).collect(),
            carrier_mhz: carrier,
        }
    };
    let waveform_w1 = mk_wave(&u1, own.emitted_w1, p.omega_mode1);
    let waveform_w2 = mk_wave(&u2, own.emitted_w2, p.omega_mode2);

    let mut rho0 = CMat::zeros(16, 16);
    let init_full = linalg::outer(&init_vec);
    for a in 0..4 {
        for b in 0..4 {
            rho0[(a * 4, b * 4)] = init_full[(a, b)];
        }
    }
    let final_rho = capture_run(p, &rates, &u1, &u2, &rho0, duration)?;
    // project the emitter onto {g, e}
    let mut joint = CMat::zeros(8, 8);
    for qa in 0..2 {
        for qb in 0..2 {
            for ra in 0..4 {
                for rb in 0..4 {
                    joint[(qa * 4 + ra, qb * 4 + rb)] = final_rho[(qa * 4 + ra, qb * 4 + rb)];
                }
            }
        }
    }
    let kept = linalg::trace(&joint).re;
    let leakage = 1.0 - kept;
    if kept < 1e-12 {
        return Err(Error::ZeroProbability("emitter never reaches {g, e}".into()));
    }
    joint.scale_mut(1.0 / kept);
    let joint = linalg::project_psd_trace(&joint, 1.0);
    let labels = vec![
        SubsystemLabel::Qubit,
        SubsystemLabel::Mode { time_bin: 0, rail: Rail::Omega2 },
        SubsystemLabel::Mode { time_bin: 0, rail: Rail::Omega1 },
    ];
    let joint_state = MultimodeState::new(vec![2, 2, 2], labels, joint, true)?;
    Ok(EmissionResult { waveform_w1, waveform_w2, joint_state, leakage })
}

/// Default round duration (us): the drive pulse length.
pub const ROUND_DURATION: f64 = 1.0;

/// Squared norm of the coherent emitted temporal mode over the round, with
/// decoherence on: the generation efficiency of one Raman process.
pub fn photon_generation_efficiency(p: &DeviceParams, transition: Transition) -> Result<f64> {
    p.validate()?;
    let rates = DecoherenceRates::from_times(
        p.t1_ge.0, p.t2_ge.0, p.t1_ef.0, p.t2_ef.0, p.t1_fh.0, p.t2_fh.0,
    );
    efficiency_with_rates(p, &rates, transition)
}

fn efficiency_with_rates(
    p: &DeviceParams,
    rates: &DecoherenceRates,
    transition: Transition,
) -> Result<f64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let (initial, pick_gf) = match transition {
        Transition::F0G1 => (ket4([cr(s), cr(0.0), cr(s), cr(0.0)]), true),
        Transition::H0E1 => (ket4([cr(0.0), cr(s), cr(0.0), cr(s)]), false),
    };
    let run = envelope_run(p, rates, &initial, ROUND_DURATION)?;
    let env = if pick_gf { &run.coherence_gf } else { &run.coherence_eh };
    // initial coherence is 1/2, so the unit-efficiency norm is 1/4
    Ok(4.0 * TemporalMode::from_envelope(run.dt, env).norm_sq)
}

/// One emission round as a channel from the pre-round {f, h} register
/// (relabeled to the logical {g, e} input) to (emitter, omega2, omega1).
fn channel_from_model(
    p: &DeviceParams,
    rates: &DecoherenceRates,
    duration: f64,
) -> Result<EmissionChannel> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let run1 = envelope_run(p, rates, &ket4([cr(s), cr(0.0), cr(s), cr(0.0)]), duration)?;
    let run2 = envelope_run(p, rates, &ket4([cr(0.0), cr(s), cr(0.0), cr(s)]), duration)?;
    let u1 = TemporalMode::from_envelope(run1.dt, &run1.coherence_gf);
    let u2 = TemporalMode::from_envelope(run2.dt, &run2.coherence_eh);

    let inputs = [
        ket4([cr(0.0), cr(0.0), cr(1.0), cr(0.0)]), // |f>
        ket4([cr(0.0), cr(0.0), cr(0.0), cr(1.0)]), // |h>
        ket4([cr(0.0), cr(0.0), cr(s), cr(s)]),     // (|f> + |h>)/sqrt(2)
        ket4([cr(0.0), cr(0.0), cr(s), C64::new(0.0, s)]), // (|f> + i|h>)/sqrt(2)
    ];
    let mut outs = Vec::with_capacity(4);
    for input in &inputs {
        let full = linalg::outer(input);
        let mut rho0 = CMat::zeros(16, 16);
        for a in 0..4 {
            for b in 0..4 {
                rho0[(a * 4, b * 4)] = full[(a, b)];
            }
        }
        let fin = capture_run(p, rates, &u1, &u2, &rho0, duration)?;
        // truncate the emitter to {g, e}
        let mut o = CMat::zeros(8, 8);
        for qa in 0..2 {
            for qb in 0..2 {
                for ra in 0..4 {
                    for rb in 0..4 {
                        o[(qa * 4 + ra, qb * 4 + rb)] = fin[(qa * 4 + ra, qb * 4 + rb)];
                    }
                }
            }
        }
        outs.push(o);
    }
    let o_ff = &outs[0];
    let o_hh = &outs[1];
    let sum = (outs[2].scale(2.0) - o_ff - o_hh).clone();
    let tmat = (outs[3].scale(2.0) - o_ff - o_hh).clone();
    let x_fh = (&sum + &tmat * C64::new(0.0, 1.0)).scale(0.5);
    let y_hf = x_fh.adjoint();

    let d_out = 8usize;
    let mut choi = CMat::zeros(2 * d_out, 2 * d_out);
    let put = |choi: &mut CMat, i: usize, j: usize, block: &CMat| {
        for a in 0..d_out {
            for b in 0..d_out {
                choi[(i * d_out + a, j * d_out + b)] = block[(a, b)];
            }
        }
    };
    put(&mut choi, 0, 0, o_ff);
    put(&mut choi, 0, 1, &x_fh);
    put(&mut choi, 1, 0, &y_hf);
    put(&mut choi, 1, 1, o_hh);
    // clamp the small negative eigenvalues left by integration error
    let min_ev = linalg::min_eigenvalue(&choi);
    if min_ev < -1e-4 {
        return Err(Error::InvalidChannel(format!(
            "simulated Choi matrix has eigenvalue {min_ev:.3e}"
        )));
    }
    let (vals, vecs) = linalg::eigh(&choi);
    let mut d = CMat::zeros(vals.len(), vals.len());
    for (k, &v) in vals.iter().enumerate() {
        d[(k, k)] = cr(v.max(0.0));
    }
    let clamped = &vecs * d * vecs.adjoint();
    EmissionChannel::from_choi(clamped, 2, vec![2, 2, 2])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub fidelities: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub efficiency_f0g1: f64,
    pub efficiency_h0e1: f64,
}

/// Coherence-limited process fidelity: decoherence times drawn normally
/// around the measured values (`n_draws` samples, negative draws rejected),
/// one simulated emission channel per draw, compared against the ideal
/// emission isometry.
pub fn coherence_limit(p: &DeviceParams, n_draws: usize, seed: u64) -> Result<CoherenceReport> {
    p.validate()?;
    if n_draws == 0 {
        return Err(Error::InvalidArgument("n_draws must be >= 1".into()));
    }
    let ideal = ideal_emission_channel();
    let mut fidelities = Vec::with_capacity(n_draws);
    for draw in 0..n_draws {
        let mut rng = stream_rng(seed, draw as u64);
        let mut sample_pos = |mean_std: (f64, f64)| -> f64 {
            let dist = Normal::new(mean_std.0, mean_std.1).expect("std >= 0");
            loop {
                let v: f64 = dist.sample(&mut rng);
                if v > 0.05 {
                    return v;
                }
            }
        };
        let rates = DecoherenceRates::from_times(
            sample_pos(p.t1_ge),
            sample_pos(p.t2_ge),
            sample_pos(p.t1_ef),
            sample_pos(p.t2_ef),
            sample_pos(p.t1_fh),
            sample_pos(p.t2_fh),
        );
        let ch = channel_from_model(p, &rates, ROUND_DURATION)?;
        fidelities.push(process_fidelity(&ch, &ideal)?);
    }
    let mean = fidelities.iter().sum::<f64>() / n_draws as f64;
    let var = fidelities.iter().map(|f| (f - mean).powi(2)).sum::<f64>()
        / (n_draws as f64 - 1.0).max(1.0);
    let rates = DecoherenceRates::from_times(
        p.t1_ge.0, p.t2_ge.0, p.t1_ef.0, p.t2_ef.0, p.t1_fh.0, p.t2_fh.0,
    );
    Ok(CoherenceReport {
        fidelities,
        mean,
        std: var.sqrt(),
        efficiency_f0g1: efficiency_with_rates(p, &rates, Transition::F0G1)?,
        efficiency_h0e1: efficiency_with_rates(p, &rates, Transition::H0E1)?,
    })
}

/// Simulated emission channel at the mean decoherence parameters.
pub fn coherence_limit_channel(p: &DeviceParams) -> Result<EmissionChannel> {
    let rates = DecoherenceRates::from_times(
        p.t1_ge.0, p.t2_ge.0, p.t1_ef.0, p.t2_ef.0, p.t1_fh.0, p.t2_fh.0,
    );
    channel_from_model(p, &rates, ROUND_DURATION)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn no_decoherence() -> DecoherenceRates {
        DecoherenceRates {
            relax_ge: 0.0,
            relax_ef: 0.0,
            relax_fh: 0.0,
            deph_e: 0.0,
            deph_f: 0.0,
            deph_h: 0.0,
        }
    }

    #[test]
    fn f_population_decays_at_the_emission_rate() {
        let p = DeviceParams::paper_device();
        let run = envelope_run(
            &p,
            &no_decoherence(),
            &ket4([cr(0.0), cr(0.0), cr(1.0), cr(0.0)]),
            1.0,
        )
        .unwrap();
        assert_abs_diff_eq!(run.emitted_w1, 1.0, epsilon = 2e-3);
        assert!(run.emitted_w2.abs() < 1e-9);
    }

    #[test]
    fn lossless_capture_reproduces_the_ideal_channel() {
        let p = DeviceParams::paper_device();
        let ch = channel_from_model(&p, &no_decoherence(), 1.5).unwrap();
        let f = process_fidelity(&ch, &ideal_emission_channel()).unwrap();
        assert!(f > 0.999, "process fidelity {f}");
    }

    #[test]
    fn emission_simulation_superposition_has_balanced_spectra() {
        let p = DeviceParams::paper_device();
        let half = cr(0.5);
        let res = emission_simulation(&p, [half, half, half, half], 1.0).unwrap();
        // each channel carries a quarter photon
        assert_abs_diff_eq!(res.waveform_w1.norm_sq(), 0.25, epsilon = 0.01);
        assert_abs_diff_eq!(res.waveform_w2.norm_sq(), 0.25, epsilon = 0.01);
        res.joint_state.validate().unwrap();
    }

    #[test]
    fn emission_simulation_rejects_short_durations() {
        let p = DeviceParams::paper_device();
        assert!(emission_simulation(&p, [cr(1.0), cr(0.0), cr(0.0), cr(0.0)], 0.1).is_err());
    }

    #[test]
    fn efficiencies_match_the_measured_values() {
        let p = DeviceParams::paper_device();
        let e1 = photon_generation_efficiency(&p, Transition::F0G1).unwrap();
        let e2 = photon_generation_efficiency(&p, Transition::H0E1).unwrap();
        assert!((e1 - 0.969).abs() < 0.02, "f0g1 efficiency {e1}");
        assert!((e2 - 0.967).abs() < 0.02, "h0e1 efficiency {e2}");
    }
}
