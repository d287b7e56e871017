//! `drlab device`: Stark calibration curves, resonator-filter spectra, and
//! the coherence-limit report.

use drlab::io;
use drlab::physics::{
    coherence_limit, stark_shift, stark_shift_numeric, system_spectra, Transition,
};
use drlab::states::QubitLevel;
use drlab::Result;

use crate::config::RunConfig;

pub fn run(cfg: &RunConfig, stark_points: Option<usize>, draws: Option<usize>) -> Result<()> {
    let stark_points = stark_points.unwrap_or(30);
    let draws = draws.unwrap_or(10);
    cfg.prepare(
        "device",
        serde_json::json!({ "stark_points": stark_points, "draws": draws }),
    )?;
    let p = &cfg.device;

    // Stark curves over the drive-amplitude range of each transition
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for (name, tr, omega_max, delta_q) in [
        ("f0g1", Transition::F0G1, p.rabi_f0g1, p.omega_ge - p.drive_f0g1),
        ("h0e1", Transition::H0E1, p.rabi_h0e1, p.omega_ge - p.drive_h0e1),
    ] {
        for k in 0..=stark_points {
            let omega = omega_max * k as f64 / stark_points as f64;
            match stark_shift(tr, omega, delta_q, p.alpha()) {
                Ok(closed) => {
                    let numeric = stark_shift_numeric(p, tr, omega, delta_q, 6);
                    rows.push(vec![
                        name.into(),
                        io::fmt_f64(omega),
                        io::fmt_f64(delta_q),
                        io::fmt_f64(closed),
                        io::fmt_f64(numeric),
                    ]);
                }
                Err(err) => warnings.push(format!("{name} at omega {omega}: {err}")),
            }
        }
    }
    io::write_csv(
        &cfg.out.join("stark.csv"),
        "transition,omega_mhz,delta_q_mhz,shift_closed_mhz,shift_numeric_mhz",
        &rows,
    )?;

    // spectra for the qubit in g and e
    let spec_g = system_spectra(p, QubitLevel::G)?;
    let spec_e = system_spectra(p, QubitLevel::E)?;
    for (name, res) in [("spectra_g.csv", &spec_g), ("spectra_e.csv", &spec_e)] {
        let rows: Vec<Vec<String>> = res
            .spectrum
            .freqs
            .iter()
            .zip(&res.spectrum.amps)
            .map(|(f, a)| {
                vec![
                    io::fmt_f64(*f),
                    io::fmt_f64(a.re),
                    io::fmt_f64(a.im),
                    io::fmt_f64(a.norm()),
                ]
            })
            .collect();
        io::write_csv(&cfg.out.join(name), "freq_mhz,re,im,abs", &rows)?;
    }

    let coherence = coherence_limit(p, draws, cfg.seed)?;
    let report = serde_json::json!({
        "coherence_limit": coherence,
        "peak_g_mhz": spec_g.peak_mhz,
        "peak_e_mhz": spec_e.peak_mhz,
        "two_chi_mhz": spec_g.peak_mhz - spec_e.peak_mhz,
        "cutoff_flagged": spec_g.cutoff_flagged || spec_e.cutoff_flagged,
        "stark_warnings": warnings,
    });
    std::fs::write(
        cfg.out.join("device_report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    Ok(())
}
