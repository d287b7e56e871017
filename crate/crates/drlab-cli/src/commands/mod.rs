pub mod compare;
pub mod device;
pub mod generate;
pub mod le;
pub mod tomo;

use drlab::channels::{CalibrationReport, NoiseParams};
use drlab::{Error, Result};

/// Parse "loss_w1,loss_w2,dephase" into explicit noise parameters.
pub fn parse_noise(text: &str) -> Result<NoiseParams> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!(
            "expected \"loss_w1,loss_w2,dephase\", got {text:?}"
        )));
    }
    let mut vals = [0.0f64; 3];
    for (slot, part) in vals.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse()
            .map_err(|e| Error::Config(format!("bad noise value {part:?}: {e}")))?;
    }
    let p = NoiseParams {
        loss_w1: vals[0],
        loss_w2: vals[1],
        dephase: vals[2],
        thermal: 0.0,
    };
    p.validate()?;
    Ok(p)
}

/// Calibrated channel parameters plus the fit report.
pub fn calibrated() -> &'static CalibrationReport {
    drlab::channels::paper_calibration()
}
