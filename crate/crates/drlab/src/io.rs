//! File formats: JSON matrix containers for states and channels, the binary
//! shot-record format, moment tables, and CSV exports.
//!
//! Loaders validate all structural and physical invariants before returning,
//! so any parsed value is safe to use downstream.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::channels::EmissionChannel;
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::states::{MultimodeState, SubsystemLabel};
use crate::tomography::{MomentTable, ShotRecord};

/// JSON matrix container shared by states and channels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixJson {
    pub dims: Vec<usize>,
    pub labels: Vec<SubsystemLabel>,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
    #[serde(default = "default_true")]
    pub normalized: bool,
    #[serde(default = "default_role")]
    pub role: String,
}

fn default_true() -> bool {
    true
}

fn default_role() -> String {
    "state".into()
}

fn matrix_to_rows(m: &CMat) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = m.nrows();
    let mut re = vec![vec![0.0; n]; n];
    let mut im = vec![vec![0.0; n]; n];
    for r in 0..n {
        for c in 0..n {
            re[r][c] = m[(r, c)].re;
            im[r][c] = m[(r, c)].im;
        }
    }
    (re, im)
}

fn rows_to_matrix(re: &[Vec<f64>], im: &[Vec<f64>]) -> Result<CMat> {
    let n = re.len();
    if im.len() != n || re.iter().chain(im.iter()).any(|row| row.len() != n) {
        return Err(Error::Format("re/im blocks are not square of equal size".into()));
    }
    let mut m = CMat::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            let z = C64::new(re[r][c], im[r][c]);
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err(Error::Format(format!("non-finite entry at ({r},{c})")));
            }
            m[(r, c)] = z;
        }
    }
    Ok(m)
}

pub fn state_to_json(state: &MultimodeState) -> String {
    let (re, im) = matrix_to_rows(state.matrix());
    let doc = MatrixJson {
        dims: state.dims().to_vec(),
        labels: state.labels().to_vec(),
        re,
        im,
        normalized: state.is_normalized(),
        role: "state".into(),
    };
    serde_json::to_string_pretty(&doc).expect("state serialization cannot fail")
}

pub fn state_from_json(text: &str) -> Result<MultimodeState> {
    let doc: MatrixJson = serde_json::from_str(text)?;
    if doc.role != "state" {
        return Err(Error::Format(format!("expected role \"state\", found {:?}", doc.role)));
    }
    let expected: usize = doc.dims.iter().product();
    if doc.dims.is_empty() || expected == 0 || expected > 1 << 16 {
        return Err(Error::Format(format!("unsupported dims {:?}", doc.dims)));
    }
    if doc.re.len() != expected {
        return Err(Error::Format(format!(
            "matrix order {} does not match dims {:?}",
            doc.re.len(),
            doc.dims
        )));
    }
    let m = rows_to_matrix(&doc.re, &doc.im)?;
    MultimodeState::new(doc.dims, doc.labels, m, doc.normalized)
}

pub fn save_state(path: &Path, state: &MultimodeState) -> Result<()> {
    fs::write(path, state_to_json(state))?;
    Ok(())
}

pub fn load_state(path: &Path) -> Result<MultimodeState> {
    state_from_json(&fs::read_to_string(path)?)
}

/// Channels use the same container with role "choi"; `dims` lists the input
/// dimension followed by the output subsystem dimensions.
pub fn channel_to_json(ch: &EmissionChannel) -> String {
    let (re, im) = matrix_to_rows(ch.choi());
    let mut dims = vec![ch.in_dim()];
    dims.extend_from_slice(ch.out_dims());
    let labels = vec![SubsystemLabel::Qubit; dims.len()];
    let doc = MatrixJson { dims, labels, re, im, normalized: false, role: "choi".into() };
    serde_json::to_string_pretty(&doc).expect("channel serialization cannot fail")
}

pub fn channel_from_json(text: &str) -> Result<EmissionChannel> {
    let doc: MatrixJson = serde_json::from_str(text)?;
    if doc.role != "choi" {
        return Err(Error::Format(format!("expected role \"choi\", found {:?}", doc.role)));
    }
    if doc.dims.len() < 2 {
        return Err(Error::Format("choi container needs input and output dims".into()));
    }
    let expected: usize = doc.dims.iter().product();
    if expected == 0 || expected > 1 << 12 {
        return Err(Error::Format(format!("unsupported dims {:?}", doc.dims)));
    }
    if doc.re.len() != expected {
        return Err(Error::Format(format!(
            "matrix order {} does not match dims {:?}",
            doc.re.len(),
            doc.dims
        )));
    }
    let m = rows_to_matrix(&doc.re, &doc.im)?;
    EmissionChannel::from_choi(m, doc.dims[0], doc.dims[1..].to_vec())
}

pub fn save_channel(path: &Path, ch: &EmissionChannel) -> Result<()> {
    fs::write(path, channel_to_json(ch))?;
    Ok(())
}

pub fn load_channel(path: &Path) -> Result<EmissionChannel> {
    channel_from_json(&fs::read_to_string(path)?)
}

/// Shot-record binary format: little-endian, header
/// `{magic "DRSHOT1", mode_count u32, shot_count u64}`, then shot-major
/// float64 interleaved (I, Q) per mode.
pub const SHOT_MAGIC: &[u8; 7] = b"DRSHOT1";

pub fn encode_shot_block(mode_count: usize, shots: &[C64]) -> Vec<u8> {
    let shot_count = shots.len() / mode_count;
    debug_assert_eq!(shots.len(), shot_count * mode_count);
    let mut out = Vec::with_capacity(7 + 4 + 8 + shots.len() * 16);
    out.extend_from_slice(SHOT_MAGIC);
    out.extend_from_slice(&(mode_count as u32).to_le_bytes());
    out.extend_from_slice(&(shot_count as u64).to_le_bytes());
    for s in shots {
        out.extend_from_slice(&s.re.to_le_bytes());
        out.extend_from_slice(&s.im.to_le_bytes());
    }
    out
}

/// Decode one shot block. Validates magic, exact payload length, and entry
/// finiteness; allocation is bounded by the input size.
pub fn decode_shot_block(bytes: &[u8]) -> Result<(usize, Vec<C64>)> {
    if bytes.len() < 19 {
        return Err(Error::Format("shot record shorter than its header".into()));
    }
    if &bytes[..7] != SHOT_MAGIC {
        return Err(Error::Format("bad shot-record magic".into()));
    }
    let mode_count = u32::from_le_bytes(bytes[7..11].try_into().unwrap()) as usize;
    let shot_count = u64::from_le_bytes(bytes[11..19].try_into().unwrap());
    if mode_count == 0 {
        return Err(Error::Format("mode_count must be positive".into()));
    }
    let payload = &bytes[19..];
    let per_shot = mode_count
        .checked_mul(16)
        .ok_or_else(|| Error::Format("mode_count overflow".into()))?;
    let expected = (shot_count as u128) * per_shot as u128;
    if expected != payload.len() as u128 {
        return Err(Error::Format(format!(
            "payload is {} bytes, header implies {}",
            payload.len(),
            expected
        )));
    }
    let n = shot_count as usize * mode_count;
    let mut shots = Vec::with_capacity(n);
    for k in 0..n {
        let re = f64::from_le_bytes(payload[16 * k..16 * k + 8].try_into().unwrap());
        let im = f64::from_le_bytes(payload[16 * k + 8..16 * k + 16].try_into().unwrap());
        if !re.is_finite() || !im.is_finite() {
            return Err(Error::Format(format!("non-finite sample at index {k}")));
        }
        shots.push(C64::new(re, im));
    }
    Ok((mode_count, shots))
}

/// Write signal and vacuum records as sibling files `<stem>.drshot` and
/// `<stem>.vac.drshot`.
pub fn save_shots(stem: &Path, rec: &ShotRecord) -> Result<()> {
    let signal_path = stem.with_extension("drshot");
    let vacuum_path = stem.with_extension("vac.drshot");
    let mut f = fs::File::create(&signal_path)?;
    f.write_all(&encode_shot_block(rec.mode_count(), rec.signal_flat()))?;
    let mut f = fs::File::create(&vacuum_path)?;
    f.write_all(&encode_shot_block(rec.mode_count(), rec.vacuum_flat()))?;
    Ok(())
}

pub fn load_shots(signal_path: &Path, vacuum_path: &Path) -> Result<ShotRecord> {
    let (modes_s, signal) = decode_shot_block(&fs::read(signal_path)?)?;
    let (modes_v, vacuum) = decode_shot_block(&fs::read(vacuum_path)?)?;
    if modes_s != modes_v {
        return Err(Error::Format(format!(
            "signal has {modes_s} modes but vacuum has {modes_v}"
        )));
    }
    ShotRecord::from_flat(modes_s, signal, vacuum)
}

pub fn save_moments(path: &Path, table: &MomentTable) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(table)?)?;
    Ok(())
}

pub fn load_moments(path: &Path) -> Result<MomentTable> {
    let table: MomentTable = serde_json::from_str(&fs::read_to_string(path)?)?;
    table.validate()?;
    Ok(table)
}

/// Minimal CSV writer with stable formatting for byte-identical reruns.
pub fn write_csv(path: &Path, header: &str, rows: &[Vec<String>]) -> Result<()> {
    let mut out = String::new();
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn fmt_f64(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else {
        format!("{v:.12e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{make_ideal_cluster, Branch};

    #[test]
    fn state_json_round_trip() {
        let state = make_ideal_cluster(2, Branch::Plus).unwrap();
        let text = state_to_json(&state);
        let back = state_from_json(&text).unwrap();
        assert_eq!(back.dims(), state.dims());
        let diff = (back.matrix() - state.matrix())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-12);
    }

    #[test]
    fn state_json_rejects_corruption() {
        let state = make_ideal_cluster(1, Branch::Plus).unwrap();
        let mut doc: MatrixJson = serde_json::from_str(&state_to_json(&state)).unwrap();
        doc.re[0][0] += 0.5; // breaks the trace
        let text = serde_json::to_string(&doc).unwrap();
        assert!(state_from_json(&text).is_err());
    }

    #[test]
    fn channel_json_round_trip() {
        let ch = crate::channels::ideal_emission_channel();
        let back = channel_from_json(&channel_to_json(&ch)).unwrap();
        assert_eq!(back.in_dim(), 2);
        assert_eq!(back.out_dims(), &[2, 2, 2]);
    }

    #[test]
    fn shot_block_round_trip_and_validation() {
        let shots = vec![C64::new(0.1, -0.2), C64::new(1.5, 0.0), C64::new(-3.0, 2.0), C64::new(0.0, 0.25)];
        let bytes = encode_shot_block(2, &shots);
        let (modes, back) = decode_shot_block(&bytes).unwrap();
        assert_eq!(modes, 2);
        assert_eq!(back, shots);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_shot_block(&bad).is_err());
        let mut truncated = bytes.clone();
        truncated.pop();
        assert!(decode_shot_block(&truncated).is_err());
        let mut nan = bytes;
        let nan_bytes = f64::NAN.to_le_bytes();
        nan[19..27].copy_from_slice(&nan_bytes);
        assert!(decode_shot_block(&nan).is_err());
    }
}
