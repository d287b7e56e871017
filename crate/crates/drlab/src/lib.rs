//! Desk-scale simulation and analysis toolkit for frequency-bin dual-rail
//! microwave photonic cluster states.
//!
//! The crate covers the full pipeline: exact construction of ideal and noisy
//! multimode states, completely-positive emission-channel models with chain
//! composition and fidelity scaling, heterodyne moment tomography (direct,
//! MPO-local, and process variants), localizable-entanglement analysis, and
//! device-level numerics (ac Stark shifts, resonator-filter spectra, and a
//! Lindblad coherence-limit estimate).

pub mod channels;
pub mod entanglement;
pub mod error;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod physics;
pub mod rng;
pub mod states;
pub mod tomography;

mod chain;

pub use error::{Error, Result};
