//! Run configuration: CLI flags take precedence over the config file, which
//! takes precedence over preset defaults. Every run writes a manifest
//! echoing the fully resolved configuration.

use std::fs;
use std::path::{Path, PathBuf};

use drlab::physics::DeviceParams;
use drlab::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, Deserialize)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub preset: Option<String>,
    pub device: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub preset: String,
    pub device_file: Option<PathBuf>,
    #[serde(skip)]
    pub device: DeviceParams,
}

impl RunConfig {
    pub fn resolve(
        config: Option<&Path>,
        seed: Option<u64>,
        out: Option<&Path>,
        preset: Option<&str>,
        device: Option<&Path>,
    ) -> Result<Self> {
        let file: FileConfig = match config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| {
                    Error::Config(format!("cannot read {}: {e}", path.display()))
                })?;
                toml::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => FileConfig::default(),
        };
        let preset = preset
            .map(str::to_owned)
            .or(file.preset)
            .unwrap_or_else(|| "paper-device".into());
        let device_file = device.map(Path::to_path_buf).or(file.device);
        let device = match &device_file {
            Some(path) => load_device(path)?,
            None => DeviceParams::preset(&preset)?,
        };
        device.validate()?;
        Ok(Self {
            seed: seed.or(file.seed).unwrap_or(0),
            out: out
                .map(Path::to_path_buf)
                .or(file.out)
                .unwrap_or_else(|| PathBuf::from("drlab-out")),
            preset,
            device_file,
            device,
        })
    }

    /// Create the output directory and write the manifest for `subcommand`.
    pub fn prepare(&self, subcommand: &str, extra: serde_json::Value) -> Result<()> {
        fs::create_dir_all(&self.out)?;
        let manifest = serde_json::json!({
            "subcommand": subcommand,
            "seed": self.seed,
            "preset": self.preset,
            "device_file": self.device_file,
            "device": self.device,
            "options": extra,
            "version": env!("CARGO_PKG_VERSION"),
        });
        fs::write(
            self.out.join("manifest.json"),
            serde_json::to_string_pretty(&manifest)?,
        )?;
        Ok(())
    }
}

/// Load device parameters from TOML or JSON by extension.
pub fn load_device(path: &Path) -> Result<DeviceParams> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let params: DeviceParams = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => serde_json::from_str(&text)?,
        _ => toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
    };
    params.validate()?;
    Ok(params)
}
