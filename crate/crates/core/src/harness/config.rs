//! System configuration: TOML files, named presets and validation.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::channel::{FixedTaps, TapChannel};
use crate::ofdm::Constellation;
use crate::precode::{PrecoderSpec, MAX_PHASE_BITS};
use crate::rate_eval::{LinkSetup, Mode, TapSource};

pub const PRESETS: [&str; 5] = [
    "system-a",
    "system-a-b3",
    "system-b",
    "system-c-rayleigh",
    "system-a-mini",
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown preset `{0}` (available: system-a, system-a-b3, system-b, system-c-rayleigh, system-a-mini)")]
    UnknownPreset(String),
    #[error("field `{field}`: {msg}")]
    Field { field: &'static str, msg: String },
}

fn field_err(field: &'static str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Field { field, msg: msg.into() }
}

/// A fully resolved simulation configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub n_tx: usize,
    pub n_ue: usize,
    pub t_f: usize,
    pub t_c: usize,
    pub n_taps: usize,
    pub constellation: String,
    pub phase_bits: u32,
    pub power: f64,
    pub precoders: Vec<PrecoderSpec>,
    pub snr_grid: Vec<f64>,
    pub epsilon_grid: Vec<f64>,
    pub blocks: usize,
    pub coherence: usize,
    pub pilot_fraction: f64,
    pub mode: Mode,
    pub master_seed: u64,
    /// Channel taps read from a file instead of drawn per block.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tap_file: Option<PathBuf>,
}

/// Config file contents: an optional preset plus field overrides.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    preset: Option<String>,
    n_tx: Option<usize>,
    n_ue: Option<usize>,
    t_f: Option<usize>,
    t_c: Option<usize>,
    n_taps: Option<usize>,
    constellation: Option<String>,
    phase_bits: Option<u32>,
    power: Option<f64>,
    precoders: Option<Vec<PrecoderSpec>>,
    snr_grid: Option<Vec<f64>>,
    epsilon_grid: Option<Vec<f64>>,
    blocks: Option<usize>,
    coherence: Option<usize>,
    pilot_fraction: Option<f64>,
    mode: Option<Mode>,
    master_seed: Option<u64>,
    tap_file: Option<PathBuf>,
}

fn grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step).round() as usize;
    (0..=n).map(|i| start + step * i as f64).collect()
}

fn specs(names: &[&str]) -> Vec<PrecoderSpec> {
    names.iter().map(|s| s.parse().expect("preset precoder")).collect()
}

impl SystemConfig {
    /// Expands a named preset.
    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        let base = SystemConfig {
            n_tx: 128,
            n_ue: 16,
            t_f: 256,
            t_c: 14,
            n_taps: 15,
            constellation: "16qam".into(),
            phase_bits: 2,
            power: 1.0,
            precoders: specs(&["lp-zf", "qlp-zf", "magiq:4", "qcm:6"]),
            snr_grid: grid(-5.0, 30.0, 2.5),
            epsilon_grid: vec![0.0],
            blocks: 200,
            coherence: 256,
            pilot_fraction: 0.1,
            mode: Mode::DataAided,
            master_seed: 1,
            tap_file: None,
        };
        let cfg = match name {
            "system-a" => base,
            "system-a-b3" => SystemConfig {
                constellation: "64qam".into(),
                phase_bits: 3,
                precoders: specs(&["lp-zf", "qlp-zf", "magiq:5", "qcm:3"]),
                ..base
            },
            "system-b" => SystemConfig {
                n_tx: 64,
                n_ue: 8,
                t_f: 32,
                t_c: 3,
                n_taps: 4,
                constellation: "8psk".into(),
                precoders: specs(&["lp-zf", "qlp-zf", "qcm:6"]),
                ..base
            },
            "system-c-rayleigh" => SystemConfig {
                n_tx: 80,
                n_ue: 8,
                t_f: 256,
                t_c: 21,
                n_taps: 22,
                precoders: specs(&["lp-zf", "qlp-zf", "qcm:6"]),
                ..base
            },
            "system-a-mini" => SystemConfig {
                n_tx: 32,
                n_ue: 4,
                t_f: 64,
                t_c: 7,
                n_taps: 8,
                blocks: 50,
                coherence: 64,
                snr_grid: grid(0.0, 40.0, 5.0),
                ..base
            },
            other => return Err(ConfigError::UnknownPreset(other.to_string())),
        };
        Ok(cfg)
    }

    /// Parses config text. Relative `tap_file` paths are resolved against `base_dir`.
    pub fn from_toml(text: &str, base_dir: Option<&Path>) -> Result<Self, ConfigError> {
        let file: ConfigFile = toml::from_str(text)?;
        let mut cfg = Self::preset(file.preset.as_deref().unwrap_or("system-a-mini"))?;
        macro_rules! take {
            ($($f:ident),*) => { $(if let Some(v) = file.$f { cfg.$f = v; })* };
        }
        take!(
            n_tx,
            n_ue,
            t_f,
            t_c,
            n_taps,
            constellation,
            phase_bits,
            power,
            precoders,
            snr_grid,
            epsilon_grid,
            blocks,
            coherence,
            pilot_fraction,
            mode,
            master_seed
        );
        if let Some(path) = file.tap_file {
            cfg.tap_file = Some(match base_dir {
                Some(dir) if path.is_relative() => dir.join(path),
                _ => path,
            });
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text, path.parent())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        hex::encode(&Sha256::digest(self.to_toml().as_bytes())[..8])
    }

    pub fn constellation(&self) -> Result<Constellation, ConfigError> {
        self.constellation
            .parse()
            .map_err(|e: crate::ofdm::OfdmError| field_err("constellation", e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (field, v) in [
            ("n_tx", self.n_tx),
            ("n_ue", self.n_ue),
            ("t_f", self.t_f),
            ("n_taps", self.n_taps),
            ("blocks", self.blocks),
        ] {
            if v == 0 {
                return Err(field_err(field, "must be positive"));
            }
        }
        if self.t_f < self.n_taps {
            return Err(field_err(
                "t_f",
                format!("{} is shorter than the channel (n_taps = {})", self.t_f, self.n_taps),
            ));
        }
        if self.t_c + 1 < self.n_taps {
            return Err(field_err(
                "t_c",
                format!("{} is below n_taps - 1 = {}", self.t_c, self.n_taps - 1),
            ));
        }
        self.constellation()?;
        if self.phase_bits == 0 || self.phase_bits > MAX_PHASE_BITS {
            return Err(field_err("phase_bits", format!("must lie in 1..={MAX_PHASE_BITS}")));
        }
        if !(self.power.is_finite() && self.power > 0.0) {
            return Err(field_err("power", "must be positive"));
        }
        if self.precoders.is_empty() {
            return Err(field_err("precoders", "list is empty"));
        }
        if self.snr_grid.is_empty() || self.snr_grid.iter().any(|s| !s.is_finite()) {
            return Err(field_err("snr_grid", "must be a nonempty list of finite values"));
        }
        if self.epsilon_grid.is_empty() || self.epsilon_grid.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(field_err("epsilon_grid", "values must lie in [0, 1]"));
        }
        if self.coherence == 0 || self.coherence % self.t_f != 0 {
            return Err(field_err(
                "coherence",
                format!("{} is not a positive multiple of t_f = {}", self.coherence, self.t_f),
            ));
        }
        if self.mode == Mode::Pat && !(self.pilot_fraction > 0.0 && self.pilot_fraction < 1.0) {
            return Err(field_err("pilot_fraction", "must lie in (0, 1) in pat mode"));
        }
        let pilots = (self.pilot_fraction * self.coherence as f64).round() as usize;
        if self.mode == Mode::Pat && pilots == 0 {
            return Err(field_err("pilot_fraction", "selects no pilot symbols"));
        }
        Ok(())
    }

    fn tap_source(&self) -> Result<TapSource, ConfigError> {
        let Some(path) = &self.tap_file else {
            return Ok(TapSource::Rayleigh);
        };
        let file = fs::File::open(path).map_err(|source| ConfigError::Io {
            path: path.clone(),
            source,
        })?;
        let ch = TapChannel::read_text(BufReader::new(file)).map_err(|e| field_err("tap_file", e.to_string()))?;
        if (ch.n_ue(), ch.n_tx()) != (self.n_ue, self.n_tx) || ch.n_taps() > self.n_taps {
            return Err(field_err(
                "tap_file",
                format!(
                    "holds a {}x{} channel with {} taps; config expects {}x{} with at most {}",
                    ch.n_ue(),
                    ch.n_tx(),
                    ch.n_taps(),
                    self.n_ue,
                    self.n_tx,
                    self.n_taps
                ),
            ));
        }
        Ok(TapSource::Generator(Arc::new(FixedTaps(ch))))
    }

    /// Link parameters for the rate evaluator.
    pub fn link_setup(&self) -> Result<LinkSetup, ConfigError> {
        self.validate()?;
        Ok(LinkSetup {
            n_tx: self.n_tx,
            n_ue: self.n_ue,
            t_f: self.t_f,
            t_c: self.t_c,
            n_taps: self.n_taps,
            constellation: self.constellation()?,
            phase_bits: self.phase_bits,
            power: self.power,
            coherence: self.coherence,
            pilot_fraction: self.pilot_fraction,
            mode: self.mode,
            blocks: self.blocks,
            seed: self.master_seed,
            taps: self.tap_source()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in PRESETS {
            SystemConfig::preset(name).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn overrides_apply() {
        let cfg = SystemConfig::from_toml("preset = \"system-b\"\nblocks = 3\nmode = \"pat\"\n", None).unwrap();
        assert_eq!((cfg.n_tx, cfg.blocks, cfg.mode), (64, 3, Mode::Pat));
    }

    #[test]
    fn canonical_form_round_trips() {
        let cfg = SystemConfig::preset("system-a-mini").unwrap();
        let back = SystemConfig::from_toml(&cfg.to_toml(), None).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 16);
    }

    #[test]
    fn field_errors_name_the_field() {
        let err = SystemConfig::from_toml("phase_bits = 0", None).unwrap_err();
        assert!(err.to_string().starts_with("field `phase_bits`"), "{err}");
        let err = SystemConfig::from_toml("coherence = 100", None).unwrap_err();
        assert!(err.to_string().contains("coherence"), "{err}");
        let err = SystemConfig::from_toml("precoders = [\"qcm:x\"]", None).unwrap_err();
        assert!(err.to_string().contains("qcm:x"), "{err}");
    }
}
