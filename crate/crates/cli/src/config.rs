//! Run configuration: command-line flags layered over an optional JSON file.
//! Flags win; anything unset in both falls back to the command default.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Deserialize;

use qwalk_core::{Mass, WalkKind};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Options shared by every subcommand.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default)]
pub struct Global {
    /// Output format.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads, 0 for one per core.
    #[arg(long, global = true, env = "QWALK_THREADS")]
    pub threads: Option<usize>,
    /// JSON file with default values for any flag.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice made by the command.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

/// Walk selection shared by the commands that take one.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default)]
pub struct WalkArgs {
    /// weyl+, weyl-, z+, z-, dirac+ or dirac-.
    #[arg(long)]
    pub walk: Option<String>,
    /// Mass of a Dirac walk, 0 <= m < 1.
    #[arg(long)]
    pub mass: Option<f64>,
}

impl WalkArgs {
    pub fn merge(self, file: WalkArgs) -> WalkArgs {
        WalkArgs { walk: self.walk.or(file.walk), mass: self.mass.or(file.mass) }
    }

    pub fn kind(&self, default: &str) -> Result<WalkKind, CliError> {
        parse_kind(self.walk.as_deref().unwrap_or(default), self.mass)
    }
}

pub fn parse_kind(name: &str, mass: Option<f64>) -> Result<WalkKind, CliError> {
    let dirac = |m: Option<f64>| -> Result<Mass, CliError> {
        let m = m.ok_or_else(|| CliError::Usage(format!("{name} needs --mass")))?;
        Mass::new(m).map_err(|e| CliError::Usage(e.to_string()))
    };
    let plain = |k: WalkKind| -> Result<WalkKind, CliError> {
        match mass {
            Some(_) => Err(CliError::Usage(format!("{name} takes no mass"))),
            None => Ok(k),
        }
    };
    match name {
        "weyl+" => plain(WalkKind::WeylPlus),
        "weyl-" => plain(WalkKind::WeylMinus),
        "z+" => plain(WalkKind::ZPlus),
        "z-" => plain(WalkKind::ZMinus),
        "dirac+" => Ok(WalkKind::DiracPlus(dirac(mass)?)),
        "dirac-" => Ok(WalkKind::DiracMinus(dirac(mass)?)),
        other => Err(CliError::Usage(format!(
            "unknown walk kind {other:?}; expected weyl+, weyl-, z+, z-, dirac+ or dirac-"
        ))),
    }
}

pub fn vec3(v: &[f64], what: &str) -> Result<[f64; 3], CliError> {
    match v {
        [x, y, z] => Ok([*x, *y, *z]),
        _ => Err(CliError::Usage(format!("{what} needs three comma-separated components"))),
    }
}

/// The JSON config file: one flat object whose keys are the long flag names
/// with dashes replaced by underscores.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile(pub serde_json::Value);

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<ConfigFile, CliError> {
        let Some(path) = path else {
            return Ok(ConfigFile(serde_json::Value::Object(Default::default())));
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
        if !value.is_object() {
            return Err(CliError::Usage("config must be a JSON object".into()));
        }
        Ok(ConfigFile(value))
    }

    pub fn get<T: for<'de> Deserialize<'de> + Default>(&self) -> Result<T, CliError> {
        serde_json::from_value(self.0.clone()).map_err(|e| CliError::Usage(format!("invalid config: {e}")))
    }
}

impl Global {
    pub fn merge(self, file: Global) -> Global {
        Global {
            format: self.format.or(file.format),
            out: self.out.or(file.out),
            threads: self.threads.or(file.threads),
            config: self.config,
            seed: self.seed.or(file.seed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_parse() {
        assert_eq!(parse_kind("weyl+", None).unwrap(), WalkKind::WeylPlus);
        assert_eq!(parse_kind("z-", None).unwrap(), WalkKind::ZMinus);
        assert!(matches!(parse_kind("dirac+", Some(0.2)).unwrap(), WalkKind::DiracPlus(_)));
        assert!(parse_kind("dirac+", Some(1.5)).is_err());
        assert!(parse_kind("dirac-", None).is_err());
        assert!(parse_kind("weyl+", Some(0.1)).is_err());
        assert!(parse_kind("photon", None).is_err());
    }

    #[test]
    fn flags_win_over_file() {
        let flags = WalkArgs { walk: Some("z+".into()), mass: None };
        let file = WalkArgs { walk: Some("weyl-".into()), mass: Some(0.3) };
        let m = flags.merge(file);
        assert_eq!(m.walk.as_deref(), Some("z+"));
        assert_eq!(m.mass, Some(0.3));
    }
}
