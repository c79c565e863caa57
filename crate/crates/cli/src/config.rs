//! Run configuration: a TOML tree (or a manifest's echoed config) validated
//! against the schema with unknown keys rejected.

use std::path::{Path, PathBuf};

use edqnm_lab::closure::ClosureParams;
use edqnm_lab::evolve::{ForcingSpec, IntegratorSettings};
use edqnm_lab::grid::GridSpec;
use edqnm_lab::rg::RgConfig;
use edqnm_lab::spectra::InitialShape;
use edqnm_lab::temporal::SyntheticEnsemble;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialShape>,
    #[serde(default)]
    pub closure: ClosureParams,
    #[serde(default)]
    pub forcing: ForcingSpec,
    #[serde(default)]
    pub integrator: IntegratorSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collapse: Option<CollapseBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temporal: Option<SyntheticEnsemble>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rg: Option<RgConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rg_sweep: Option<RgSweepBlock>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            out: None,
            grid: None,
            initial: None,
            closure: ClosureParams::default(),
            forcing: ForcingSpec::default(),
            integrator: IntegratorSettings::default(),
            run: None,
            sweep: None,
            fit: None,
            collapse: None,
            temporal: None,
            rg: None,
            rg_sweep: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    pub nu: f64,
    /// End time for decay, time limit for forced runs.
    pub t_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub nu_list: Vec<f64>,
    pub max_time: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitBlock {
    #[serde(default)]
    pub quadratic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CollapseKind {
    K41,
    K62,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollapseBlock {
    #[serde(default = "k41")]
    pub mode: CollapseKind,
    #[serde(default = "mu")]
    pub mu: f64,
    /// Number of highest-`R_λ` sweep members compared.
    #[serde(default = "members")]
    pub members: usize,
    /// Ratio of the largest to the smallest external scale across members.
    #[serde(default = "l_ratio")]
    pub l_ext_ratio: f64,
}

fn k41() -> CollapseKind {
    CollapseKind::K41
}
fn mu() -> f64 {
    0.1
}
fn members() -> usize {
    3
}
fn l_ratio() -> f64 {
    8.0
}

impl Default for CollapseBlock {
    fn default() -> Self {
        Self {
            mode: k41(),
            mu: mu(),
            members: members(),
            l_ext_ratio: l_ratio(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RgSweepBlock {
    pub h: Vec<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e == "json");
        let cfg: Self = if is_json {
            let mut v: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            // a manifest carries its resolved config under `config`
            if v.get("manifest_version").is_some() {
                v = v["config"].take();
            }
            serde_path_to_error::deserialize(v).map_err(|e| path_error(path, e))?
        } else {
            serde_path_to_error::deserialize(toml::Deserializer::new(&text))
                .map_err(|e| path_error(path, e))?
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_path_to_error::deserialize(toml::Deserializer::new(text))
            .map_err(|e| path_error(Path::new("<inline>"), e))?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        Ok(())
    }
}

fn path_error<E: std::fmt::Display>(file: &Path, e: serde_path_to_error::Error<E>) -> CliError {
    let at = e.path().to_string();
    let at = if at == "." { "<root>".to_string() } else { at };
    CliError::Config(format!("{}: at `{at}`: {}", file.display(), e.inner()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_names_its_path() {
        let err = RunConfig::from_toml("schema_version = 1\n[grid]\nk_min = 1.0\nbins = 3\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("grid") && msg.contains("bins"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn version_checked() {
        assert!(RunConfig::from_toml("schema_version = 2\n").is_err());
        assert!(RunConfig::from_toml("seed = 1\n").is_err());
    }

    #[test]
    fn json_round_trip() {
        let cfg = RunConfig::from_toml(
            "schema_version = 1\nseed = 5\n[run]\nnu = 0.01\nt_end = 2.0\n[forcing]\nmode = \"band\"\nband_top = 2.0\ninjection_rate = 1.0\n",
        )
        .unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
