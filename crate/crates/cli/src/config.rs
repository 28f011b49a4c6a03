use std::path::Path as FsPath;

use escapepath::bvp::BvpConfig;
use escapepath::model::VectorFieldModel;
use escapepath::sde::{ExitRule, SimConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: String,
    /// Non-gradient strength for `het`, `mpep` and `action`.
    pub mu: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    /// Also emit SVG line plots where available.
    pub svg: bool,
    pub bvp: BvpConfig,
    pub melnikov: MelnikovSection,
    pub sde: SdeSection,
    pub sweep: SweepSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: "double_well".into(),
            mu: 0.0,
            out: None,
            svg: false,
            bvp: BvpConfig::default(),
            melnikov: MelnikovSection::default(),
            sde: SdeSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MelnikovSection {
    /// Step of the finite-difference cross-check in `μ`.
    pub mu_check: f64,
}

impl Default for MelnikovSection {
    fn default() -> Self {
        Self { mu_check: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdeSection {
    pub eps: f64,
    pub mu: f64,
    pub dt: f64,
    pub t_max: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Defaults to the model's attractor.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<f64>>,
    /// `"hyperplane"` or `"saddle_ball"`.
    pub exit: String,
    pub normal: Vec<f64>,
    pub offset: f64,
    /// Ball centre for `saddle_ball`; defaults to the model's saddle.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    pub radius: f64,
    pub eta: f64,
    pub n_anchor: usize,
}

impl Default for SdeSection {
    fn default() -> Self {
        Self {
            eps: 0.25,
            mu: 0.0,
            dt: 1e-3,
            t_max: 5e3,
            n_paths: 500,
            seed: 1,
            start: None,
            exit: "hyperplane".into(),
            normal: vec![1.0, 0.0],
            offset: 0.0,
            center: None,
            radius: 0.1,
            eta: 0.1,
            n_anchor: 101,
        }
    }
}

impl SdeSection {
    /// Fills model-dependent defaults so the echoed configuration is complete.
    pub fn resolve(&mut self, model: &VectorFieldModel) -> Result<(), CliError> {
        if self.start.is_none() {
            self.start = Some(
                model
                    .attractor()
                    .ok_or_else(|| CliError::Usage("[sde] start is required for this model".into()))?
                    .iter()
                    .copied()
                    .collect(),
            );
        }
        if self.exit == "saddle_ball" && self.center.is_none() {
            self.center = Some(
                model
                    .saddle()
                    .ok_or_else(|| CliError::Usage("[sde] center is required for this model".into()))?
                    .iter()
                    .copied()
                    .collect(),
            );
        }
        Ok(())
    }

    pub fn to_sim_config(&self) -> Result<SimConfig, CliError> {
        let exit_rule = match self.exit.as_str() {
            "hyperplane" => ExitRule::Hyperplane {
                normal: self.normal.clone(),
                offset: self.offset,
            },
            "saddle_ball" => ExitRule::SaddleBall {
                center: self.center.clone().unwrap_or_default(),
                radius: self.radius,
            },
            other => return Err(CliError::Usage(format!("unknown exit rule '{other}'"))),
        };
        let start = self.start.clone().unwrap_or_default();
        Ok(SimConfig {
            eps: self.eps,
            mu: self.mu,
            dt: self.dt,
            t_max: self.t_max,
            n_paths: self.n_paths,
            seed: self.seed,
            attractor: Some(start.clone()),
            start,
            exit_rule,
            eta: self.eta,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub mus: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            mus: vec![1e-3, 2e-3, 5e-3, 1e-2],
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    pub fn load(path: &FsPath) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is serializable")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        let back = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("colour = 1").is_err());
        assert!(RunConfig::from_toml("[bvp]\nsteps = 3").is_err());
        assert!(RunConfig::from_toml("[extra]\na = 1").is_err());
    }

    #[test]
    fn sections_override_defaults() {
        let c = RunConfig::from_toml("model = \"double_well_symmetric\"\n[bvp]\nT = 25.0\n[sde]\neps = 0.3\n").unwrap();
        assert_eq!(c.model, "double_well_symmetric");
        assert_eq!(c.bvp.t_half, 25.0);
        assert_eq!(c.bvp.mesh, 400);
        assert_eq!(c.sde.eps, 0.3);
        assert_eq!(c.sde.n_paths, 500);
    }
}
