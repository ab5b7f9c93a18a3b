//! Experiment configuration: TOML ingestion with validated defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::admissibility::ValuationDistribution;
use crate::{Error, Result};

pub const DEFAULT_TRIALS: usize = 10_000;
pub const DEFAULT_ALPHA: f64 = 0.5;

/// Which builtin instance to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "builtin", rename_all = "kebab-case")]
pub enum InstanceSpec {
    Poll {
        n: usize,
        m: usize,
        /// Outcome-utility gap for receiving a non-favorite magazine.
        #[serde(default = "default_poll_gap")]
        g: f64,
    },
    DigitalGoods { n: usize, q: usize },
}

fn default_poll_gap() -> f64 {
    0.5
}

impl InstanceSpec {
    pub fn n(&self) -> usize {
        match *self {
            InstanceSpec::Poll { n, .. } => n,
            InstanceSpec::DigitalGoods { n, .. } => n,
        }
    }
}

/// Mechanism parameters: either the closed-form solver or explicit values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismSpec {
    #[serde(default)]
    pub solve: bool,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub v_max: Option<f64>,
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

impl Default for MechanismSpec {
    fn default() -> Self {
        Self {
            solve: true,
            alpha: DEFAULT_ALPHA,
            epsilon: None,
            delta: None,
            v_max: None,
        }
    }
}

/// Valuation population: a named family or an explicit vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ValuationSpec {
    Explicit { explicit: Vec<f64> },
    Family(ValuationDistribution),
}

impl Default for ValuationSpec {
    fn default() -> Self {
        ValuationSpec::Family(ValuationDistribution::Exponential { rate: 1.0 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuditKind {
    Dp,
    Dominance,
    Accuracy,
    Mi,
    Admissibility,
    Claim1,
}

impl AuditKind {
    pub fn name(self) -> &'static str {
        match self {
            AuditKind::Dp => "dp",
            AuditKind::Dominance => "dominance",
            AuditKind::Accuracy => "accuracy",
            AuditKind::Mi => "mi",
            AuditKind::Admissibility => "admissibility",
            AuditKind::Claim1 => "claim1",
        }
    }

    pub fn all() -> Vec<AuditKind> {
        vec![
            AuditKind::Dp,
            AuditKind::Dominance,
            AuditKind::Accuracy,
            AuditKind::Mi,
            AuditKind::Admissibility,
            AuditKind::Claim1,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub instance: InstanceSpec,
    #[serde(default)]
    pub mechanism: MechanismSpec,
    #[serde(default)]
    pub valuations: ValuationSpec,
    /// True game types (0-based indices); sampled uniformly from the seed
    /// when omitted.
    #[serde(default)]
    pub true_types: Option<Vec<usize>>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub audits: Option<Vec<AuditKind>>,
}

fn default_trials() -> usize {
    DEFAULT_TRIALS
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if self.instance.n() == 0 {
            return Err(Error::Config("instance needs at least one agent".into()));
        }
        match self.instance {
            InstanceSpec::Poll { m, .. } if m < 2 => {
                return Err(Error::Config("poll needs m >= 2".into()));
            }
            InstanceSpec::DigitalGoods { q, .. } if q < 2 => {
                return Err(Error::Config("digital goods needs q >= 2".into()));
            }
            _ => {}
        }
        if !(0.0 < self.mechanism.alpha && self.mechanism.alpha < 1.0) {
            return Err(Error::Config("alpha must lie in (0,1)".into()));
        }
        if !self.mechanism.solve {
            for (name, v) in [
                ("epsilon", self.mechanism.epsilon),
                ("delta", self.mechanism.delta),
                ("v_max", self.mechanism.v_max),
            ] {
                if v.is_none() {
                    return Err(Error::Config(format!(
                        "mechanism.{name} required unless solve = true"
                    )));
                }
            }
        }
        if let ValuationSpec::Family(f) = &self.valuations {
            f.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        if let ValuationSpec::Explicit { explicit } = &self.valuations {
            if explicit.len() != self.instance.n() {
                return Err(Error::Config(format!(
                    "explicit valuations have {} entries, instance has {} agents",
                    explicit.len(),
                    self.instance.n()
                )));
            }
            if explicit.iter().any(|&v| v < 0.0) {
                return Err(Error::Config("valuations must be non-negative".into()));
            }
        }
        if let Some(t) = &self.true_types {
            if t.len() != self.instance.n() {
                return Err(Error::Config("true_types length must equal n".into()));
            }
        }
        if let Some(audits) = &self.audits {
            if audits.is_empty() {
                return Err(Error::Config("audit list must not be empty".into()));
            }
        }
        Ok(())
    }

    pub fn requested_audits(&self) -> Vec<AuditKind> {
        self.audits.clone().unwrap_or_else(AuditKind::all)
    }
}

/// Parse and validate a TOML config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    let config: ExperimentConfig =
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_poll_config_gets_defaults() {
        let cfg: ExperimentConfig = toml::from_str(
            r#"
            [instance]
            builtin = "poll"
            n = 3
            m = 2
            "#,
        )
        .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.trials, DEFAULT_TRIALS);
        assert_eq!(cfg.mechanism.alpha, DEFAULT_ALPHA);
        assert!(cfg.mechanism.solve);
        assert_eq!(cfg.requested_audits(), AuditKind::all());
    }

    #[test]
    fn unknown_audit_name_rejected() {
        let err = toml::from_str::<ExperimentConfig>(
            r#"
            audits = ["dp", "frobnicate"]
            [instance]
            builtin = "poll"
            n = 3
            m = 2
            "#,
        );
        assert!(err.is_err());
    }

    #[test]
    fn explicit_mechanism_requires_all_fields() {
        let cfg: ExperimentConfig = toml::from_str(
            r#"
            [instance]
            builtin = "digital-goods"
            n = 10
            q = 5
            [mechanism]
            solve = false
            epsilon = 0.001
            delta = 0.2
            "#,
        )
        .unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn valuation_family_roundtrip() {
        let cfg: ExperimentConfig = toml::from_str(
            r#"
            [instance]
            builtin = "poll"
            n = 2
            m = 2
            [valuations]
            family = "pareto"
            scale = 1.0
            shape = 2.0
            "#,
        )
        .unwrap();
        cfg.validate().unwrap();
        match cfg.valuations {
            ValuationSpec::Family(ValuationDistribution::Pareto { scale, shape }) => {
                assert_eq!((scale, shape), (1.0, 2.0));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn explicit_valuations_length_checked() {
        let cfg: ExperimentConfig = toml::from_str(
            r#"
            [instance]
            builtin = "poll"
            n = 3
            m = 2
            [valuations]
            explicit = [0.1, 0.2]
            "#,
        )
        .unwrap();
        assert!(cfg.validate().is_err());
    }
}
