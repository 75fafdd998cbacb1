use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cvrp::PenaltyMode;
use crate::problem::DEFAULT_MIS_PENALTY;
use crate::simulator::{AnsatzKind, Entanglement};

pub const DEFAULT_WARM_START_EPSILON: f64 = 0.25;
pub const DEFAULT_STAGNATION_WINDOW: usize = 25;
pub const DEFAULT_STAGNATION_TOL: f64 = 1e-6;
/// Largest sampler budget a policy may request.
pub const MAX_SAMPLER_SHOTS: u64 = 16_384;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Vqe,
    Qaoa,
    WsQaoa,
    Qrao,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Vqe, Family::Qaoa, Family::WsQaoa, Family::Qrao];

    pub fn name(self) -> &'static str {
        match self {
            Family::Vqe => "vqe",
            Family::Qaoa => "qaoa",
            Family::WsQaoa => "ws_qaoa",
            Family::Qrao => "qrao",
        }
    }

    pub fn from_name(name: &str) -> Option<Family> {
        Family::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn default_ansatz(self) -> AnsatzKind {
        match self {
            Family::Vqe | Family::Qrao => AnsatzKind::EfficientSu2,
            Family::Qaoa => AnsatzKind::Qaoa,
            Family::WsQaoa => AnsatzKind::WsQaoa,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    NelderMead,
    /// Accepted for compatibility; runs Nelder-Mead.
    Cobyla,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    Energy,
    /// Mean of the lowest `alpha` fraction of sampled energies.
    Cvar(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QraoRatio {
    #[serde(rename = "3:1")]
    ThreeToOne,
    #[serde(rename = "2:1")]
    TwoToOne,
}

impl QraoRatio {
    pub fn arity(self) -> usize {
        match self {
            QraoRatio::ThreeToOne => 3,
            QraoRatio::TwoToOne => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    Magic,
    Semideterministic,
}

fn default_penalty() -> f64 {
    DEFAULT_MIS_PENALTY
}
fn default_true() -> bool {
    true
}
fn default_window() -> usize {
    DEFAULT_STAGNATION_WINDOW
}
fn default_stagnation_tol() -> f64 {
    DEFAULT_STAGNATION_TOL
}
fn default_reps() -> usize {
    1
}
fn default_maxiter() -> usize {
    200
}
fn default_sampler_shots() -> u64 {
    1024
}

/// Full configuration of one solver attempt, including the problem-side
/// encoding knobs a policy may tune.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub family: Family,
    pub ansatz_kind: AnsatzKind,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub entanglement: Entanglement,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default = "default_maxiter")]
    pub maxiter: usize,
    /// 0 means exact expectations.
    #[serde(default)]
    pub estimator_shots: u64,
    #[serde(default = "default_sampler_shots")]
    pub sampler_shots: u64,
    #[serde(default)]
    pub objective: Objective,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qrao_ratio: Option<QraoRatio>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qrao_rounding: Option<Rounding>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warm_start_epsilon: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// MIS adjacency penalty.
    #[serde(default = "default_penalty")]
    pub penalty: f64,
    /// CVRP capacity handling; the task default applies when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty_mode: Option<PenaltyMode>,
    /// CVRP repair of infeasible decoded assignments.
    #[serde(default = "default_true")]
    pub repair: bool,
    #[serde(default = "default_window")]
    pub stagnation_window: usize,
    #[serde(default = "default_stagnation_tol")]
    pub stagnation_tol: f64,
}

/// Every key a patch may override.
pub const CONFIG_FIELDS: &[&str] = &[
    "family",
    "ansatz_kind",
    "reps",
    "entanglement",
    "optimizer",
    "maxiter",
    "estimator_shots",
    "sampler_shots",
    "objective",
    "qrao_ratio",
    "qrao_rounding",
    "warm_start_epsilon",
    "seed",
    "penalty",
    "penalty_mode",
    "repair",
    "stagnation_window",
    "stagnation_tol",
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("field `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
    #[error("unknown config field `{0}`")]
    UnknownField(String),
    #[error("patch does not produce a valid config: {0}")]
    Patch(String),
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        message: message.into(),
    }
}

impl SolverConfig {
    /// A valid configuration for `family` with defaults everywhere else.
    pub fn for_family(family: Family) -> Self {
        let mut c = SolverConfig {
            family,
            ansatz_kind: family.default_ansatz(),
            reps: 1,
            entanglement: Entanglement::Linear,
            optimizer: OptimizerKind::NelderMead,
            maxiter: default_maxiter(),
            estimator_shots: 0,
            sampler_shots: default_sampler_shots(),
            objective: Objective::Energy,
            qrao_ratio: None,
            qrao_rounding: None,
            warm_start_epsilon: None,
            seed: 0,
            penalty: DEFAULT_MIS_PENALTY,
            penalty_mode: None,
            repair: true,
            stagnation_window: DEFAULT_STAGNATION_WINDOW,
            stagnation_tol: DEFAULT_STAGNATION_TOL,
        };
        c.normalize_family_fields();
        c
    }

    /// Makes family-specific fields present iff the family uses them, filling
    /// defaults and resetting the ansatz to the family's own.
    pub fn normalize_family_fields(&mut self) {
        self.ansatz_kind = self.family.default_ansatz();
        if self.family == Family::Qrao {
            self.qrao_ratio.get_or_insert(QraoRatio::ThreeToOne);
            self.qrao_rounding.get_or_insert(Rounding::Magic);
        } else {
            self.qrao_ratio = None;
            self.qrao_rounding = None;
        }
        if self.family == Family::WsQaoa {
            self.warm_start_epsilon.get_or_insert(DEFAULT_WARM_START_EPSILON);
        } else {
            self.warm_start_epsilon = None;
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.ansatz_kind != self.family.default_ansatz() {
            return Err(invalid(
                "ansatz_kind",
                format!("{:?} does not match family {}", self.ansatz_kind, self.family),
            ));
        }
        if self.reps == 0 {
            return Err(invalid("reps", "must be >= 1"));
        }
        if self.maxiter == 0 {
            return Err(invalid("maxiter", "must be >= 1"));
        }
        if self.sampler_shots == 0 {
            return Err(invalid("sampler_shots", "must be >= 1"));
        }
        if self.sampler_shots > MAX_SAMPLER_SHOTS {
            return Err(invalid(
                "sampler_shots",
                format!("must be <= {MAX_SAMPLER_SHOTS}"),
            ));
        }
        if let Objective::Cvar(alpha) = self.objective {
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(invalid("objective", format!("CVaR alpha {alpha} not in (0, 1]")));
            }
        }
        let is_qrao = self.family == Family::Qrao;
        if self.qrao_ratio.is_some() != is_qrao {
            return Err(invalid("qrao_ratio", "present iff family is qrao"));
        }
        if self.qrao_rounding.is_some() != is_qrao {
            return Err(invalid("qrao_rounding", "present iff family is qrao"));
        }
        match (self.family, self.warm_start_epsilon) {
            (Family::WsQaoa, Some(eps)) if !(eps > 0.0 && eps < 0.5) => {
                return Err(invalid("warm_start_epsilon", format!("{eps} not in (0, 0.5)")));
            }
            (Family::WsQaoa, None) => {
                return Err(invalid("warm_start_epsilon", "required for ws_qaoa"));
            }
            (f, Some(_)) if f != Family::WsQaoa => {
                return Err(invalid("warm_start_epsilon", "present iff family is ws_qaoa"));
            }
            _ => {}
        }
        if !(self.penalty > 1.0) || !self.penalty.is_finite() {
            return Err(invalid("penalty", "must be a finite value > 1"));
        }
        if let Some(mode) = &self.penalty_mode {
            mode.validate().map_err(|m| invalid("penalty_mode", m))?;
        }
        if self.stagnation_window == 0 {
            return Err(invalid("stagnation_window", "must be >= 1"));
        }
        if !(self.stagnation_tol >= 0.0) {
            return Err(invalid("stagnation_tol", "must be >= 0"));
        }
        Ok(())
    }

    /// Overrides fields from `patch`. A family change re-normalizes the
    /// family-specific fields; explicit values in the same patch win.
    pub fn apply_patch(&self, patch: &BTreeMap<String, Value>) -> Result<SolverConfig, ConfigError> {
        for key in patch.keys() {
            if !CONFIG_FIELDS.contains(&key.as_str()) {
                return Err(ConfigError::UnknownField(key.clone()));
            }
        }
        let mut value = serde_json::to_value(self).expect("config serializes");
        let object = value.as_object_mut().expect("config is an object");
        for (k, v) in patch {
            if v.is_null() {
                object.remove(k);
            } else {
                object.insert(k.clone(), v.clone());
            }
        }
        let mut next: SolverConfig =
            serde_json::from_value(value).map_err(|e| ConfigError::Patch(e.to_string()))?;
        if next.family != self.family || patch.contains_key("ansatz_kind") {
            let explicit = next.clone();
            next.normalize_family_fields();
            if patch.contains_key("qrao_ratio") && explicit.qrao_ratio.is_some() {
                next.qrao_ratio = explicit.qrao_ratio;
            }
            if patch.contains_key("qrao_rounding") && explicit.qrao_rounding.is_some() {
                next.qrao_rounding = explicit.qrao_rounding;
            }
            if patch.contains_key("warm_start_epsilon") && explicit.warm_start_epsilon.is_some() {
                next.warm_start_epsilon = explicit.warm_start_epsilon;
            }
        }
        next.validate()?;
        Ok(next)
    }
}
