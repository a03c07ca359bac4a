//! JSON scenario files.
//!
//! ```json
//! {
//!   "formation": { "dimension": 2, "positions": [[0, 0], [10, 0]] },
//!   "command": { "relative_force": [0.1, 0.0] },
//!   "epsilon_set": { "mode": "linear", "count": 30 },
//!   "maneuver": { "masses": [1, 1], "kappa": 0.05, "rho": 0.2,
//!                 "xi_des": [[5, 0]], "xi0": [[10, 0]], "dt": 0.1, "t_final": 60 }
//! }
//! ```
//!
//! Every section is optional at parse time; each workflow checks for the ones
//! it needs. Normalization fills defaults in so a dumped scenario reads back
//! identically.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocator::{EpsilonGrid, DEFAULT_EPSILON_COUNT};
use crate::formation::{FormationState, RelativeForce};
use crate::sim::ManeuverConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("malformed scenario JSON at line {line}, column {column}: {message}")]
    Json { line: usize, column: usize, message: String },

    #[error("invalid field `{field}`: {message}")]
    Field { field: String, message: String },

    #[error("scenario has no `{0}` section")]
    Missing(&'static str),
}

fn field(field: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Field { field: field.to_string(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formation: Option<FormationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<CommandSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_set: Option<EpsilonSetSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maneuver: Option<ManeuverSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormationSpec {
    pub dimension: usize,
    /// m
    pub positions: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandSpec {
    /// N, stacked consecutive differences.
    pub relative_force: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpsilonMode {
    Linear,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSetSpec {
    pub mode: EpsilonMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManeuverSpec {
    /// kg
    pub masses: Vec<f64>,
    pub kappa: f64,
    pub rho: f64,
    /// m, one entry per consecutive pair.
    pub xi_des: Vec<Vec<f64>>,
    /// m, one entry per consecutive pair.
    pub xi0: Vec<Vec<f64>>,
    /// m/s, one entry per spacecraft; zero when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v0: Option<Vec<Vec<f64>>>,
    /// s
    pub dt: f64,
    /// s
    pub t_final: f64,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Self = serde_json::from_str(text).map_err(|e| ScenarioError::Json {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if let Some(formation) = &self.formation {
            let d = formation.dimension;
            if !(2..=3).contains(&d) {
                return Err(field("formation.dimension", format!("must be 2 or 3, got {d}")));
            }
            if formation.positions.len() < 2 {
                return Err(field("formation.positions", "need at least 2 spacecraft"));
            }
            for (i, p) in formation.positions.iter().enumerate() {
                if p.len() != d {
                    return Err(field(
                        &format!("formation.positions[{i}]"),
                        format!("has {} components, expected {d}", p.len()),
                    ));
                }
            }
            FormationState::from_points(&formation.positions)
                .map_err(|e| field("formation.positions", e.to_string()))?;
            if let Some(command) = &self.command {
                let want = d * (formation.positions.len() - 1);
                if command.relative_force.len() != want {
                    return Err(field(
                        "command.relative_force",
                        format!("has {} entries, expected {want}", command.relative_force.len()),
                    ));
                }
            }
        }
        if let Some(command) = &self.command {
            if command.relative_force.iter().any(|v| !v.is_finite()) {
                return Err(field("command.relative_force", "entries must be finite"));
            }
        }
        if let Some(set) = &self.epsilon_set {
            match set.mode {
                EpsilonMode::Linear => {
                    if set.count == Some(0) {
                        return Err(field("epsilon_set.count", "must be positive"));
                    }
                    if set.values.is_some() {
                        return Err(field("epsilon_set.values", "only allowed with mode \"explicit\""));
                    }
                }
                EpsilonMode::Explicit => match &set.values {
                    None => return Err(field("epsilon_set.values", "required with mode \"explicit\"")),
                    Some(v) if v.is_empty() => return Err(field("epsilon_set.values", "must not be empty")),
                    Some(v) if v.iter().any(|e| !(*e >= 0.0 && e.is_finite())) => {
                        return Err(field("epsilon_set.values", "entries must be finite and non-negative"))
                    }
                    Some(_) => {
                        if set.count.is_some() {
                            return Err(field("epsilon_set.count", "only allowed with mode \"linear\""));
                        }
                    }
                },
            }
        }
        if self.maneuver.is_some() {
            self.maneuver_config()?;
        }
        Ok(())
    }

    /// Same scenario with every default written out.
    pub fn normalized(&self) -> Self {
        let mut out = self.clone();
        let set = out.epsilon_set.get_or_insert(EpsilonSetSpec {
            mode: EpsilonMode::Linear,
            count: None,
            values: None,
        });
        if set.mode == EpsilonMode::Linear && set.count.is_none() {
            set.count = Some(DEFAULT_EPSILON_COUNT);
        }
        if let Some(m) = &mut out.maneuver {
            if m.v0.is_none() {
                let dim = m.xi0.first().map_or(0, Vec::len);
                m.v0 = Some(vec![vec![0.0; dim]; m.masses.len()]);
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn formation_state(&self) -> Result<FormationState, ScenarioError> {
        let formation = self.formation.as_ref().ok_or(ScenarioError::Missing("formation"))?;
        FormationState::from_points(&formation.positions)
            .map_err(|e| field("formation.positions", e.to_string()))
    }

    pub fn command(&self) -> Result<RelativeForce, ScenarioError> {
        let formation = self.formation.as_ref().ok_or(ScenarioError::Missing("formation"))?;
        let command = self.command.as_ref().ok_or(ScenarioError::Missing("command"))?;
        RelativeForce::new(formation.dimension, DVector::from_vec(command.relative_force.clone()))
            .map_err(|e| field("command.relative_force", e.to_string()))
    }

    pub fn epsilon_grid(&self) -> EpsilonGrid {
        match &self.epsilon_set {
            None => EpsilonGrid::default(),
            Some(EpsilonSetSpec { mode: EpsilonMode::Linear, count, .. }) => {
                EpsilonGrid::Linear { count: count.unwrap_or(DEFAULT_EPSILON_COUNT) }
            }
            Some(EpsilonSetSpec { values, .. }) => {
                EpsilonGrid::Explicit { values: values.clone().unwrap_or_default() }
            }
        }
    }

    pub fn maneuver_config(&self) -> Result<ManeuverConfig, ScenarioError> {
        let m = self.maneuver.as_ref().ok_or(ScenarioError::Missing("maneuver"))?;
        let dim = match &self.formation {
            Some(f) => f.dimension,
            None => m.xi0.first().map_or(0, Vec::len),
        };
        if !(2..=3).contains(&dim) {
            return Err(field("maneuver.xi0", format!("vectors must have 2 or 3 components, got {dim}")));
        }
        let pairs = m.masses.len().saturating_sub(1);
        let xi_des = stack("maneuver.xi_des", &m.xi_des, pairs, dim)?;
        let xi0 = stack("maneuver.xi0", &m.xi0, pairs, dim)?;
        let v0 = match &m.v0 {
            Some(v) => Some(stack("maneuver.v0", v, m.masses.len(), dim)?),
            None => None,
        };
        ManeuverConfig::from_relative(
            dim,
            m.masses.clone(),
            m.kappa,
            m.rho,
            xi_des,
            &xi0,
            v0,
            m.dt,
            m.t_final,
            self.epsilon_grid(),
        )
        .map_err(|e| field("maneuver", e.to_string()))
    }
}

fn stack(name: &str, rows: &[Vec<f64>], want: usize, dim: usize) -> Result<DVector<f64>, ScenarioError> {
    if rows.len() != want {
        return Err(field(name, format!("has {} entries, expected {want}", rows.len())));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != dim {
            return Err(field(&format!("{name}[{i}]"), format!("has {} components, expected {dim}", r.len())));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(field(&format!("{name}[{i}]"), "entries must be finite"));
        }
    }
    Ok(DVector::from_iterator(want * dim, rows.iter().flatten().copied()))
}
