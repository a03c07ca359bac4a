use crate::error::{Error, Result};

/// Grid size used when nothing else is configured.
pub const DEFAULT_EPSILON_COUNT: usize = 30;

// Linear grids span [LOW, HIGH] times the command norm.
const LINEAR_LOW: f64 = 0.01;
const LINEAR_HIGH: f64 = 0.999;

/// Ascending fit tolerances, all inside `[0, ‖ΔF_cmd‖)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonSearchSet {
    values: Vec<f64>,
}

impl EpsilonSearchSet {
    pub fn new(mut values: Vec<f64>, command_norm: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("epsilon search set is empty".into()));
        }
        if let Some(bad) = values.iter().find(|&&e| !(e >= 0.0 && e < command_norm)) {
            return Err(Error::InvalidInput(format!(
                "epsilon {bad} is outside [0, {command_norm})"
            )));
        }
        values.sort_by(f64::total_cmp);
        values.dedup();
        Ok(Self { values })
    }

    /// `count` evenly spaced values from 1% to 99.9% of the command norm.
    pub fn linear(count: usize, command_norm: f64) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidInput("epsilon count must be positive".into()));
        }
        let lo = LINEAR_LOW * command_norm;
        let hi = LINEAR_HIGH * command_norm;
        let values = if count == 1 {
            vec![lo]
        } else {
            let step = (hi - lo) / (count - 1) as f64;
            (0..count).map(|k| lo + step * k as f64).collect()
        };
        Self::new(values, command_norm)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// How to build the search set for a given command.
///
/// A grid is resolved against each command separately, which is what the
/// simulator needs since the command norm changes every step.
#[derive(Debug, Clone, PartialEq)]
pub enum EpsilonGrid {
    /// Evenly spaced, relative to the command norm.
    Linear { count: usize },
    /// Absolute values; those outside `[0, ‖ΔF_cmd‖)` are dropped.
    Explicit { values: Vec<f64> },
}

impl Default for EpsilonGrid {
    fn default() -> Self {
        Self::Linear { count: DEFAULT_EPSILON_COUNT }
    }
}

impl EpsilonGrid {
    pub fn resolve(&self, command_norm: f64) -> Result<EpsilonSearchSet> {
        match self {
            EpsilonGrid::Linear { count } => EpsilonSearchSet::linear(*count, command_norm),
            EpsilonGrid::Explicit { values } => {
                let kept = values
                    .iter()
                    .copied()
                    .filter(|&e| e >= 0.0 && e < command_norm)
                    .collect();
                EpsilonSearchSet::new(kept, command_norm)
            }
        }
    }
}
