use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SupervisionError;
use crate::geometry::Vec3;

/// Safety and workspace limits shared by the validator and the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConstraintSet {
    /// `[min, max]` per axis, meters.
    pub workspace: [[f64; 2]; 3],
    /// Newtons.
    pub max_force: f64,
    /// Newtons, for objects whose `fragility` is `high`.
    pub fragile_max_force: f64,
    /// Meters.
    pub min_clearance: f64,
    pub known_actions: Vec<String>,
    /// Meters.
    pub reach_tolerance: f64,
}

impl Default for ConstraintSet {
    fn default() -> Self {
        Self {
            workspace: [[0.0, 1.0]; 3],
            max_force: 10.0,
            fragile_max_force: 5.0,
            min_clearance: 0.1,
            known_actions: ["move_to", "grasp", "release", "rotate"].map(String::from).to_vec(),
            reach_tolerance: 0.05,
        }
    }
}

impl ConstraintSet {
    pub fn validate(&self) -> Result<(), SupervisionError> {
        for (axis, [lo, hi]) in self.workspace.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(SupervisionError::InvalidConstraints(format!("axis {axis}: bounds [{lo}, {hi}]")));
            }
        }
        if !(self.max_force > 0.0 && self.fragile_max_force > 0.0) {
            return Err(SupervisionError::InvalidConstraints("forces must be positive".into()));
        }
        if !(self.min_clearance >= 0.0 && self.reach_tolerance >= 0.0) {
            return Err(SupervisionError::InvalidConstraints("distances must be non-negative".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, SupervisionError> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SupervisionError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn in_workspace(&self, p: Vec3) -> bool {
        p.to_array().iter().zip(&self.workspace).all(|(v, [lo, hi])| *v >= *lo && *v <= *hi)
    }

    pub fn is_known(&self, action: &str) -> bool {
        self.known_actions.iter().any(|a| a == action)
    }

    pub fn force_limit(&self, fragile: bool) -> f64 {
        if fragile {
            self.fragile_max_force.min(self.max_force)
        } else {
            self.max_force
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_checks() {
        let c = ConstraintSet::default();
        c.validate().unwrap();
        assert!(c.in_workspace(Vec3::new(0.0, 1.0, 0.5)));
        assert!(!c.in_workspace(Vec3::new(1.2, 0.5, 0.5)));
        assert_eq!(c.force_limit(true), 5.0);
        assert_eq!(c.force_limit(false), 10.0);
        let bad = ConstraintSet { workspace: [[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]], ..c.clone() };
        assert!(bad.validate().is_err());
        assert!(ConstraintSet::from_json(r#"{"max_force": -1}"#).is_err());
        assert_eq!(ConstraintSet::from_json(r#"{"min_clearance": 0.2}"#).unwrap().min_clearance, 0.2);
    }
}
