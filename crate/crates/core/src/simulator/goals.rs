use serde::{Deserialize, Serialize};

use super::{RobotState, SceneModel, SimError};
use crate::geometry::Vec3;

/// Terminal condition over the final scene and robot state.
///
/// Placement predicates require the object to be resting, i.e. not held.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GoalPredicate {
    Always,
    Near { object: String, target: Vec3, tol: f64 },
    /// `object` within `tol` of `stand` position + `offset`.
    Hung { object: String, stand: String, offset: Vec3, tol: f64 },
    All { goals: Vec<GoalPredicate> },
}

impl GoalPredicate {
    pub fn evaluate(&self, scene: &SceneModel, state: &RobotState) -> Result<bool, SimError> {
        let pos = |name: &str| -> Result<Option<Vec3>, SimError> {
            scene.get(name).map(|o| o.position).ok_or_else(|| SimError::MissingObject(name.to_string()))
        };
        let resting = |name: &str| state.held.as_deref() != Some(name);
        Ok(match self {
            GoalPredicate::Always => true,
            GoalPredicate::Near { object, target, tol } => {
                resting(object) && pos(object)?.is_some_and(|p| p.distance(*target) <= *tol)
            }
            GoalPredicate::Hung { object, stand, offset, tol } => {
                let o = pos(object)?;
                let s = pos(stand)?;
                resting(object) && matches!((o, s), (Some(o), Some(s)) if o.distance(s + *offset) <= *tol)
            }
            GoalPredicate::All { goals } => {
                for g in goals {
                    if !g.evaluate(scene, state)? {
                        return Ok(false);
                    }
                }
                true
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GoalParams {
    pub hook_offset: Vec3,
    /// Meters.
    pub delta: f64,
    /// Task 2 placement target.
    pub place_target: Option<Vec3>,
    /// Task 3 stand destination.
    pub stand_target: Option<Vec3>,
    /// Concrete task a task-4 instruction resolves to.
    pub task4_maps_to: u8,
}

impl Default for GoalParams {
    fn default() -> Self {
        Self { hook_offset: Vec3::new(0.0, 0.0, 0.05), delta: 0.05, place_target: None, stand_target: None, task4_maps_to: 1 }
    }
}

pub fn headphone_name(scene: &SceneModel) -> Result<String, SimError> {
    scene
        .resolve("headphone", &["stand"])
        .map(|o| o.name.clone())
        .ok_or_else(|| SimError::MissingObject("headphone".into()))
}

/// Prefers an object literally named `stand`, then any name containing it.
pub fn stand_name(scene: &SceneModel) -> Result<String, SimError> {
    scene.resolve("stand", &[]).map(|o| o.name.clone()).ok_or_else(|| SimError::MissingObject("stand".into()))
}

pub fn builtin_goals(task_id: u8, scene: &SceneModel, p: &GoalParams) -> Result<GoalPredicate, SimError> {
    let hung = || -> Result<GoalPredicate, SimError> {
        Ok(GoalPredicate::Hung { object: headphone_name(scene)?, stand: stand_name(scene)?, offset: p.hook_offset, tol: p.delta })
    };
    match task_id {
        1 => hung(),
        2 => Ok(GoalPredicate::Near {
            object: headphone_name(scene)?,
            target: p.place_target.ok_or(SimError::MissingTarget("place_target"))?,
            tol: p.delta,
        }),
        3 => Ok(GoalPredicate::All {
            goals: vec![
                GoalPredicate::Near {
                    object: stand_name(scene)?,
                    target: p.stand_target.ok_or(SimError::MissingTarget("stand_target"))?,
                    tol: p.delta,
                },
                hung()?,
            ],
        }),
        4 if (1..=3).contains(&p.task4_maps_to) => builtin_goals(p.task4_maps_to, scene, p),
        other => Err(SimError::UnknownTask(other)),
    }
}
