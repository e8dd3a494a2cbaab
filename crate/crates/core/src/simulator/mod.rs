//! Desk-scale kinematic simulator for the action DSL.

mod dsl;
mod goals;
mod scene;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::VlmPlan;
use crate::geometry::Vec3;
use crate::jsonfmt;
use crate::supervision::ConstraintSet;

pub use dsl::{parse_action, ActionCommand, DslError, GraspTarget, DEFAULT_GRASP_FORCE};
pub use goals::{builtin_goals, headphone_name, stand_name, GoalParams, GoalPredicate};
pub use scene::{SceneModel, SceneObject, DEFAULT_GRIPPER_HOME};

/// Path sampling interval for clearance checks, meters.
pub const PATH_SAMPLE_STEP: f64 = 0.01;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scene has no object matching '{0}'")]
    MissingObject(String),
    #[error("goal needs {0}")]
    MissingTarget(&'static str),
    #[error("unknown task {0}")]
    UnknownTask(u8),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    ParseError,
    OutOfWorkspace,
    Collision,
    NothingToGrasp,
    OverForce,
    NothingHeld,
    AlreadyHolding,
}

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[error("{reason:?}: {message}")]
pub struct StepFailure {
    pub reason: FailureReason,
    pub message: String,
}

impl StepFailure {
    fn new(reason: FailureReason, message: impl Into<String>) -> Self {
        Self { reason, message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub gripper: Vec3,
    pub held: Option<String>,
    /// Newtons; zero when empty.
    pub force: f64,
    /// Radians about the vertical axis.
    pub orientation: f64,
}

impl RobotState {
    pub fn at(gripper: Vec3) -> Self {
        Self { gripper, held: None, force: 0.0, orientation: 0.0 }
    }
}

/// Smallest distance between the segment `a → b`, sampled every
/// `step` meters, and any of `points`. `None` if `points` is empty.
pub fn min_clearance<'a>(a: Vec3, b: Vec3, points: impl IntoIterator<Item = (&'a str, Vec3)>, step: f64) -> Option<(&'a str, f64)> {
    let n = ((a.distance(b) / step).ceil() as usize).max(1);
    let mut best: Option<(&str, f64)> = None;
    for (name, p) in points {
        let d = (0..=n)
            .map(|i| {
                let t = i as f64 / n as f64;
                (a + (b - a) * t).distance(p)
            })
            .fold(f64::INFINITY, f64::min);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((name, d));
        }
    }
    best
}

/// Obstacles that matter for a move ending at `dest`: typed objects that
/// are localized, not held, and not the thing being approached.
pub fn path_obstacles<'a>(scene: &'a SceneModel, held: Option<&str>, dest: Vec3, reach: f64) -> Vec<(&'a str, Vec3)> {
    scene
        .obstacles()
        .filter(|o| held != Some(o.name.as_str()))
        .filter_map(|o| o.position.map(|p| (o.name.as_str(), p)))
        .filter(|(_, p)| p.distance(dest) > reach)
        .collect()
}

/// Applies one command. The inputs are left untouched on failure.
pub fn step(
    state: &RobotState,
    scene: &SceneModel,
    cmd: &ActionCommand,
    c: &ConstraintSet,
) -> Result<(RobotState, SceneModel), StepFailure> {
    let mut st = state.clone();
    let mut sc = scene.clone();
    match cmd {
        ActionCommand::MoveTo(target) => {
            if !c.in_workspace(*target) {
                return Err(StepFailure::new(FailureReason::OutOfWorkspace, format!("{target} is outside the workspace")));
            }
            let obstacles = path_obstacles(scene, st.held.as_deref(), *target, c.reach_tolerance);
            if let Some((name, d)) = min_clearance(st.gripper, *target, obstacles, PATH_SAMPLE_STEP) {
                if d < c.min_clearance {
                    return Err(StepFailure::new(
                        FailureReason::Collision,
                        format!("path passes {d:.3} m from '{name}' (minimum {})", c.min_clearance),
                    ));
                }
            }
            st.gripper = *target;
            if let Some(h) = &st.held {
                sc.get_mut(h).expect("held object is in the scene").position = Some(*target);
            }
        }
        ActionCommand::Grasp(target) => {
            if let Some(h) = &st.held {
                return Err(StepFailure::new(FailureReason::AlreadyHolding, format!("already holding '{h}'")));
            }
            let (name, force) = match target {
                GraspTarget::Named(n) => (Some(n.as_str()), DEFAULT_GRASP_FORCE),
                GraspTarget::Force(f) => (None, *f),
            };
            let (obj, d) = scene
                .nearest(st.gripper, name)
                .ok_or_else(|| StepFailure::new(FailureReason::NothingToGrasp, "no localized object to grasp"))?;
            if d > c.reach_tolerance {
                return Err(StepFailure::new(
                    FailureReason::NothingToGrasp,
                    format!("'{}' is {d:.3} m away (reach {})", obj.name, c.reach_tolerance),
                ));
            }
            let limit = c.force_limit(obj.is_fragile());
            if force > limit {
                return Err(StepFailure::new(
                    FailureReason::OverForce,
                    format!("{force} N exceeds the {limit} N limit for '{}'", obj.name),
                ));
            }
            st.held = Some(obj.name.clone());
            st.force = force;
            sc.get_mut(&obj.name).expect("object exists").position = Some(st.gripper);
        }
        ActionCommand::Release => {
            if st.held.take().is_none() {
                return Err(StepFailure::new(FailureReason::NothingHeld, "release with an empty gripper"));
            }
            st.force = 0.0;
        }
        ActionCommand::Rotate(deg) => st.orientation += deg.to_radians(),
        ActionCommand::Analyse => {}
    }
    Ok((st, sc))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub n: usize,
    pub step_id: String,
    pub command: String,
    pub state_after: RobotState,
    /// `"ok"` or the failure reason.
    pub result: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub success: bool,
    pub failed_step: Option<String>,
    pub failure: Option<StepFailure>,
    pub goal_met: bool,
    pub trace: Vec<TraceRecord>,
    pub final_scene: SceneModel,
}

impl Outcome {
    /// Every step parsed and executed, regardless of the goal.
    pub fn executable(&self) -> bool {
        self.failure.is_none()
    }

    pub fn write_trace(&self, path: impl AsRef<Path>) -> Result<(), SimError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for r in &self.trace {
            f.write_all(jsonfmt::to_canonical_line(r)?.as_bytes())?;
        }
        f.flush()?;
        Ok(())
    }
}

fn reason_label(r: FailureReason) -> String {
    serde_json::to_value(r).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

/// Parses every step, then executes in order. A parse failure anywhere
/// means nothing runs; the first execution failure aborts.
pub fn run_plan(scene: &SceneModel, plan: &VlmPlan, goal: &GoalPredicate, c: &ConstraintSet) -> Outcome {
    let fail = |step_id: &str, failure: StepFailure, trace: Vec<TraceRecord>, final_scene: SceneModel| Outcome {
        success: false,
        failed_step: Some(step_id.to_string()),
        failure: Some(failure),
        goal_met: false,
        trace,
        final_scene,
    };

    let mut commands = Vec::with_capacity(plan.task_steps.len());
    for s in &plan.task_steps {
        match parse_action(&s.action) {
            Ok(cmd) => commands.push(cmd),
            Err(e) => return fail(&s.step_id, StepFailure::new(FailureReason::ParseError, e.to_string()), Vec::new(), scene.clone()),
        }
    }

    let mut state = RobotState::at(scene.gripper_home);
    let mut sc = scene.clone();
    let mut trace = Vec::with_capacity(commands.len());
    for (i, (s, cmd)) in plan.task_steps.iter().zip(&commands).enumerate() {
        match step(&state, &sc, cmd, c) {
            Ok((st, next)) => {
                state = st;
                sc = next;
                trace.push(TraceRecord {
                    n: i + 1,
                    step_id: s.step_id.clone(),
                    command: cmd.to_string(),
                    state_after: state.clone(),
                    result: "ok".into(),
                });
            }
            Err(f) => {
                trace.push(TraceRecord {
                    n: i + 1,
                    step_id: s.step_id.clone(),
                    command: cmd.to_string(),
                    state_after: state.clone(),
                    result: reason_label(f.reason),
                });
                return fail(&s.step_id, f, trace, sc);
            }
        }
    }
    let goal_met = goal.evaluate(&sc, &state).unwrap_or(false);
    Outcome { success: goal_met, failed_step: None, failure: None, goal_met, trace, final_scene: sc }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{PlanFlag, SceneDescription, TaskStep};

    pub(crate) fn plan(actions: &[&str]) -> VlmPlan {
        VlmPlan {
            scene_description: SceneDescription::default(),
            task_steps: actions
                .iter()
                .enumerate()
                .map(|(i, a)| TaskStep { step_id: (i + 1).to_string(), action: a.to_string(), description: None })
                .collect(),
            issues: vec![],
            flag: PlanFlag::Complete,
            roi: None,
            recapture: false,
            extra: Default::default(),
        }
    }

    fn desk() -> SceneModel {
        SceneModel::new(vec![
            SceneObject::new("headphone", Vec3::new(0.5, 0.3, 0.2)).with_property("fragility", "high"),
            SceneObject::new("stand", Vec3::new(0.4, 0.2, 0.1)),
            SceneObject::new("obstacle", Vec3::new(0.6, 0.4, 0.3)).with_property("type", "box"),
        ])
        .unwrap()
    }

    #[test]
    fn step_rules() {
        let c = ConstraintSet::default();
        let s = desk();
        let at_headphone = RobotState::at(Vec3::new(0.5, 0.3, 0.2));

        let e = step(&at_headphone, &s, &ActionCommand::Grasp(GraspTarget::Force(15.0)), &c).unwrap_err();
        assert_eq!(e.reason, FailureReason::OverForce);
        let e = step(&at_headphone, &s, &ActionCommand::Release, &c).unwrap_err();
        assert_eq!(e.reason, FailureReason::NothingHeld);

        let home = RobotState::at(DEFAULT_GRIPPER_HOME);
        let (st, _) = step(&home, &s, &ActionCommand::MoveTo(Vec3::new(0.2, 0.2, 0.4)), &c).unwrap();
        assert_eq!(st.gripper, Vec3::new(0.2, 0.2, 0.4));
        let e = step(&home, &s, &ActionCommand::MoveTo(Vec3::new(1.2, 0.2, 0.4)), &c).unwrap_err();
        assert_eq!(e.reason, FailureReason::OutOfWorkspace);
        let e = step(&home, &s, &ActionCommand::MoveTo(Vec3::new(0.62, 0.42, 0.32)), &c);
        // Destination within reach of the obstacle: approaching it is allowed.
        assert!(e.is_ok());
        let e = step(&home, &s, &ActionCommand::MoveTo(Vec3::new(0.7, 0.45, 0.3)), &c).unwrap_err();
        assert_eq!(e.reason, FailureReason::Collision);
        let e = step(&home, &s, &ActionCommand::Grasp(GraspTarget::Named("headphone".into())), &c).unwrap_err();
        assert_eq!(e.reason, FailureReason::NothingToGrasp);
    }

    #[test]
    fn pick_and_place_moves_object() {
        let c = ConstraintSet::default();
        let p = plan(&["move_to([0.5, 0.3, 0.2])", "grasp('headphone')", "move_to([0.7, 0.3, 0.2])", "release()"]);
        let goal = GoalPredicate::Near { object: "headphone".into(), target: Vec3::new(0.7, 0.3, 0.2), tol: 0.05 };
        let out = run_plan(&desk(), &p, &goal, &c);
        assert!(out.success, "{out:?}");
        assert_eq!(out.trace.len(), 4);
        assert_eq!(out.final_scene.objects.len(), 3);
        assert_eq!(out.trace[2].state_after.held.as_deref(), Some("headphone"));
        assert_eq!(out.trace[3].state_after.held, None);
        assert_eq!(out.final_scene.get("headphone").unwrap().position, Some(Vec3::new(0.7, 0.3, 0.2)));
    }

    #[test]
    fn parse_failure_reports_step_and_runs_nothing() {
        let p = plan(&["move_to([0.3, 0.2, 0.5])", "liftTo(0.4, 0.3, 0.5)"]);
        let out = run_plan(&desk(), &p, &GoalPredicate::Always, &ConstraintSet::default());
        assert!(!out.success && !out.executable());
        assert_eq!(out.failed_step.as_deref(), Some("2"));
        assert_eq!(out.failure.unwrap().reason, FailureReason::ParseError);
        assert!(out.trace.is_empty());
    }

    #[test]
    fn empty_plan_trivial_goal() {
        let out = run_plan(&desk(), &plan(&[]), &GoalPredicate::Always, &ConstraintSet::default());
        assert!(out.success && out.trace.is_empty());
    }

    #[test]
    fn clearance_sampling() {
        let (_, d) = min_clearance(Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), [("o", Vec3::new(0.505, 0.2, 0.0))], 0.01).unwrap();
        assert!(d > 0.2 && d - 0.2 < 1e-4);
        assert!(min_clearance(Vec3::ZERO, Vec3::ZERO, [], 0.01).is_none());
    }
}
