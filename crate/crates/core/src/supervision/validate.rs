use super::{ConstraintSet, Issue, IssueCategory};
use crate::gateway::VlmPlan;
use crate::geometry::Vec3;
use crate::simulator::{
    min_clearance, parse_action, path_obstacles, ActionCommand, DslError, GraspTarget, SceneModel, DEFAULT_GRASP_FORCE,
    PATH_SAMPLE_STEP,
};

fn fmt_num(x: f64) -> String {
    format!("{x}")
}

fn unknown_function_fix(action: &str, name: &str, step_id: &str) -> String {
    // Three bare numbers look like a mistyped move.
    let args = action.find('(').and_then(|i| action.rfind(')').filter(|&j| j > i).map(|j| &action[i + 1..j]));
    let nums = args.and_then(|a| a.split(',').map(|s| s.trim().parse::<f64>().ok()).collect::<Option<Vec<_>>>());
    match nums.as_deref() {
        Some([x, y, z]) => format!(
            "Replace '{}' with 'move_to([{x}, {y}, {z}])' in step {step_id} to ensure the action is executable.",
            action.trim()
        ),
        _ => format!("Replace '{name}' with one of the supported actions: move_to, grasp, release, rotate."),
    }
}

struct Symbolic {
    gripper: Vec3,
    held: Option<String>,
}

/// Deterministic plan checks. Each step yields at most one issue: the first
/// failing check among parse, arguments, workspace, force, sequence logic
/// and path clearance. A plan that ends holding an object gets a final
/// sequence issue without a step id.
pub fn validate_plan(plan: &VlmPlan, scene: &SceneModel, c: &ConstraintSet) -> Vec<Issue> {
    let mut issues = Vec::new();
    if plan.task_steps.is_empty() {
        issues.push(Issue::new(IssueCategory::LogicalError, None, "The plan contains no task steps.")
            .with_fix("Provide the complete sequence of actions needed for the task."));
        return issues;
    }
    let mut sym = Symbolic { gripper: scene.gripper_home, held: None };

    for s in &plan.task_steps {
        let id = Some(s.step_id.clone());
        let cmd = match parse_action(&s.action) {
            Ok(cmd) => cmd,
            Err(DslError::UnknownFunction { name, .. }) => {
                issues.push(
                    Issue::new(IssueCategory::ParseError, id, format!("The function '{name}' is not recognized as a valid robotic function."))
                        .with_fix(unknown_function_fix(&s.action, &name, &s.step_id)),
                );
                continue;
            }
            Err(e) => {
                issues.push(
                    Issue::new(IssueCategory::ParseError, id, format!("The action '{}' cannot be parsed: {e}.", s.action.trim()))
                        .with_fix(format!("Rewrite step {} using the exact action syntax, e.g. move_to([x, y, z]).", s.step_id)),
                );
                continue;
            }
        };
        if cmd.is_actuating() && !c.is_known(cmd.name()) {
            issues.push(
                Issue::new(IssueCategory::ParseError, id, format!("The function '{}' is not allowed by the robot constraints.", cmd.name()))
                    .with_fix(format!("Replace step {} with one of: {}.", s.step_id, c.known_actions.join(", "))),
            );
            continue;
        }

        match &cmd {
            ActionCommand::MoveTo(target) => {
                let issue = if !c.in_workspace(*target) {
                    Some(
                        Issue::new(IssueCategory::ParameterError, id, format!("The target {target} is outside the safe operation zone."))
                            .with_fix(format!("Keep the target of step {} inside the workspace on every axis.", s.step_id)),
                    )
                } else {
                    let obstacles = path_obstacles(scene, sym.held.as_deref(), *target, c.reach_tolerance);
                    min_clearance(sym.gripper, *target, obstacles, PATH_SAMPLE_STEP)
                        .filter(|(_, d)| *d < c.min_clearance)
                        .map(|(name, d)| {
                            let at = scene.get(name).and_then(|o| o.position).map(|p| format!(" at {p}")).unwrap_or_default();
                            Issue::new(
                                IssueCategory::ConstraintViolation,
                                id,
                                format!("The path of step {} passes {d:.3} m from the obstacle '{name}', below the {} m minimum.", s.step_id, fmt_num(c.min_clearance)),
                            )
                            .with_fix(format!("Reroute step {} to keep at least {} m from the obstacle{at}.", s.step_id, fmt_num(c.min_clearance)))
                        })
                };
                issues.extend(issue);
                sym.gripper = *target;
            }
            ActionCommand::Grasp(target) => {
                let (name, force) = match target {
                    GraspTarget::Named(n) => (Some(n.as_str()), DEFAULT_GRASP_FORCE),
                    GraspTarget::Force(f) => (None, *f),
                };
                let resolved = scene.nearest(sym.gripper, name);
                let issue = match resolved {
                    Some((obj, _)) if obj.is_fragile() && force > c.force_limit(true) => Some(
                        Issue::new(
                            IssueCategory::ConstraintViolation,
                            id.clone(),
                            format!("The grasp force of {}N is above the recommended threshold for the {}.", fmt_num(force), obj.name),
                        )
                        .with_fix(format!(
                            "Reduce the grasp force in step {} to {}N to avoid damaging the {}.",
                            s.step_id,
                            fmt_num(c.force_limit(true)),
                            obj.name
                        )),
                    ),
                    _ if force > c.max_force => Some(
                        Issue::new(IssueCategory::ParameterError, id.clone(), format!("The grasp force of {}N exceeds the {}N maximum.", fmt_num(force), fmt_num(c.max_force)))
                            .with_fix(format!("Reduce the grasp force in step {} to at most {}N.", s.step_id, fmt_num(c.max_force))),
                    ),
                    _ => None,
                };
                let issue = issue.or_else(|| {
                    if let Some(h) = &sym.held {
                        return Some(
                            Issue::new(IssueCategory::LogicalError, id.clone(), format!("Step {} grasps while '{h}' is still held.", s.step_id))
                                .with_fix(format!("Release '{h}' before the grasp in step {}.", s.step_id)),
                        );
                    }
                    match resolved {
                        None => Some(
                            Issue::new(
                                IssueCategory::LogicalError,
                                id.clone(),
                                match name {
                                    Some(n) => format!("The object '{n}' is not present or not localized in the scene."),
                                    None => "There is no localized object to grasp.".to_string(),
                                },
                            )
                            .with_fix("Grasp an object that is present and localized in the scene."),
                        ),
                        Some((obj, d)) if d > c.reach_tolerance => {
                            let p = obj.position.expect("nearest only returns localized objects");
                            Some(
                                Issue::new(
                                    IssueCategory::LogicalError,
                                    id.clone(),
                                    format!("The gripper is {d:.3} m from the {} when grasping in step {}.", obj.name, s.step_id),
                                )
                                .with_fix(format!("Move to the {} at {p} before the grasp in step {}.", obj.name, s.step_id)),
                            )
                        }
                        Some(_) => None,
                    }
                });
                issues.extend(issue);
                if sym.held.is_none() {
                    sym.held = resolved.map(|(o, _)| o.name.clone());
                }
            }
            ActionCommand::Release => {
                if sym.held.take().is_none() {
                    issues.push(
                        Issue::new(IssueCategory::LogicalError, id, format!("Step {} releases while nothing is held.", s.step_id))
                            .with_fix(format!("Grasp the object before the release in step {}.", s.step_id)),
                    );
                }
            }
            ActionCommand::Rotate(_) | ActionCommand::Analyse => {}
        }
    }
    if let Some(h) = sym.held {
        issues.push(
            Issue::new(IssueCategory::LogicalError, None, format!("The plan ends while '{h}' is still held."))
                .with_fix(format!("Add a release() at the target so the {h} is set down.")),
        );
    }
    issues
}

/// Non-blocking remarks: issues the planner itself reported, implicit grip
/// forces and an incomplete flag.
pub fn plan_warnings(plan: &VlmPlan) -> Vec<String> {
    let mut w: Vec<String> = plan.issues.iter().map(|i| i.description.clone()).collect();
    for s in &plan.task_steps {
        if let Ok(ActionCommand::Grasp(GraspTarget::Named(n))) = parse_action(&s.action) {
            w.push(format!("Step {} grasps '{n}' without a force; {DEFAULT_GRASP_FORCE} N is assumed.", s.step_id));
        }
    }
    if !plan.flag.is_set() {
        w.push("The planner marked its output as incomplete.".into());
    }
    w
}
