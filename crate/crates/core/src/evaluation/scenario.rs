use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gateway::{PlanObject, SceneDescription, TaskStep, VlmPlan};
use crate::geometry::Vec3;
use crate::simulator::{run_plan, GoalPredicate, SceneModel, SceneObject};
use crate::supervision::{validate_plan, ConstraintSet};

/// Tries before giving up on obstacle placement.
const MAX_TRIES: usize = 2000;
const MIN_SEPARATION: f64 = 0.15;
const HOOK_OFFSET: f64 = 0.05;
const GOAL_TOL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Generic pick-and-place of a household object.
    PickPlace,
    /// Hang the headphone on the stand.
    Hang,
    /// Take the headphone off the stand and put it down.
    Place,
    /// Move the stand, then hang the headphone on it.
    MoveAndHang,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] =
        [ScenarioKind::PickPlace, ScenarioKind::Hang, ScenarioKind::Place, ScenarioKind::MoveAndHang];
}

/// A generated scene with its task, goal and a clean reference plan.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub task: String,
    pub scene: SceneModel,
    pub goal: GoalPredicate,
    pub plan: VlmPlan,
}

const HOUSEHOLD: [&str; 6] = ["cup", "block", "bottle", "bowl", "sponge", "marker"];

fn sample(rng: &mut ChaCha8Rng, lo: [f64; 3], hi: [f64; 3]) -> Vec3 {
    let r = |rng: &mut ChaCha8Rng, i: usize| (rng.random_range(lo[i]..hi[i]) * 1000.0).round() / 1000.0;
    Vec3::new(r(rng, 0), r(rng, 1), r(rng, 2))
}

fn raised(p: Vec3, dz: f64) -> Vec3 {
    Vec3::new(p.x, p.y, ((p.z + dz) * 1000.0).round() / 1000.0)
}

fn move_to(p: Vec3) -> String {
    format!("move_to([{}, {}, {}])", p.x, p.y, p.z)
}

struct Steps(Vec<String>);

impl Steps {
    /// Approach, grasp, lift, carry, lower, release.
    fn transfer(&mut self, from: Vec3, to: Vec3, grasp: String) {
        self.0.extend([
            move_to(raised(from, 0.1)),
            move_to(from),
            grasp,
            move_to(raised(from, 0.15)),
            move_to(raised(to, 0.1)),
            move_to(to),
            "release()".into(),
        ]);
    }
}

fn fragile_grasp(rng: &mut ChaCha8Rng, name: &str) -> String {
    if rng.random_bool(0.5) {
        format!("grasp('{name}')")
    } else {
        "grasp(5)".into()
    }
}

fn separated(points: &[Vec3]) -> bool {
    points.iter().enumerate().all(|(i, a)| points[i + 1..].iter().all(|b| a.distance(*b) >= MIN_SEPARATION))
}

fn plan_for(scene: &SceneModel, steps: Vec<String>) -> VlmPlan {
    VlmPlan {
        scene_description: SceneDescription {
            objects: scene
                .objects
                .iter()
                .filter_map(|o| o.position.map(|p| PlanObject { name: o.name.clone(), position: p, properties: o.properties.clone() }))
                .collect(),
        },
        task_steps: steps
            .into_iter()
            .enumerate()
            .map(|(i, action)| TaskStep { step_id: (i + 1).to_string(), action, description: None })
            .collect(),
        ..VlmPlan::default()
    }
}

/// Task text, objects, goal, plan actions and the positions they visit.
type Draw = (String, Vec<SceneObject>, GoalPredicate, Vec<String>, Vec<Vec3>);

/// One draw without obstacle; `None` when the layout is too cramped.
fn draw(kind: ScenarioKind, rng: &mut ChaCha8Rng) -> Option<Draw> {
    let headphone = |p: Vec3| SceneObject::new("headphone", p).with_property("fragility", "high");
    let stand = |p: Vec3| SceneObject::new("stand", p).with_property("material", "plastic");
    let hook = |s: Vec3| Vec3::new(s.x, s.y, s.z + HOOK_OFFSET);
    let hung = || GoalPredicate::Hung {
        object: "headphone".into(),
        stand: "stand".into(),
        offset: Vec3::new(0.0, 0.0, HOOK_OFFSET),
        tol: GOAL_TOL,
    };
    let mut steps = Steps(Vec::new());
    let out = match kind {
        ScenarioKind::PickPlace => {
            let name = HOUSEHOLD[rng.random_range(0..HOUSEHOLD.len())];
            let fragile = rng.random_bool(0.3);
            let o = sample(rng, [0.2, 0.2, 0.05], [0.7, 0.7, 0.25]);
            let t = sample(rng, [0.2, 0.2, 0.05], [0.8, 0.8, 0.3]);
            let obj = SceneObject::new(name, o).with_property("fragility", if fragile { "high" } else { "low" });
            let grasp = if fragile { fragile_grasp(rng, name) } else { format!("grasp({})", rng.random_range(5..=8)) };
            steps.transfer(o, t, grasp);
            let task = format!("Pick up the {name} and place it at [{}, {}, {}].", t.x, t.y, t.z);
            (task, vec![obj], GoalPredicate::Near { object: name.into(), target: t, tol: GOAL_TOL }, vec![o, t])
        }
        ScenarioKind::Hang => {
            let h = sample(rng, [0.35, 0.25, 0.1], [0.7, 0.65, 0.25]);
            let s = sample(rng, [0.2, 0.1, 0.05], [0.5, 0.4, 0.15]);
            let g = fragile_grasp(rng, "headphone");
            steps.transfer(h, hook(s), g);
            ("Hang the headphone on the stand.".to_string(), vec![headphone(h), stand(s)], hung(), vec![h, s])
        }
        ScenarioKind::Place => {
            let s = sample(rng, [0.2, 0.1, 0.05], [0.5, 0.4, 0.15]);
            let h = hook(s);
            let t = sample(rng, [0.4, 0.1, 0.1], [0.8, 0.5, 0.3]);
            let g = fragile_grasp(rng, "headphone");
            steps.transfer(h, t, g);
            let task = format!("Take the headphone off the stand and place it at [{}, {}, {}].", t.x, t.y, t.z);
            let goal = GoalPredicate::Near { object: "headphone".into(), target: t, tol: GOAL_TOL };
            (task, vec![headphone(h), stand(s)], goal, vec![s, t])
        }
        ScenarioKind::MoveAndHang => {
            let h = sample(rng, [0.35, 0.4, 0.1], [0.7, 0.7, 0.25]);
            let s = sample(rng, [0.2, 0.1, 0.05], [0.4, 0.3, 0.15]);
            let st = sample(rng, [0.5, 0.1, 0.05], [0.8, 0.35, 0.15]);
            steps.transfer(s, st, format!("grasp({})", rng.random_range(6..=9)));
            let g = fragile_grasp(rng, "headphone");
            steps.transfer(h, hook(st), g);
            let task = format!("Move the stand to [{}, {}, {}] and hang the headphone on it.", st.x, st.y, st.z);
            let goal = GoalPredicate::All {
                goals: vec![GoalPredicate::Near { object: "stand".into(), target: st, tol: GOAL_TOL }, hung()],
            };
            (task, vec![headphone(h), stand(s)], goal, vec![h, s, st])
        }
    };
    let (task, objects, goal, anchors) = out;
    separated(&anchors).then_some((task, objects, goal, steps.0, anchors))
}

fn clean(scene: &SceneModel, plan: &VlmPlan, goal: &GoalPredicate, c: &ConstraintSet) -> bool {
    validate_plan(plan, scene, c).is_empty() && run_plan(scene, plan, goal, c).success
}

/// Seeded scenario whose reference plan validates and succeeds. Most draws
/// include a box obstacle placed clear of the plan's path.
pub fn generate_scenario(kind: ScenarioKind, seed: u64, c: &ConstraintSet) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fallback = None;
    for _ in 0..MAX_TRIES {
        let Some((task, mut objects, goal, steps, anchors)) = draw(kind, &mut rng) else { continue };
        let with_box = rng.random_bool(0.7);
        let b = sample(&mut rng, [0.1, 0.1, 0.05], [0.9, 0.9, 0.5]);
        let plain = SceneModel::new(objects.clone()).expect("generated names are unique");
        let plain_plan = plan_for(&plain, steps.clone());
        if !clean(&plain, &plain_plan, &goal, c) {
            continue;
        }
        if !with_box || anchors.iter().any(|a| a.distance(b) < MIN_SEPARATION) {
            fallback.get_or_insert((task, plain, goal, plain_plan));
            if !with_box {
                break;
            }
            continue;
        }
        objects.push(SceneObject::new("box", b).with_property("type", "box"));
        let scene = SceneModel::new(objects).expect("generated names are unique");
        let plan = plan_for(&scene, steps);
        if clean(&scene, &plan, &goal, c) {
            return Scenario { kind, task, scene, goal, plan };
        }
        fallback.get_or_insert((task, plain, goal, plain_plan));
    }
    let (task, scene, goal, plan) = fallback.expect("some draw is feasible");
    Scenario { kind, task, scene, goal, plan }
}
