use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::scenario::{generate_scenario, ScenarioKind};
use super::EvalError;
use crate::gateway::{builtin, parse_vlm_plan, SlmReview, TemplateKind, VlmPlan};
use crate::par::{self, Exec};
use crate::simulator::{parse_action, ActionCommand, GraspTarget, SceneModel};
use crate::supervision::{rule_based_review, validate_plan, ConstraintSet, FeedbackHistory, Issue, IssueCategory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negative,
}

/// Where a sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    /// Generic pick-and-place.
    Base,
    /// Headphone/stand tasks.
    Task,
    /// Mutated from a positive sample.
    Augmented,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleInput {
    #[serde(rename = "Task Description")]
    pub task_description: String,
    /// Scene model as JSON text.
    #[serde(rename = "Scene")]
    pub scene: String,
    /// Raw planner output (plan JSON).
    #[serde(rename = "VLM Output")]
    pub vlm_output: String,
    #[serde(rename = "Historical SLM Feedback")]
    pub historical_feedback: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub input: SampleInput,
    pub output: SlmReview,
    pub polarity: Polarity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_type: Option<IssueCategory>,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<String>,
}

impl SampleRecord {
    pub fn plan(&self) -> Result<VlmPlan, EvalError> {
        parse_vlm_plan(&self.input.vlm_output).map_err(|e| EvalError::Schema(format!("VLM Output: {e}")))
    }

    pub fn scene(&self) -> Result<SceneModel, EvalError> {
        SceneModel::from_json(&self.input.scene).map_err(|e| EvalError::Schema(format!("Scene: {e}")))
    }

    /// Validator findings for the sample's plan in its own scene.
    pub fn validate(&self, c: &ConstraintSet) -> Result<Vec<Issue>, EvalError> {
        Ok(validate_plan(&self.plan()?, &self.scene()?, c))
    }
}

/// Checks one exported line against the record layout and its invariants.
pub fn validate_schema(v: &Value) -> Result<SampleRecord, EvalError> {
    let s: SampleRecord = serde_json::from_value(v.clone()).map_err(|e| EvalError::Schema(e.to_string()))?;
    match (s.polarity, s.error_type) {
        (Polarity::Negative, None) => return Err(EvalError::Schema("negative sample without error_type".into())),
        (Polarity::Positive, Some(_)) => return Err(EvalError::Schema("positive sample with error_type".into())),
        _ => {}
    }
    if !(0.0..=1.0).contains(&s.output.confidence) {
        return Err(EvalError::Schema(format!("confidence {} outside [0, 1]", s.output.confidence)));
    }
    s.plan()?;
    s.scene()?;
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AugmentStrategy {
    ParamExceed,
    DropStep,
    AddStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NegativeStrategy {
    ReverseFlow,
    InvalidPosition,
    Occlusion,
}

macro_rules! strategy_names {
    ($t:ty { $($v:ident => $s:literal),* }) => {
        impl $t {
            pub const ALL: &'static [$t] = &[$(<$t>::$v),*];
            pub fn as_str(self) -> &'static str {
                match self { $(<$t>::$v => $s),* }
            }
        }
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
        impl FromStr for $t {
            type Err = EvalError;
            fn from_str(s: &str) -> Result<Self, EvalError> {
                match s { $($s => Ok(<$t>::$v),)* _ => Err(EvalError::UnknownStrategy(s.to_string())) }
            }
        }
    };
}

strategy_names!(AugmentStrategy { ParamExceed => "param_exceed", DropStep => "drop_step", AddStep => "add_step" });
strategy_names!(NegativeStrategy { ReverseFlow => "reverse_flow", InvalidPosition => "invalid_position", Occlusion => "occlusion" });

const PRIOR_FEEDBACK: [&str; 4] = [
    "The previous plan omitted the approach height before grasping.",
    "Earlier output listed an object without coordinates.",
    "The previous grasp force was close to the limit for a fragile object.",
    "A prior plan moved through the obstacle region.",
];

fn review_output(plan: &VlmPlan, scene: &SceneModel, c: &ConstraintSet) -> Result<(SlmReview, Option<Issue>), EvalError> {
    let correction = builtin(TemplateKind::Correction);
    let rec = rule_based_review(&correction, &FeedbackHistory::default(), plan, scene, c)?;
    Ok((rec.to_slm_review(), rec.selected))
}

fn scene_text(scene: &SceneModel) -> String {
    serde_json::to_string_pretty(scene).expect("scene serializes")
}

/// A clean sample built from a seeded scenario.
pub fn positive_sample(kind: ScenarioKind, seed: u64, c: &ConstraintSet) -> Result<SampleRecord, EvalError> {
    let sc = generate_scenario(kind, seed, c);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f00d);
    let n_hist = rng.random_range(0..=2);
    let historical_feedback = PRIOR_FEEDBACK.choose_multiple(&mut rng, n_hist).map(|s| s.to_string()).collect();
    let (output, _) = review_output(&sc.plan, &sc.scene, c)?;
    Ok(SampleRecord {
        input: SampleInput {
            task_description: sc.task,
            scene: scene_text(&sc.scene),
            vlm_output: sc.plan.to_json(),
            historical_feedback,
        },
        output,
        polarity: Polarity::Positive,
        error_type: None,
        origin: if kind == ScenarioKind::PickPlace { Origin::Base } else { Origin::Task },
        strategy: None,
    })
}

fn require_positive(s: &SampleRecord) -> Result<(), EvalError> {
    if s.polarity != Polarity::Positive {
        return Err(EvalError::NotPositive);
    }
    Ok(())
}

fn parsed_steps(plan: &VlmPlan) -> Vec<Option<ActionCommand>> {
    plan.task_steps.iter().map(|s| parse_action(&s.action).ok()).collect()
}

fn indices(steps: &[Option<ActionCommand>], pred: impl Fn(&ActionCommand) -> bool) -> Vec<usize> {
    steps.iter().enumerate().filter(|(_, a)| a.as_ref().is_some_and(&pred)).map(|(i, _)| i).collect()
}

fn is_grasp(a: &ActionCommand) -> bool {
    matches!(a, ActionCommand::Grasp(_))
}

fn is_release(a: &ActionCommand) -> bool {
    matches!(a, ActionCommand::Release)
}

fn is_move(a: &ActionCommand) -> bool {
    matches!(a, ActionCommand::MoveTo(_))
}

fn renumber(plan: &mut VlmPlan) {
    for (i, s) in plan.task_steps.iter_mut().enumerate() {
        s.step_id = (i + 1).to_string();
    }
}

fn no_field(strategy: impl fmt::Display, what: &str) -> EvalError {
    EvalError::NoMutableField(format!("{strategy}: {what}"))
}

/// Re-reviews the mutated sample and labels it negative. The error type is
/// the finding at the mutated step when there is one, else the issue the
/// reviewer surfaces first.
fn relabel(
    s: &SampleRecord,
    plan: VlmPlan,
    scene_json: String,
    mutated_step: Option<String>,
    strategy: &str,
    c: &ConstraintSet,
) -> Result<SampleRecord, EvalError> {
    let scene = SceneModel::from_json(&scene_json).map_err(|e| EvalError::Schema(e.to_string()))?;
    let issues = validate_plan(&plan, &scene, c);
    if issues.is_empty() {
        return Err(no_field(strategy, "mutation left the plan valid"));
    }
    let (output, selected) = review_output(&plan, &scene, c)?;
    let at_step = mutated_step.and_then(|id| issues.iter().find(|i| i.step_id.as_deref() == Some(&id)));
    let error_type = at_step.or(selected.as_ref()).map(|i| i.category);
    Ok(SampleRecord {
        input: SampleInput { scene: scene_json, vlm_output: plan.to_json(), ..s.input.clone() },
        output,
        polarity: Polarity::Negative,
        error_type,
        origin: Origin::Augmented,
        strategy: Some(strategy.to_string()),
    })
}

fn round_to(x: f64, digits: i32) -> f64 {
    let m = 10f64.powi(digits);
    (x * m).round() / m
}

pub fn augment_positive(s: &SampleRecord, strategy: AugmentStrategy, seed: u64, c: &ConstraintSet) -> Result<SampleRecord, EvalError> {
    require_positive(s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plan = s.plan()?;
    let steps = parsed_steps(&plan);
    let mutated = match strategy {
        AugmentStrategy::ParamExceed => {
            let grasps = indices(&steps, is_grasp);
            let moves = indices(&steps, |a| matches!(a, ActionCommand::MoveTo(p) if p.to_array().iter().any(|v| *v > 0.0)));
            if let Some(&i) = grasps.choose(&mut rng) {
                let current = match &steps[i] {
                    Some(ActionCommand::Grasp(GraspTarget::Force(f))) if *f > 0.0 => *f,
                    _ => crate::simulator::DEFAULT_GRASP_FORCE,
                };
                let factor = c.max_force / current * rng.random_range(1.5..3.0);
                plan.task_steps[i].action = format!("grasp({})", round_to(current * factor, 1));
                Some(i)
            } else if let Some(&i) = moves.choose(&mut rng) {
                let Some(ActionCommand::MoveTo(p)) = &steps[i] else { unreachable!() };
                let axes: Vec<usize> = (0..3).filter(|&a| p.component(a) > 0.0).collect();
                let axis = *axes.choose(&mut rng).expect("some positive coordinate");
                let hi = c.workspace[axis][1];
                let factor = hi / p.component(axis) * rng.random_range(1.1..1.6);
                let q = p.with_component(axis, round_to(p.component(axis) * factor, 3));
                plan.task_steps[i].action = ActionCommand::MoveTo(q).to_string();
                Some(i)
            } else {
                return Err(no_field(strategy, "no force or position argument"));
            }
        }
        AugmentStrategy::DropStep => {
            let releases = indices(&steps, is_release);
            let grasps = indices(&steps, is_grasp);
            let &i = releases.choose(&mut rng).or_else(|| grasps.choose(&mut rng)).ok_or_else(|| no_field(strategy, "no release or grasp step"))?;
            plan.task_steps.remove(i);
            renumber(&mut plan);
            None
        }
        AugmentStrategy::AddStep => {
            let cands = indices(&steps, |a| is_grasp(a) || is_release(a));
            let &i = cands.choose(&mut rng).ok_or_else(|| no_field(strategy, "no grasp or release step"))?;
            let dup = plan.task_steps[i].clone();
            plan.task_steps.insert(i + 1, dup);
            renumber(&mut plan);
            Some(i + 1)
        }
    };
    let id = mutated.map(|i| plan.task_steps[i].step_id.clone());
    relabel(s, plan, s.input.scene.clone(), id, strategy.as_str(), c)
}

pub fn generate_negative(s: &SampleRecord, strategy: NegativeStrategy, seed: u64, c: &ConstraintSet) -> Result<SampleRecord, EvalError> {
    require_positive(s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plan = s.plan()?;
    let steps = parsed_steps(&plan);
    let mut scene_json = s.input.scene.clone();
    let mutated = match strategy {
        NegativeStrategy::ReverseFlow => {
            let g = *indices(&steps, is_grasp).first().ok_or_else(|| no_field(strategy, "no grasp step"))?;
            let r = indices(&steps, is_release)
                .into_iter()
                .find(|&r| r > g)
                .ok_or_else(|| no_field(strategy, "no release after the grasp"))?;
            let ga = plan.task_steps[g].action.clone();
            plan.task_steps[g].action = std::mem::replace(&mut plan.task_steps[r].action, ga);
            Some(g)
        }
        NegativeStrategy::InvalidPosition => {
            let moves = indices(&steps, is_move);
            let &i = moves.choose(&mut rng).ok_or_else(|| no_field(strategy, "no move_to step"))?;
            let Some(ActionCommand::MoveTo(p)) = &steps[i] else { unreachable!() };
            let axis = rng.random_range(0..3);
            let [lo, hi] = c.workspace[axis];
            let v = if rng.random_bool(0.5) { hi + rng.random_range(0.05..0.5) } else { lo - rng.random_range(0.05..0.5) };
            plan.task_steps[i].action = ActionCommand::MoveTo(p.with_component(axis, round_to(v, 3))).to_string();
            Some(i)
        }
        NegativeStrategy::Occlusion => {
            let mut v: Value = serde_json::from_str(&scene_json)?;
            let objects = v
                .get_mut("objects")
                .and_then(Value::as_array_mut)
                .ok_or_else(|| EvalError::Schema("Scene: objects missing".into()))?;
            let cands: Vec<usize> = objects
                .iter()
                .enumerate()
                .filter(|(_, o)| o.get("position").is_some() && o.get("type").is_none() && o.pointer("/properties/type").is_none())
                .map(|(i, _)| i)
                .collect();
            let &k = cands.choose(&mut rng).ok_or_else(|| no_field(strategy, "no localized object"))?;
            objects[k].as_object_mut().expect("scene objects are maps").remove("position");
            scene_json = serde_json::to_string_pretty(&v)?;
            None
        }
    };
    let id = mutated.map(|i| plan.task_steps[i].step_id.clone());
    relabel(s, plan, scene_json, id, strategy.as_str(), c)
}

/// One of the six mutation strategies, addressed uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mutation {
    Augment(AugmentStrategy),
    Negative(NegativeStrategy),
}

impl Mutation {
    pub fn all() -> Vec<Mutation> {
        AugmentStrategy::ALL
            .iter()
            .map(|&a| Mutation::Augment(a))
            .chain(NegativeStrategy::ALL.iter().map(|&n| Mutation::Negative(n)))
            .collect()
    }

    pub fn apply(self, s: &SampleRecord, seed: u64, c: &ConstraintSet) -> Result<SampleRecord, EvalError> {
        match self {
            Mutation::Augment(a) => augment_positive(s, a, seed, c),
            Mutation::Negative(n) => generate_negative(s, n, seed, c),
        }
    }
}

/// Sample counts per origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Composition {
    pub base: usize,
    pub task: usize,
    pub augmented: usize,
}

impl Composition {
    pub const REFERENCE: Composition = Composition { base: 240, task: 320, augmented: 3000 };

    pub fn total(&self) -> usize {
        self.base + self.task + self.augmented
    }

    /// `n` samples split in the reference proportions.
    pub fn scaled(n: usize) -> Composition {
        let r = Self::REFERENCE;
        let part = |k: usize| ((n * k) as f64 / r.total() as f64).round() as usize;
        let base = part(r.base).min(n);
        let task = part(r.task).min(n - base);
        Composition { base, task, augmented: n - base - task }
    }
}

/// Attempts at a different base sample before a negative slot fails.
const NEGATIVE_TRIES: u64 = 16;

fn mix(seed: u64, stream: u64, i: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ stream.rotate_left(48) ^ i.wrapping_mul(0xbf58_476d_1ce4_e5b9)
}

const TASK_KINDS: [ScenarioKind; 3] = [ScenarioKind::Hang, ScenarioKind::Place, ScenarioKind::MoveAndHang];

fn negative_slot(j: usize, seed: u64, c: &ConstraintSet) -> Result<SampleRecord, EvalError> {
    let muts = Mutation::all();
    let m = muts[j % muts.len()];
    let mut last = None;
    for t in 0..NEGATIVE_TRIES {
        let k = mix(seed, 3, j as u64 * NEGATIVE_TRIES + t);
        let kind = ScenarioKind::ALL[(k % 4) as usize];
        let base = positive_sample(kind, k, c)?;
        match m.apply(&base, k ^ 0xa5a5, c) {
            Ok(s) => return Ok(s),
            Err(e @ EvalError::NoMutableField(_)) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one try"))
}

/// Seeded corpus in the given composition; each sample has its own seed so
/// the result does not depend on `exec`.
pub fn generate_dataset(comp: Composition, seed: u64, c: &ConstraintSet, exec: Exec) -> Result<Vec<SampleRecord>, EvalError> {
    let base = par::map_range(exec, comp.base, |i| positive_sample(ScenarioKind::PickPlace, mix(seed, 1, i as u64), c));
    let task = par::map_range(exec, comp.task, |i| positive_sample(TASK_KINDS[i % 3], mix(seed, 2, i as u64), c));
    let neg = par::map_range(exec, comp.augmented, |j| negative_slot(j, seed, c));
    base.into_iter().chain(task).chain(neg).collect()
}

/// `n_pos` clean samples (base and task mixed) and `n_neg` mutated ones.
pub fn generate_corpus(n_pos: usize, n_neg: usize, seed: u64, c: &ConstraintSet, exec: Exec) -> Result<Vec<SampleRecord>, EvalError> {
    let base = n_pos * 3 / 7;
    generate_dataset(Composition { base, task: n_pos - base, augmented: n_neg }, seed, c, exec)
}

/// Writes JSONL, one record per line with sorted keys.
pub fn export_dataset(samples: &[SampleRecord], path: impl AsRef<Path>) -> Result<usize, EvalError> {
    let mut w = BufWriter::new(File::create(path)?);
    for s in samples {
        let v = serde_json::to_value(s)?;
        serde_json::to_writer(&mut w, &v)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(samples.len())
}

/// Reads JSONL written by [`export_dataset`]; every line is schema-checked.
pub fn import_dataset(path: impl AsRef<Path>) -> Result<Vec<SampleRecord>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(&line)?;
        out.push(validate_schema(&v).map_err(|e| EvalError::Schema(format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}
