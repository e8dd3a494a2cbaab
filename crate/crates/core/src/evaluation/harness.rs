use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::metrics::{executability, localization_iou, rouge_l, EvalReport, Localization, MiouParams};
use super::scenario::{generate_scenario, Scenario, ScenarioKind};
use super::EvalError;
use crate::gateway::{parse_vlm_plan, ScriptedBackend, VlmPlan};
use crate::par::{self, Exec};
use crate::simulator::{parse_action, run_plan, ActionCommand, Outcome};
use crate::supervision::{run_supervision, ConstraintSet, LoopParams, Reviewer, SessionTemplates};

/// A defect injected into the planner's first answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// Grasp force far above the fragile limit.
    OverForce,
    /// The lift step uses a function the robot does not have.
    UnknownFunction,
    DroppedRelease,
    /// Grasp and release swapped.
    ReversedFlow,
}

impl Fault {
    pub const ALL: [Fault; 4] = [Fault::OverForce, Fault::UnknownFunction, Fault::DroppedRelease, Fault::ReversedFlow];

    pub fn apply(self, plan: &VlmPlan) -> VlmPlan {
        let mut p = plan.clone();
        let cmds: Vec<Option<ActionCommand>> = p.task_steps.iter().map(|s| parse_action(&s.action).ok()).collect();
        let grasp = cmds.iter().position(|a| matches!(a, Some(ActionCommand::Grasp(_))));
        let release = cmds.iter().position(|a| matches!(a, Some(ActionCommand::Release)));
        match (self, grasp, release) {
            (Fault::OverForce, Some(g), _) => p.task_steps[g].action = "grasp(15)".into(),
            (Fault::UnknownFunction, Some(g), _) => {
                if let Some(Some(ActionCommand::MoveTo(q))) = cmds.get(g + 1) {
                    p.task_steps[g + 1].action = format!("liftTo({}, {}, {})", q.x, q.y, q.z);
                }
            }
            (Fault::DroppedRelease, _, Some(r)) => {
                p.task_steps.remove(r);
                for (i, s) in p.task_steps.iter_mut().enumerate() {
                    s.step_id = (i + 1).to_string();
                }
            }
            (Fault::ReversedFlow, Some(g), Some(r)) => {
                let ga = p.task_steps[g].action.clone();
                p.task_steps[g].action = std::mem::replace(&mut p.task_steps[r].action, ga);
            }
            _ => {}
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    pub runs: usize,
    pub seed: u64,
    pub kind: ScenarioKind,
    /// When false the planner's first answer is executed unreviewed.
    pub reviewer: bool,
    /// Probability that an episode's first plan carries a [`Fault`].
    pub fault_rate: f64,
    /// Std-dev of the planner's reported object positions, meters.
    pub localization_noise: f64,
    pub miou: MiouParams,
    pub loop_params: LoopParams,
    pub constraints: ConstraintSet,
    pub exec: Exec,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            runs: 50,
            seed: 0,
            kind: ScenarioKind::Hang,
            reviewer: true,
            fault_rate: 0.0,
            localization_noise: 0.005,
            miou: MiouParams::default(),
            loop_params: LoopParams::default(),
            constraints: ConstraintSet::default(),
            exec: Exec::Parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub index: usize,
    pub scenario: Scenario,
    pub fault: Option<Fault>,
    /// The plan that was executed, if the planner produced one.
    pub executed: Option<VlmPlan>,
    pub outcome: Outcome,
    pub localizations: Vec<Localization>,
    pub reviews: usize,
}

fn episode_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x2545_f491_4f6c_dd1d).wrapping_add(i as u64)
}

/// The planner's answer: the reference plan with noisy object positions.
fn competent_plan(sc: &Scenario, noise: f64, rng: &mut ChaCha8Rng) -> VlmPlan {
    let mut p = sc.plan.clone();
    if noise > 0.0 {
        let n = Normal::new(0.0, noise).expect("positive std-dev");
        for o in &mut p.scene_description.objects {
            let d = [n.sample(rng), n.sample(rng), n.sample(rng)];
            o.position = o.position + d.into();
        }
    }
    p
}

fn scene_detail(sc: &Scenario) -> String {
    sc.scene
        .objects
        .iter()
        .filter_map(|o| o.position.map(|p| format!("{} at {p}", o.name)))
        .collect::<Vec<_>>()
        .join("; ")
}

fn localizations(sc: &Scenario, plan: &VlmPlan) -> Vec<Localization> {
    plan.scene_description
        .objects
        .iter()
        .filter_map(|o| {
            let gt = sc.scene.get(&o.name)?.position?;
            Some(Localization { name: o.name.clone(), predicted: o.position, ground_truth: gt })
        })
        .collect()
}

/// Scripted planner replies for one episode.
pub fn episode_script(sc: &Scenario, fault: Option<Fault>, noise: f64, rng: &mut ChaCha8Rng) -> Vec<String> {
    let clean = competent_plan(sc, noise, rng);
    let mut lines = Vec::new();
    if let Some(f) = fault {
        lines.push(f.apply(&clean).to_json());
    }
    lines.push(clean.to_json());
    lines.push(scene_detail(sc));
    lines
}

pub fn run_episode(i: usize, cfg: &HarnessConfig) -> Result<Episode, EvalError> {
    let seed = episode_seed(cfg.seed, i);
    let scenario = generate_scenario(cfg.kind, seed, &cfg.constraints);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfa17);
    let fault = (cfg.fault_rate > 0.0 && rng.random_bool(cfg.fault_rate.min(1.0)))
        .then(|| Fault::ALL[rng.random_range(0..Fault::ALL.len())]);
    let script = episode_script(&scenario, fault, cfg.localization_noise, &mut rng);

    let (executed, accepted, reviews) = if cfg.reviewer {
        let vlm = ScriptedBackend::from_lines(script);
        let report = run_supervision(
            &scenario.task,
            &scenario.scene,
            &vlm,
            Reviewer::Rules,
            &SessionTemplates::default(),
            &cfg.constraints,
            &cfg.loop_params,
        )
        .map_err(|a| a.error)?;
        let ok = report.accepted();
        (report.final_plan, ok, report.reviewer_queries)
    } else {
        (parse_vlm_plan(&script[0]).ok(), true, 0)
    };

    let mut outcome = match &executed {
        Some(p) => run_plan(&scenario.scene, p, &scenario.goal, &cfg.constraints),
        None => run_plan(&scenario.scene, &VlmPlan::default(), &scenario.goal, &cfg.constraints),
    };
    outcome.success &= accepted && executed.is_some();
    let locs = executed.as_ref().map(|p| localizations(&scenario, p)).unwrap_or_default();
    Ok(Episode { index: i, scenario, fault, executed, outcome, localizations: locs, reviews })
}

pub fn run_episodes(cfg: &HarnessConfig) -> Result<Vec<Episode>, EvalError> {
    if cfg.runs == 0 {
        return Err(EvalError::EmptyInput("runs"));
    }
    par::map_range(cfg.exec, cfg.runs, |i| run_episode(i, cfg)).into_iter().collect()
}

/// Aggregates episodes. mIoU and ROUGE-L are averaged per episode; an
/// episode without a plan scores zero on both.
pub fn summarize(episodes: &[Episode], miou: &MiouParams) -> Result<EvalReport, EvalError> {
    if episodes.is_empty() {
        return Err(EvalError::EmptyInput("episodes"));
    }
    let n = episodes.len();
    let mut miou_sum = 0.0;
    let mut rouge_sum = 0.0;
    for e in episodes {
        if !e.localizations.is_empty() {
            miou_sum += e.localizations.iter().map(|l| localization_iou(l.predicted, l.ground_truth, miou)).sum::<f64>()
                / e.localizations.len() as f64;
        }
        if let Some(p) = &e.executed {
            let pred: Vec<&str> = p.task_steps.iter().map(|s| s.action.as_str()).collect();
            let gt: Vec<&str> = e.scenario.plan.task_steps.iter().map(|s| s.action.as_str()).collect();
            rouge_sum += rouge_l(&pred, &gt);
        }
    }
    let exec: Vec<bool> = episodes.iter().map(|e| e.executed.is_some() && e.outcome.executable()).collect();
    let outcomes: Vec<Outcome> = episodes.iter().map(|e| e.outcome.clone()).collect();
    Ok(EvalReport {
        miou: miou_sum / n as f64,
        rouge_l: rouge_sum / n as f64,
        executability: executability(&exec)?,
        tsr: super::metrics::tsr(&outcomes)?,
        n,
        successes: outcomes.iter().filter(|o| o.success).count(),
        executable: exec.iter().filter(|&&b| b).count(),
    })
}

pub fn evaluate(cfg: &HarnessConfig) -> Result<EvalReport, EvalError> {
    summarize(&run_episodes(cfg)?, &cfg.miou)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn each_fault_breaks_the_reference_plan() {
        let c = ConstraintSet::default();
        for seed in 0..5 {
            let sc = generate_scenario(ScenarioKind::Hang, seed, &c);
            for f in Fault::ALL {
                let out = run_plan(&sc.scene, &f.apply(&sc.plan), &sc.goal, &c);
                assert!(!out.success, "{f:?} seed {seed}");
            }
        }
    }

    #[test]
    fn reviewer_recovers_faults() {
        let cfg = HarnessConfig { runs: 8, fault_rate: 1.0, exec: Exec::Sequential, ..HarnessConfig::default() };
        let r = evaluate(&cfg).unwrap();
        assert_eq!(r.tsr, 1.0);
        let ablation = HarnessConfig { reviewer: false, ..cfg };
        assert_eq!(evaluate(&ablation).unwrap().tsr, 0.0);
    }

    #[test]
    fn zero_runs() {
        let cfg = HarnessConfig { runs: 0, ..HarnessConfig::default() };
        assert!(matches!(evaluate(&cfg), Err(EvalError::EmptyInput(_))));
    }
}
