//! Acceptance checks. Runs as a plain binary and prints one line per
//! criterion; exits non-zero if any fails.

use std::collections::BTreeSet;
use std::f64::consts::E;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use groundloop::confidence::{confidence_score, norm_entropy, EntropyVector, ScoredPoint, WeightProfile};
use groundloop::evaluation::{
    evaluate, export_dataset, generate_corpus, import_dataset, rouge_l, validate_schema, HarnessConfig, Polarity,
};
use groundloop::gateway::{parse_slm_review, parse_vlm_plan, ScriptedBackend};
use groundloop::geometry::{project_point, CameraIntrinsics, Pixel, RigidTransform, Vec3};
use groundloop::jsonfmt;
use groundloop::par::Exec;
use groundloop::preprocess::{depth_to_cloud, remove_ground_cells, DepthMap, GroundParams, PointCloud};
use groundloop::simulator::{builtin_goals, run_plan, GoalParams, SceneModel};
use groundloop::supervision::{
    archive_read, archive_write, model_review, run_supervision, validate_plan, ArchiveOutcome, ConstraintSet,
    FeedbackHistory, IssueCategory, LoopParams, Reviewer, SessionTemplates,
};
use groundloop::synthesis::{
    nearest_candidates, optimal_depth, run_interactive, select_reliable, ConvergenceParams, Frame, RoiBox,
    SynthesisError, VecFrames,
};
use groundloop::gateway::{builtin, TemplateKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const HEADPHONE_PLAN: &str = include_str!("fixtures/headphone_plan.json");
const HEADPHONE_REVIEW: &str = include_str!("fixtures/headphone_review.json");
const CORRECTED_PLAN: &str = include_str!("fixtures/corrected_plan.json");

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(t: Duration, limit: f64) -> bool {
    t.as_secs_f64() < limit
}

// 1. Entropy and confidence.
fn entropy_confidence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let peak = norm_entropy(1.0 / E).unwrap();
    let mut range_ok = (peak - 1.0).abs() <= 1e-9;
    let mut worst_log = 0.0f64;
    for _ in 0..10_000 {
        let p: f64 = rng.random_range(0.0..=1.0);
        let h = norm_entropy(p).unwrap();
        range_ok &= (0.0..=1.0).contains(&h) && h <= peak + 1e-12;
        let l: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.0..3.0));
        let hv: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.0..=1.0));
        let w = WeightProfile { lambda1: l[0] + 1e-3, lambda2: l[1], lambda3: l[2], lambda4: l[3] };
        let c = confidence_score(&EntropyVector::from(hv), &w);
        let s: f64 = w.as_array().iter().zip(hv).map(|(a, b)| a * b).sum();
        worst_log = worst_log.max((c.ln() + s).abs());
    }
    let mut rank_ok = true;
    for _ in 0..1_000 {
        let w = WeightProfile {
            lambda1: rng.random_range(0.1..3.0),
            lambda2: rng.random_range(0.1..3.0),
            lambda3: rng.random_range(0.1..3.0),
            lambda4: rng.random_range(0.1..3.0),
        };
        let alpha = rng.random_range(0.1..10.0);
        let ws = w.scaled(alpha);
        let set: Vec<EntropyVector> =
            (0..100).map(|_| EntropyVector::from(std::array::from_fn::<f64, 4, _>(|_| rng.random_range(0.0..=1.0)))).collect();
        let argmax = |w: &WeightProfile| {
            let mut best = 0;
            for (i, h) in set.iter().enumerate() {
                if confidence_score(h, w) > confidence_score(&set[best], w) {
                    best = i;
                }
            }
            best
        };
        rank_ok &= argmax(&w) == argmax(&ws);
    }
    let t = start.elapsed();
    check(
        range_ok && worst_log < 1e-12 && rank_ok && within(t, 5.0),
        format!("peak={peak:.12} max|lnC+Σλh|={worst_log:.2e} ranking_invariant={rank_ok} {t:.2?}"),
    )
}

// 2. Geometry.
fn geometry() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_t = 0.0f64;
    for _ in 0..1_000 {
        let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let t = RigidTransform::from_axis_angle(
            axis,
            rng.random_range(-3.1..3.1),
            Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)),
        );
        worst_t = worst_t.max(t.compose(&t.invert()).max_abs_diff(&RigidTransform::IDENTITY));
        worst_t = worst_t.max(t.invert().compose(&t).max_abs_diff(&RigidTransform::IDENTITY));
    }
    let k = CameraIntrinsics::new(525.0, 520.0, 160.0, 120.0, 320, 240).unwrap();
    let mut worst_ray = 0.0f64;
    for _ in 0..10_000 {
        let p = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.1..5.0));
        let s = rng.random_range(0.01..100.0);
        let a = project_point(&k, p).unwrap();
        let b = project_point(&k, p * s).unwrap();
        worst_ray = worst_ray.max(a.distance(b));
    }
    let (w, h) = (125u32, 80u32);
    let k2 = CameraIntrinsics::new(300.0, 310.0, 62.5, 40.0, w, h).unwrap();
    let depth: Vec<f64> = (0..w * h).map(|_| rng.random_range(0.2..4.0)).collect();
    let cloud = depth_to_cloud(&DepthMap::new(w, h, depth).unwrap(), &k2).unwrap();
    let mut worst_px = 0.0f64;
    for (i, p) in cloud.points.iter().enumerate() {
        let px = project_point(&k2, *p).unwrap();
        let expect = Pixel::new((i as u32 % w) as f64, (i as u32 / w) as f64);
        worst_px = worst_px.max(px.distance(expect));
    }
    let t = start.elapsed();
    check(
        cloud.len() == 10_000 && worst_t < 1e-9 && worst_ray < 1e-9 && worst_px < 1e-6 && within(t, 5.0),
        format!("T∘T⁻¹ err={worst_t:.1e} ray err={worst_ray:.1e}px round-trip err={worst_px:.1e}px over {} px {t:.2?}", cloud.len()),
    )
}

// 3. Oracles, each written independently of the library code path.
fn random_scored(rng: &mut ChaCha8Rng, n: usize) -> Vec<ScoredPoint> {
    (0..n)
        .map(|i| ScoredPoint {
            point_index: i,
            position: Vec3::new(i as f64, 0.0, 1.0),
            // Coarse grids force distance and confidence ties.
            pixel: Pixel::new(rng.random_range(0..40) as f64, rng.random_range(0..30) as f64),
            mask_id: 0,
            entropies: EntropyVector::default(),
            confidence: rng.random_range(0..8) as f64 / 8.0,
        })
        .collect()
}

fn oracle_nearest(c: Pixel, pts: &[ScoredPoint], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pts.len()).collect();
    // Insertion sort keyed by (squared distance, index).
    for i in 1..idx.len() {
        let mut j = i;
        while j > 0 {
            let key = |s: &ScoredPoint| ((s.pixel.u - c.u).powi(2) + (s.pixel.v - c.v).powi(2), s.point_index);
            let (a, b) = (key(&pts[idx[j - 1]]), key(&pts[idx[j]]));
            if a.0 > b.0 || (a.0 == b.0 && a.1 > b.1) {
                idx.swap(j - 1, j);
                j -= 1;
            } else {
                break;
            }
        }
    }
    idx.into_iter().take(k).map(|i| pts[i].point_index).collect()
}

fn oracle_reliable(pts: &[ScoredPoint]) -> usize {
    let mut best = &pts[0];
    for p in pts {
        if p.confidence > best.confidence || (p.confidence == best.confidence && p.point_index < best.point_index) {
            best = p;
        }
    }
    best.point_index
}

fn oracle_optimal(roi: &RoiBox, pts: &[ScoredPoint]) -> usize {
    let inside: Vec<ScoredPoint> = pts
        .iter()
        .filter(|p| {
            (p.pixel.u - roi.center.u).abs() <= roi.half_extent[0] && (p.pixel.v - roi.center.v).abs() <= roi.half_extent[1]
        })
        .cloned()
        .collect();
    if inside.is_empty() {
        oracle_nearest(roi.center, pts, 1)[0]
    } else {
        oracle_reliable(&inside)
    }
}

fn is_subsequence(sub: &[u8], of: &[u8]) -> bool {
    let mut it = of.iter();
    sub.iter().all(|x| it.any(|y| y == x))
}

/// Longest common subsequence by trying every subset of the shorter one.
fn oracle_lcs(a: &[u8], b: &[u8]) -> usize {
    let (s, l) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let mut best = 0;
    for mask in 0u32..(1 << s.len()) {
        let sub: Vec<u8> = (0..s.len()).filter(|i| mask & (1 << i) != 0).map(|i| s[i]).collect();
        if sub.len() > best && is_subsequence(&sub, l) {
            best = sub.len();
        }
    }
    best
}

fn oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = [0usize; 4];
    for _ in 0..1_000 {
        let n = rng.random_range(1..=500);
        let pts = random_scored(&mut rng, n);
        let c = Pixel::new(rng.random_range(0.0..40.0f64).round(), rng.random_range(0.0..30.0f64).round());
        let k = rng.random_range(1..=8);
        let got: Vec<usize> = nearest_candidates(c, &pts, k).unwrap().iter().map(|s| s.point_index).collect();
        mismatches[0] += usize::from(got != oracle_nearest(c, &pts, k));

        let m = rng.random_range(1..=12).min(n);
        let sub = &pts[..m];
        mismatches[1] += usize::from(select_reliable(sub).unwrap().point_index != oracle_reliable(sub));

        let roi = RoiBox::new(
            Pixel::new(rng.random_range(0..40) as f64, rng.random_range(0..30) as f64),
            rng.random_range(0..6) as f64,
            rng.random_range(0..6) as f64,
        );
        mismatches[2] += usize::from(optimal_depth(&roi, &pts).unwrap().point_index != oracle_optimal(&roi, &pts));

        let la = rng.random_range(0..=12);
        let lb = rng.random_range(0..=12);
        let a: Vec<u8> = (0..la).map(|_| rng.random_range(0..4)).collect();
        let b: Vec<u8> = (0..lb).map(|_| rng.random_range(0..4)).collect();
        let sa: Vec<String> = a.iter().map(|x| format!("act{x}()")).collect();
        let sb: Vec<String> = b.iter().map(|x| format!("ACT{x}( )").replace("( )", "()")).collect();
        let expect = if la + lb == 0 { 1.0 } else { 2.0 * oracle_lcs(&a, &b) as f64 / (la + lb) as f64 };
        mismatches[3] += usize::from(rouge_l(&sa, &sb) != expect);
    }
    check(
        mismatches == [0; 4],
        format!("mismatches nearest/reliable/optimal/rouge = {mismatches:?} over 1000 instances"),
    )
}

// 4. Ground removal on a plane with a cube on it.
fn ground_removal() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let floor_y = 0.5;
    let mut pts = Vec::new();
    for _ in 0..20_000 {
        pts.push(Vec3::new(rng.random_range(-2.0..2.0), floor_y + rng.random_range(-0.003..0.003), rng.random_range(0.8..6.0)));
    }
    let n_plane = pts.len();
    // Cube of side 0.3 resting on the floor; faces sampled 3 cm and more above it.
    let (cx, cz, side) = (0.1, 1.8, 0.3);
    for _ in 0..4_000 {
        let face = rng.random_range(0..5);
        let a = rng.random_range(-side / 2.0..side / 2.0);
        let b = rng.random_range(floor_y - side..floor_y - 0.03);
        let p = match face {
            0 => Vec3::new(cx - side / 2.0, b, cz + a),
            1 => Vec3::new(cx + side / 2.0, b, cz + a),
            2 => Vec3::new(cx + a, b, cz - side / 2.0),
            3 => Vec3::new(cx + a, b, cz + side / 2.0),
            _ => Vec3::new(cx + a, floor_y - side, cz + rng.random_range(-side / 2.0..side / 2.0)),
        };
        pts.push(p);
    }
    let cloud = PointCloud::new(pts);
    let k = CameraIntrinsics::new(300.0, 300.0, 320.0, 240.0, 640, 480).unwrap();
    let split =
        remove_ground_cells(&cloud, &k, &RigidTransform::IDENTITY, 16, 12, &GroundParams::default(), Exec::Parallel).unwrap();
    let in_view: BTreeSet<usize> = groundloop::geometry::project_cloud(&k, &RigidTransform::IDENTITY, &cloud.points)
        .into_iter()
        .map(|(i, _)| i)
        .collect();
    let plane_in_view = (0..n_plane).filter(|i| in_view.contains(i)).count();
    let plane_removed = split.ground.iter().filter(|&&i| i < n_plane).count();
    let cube_removed = split.ground.iter().filter(|&&i| i >= n_plane).count();
    let frac = plane_removed as f64 / plane_in_view as f64;
    let t = start.elapsed();
    check(
        frac >= 0.99 && cube_removed == 0 && within(t, 2.0),
        format!("plane removed {plane_removed}/{plane_in_view} ({:.2}%) cube removed {cube_removed} {t:.2?}", frac * 100.0),
    )
}

fn headphone_scene() -> SceneModel {
    SceneModel::from_json(HEADPHONE_PLAN).unwrap()
}

// 5. Headphone handover golden trace.
fn golden_trace() -> Outcome {
    let c = ConstraintSet::default();
    let scene = headphone_scene();
    let plan = parse_vlm_plan(HEADPHONE_PLAN).unwrap();
    let found: BTreeSet<(IssueCategory, Option<String>)> =
        validate_plan(&plan, &scene, &c).into_iter().map(|i| (i.category, i.step_id)).collect();
    let expect: BTreeSet<(IssueCategory, Option<String>)> = [
        (IssueCategory::ParseError, Some("5".to_string())),
        (IssueCategory::ConstraintViolation, Some("4".to_string())),
    ]
    .into();
    // The reference review, categorised by its own wording.
    let slm = model_review(&parse_slm_review(HEADPHONE_REVIEW).unwrap(), &FeedbackHistory::default());
    let reference: BTreeSet<(IssueCategory, Option<String>)> =
        slm.issues.into_iter().map(|i| (i.category, i.step_id)).collect();

    let corrected = parse_vlm_plan(CORRECTED_PLAN).unwrap();
    let clean = validate_plan(&corrected, &scene, &c).is_empty();
    let gp = GoalParams { place_target: Some(Vec3::new(0.5, 0.4, 0.2)), ..GoalParams::default() };
    let goal = builtin_goals(2, &scene, &gp).unwrap();
    let out = run_plan(&scene, &corrected, &goal, &c);
    let original = run_plan(&scene, &plan, &goal, &c);
    let hp = scene.get("headphone").and_then(|o| o.position) == Some(Vec3::new(0.5, 0.3, 0.2));
    let st = scene.get("headphone_stand").and_then(|o| o.position) == Some(Vec3::new(0.4, 0.2, 0.1));
    check(
        found == expect && reference == expect && clean && out.success && original.failed_step.as_deref() == Some("5") && hp && st,
        format!(
            "findings={found:?} reference={reference:?} corrected_clean={clean} corrected_success={} original_failed_at={:?}",
            out.success, original.failed_step
        ),
    )
}

fn slm_reply(flag: u8, confidence: f64, suggestions: &[(&str, f64)], prompt: &str) -> String {
    let s: Vec<serde_json::Value> = suggestions
        .iter()
        .enumerate()
        .map(|(i, (t, c))| serde_json::json!({"id": ((b'A' + i as u8) as char).to_string(), "text": t, "confidence": c}))
        .collect();
    serde_json::json!({
        "Feedback": {"Description": "review", "Details": []},
        "Suggestions": s,
        "Confidence": confidence,
        "Prompt for VLM": prompt,
        "Flag": flag,
    })
    .to_string()
}

// 6. Termination and archiving.
fn supervision_termination() -> Outcome {
    let c = ConstraintSet::default();
    let scene = headphone_scene();
    let t = SessionTemplates::default();
    let p = LoopParams { n_max: 5, tau: 0.8 };
    let confs = [[0.9, 0.7], [0.8, 0.65], [0.75, 0.6], [0.9, 0.52], [0.7, 0.6], [0.9, 0.9]];
    let slm = ScriptedBackend::from_lines(confs.iter().enumerate().map(|(r, cs)| {
        slm_reply(0, 0.4, &[(&format!("round {} first", r + 1), cs[0]), (&format!("round {} second", r + 1), cs[1])], "try again")
    }));
    let vlm = ScriptedBackend::from_lines(vec![HEADPHONE_PLAN.to_string(); 6]);
    let never = run_supervision("Hand over the headphone.", &scene, &vlm, Reviewer::Model(&slm), &t, &c, &p).unwrap();
    let fallbacks: Vec<_> = never.turns.iter().filter(|t| t.fallback).collect();
    let quotes_min = never.fallback_prompt.as_deref().is_some_and(|f| f.contains("round 4 second"));
    let never_ok = fallbacks.len() == 1
        && quotes_min
        && never.archive.outcome == ArchiveOutcome::HumanIntervention
        && never.reviewer_queries <= 6
        && slm.calls() == never.reviewer_queries;

    let slm = ScriptedBackend::from_lines([slm_reply(1, 0.9, &[], "none")]);
    let vlm = ScriptedBackend::from_lines([CORRECTED_PLAN.to_string(), "headphone on the desk".to_string()]);
    let ok = run_supervision("Hand over the headphone.", &scene, &vlm, Reviewer::Model(&slm), &t, &c, &p).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("archive.jsonl");
    let id = archive_write(&ok.archive, &path).unwrap();
    let back = archive_read(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    let rewritten = jsonfmt::to_canonical_line(&back[0]).unwrap();
    let accept_ok = ok.accepted()
        && ok.history.len() == 1
        && back.len() == 1
        && back[0].id == Some(id)
        && rewritten.as_bytes() == bytes.as_slice();
    check(
        never_ok && accept_ok,
        format!(
            "never-accepting: queries={} fallbacks={} quotes_min={quotes_min} outcome={:?}; accepting: n={} byte_identical={}",
            never.reviewer_queries,
            fallbacks.len(),
            never.archive.outcome,
            ok.history.len(),
            rewritten.as_bytes() == bytes.as_slice()
        ),
    )
}

// 7. Iterative prompting.
fn convergence() -> Outcome {
    let reply = |u: f64, flag: &str| format!(r#"{{"roi":{{"center":[{u},50],"extent":[4,4]}},"flag":"{flag}"}}"#);
    let frame = || Frame {
        image: None,
        scored: (0..20)
            .map(|i| ScoredPoint {
                point_index: i,
                position: Vec3::new(i as f64, 0.0, 1.0),
                pixel: Pixel::new(95.0 + i as f64, 50.0),
                mask_id: 0,
                entropies: EntropyVector::default(),
                confidence: 1.0 / (1.0 + i as f64),
            })
            .collect(),
        markers: vec![],
    };
    let t = builtin(TemplateKind::VlmIterative);
    let params = ConvergenceParams { epsilon: 2.0, max_iter: 5 };
    let b = ScriptedBackend::from_lines([
        reply(100.0, "incomplete"),
        reply(101.0, "incomplete"),
        reply(102.0, "complete"),
        reply(103.0, "complete"),
        reply(104.0, "complete"),
    ]);
    let out = run_interactive("find the cup", &t, &mut VecFrames::new(vec![frame()]), &b, &params).unwrap();
    let stops = out.transcript.len();
    let b = ScriptedBackend::from_lines((0..6).map(|i| reply(100.0 + i as f64, "incomplete")));
    let never = run_interactive("find the cup", &t, &mut VecFrames::new(vec![frame()]), &b, &params);
    let exhausted = matches!(&never, Err(SynthesisError::MaxIterationsExceeded(i)) if i.transcript.len() == 5);
    check(stops == 3 && exhausted, format!("flagged run stopped at n={stops}; never-flagged MaxIterationsExceeded at 5: {exhausted}"))
}

// 8. Seeded end-to-end runs.
fn end_to_end() -> Outcome {
    let start = Instant::now();
    let full = evaluate(&HarnessConfig { runs: 50, seed: 8, ..HarnessConfig::default() }).unwrap();
    let faulty = HarnessConfig { runs: 50, seed: 8, fault_rate: 0.5, ..HarnessConfig::default() };
    let recovered = evaluate(&faulty).unwrap();
    let ablation = evaluate(&HarnessConfig { reviewer: false, ..faulty }).unwrap();
    let t = start.elapsed();
    check(
        full.tsr == 1.0 && full.executability == 1.0 && ablation.tsr < recovered.tsr && within(t, 60.0),
        format!(
            "reviewer: TSR={:.2} Exe={:.2} mIoU={:.3} R-L={:.3}; faulty+reviewer TSR={:.2}; faulty, no reviewer TSR={:.2} Exe={:.2} {t:.2?}",
            full.tsr, full.executability, full.miou, full.rouge_l, recovered.tsr, ablation.tsr, ablation.executability
        ),
    )
}

// 9. Dataset generation.
fn dataset() -> Outcome {
    let c = ConstraintSet::default();
    let samples = generate_corpus(500, 500, 9, &c, Exec::Parallel).unwrap();
    let pos: Vec<_> = samples.iter().filter(|s| s.polarity == Polarity::Positive).collect();
    let neg: Vec<_> = samples.iter().filter(|s| s.polarity == Polarity::Negative).collect();
    let clean = pos.iter().filter(|s| s.validate(&c).unwrap().is_empty()).count();
    let flagged = neg.iter().filter(|s| !s.validate(&c).unwrap().is_empty()).count();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dataset.jsonl");
    let written = export_dataset(&samples, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let conform = text.lines().filter(|l| validate_schema(&serde_json::from_str(l).unwrap()).is_ok()).count();
    let back = import_dataset(&path).unwrap();
    check(
        pos.len() == 500 && neg.len() == 500 && clean == 500 && flagged == 500 && conform == 1000 && written == 1000 && back == samples,
        format!(
            "positives clean {clean}/{}; negatives flagged {flagged}/{}; schema {conform}/{written}; round-trip exact={}",
            pos.len(),
            neg.len(),
            back == samples
        ),
    )
}

// 10. Session overhead with a zero-latency backend.
fn session_overhead() -> Outcome {
    let c = ConstraintSet::default();
    let scene = headphone_scene();
    let vlm = ScriptedBackend::from_lines([HEADPHONE_PLAN, CORRECTED_PLAN, "headphone on the desk"]);
    let start = Instant::now();
    let r = run_supervision("Hand over the headphone.", &scene, &vlm, Reviewer::Rules, &SessionTemplates::default(), &c, &LoopParams::default())
        .unwrap();
    let t = start.elapsed();
    check(r.accepted() && within(t, 0.8), format!("{} review rounds, accepted={} in {t:.2?}", r.history.len(), r.accepted()))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("entropy/confidence suite", entropy_confidence),
        ("geometry suite", geometry),
        ("oracle equivalence", oracles),
        ("ground removal", ground_removal),
        ("headphone golden trace", golden_trace),
        ("supervision termination", supervision_termination),
        ("iterative prompting convergence", convergence),
        ("end-to-end TSR", end_to_end),
        ("dataset generation", dataset),
        ("session overhead", session_overhead),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match r {
            Ok(d) => println!("criterion {:>2} PASS  {name}: {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {d}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
