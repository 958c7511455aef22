//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured numbers. Run with `--nocapture` to see them:
//!
//! ```text
//! cargo test -p desknav --test acceptance -- --nocapture
//! ```

use desknav::common::{derive_seed, ActionDistribution, EpisodeSpec, NavAction, Pose2D};
use desknav::conformal::{CalibrationRecord, ConformalModel};
use desknav::control::{planned_controller, tryout_controller, PlannedParams, TryoutConfig};
use desknav::experts::{
    fuse_branch_logits, softmax, NoisyExpertPlanner, PlannerParams, StepContext, Suggestion,
};
use desknav::fusion::{decide, fuse, sparse_reasoner_distribution, FusionConfig, ReasonerVerdict};
use desknav::harness::{
    fixtures, generate_worlds, presets, run_benchmark, write_outputs, RunConfig, TauSource,
    WorldKind,
};
use desknav::metrics::{aggregate, compute, sdt_sweep, DEFAULT_SDT_SWEEP};
use desknav::sim::{scan, AgentMode, KinematicsConfig, TrajectoryLog, World};
use desknav::waypoint::{build_cost_map, predict_waypoints_lidar, CellCost, WaypointParams};
use desknav::control::{DistanceField, GridParams};
use desknav::common::CandidateSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

// ---------------------------------------------------------------------------
// Criterion 1: conformal marginal coverage on an exchangeable generator.
// ---------------------------------------------------------------------------

/// A reusable decision context: a candidate set sampled from a seeded world
/// through the real scan → cluster pipeline, plus the remaining-distance
/// oracle for a goal in that world.
struct DecisionContext {
    candidates: CandidateSet,
    pose: Pose2D,
    world_kind: String,
    field: DistanceField,
}

fn build_contexts(per_world: usize) -> Vec<DecisionContext> {
    let mut worlds: Vec<World> = Vec::new();
    worlds.extend(generate_worlds(WorldKind::Open, 2, 101).unwrap());
    worlds.extend(generate_worlds(WorldKind::Rooms, 2, 102).unwrap());
    worlds.extend(generate_worlds(WorldKind::Corridor, 2, 103).unwrap());

    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let params = WaypointParams::default();
    let mut contexts = Vec::new();
    for (wi, world) in worlds.iter().enumerate() {
        let mut made = 0;
        let mut attempts = 0;
        while made < per_world && attempts < 400 {
            attempts += 1;
            let pose = Pose2D::new(
                rng.random_range(0.5..world.bounds.0 - 0.5),
                rng.random_range(0.5..world.bounds.1 - 0.5),
                rng.random_range(-3.1..3.1),
            )
            .unwrap();
            if world.clearance(pose.position()) < 0.35 {
                continue;
            }
            let goal = (
                rng.random_range(0.5..world.bounds.0 - 0.5),
                rng.random_range(0.5..world.bounds.1 - 0.5),
            );
            if world.clearance(goal) < 0.35 {
                continue;
            }
            let lidar = scan(world, &pose, 360, 6.0).unwrap();
            let seed = derive_seed(81, "ctx", (wi * 1000 + made) as u64);
            let Ok(wps) = predict_waypoints_lidar(&lidar, &pose, &params, seed) else {
                continue;
            };
            if wps.len() < 3 {
                continue;
            }
            contexts.push(DecisionContext {
                candidates: CandidateSet::new(wps).unwrap(),
                pose,
                world_kind: world.kind.clone(),
                field: DistanceField::build(world, goal, &GridParams::default()),
            });
            made += 1;
        }
    }
    assert!(contexts.len() >= 40, "generator needs a healthy context pool");
    contexts
}

/// Draw one labeled decision point: planner distribution plus the
/// path-optimal label under the context's oracle.
fn draw_point(
    ctx: &DecisionContext,
    planner: &mut NoisyExpertPlanner,
) -> (ActionDistribution, usize) {
    let remaining = |p: (f64, f64)| ctx.field.distance_or_euclid(p);
    let step_ctx = StepContext {
        instruction: "",
        history: &[],
        candidates: &ctx.candidates,
        pose: ctx.pose,
        world_kind: &ctx.world_kind,
        suggestion: None::<Suggestion>,
        remaining_distance: &remaining,
    };
    let logits = planner.propose(&step_ctx);
    let dist = softmax(&fuse_branch_logits(&logits).unwrap()).unwrap();
    let mut label = 0;
    for i in 0..ctx.candidates.len() {
        if step_ctx.candidate_remaining(i) < step_ctx.candidate_remaining(label) {
            label = i;
        }
    }
    (dist, label)
}

#[test]
fn acceptance_1_conformal_coverage() {
    let t0 = Instant::now();
    let contexts = build_contexts(40);
    let mut planner = NoisyExpertPlanner::new(
        PlannerParams {
            beta: 4.0,
            sigma: 0.8,
            ..PlannerParams::default()
        },
        4242,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(4243);
    let n_cal = 5_000;
    let n_test = 10_000;
    let mut points = Vec::with_capacity(n_cal + n_test);
    for _ in 0..n_cal + n_test {
        let ctx = &contexts[rng.random_range(0..contexts.len())];
        points.push(draw_point(ctx, &mut planner));
    }
    let (cal, test) = points.split_at(n_cal);
    let records: Vec<CalibrationRecord> = cal
        .iter()
        .map(|(dist, label)| {
            CalibrationRecord::new(1.0 - dist.get(*label).unwrap()).unwrap()
        })
        .collect();

    for &epsilon in &[0.05, 0.1, 0.25] {
        let model = ConformalModel::calibrate(&records, epsilon).unwrap();
        let coverage = model.empirical_coverage(test).unwrap();
        let sigma = (epsilon * (1.0 - epsilon) / n_test as f64).sqrt();
        let floor = 1.0 - epsilon - 3.0 * sigma;
        assert!(
            coverage >= floor,
            "coverage {coverage:.4} below {floor:.4} at epsilon {epsilon}"
        );
        println!(
            "  epsilon {epsilon:.2}: tau {:.4}, coverage {coverage:.4} >= {floor:.4}",
            model.tau
        );
    }
    let elapsed = t0.elapsed();
    assert!(
        elapsed.as_secs_f64() < 60.0,
        "criterion 1 took {elapsed:?}, budget 60 s"
    );
    println!("ACCEPTANCE 1 PASS — conformal coverage holds at eps in {{0.05, 0.1, 0.25}} over 10k points in {elapsed:.2?}");
}

// ---------------------------------------------------------------------------
// Criterion 2: fusion algebra, exact.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_2_fusion_algebra() {
    // All grid values are dyadic fractions, so every product and sum below
    // is exact in f64 and the equivalence can be asserted with no tolerance.
    let sixteenths = |k: u32| k as f64 / 16.0;
    let mut checked = 0usize;
    for p1_k in 11..=26u32 {
        for p2_k in 1..p1_k {
            let p3_k = 32i64 - p1_k as i64 - p2_k as i64;
            if p3_k < 1 || p3_k >= p2_k as i64 {
                continue; // keep index 1 the strict runner-up
            }
            let p3_k = p3_k as u32;
            let (p1, p2, p3) = (
                p1_k as f64 / 32.0,
                p2_k as f64 / 32.0,
                p3_k as f64 / 32.0,
            );
            let dist = ActionDistribution::new(vec![p1, p2, p3]).unwrap();
            for alpha_k in 1..=14u32 {
                let alpha = alpha_k as f64 / 16.0;
                for c_k in 0..=16u32 {
                    let c = sixteenths(c_k);
                    let verdict = ReasonerVerdict {
                        chosen: 1,
                        confidence: c,
                        rationale: String::new(),
                    };
                    let sparse = sparse_reasoner_distribution(&verdict, 3).unwrap();
                    let fused = fuse(&dist, &sparse, alpha).unwrap();
                    let flipped = desknav::common::argmax(&fused) == 1;
                    let expected = alpha * c > (1.0 - alpha) * (p1 - p2);
                    assert_eq!(
                        flipped, expected,
                        "override mismatch at p1={p1} p2={p2} alpha={alpha} c={c}"
                    );

                    // Agreement stability: backing the argmax never moves it.
                    let agree = ReasonerVerdict {
                        chosen: 0,
                        confidence: c,
                        rationale: String::new(),
                    };
                    let sparse = sparse_reasoner_distribution(&agree, 3).unwrap();
                    let fused = fuse(&dist, &sparse, alpha).unwrap();
                    assert_eq!(desknav::common::argmax(&fused), 0);
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 10_000, "grid too small: {checked}");

    // Narrated override replay: planner 0.56/0.43, reasoner backs the
    // runner-up with c = 0.9, |C| = 2 at tau 0.97 gives alpha 0.2 and the
    // decision flips to index 1.
    let planner = ActionDistribution::new(vec![0.56, 0.43, 0.01]).unwrap();
    let model = ConformalModel::fixed_tau(0.97, 0.1);
    let out = decide(&planner, &model, &FusionConfig::default(), |set| {
        assert_eq!(set.members(), &[0, 1]);
        Ok(ReasonerVerdict {
            chosen: 1,
            confidence: 0.9,
            rationale: String::new(),
        })
    });
    assert!(out.reasoner_invoked);
    assert_eq!(out.alpha, Some(0.2));
    assert_eq!(out.selected, 1, "the reflective override must win");
    let fused = out.fused.unwrap();
    assert!((fused[1] - 0.524).abs() < 1e-12);
    assert!((fused[0] - 0.448).abs() < 1e-12);

    println!("ACCEPTANCE 2 PASS — override threshold and agreement stability exact over {checked} grid points; narrated override replays");
}

// ---------------------------------------------------------------------------
// Criterion 3: complementary-expertise suite.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_3_complementary_suite() {
    let t0 = Instant::now();
    let cfg = presets::complementary(7);
    assert_eq!(
        cfg.worlds.iter().map(|b| b.count).sum::<usize>() * cfg.episodes_per_world,
        200
    );
    let report = run_benchmark(&cfg).unwrap();
    let sr = |mode: AgentMode| report.summary_for(mode, 3.0).unwrap().sr_pct;
    let planner_sr = sr(AgentMode::PlannerOnly);
    let reasoner_sr = sr(AgentMode::ReasonerOnly);
    let fused_sr = sr(AgentMode::Fused);
    assert!(
        fused_sr >= planner_sr.max(reasoner_sr) - 2.0,
        "fused SR {fused_sr} below max({planner_sr}, {reasoner_sr}) - 2"
    );

    // Forcing tau to 0 makes every prediction set the argmax-fallback
    // singleton; that run must equal planner-only decision for decision.
    let singleton_cfg = RunConfig {
        tau: TauSource::Fixed {
            tau: 0.0,
            epsilon: 0.1,
        },
        modes: vec![AgentMode::PlannerOnly, AgentMode::Fused],
        ..cfg
    };
    let singleton = run_benchmark(&singleton_cfg).unwrap();
    let planner_logs = &singleton.modes[0].logs;
    let fused_logs = &singleton.modes[1].logs;
    assert_eq!(planner_logs.len(), fused_logs.len());
    for (a, b) in planner_logs.iter().zip(fused_logs) {
        let strip = |log: &TrajectoryLog| {
            serde_json::to_string(&(&log.poses, &log.actions, &log.collided, log.stopped))
                .unwrap()
        };
        assert_eq!(strip(a), strip(b), "trajectory mismatch in {}", a.episode_id);
        let selections =
            |log: &TrajectoryLog| log.audits.iter().map(|e| e.audit.selected).collect::<Vec<_>>();
        assert_eq!(selections(a), selections(b));
        assert!(b
            .audits
            .iter()
            .all(|e| e.audit.set_members.len() == 1 && !e.audit.reasoner_invoked));
    }

    let elapsed = t0.elapsed();
    assert!(
        elapsed.as_secs_f64() < 300.0,
        "criterion 3 took {elapsed:?}, budget 5 min"
    );
    println!(
        "ACCEPTANCE 3 PASS — fused SR {fused_sr:.1} vs planner {planner_sr:.1} / reasoner {reasoner_sr:.1}; singleton-gate run equals planner-only bit-exactly; {elapsed:.2?}"
    );
}

// ---------------------------------------------------------------------------
// Criterion 4: clustering invariants against a brute-force oracle.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_4_clustering_invariants() {
    let mut worlds: Vec<World> = Vec::new();
    worlds.extend(generate_worlds(WorldKind::Open, 2, 11).unwrap());
    worlds.extend(generate_worlds(WorldKind::Corridor, 2, 12).unwrap());
    worlds.extend(generate_worlds(WorldKind::Rooms, 2, 13).unwrap());
    worlds.extend(generate_worlds(WorldKind::Trap, 2, 14).unwrap());

    let params = WaypointParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut total_time = 0.0f64;
    let mut scans_done = 0usize;
    let mut waypoints_seen = 0usize;
    while scans_done < 1000 {
        let world = &worlds[rng.random_range(0..worlds.len())];
        let pose = Pose2D::new(
            rng.random_range(0.4..world.bounds.0 - 0.4),
            rng.random_range(0.4..world.bounds.1 - 0.4),
            rng.random_range(-3.1..3.1),
        )
        .unwrap();
        if world.clearance(pose.position()) < 0.3 {
            continue;
        }
        let lidar = scan(world, &pose, 360, 6.0).unwrap();
        let seed = derive_seed(9000, "acc4", scans_done as u64);

        let t0 = Instant::now();
        let result = predict_waypoints_lidar(&lidar, &pose, &params, seed);
        total_time += t0.elapsed().as_secs_f64();
        scans_done += 1;

        let Ok(wps) = result else { continue };
        // Brute-force oracle: rebuild the map, collect occupied cell
        // centers, and measure clearance directly.
        let map = build_cost_map(&lidar, &params.cost_map).unwrap();
        let mut occupied = Vec::new();
        for iy in 0..map.size {
            for ix in 0..map.size {
                if map.cell(ix, iy) == CellCost::Occupied {
                    occupied.push(map.cell_center(ix, iy));
                }
            }
        }
        for (i, w) in wps.iter().enumerate() {
            waypoints_seen += 1;
            // Scan-frame position of the waypoint.
            let local = (
                w.distance * w.bearing.cos(),
                w.distance * w.bearing.sin(),
            );
            let (ix, iy) = map.cell_of(local).expect("waypoint inside its map");
            assert_eq!(
                map.cell(ix, iy),
                CellCost::Free,
                "waypoint {} in non-free cell", w.id
            );
            let brute: f64 = occupied
                .iter()
                .map(|&(ox, oy)| {
                    let c = map.cell_center(ix, iy);
                    (c.0 - ox).hypot(c.1 - oy)
                })
                .fold(f64::INFINITY, f64::min);
            assert!(
                brute >= 0.25,
                "waypoint {} clearance {brute} below 0.25 (brute force)",
                w.id
            );
            for other in &wps[i + 1..] {
                let d = (w.world_xy.0 - other.world_xy.0)
                    .hypot(w.world_xy.1 - other.world_xy.1);
                assert!(d >= 0.5 - 1e-9, "separation {d} below 0.5");
            }
        }
    }
    let mean_ms = 1000.0 * total_time / scans_done as f64;
    assert!(
        mean_ms <= 50.0,
        "mean clustering time {mean_ms:.2} ms exceeds 50 ms"
    );
    println!(
        "ACCEPTANCE 4 PASS — {waypoints_seen} waypoints over {scans_done} scans all free/clear/separated; mean {mean_ms:.2} ms per scan"
    );
}

// ---------------------------------------------------------------------------
// Criterion 5: controller split on the deadlock fixtures.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_5_controller_fixtures() {
    let kin = KinematicsConfig::default();
    let run_suite = || {
        let mut planned_ok = 0usize;
        let mut tryout_ok = 0usize;
        let mut traces = Vec::new();
        for case in fixtures::deadlock_suite() {
            let p = planned_controller(
                &case.world,
                case.start,
                case.goal,
                &PlannedParams::default(),
                &kin,
                kin.max_steps,
            );
            let t = tryout_controller(
                &case.world,
                case.start,
                case.goal,
                &TryoutConfig::default(),
                &kin,
                kin.max_steps,
            );
            if p.reached {
                planned_ok += 1;
            }
            if t.reached {
                tryout_ok += 1;
            }
            traces.push((p.actions, t.actions));
        }
        (planned_ok, tryout_ok, traces)
    };
    let (planned_ok, tryout_ok, traces) = run_suite();
    let n = fixtures::deadlock_suite().len();
    assert_eq!(planned_ok, n, "planned controller must solve every fixture");
    assert!(
        tryout_ok < n,
        "tryout must fail somewhere on the fixture suite"
    );
    // Both controllers are deterministic: a rerun replays identical actions.
    let (p2, t2, traces2) = run_suite();
    assert_eq!((planned_ok, tryout_ok), (p2, t2));
    assert_eq!(traces, traces2);
    println!(
        "ACCEPTANCE 5 PASS — planned {planned_ok}/{n}, tryout {tryout_ok}/{n}, both deterministic"
    );
}

// ---------------------------------------------------------------------------
// Criterion 6: metric identities.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_6_metric_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let mut random_case = |id: usize| {
        let goal = (rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0));
        let mut log = TrajectoryLog::new(
            format!("m{id}"),
            Pose2D::new(0.0, 0.0, 0.0).unwrap(),
        );
        for _ in 0..rng.random_range(0..10usize) {
            log.push(
                NavAction::Forward,
                Pose2D::new(
                    rng.random_range(-6.0..6.0),
                    rng.random_range(-6.0..6.0),
                    0.0,
                )
                .unwrap(),
                false,
            );
        }
        if rng.random::<f64>() < 0.7 {
            let last = log.final_pose();
            log.push(NavAction::Stop, last, false);
            log.stopped = true;
        }
        let spec = EpisodeSpec {
            id: format!("m{id}"),
            world_id: "w".into(),
            start: log.poses[0],
            goal,
            instruction: String::new(),
            shortest_path_length: rng.random_range(0.1..10.0),
        };
        (log, spec)
    };

    let cases: Vec<_> = (0..10_000).map(&mut random_case).collect();
    for (log, spec) in &cases {
        let sdt = 0.5 + (log.steps() % 7) as f64 * 0.5;
        let m = compute(log, spec, sdt).unwrap();
        let b = |x: bool| x as i32 as f64;
        assert!(m.spl <= b(m.sr) + 1e-12);
        assert!(b(m.sr) <= b(m.osr));
    }

    // Aggregate monotonicity over the default sweep.
    let subset: Vec<(&TrajectoryLog, &EpisodeSpec)> = cases
        .iter()
        .take(300)
        .map(|(l, s)| (l, s))
        .collect();
    let rows = sdt_sweep(&subset, &DEFAULT_SDT_SWEEP).unwrap();
    for w in rows.windows(2) {
        assert!(w[1].1.sr_pct >= w[0].1.sr_pct - 1e-12);
        assert!(w[1].1.osr_pct >= w[0].1.osr_pct - 1e-12);
        assert!(w[1].1.spl_pct >= w[0].1.spl_pct - 1e-12);
    }
    // The sweep agrees with independent per-threshold recomputation.
    for (sdt, summary) in &rows {
        let per: Vec<_> = subset
            .iter()
            .map(|(l, s)| compute(l, s, *sdt).unwrap())
            .collect();
        let direct = aggregate(&per).unwrap();
        assert!((direct.sr_pct - summary.sr_pct).abs() < 1e-9);
        assert!((direct.spl_pct - summary.spl_pct).abs() < 1e-9);
        assert!((direct.mean_tl - summary.mean_tl).abs() < 1e-9);
    }

    // Hand-computed fixture triple at 1e-9 (worked by hand: means over
    // tl {4,1,0}, ne {0.5,4,2}, sr {1,0,1}, spl {0.75,0,1}).
    let mk = |points: &[(f64, f64)], stop: bool| {
        let mut log =
            TrajectoryLog::new("h", Pose2D::new(points[0].0, points[0].1, 0.0).unwrap());
        for &(x, y) in &points[1..] {
            log.push(NavAction::Forward, Pose2D::new(x, y, 0.0).unwrap(), false);
        }
        if stop {
            let last = log.final_pose();
            log.push(NavAction::Stop, last, false);
            log.stopped = true;
        }
        log
    };
    let spec_for = |goal: (f64, f64), l: f64| EpisodeSpec {
        id: "h".into(),
        world_id: "w".into(),
        start: Pose2D::new(0.0, 0.0, 0.0).unwrap(),
        goal,
        instruction: String::new(),
        shortest_path_length: l,
    };
    let triple = vec![
        compute(&mk(&[(0.0, 0.0), (0.0, 3.75), (0.0, 3.5)], true), &spec_for((0.0, 3.0), 3.0), 3.0)
            .unwrap(),
        compute(&mk(&[(0.0, 0.0), (0.0, 0.5), (0.0, 1.0)], true), &spec_for((0.0, 5.0), 5.0), 3.0)
            .unwrap(),
        compute(&mk(&[(0.0, 0.0)], true), &spec_for((0.0, 2.0), 2.0), 3.0).unwrap(),
    ];
    let s = aggregate(&triple).unwrap();
    assert!((s.mean_tl - 5.0 / 3.0).abs() < 1e-9);
    assert!((s.mean_ne - 6.5 / 3.0).abs() < 1e-9);
    assert!((s.sr_pct - 200.0 / 3.0).abs() < 1e-9);
    assert!((s.spl_pct - 175.0 / 3.0).abs() < 1e-9);

    println!("ACCEPTANCE 6 PASS — spl ≤ sr ≤ osr on 10k random logs; sweep monotone and re-derivable; hand fixtures match at 1e-9");
}

// ---------------------------------------------------------------------------
// Criterion 7: byte-identical reruns.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_7_determinism() {
    let cfg = RunConfig {
        worlds: vec![
            desknav::harness::WorldBatch {
                kind: WorldKind::Open,
                count: 1,
            },
            desknav::harness::WorldBatch {
                kind: WorldKind::Trap,
                count: 1,
            },
        ],
        episodes_per_world: 3,
        modes: vec![AgentMode::PlannerOnly, AgentMode::Fused],
        tau: TauSource::Calibrate {
            epsilon: 0.1,
            episodes_per_world: 3,
        },
        ..RunConfig::default()
    };
    let base = std::env::temp_dir().join(format!("desknav-acc7-{}", std::process::id()));
    let dir_a = base.join("a");
    let dir_b = base.join("b");
    let _ = std::fs::remove_dir_all(&base);

    let report_a = run_benchmark(&cfg).unwrap();
    write_outputs(&report_a, &cfg, &dir_a).unwrap();
    let report_b = run_benchmark(&cfg).unwrap();
    write_outputs(&report_b, &cfg, &dir_b).unwrap();

    fn walk(dir: &std::path::Path, base: &std::path::Path, out: &mut Vec<String>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(&path, base, out);
            } else {
                out.push(
                    path.strip_prefix(base)
                        .unwrap()
                        .to_string_lossy()
                        .into_owned(),
                );
            }
        }
    }
    let mut files_a = Vec::new();
    walk(&dir_a, &dir_a, &mut files_a);
    files_a.sort();
    let mut files_b = Vec::new();
    walk(&dir_b, &dir_b, &mut files_b);
    files_b.sort();
    assert_eq!(files_a, files_b, "run output file sets differ");
    assert!(files_a.iter().any(|f| f.ends_with("report.txt")));
    assert!(files_a.len() > 10);
    for rel in &files_a {
        let a = std::fs::read(dir_a.join(rel)).unwrap();
        let b = std::fs::read(dir_b.join(rel)).unwrap();
        assert_eq!(a, b, "file {rel} differs between identical runs");
    }
    let n = files_a.len();
    let _ = std::fs::remove_dir_all(&base);
    println!("ACCEPTANCE 7 PASS — two identical runs produced {n} byte-identical files");
}
