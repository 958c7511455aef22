//! Property-based invariants spanning the geometry, decision, and waypoint
//! layers.

use desknav::common::{
    argmax, normalize_heading, relative_to_world, world_to_relative, ActionDistribution, Pose2D,
};
use desknav::conformal::ConformalModel;
use desknav::experts::{
    build_structured_prompt, fuse_branch_logits, softmax, CandidateLogits, StepContext,
    StructuredPrompt, Suggestion,
};
use desknav::fusion::{
    decide, fuse, sparse_reasoner_distribution, FusionConfig, ReasonerVerdict,
};
use desknav::waypoint::{kmeans_detailed, nms_heatmap, NmsSuppression, WaypointHeatmap};
use proptest::prelude::*;
use std::f64::consts::{PI, TAU};

fn finite_angle() -> impl Strategy<Value = f64> {
    -1e6..1e6f64
}

fn probs(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-6..1.0f64, k).prop_map(|raw| {
        let sum: f64 = raw.iter().sum();
        raw.iter().map(|v| v / sum).collect()
    })
}

proptest! {
    #[test]
    fn normalize_lands_in_range_and_is_idempotent(angle in finite_angle()) {
        let once = normalize_heading(angle).unwrap();
        prop_assert!(once > -PI && once <= PI);
        let twice = normalize_heading(once).unwrap();
        prop_assert_eq!(once.to_bits(), twice.to_bits());
        // Congruence mod 2π.
        let k = ((angle - once) / TAU).round();
        prop_assert!((angle - once - k * TAU).abs() < 1e-6);
    }

    #[test]
    fn frame_transforms_invert(
        x in -100.0..100.0f64,
        y in -100.0..100.0f64,
        heading in -PI..PI,
        bearing in -PI..PI,
        distance in 0.0..50.0f64,
    ) {
        let pose = Pose2D::new(x, y, heading).unwrap();
        let world = relative_to_world(&pose, bearing, distance).unwrap();
        let (b, d) = world_to_relative(&pose, world);
        let back = relative_to_world(&pose, b, d).unwrap();
        prop_assert!((back.0 - world.0).hypot(back.1 - world.1) < 1e-9);
    }

    #[test]
    fn softmax_is_a_distribution_preserving_argmax(
        logits in prop::collection::vec(-30.0..30.0f64, 1..12)
    ) {
        let dist = softmax(&logits).unwrap();
        let sum: f64 = dist.probs().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        prop_assert_eq!(dist.argmax(), argmax(&logits));
    }

    #[test]
    fn blended_softmax_shift_invariant(
        local in prop::collection::vec(-10.0..10.0f64, 2..8),
        shift in -50.0..50.0f64,
        weight in 0.0..1.0f64,
    ) {
        let global: Vec<f64> = local.iter().map(|v| v * 0.5 - 1.0).collect();
        let base = CandidateLogits { local: local.clone(), global: global.clone(), weight };
        let shifted = CandidateLogits {
            local: local.iter().map(|v| v + shift).collect(),
            global: global.iter().map(|v| v + shift).collect(),
            weight,
        };
        let a = softmax(&fuse_branch_logits(&base).unwrap()).unwrap();
        let b = softmax(&fuse_branch_logits(&shifted).unwrap()).unwrap();
        for i in 0..a.len() {
            prop_assert!((a.get(i).unwrap() - b.get(i).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn prediction_sets_nest_as_tau_grows(
        raw in probs(6),
        tau_lo in 0.0..1.0f64,
        bump in 0.0..1.0f64,
    ) {
        let dist = ActionDistribution::new(raw).unwrap();
        let tau_hi = (tau_lo + bump).min(1.0);
        let lo = ConformalModel::fixed_tau(tau_lo, 0.1).prediction_set(&dist);
        let hi = ConformalModel::fixed_tau(tau_hi, 0.1).prediction_set(&dist);
        if !lo.is_fallback() {
            for m in lo.members() {
                prop_assert!(hi.contains(*m), "tau {} set not nested in tau {}", tau_lo, tau_hi);
            }
        }
        // The argmax belongs to every non-fallback set, and fallback sets
        // are exactly the argmax singleton.
        prop_assert!(lo.contains(dist.argmax()));
        prop_assert!(hi.contains(dist.argmax()));
    }

    #[test]
    fn fused_vector_sum_identity(
        raw in probs(5),
        alpha in 0.0..0.9f64,
        c in 0.0..1.0f64,
        chosen in 0usize..5,
    ) {
        let dist = ActionDistribution::new(raw).unwrap();
        let verdict = ReasonerVerdict { chosen, confidence: c, rationale: String::new() };
        let sparse = sparse_reasoner_distribution(&verdict, 5).unwrap();
        let fused = fuse(&dist, &sparse, alpha).unwrap();
        let sum: f64 = fused.iter().sum();
        prop_assert!((sum - ((1.0 - alpha) + alpha * c)).abs() < 1e-9);
    }

    #[test]
    fn gate_fires_iff_set_is_plural(
        raw in probs(7),
        tau in 0.0..1.0f64,
    ) {
        let dist = ActionDistribution::new(raw).unwrap();
        let model = ConformalModel::fixed_tau(tau, 0.1);
        let expected_plural = model.prediction_set(&dist).cardinality() > 1;
        let mut invoked = false;
        let out = decide(&dist, &model, &FusionConfig::default(), |set| {
            invoked = true;
            Ok(ReasonerVerdict {
                chosen: set.members()[0],
                confidence: 0.7,
                rationale: String::new(),
            })
        });
        prop_assert_eq!(invoked, expected_plural);
        prop_assert_eq!(out.reasoner_invoked, expected_plural);
        prop_assert!(out.selected < 7);
    }

    #[test]
    fn nms_picks_descend_and_respect_suppression(
        cells in prop::collection::vec((0usize..120, 0usize..12, 0.01..10.0f64), 1..40),
        p in 1usize..12,
    ) {
        let mut hm = WaypointHeatmap::zeros();
        for &(a, d, v) in &cells {
            hm.set(a, d, v);
        }
        let pose = Pose2D::new(0.0, 0.0, 0.0).unwrap();
        let sup = NmsSuppression { angle_bins: 4, distance_bins: 2 };
        let picks = nms_heatmap(&hm, &pose, p, &sup);
        prop_assert!(picks.len() <= p);
        let value_of = |w: &desknav::common::Waypoint| {
            // Recover the bin from the emitted polar coordinates.
            let abin = (0..120)
                .find(|&a| (WaypointHeatmap::bearing_of(a) - w.bearing).abs() < 1e-9)
                .unwrap();
            let dbin = ((w.distance - 0.25) / 0.25).round() as usize;
            (abin, dbin, hm.get(abin, dbin))
        };
        let decoded: Vec<(usize, usize, f64)> = picks.iter().map(value_of).collect();
        for w in decoded.windows(2) {
            prop_assert!(w[1].2 <= w[0].2 + 1e-12, "pick values must not increase");
        }
        for (i, a) in decoded.iter().enumerate() {
            for b in decoded.iter().skip(i + 1) {
                let da = {
                    let raw = (a.0 as i64 - b.0 as i64).unsigned_abs() as usize;
                    raw.min(120 - raw)
                };
                let dd = (a.1 as i64 - b.1 as i64).unsigned_abs() as usize;
                prop_assert!(
                    da > 4 || dd > 2,
                    "pick ({}, {}) inside suppression zone of ({}, {})",
                    b.0, b.1, a.0, a.1
                );
            }
        }
    }

    #[test]
    fn kmeans_center_count_and_inertia_descent(
        pts in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 1..120),
        k in 1usize..12,
        seed in 0u64..1000,
    ) {
        let unique: std::collections::HashSet<(u64, u64)> =
            pts.iter().map(|p| (p.0.to_bits(), p.1.to_bits())).collect();
        let result = kmeans_detailed(&pts, k, seed).unwrap();
        prop_assert_eq!(result.centers.len(), k.min(unique.len()));
        for w in result.inertia_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn prompt_round_trips_within_tolerances(
        polar in prop::collection::vec((0.0..3.0f64, 0.05..6.0f64), 1..10),
        sugg_p in 0.0..1.0f64,
    ) {
        use desknav::common::{CandidateSet, Waypoint, WaypointKind};
        let pose = Pose2D::new(0.0, 0.0, 0.0).unwrap();
        let wps: Vec<Waypoint> = polar
            .iter()
            .enumerate()
            .map(|(i, &(b, d))| {
                Waypoint::from_polar(i as u32 + 1, &pose, b - 1.5, d, WaypointKind::Ghost)
                    .unwrap()
            })
            .collect();
        let candidates = CandidateSet::new(wps).unwrap();
        let zero = |_: (f64, f64)| 0.0;
        let ctx = StepContext {
            instruction: "walk to the far door",
            history: &[],
            candidates: &candidates,
            pose,
            world_kind: "open",
            suggestion: Some(Suggestion { label: "g1".into(), probability: sugg_p }),
            remaining_distance: &zero,
        };
        let rendered = build_structured_prompt(&ctx).render();
        let parsed = StructuredPrompt::parse(&rendered).unwrap();
        prop_assert_eq!(parsed.candidates.len(), candidates.len());
        for (orig, back) in build_structured_prompt(&ctx)
            .candidates
            .iter()
            .zip(&parsed.candidates)
            .skip(1)
        {
            use desknav::experts::PromptCandidate;
            let (PromptCandidate::Waypoint { bearing: ob, distance: od, .. },
                 PromptCandidate::Waypoint { bearing: pb, distance: pd, .. }) = (orig, back)
            else { panic!("expected waypoints") };
            let db = normalize_heading(ob - pb).unwrap().abs();
            prop_assert!(db <= 0.5f64.to_radians() + 1e-9);
            prop_assert!((od - pd).abs() <= 0.005 + 1e-9);
        }
    }
}
