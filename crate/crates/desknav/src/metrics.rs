//! Episode and aggregate evaluation: TL, NE, OSR, SR, SPL, and
//! success-distance-threshold sweeps.
//!
//! Success demands an explicit stop within the threshold — running out of
//! steps next to the goal does not count. SPL weights success by
//! `l / max(tl, l)` with `l` the precomputed shortest-path length, so it can
//! never exceed SR and degrades as the executed route stretches past the
//! optimum.

use crate::common::EpisodeSpec;
use crate::sim::TrajectoryLog;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("episode {0}: shortest path length must be positive")]
    InvalidSpec(String),
    #[error("cannot aggregate an empty metrics list")]
    EmptyList,
    #[error("thresholds must be positive and ascending")]
    BadThresholds,
}

/// Default success-distance-threshold sweep, in meters.
pub const DEFAULT_SDT_SWEEP: [f64; 5] = [1.0, 1.5, 2.0, 2.5, 3.0];

/// Default success distance threshold, in meters.
pub const DEFAULT_SDT: f64 = 3.0;

/// Per-episode evaluation at one success distance threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    /// Trajectory length: sum of consecutive pose distances, meters.
    pub tl: f64,
    /// Navigation error: final pose to goal, meters.
    pub ne: f64,
    /// Oracle success: any pose on the path came within the threshold.
    pub osr: bool,
    /// Success: stopped within the threshold.
    pub sr: bool,
    /// Success weighted by inverse path length.
    pub spl: f64,
    /// Threshold used, meters.
    pub sdt: f64,
}

/// Evaluate one trajectory against its episode spec.
pub fn compute(
    log: &TrajectoryLog,
    spec: &EpisodeSpec,
    sdt: f64,
) -> Result<EpisodeMetrics, MetricsError> {
    let l = spec.shortest_path_length;
    if l <= 0.0 || l.is_nan() {
        return Err(MetricsError::InvalidSpec(spec.id.clone()));
    }
    let tl = log.total_length();
    let ne = log.final_pose().distance_to(spec.goal);
    let sr = log.stopped && ne <= sdt;
    let osr = log
        .poses
        .iter()
        .any(|p| p.distance_to(spec.goal) <= sdt);
    let spl = if sr { l / tl.max(l) } else { 0.0 };
    Ok(EpisodeMetrics {
        tl,
        ne,
        osr,
        sr,
        spl,
        sdt,
    })
}

/// Aggregate over episodes: mean lengths and errors, rates as percentages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub episodes: usize,
    pub mean_tl: f64,
    pub mean_ne: f64,
    pub osr_pct: f64,
    pub sr_pct: f64,
    pub spl_pct: f64,
}

pub fn aggregate(metrics: &[EpisodeMetrics]) -> Result<Summary, MetricsError> {
    if metrics.is_empty() {
        return Err(MetricsError::EmptyList);
    }
    let n = metrics.len() as f64;
    Ok(Summary {
        episodes: metrics.len(),
        mean_tl: metrics.iter().map(|m| m.tl).sum::<f64>() / n,
        mean_ne: metrics.iter().map(|m| m.ne).sum::<f64>() / n,
        osr_pct: 100.0 * metrics.iter().filter(|m| m.osr).count() as f64 / n,
        sr_pct: 100.0 * metrics.iter().filter(|m| m.sr).count() as f64 / n,
        spl_pct: 100.0 * metrics.iter().map(|m| m.spl).sum::<f64>() / n,
    })
}

/// One aggregate row per threshold over the same logs.
pub fn sdt_sweep(
    episodes: &[(&TrajectoryLog, &EpisodeSpec)],
    thresholds: &[f64],
) -> Result<Vec<(f64, Summary)>, MetricsError> {
    let ascending = thresholds.windows(2).all(|w| w[0] < w[1]);
    if thresholds.is_empty() || thresholds[0] <= 0.0 || !ascending {
        return Err(MetricsError::BadThresholds);
    }
    let mut rows = Vec::with_capacity(thresholds.len());
    for &sdt in thresholds {
        let per: Result<Vec<_>, _> = episodes
            .iter()
            .map(|(log, spec)| compute(log, spec, sdt))
            .collect();
        rows.push((sdt, aggregate(&per?)?));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::common::{NavAction, Pose2D};

    fn spec(goal: (f64, f64), l: f64) -> EpisodeSpec {
        EpisodeSpec {
            id: "e".into(),
            world_id: "w".into(),
            start: Pose2D::new(0.0, 0.0, 0.0).unwrap(),
            goal,
            instruction: String::new(),
            shortest_path_length: l,
        }
    }

    fn log_through(points: &[(f64, f64)], stopped: bool) -> TrajectoryLog {
        let mut log = TrajectoryLog::new("e", Pose2D::new(points[0].0, points[0].1, 0.0).unwrap());
        for &(x, y) in &points[1..] {
            log.push(NavAction::Forward, Pose2D::new(x, y, 0.0).unwrap(), false);
        }
        if stopped {
            let last = log.final_pose();
            log.push(NavAction::Stop, last, false);
            log.stopped = true;
        }
        log
    }

    #[test]
    fn perfect_episode_scores_one() {
        let spec = spec((0.0, 3.0), 3.0);
        let log = log_through(&[(0.0, 0.0), (0.0, 1.5), (0.0, 3.0)], true);
        let m = compute(&log, &spec, 3.0).unwrap();
        assert_eq!(m.ne, 0.0);
        assert!(m.sr && m.osr);
        assert!((m.spl - 1.0).abs() < 1e-12);
        assert!((m.tl - 3.0).abs() < 1e-12);
    }

    #[test]
    fn never_moving_far_from_goal_scores_zero() {
        let spec = spec((5.0, 0.0), 5.0);
        let log = log_through(&[(0.0, 0.0)], true);
        let m = compute(&log, &spec, 3.0).unwrap();
        assert_eq!(m.tl, 0.0);
        assert_eq!(m.ne, 5.0);
        assert!(!m.sr && !m.osr);
        assert_eq!(m.spl, 0.0);
    }

    #[test]
    fn oracle_success_without_success() {
        // Passes 2 m from the goal mid-route, stops 4 m away.
        let spec = spec((0.0, 4.0), 4.0);
        let log = log_through(&[(0.0, 0.0), (2.0, 4.0), (4.0, 4.0)], true);
        let m = compute(&log, &spec, 3.0).unwrap();
        assert!(m.osr, "mid-route pass within threshold must set OSR");
        assert!(!m.sr);
        assert_eq!(m.spl, 0.0);
    }

    #[test]
    fn success_requires_an_explicit_stop() {
        let spec = spec((0.0, 1.0), 1.0);
        let wandering = log_through(&[(0.0, 0.0), (0.0, 1.0)], false);
        let m = compute(&wandering, &spec, 3.0).unwrap();
        assert!(m.osr && !m.sr, "no stop, no success");
    }

    #[test]
    fn rejects_zero_length_shortest_path() {
        let spec = spec((1.0, 0.0), 0.0);
        let log = log_through(&[(0.0, 0.0)], true);
        assert!(compute(&log, &spec, 3.0).is_err());
    }

    #[test]
    fn aggregate_single_and_split() {
        let spec1 = spec((0.0, 3.0), 3.0);
        let log1 = log_through(&[(0.0, 0.0), (0.0, 3.0)], true);
        let m1 = compute(&log1, &spec1, 3.0).unwrap();
        let s = aggregate(&[m1]).unwrap();
        assert_eq!(s.episodes, 1);
        assert_eq!(s.sr_pct, 100.0);
        assert!((s.mean_tl - m1.tl).abs() < 1e-12);

        let spec2 = spec((9.0, 0.0), 9.0);
        let log2 = log_through(&[(0.0, 0.0)], true);
        let m2 = compute(&log2, &spec2, 3.0).unwrap();
        let s = aggregate(&[m1, m2]).unwrap();
        assert_eq!(s.sr_pct, 50.0);
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn hand_computed_triple_matches_spreadsheet_arithmetic() {
        // Episode 1: overshoot and come back. tl 4, ne 0.5, sr 1, spl 0.75.
        let s1 = spec((0.0, 3.0), 3.0);
        let l1 = log_through(&[(0.0, 0.0), (0.0, 3.75), (0.0, 3.5)], true);
        // Episode 2: stops 4 m short. tl 1, ne 4, sr 0, osr 0.
        let s2 = spec((0.0, 5.0), 5.0);
        let l2 = log_through(&[(0.0, 0.0), (0.0, 0.5), (0.0, 1.0)], true);
        // Episode 3: immediate stop already within threshold. tl 0, spl 1.
        let s3 = spec((0.0, 2.0), 2.0);
        let l3 = log_through(&[(0.0, 0.0)], true);

        let ms = vec![
            compute(&l1, &s1, 3.0).unwrap(),
            compute(&l2, &s2, 3.0).unwrap(),
            compute(&l3, &s3, 3.0).unwrap(),
        ];
        let s = aggregate(&ms).unwrap();
        assert!((s.mean_tl - 5.0 / 3.0).abs() < 1e-9);
        assert!((s.mean_ne - 6.5 / 3.0).abs() < 1e-9);
        assert!((s.sr_pct - 200.0 / 3.0).abs() < 1e-9);
        assert!((s.osr_pct - 200.0 / 3.0).abs() < 1e-9);
        assert!((s.spl_pct - 175.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn sweep_is_monotone_and_validates_thresholds() {
        let s1 = spec((0.0, 2.2), 2.2);
        let l1 = log_through(&[(0.0, 0.0), (0.0, 1.0)], true); // ne 1.2
        let s2 = spec((0.0, 5.0), 5.0);
        let l2 = log_through(&[(0.0, 0.0), (0.0, 2.4)], true); // ne 2.6
        let episodes = vec![(&l1, &s1), (&l2, &s2)];
        let rows = sdt_sweep(&episodes, &DEFAULT_SDT_SWEEP).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].1.sr_pct >= w[0].1.sr_pct);
            assert!(w[1].1.osr_pct >= w[0].1.osr_pct);
            assert!(w[1].1.spl_pct >= w[0].1.spl_pct - 1e-12);
        }
        // Below every achieved NE the success rate is zero.
        let tiny = sdt_sweep(&episodes, &[0.5]).unwrap();
        assert_eq!(tiny[0].1.sr_pct, 0.0);

        assert!(sdt_sweep(&episodes, &[2.0, 1.0]).is_err());
        assert!(sdt_sweep(&episodes, &[]).is_err());
        assert!(sdt_sweep(&episodes, &[-1.0, 1.0]).is_err());
    }

    #[test]
    fn ordering_invariant_spl_le_sr_le_osr() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..500 {
            let goal = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let n = rng.random_range(1..8);
            let mut pts = vec![(0.0, 0.0)];
            for _ in 0..n {
                pts.push((rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)));
            }
            let stopped = rng.random::<f64>() < 0.7;
            let log = log_through(&pts, stopped);
            let spec = spec(goal, rng.random_range(0.1..8.0));
            let sdt = rng.random_range(0.5..4.0);
            let m = compute(&log, &spec, sdt).unwrap();
            let as_num = |b: bool| if b { 1.0 } else { 0.0 };
            assert!(m.spl <= as_num(m.sr) + 1e-12);
            assert!(as_num(m.sr) <= as_num(m.osr));
            assert!((0.0..=1.0).contains(&m.spl));
        }
    }

    #[test]
    fn spl_invariant_under_reparameterization() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for _ in 0..200 {
            let goal = (rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0));
            let mut pts = vec![(0.0, 0.0)];
            for _ in 0..4 {
                pts.push((rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)));
            }
            let spec = spec(goal, rng.random_range(0.5..6.0));
            let coarse = log_through(&pts, true);

            // Insert a midpoint into one segment: same endpoints, same length.
            let seg = rng.random_range(0..pts.len() - 1);
            let t: f64 = rng.random();
            let mid = (
                pts[seg].0 + t * (pts[seg + 1].0 - pts[seg].0),
                pts[seg].1 + t * (pts[seg + 1].1 - pts[seg].1),
            );
            let mut fine_pts = pts.clone();
            fine_pts.insert(seg + 1, mid);
            let fine = log_through(&fine_pts, true);

            let a = compute(&coarse, &spec, 3.0).unwrap();
            let b = compute(&fine, &spec, 3.0).unwrap();
            assert!((a.spl - b.spl).abs() < 1e-9);
            assert_eq!(a.sr, b.sr);
        }
    }
}
