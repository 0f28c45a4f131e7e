//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use dubedit::sync::{SegmentPair, SyncPolicy};

/// Cost of factors `(f_v, f_a)` evaluated from first principles: the
/// leftover gap is closed by every admissible mechanism and the cheapest
/// wins.
pub fn oracle_cost(policy: &SyncPolicy, pair: &SegmentPair, f_v: f64, f_a: f64) -> f64 {
    let retime = |f: f64| {
        let d = 1.0 - f;
        if policy.quadratic_retime {
            policy.retime_cost_weight * d * d
        } else {
            policy.retime_cost_weight * d.abs()
        }
    };
    let video = pair.video_duration / f_v;
    let audio = pair.audio_duration / f_a;
    let closing = if audio > video {
        let short = audio - video;
        let hold = policy.hold_cost_weight * short;
        if pair.face_available {
            hold.min(policy.fill_cost_weight * short)
        } else {
            hold
        }
    } else {
        policy.hold_cost_weight * (video - audio)
    };
    retime(f_v) + retime(f_a) + closing
}

/// Brute-force minimum over a grid of factors plus every grid point's
/// exact zero-gap partner.
pub fn oracle_min(policy: &SyncPolicy, pair: &SegmentPair, step: f64) -> f64 {
    let [lo, hi] = policy.speed_bounds;
    let n = ((hi - lo) / step).round() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    grid.push(1.0);
    let (v, a) = (pair.video_duration, pair.audio_duration);
    let mut best = f64::INFINITY;
    for &x in &grid {
        for &y in &grid {
            best = best.min(oracle_cost(policy, pair, x, y));
        }
        if v > 0.0 && a > 0.0 {
            let fa = a / v * x;
            if (lo..=hi).contains(&fa) {
                best = best.min(oracle_cost(policy, pair, x, fa));
            }
            let fv = v / a * x;
            if (lo..=hi).contains(&fv) {
                best = best.min(oracle_cost(policy, pair, fv, x));
            }
        }
    }
    best
}
