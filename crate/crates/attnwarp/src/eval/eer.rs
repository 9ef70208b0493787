//! Equal error rate.
//!
//! Scores are distances: a probe is accepted when its score falls at or
//! below the decision threshold. Sweeping the threshold over the pooled
//! scores yields the deterministic operating points (FAR, FRR); dominated
//! points are discarded and the remaining frontier is convexified, which
//! models randomized thresholding between two adjacent operating points.
//! The EER is the FAR = FRR crossing of that frontier, found by linear
//! interpolation between the two bracketing points, along with the
//! correspondingly interpolated threshold.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
struct OperatingPoint {
    threshold: f64,
    far: f64,
    frr: f64,
}

fn sorted(scores: &[f64]) -> Vec<f64> {
    let mut v = scores.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Fraction of `sorted_scores` at or below `t`.
fn frac_le(sorted_scores: &[f64], t: f64) -> f64 {
    let n = sorted_scores.partition_point(|&s| s <= t);
    n as f64 / sorted_scores.len() as f64
}

fn operating_points(genuine: &[f64], forgery: &[f64]) -> Vec<OperatingPoint> {
    let g = sorted(genuine);
    let f = sorted(forgery);
    let mut pooled: Vec<f64> = g.iter().chain(f.iter()).copied().collect();
    pooled.sort_by(f64::total_cmp);
    pooled.dedup();

    let mut ops = Vec::with_capacity(pooled.len() + 1);
    // Reject-everything pseudo-threshold below the smallest score.
    ops.push(OperatingPoint {
        threshold: pooled[0] - 1.0,
        far: 0.0,
        frr: 1.0,
    });
    for &t in &pooled {
        ops.push(OperatingPoint {
            threshold: t,
            far: frac_le(&f, t),
            frr: 1.0 - frac_le(&g, t),
        });
    }
    ops
}

/// Undominated operating points with strictly increasing FAR and strictly
/// decreasing FRR, convexified toward the origin.
fn frontier(mut ops: Vec<OperatingPoint>) -> Vec<OperatingPoint> {
    ops.sort_by(|a, b| {
        a.far
            .total_cmp(&b.far)
            .then(a.frr.total_cmp(&b.frr))
            .then(a.threshold.total_cmp(&b.threshold))
    });
    let mut pareto: Vec<OperatingPoint> = Vec::new();
    for op in ops {
        match pareto.last() {
            Some(last) if op.frr >= last.frr => {}
            _ => pareto.push(op),
        }
    }
    let mut hull: Vec<OperatingPoint> = Vec::new();
    for op in pareto {
        while hull.len() >= 2 {
            let o = hull[hull.len() - 2];
            let a = hull[hull.len() - 1];
            let cross = (a.far - o.far) * (op.frr - o.frr) - (a.frr - o.frr) * (op.far - o.far);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(op);
    }
    hull
}

/// Equal error rate and its threshold for two non-empty score lists
/// (lower score = more genuine).
pub fn compute_eer(genuine: &[f64], forgery: &[f64]) -> Result<(f64, f64)> {
    if genuine.is_empty() {
        return Err(Error::EmptyScoreList("genuine"));
    }
    if forgery.is_empty() {
        return Err(Error::EmptyScoreList("forgery"));
    }
    if !genuine.iter().chain(forgery).all(|v| v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let hull = frontier(operating_points(genuine, forgery));
    // far - frr is strictly increasing along the frontier, from -1 at the
    // reject-everything point to +1 or a separable 0.
    let mut prev = hull[0];
    let mut prev_d = prev.far - prev.frr;
    if prev_d >= 0.0 {
        return Ok((prev.far.max(prev.frr), prev.threshold));
    }
    for &op in &hull[1..] {
        let d = op.far - op.frr;
        if d >= 0.0 {
            let lambda = -prev_d / (d - prev_d);
            let eer = prev.far + lambda * (op.far - prev.far);
            let threshold = prev.threshold + lambda * (op.threshold - prev.threshold);
            return Ok((eer, threshold));
        }
        prev = op;
        prev_d = d;
    }
    // Unreachable: accepting everything always yields far 1, frr 0.
    Ok((prev.far.max(prev.frr), prev.threshold))
}

/// Exhaustive fine-grid threshold sweep, the brute-force reference for
/// [`compute_eer`]: decision rules are all pairs of deterministic thresholds
/// mixed with a weight swept over a grid of `n_genuine + n_forgery` steps,
/// and the result is the smallest achievable max(FAR, FRR). The grid
/// quantization bounds its error against the exact crossing by
/// 0.5 / (n_genuine + n_forgery).
pub fn sweep_eer(genuine: &[f64], forgery: &[f64]) -> Result<f64> {
    if genuine.is_empty() || forgery.is_empty() {
        return Err(Error::EmptyScoreList("sweep"));
    }
    let ops = operating_points(genuine, forgery);
    let steps = genuine.len() + forgery.len();
    let mut best = f64::INFINITY;
    for a in &ops {
        for b in &ops {
            for i in 0..=steps {
                let lambda = i as f64 / steps as f64;
                let far = a.far + lambda * (b.far - a.far);
                let frr = a.frr + lambda * (b.frr - a.frr);
                best = best.min(far.max(frr));
            }
        }
    }
    Ok(best)
}
