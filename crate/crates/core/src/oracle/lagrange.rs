//! Lagrange function of the penalized problem and averaged-value diagnostics
//! for controller trajectories.

use super::central::Instance;
use super::OracleError;
use crate::control::{utility, UtilityParams};
use crate::overlay::{build_session_graph, link_load, RateAllocation};
use crate::treepack::min_min_cut;

/// Closed form of the loss integral `int_0^y (z - C)^+ / z dz`.
pub fn loss_penalty(y: f64, capacity: f64) -> f64 {
    if y > capacity {
        (y - capacity) - capacity * (y / capacity).ln()
    } else {
        0.0
    }
}

/// Session rates implied by an allocation; unreachable receivers give 0.
pub fn session_rates(inst: &Instance, c: &RateAllocation) -> Vec<f64> {
    inst.sessions
        .iter()
        .map(|s| {
            build_session_graph(s, c, &inst.prop_delays, inst.delay_bound)
                .map_or(0.0, |g| min_min_cut(&g).0)
        })
        .collect()
}

/// `sum U(R) - sum penalty(y) - sum p (y - C)` over up links. Prices are in
/// utils per kbps (equivalently, seconds of queuing delay).
pub fn lagrangian(
    inst: &Instance,
    c: &RateAllocation,
    p: &[f64],
    utilities: &[UtilityParams],
) -> f64 {
    let rates = session_rates(inst, c);
    let utils: f64 = rates.iter().zip(utilities).map(|(&r, u)| utility(r, u)).sum();
    let y = link_load(inst.graph, c, &inst.routes);
    let mut cost = 0.0;
    for l in inst.graph.links().iter().filter(|l| l.up) {
        let yl = y[l.id.0];
        cost += loss_penalty(yl, l.capacity) + p[l.id.0] * (yl - l.capacity);
    }
    utils - cost
}

/// Controller state at one rate-control iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryPoint {
    pub c: RateAllocation,
    /// Per-link price in seconds.
    pub p: Vec<f64>,
    /// Norm of the projected primal step direction taken at this iteration.
    pub primal_norm: f64,
    /// Norm of the projected dual step direction `[y - C]^+_p`, in kbps.
    pub dual_norm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Saddle {
    pub c: RateAllocation,
    pub p: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceDiagnostics {
    pub k: usize,
    pub avg_lagrangian: f64,
    pub saddle_estimate: f64,
    pub bound_low: f64,
    pub bound_high: f64,
}

impl ConvergenceDiagnostics {
    pub fn gap(&self) -> f64 {
        self.avg_lagrangian - self.saddle_estimate
    }
}

/// Step sizes of the run, needed to instantiate the bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct StepSizes {
    pub alpha: f64,
    /// Per-link dual step per iteration, indexed by link id.
    pub gamma: Vec<f64>,
}

fn alloc_dist2(a: &RateAllocation, b: &RateAllocation) -> f64 {
    let mut d = 0.0;
    for (m, e, x) in a.iter() {
        d += (x - b.get(m, e)).powi(2);
    }
    for (m, e, x) in b.iter() {
        if !a.contains(m, e) {
            d += x * x;
        }
    }
    d
}

/// Averages the Lagrangian over the first `k` points and checks it against
/// the two-sided bound
/// `-B1/(2 alpha k) - D^2 alpha/2 <= avg - G* <= B2/(2k) + D^2 g/2`
/// with `B1 = |c0 - c*|^2`, `B2 = sum (p0 - p*)^2 / gamma`, `g = max gamma`
/// and `D` the largest observed step direction norm.
pub fn track_convergence(
    inst: &Instance,
    trajectory: &[TrajectoryPoint],
    saddle: &Saddle,
    utilities: &[UtilityParams],
    steps: &StepSizes,
    k: usize,
) -> Result<ConvergenceDiagnostics, OracleError> {
    if trajectory.is_empty() || k == 0 || k > trajectory.len() {
        return Err(OracleError::Solver(format!(
            "need 1 <= k <= {}, got {k}",
            trajectory.len()
        )));
    }
    let points = &trajectory[..k];
    let avg: f64 = points
        .iter()
        .map(|pt| lagrangian(inst, &pt.c, &pt.p, utilities))
        .sum::<f64>()
        / k as f64;
    let g_star = lagrangian(inst, &saddle.c, &saddle.p, utilities);
    let delta = points
        .iter()
        .map(|pt| pt.primal_norm.max(pt.dual_norm))
        .fold(0.0, f64::max);
    let first = &points[0];
    let b1 = alloc_dist2(&first.c, &saddle.c);
    let mut b2 = 0.0;
    let mut g_max: f64 = 0.0;
    for l in inst.graph.links().iter().filter(|l| l.up) {
        let gamma = steps.gamma[l.id.0];
        b2 += (first.p[l.id.0] - saddle.p[l.id.0]).powi(2) / gamma;
        g_max = g_max.max(gamma);
    }
    let kf = k as f64;
    let diag = ConvergenceDiagnostics {
        k,
        avg_lagrangian: avg,
        saddle_estimate: g_star,
        bound_low: -b1 / (2.0 * steps.alpha * kf) - delta * delta * steps.alpha / 2.0,
        bound_high: b2 / (2.0 * kf) + delta * delta * g_max / 2.0,
    };
    let gap = diag.gap();
    if gap < diag.bound_low || gap > diag.bound_high {
        return Err(OracleError::BoundViolation {
            k,
            gap,
            low: diag.bound_low,
            high: diag.bound_high,
        });
    }
    Ok(diag)
}
