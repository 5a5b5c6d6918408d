//! Utility model and the per-overlay-link primal-subgradient-dual rate update.

/// Logarithmic utility `beta * ln(z + delta)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UtilityParams {
    pub beta: f64,
    /// kbps; keeps the derivative bounded by `beta / delta`.
    pub delta: f64,
}

impl Default for UtilityParams {
    fn default() -> Self {
        Self {
            beta: 60.0,
            delta: 20.0,
        }
    }
}

impl UtilityParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(format!("beta must be positive, got {}", self.beta));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(format!("delta must be positive, got {}", self.delta));
        }
        Ok(())
    }

    /// Upper bound on the derivative over `z >= 0`.
    pub fn max_deriv(&self) -> f64 {
        self.beta / self.delta
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlParams {
    /// Step size per rate-control tick.
    pub alpha: f64,
    /// ms
    pub delay_bound: f64,
    /// ms
    pub rate_interval: f64,
    /// ms
    pub report_interval: f64,
    /// s
    pub quickstart_duration: f64,
    pub quickstart_beta_mult: f64,
    pub quickstart_alpha_mult: f64,
}

impl Default for ControlParams {
    fn default() -> Self {
        Self {
            alpha: 10.0,
            delay_bound: 200.0,
            rate_interval: 200.0,
            report_interval: 300.0,
            quickstart_duration: 30.0,
            quickstart_beta_mult: 2.0,
            quickstart_alpha_mult: 4.0,
        }
    }
}

impl ControlParams {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("alpha", self.alpha),
            ("delay_bound", self.delay_bound),
            ("rate_interval", self.rate_interval),
            ("report_interval", self.report_interval),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if self.quickstart_duration.is_nan() || self.quickstart_duration < 0.0 {
            return Err(format!(
                "quickstart_duration must be nonnegative, got {}",
                self.quickstart_duration
            ));
        }
        for (name, v) in [
            ("quickstart_beta_mult", self.quickstart_beta_mult),
            ("quickstart_alpha_mult", self.quickstart_alpha_mult),
        ] {
            if !(v >= 1.0 && v.is_finite()) {
                return Err(format!("{name} must be at least 1, got {v}"));
            }
        }
        Ok(())
    }
}

pub fn utility(z: f64, p: &UtilityParams) -> f64 {
    p.beta * (z + p.delta).ln()
}

pub fn utility_deriv(z: f64, p: &UtilityParams) -> f64 {
    p.beta / (z + p.delta)
}

/// One rate-control step on a single (session, overlay link) pair.
///
/// The candidate `c + alpha * (u' * xi - loss - queue_delay)` is projected
/// only when the current rate is already nonpositive, so an iterate may dip
/// below zero for one step; consumers clamp at export.
pub fn rate_update(
    c: f64,
    is_cut_edge: bool,
    u_deriv: f64,
    loss: f64,
    queue_delay_s: f64,
    alpha: f64,
) -> f64 {
    let xi = if is_cut_edge { 1.0 } else { 0.0 };
    let b = c + alpha * (u_deriv * xi - loss - queue_delay_s);
    project(b, c)
}

/// `[b]^+_a`: `max(0, b)` if `a <= 0`, else `b`.
pub fn project(b: f64, a: f64) -> f64 {
    if a <= 0.0 {
        b.max(0.0)
    } else {
        b
    }
}

/// Effective `(alpha, beta)` at time `t` seconds; boosted on `[0, duration)`.
pub fn quickstart_params(t: f64, base: &ControlParams, u: &UtilityParams) -> (f64, f64) {
    if t < base.quickstart_duration {
        (
            base.alpha * base.quickstart_alpha_mult,
            u.beta * base.quickstart_beta_mult,
        )
    } else {
        (base.alpha, u.beta)
    }
}
