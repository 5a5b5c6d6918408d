//! Log-barrier interior-point method for small concave programs of the form
//!
//! maximize  sum_k w_k ln(g_k . x + delta_k)
//! s.t.      a_i . x <= b_i,  x >= 0.
//!
//! Rows are sparse; the Newton systems are dense and tiny.

use nalgebra::{DMatrix, DVector};

use super::OracleError;

/// Sparse row `sum coef * x[idx]`.
pub type SparseRow = Vec<(usize, f64)>;

#[derive(Clone, Debug, Default)]
pub struct Program {
    pub num_vars: usize,
    /// `(weight, row, delta)` objective terms.
    pub objective: Vec<(f64, SparseRow, f64)>,
    pub constraints: Vec<(SparseRow, f64)>,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub x: Vec<f64>,
    /// Multipliers of `constraints`, in objective units per unit of slack.
    pub duals: Vec<f64>,
}

fn dot(row: &SparseRow, x: &[f64]) -> f64 {
    row.iter().map(|&(i, a)| a * x[i]).sum()
}

impl Program {
    pub fn add_var(&mut self) -> usize {
        self.num_vars += 1;
        self.num_vars - 1
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.objective
            .iter()
            .map(|(w, g, d)| w * (dot(g, x) + d).ln())
            .sum()
    }

    fn strictly_feasible(&self, x: &[f64]) -> bool {
        x.iter().all(|&v| v > 0.0)
            && self.constraints.iter().all(|(a, b)| b - dot(a, x) > 0.0)
            && self.objective.iter().all(|(_, g, d)| dot(g, x) + d > 0.0)
    }

    fn barrier(&self, x: &[f64], t: f64) -> f64 {
        let mut v = t * self.value(x);
        for (a, b) in &self.constraints {
            v += (b - dot(a, x)).ln();
        }
        v + x.iter().map(|xi| xi.ln()).sum::<f64>()
    }

    /// Solves from the strictly feasible point `x0` until the barrier gap is
    /// below `gap_tol` (objective units).
    pub fn solve(&self, x0: Vec<f64>, gap_tol: f64) -> Result<Solution, OracleError> {
        let n = self.num_vars;
        if n == 0 {
            return Ok(Solution {
                x: vec![],
                duals: vec![0.0; self.constraints.len()],
            });
        }
        if x0.len() != n || !self.strictly_feasible(&x0) {
            return Err(OracleError::Solver("starting point is not strictly feasible".into()));
        }
        let barrier_terms = (self.constraints.len() + n) as f64;
        let mut x = x0;
        let mut t = 1.0;
        loop {
            self.centre(&mut x, t)?;
            if barrier_terms / t < gap_tol {
                break;
            }
            t *= 10.0;
        }
        let duals = self
            .constraints
            .iter()
            .map(|(a, b)| 1.0 / (t * (b - dot(a, &x))))
            .collect();
        Ok(Solution {
            x,
            duals,
        })
    }

    /// Damped Newton iterations on the barrier function at fixed `t`.
    fn centre(&self, x: &mut Vec<f64>, t: f64) -> Result<(), OracleError> {
        let n = self.num_vars;
        for _ in 0..200 {
            let mut grad = DVector::<f64>::zeros(n);
            // Negated Hessian, positive definite.
            let mut h = DMatrix::<f64>::zeros(n, n);
            for (w, g, d) in &self.objective {
                let u = dot(g, x) + d;
                for &(i, gi) in g {
                    grad[i] += t * w * gi / u;
                    for &(j, gj) in g {
                        h[(i, j)] += t * w * gi * gj / (u * u);
                    }
                }
            }
            for (a, b) in &self.constraints {
                let s = b - dot(a, x);
                for &(i, ai) in a {
                    grad[i] -= ai / s;
                    for &(j, aj) in a {
                        h[(i, j)] += ai * aj / (s * s);
                    }
                }
            }
            for i in 0..n {
                grad[i] += 1.0 / x[i];
                h[(i, i)] += 1.0 / (x[i] * x[i]);
            }
            let dx = match h.clone().cholesky() {
                Some(ch) => ch.solve(&grad),
                None => {
                    let scale = (0..n).map(|i| h[(i, i)]).fold(0.0, f64::max);
                    let reg = &h + DMatrix::identity(n, n) * (scale * 1e-12);
                    reg.cholesky()
                        .ok_or_else(|| OracleError::Solver("singular Newton system".into()))?
                        .solve(&grad)
                }
            };
            let decrement = grad.dot(&dx);
            if !decrement.is_finite() {
                return Err(OracleError::Solver("non-finite Newton step".into()));
            }
            if decrement / 2.0 < 1e-10 {
                return Ok(());
            }
            let f0 = self.barrier(x, t);
            let mut step = 1.0;
            let mut cand: Vec<f64>;
            loop {
                cand = x.iter().zip(dx.iter()).map(|(xi, di)| xi + step * di).collect();
                if self.strictly_feasible(&cand)
                    && self.barrier(&cand, t) >= f0 + 0.25 * step * decrement
                {
                    break;
                }
                step *= 0.5;
                if step < 1e-14 {
                    // No further progress at this precision.
                    return Ok(());
                }
            }
            *x = cand;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proportional_fairness_on_one_link() {
        // max ln x0 + ln x1 + 2 ln x2 with x0 + x1 + x2 <= 4: shares 1, 1, 2.
        let mut p = Program::default();
        let v: Vec<usize> = (0..3).map(|_| p.add_var()).collect();
        for (i, w) in [(v[0], 1.0), (v[1], 1.0), (v[2], 2.0)] {
            p.objective.push((w, vec![(i, 1.0)], 0.0));
        }
        p.constraints
            .push((v.iter().map(|&i| (i, 1.0)).collect(), 4.0));
        let s = p.solve(vec![0.1; 3], 1e-9).unwrap();
        for (got, want) in s.x.iter().zip([1.0, 1.0, 2.0]) {
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
        // Marginal utility 1/1 = 2/2 = 1 per unit.
        assert!((s.duals[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn infeasible_start_rejected() {
        let mut p = Program::default();
        let x = p.add_var();
        p.objective.push((1.0, vec![(x, 1.0)], 1.0));
        p.constraints.push((vec![(x, 1.0)], 1.0));
        assert!(p.solve(vec![2.0], 1e-6).is_err());
    }
}
