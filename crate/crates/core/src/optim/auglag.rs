//! Augmented Lagrangian for smooth equality constraints over a box.
//!
//! Constraints come in blocks that each read a small set of variables, so
//! the constraint Jacobian is assembled block by block from central
//! differences over those variables only.

use nalgebra::{DMatrix, DVector};

use super::lbfgs::BoxLbfgs;
use super::lm::LevenbergMarquardt;
use crate::error::{Error, Result};
use crate::numdiff;

pub type BlockFn<'a> = Box<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'a>;
pub type ObjectiveFn<'a> = Box<dyn Fn(&[f64]) -> Option<(f64, Vec<f64>)> + Send + Sync + 'a>;

/// Residuals `c_b(z)` that depend only on `z[vars]`.
pub struct ConstraintBlock<'a> {
    pub vars: Vec<usize>,
    pub eval: BlockFn<'a>,
}

/// `min f(z)` subject to `c(z) = 0` and `lower ≤ z ≤ upper`.
pub struct EqualityProgram<'a> {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub objective: ObjectiveFn<'a>,
    pub blocks: Vec<ConstraintBlock<'a>>,
}

impl EqualityProgram<'_> {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn constraints(&self, z: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.blocks.iter().map(|b| (b.eval)(z)).collect()
    }

    pub fn violation(&self, z: &[f64]) -> Result<f64> {
        let c = self.constraints(z)?;
        Ok(c.iter().flatten().fold(0.0, |m: f64, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) }))
    }

    /// Per-block Jacobians, each `rows × vars.len()`.
    pub fn block_jacobians(&self, z: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        self.blocks
            .iter()
            .map(|b| numdiff::central_jacobian_cols(|p| (b.eval)(p), z, &b.vars, numdiff::gradient_step))
            .collect()
    }

    fn dense_jacobian(&self, z: &[f64]) -> Result<DMatrix<f64>> {
        let blocks = self.block_jacobians(z)?;
        let rows: usize = blocks.iter().map(|j| j.nrows()).sum();
        let mut out = DMatrix::zeros(rows, self.dim());
        let mut at = 0;
        for (b, jac) in self.blocks.iter().zip(&blocks) {
            for r in 0..jac.nrows() {
                for (c, v) in b.vars.iter().enumerate() {
                    out[(at + r, *v)] = jac[(r, c)];
                }
            }
            at += jac.nrows();
        }
        Ok(out)
    }

    /// `f/scale + λᵀ(Wc) + μ/2 ‖Wc‖²` and its gradient, with fixed row
    /// weights `W`.
    fn merit(&self, z: &[f64], scale: f64, weights: &[Vec<f64>], lambda: &[Vec<f64>], mu: f64) -> Option<(f64, Vec<f64>)> {
        let (f, gf) = (self.objective)(z)?;
        let c = self.constraints(z).ok()?;
        let jacs = self.block_jacobians(z).ok()?;
        let mut value = f / scale;
        let mut grad: Vec<f64> = gf.iter().map(|g| g / scale).collect();
        for (b, (((cb, wb), lb), jac)) in self.blocks.iter().zip(c.iter().zip(weights).zip(lambda).zip(&jacs)) {
            for r in 0..cb.len() {
                let wc = wb[r] * cb[r];
                value += lb[r] * wc + 0.5 * mu * wc * wc;
                let w = (lb[r] + mu * wc) * wb[r];
                for (k, v) in b.vars.iter().enumerate() {
                    grad[*v] += w * jac[(r, k)];
                }
            }
        }
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return None;
        }
        Some((value, grad))
    }

    /// Relative first-order optimality error: the smallest
    /// `‖∇f + Jᵀλ‖∞` over multipliers `λ`, restricted to variables not held
    /// at a bound, divided by `max(1, ‖∇f‖∞)`.
    fn kkt_error(&self, z: &[f64]) -> Result<f64> {
        let (_, g) = (self.objective)(z).ok_or_else(|| Error::non_finite("objective", z))?;
        let jac = self.dense_jacobian(z)?;
        let free: Vec<usize> = (0..z.len())
            .filter(|&k| {
                let at_lower = z[k] <= self.lower[k] && g[k] > 0.0;
                let at_upper = z[k] >= self.upper[k] && g[k] < 0.0;
                !(at_lower || at_upper)
            })
            .collect();
        let gnorm = g.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
        if free.is_empty() {
            return Ok(0.0);
        }
        let gf = DVector::from_iterator(free.len(), free.iter().map(|&k| g[k]));
        if jac.nrows() == 0 {
            return Ok(gf.amax() / gnorm);
        }
        let jt = DMatrix::from_fn(free.len(), jac.nrows(), |r, c| jac[(c, free[r])]);
        let svd = jt.clone().svd(true, true);
        let lambda = svd
            .solve(&(-&gf), 1e-12 * svd.singular_values.max())
            .map_err(|e| Error::Singular(e.to_string()))?;
        Ok((gf + jt * lambda).amax() / gnorm)
    }

    /// Inverse row norms of the constraint Jacobian, 1 for empty rows.
    fn row_weights(&self, z: &[f64]) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .block_jacobians(z)?
            .iter()
            .map(|jac| {
                jac.row_iter()
                    .map(|row| {
                        let n = row.norm();
                        if n > 0.0 && n.is_finite() {
                            1.0 / n
                        } else {
                            1.0
                        }
                    })
                    .collect()
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AugmentedLagrangian {
    pub max_outer: usize,
    pub max_inner: usize,
    /// Feasibility target on `max |c|`.
    pub tol: f64,
    pub penalty_init: f64,
    pub penalty_growth: f64,
    pub penalty_cap: f64,
    /// Largest constraint count for the dense feasibility polish.
    pub polish_rows: usize,
    /// Bound on the inner projected gradient, or on the relative KKT error
    /// when the constraint count allows a dense check, for a stationary result.
    pub stationarity_tol: f64,
}

impl Default for AugmentedLagrangian {
    fn default() -> Self {
        AugmentedLagrangian {
            max_outer: 30,
            max_inner: 300,
            tol: 1e-8,
            penalty_init: 10.0,
            penalty_growth: 10.0,
            penalty_cap: 1e8,
            polish_rows: 400,
            stationarity_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlOutcome {
    pub z: Vec<f64>,
    pub objective: f64,
    pub violation: f64,
    pub outer_iterations: usize,
    pub feasible: bool,
    /// The last inner solve met its projected-gradient tolerance.
    pub stationary: bool,
}

impl AugmentedLagrangian {
    pub fn solve(&self, program: &EqualityProgram<'_>, z0: &[f64]) -> Result<AlOutcome> {
        let n = program.dim();
        if z0.len() != n {
            return Err(Error::dims("augmented Lagrangian start", n, z0.len()));
        }
        let mut z: Vec<f64> = z0
            .iter()
            .enumerate()
            .map(|(k, v)| v.clamp(program.lower[k], program.upper[k]))
            .collect();
        let f0 = (program.objective)(&z)
            .map(|(f, _)| f)
            .ok_or_else(|| Error::non_finite("coordinator objective at the start point", &z))?;
        let scale = f0.abs().max(1.0);
        let c0 = program.constraints(&z)?;
        let mut lambda: Vec<Vec<f64>> = c0.iter().map(|c| vec![0.0; c.len()]).collect();
        let weights = program.row_weights(&z)?;
        let mut mu = self.penalty_init;
        let mut prev_violation = f64::INFINITY;
        let mut stationary = false;
        let mut outer = 0;
        let inner = BoxLbfgs {
            max_iter: self.max_inner,
            pg_tol: 1e-9,
            ..Default::default()
        };
        let mut violation = program.violation(&z)?;
        while outer < self.max_outer {
            outer += 1;
            let mut merit = |p: &[f64]| program.merit(p, scale, &weights, &lambda, mu);
            let out = inner.minimize(&mut merit, &z, &program.lower, &program.upper);
            if out.value.is_finite() {
                z = out.x;
            }
            stationary = out.converged || out.projected_gradient <= self.stationarity_tol;
            let c = program.constraints(&z)?;
            violation = c.iter().flatten().fold(0.0, |m: f64, v| m.max(v.abs()));
            if !violation.is_finite() {
                break;
            }
            if violation <= self.tol {
                let rows: usize = c.iter().map(|b| b.len()).sum();
                if !stationary && rows <= self.polish_rows {
                    stationary = program.kkt_error(&z).is_ok_and(|e| e <= self.stationarity_tol);
                }
                if stationary {
                    break;
                }
            }
            for ((lb, cb), wb) in lambda.iter_mut().zip(&c).zip(&weights) {
                for ((l, v), w) in lb.iter_mut().zip(cb).zip(wb) {
                    *l += mu * w * v;
                }
            }
            if violation > 0.25 * prev_violation {
                mu = (mu * self.penalty_growth).min(self.penalty_cap);
            }
            prev_violation = violation;
        }
        let rows: usize = lambda.iter().map(|l| l.len()).sum();
        let mut polished = false;
        if violation.is_finite() && violation > self.tol && rows > 0 && rows <= self.polish_rows {
            let flat = |p: &[f64]| -> Result<Vec<f64>> { Ok(program.constraints(p)?.into_iter().flatten().collect()) };
            for equilibrate in [true, false] {
                if violation <= self.tol {
                    break;
                }
                let lm = LevenbergMarquardt {
                    tol: 0.1 * self.tol,
                    max_iter: 100,
                    equilibrate,
                    ..Default::default()
                };
                if let Ok(out) = lm.solve(flat, |p| program.dense_jacobian(p), &z, &program.lower, &program.upper) {
                    let v = program.violation(&out.x)?;
                    if v < violation {
                        z = out.x;
                        violation = v;
                        polished = true;
                    }
                }
            }
        }
        if polished && violation <= self.tol {
            stationary = program.kkt_error(&z).is_ok_and(|e| e <= self.stationarity_tol);
        }
        let objective = (program.objective)(&z).map(|(f, _)| f).unwrap_or(f64::NAN);
        Ok(AlOutcome {
            z,
            objective,
            violation,
            outer_iterations: outer,
            feasible: violation <= self.tol,
            stationary,
        })
    }
}
