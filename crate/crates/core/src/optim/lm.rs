//! Levenberg–Marquardt for square, over- and underdetermined systems.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct LevenbergMarquardt {
    pub max_iter: usize,
    /// Stop when `‖r‖₂` falls below this.
    pub tol: f64,
    pub lambda_init: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub lambda_floor: f64,
    pub lambda_cap: f64,
    /// Weight rows by the inverse row norms of the first Jacobian.
    pub equilibrate: bool,
}

impl Default for LevenbergMarquardt {
    fn default() -> Self {
        LevenbergMarquardt {
            max_iter: 200,
            tol: 1e-10,
            lambda_init: 1e-3,
            lambda_up: 10.0,
            lambda_down: 10.0,
            lambda_floor: 1e-12,
            lambda_cap: 1e8,
            equilibrate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmOutcome {
    pub x: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The Jacobian lost rank at some iterate and only the damping floor
    /// kept the step defined.
    pub rank_collapsed: bool,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl LevenbergMarquardt {
    /// Drives `residual` to zero with damped steps
    /// `(J^T J + λI)^{-1} J^T r` on the row-equilibrated system, computed
    /// from an SVD so that wide systems take the minimum-norm step. Trial
    /// points are projected onto `[lower, upper]`; `tol` applies to the
    /// unweighted residual.
    pub fn solve<R, J>(&self, residual: R, jacobian: J, x0: &[f64], lower: &[f64], upper: &[f64]) -> Result<LmOutcome>
    where
        R: Fn(&[f64]) -> Result<Vec<f64>>,
        J: Fn(&[f64]) -> Result<DMatrix<f64>>,
    {
        let mut x: Vec<f64> = x0.iter().enumerate().map(|(k, v)| v.clamp(lower[k], upper[k])).collect();
        let mut r = residual(&x)?;
        let mut rn = norm(&r);
        // Row weights from the first Jacobian balance the acceptance merit
        // across equations of very different scale.
        let mut weights: Option<Vec<f64>> = None;
        let mut wn = f64::INFINITY;
        let mut lambda = self.lambda_init;
        let mut rank_collapsed = false;
        let mut iterations = 0;
        while rn > self.tol && iterations < self.max_iter {
            iterations += 1;
            let mut jac = jacobian(&x)?;
            let w = weights.get_or_insert_with(|| {
                let w = if self.equilibrate { row_weights(&jac) } else { vec![1.0; jac.nrows()] };
                wn = weighted_norm(&r, &w);
                w
            });
            for (row, wr) in w.iter().enumerate() {
                jac.row_mut(row).scale_mut(*wr);
            }
            let svd = jac.svd(true, true);
            let smax = svd.singular_values.max();
            let smin = svd.singular_values.min();
            if smax == 0.0 || smin <= 1e-12 * smax {
                rank_collapsed = true;
            }
            let (Some(u), Some(v_t)) = (svd.u.as_ref(), svd.v_t.as_ref()) else {
                break;
            };
            let wr = DVector::from_iterator(r.len(), r.iter().zip(w.iter()).map(|(a, b)| a * b));
            let utr = u.transpose() * wr;
            let mut improved = false;
            while lambda <= self.lambda_cap {
                let step = damped_step(&svd.singular_values, &utr, v_t, lambda);
                let trial: Vec<f64> = x
                    .iter()
                    .zip(step.iter())
                    .enumerate()
                    .map(|(k, (a, b))| (a - b).clamp(lower[k], upper[k]))
                    .collect();
                if let Ok(rt) = residual(&trial) {
                    let wt = weighted_norm(&rt, w);
                    if wt.is_finite() && wt < wn {
                        x = trial;
                        rn = norm(&rt);
                        r = rt;
                        wn = wt;
                        lambda = (lambda / self.lambda_down).max(self.lambda_floor);
                        improved = true;
                        break;
                    }
                }
                lambda *= self.lambda_up;
            }
            if !improved {
                break;
            }
        }
        Ok(LmOutcome {
            x,
            residual_norm: rn,
            iterations,
            converged: rn <= self.tol,
            rank_collapsed,
        })
    }
}

fn row_weights(jac: &DMatrix<f64>) -> Vec<f64> {
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
}

fn weighted_norm(r: &[f64], w: &[f64]) -> f64 {
    r.iter().zip(w).map(|(a, b)| (a * b) * (a * b)).sum::<f64>().sqrt()
}

/// `argmin ‖J s − r‖² + λ‖s‖²` from the thin SVD of `J`; lies in the row
/// space of `J`, so it is the minimum-norm step when `J` is wide.
fn damped_step(sigma: &DVector<f64>, utr: &DVector<f64>, v_t: &DMatrix<f64>, lambda: f64) -> DVector<f64> {
    let scaled = DVector::from_fn(sigma.len(), |k, _| sigma[k] * utr[k] / (sigma[k] * sigma[k] + lambda));
    v_t.transpose() * scaled
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn underdetermined_circle() {
        // x² + y² = 4, one equation in two unknowns.
        let inf = f64::INFINITY;
        let out = LevenbergMarquardt::default()
            .solve(
                |x| Ok(vec![x[0] * x[0] + x[1] * x[1] - 4.0]),
                |x| Ok(DMatrix::from_row_slice(1, 2, &[2.0 * x[0], 2.0 * x[1]])),
                &[1.0, 1.0],
                &[-inf, -inf],
                &[inf, inf],
            )
            .unwrap();
        assert!(out.converged);
        // The min-norm step keeps the iterate on the ray through the start.
        assert!((out.x[0] - 2f64.sqrt()).abs() < 1e-9);
        assert!((out.x[1] - 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn square_system() {
        let inf = f64::INFINITY;
        let out = LevenbergMarquardt::default()
            .solve(
                |x| Ok(vec![x[0] + x[1] - 3.0, x[0] * x[1] - 2.0]),
                |x| Ok(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, x[1], x[0]])),
                &[0.0, 3.0],
                &[-inf, -inf],
                &[inf, inf],
            )
            .unwrap();
        assert!(out.converged, "{out:?}");
        assert!(out.residual_norm < 1e-10);
    }

    #[test]
    fn rank_collapse_is_flagged() {
        let inf = f64::INFINITY;
        let out = LevenbergMarquardt::default()
            .solve(
                |x| Ok(vec![x[0] * x[0]]),
                |x| Ok(DMatrix::from_element(1, 1, 2.0 * x[0])),
                &[0.0],
                &[-inf],
                &[inf],
            )
            .unwrap();
        assert!(out.converged);
        let out = LevenbergMarquardt::default()
            .solve(
                |x| Ok(vec![x[0] * x[0] + 1.0]),
                |x| Ok(DMatrix::from_element(1, 1, 2.0 * x[0])),
                &[0.0],
                &[-inf],
                &[inf],
            )
            .unwrap();
        assert!(!out.converged);
        assert!(out.rank_collapsed);
    }
}
