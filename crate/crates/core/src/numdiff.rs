//! Central finite differences.
//!
//! Gradients use the step `cbrt(eps) * max(1, |x_k|)`, which balances
//! truncation and rounding error for central differences. Hessians of
//! gradients use `sqrt(eps) * max(1, |x_k|)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub fn gradient_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * x.abs().max(1.0)
}

pub fn hessian_step(x: f64) -> f64 {
    f64::EPSILON.sqrt() * x.abs().max(1.0)
}

/// Central-difference gradient of a scalar function.
pub fn central_gradient<F>(f: F, x: &[f64]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let mut work = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        let h = gradient_step(x[k]);
        work[k] = x[k] + h;
        let up = f(&work);
        let hp = work[k] - x[k];
        work[k] = x[k] - h;
        let down = f(&work);
        let hm = x[k] - work[k];
        work[k] = x[k];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::non_finite(
                format!("finite difference along coordinate {k}"),
                x,
            ));
        }
        grad.push((up - down) / (hp + hm));
    }
    Ok(grad)
}

/// Central-difference Jacobian of a vector function restricted to the
/// coordinates in `cols`; column `c` differentiates w.r.t. `x[cols[c]]`.
pub fn central_jacobian_cols<F>(f: F, x: &[f64], cols: &[usize], step: fn(f64) -> f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let mut work = x.to_vec();
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(cols.len());
    let mut rows = None;
    for &k in cols {
        let h = step(x[k]);
        work[k] = x[k] + h;
        let up = f(&work)?;
        let hp = work[k] - x[k];
        work[k] = x[k] - h;
        let down = f(&work)?;
        let hm = x[k] - work[k];
        work[k] = x[k];
        let r = *rows.get_or_insert(up.len());
        if up.len() != r || down.len() != r {
            return Err(Error::dims("jacobian rows", r, up.len().max(down.len())));
        }
        let col: Vec<f64> = up
            .iter()
            .zip(&down)
            .map(|(u, d)| (u - d) / (hp + hm))
            .collect();
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite(
                format!("jacobian column for coordinate {k}"),
                x,
            ));
        }
        columns.push(col);
    }
    let r = rows.unwrap_or(0);
    Ok(DMatrix::from_fn(r, cols.len(), |i, j| columns[j][i]))
}

/// Full central-difference Jacobian with the gradient step rule.
pub fn central_jacobian<F>(f: F, x: &[f64]) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let cols: Vec<usize> = (0..x.len()).collect();
    central_jacobian_cols(f, x, &cols, gradient_step)
}

/// Mixed absolute/relative agreement test used by gradient validation.
pub fn mixed_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}
