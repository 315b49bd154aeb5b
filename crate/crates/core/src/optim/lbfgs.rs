//! Projected limited-memory BFGS for box-constrained minimization.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
pub struct BoxLbfgs {
    pub max_iter: usize,
    pub memory: usize,
    /// Stop when `‖P(x − ∇f) − x‖_∞` falls below this.
    pub pg_tol: f64,
    pub armijo: f64,
}

impl Default for BoxLbfgs {
    fn default() -> Self {
        BoxLbfgs {
            max_iter: 500,
            memory: 8,
            pg_tol: 1e-9,
            armijo: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub projected_gradient: f64,
}

/// Objective returning `(f, ∇f)`, or `None` where it cannot be evaluated.
pub type ValueGrad<'a> = dyn FnMut(&[f64]) -> Option<(f64, Vec<f64>)> + 'a;

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for (k, v) in x.iter_mut().enumerate() {
        *v = v.clamp(lower[k], upper[k]);
    }
}

fn projected_gradient_norm(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .enumerate()
        .map(|(k, (xv, gv))| ((xv - gv).clamp(lower[k], upper[k]) - xv).abs())
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl BoxLbfgs {
    pub fn minimize(&self, fg: &mut ValueGrad<'_>, x0: &[f64], lower: &[f64], upper: &[f64]) -> MinimizeOutcome {
        let n = x0.len();
        let mut x = x0.to_vec();
        project(&mut x, lower, upper);
        let mut evaluations = 1;
        let Some((mut f, mut g)) = fg(&x).filter(|(f, g)| f.is_finite() && g.iter().all(|v| v.is_finite())) else {
            return MinimizeOutcome {
                x,
                value: f64::INFINITY,
                iterations: 0,
                evaluations,
                converged: false,
                projected_gradient: f64::INFINITY,
            };
        };
        let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(self.memory);
        let mut pg = projected_gradient_norm(&x, &g, lower, upper);
        let mut iterations = 0;
        let mut stalled = 0;
        while iterations < self.max_iter && pg > self.pg_tol {
            iterations += 1;
            let free: Vec<bool> = (0..n)
                .map(|k| !((x[k] <= lower[k] && g[k] > 0.0) || (x[k] >= upper[k] && g[k] < 0.0)))
                .collect();
            let mut d = self.two_loop(&g, &free, &memory);
            if !(dot(&g, &d) < 0.0) {
                memory.clear();
                d = g.iter().zip(&free).map(|(v, f)| if *f { -v } else { 0.0 }).collect();
            }
            let mut alpha = if memory.is_empty() {
                let dmax = d.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                if dmax > 0.0 {
                    (1.0 / dmax).min(1.0)
                } else {
                    1.0
                }
            } else {
                1.0
            };
            let mut accepted = None;
            for _ in 0..60 {
                let mut trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
                project(&mut trial, lower, upper);
                let step: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
                let decrease = dot(&g, &step);
                if step.iter().all(|s| *s == 0.0) {
                    break;
                }
                evaluations += 1;
                if let Some((ft, gt)) = fg(&trial) {
                    if ft.is_finite() && gt.iter().all(|v| v.is_finite()) && ft <= f + self.armijo * decrease {
                        accepted = Some((trial, ft, gt, step));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            let Some((xn, fnew, gn, s)) = accepted else {
                if memory.is_empty() {
                    break;
                }
                memory.clear();
                continue;
            };
            let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
                if memory.len() == self.memory {
                    memory.pop_front();
                }
                memory.push_back((s, y, 1.0 / sy));
            }
            if (f - fnew).abs() <= 1e-16 * f.abs().max(1.0) {
                stalled += 1;
            } else {
                stalled = 0;
            }
            x = xn;
            f = fnew;
            g = gn;
            pg = projected_gradient_norm(&x, &g, lower, upper);
            if stalled >= 5 {
                break;
            }
        }
        MinimizeOutcome {
            x,
            value: f,
            iterations,
            evaluations,
            converged: pg <= self.pg_tol,
            projected_gradient: pg,
        }
    }

    fn two_loop(&self, g: &[f64], free: &[bool], memory: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
        let mask = |v: &mut Vec<f64>| {
            for (k, f) in free.iter().enumerate() {
                if !f {
                    v[k] = 0.0;
                }
            }
        };
        let mut q = g.to_vec();
        mask(&mut q);
        let mut alphas = Vec::with_capacity(memory.len());
        for (s, y, rho) in memory.iter().rev() {
            let a = rho * dot(s, &q);
            for (qk, yk) in q.iter_mut().zip(y) {
                *qk -= a * yk;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = memory.back() {
            let scale = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= scale);
        }
        for ((s, y, rho), a) in memory.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            for (qk, sk) in q.iter_mut().zip(s) {
                *qk += (a - b) * sk;
            }
        }
        mask(&mut q);
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock_unconstrained() {
        let mut fg = |x: &[f64]| {
            let f = 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
            let g = vec![
                -400.0 * x[0] * (x[1] - x[0] * x[0]) - 2.0 * (1.0 - x[0]),
                200.0 * (x[1] - x[0] * x[0]),
            ];
            Some((f, g))
        };
        let inf = f64::INFINITY;
        let out = BoxLbfgs {
            max_iter: 2000,
            ..Default::default()
        }
        .minimize(&mut fg, &[-1.2, 1.0], &[-inf, -inf], &[inf, inf]);
        assert!(out.converged, "{out:?}");
        assert!((out.x[0] - 1.0).abs() < 1e-6 && (out.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn active_bound() {
        let mut fg = |x: &[f64]| Some(((x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2), vec![2.0 * (x[0] - 3.0), 2.0 * (x[1] + 1.0)]));
        let out = BoxLbfgs::default().minimize(&mut fg, &[0.0, 0.0], &[-1.0, 0.0], &[1.0, 1.0]);
        assert!(out.converged);
        assert_eq!(out.x, vec![1.0, 0.0]);
    }
}
