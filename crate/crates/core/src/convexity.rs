//! Sampling falsifier for pseudo-convexity.
//!
//! A differentiable `f` is pseudo-convex when `∇f(a)·(b - a) >= 0` implies
//! `f(b) >= f(a)`. Random pairs can only refute the property, never prove it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numdiff;
use crate::profile::BoxDomain;

/// Slack on `f(b) < f(a)` before a pair counts as a violation.
pub const PSEUDO_CONVEXITY_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PseudoConvexityReport {
    pub is_violated: bool,
    pub witness: Option<(Vec<f64>, Vec<f64>)>,
    pub pairs_checked: usize,
}

/// Tests the pinned pairs first, then `n_pairs` uniform pairs from `domain`.
pub fn check_pseudo_convexity<F>(
    f: F,
    domain: &BoxDomain,
    n_pairs: usize,
    seed: u64,
    pinned: &[(Vec<f64>, Vec<f64>)],
) -> Result<PseudoConvexityReport>
where
    F: Fn(&[f64]) -> f64,
{
    let degenerate = domain.dim() == 0
        || !domain.is_bounded()
        || domain.lower().iter().zip(domain.upper()).all(|(l, u)| l == u);
    if degenerate {
        return Err(Error::Precondition(
            "pseudo-convexity sampling needs a finite, non-degenerate box".into(),
        ));
    }
    for (a, b) in pinned {
        if a.len() != domain.dim() || b.len() != domain.dim() {
            return Err(Error::dims("pinned pair", domain.dim(), a.len().max(b.len())));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    let sampled = (0..n_pairs).map(|_| (domain.sample(&mut rng), domain.sample(&mut rng)));
    let pairs = pinned.iter().cloned().chain(sampled);
    for (a, b) in pairs {
        checked += 1;
        if violates(&f, &a, &b) {
            return Ok(PseudoConvexityReport {
                is_violated: true,
                witness: Some((a, b)),
                pairs_checked: checked,
            });
        }
    }
    Ok(PseudoConvexityReport {
        is_violated: false,
        witness: None,
        pairs_checked: checked,
    })
}

fn violates<F: Fn(&[f64]) -> f64>(f: &F, a: &[f64], b: &[f64]) -> bool {
    let fa = f(a);
    let fb = f(b);
    if !fa.is_finite() || fb.is_nan() {
        return false;
    }
    let Ok(grad) = numdiff::central_gradient(f, a) else {
        return false;
    };
    let slope: f64 = grad.iter().zip(a.iter().zip(b)).map(|(g, (x, y))| g * (y - x)).sum();
    slope >= 0.0 && fb < fa - PSEUDO_CONVEXITY_SLACK
}
