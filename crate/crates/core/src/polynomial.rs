//! Multivariate polynomials with analytic gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::PlayerObjective;

/// `coeff · Π_k x_k^{exponents[k]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: f64,
    pub exponents: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    n_vars: usize,
    terms: Vec<Monomial>,
    sparse: Vec<(f64, Vec<(usize, u32)>)>,
}

impl Polynomial {
    pub fn new(n_vars: usize, terms: Vec<Monomial>) -> Result<Self> {
        let mut sparse = Vec::with_capacity(terms.len());
        for (t, m) in terms.iter().enumerate() {
            if m.exponents.len() != n_vars {
                return Err(Error::dims(format!("exponents of term {t}"), n_vars, m.exponents.len()));
            }
            if !m.coeff.is_finite() {
                return Err(Error::InvalidParameter(format!("term {t} has a non-finite coefficient")));
            }
            let powers = m
                .exponents
                .iter()
                .enumerate()
                .filter(|(_, e)| **e > 0)
                .map(|(k, e)| (k, *e))
                .collect();
            sparse.push((m.coeff, powers));
        }
        Ok(Polynomial { n_vars, terms, sparse })
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.sparse
            .iter()
            .map(|(c, powers)| c * powers.iter().map(|(k, e)| x[*k].powi(*e as i32)).product::<f64>())
            .sum()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.n_vars];
        for (c, powers) in &self.sparse {
            for (p, (k, e)) in powers.iter().enumerate() {
                let mut d = c * (*e as f64) * x[*k].powi(*e as i32 - 1);
                for (q, (l, f)) in powers.iter().enumerate() {
                    if q != p {
                        d *= x[*l].powi(*f as i32);
                    }
                }
                g[*k] += d;
            }
        }
        g
    }

    pub fn into_objective(self) -> PlayerObjective {
        let p = std::sync::Arc::new(self);
        let q = p.clone();
        PlayerObjective::new(move |x| p.value(x)).with_gradient(move |x| q.gradient(x))
    }
}

/// Builds exponent vectors for a few variables.
pub fn monomial(n_vars: usize, coeff: f64, powers: &[(usize, u32)]) -> Monomial {
    let mut exponents = vec![0; n_vars];
    for (k, e) in powers {
        exponents[*k] += e;
    }
    Monomial { coeff, exponents }
}
