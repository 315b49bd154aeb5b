//! The coordinator's system objective `ℱ`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{GameDefinition, GradientFn, ValueFn};
use crate::numdiff;
use crate::profile::Sense;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    SocialWelfare,
    Product,
    Custom,
}

/// `ℱ: R^m → R` together with the direction the coordinator prefers.
#[derive(Clone)]
pub struct CoordinatorObjective {
    kind: ObjectiveKind,
    sense: Sense,
    value: ValueFn,
    gradient: Option<GradientFn>,
}

impl fmt::Debug for CoordinatorObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoordinatorObjective")
            .field("kind", &self.kind)
            .field("sense", &self.sense)
            .field("analytic_gradient", &self.gradient.is_some())
            .finish()
    }
}

impl CoordinatorObjective {
    pub fn custom(
        sense: Sense,
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: Option<GradientFn>,
    ) -> Self {
        CoordinatorObjective {
            kind: ObjectiveKind::Custom,
            sense,
            value: Arc::new(value),
            gradient,
        }
    }

    /// Welfare `Σ_i J_i` with minimizers' objectives negated, maximized.
    pub fn social_welfare(game: &GameDefinition) -> Self {
        let game_v = game.clone();
        let game_g = game.clone();
        CoordinatorObjective {
            kind: ObjectiveKind::SocialWelfare,
            sense: Sense::Maximize,
            value: Arc::new(move |x| game_v.players().map(|i| -game_v.internal_value_flat(i, x)).sum()),
            gradient: Some(Arc::new(move |x| {
                let mut total = vec![0.0; x.len()];
                for i in game_g.players() {
                    let s = -game_g.sense(i).sign();
                    match game_g.gradient_flat(i, x) {
                        Ok(g) => total.iter_mut().zip(g).for_each(|(t, v)| *t += s * v),
                        Err(_) => return vec![f64::NAN; x.len()],
                    }
                }
                total
            })),
        }
    }

    /// `Π_i J_i` (natural senses), minimized.
    pub fn product(game: &GameDefinition) -> Self {
        let game_v = game.clone();
        let game_g = game.clone();
        CoordinatorObjective {
            kind: ObjectiveKind::Product,
            sense: Sense::Minimize,
            value: Arc::new(move |x| game_v.players().map(|i| game_v.value_flat(i, x)).product()),
            gradient: Some(Arc::new(move |x| {
                let values: Vec<f64> = game_g.players().map(|i| game_g.value_flat(i, x)).collect();
                let mut total = vec![0.0; x.len()];
                for i in game_g.players() {
                    let others: f64 = values
                        .iter()
                        .enumerate()
                        .filter(|(k, _)| *k != i.0)
                        .map(|(_, v)| v)
                        .product();
                    match game_g.gradient_flat(i, x) {
                        Ok(g) => total.iter_mut().zip(g).for_each(|(t, v)| *t += others * v),
                        Err(_) => return vec![f64::NAN; x.len()],
                    }
                }
                total
            })),
        }
    }

    pub fn constant(c: f64) -> Self {
        CoordinatorObjective {
            kind: ObjectiveKind::Custom,
            sense: Sense::Minimize,
            value: Arc::new(move |_| c),
            gradient: Some(Arc::new(|x| vec![0.0; x.len()])),
        }
    }

    pub fn kind(&self) -> ObjectiveKind {
        self.kind
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    /// `ℱ(x)` in its natural sense.
    pub fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    /// Minimization form `sign · ℱ(x)`.
    pub fn internal_value(&self, x: &[f64]) -> f64 {
        self.sense.sign() * self.value(x)
    }

    pub fn internal_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let s = self.sense.sign();
        let g = match &self.gradient {
            Some(g) => g(x),
            None => numdiff::central_gradient(|p| (self.value)(p), x)?,
        };
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("coordinator gradient", x));
        }
        Ok(g.into_iter().map(|v| s * v).collect())
    }

    /// Whether `a` is strictly better than `b` for the coordinator.
    pub fn better(&self, a: f64, b: f64) -> bool {
        self.sense.sign() * a < self.sense.sign() * b
    }
}
