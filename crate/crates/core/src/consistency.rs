//! Consistency residuals of a conjecture set at a profile.

use serde::{Deserialize, Serialize};

use crate::conjecture::{conjectured_grad, conjectured_point, ConjectureSet};
use crate::error::{Error, Result};
use crate::game::GameDefinition;
use crate::profile::{PlayerId, StrategyProfile};

/// Residual attached to an ordered pair `(i, j)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairResidual {
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    /// `‖∇_i J_i(x_i, γ(x_i)) + (∇γ)^T ∇_{-i} J_i‖` per player.
    pub stationarity: Vec<f64>,
    /// `|J_i(x_i, γ(x_i)) − J_i(x)|` per player.
    pub order0: Option<Vec<f64>>,
    /// `‖γ_i^j(x_i) − x_j‖` per pair.
    pub order1: Option<Vec<PairResidual>>,
    /// `‖∇γ_i^j(x_i) − ∂x_j*/∂x_i‖_F` per pair.
    pub order2: Option<Vec<PairResidual>>,
    /// Players whose conjectures had to be clamped to an opponent's domain.
    pub clamped: Vec<bool>,
    pub max_residual: f64,
}

impl ConsistencyReport {
    /// Largest populated residual; NaN entries make the result NaN.
    fn compute_max(&mut self) {
        let mut all: Vec<f64> = self.stationarity.clone();
        if let Some(o) = &self.order0 {
            all.extend(o);
        }
        for pairs in [&self.order1, &self.order2].into_iter().flatten() {
            all.extend(pairs.iter().map(|p| p.value));
        }
        self.max_residual = all.into_iter().fold(0.0, |m, v| if v.is_nan() || m.is_nan() { f64::NAN } else { m.max(v) });
    }

    pub fn max_order1(&self) -> Option<f64> {
        self.order1.as_ref().map(|p| p.iter().fold(0.0_f64, |m, r| m.max(r.value)))
    }

    pub fn max_order2(&self) -> Option<f64> {
        self.order2.as_ref().map(|p| p.iter().fold(0.0_f64, |m, r| m.max(r.value)))
    }

    pub fn max_stationarity(&self) -> f64 {
        self.stationarity.iter().fold(0.0, |m, v| m.max(*v))
    }
}

/// Which residual families to populate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Orders {
    pub order0: bool,
    pub order1: bool,
    pub order2: bool,
    /// Enforce the best-response manifold precondition for order 2.
    pub strict: bool,
}

/// Residuals up to `max_order` (0, 1 or 2). Order 2 requires every player to
/// sit on its best-response manifold with a nonsingular own-block Hessian.
pub fn check_consistency(
    game: &GameDefinition,
    set: &ConjectureSet,
    x: &StrategyProfile,
    max_order: u8,
) -> Result<ConsistencyReport> {
    if max_order > 2 {
        return Err(Error::InvalidParameter(format!("consistency order {max_order} is not 0, 1 or 2")));
    }
    evaluate(
        game,
        set,
        x,
        Orders {
            order0: true,
            order1: max_order >= 1,
            order2: max_order == 2,
            strict: true,
        },
    )
}

pub(crate) fn evaluate(game: &GameDefinition, set: &ConjectureSet, x: &StrategyProfile, orders: Orders) -> Result<ConsistencyReport> {
    set.validate_for(game)?;
    let flat = game.flatten_checked(x)?;
    let mut report = ConsistencyReport {
        stationarity: Vec::with_capacity(game.n_players()),
        order0: orders.order0.then(Vec::new),
        order1: orders.order1.then(Vec::new),
        order2: orders.order2.then(Vec::new),
        clamped: Vec::with_capacity(game.n_players()),
        max_residual: 0.0,
    };
    for i in game.players() {
        let view = game.player_view(i);
        let conj = set.player(i);
        let refs = conj.refs();
        let x_i = &flat[game.block_range(i)];
        let point = conjectured_point(&view, &refs, x_i)?;
        report.clamped.push(point.any_clamped());
        let g = conjectured_grad(&view, &refs, x_i)?;
        report.stationarity.push(norm(&g));
        if let Some(o0) = report.order0.as_mut() {
            let conjectured = view.value(&point.profile);
            let actual = view.value(&flat);
            o0.push((conjectured - actual).abs());
        }
        if let Some(o1) = report.order1.as_mut() {
            for (j, e) in &conj.entries {
                let pred = e.family.eval(x_i, &e.theta);
                let diff: Vec<f64> = pred.iter().zip(&flat[game.block_range(*j)]).map(|(p, q)| p - q).collect();
                o1.push(PairResidual {
                    i: i.0,
                    j: j.0,
                    value: norm(&diff),
                });
            }
        }
    }
    if orders.order2 {
        let o2 = report.order2.as_mut().expect("allocated above");
        for j in game.players() {
            let br = if orders.strict {
                game.best_response_jacobian(j, x)?
            } else {
                game.best_response_map_jacobian(j, &flat)?
            };
            for i in game.players().filter(|i| *i != j) {
                let e = set.get(i, j)?;
                let x_i = &flat[game.block_range(i)];
                let jac = e.family.jacobian(x_i, &e.theta);
                let cols = best_response_columns(game, j, i);
                let mut sq = 0.0;
                for r in 0..jac.nrows() {
                    for (c, col) in cols.clone().enumerate() {
                        sq += (jac[(r, c)] - br[(r, col)]).powi(2);
                    }
                }
                o2.push(PairResidual {
                    i: i.0,
                    j: j.0,
                    value: sq.sqrt(),
                });
            }
        }
        o2.sort_by_key(|p| (p.i, p.j));
    }
    report.compute_max();
    Ok(report)
}

/// Columns of `best_response_jacobian(j)` that differentiate w.r.t. block `i`.
pub(crate) fn best_response_columns(game: &GameDefinition, j: PlayerId, i: PlayerId) -> std::ops::Range<usize> {
    let start = if i.0 < j.0 {
        game.offset(i)
    } else {
        game.offset(i) - game.dim(j)
    };
    start..start + game.dim(i)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
