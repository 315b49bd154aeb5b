//! Learning dynamics: gradient play on conjectured objectives against
//! standard baselines on the true game.
//!
//! Every rule is written for players ascending their utility
//! `V_i = -sign_i · J_i`, so a maximizer climbs `J_i` and a minimizer
//! descends it. Updates are simultaneous and iterates are projected onto
//! the strategy boxes.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conjecture::{conjectured_grad, ConjectureSet};
use crate::error::{Error, Result};
use crate::game::GameDefinition;
use crate::numdiff;
use crate::profile::StrategyProfile;

/// Distance to the reference profile counted as converged.
pub const CONVERGENCE_RADIUS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    /// Gradient ascent on each player's conjectured objective.
    #[serde(rename = "ConjGD")]
    ConjGd,
    /// Simultaneous gradient.
    #[serde(rename = "SG")]
    Sg,
    #[serde(rename = "LOLA")]
    Lola,
    /// Extragradient.
    #[serde(rename = "EG")]
    Eg,
    /// Optimistic gradient.
    #[serde(rename = "OG")]
    Og,
    /// Symplectic gradient adjustment.
    #[serde(rename = "SGA")]
    Sga,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::ConjGd,
        Algorithm::Sg,
        Algorithm::Lola,
        Algorithm::Eg,
        Algorithm::Og,
        Algorithm::Sga,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::ConjGd => "ConjGD",
            Algorithm::Sg => "SG",
            Algorithm::Lola => "LOLA",
            Algorithm::Eg => "EG",
            Algorithm::Og => "OG",
            Algorithm::Sga => "SGA",
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s) || (s.eq_ignore_ascii_case("conj-gd") && *a == Algorithm::ConjGd))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown algorithm '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsConfig {
    pub algorithm: Algorithm,
    pub eta: f64,
    pub steps: usize,
    /// Opponents' assumed learning rate; LOLA only.
    pub lola_lookahead: Option<f64>,
    /// Weight of the adjustment term; SGA only.
    pub sga_lambda: Option<f64>,
    pub record_every: usize,
}

impl DynamicsConfig {
    /// Config with the default extra parameter for LOLA (0.1) or SGA (1).
    pub fn new(algorithm: Algorithm, eta: f64, steps: usize) -> Self {
        DynamicsConfig {
            algorithm,
            eta,
            steps,
            lola_lookahead: (algorithm == Algorithm::Lola).then_some(0.1),
            sga_lambda: (algorithm == Algorithm::Sga).then_some(1.0),
            record_every: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidParameter(format!("eta must be positive, got {}", self.eta)));
        }
        if self.steps == 0 || self.record_every == 0 {
            return Err(Error::InvalidParameter("steps and record_every must be at least 1".into()));
        }
        let lola = self.algorithm == Algorithm::Lola;
        if lola != self.lola_lookahead.is_some() {
            return Err(Error::InvalidParameter(
                "lola_lookahead must be set exactly when the algorithm is LOLA".into(),
            ));
        }
        let sga = self.algorithm == Algorithm::Sga;
        if sga != self.sga_lambda.is_some() {
            return Err(Error::InvalidParameter(
                "sga_lambda must be set exactly when the algorithm is SGA".into(),
            ));
        }
        if self.lola_lookahead.is_some_and(|a| !a.is_finite()) || self.sga_lambda.is_some_and(|l| !l.is_finite()) {
            return Err(Error::InvalidParameter("algorithm parameters must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub algorithm: Algorithm,
    pub eta: f64,
    /// Step index of each recorded iterate: 0, every `record_every`, and the last.
    pub steps: Vec<usize>,
    pub iterates: Vec<StrategyProfile>,
    pub distances: Vec<f64>,
    /// First step whose iterate lies within [`CONVERGENCE_RADIUS`] of the reference.
    pub converged_at: Option<usize>,
}

impl Trajectory {
    pub fn final_distance(&self) -> f64 {
        *self.distances.last().expect("trajectories record the start")
    }
}

/// `(step, distance)` pairs of the recorded iterates.
pub fn distance_curve(traj: &Trajectory) -> Vec<(usize, f64)> {
    traj.steps.iter().copied().zip(traj.distances.iter().copied()).collect()
}

/// Jacobian of the stacked utility gradients `ξ` at `x`, by central differences.
pub fn field_jacobian(game: &GameDefinition, x: &StrategyProfile) -> Result<DMatrix<f64>> {
    let flat = game.flatten_checked(x)?;
    Field { game, conjectures: None }.xi_jacobian(&flat)
}

/// Antisymmetric part `A = (H − Hᵀ)/2` of the field Jacobian, as used by SGA.
pub fn antisymmetric_part(game: &GameDefinition, x: &StrategyProfile) -> Result<DMatrix<f64>> {
    let h = field_jacobian(game, x)?;
    Ok(antisymmetric(&h))
}

fn antisymmetric(h: &DMatrix<f64>) -> DMatrix<f64> {
    (h - h.transpose()) * 0.5
}

struct Field<'a> {
    game: &'a GameDefinition,
    conjectures: Option<&'a ConjectureSet>,
}

impl Field<'_> {
    /// Stacked utility gradients `ξ(x) = (∇_i V_i)_i`.
    fn xi(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        for i in self.game.players() {
            let g = self.game.gradient_flat(i, x)?;
            let s = -self.game.sense(i).sign();
            for k in self.game.block_range(i) {
                out[k] = s * g[k];
            }
        }
        Ok(out)
    }

    /// Each player's conjectured utility gradient at its own block.
    fn conjectured(&self, x: &[f64]) -> Result<Vec<f64>> {
        let set = self.conjectures.expect("checked by run_dynamics");
        let mut out = vec![0.0; x.len()];
        for i in self.game.players() {
            let view = self.game.player_view(i);
            let conj = set.player(i);
            let range = self.game.block_range(i);
            let g = conjectured_grad(&view, &conj.refs(), &x[range.clone()])?;
            let s = -self.game.sense(i).sign();
            for (k, v) in range.zip(g) {
                out[k] = s * v;
            }
        }
        Ok(out)
    }

    fn xi_jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        numdiff::central_jacobian(|p| self.xi(p), x)
    }

    /// Own gradient plus the first-order effect of every opponent taking one
    /// gradient step of rate `alpha` on its own utility.
    fn lola(&self, x: &[f64], alpha: f64) -> Result<Vec<f64>> {
        let mut out = self.xi(x)?;
        let h = self.xi_jacobian(x)?;
        for i in self.game.players() {
            let s = -self.game.sense(i).sign();
            let grad_i = self.game.gradient_flat(i, x)?;
            for j in self.game.players().filter(|j| *j != i) {
                for ri in self.game.block_range(i) {
                    let mut acc = 0.0;
                    for cj in self.game.block_range(j) {
                        // ∂ξ_j/∂x_i transposed, times ∇_j V_i.
                        acc += h[(cj, ri)] * s * grad_i[cj];
                    }
                    out[ri] += alpha * acc;
                }
            }
        }
        Ok(out)
    }

    /// Adjusted field with `A` the antisymmetric part of `∂ξ/∂x`. The usual
    /// `ξ + λAᵀξ` is stated for loss gradients; negating both `ξ` and `A`
    /// for utilities gives `ξ − λAᵀξ`.
    fn sga(&self, x: &[f64], lambda: f64) -> Result<Vec<f64>> {
        let xi = self.xi(x)?;
        let h = self.xi_jacobian(x)?;
        let a = antisymmetric(&h);
        let adj = a.transpose() * DVector::from_column_slice(&xi);
        Ok(xi.iter().zip(adj.iter()).map(|(v, c)| v - lambda * c).collect())
    }
}

fn advance(game: &GameDefinition, x: &[f64], dir: &[f64], eta: f64) -> Vec<f64> {
    let mut y: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a + eta * d).collect();
    for i in game.players() {
        game.domain(i).clamp_in_place(&mut y[game.block_range(i)]);
    }
    y
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Runs `config.steps` synchronous updates from `x0`, recording distances
/// to `x_ref`.
pub fn run_dynamics(
    game: &GameDefinition,
    config: &DynamicsConfig,
    x0: &StrategyProfile,
    conjectures: Option<&ConjectureSet>,
    x_ref: &StrategyProfile,
) -> Result<Trajectory> {
    config.validate()?;
    match (config.algorithm, conjectures) {
        (Algorithm::ConjGd, None) => {
            return Err(Error::InvalidParameter("ConjGD needs a conjecture set".into()));
        }
        (Algorithm::ConjGd, Some(set)) => set.validate_for(game)?,
        (_, Some(_)) => {
            return Err(Error::InvalidParameter(format!(
                "{} runs on the true game and takes no conjectures",
                config.algorithm.name()
            )));
        }
        _ => {}
    }
    let mut x = game.flatten_checked(x0)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::non_finite("initial profile", &x));
    }
    for i in game.players() {
        game.domain(i).clamp_in_place(&mut x[game.block_range(i)]);
    }
    let reference = game.flatten_checked(x_ref)?;
    let field = Field { game, conjectures };
    let eta = config.eta;

    let mut traj = Trajectory {
        algorithm: config.algorithm,
        eta,
        steps: vec![0],
        iterates: vec![game.profile_from_flat(&x)?],
        distances: vec![distance(&x, &reference)],
        converged_at: None,
    };
    if traj.distances[0] <= CONVERGENCE_RADIUS {
        traj.converged_at = Some(0);
    }
    let mut prev_xi: Option<Vec<f64>> = None;
    for t in 1..=config.steps {
        let step = || -> Result<Vec<f64>> {
            Ok(match config.algorithm {
                Algorithm::ConjGd => advance(game, &x, &field.conjectured(&x)?, eta),
                Algorithm::Sg => advance(game, &x, &field.xi(&x)?, eta),
                Algorithm::Eg => {
                    let half = advance(game, &x, &field.xi(&x)?, eta);
                    advance(game, &x, &field.xi(&half)?, eta)
                }
                Algorithm::Og => {
                    let xi = field.xi(&x)?;
                    let dir: Vec<f64> = match &prev_xi {
                        Some(p) => xi.iter().zip(p).map(|(a, b)| 2.0 * a - b).collect(),
                        None => xi.clone(),
                    };
                    advance(game, &x, &dir, eta)
                }
                Algorithm::Lola => advance(game, &x, &field.lola(&x, config.lola_lookahead.expect("validated"))?, eta),
                Algorithm::Sga => advance(game, &x, &field.sga(&x, config.sga_lambda.expect("validated"))?, eta),
            })
        };
        let next = match step() {
            Ok(next) if next.iter().all(|v| v.is_finite()) => next,
            _ => return Err(Error::Diverged { step: t, last: x }),
        };
        if config.algorithm == Algorithm::Og {
            prev_xi = Some(field.xi(&x).map_err(|_| Error::Diverged { step: t, last: x.clone() })?);
        }
        x = next;
        let d = distance(&x, &reference);
        if traj.converged_at.is_none() && d <= CONVERGENCE_RADIUS {
            traj.converged_at = Some(t);
        }
        if t % config.record_every == 0 || t == config.steps {
            traj.steps.push(t);
            traj.iterates.push(game.profile_from_flat(&x)?);
            traj.distances.push(d);
        }
    }
    Ok(traj)
}

/// Runs `base` with every step size in `grid` and returns the run that
/// converges in the fewest steps, ties going to the smaller step size.
pub fn tune_eta(
    game: &GameDefinition,
    base: &DynamicsConfig,
    grid: &[f64],
    x0: &StrategyProfile,
    conjectures: Option<&ConjectureSet>,
    x_ref: &StrategyProfile,
) -> Option<Trajectory> {
    let runs: Vec<Option<Trajectory>> = grid
        .par_iter()
        .map(|eta| {
            let cfg = DynamicsConfig { eta: *eta, ..*base };
            run_dynamics(game, &cfg, x0, conjectures, x_ref).ok()
        })
        .collect();
    let mut best: Option<Trajectory> = None;
    for traj in runs.into_iter().flatten() {
        let Some(t) = traj.converged_at else { continue };
        let better = match &best {
            None => true,
            Some(b) => {
                let bt = b.converged_at.expect("only converged runs are kept");
                t < bt || (t == bt && traj.eta < b.eta)
            }
        };
        if better {
            best = Some(traj);
        }
    }
    best
}
