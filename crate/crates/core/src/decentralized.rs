//! Decentralized design: the coordinator optimizes `ℱ` alone, broadcasts
//! each player's target value, and every player independently solves for
//! its own strategy and conjecture parameters.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::centralized::{FamilyMap, SolverOptions};
use crate::conjecture::{conjectured_grad, conjectured_point, ConjectureEntry, ConjectureFamily, ConjectureRef, ConjectureSet};
use crate::error::{Error, Result};
use crate::game::{GameDefinition, PlayerView};
use crate::numdiff;
use crate::objective::CoordinatorObjective;
use crate::optim::{BoxLbfgs, LevenbergMarquardt};
use crate::profile::{BoxDomain, PlayerId, StrategyProfile};

/// Multistart box-constrained quasi-Newton minimization of the
/// sense-corrected `ℱ`. Start 0 is the centre of the sampling box.
pub fn coordinator_select_target(
    objective: &CoordinatorObjective,
    game: &GameDefinition,
    options: &SolverOptions,
) -> Result<StrategyProfile> {
    options.validate()?;
    let domain = game.profile_domain();
    let sampling = game.profile_sampling_box();
    let lbfgs = BoxLbfgs {
        max_iter: options.max_inner.max(500),
        ..Default::default()
    };
    let run = |k: usize| {
        let x0 = if k == 0 {
            sampling.center()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            rng.set_stream(k as u64);
            sampling.sample(&mut rng)
        };
        let mut fg = |x: &[f64]| {
            let f = objective.internal_value(x);
            let g = objective.internal_gradient(x).ok()?;
            f.is_finite().then_some((f, g))
        };
        (k, lbfgs.minimize(&mut fg, &x0, domain.lower(), domain.upper()))
    };
    let outcomes: Vec<_> = if options.parallel {
        (0..options.n_starts).into_par_iter().map(run).collect()
    } else {
        (0..options.n_starts).map(run).collect()
    };
    let best = outcomes
        .into_iter()
        .filter(|(_, o)| o.value.is_finite())
        .min_by(|(ka, a), (kb, b)| {
            let scale = a.value.abs().max(b.value.abs()).max(1.0);
            if (a.value - b.value).abs() <= 1e-12 * scale {
                ka.cmp(kb)
            } else {
                a.value.total_cmp(&b.value)
            }
        });
    match best {
        Some((_, o)) => game.profile_from_flat(&o.x),
        None => Err(Error::NonFinite {
            context: format!("coordinator objective at all {} starts", options.n_starts),
            point: sampling.center(),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetAssignment {
    pub x_star: StrategyProfile,
    pub targets: Vec<f64>,
}

/// `J_i(x*)` for every player.
pub fn compute_targets(game: &GameDefinition, x_star: &StrategyProfile) -> Result<TargetAssignment> {
    let flat = game.flatten_checked(x_star)?;
    let targets = game.players().map(|i| game.value_flat(i, &flat)).collect();
    Ok(TargetAssignment {
        x_star: x_star.clone(),
        targets,
    })
}

/// Families keyed by opponent, from the point of view of one player.
pub type OpponentFamilies = BTreeMap<PlayerId, ConjectureFamily>;

pub fn opponent_families(families: &FamilyMap, i: PlayerId) -> OpponentFamilies {
    families
        .iter()
        .filter(|((a, _), _)| *a == i)
        .map(|((_, j), f)| (*j, f.clone()))
        .collect()
}

/// Initial `(x_i, θ_i)` for [`player_solve`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlayerInit {
    pub x_i: Vec<f64>,
    pub thetas: BTreeMap<PlayerId, Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PlayerStatus {
    Converged,
    MaxIter,
}

impl PlayerStatus {
    pub fn name(self) -> &'static str {
        match self {
            PlayerStatus::Converged => "converged",
            PlayerStatus::MaxIter => "max_iter",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlayerSolution {
    pub player: PlayerId,
    pub x_tilde_i: Vec<f64>,
    pub theta: BTreeMap<PlayerId, Vec<f64>>,
    /// Euclidean norm of `[∇(conjectured J_i); conjectured J_i − target]`.
    pub residual: f64,
    pub iterations: usize,
    pub status: PlayerStatus,
    pub rank_collapsed: bool,
}

struct Unknowns<'a> {
    view: &'a PlayerView,
    families: &'a OpponentFamilies,
    slots: Vec<(PlayerId, std::ops::Range<usize>)>,
    total: usize,
}

impl<'a> Unknowns<'a> {
    fn new(view: &'a PlayerView, families: &'a OpponentFamilies) -> Result<Self> {
        let mut at = view.own_dim();
        let mut slots = Vec::new();
        for j in view.opponents() {
            let fam = families.get(&j).ok_or(Error::MissingConjecture {
                i: view.player().0,
                j: j.0,
            })?;
            if fam.in_dim() != view.own_dim() || fam.out_dim() != view.dims()[j.0] {
                return Err(Error::dims(format!("family for opponent {}", j.0), view.dims()[j.0], fam.out_dim()));
            }
            slots.push((j, at..at + fam.param_dim()));
            at += fam.param_dim();
        }
        if families.len() != slots.len() {
            return Err(Error::InvalidParameter(format!(
                "{} families supplied for {} opponents",
                families.len(),
                slots.len()
            )));
        }
        Ok(Unknowns {
            view,
            families,
            slots,
            total: at,
        })
    }

    fn refs<'z>(&'z self, z: &'z [f64]) -> Vec<ConjectureRef<'z>> {
        self.slots
            .iter()
            .map(|(j, r)| ConjectureRef {
                target: *j,
                family: &self.families[j],
                theta: &z[r.clone()],
            })
            .collect()
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lower = self.view.own_domain().lower().to_vec();
        let mut upper = self.view.own_domain().upper().to_vec();
        for (j, _) in &self.slots {
            let d = self.families[j].param_domain();
            lower.extend_from_slice(d.lower());
            upper.extend_from_slice(d.upper());
        }
        (lower, upper)
    }

    fn pack(&self, init: &PlayerInit) -> Result<Vec<f64>> {
        if init.x_i.len() != self.view.own_dim() {
            return Err(Error::dims("initial strategy", self.view.own_dim(), init.x_i.len()));
        }
        let mut z = init.x_i.clone();
        for (j, r) in &self.slots {
            let t = init.thetas.get(j).ok_or(Error::MissingConjecture {
                i: self.view.player().0,
                j: j.0,
            })?;
            if t.len() != r.len() {
                return Err(Error::dims(format!("initial parameters for opponent {}", j.0), r.len(), t.len()));
            }
            z.extend_from_slice(t);
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("initial point", &z));
        }
        Ok(z)
    }

    fn clamps(&self, z: &[f64]) -> Result<bool> {
        let m = self.view.own_dim();
        Ok(conjectured_point(self.view, &self.refs(z), &z[..m])?.any_clamped())
    }

    fn residual(&self, z: &[f64], target: f64) -> Result<Vec<f64>> {
        let m = self.view.own_dim();
        let refs = self.refs(z);
        let point = conjectured_point(self.view, &refs, &z[..m])?;
        let mut r = conjectured_grad(self.view, &refs, &z[..m])?;
        r.push(self.view.value(&point.profile) - target);
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("player residual", z));
        }
        Ok(r)
    }
}

/// Levenberg–Marquardt on `[∇(conjectured J_i); conjectured J_i − target]`
/// over `(x_i, θ_i)`. Only player `i`'s view of the game is consulted.
pub fn player_solve(
    view: &PlayerView,
    families: &OpponentFamilies,
    target: f64,
    init: &PlayerInit,
    tol: f64,
    max_iter: usize,
) -> Result<PlayerSolution> {
    if !target.is_finite() {
        return Err(Error::InvalidParameter(format!("target must be finite, got {target}")));
    }
    let u = Unknowns::new(view, families)?;
    let rows = view.own_dim() + 1;
    if u.total < rows {
        return Err(Error::Precondition(format!(
            "{} unknowns cannot satisfy {rows} equations",
            u.total
        )));
    }
    let z0 = u.pack(init)?;
    let (lower, upper) = u.bounds();
    let lm = LevenbergMarquardt {
        max_iter,
        tol,
        ..Default::default()
    };
    let cols: Vec<usize> = (0..u.total).collect();
    // Clamped conjectures have flat parameter directions, so a start inside
    // the opponents' domains only accepts steps that stay inside.
    let guard = !u.clamps(&z0)?;
    let out = lm.solve(
        |z| {
            if guard && u.clamps(z)? {
                return Err(Error::OutOfDomain("conjecture left an opponent's domain".into()));
            }
            u.residual(z, target)
        },
        |z| numdiff::central_jacobian_cols(|p| u.residual(p, target), z, &cols, numdiff::gradient_step),
        &z0,
        &lower,
        &upper,
    )?;
    let m = view.own_dim();
    Ok(PlayerSolution {
        player: view.player(),
        x_tilde_i: out.x[..m].to_vec(),
        theta: u.slots.iter().map(|(j, r)| (*j, out.x[r.clone()].to_vec())).collect(),
        residual: out.residual_norm,
        iterations: out.iterations,
        status: if out.converged { PlayerStatus::Converged } else { PlayerStatus::MaxIter },
        rank_collapsed: out.rank_collapsed,
    })
}

fn fit_or_center(fam: &ConjectureFamily, x_i: &[f64], x_j: &[f64], alpha: &DMatrix<f64>) -> Vec<f64> {
    fam.fit_point_slope(x_i, x_j, alpha).unwrap_or_else(|_| {
        let fallback = BoxDomain::uniform(fam.param_dim(), 0.0, 0.0).expect("valid box");
        let mut t = fam.param_domain().bounded_by(&fallback).center();
        fam.param_domain().clamp_in_place(&mut t);
        t
    })
}

/// Starting guess in which every opponent is conjectured to mirror the
/// player's own strategy (`γ(x_i) = x_i` where dimensions agree), with `x_i`
/// at the centre of the player's sampling box.
pub fn mirror_init(view: &PlayerView, families: &OpponentFamilies) -> PlayerInit {
    let x_i = view.own_sampling_box().center();
    let m = view.own_dim();
    let thetas = families
        .iter()
        .map(|(j, fam)| {
            let mj = view.dims()[j.0];
            let (x_j, alpha) = if mj == m {
                (x_i.clone(), DMatrix::identity(mj, m))
            } else {
                (view.domain(*j).bounded_by(&BoxDomain::uniform(mj, 0.0, 0.0).expect("valid box")).center(), DMatrix::zeros(mj, m))
            };
            (*j, fit_or_center(fam, &x_i, &x_j, &alpha))
        })
        .collect();
    PlayerInit { x_i, thetas }
}

fn random_init(view: &PlayerView, families: &OpponentFamilies, rng: &mut ChaCha8Rng) -> PlayerInit {
    let sampling = view.own_sampling_box();
    let x_i = sampling.sample(rng);
    let m = view.own_dim();
    let thetas = families
        .iter()
        .map(|(j, fam)| {
            let mj = view.dims()[j.0];
            let x_j: Vec<f64> = if mj == m {
                sampling.sample(rng)
            } else {
                view.domain(*j).bounded_by(&BoxDomain::uniform(mj, -1.0, 1.0).expect("valid box")).sample(rng)
            };
            let alpha = DMatrix::from_fn(mj, m, |_, _| rng.random_range(-2.0..2.0));
            (*j, fit_or_center(fam, &x_i, &x_j, &alpha))
        })
        .collect();
    PlayerInit { x_i, thetas }
}

fn opponent_box(view: &PlayerView, j: PlayerId) -> BoxDomain {
    let mj = view.dims()[j.0];
    view.domain(j).bounded_by(&BoxDomain::uniform(mj, -10.0, 10.0).expect("valid box"))
}

/// Starting guess that already solves the player's system: a profile on the
/// level set `J_i = target` reached by scalar Newton steps from `w`, with
/// minimum-norm slopes `α_j = −∇_j J_i ∇_i J_iᵀ / ‖∇_{-i} J_i‖²` cancelling
/// the own gradient there.
fn level_set_init(view: &PlayerView, families: &OpponentFamilies, target: f64, mut w: Vec<f64>) -> Option<PlayerInit> {
    let project = |w: &mut [f64]| {
        for j in 0..view.n_players() {
            view.domain(PlayerId(j)).clamp_in_place(&mut w[view.block_range(PlayerId(j))]);
        }
    };
    project(&mut w);
    let (lower, upper): (Vec<f64>, Vec<f64>) = (0..view.n_players())
        .flat_map(|j| {
            let d = view.domain(PlayerId(j));
            d.lower().iter().copied().zip(d.upper().iter().copied()).collect::<Vec<_>>()
        })
        .unzip();
    let gap = |w: &[f64]| view.value(w) - target;
    let scale = 1e-13 * target.abs().max(1.0);
    let mut g = gap(&w);
    for _ in 0..200 {
        if !g.is_finite() {
            return None;
        }
        if g.abs() <= scale {
            break;
        }
        let mut grad = view.gradient(&w).ok()?;
        for (k, d) in grad.iter_mut().enumerate() {
            let down = -g * *d;
            if (down < 0.0 && w[k] <= lower[k]) || (down > 0.0 && w[k] >= upper[k]) {
                *d = 0.0;
            }
        }
        let n2: f64 = grad.iter().map(|v| v * v).sum();
        if !(n2 > 0.0) {
            return None;
        }
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let mut trial: Vec<f64> = w.iter().zip(&grad).map(|(wk, dk)| wk - t * g * dk / n2).collect();
            project(&mut trial);
            let gt = gap(&trial);
            if gt.is_finite() && gt.abs() < g.abs() {
                w = trial;
                g = gt;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            return None;
        }
    }
    if g.abs() > scale {
        return None;
    }
    let grad = view.gradient(&w).ok()?;
    let own = view.block_range(view.player());
    let g_i = &grad[own.clone()];
    let others2: f64 = view.opponents().flat_map(|j| grad[view.block_range(j)].to_vec()).map(|v| v * v).sum();
    if !(others2 > 0.0) && g_i.iter().any(|v| *v != 0.0) {
        return None;
    }
    let x_i = w[own].to_vec();
    let mut thetas = BTreeMap::new();
    for (j, fam) in families {
        let g_j = &grad[view.block_range(*j)];
        let alpha = if others2 > 0.0 {
            DMatrix::from_fn(g_j.len(), g_i.len(), |r, c| -g_j[r] * g_i[c] / others2)
        } else {
            DMatrix::zeros(g_j.len(), g_i.len())
        };
        thetas.insert(*j, fam.fit_point_slope(&x_i, &w[view.block_range(*j)], &alpha).ok()?);
    }
    Some(PlayerInit { x_i, thetas })
}

/// Distinct roots from several starts of [`player_solve`].
#[derive(Debug, Clone, Serialize)]
pub struct PlayerRoots {
    /// Root closest to the supplied initial point in `x_i`, or the lowest
    /// residual attempt when no start converged.
    pub primary: PlayerSolution,
    /// Converged roots, pairwise more than [`ROOT_SEPARATION`] apart.
    pub roots: Vec<PlayerSolution>,
    pub attempts: usize,
    pub successes: usize,
}

pub const ROOT_SEPARATION: f64 = 1e-4;

fn stacked(s: &PlayerSolution) -> Vec<f64> {
    let mut v = s.x_tilde_i.clone();
    for t in s.theta.values() {
        v.extend_from_slice(t);
    }
    v
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Start 0 uses `init`. Odd starts begin on the level set `J_i = target`,
/// from the box centres for start 1 and from random profiles afterwards.
/// Even starts draw `x_i` from the sampling box and fit random-slope
/// conjectures through random opponent guesses.
#[allow(clippy::too_many_arguments)]
pub fn player_multistart(
    view: &PlayerView,
    families: &OpponentFamilies,
    target: f64,
    init: &PlayerInit,
    n_starts: usize,
    seed: u64,
    tol: f64,
    max_iter: usize,
) -> Result<PlayerRoots> {
    if n_starts == 0 {
        return Err(Error::InvalidParameter("n_starts must be positive".into()));
    }
    let mut solutions = Vec::with_capacity(n_starts);
    for k in 0..n_starts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(((view.player().0 as u64) << 32) | k as u64);
        let start = if k == 0 {
            init.clone()
        } else if k % 2 == 1 {
            let w: Vec<f64> = (0..view.n_players())
                .flat_map(|j| {
                    let b = if j == view.player().0 { view.own_sampling_box().clone() } else { opponent_box(view, PlayerId(j)) };
                    if k == 1 {
                        b.center()
                    } else {
                        b.sample(&mut rng)
                    }
                })
                .collect();
            match level_set_init(view, families, target, w) {
                Some(s) => s,
                None => random_init(view, families, &mut rng),
            }
        } else {
            random_init(view, families, &mut rng)
        };
        match player_solve(view, families, target, &start, tol, max_iter) {
            Ok(s) => solutions.push(s),
            Err(e) if k == 0 => return Err(e),
            Err(_) => {}
        }
    }
    let attempts = n_starts;
    let successes = solutions.iter().filter(|s| s.status == PlayerStatus::Converged).count();
    let mut roots: Vec<PlayerSolution> = Vec::new();
    for s in solutions.iter().filter(|s| s.status == PlayerStatus::Converged) {
        let v = stacked(s);
        if roots.iter().all(|r| dist(&stacked(r), &v) > ROOT_SEPARATION) {
            roots.push(s.clone());
        }
    }
    let primary = if roots.is_empty() {
        solutions
            .iter()
            .min_by(|a, b| a.residual.total_cmp(&b.residual))
            .cloned()
            .expect("start 0 always yields a solution")
    } else {
        roots
            .iter()
            .min_by(|a, b| dist(&a.x_tilde_i, &init.x_i).total_cmp(&dist(&b.x_tilde_i, &init.x_i)))
            .cloned()
            .expect("nonempty")
    };
    Ok(PlayerRoots {
        primary,
        roots,
        attempts,
        successes,
    })
}

#[derive(Debug, Clone)]
pub struct DecentralizedOutcome {
    pub assignment: TargetAssignment,
    pub x_tilde: StrategyProfile,
    pub theta_tilde: ConjectureSet,
    /// `ℱ(x*) − ℱ(x̃)` in the coordinator's natural sense.
    pub delta: f64,
    /// `‖x̃ − x*‖`.
    pub distance: f64,
    pub players: Vec<PlayerRoots>,
}

impl DecentralizedOutcome {
    pub fn all_converged(&self) -> bool {
        self.players.iter().all(|p| p.primary.status == PlayerStatus::Converged)
    }
}

/// Player-side settings for [`assemble_decentralized`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlayerSolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub n_starts: usize,
}

impl Default for PlayerSolveOptions {
    fn default() -> Self {
        PlayerSolveOptions {
            tol: 1e-8,
            max_iter: 200,
            n_starts: 8,
        }
    }
}

/// Coordinator step, target broadcast and independent player solves.
pub fn assemble_decentralized(
    game: &GameDefinition,
    families: &FamilyMap,
    objective: &CoordinatorObjective,
    options: &SolverOptions,
    player_options: &PlayerSolveOptions,
) -> Result<DecentralizedOutcome> {
    let x_star = coordinator_select_target(objective, game, options)?;
    let assignment = compute_targets(game, &x_star)?;
    let solve = |i: PlayerId| {
        let view = game.player_view(i);
        let fams = opponent_families(families, i);
        let init = mirror_init(&view, &fams);
        player_multistart(
            &view,
            &fams,
            assignment.targets[i.0],
            &init,
            player_options.n_starts,
            options.seed,
            player_options.tol,
            player_options.max_iter,
        )
    };
    let ids: Vec<PlayerId> = game.players().collect();
    let players: Vec<PlayerRoots> = if options.parallel {
        ids.par_iter().map(|i| solve(*i)).collect::<Result<_>>()?
    } else {
        ids.iter().map(|i| solve(*i)).collect::<Result<_>>()?
    };
    let x_tilde = StrategyProfile::new(players.iter().map(|p| p.primary.x_tilde_i.clone()).collect());
    let mut entries = Vec::new();
    for p in &players {
        for (j, theta) in &p.primary.theta {
            let fam = families[&(p.primary.player, *j)].clone();
            entries.push(((p.primary.player, *j), ConjectureEntry::new(fam, theta.clone())?));
        }
    }
    let theta_tilde = ConjectureSet::new(game.n_players(), entries)?;
    let f_star = objective.value(&x_star.flatten());
    let f_tilde = objective.value(&x_tilde.flatten());
    Ok(DecentralizedOutcome {
        delta: if f_star == f_tilde { 0.0 } else { f_star - f_tilde },
        distance: x_tilde.distance(&x_star),
        assignment,
        x_tilde,
        theta_tilde,
        players,
    })
}
