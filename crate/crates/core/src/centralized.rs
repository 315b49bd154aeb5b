//! Centralized conjecture design: the coordinator picks the profile and
//! every conjecture parameter at once, subject to the players' conjectured
//! stationarity and a consistency requirement.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conjecture::{
    conjectured_grad, conjectured_point, ConjectureEntry, ConjectureFamily, ConjectureRef, ConjectureSet, FamilyKind,
};
use crate::consistency::{self, best_response_columns, ConsistencyReport, Orders};
use crate::convexity::{check_pseudo_convexity, PseudoConvexityReport};
use crate::decentralized::coordinator_select_target;
use crate::error::{Error, Result};
use crate::game::{GameDefinition, PlayerView};
use crate::objective::CoordinatorObjective;
use crate::optim::{AugmentedLagrangian, ConstraintBlock, EqualityProgram};
use crate::profile::{BoxDomain, PlayerId, StrategyProfile};

/// Conjecture family for every ordered pair `(i, j)`.
pub type FamilyMap = BTreeMap<(PlayerId, PlayerId), ConjectureFamily>;

/// Same family kind for every pair, shaped by the game's block sizes.
pub fn uniform_families(game: &GameDefinition, kind: FamilyKind) -> Result<FamilyMap> {
    let mut map = BTreeMap::new();
    for i in game.players() {
        for j in game.players().filter(|j| *j != i) {
            map.insert((i, j), ConjectureFamily::of_kind(kind, game.dim(i), game.dim(j))?);
        }
    }
    Ok(map)
}

fn check_families(game: &GameDefinition, families: &FamilyMap) -> Result<()> {
    let n = game.n_players();
    if families.len() != n * (n - 1) {
        return Err(Error::InvalidParameter(format!(
            "{} conjecture families supplied, {} pairs expected",
            families.len(),
            n * (n - 1)
        )));
    }
    for i in game.players() {
        for j in game.players().filter(|j| *j != i) {
            let f = families.get(&(i, j)).ok_or(Error::MissingConjecture { i: i.0, j: j.0 })?;
            if f.in_dim() != game.dim(i) || f.out_dim() != game.dim(j) {
                return Err(Error::dims(format!("family ({}, {})", i.0, j.0), game.dim(j), f.out_dim()));
            }
        }
    }
    Ok(())
}

/// Which consistency constraints accompany conjectured stationarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DesignMode {
    /// First-order consistency `γ_i^j(x_i) = x_j`.
    #[serde(rename = "CS", alias = "cs")]
    Cs,
    /// Zeroth-order consistency `J_i(x_i, γ(x_i)) = J_i(x)`.
    #[serde(rename = "CW", alias = "cw")]
    Cw,
    /// First- and second-order consistency.
    #[serde(rename = "CS2", alias = "cs2")]
    Cs2,
}

impl DesignMode {
    pub fn name(self) -> &'static str {
        match self {
            DesignMode::Cs => "CS",
            DesignMode::Cw => "CW",
            DesignMode::Cs2 => "CS2",
        }
    }

    pub(crate) fn orders(self) -> Orders {
        Orders {
            order0: self == DesignMode::Cw,
            order1: self != DesignMode::Cw,
            order2: self == DesignMode::Cs2,
            strict: false,
        }
    }
}

impl std::str::FromStr for DesignMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cs" => Ok(DesignMode::Cs),
            "cw" => Ok(DesignMode::Cw),
            "cs2" => Ok(DesignMode::Cs2),
            other => Err(Error::InvalidParameter(format!("unknown design mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub n_starts: usize,
    pub max_outer: usize,
    pub max_inner: usize,
    pub constraint_tol: f64,
    pub penalty_init: f64,
    pub penalty_growth: f64,
    pub seed: u64,
    /// Run starts on the rayon pool.
    pub parallel: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            n_starts: 8,
            max_outer: 30,
            max_inner: 300,
            constraint_tol: 1e-8,
            penalty_init: 10.0,
            penalty_growth: 10.0,
            seed: 0,
            parallel: true,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.n_starts > 0
            && self.max_outer > 0
            && self.max_inner > 0
            && self.constraint_tol > 0.0
            && self.constraint_tol < 1.0
            && self.penalty_init > 0.0
            && self.penalty_growth > 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid solver options {self:?}")))
        }
    }
}

#[derive(Debug, Clone)]
pub struct DesignProblem {
    pub game: GameDefinition,
    pub families: FamilyMap,
    pub objective: CoordinatorObjective,
    pub mode: DesignMode,
    pub options: SolverOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    Infeasible,
}

impl SolveStatus {
    pub fn name(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone)]
pub struct DesignSolution {
    pub x_star: StrategyProfile,
    pub theta_star: ConjectureSet,
    /// `ℱ(x*)` in the coordinator's natural sense.
    pub objective_value: f64,
    pub report: ConsistencyReport,
    pub status: SolveStatus,
    pub starts_tried: usize,
    pub best_start_index: usize,
}

/// Position of every unknown inside the stacked vector `z = [x; θ]`.
struct Layout {
    n_x: usize,
    theta: BTreeMap<(PlayerId, PlayerId), std::ops::Range<usize>>,
    total: usize,
}

impl Layout {
    fn new(game: &GameDefinition, families: &FamilyMap) -> Self {
        let n_x = game.total_dim();
        let mut at = n_x;
        let mut theta = BTreeMap::new();
        for (pair, fam) in families {
            theta.insert(*pair, at..at + fam.param_dim());
            at += fam.param_dim();
        }
        Layout { n_x, theta, total: at }
    }

    fn player_thetas(&self, i: PlayerId) -> impl Iterator<Item = (PlayerId, std::ops::Range<usize>)> + '_ {
        self.theta.range((i, PlayerId(0))..(PlayerId(i.0 + 1), PlayerId(0))).map(|((_, j), r)| (*j, r.clone()))
    }

    fn refs<'a>(&self, families: &'a FamilyMap, i: PlayerId, z: &'a [f64]) -> Vec<ConjectureRef<'a>> {
        self.player_thetas(i)
            .map(|(j, r)| ConjectureRef {
                target: j,
                family: &families[&(i, j)],
                theta: &z[r],
            })
            .collect()
    }

    fn pack(&self, x: &[f64], set: &ConjectureSet) -> Vec<f64> {
        let mut z = vec![0.0; self.total];
        z[..self.n_x].copy_from_slice(x);
        for ((i, j), r) in &self.theta {
            z[r.clone()].copy_from_slice(&set.get(*i, *j).expect("complete set").theta);
        }
        z
    }

    fn unpack(&self, game: &GameDefinition, families: &FamilyMap, z: &[f64]) -> Result<(StrategyProfile, ConjectureSet)> {
        let x = game.profile_from_flat(&z[..self.n_x])?;
        let entries = self.theta.iter().map(|(pair, r)| {
            (
                *pair,
                ConjectureEntry {
                    family: families[pair].clone(),
                    theta: z[r.clone()].to_vec(),
                },
            )
        });
        Ok((x, ConjectureSet::new(game.n_players(), entries)?))
    }
}

fn vars_of(game: &GameDefinition, layout: &Layout, i: PlayerId, all_x: bool) -> Vec<usize> {
    let mut vars: Vec<usize> = if all_x {
        (0..layout.n_x).collect()
    } else {
        game.block_range(i).collect()
    };
    for (_, r) in layout.player_thetas(i) {
        vars.extend(r);
    }
    vars
}

fn build_program<'a>(
    problem: &'a DesignProblem,
    layout: &'a Layout,
    views: &'a [PlayerView],
) -> EqualityProgram<'a> {
    let game = &problem.game;
    let families = &problem.families;
    let n_x = layout.n_x;
    let mut lower = game.profile_domain().lower().to_vec();
    let mut upper = game.profile_domain().upper().to_vec();
    lower.resize(layout.total, 0.0);
    upper.resize(layout.total, 0.0);
    for (pair, r) in &layout.theta {
        let dom = families[pair].param_domain();
        lower[r.clone()].copy_from_slice(dom.lower());
        upper[r.clone()].copy_from_slice(dom.upper());
    }
    let objective = &problem.objective;
    let total = layout.total;
    let obj = move |z: &[f64]| {
        let x = &z[..n_x];
        let f = objective.internal_value(x);
        if !f.is_finite() {
            return None;
        }
        let g = objective.internal_gradient(x).ok()?;
        let mut full = vec![0.0; total];
        full[..n_x].copy_from_slice(&g);
        Some((f, full))
    };

    let mut blocks = Vec::new();
    for i in game.players() {
        let view = &views[i.0];
        let range = game.block_range(i);
        blocks.push(ConstraintBlock {
            vars: vars_of(game, layout, i, false),
            eval: Box::new(move |z: &[f64]| conjectured_grad(view, &layout.refs(families, i, z), &z[range.clone()])),
        });
    }
    match problem.mode {
        DesignMode::Cw => {
            for i in game.players() {
                let view = &views[i.0];
                let range = game.block_range(i);
                blocks.push(ConstraintBlock {
                    vars: vars_of(game, layout, i, true),
                    eval: Box::new(move |z: &[f64]| {
                        let point = conjectured_point(view, &layout.refs(families, i, z), &z[range.clone()])?;
                        Ok(vec![view.value(&point.profile) - view.value(&z[..n_x])])
                    }),
                });
            }
        }
        DesignMode::Cs | DesignMode::Cs2 => {
            for ((i, j), r) in &layout.theta {
                let (i, j, r) = (*i, *j, r.clone());
                let fam = &families[&(i, j)];
                let ri = game.block_range(i);
                let rj = game.block_range(j);
                let mut vars: Vec<usize> = ri.clone().chain(rj.clone()).collect();
                vars.extend(r.clone());
                blocks.push(ConstraintBlock {
                    vars,
                    eval: Box::new(move |z: &[f64]| {
                        let pred = fam.eval(&z[ri.clone()], &z[r.clone()]);
                        Ok(pred.iter().zip(&z[rj.clone()]).map(|(p, q)| p - q).collect())
                    }),
                });
            }
        }
    }
    if problem.mode == DesignMode::Cs2 {
        for ((i, j), r) in &layout.theta {
            let (i, j, r) = (*i, *j, r.clone());
            let fam = &families[&(i, j)];
            let ri = game.block_range(i);
            let cols = best_response_columns(game, j, i);
            let mut vars: Vec<usize> = (0..n_x).collect();
            vars.extend(r.clone());
            blocks.push(ConstraintBlock {
                vars,
                eval: Box::new(move |z: &[f64]| {
                    let br = game.best_response_map_jacobian(j, &z[..n_x])?;
                    let jac = fam.jacobian(&z[ri.clone()], &z[r.clone()]);
                    let mut out = Vec::with_capacity(jac.len());
                    for row in 0..jac.nrows() {
                        for (c, col) in cols.clone().enumerate() {
                            out.push(jac[(row, c)] - br[(row, col)]);
                        }
                    }
                    Ok(out)
                }),
            });
        }
    }
    EqualityProgram {
        lower,
        upper,
        objective: Box::new(obj),
        blocks,
    }
}

/// Conjectures of player `i` that make `x` conjectured-stationary for `i`
/// and first-order consistent, from the solution-map Jacobian of the level
/// set of `J_i` through `x`.
pub fn construct_player_conjectures(
    game: &GameDefinition,
    families: &FamilyMap,
    i: PlayerId,
    x: &StrategyProfile,
) -> Result<Vec<(PlayerId, ConjectureEntry)>> {
    let flat = game.flatten_checked(x)?;
    let level = game.value_flat(i, &flat);
    let alpha = game.solution_map_jacobian_at_level(i, x, level)?;
    let mut row = 0;
    let mut out = Vec::new();
    for j in game.players().filter(|j| *j != i) {
        let mj = game.dim(j);
        let block: DMatrix<f64> = alpha.rows(row, mj).into_owned();
        row += mj;
        let fam = families.get(&(i, j)).ok_or(Error::MissingConjecture { i: i.0, j: j.0 })?;
        let theta = fam.fit_point_slope(&flat[game.block_range(i)], &flat[game.block_range(j)], &block)?;
        out.push((j, ConjectureEntry::new(fam.clone(), theta)?));
    }
    Ok(out)
}

fn feasible_thetas(game: &GameDefinition, families: &FamilyMap, x: &StrategyProfile) -> Result<ConjectureSet> {
    let mut entries = Vec::new();
    if game.n_players() > 1 {
        for i in game.players() {
            for (j, e) in construct_player_conjectures(game, families, i, x)? {
                entries.push(((i, j), e));
            }
        }
    }
    ConjectureSet::new(game.n_players(), entries)
}

/// Builds `(x, θ)` satisfying conjectured stationarity and first-order
/// consistency at a common point `x̂`, rescaling each `J_i` so that `x̂` lies
/// on its zero level set. All per-player points must coincide.
pub fn construct_feasible_point(
    game: &GameDefinition,
    families: &FamilyMap,
    xhat_per_player: &[StrategyProfile],
) -> Result<(StrategyProfile, ConjectureSet)> {
    check_families(game, families)?;
    if xhat_per_player.len() != game.n_players() {
        return Err(Error::dims("level-set points", game.n_players(), xhat_per_player.len()));
    }
    let x = xhat_per_player[0].clone();
    game.flatten_checked(&x)?;
    for (i, other) in xhat_per_player.iter().enumerate().skip(1) {
        game.flatten_checked(other)?;
        if x.distance(other) > 1e-12 {
            return Err(Error::Precondition(format!(
                "level-set point of player {i} differs from player 0's; a consistent profile needs one common point"
            )));
        }
    }
    let set = feasible_thetas(game, families, &x)?;
    Ok((x, set))
}

struct StartResult {
    index: usize,
    x: StrategyProfile,
    set: ConjectureSet,
    objective: f64,
    internal: f64,
    report: ConsistencyReport,
    status: SolveStatus,
}

fn rank_cmp(a: &StartResult, b: &StartResult) -> Ordering {
    a.status.cmp(&b.status).then_with(|| {
        let scale = a.internal.abs().max(b.internal.abs()).max(1.0);
        let fa = if a.internal.is_nan() { f64::INFINITY } else { a.internal };
        let fb = if b.internal.is_nan() { f64::INFINITY } else { b.internal };
        if (fa - fb).abs() <= 1e-12 * scale {
            Ordering::Equal
        } else {
            fa.total_cmp(&fb)
        }
        .then_with(|| {
            let ra = if a.report.max_residual.is_nan() { f64::INFINITY } else { a.report.max_residual };
            let rb = if b.report.max_residual.is_nan() { f64::INFINITY } else { b.report.max_residual };
            ra.total_cmp(&rb)
        })
        .then(a.index.cmp(&b.index))
    })
}

fn start_point(problem: &DesignProblem, layout: &Layout, index: usize, anchor: &StrategyProfile) -> Result<Vec<f64>> {
    let game = &problem.game;
    let x = if index == 0 {
        anchor.clone()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(problem.options.seed);
        rng.set_stream(index as u64);
        game.profile_from_flat(&game.profile_sampling_box().sample(&mut rng))?
    };
    let set = match feasible_thetas(game, &problem.families, &x) {
        Ok(set) => set,
        Err(_) => constant_conjectures(game, &problem.families, &x)?,
    };
    Ok(layout.pack(&x.flatten(), &set))
}

/// `γ_i^j ≡ x_j`, used when the level-set construction is singular.
fn constant_conjectures(game: &GameDefinition, families: &FamilyMap, x: &StrategyProfile) -> Result<ConjectureSet> {
    let flat = x.flatten();
    let mut entries = Vec::new();
    for ((i, j), fam) in families {
        let zero = DMatrix::zeros(game.dim(*j), game.dim(*i));
        let theta = match fam.fit_point_slope(&flat[game.block_range(*i)], &flat[game.block_range(*j)], &zero) {
            Ok(t) => t,
            Err(_) => fam.param_domain().bounded_by(&BoxDomain::uniform(fam.param_dim(), 0.0, 0.0)?).center(),
        };
        entries.push(((*i, *j), ConjectureEntry::new(fam.clone(), theta)?));
    }
    ConjectureSet::new(game.n_players(), entries)
}

fn run_start(problem: &DesignProblem, layout: &Layout, program: &EqualityProgram<'_>, index: usize, anchor: &StrategyProfile) -> Result<StartResult> {
    let z0 = start_point(problem, layout, index, anchor)?;
    let al = AugmentedLagrangian {
        max_outer: problem.options.max_outer,
        max_inner: problem.options.max_inner,
        tol: problem.options.constraint_tol,
        penalty_init: problem.options.penalty_init,
        penalty_growth: problem.options.penalty_growth,
        ..Default::default()
    };
    let out = al.solve(program, &z0)?;
    let (x, set) = layout.unpack(&problem.game, &problem.families, &out.z)?;
    let report = match consistency::evaluate(&problem.game, &set, &x, problem.mode.orders()) {
        Ok(r) => r,
        Err(Error::Singular(msg)) => return Err(Error::Singular(msg)),
        Err(_) => infeasible_report(problem.game.n_players()),
    };
    let tol = problem.options.constraint_tol;
    let status = if !(report.max_residual <= tol) {
        SolveStatus::Infeasible
    } else if out.stationary {
        SolveStatus::Converged
    } else {
        SolveStatus::MaxIter
    };
    let flat = x.flatten();
    Ok(StartResult {
        index,
        objective: problem.objective.value(&flat),
        internal: problem.objective.internal_value(&flat),
        x,
        set,
        report,
        status,
    })
}

fn infeasible_report(n: usize) -> ConsistencyReport {
    ConsistencyReport {
        stationarity: vec![f64::INFINITY; n],
        order0: None,
        order1: None,
        order2: None,
        clamped: vec![false; n],
        max_residual: f64::INFINITY,
    }
}

/// Solves the coordinator's design program by multistart augmented
/// Lagrangian. Start 0 relaxes the constraints (minimizes `ℱ` over the box)
/// and then builds consistent conjectures at that profile; the other starts
/// draw the profile from the sampling box.
pub fn solve_centralized(problem: &DesignProblem) -> Result<DesignSolution> {
    problem.options.validate()?;
    let game = &problem.game;
    check_families(game, &problem.families)?;
    let layout = Layout::new(game, &problem.families);
    let views: Vec<PlayerView> = game.players().map(|i| game.player_view(i)).collect();
    let anchor = coordinator_select_target(&problem.objective, game, &problem.options)?;
    if problem.mode == DesignMode::Cs2 {
        let mut candidates = vec![anchor.clone()];
        for k in 1..problem.options.n_starts {
            let mut rng = ChaCha8Rng::seed_from_u64(problem.options.seed);
            rng.set_stream(k as u64);
            candidates.push(game.profile_from_flat(&game.profile_sampling_box().sample(&mut rng))?);
        }
        for x in &candidates {
            let flat = x.flatten();
            for j in game.players() {
                if let Err(e @ Error::Singular(_)) = game.best_response_map_jacobian(j, &flat) {
                    return Err(e);
                }
            }
        }
    }
    let program = build_program(problem, &layout, &views);
    let run = |k: usize| run_start(problem, &layout, &program, k, &anchor);
    let results: Vec<Result<StartResult>> = if problem.options.parallel {
        (0..problem.options.n_starts).into_par_iter().map(run).collect()
    } else {
        (0..problem.options.n_starts).map(run).collect()
    };
    let mut ok = Vec::new();
    let mut first_err = None;
    for r in results {
        match r {
            Ok(r) => ok.push(r),
            Err(e @ Error::Singular(_)) => return Err(e),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let best = ok.into_iter().min_by(rank_cmp).ok_or_else(|| {
        first_err.unwrap_or_else(|| Error::InvalidParameter("no start could be evaluated".into()))
    })?;
    Ok(DesignSolution {
        x_star: best.x,
        theta_star: best.set,
        objective_value: best.objective,
        report: best.report,
        status: best.status,
        starts_tried: problem.options.n_starts,
        best_start_index: best.index,
    })
}

/// Result of letting every player optimize its conjectured objective.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InducedEquilibrium {
    pub x: StrategyProfile,
    /// Projected conjectured-gradient norm per player at the end.
    pub gradient_norms: Vec<f64>,
    pub steps: Vec<usize>,
    pub converged: bool,
}

fn internal_conjectured(view: &PlayerView, refs: &[ConjectureRef<'_>], x_i: &[f64]) -> Option<(f64, Vec<f64>)> {
    let s = view.sense().sign();
    let point = conjectured_point(view, refs, x_i).ok()?;
    let f = s * view.value(&point.profile);
    if !f.is_finite() {
        return None;
    }
    let g = conjectured_grad(view, refs, x_i).ok()?;
    Some((f, g.into_iter().map(|v| s * v).collect()))
}

/// Projected gradient descent with Armijo backtracking on one player's
/// conjectured objective; the player sees only its own view and conjectures.
fn descend(view: &PlayerView, refs: &[ConjectureRef<'_>], x0: &[f64], step: f64, max_steps: usize, tol: f64) -> Result<(Vec<f64>, f64, usize)> {
    let dom = view.own_domain();
    let mut x = x0.to_vec();
    dom.clamp_in_place(&mut x);
    let (mut f, mut g) = internal_conjectured(view, refs, &x).ok_or_else(|| {
        Error::non_finite(format!("conjectured objective of player {}", view.player().0), &x)
    })?;
    let pg = |x: &[f64], g: &[f64]| {
        let mut y: Vec<f64> = x.iter().zip(g).map(|(a, b)| a - b).collect();
        dom.clamp_in_place(&mut y);
        y.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    };
    let mut res = pg(&x, &g);
    let mut trial_step = step;
    let mut k = 0;
    while res > tol && k < max_steps {
        k += 1;
        let mut t = trial_step;
        let mut moved = false;
        for _ in 0..80 {
            let mut y: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - t * b).collect();
            dom.clamp_in_place(&mut y);
            let decrease: f64 = g.iter().zip(y.iter().zip(&x)).map(|(gk, (a, b))| gk * (a - b)).sum();
            if let Some((fy, gy)) = internal_conjectured(view, refs, &y) {
                if fy <= f + 1e-4 * decrease {
                    let s: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
                    let d: Vec<f64> = gy.iter().zip(&g).map(|(a, b)| a - b).collect();
                    let sy: f64 = s.iter().zip(&d).map(|(a, b)| a * b).sum();
                    let ss: f64 = s.iter().map(|a| a * a).sum();
                    trial_step = if sy > 0.0 { (ss / sy).clamp(1e-12, 1e12) } else { (2.0 * t).min(1e12) };
                    x = y;
                    f = fy;
                    g = gy;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        res = pg(&x, &g);
        if !moved {
            break;
        }
    }
    Ok((x, res, k))
}

/// Every player independently minimizes its (minimization-form)
/// conjectured objective from `x0`.
pub fn induce_equilibrium(
    game: &GameDefinition,
    set: &ConjectureSet,
    x0: &StrategyProfile,
    step: f64,
    max_steps: usize,
    tol: f64,
) -> Result<InducedEquilibrium> {
    set.validate_for(game)?;
    let flat = game.flatten_checked(x0)?;
    if !(step > 0.0) {
        return Err(Error::InvalidParameter(format!("step must be positive, got {step}")));
    }
    let mut blocks = Vec::new();
    let mut norms = Vec::new();
    let mut steps = Vec::new();
    for i in game.players() {
        let view = game.player_view(i);
        let conj = set.player(i);
        let (x_i, res, k) = descend(&view, &conj.refs(), &flat[game.block_range(i)], step, max_steps, tol)?;
        blocks.push(x_i);
        norms.push(res);
        steps.push(k);
    }
    let converged = norms.iter().all(|r| *r <= tol);
    Ok(InducedEquilibrium {
        x: StrategyProfile::new(blocks),
        gradient_norms: norms,
        steps,
        converged,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub trials: usize,
    pub deviations: Vec<f64>,
    pub max_deviation: f64,
    /// Sampling check of each player's minimization-form conjectured objective.
    pub pseudo_convexity: Vec<PseudoConvexityReport>,
    /// A trial missed `x*` by more than 1e-4 although no pseudo-convexity
    /// violation was found.
    pub theorem_violation: bool,
    /// Some conjectured objective is not pseudo-convex or some trial missed `x*`.
    pub induction_unsafe: bool,
    pub solution_converged: bool,
}

/// Deviation threshold between induced and designed profiles.
pub const INDUCTION_TOL: f64 = 1e-4;

/// Runs [`induce_equilibrium`] from `n_trials` random starts and samples the
/// players' conjectured objectives for pseudo-convexity violations.
pub fn verify_design(problem: &DesignProblem, solution: &DesignSolution, n_trials: usize) -> Result<VerificationReport> {
    let game = &problem.game;
    let set = &solution.theta_star;
    let mut pseudo = Vec::new();
    for i in game.players() {
        let view = game.player_view(i);
        let conj = set.player(i);
        let refs = conj.refs();
        let f = |x: &[f64]| internal_conjectured(&view, &refs, x).map(|(f, _)| f).unwrap_or(f64::NAN);
        let seed = problem.options.seed.wrapping_add(1000 + i.0 as u64);
        pseudo.push(check_pseudo_convexity(f, game.sampling_box(i), 2000, seed, &[])?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(problem.options.seed);
    rng.set_stream(u64::MAX);
    let sampling = game.profile_sampling_box();
    let mut deviations = Vec::with_capacity(n_trials);
    for _ in 0..n_trials {
        let mut x0 = None;
        for _ in 0..1000 {
            let cand = game.profile_from_flat(&sampling.sample(&mut rng))?;
            let finite = game.players().all(|i| {
                let view = game.player_view(i);
                let conj = set.player(i);
                internal_conjectured(&view, &conj.refs(), cand.block(i)).is_some()
            });
            if finite {
                x0 = Some(cand);
                break;
            }
        }
        let Some(x0) = x0 else {
            deviations.push(f64::INFINITY);
            continue;
        };
        let induced = induce_equilibrium(game, set, &x0, 1.0, 20_000, 1e-10)?;
        deviations.push(induced.x.distance(&solution.x_star));
    }
    let max_deviation = deviations.iter().fold(0.0_f64, |m, d| m.max(*d));
    let violated = pseudo.iter().any(|p| p.is_violated);
    let missed = max_deviation > INDUCTION_TOL;
    Ok(VerificationReport {
        trials: n_trials,
        deviations,
        max_deviation,
        pseudo_convexity: pseudo,
        theorem_violation: missed && !violated,
        induction_unsafe: missed || violated,
        solution_converged: solution.status == SolveStatus::Converged,
    })
}
