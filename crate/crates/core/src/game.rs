//! Smooth N-player games.
//!
//! Objectives are stored in their natural sense (what the player maximizes
//! or minimizes). Every solver works on the minimization form obtained by
//! multiplying with [`Sense::sign`]; public evaluators report natural values.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numdiff;
use crate::optim::LevenbergMarquardt;
use crate::profile::{BoxDomain, PlayerId, Sense, StrategyProfile};

/// Tolerance on `|J_i(x̂)|` for level-set points used by the solution map.
pub const LEVEL_SET_TOL: f64 = 1e-8;

/// Tolerance on `‖∇_j J_j‖` for points on a best-response manifold.
pub const BEST_RESPONSE_TOL: f64 = 1e-6;

pub type ValueFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A player's objective `J_i: R^m -> R`, with an optional analytic gradient
/// over the full profile.
#[derive(Clone)]
pub struct PlayerObjective {
    value: ValueFn,
    gradient: Option<GradientFn>,
}

impl PlayerObjective {
    pub fn new(value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        PlayerObjective {
            value: Arc::new(value),
            gradient: None,
        }
    }

    pub fn with_gradient(mut self, gradient: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.gradient = Some(Arc::new(gradient));
        self
    }

    pub fn has_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    /// Full gradient; analytic when supplied, otherwise central differences.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &self.gradient {
            Some(g) => {
                let grad = g(x);
                if grad.len() != x.len() {
                    return Err(Error::dims("analytic gradient", x.len(), grad.len()));
                }
                if grad.iter().any(|v| !v.is_finite()) {
                    return Err(Error::non_finite("analytic gradient", x));
                }
                Ok(grad)
            }
            None => {
                let v = self.value(x);
                if !v.is_finite() {
                    return Err(Error::non_finite("objective", x));
                }
                numdiff::central_gradient(|p| (self.value)(p), x)
            }
        }
    }

    /// Same objective scaled by `factor` (value and gradient).
    pub fn scaled(&self, factor: f64) -> PlayerObjective {
        let value = self.value.clone();
        let mut out = PlayerObjective::new(move |x| factor * value(x));
        if let Some(g) = self.gradient.clone() {
            out.gradient = Some(Arc::new(move |x: &[f64]| g(x).into_iter().map(|v| factor * v).collect()));
        }
        out
    }

    /// Same objective shifted by a constant.
    pub fn shifted(&self, offset: f64) -> PlayerObjective {
        let value = self.value.clone();
        PlayerObjective {
            value: Arc::new(move |x| value(x) + offset),
            gradient: self.gradient.clone(),
        }
    }
}

impl fmt::Debug for PlayerObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PlayerObjective")
            .field("analytic_gradient", &self.gradient.is_some())
            .finish()
    }
}

/// Root of the stacked own-gradients found by [`GameDefinition::nash_equilibrium`].
#[derive(Debug, Clone, PartialEq)]
pub struct NashPoint {
    pub x: StrategyProfile,
    /// `‖(∇_i J_i)_i‖` at `x`.
    pub residual: f64,
    pub converged: bool,
}

/// Construction input for one player.
#[derive(Debug, Clone)]
pub struct PlayerSpec {
    pub dim: usize,
    pub sense: Sense,
    pub domain: BoxDomain,
    pub objective: PlayerObjective,
    /// Finite box used by samplers; defaults to the domain with infinite
    /// bounds replaced by ±10.
    pub sampling: Option<BoxDomain>,
}

impl PlayerSpec {
    pub fn new(dim: usize, sense: Sense, domain: BoxDomain, objective: PlayerObjective) -> Self {
        PlayerSpec {
            dim,
            sense,
            domain,
            objective,
            sampling: None,
        }
    }

    pub fn sampling(mut self, sampling: BoxDomain) -> Self {
        self.sampling = Some(sampling);
        self
    }
}

/// Own and opponents' partial gradients of one player's objective.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    /// `∇_i J_i`, length `m_i`.
    pub own: Vec<f64>,
    /// `∇_{-i} J_i`, stacked in player order skipping `i`.
    pub others: Vec<f64>,
}

/// Immutable description of a smooth game.
#[derive(Debug, Clone)]
pub struct GameDefinition {
    name: String,
    dims: Vec<usize>,
    offsets: Vec<usize>,
    senses: Vec<Sense>,
    domains: Vec<BoxDomain>,
    sampling: Vec<BoxDomain>,
    objectives: Vec<PlayerObjective>,
}

impl GameDefinition {
    pub fn new(name: impl Into<String>, players: Vec<PlayerSpec>) -> Result<Self> {
        if players.is_empty() {
            return Err(Error::InvalidParameter("a game needs at least one player".into()));
        }
        let mut dims = Vec::with_capacity(players.len());
        let mut offsets = Vec::with_capacity(players.len());
        let mut senses = Vec::new();
        let mut domains = Vec::new();
        let mut sampling = Vec::new();
        let mut objectives = Vec::new();
        let mut at = 0;
        for (i, p) in players.into_iter().enumerate() {
            if p.dim == 0 {
                return Err(Error::InvalidParameter(format!("player {i} has zero dimension")));
            }
            if p.domain.dim() != p.dim {
                return Err(Error::dims(format!("domain of player {i}"), p.dim, p.domain.dim()));
            }
            let fallback = BoxDomain::uniform(p.dim, -10.0, 10.0)?;
            let samp = match p.sampling {
                Some(s) => {
                    if s.dim() != p.dim || !s.is_bounded() {
                        return Err(Error::InvalidParameter(format!(
                            "sampling box of player {i} must be finite with dimension {}",
                            p.dim
                        )));
                    }
                    s
                }
                None => p.domain.bounded_by(&fallback),
            };
            dims.push(p.dim);
            offsets.push(at);
            at += p.dim;
            senses.push(p.sense);
            domains.push(p.domain);
            sampling.push(samp);
            objectives.push(p.objective);
        }
        Ok(GameDefinition {
            name: name.into(),
            dims,
            offsets,
            senses,
            domains,
            sampling,
            objectives,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_players(&self) -> usize {
        self.dims.len()
    }

    pub fn players(&self) -> impl Iterator<Item = PlayerId> {
        (0..self.n_players()).map(PlayerId)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self, i: PlayerId) -> usize {
        self.dims[i.0]
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn offset(&self, i: PlayerId) -> usize {
        self.offsets[i.0]
    }

    pub fn block_range(&self, i: PlayerId) -> std::ops::Range<usize> {
        self.offsets[i.0]..self.offsets[i.0] + self.dims[i.0]
    }

    pub fn sense(&self, i: PlayerId) -> Sense {
        self.senses[i.0]
    }

    pub fn senses(&self) -> &[Sense] {
        &self.senses
    }

    pub fn domain(&self, i: PlayerId) -> &BoxDomain {
        &self.domains[i.0]
    }

    pub fn domains(&self) -> &[BoxDomain] {
        &self.domains
    }

    pub fn sampling_box(&self, i: PlayerId) -> &BoxDomain {
        &self.sampling[i.0]
    }

    pub fn sampling_boxes(&self) -> &[BoxDomain] {
        &self.sampling
    }

    pub fn objective(&self, i: PlayerId) -> &PlayerObjective {
        &self.objectives[i.0]
    }

    /// Concatenated domain over the full profile.
    pub fn profile_domain(&self) -> BoxDomain {
        concat_boxes(&self.domains)
    }

    /// Concatenated sampling box over the full profile.
    pub fn profile_sampling_box(&self) -> BoxDomain {
        concat_boxes(&self.sampling)
    }

    pub fn check_player(&self, i: PlayerId) -> Result<()> {
        if i.0 >= self.n_players() {
            return Err(Error::InvalidParameter(format!(
                "player {} out of range for a {}-player game",
                i.0,
                self.n_players()
            )));
        }
        Ok(())
    }

    /// Validates block shapes and returns the flattened profile.
    pub fn flatten_checked(&self, x: &StrategyProfile) -> Result<Vec<f64>> {
        if x.n_players() != self.n_players() {
            return Err(Error::dims("profile blocks", self.n_players(), x.n_players()));
        }
        for (i, (b, d)) in x.blocks().iter().zip(&self.dims).enumerate() {
            if b.len() != *d {
                return Err(Error::dims(format!("block of player {i}"), *d, b.len()));
            }
        }
        Ok(x.flatten())
    }

    pub fn profile_from_flat(&self, flat: &[f64]) -> Result<StrategyProfile> {
        StrategyProfile::from_flat(&self.dims, flat)
    }

    /// Whether every block lies in its domain.
    pub fn is_feasible(&self, x: &StrategyProfile) -> bool {
        x.n_players() == self.n_players()
            && x
                .blocks()
                .iter()
                .zip(&self.domains)
                .all(|(b, d)| d.contains(b))
    }

    /// `J_i(x)` in the player's natural sense.
    pub fn eval_objective(&self, i: PlayerId, x: &StrategyProfile) -> Result<f64> {
        self.check_player(i)?;
        let flat = self.flatten_checked(x)?;
        Ok(self.value_flat(i, &flat))
    }

    pub fn value_flat(&self, i: PlayerId, flat: &[f64]) -> f64 {
        self.objectives[i.0].value(flat)
    }

    /// Minimization-form value `sign_i * J_i`.
    pub fn internal_value_flat(&self, i: PlayerId, flat: &[f64]) -> f64 {
        self.senses[i.0].sign() * self.value_flat(i, flat)
    }

    /// Natural-sense full gradient of `J_i`.
    pub fn gradient_flat(&self, i: PlayerId, flat: &[f64]) -> Result<Vec<f64>> {
        self.objectives[i.0].gradient(flat)
    }

    pub fn eval_partial_gradients(&self, i: PlayerId, x: &StrategyProfile) -> Result<GradientBundle> {
        self.check_player(i)?;
        let flat = self.flatten_checked(x)?;
        let grad = self.gradient_flat(i, &flat)?;
        Ok(self.split_gradient(i, &grad))
    }

    pub fn split_gradient(&self, i: PlayerId, grad: &[f64]) -> GradientBundle {
        let range = self.block_range(i);
        let own = grad[range.clone()].to_vec();
        let others = grad[..range.start]
            .iter()
            .chain(&grad[range.end..])
            .copied()
            .collect();
        GradientBundle { own, others }
    }

    /// Equivalent game in which every player minimizes.
    pub fn to_minimization_form(&self) -> GameDefinition {
        let mut out = self.clone();
        for (k, sense) in out.senses.iter_mut().enumerate() {
            if *sense == Sense::Maximize {
                out.objectives[k] = self.objectives[k].scaled(-1.0);
                *sense = Sense::Minimize;
            }
        }
        out.name = format!("{} (minimization form)", self.name);
        out
    }

    /// Returns a copy with one player's objective replaced.
    pub fn with_objective(&self, i: PlayerId, objective: PlayerObjective) -> GameDefinition {
        let mut out = self.clone();
        out.objectives[i.0] = objective;
        out
    }

    /// Everything player `i` may know about the game: its own objective and
    /// the strategy spaces.
    pub fn player_view(&self, i: PlayerId) -> PlayerView {
        PlayerView {
            player: i,
            dims: self.dims.clone(),
            offsets: self.offsets.clone(),
            domains: self.domains.clone(),
            sampling: self.sampling[i.0].clone(),
            sense: self.senses[i.0],
            objective: self.objectives[i.0].clone(),
        }
    }

    /// Checks every analytic gradient against central differences at
    /// `n_points` random points of the sampling box where the objective is
    /// finite.
    pub fn validate_gradients(&self, n_points: usize, seed: u64, tol: f64) -> Result<GradientValidation> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sampling = self.profile_sampling_box();
        let mut report = GradientValidation::default();
        for i in self.players() {
            let obj = &self.objectives[i.0];
            let Some(analytic) = &obj.gradient else {
                continue;
            };
            let mut checked = 0;
            let mut attempts = 0;
            while checked < n_points && attempts < 50 * n_points.max(1) {
                attempts += 1;
                let x = sampling.sample(&mut rng);
                if !obj.value(&x).is_finite() {
                    continue;
                }
                let Ok(fd) = numdiff::central_gradient(|p| obj.value(p), &x) else {
                    continue;
                };
                let g = analytic(&x);
                for (k, (a, b)) in g.iter().zip(&fd).enumerate() {
                    let err = (a - b).abs() / (1.0 + a.abs().max(b.abs()));
                    report.max_error = report.max_error.max(err);
                    if !(err <= tol) {
                        return Err(Error::InvalidParameter(format!(
                            "analytic gradient of player {} disagrees with finite differences \
                             in coordinate {k} at {x:?}: {a} vs {b}",
                            i.0
                        )));
                    }
                }
                checked += 1;
            }
            report.points_checked += checked;
        }
        Ok(report)
    }

    /// Jacobian of the local selection of the level set `J_i = 0` through `x̂`:
    /// `-g^T (g g^T)^{-1} ∇_i J_i` with `g = ∇_{-i} J_i(x̂)`, shape `(m - m_i) × m_i`.
    pub fn solution_map_jacobian(&self, i: PlayerId, xhat: &StrategyProfile) -> Result<DMatrix<f64>> {
        self.solution_map_jacobian_at_level(i, xhat, 0.0)
    }

    /// Same as [`Self::solution_map_jacobian`] for the rescaled objective
    /// `J_i - level`.
    pub fn solution_map_jacobian_at_level(
        &self,
        i: PlayerId,
        xhat: &StrategyProfile,
        level: f64,
    ) -> Result<DMatrix<f64>> {
        self.check_player(i)?;
        let flat = self.flatten_checked(xhat)?;
        let gap = self.value_flat(i, &flat) - level;
        if !(gap.abs() <= LEVEL_SET_TOL) {
            return Err(Error::Precondition(format!(
                "point is not on the level set of player {}: |J_i - c| = {gap:e}",
                i.0
            )));
        }
        let grad = self.gradient_flat(i, &flat)?;
        let bundle = self.split_gradient(i, &grad);
        level_set_jacobian(&bundle, &grad)
            .ok_or_else(|| Error::Singular(format!("∇_(-i) J_i vanishes for player {}", i.0)))
    }

    /// Own-block and cross-block Hessians of `J_j` by differencing its gradient.
    fn hessian_rows(&self, j: PlayerId, flat: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let range = self.block_range(j);
        let cols: Vec<usize> = (0..flat.len()).collect();
        let h = numdiff::central_jacobian_cols(
            |p| self.gradient_flat(j, p).map(|g| g[range.clone()].to_vec()),
            flat,
            &cols,
            numdiff::hessian_step,
        )?;
        let mj = range.len();
        let own = h.columns(range.start, mj).into_owned();
        let other_cols: Vec<usize> = (0..flat.len()).filter(|c| !range.contains(c)).collect();
        let cross = DMatrix::from_fn(mj, other_cols.len(), |r, c| h[(r, other_cols[c])]);
        Ok((own, cross))
    }

    /// Implicit-function derivative of player `j`'s best response,
    /// `-(∇²_jj J_j)^{-1} ∇²_{j,-j} J_j`, shape `m_j × (m - m_j)`.
    ///
    /// Requires `x` to lie on the first-order best-response manifold of `j`.
    pub fn best_response_jacobian(&self, j: PlayerId, x: &StrategyProfile) -> Result<DMatrix<f64>> {
        self.check_player(j)?;
        let flat = self.flatten_checked(x)?;
        let grad = self.gradient_flat(j, &flat)?;
        let own = &grad[self.block_range(j)];
        let norm = own.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm <= BEST_RESPONSE_TOL) {
            return Err(Error::Precondition(format!(
                "profile is not on the best-response manifold of player {}: ‖∇_j J_j‖ = {norm:e}",
                j.0
            )));
        }
        self.best_response_jacobian_flat(j, &flat)
    }

    /// Interior Nash equilibrium: Levenberg–Marquardt on `(∇_i J_i)_i = 0`
    /// from `x0`, kept inside the strategy boxes.
    pub fn nash_equilibrium(&self, x0: &StrategyProfile, tol: f64, max_iter: usize) -> Result<NashPoint> {
        let z0 = self.flatten_checked(x0)?;
        let stacked = |x: &[f64]| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(x.len());
            for i in self.players() {
                let g = self.gradient_flat(i, x)?;
                out.extend_from_slice(&g[self.block_range(i)]);
            }
            if out.iter().any(|v| !v.is_finite()) {
                return Err(Error::non_finite("stacked own-gradients", x));
            }
            Ok(out)
        };
        let domain = self.profile_domain();
        let lm = LevenbergMarquardt {
            max_iter,
            tol,
            ..Default::default()
        };
        let out = lm.solve(&stacked, |x| numdiff::central_jacobian(&stacked, x), &z0, domain.lower(), domain.upper())?;
        Ok(NashPoint {
            x: self.profile_from_flat(&out.x)?,
            residual: out.residual_norm,
            converged: out.converged,
        })
    }

    /// Profile with block `j` replaced by a stationary point of
    /// `J_j(·, x_{-j})`, found by damped Newton from `x_j`.
    pub fn best_response_point(&self, j: PlayerId, flat: &[f64]) -> Result<Vec<f64>> {
        self.check_player(j)?;
        let range = self.block_range(j);
        let domain = self.domain(j);
        let own_grad = |p: &[f64]| -> Result<Vec<f64>> { Ok(self.gradient_flat(j, p)?[range.clone()].to_vec()) };
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let mut y = flat.to_vec();
        let mut g = own_grad(&y)?;
        let mut gn = norm(&g);
        // Iterate to full precision so the result varies smoothly with x_{-j}.
        for _ in 0..100 {
            if gn == 0.0 {
                break;
            }
            let (own, _) = self.hessian_rows(j, &y)?;
            let step = own
                .lu()
                .solve(&nalgebra::DVector::from_column_slice(&g))
                .ok_or_else(|| Error::Singular(format!("own-block Hessian of player {}", j.0)))?;
            let mut t = 1.0;
            let mut accepted = false;
            while t > 1e-10 {
                let mut trial = y.clone();
                for (k, idx) in range.clone().enumerate() {
                    trial[idx] -= t * step[k];
                }
                domain.clamp_in_place(&mut trial[range.clone()]);
                if let Ok(gt) = own_grad(&trial) {
                    let n = norm(&gt);
                    if n.is_finite() && n < gn {
                        y = trial;
                        g = gt;
                        gn = n;
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if gn <= BEST_RESPONSE_TOL {
            Ok(y)
        } else {
            Err(Error::Precondition(format!(
                "no stationary best response of player {} found: ‖∇_j J_j‖ = {gn:e}",
                j.0
            )))
        }
    }

    /// Derivative of player `j`'s best-response map at `x_{-j}`: the
    /// implicit-function formula evaluated at [`Self::best_response_point`].
    pub fn best_response_map_jacobian(&self, j: PlayerId, flat: &[f64]) -> Result<DMatrix<f64>> {
        let y = self.best_response_point(j, flat)?;
        self.best_response_jacobian_flat(j, &y)
    }

    /// Best-response derivative formula evaluated at an arbitrary point.
    pub fn best_response_jacobian_flat(&self, j: PlayerId, flat: &[f64]) -> Result<DMatrix<f64>> {
        let (own, cross) = self.hessian_rows(j, flat)?;
        let scale = own.norm().max(cross.norm());
        let svd = own.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin > 1e-10 * scale) || smax == 0.0 {
            return Err(Error::Singular(format!(
                "own-block Hessian of player {} (smallest singular value {smin:e})",
                j.0
            )));
        }
        let lu = own.lu();
        let solved = lu
            .solve(&cross)
            .ok_or_else(|| Error::Singular(format!("own-block Hessian of player {}", j.0)))?;
        Ok(-solved)
    }
}

/// Level-set selection Jacobian from a split gradient; `None` when
/// `∇_{-i} J_i` is numerically zero.
pub(crate) fn level_set_jacobian(bundle: &GradientBundle, full_grad: &[f64]) -> Option<DMatrix<f64>> {
    let g = &bundle.others;
    let gg: f64 = g.iter().map(|v| v * v).sum();
    let scale = full_grad.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
    if g.is_empty() || gg.sqrt() <= 1e-12 * scale {
        return None;
    }
    Some(DMatrix::from_fn(g.len(), bundle.own.len(), |r, c| {
        -g[r] * bundle.own[c] / gg
    }))
}

fn concat_boxes(boxes: &[BoxDomain]) -> BoxDomain {
    let lower = boxes.iter().flat_map(|b| b.lower().iter().copied()).collect();
    let upper = boxes.iter().flat_map(|b| b.upper().iter().copied()).collect();
    BoxDomain::new(lower, upper).expect("component boxes are valid")
}

/// Outcome of [`GameDefinition::validate_gradients`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradientValidation {
    pub points_checked: usize,
    pub max_error: f64,
}

/// Player-side restriction of a game: own objective plus strategy spaces.
#[derive(Debug, Clone)]
pub struct PlayerView {
    player: PlayerId,
    dims: Vec<usize>,
    offsets: Vec<usize>,
    domains: Vec<BoxDomain>,
    sampling: BoxDomain,
    sense: Sense,
    objective: PlayerObjective,
}

impl PlayerView {
    pub fn player(&self) -> PlayerId {
        self.player
    }

    pub fn n_players(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn own_dim(&self) -> usize {
        self.dims[self.player.0]
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn block_range(&self, j: PlayerId) -> std::ops::Range<usize> {
        self.offsets[j.0]..self.offsets[j.0] + self.dims[j.0]
    }

    pub fn domain(&self, j: PlayerId) -> &BoxDomain {
        &self.domains[j.0]
    }

    pub fn own_domain(&self) -> &BoxDomain {
        &self.domains[self.player.0]
    }

    pub fn own_sampling_box(&self) -> &BoxDomain {
        &self.sampling
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn objective(&self) -> &PlayerObjective {
        &self.objective
    }

    pub fn value(&self, flat: &[f64]) -> f64 {
        self.objective.value(flat)
    }

    pub fn gradient(&self, flat: &[f64]) -> Result<Vec<f64>> {
        self.objective.gradient(flat)
    }

    pub fn opponents(&self) -> impl Iterator<Item = PlayerId> + '_ {
        (0..self.n_players())
            .filter(move |j| *j != self.player.0)
            .map(PlayerId)
    }
}
