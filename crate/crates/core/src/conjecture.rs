//! Conjecture families, conjecture sets and conjectured objectives.
//!
//! A conjecture `γ_i^j(x_i; θ_ij)` is player `i`'s model of player `j`'s
//! strategy as a function of its own. Affine and quadratic families store
//! `θ = [a; vec(B)]` with `a ∈ R^{m_j}` and `B ∈ R^{m_j × m_i}` flattened
//! row-major.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{GameDefinition, PlayerView};
use crate::numdiff;
use crate::profile::{BoxDomain, PlayerId};

/// Tolerance used when validating user-supplied conjecture Jacobians.
pub const CUSTOM_JACOBIAN_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Affine,
    Quadratic,
    Custom,
}

impl FamilyKind {
    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Affine => "affine",
            FamilyKind::Quadratic => "quadratic",
            FamilyKind::Custom => "custom",
        }
    }
}

impl std::str::FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "affine" => Ok(FamilyKind::Affine),
            "quadratic" => Ok(FamilyKind::Quadratic),
            "custom" => Ok(FamilyKind::Custom),
            other => Err(Error::InvalidParameter(format!("unknown conjecture family '{other}'"))),
        }
    }
}

pub type CustomMapFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;
pub type CustomJacobianFn = Arc<dyn Fn(&[f64], &[f64]) -> DMatrix<f64> + Send + Sync>;

#[derive(Clone)]
struct CustomMap {
    eval: CustomMapFn,
    jacobian: CustomJacobianFn,
}

/// Parametric family of maps `R^{m_i} -> R^{m_j}`.
#[derive(Clone)]
pub struct ConjectureFamily {
    kind: FamilyKind,
    in_dim: usize,
    out_dim: usize,
    param_dim: usize,
    param_domain: BoxDomain,
    custom: Option<CustomMap>,
}

impl fmt::Debug for ConjectureFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConjectureFamily")
            .field("kind", &self.kind)
            .field("in_dim", &self.in_dim)
            .field("out_dim", &self.out_dim)
            .field("param_dim", &self.param_dim)
            .finish()
    }
}

impl ConjectureFamily {
    /// `γ(x) = a + B x`, unbounded parameters.
    pub fn affine(in_dim: usize, out_dim: usize) -> Self {
        Self::polynomial(FamilyKind::Affine, in_dim, out_dim)
    }

    /// `γ(x) = a + B (x ⊙ x)`, unbounded parameters.
    pub fn quadratic(in_dim: usize, out_dim: usize) -> Self {
        Self::polynomial(FamilyKind::Quadratic, in_dim, out_dim)
    }

    fn polynomial(kind: FamilyKind, in_dim: usize, out_dim: usize) -> Self {
        let param_dim = out_dim + out_dim * in_dim;
        ConjectureFamily {
            kind,
            in_dim,
            out_dim,
            param_dim,
            param_domain: BoxDomain::unbounded(param_dim),
            custom: None,
        }
    }

    pub fn of_kind(kind: FamilyKind, in_dim: usize, out_dim: usize) -> Result<Self> {
        match kind {
            FamilyKind::Affine => Ok(Self::affine(in_dim, out_dim)),
            FamilyKind::Quadratic => Ok(Self::quadratic(in_dim, out_dim)),
            FamilyKind::Custom => Err(Error::Unsupported(
                "custom families need evaluators; use ConjectureFamily::custom".into(),
            )),
        }
    }

    /// User-defined family. The Jacobian is checked against central
    /// differences at 10 random points before the family is accepted.
    pub fn custom(
        in_dim: usize,
        out_dim: usize,
        param_domain: BoxDomain,
        eval: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
        jacobian: impl Fn(&[f64], &[f64]) -> DMatrix<f64> + Send + Sync + 'static,
        seed: u64,
    ) -> Result<Self> {
        let family = ConjectureFamily {
            kind: FamilyKind::Custom,
            in_dim,
            out_dim,
            param_dim: param_domain.dim(),
            param_domain,
            custom: Some(CustomMap {
                eval: Arc::new(eval),
                jacobian: Arc::new(jacobian),
            }),
        };
        family.validate_custom(seed)?;
        Ok(family)
    }

    fn validate_custom(&self, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unit_in = BoxDomain::uniform(self.in_dim, -1.0, 1.0)?;
        let unit_par = BoxDomain::uniform(self.param_dim, -1.0, 1.0)?;
        let params = self.param_domain.bounded_by(&unit_par);
        for _ in 0..10 {
            let x = unit_in.sample(&mut rng);
            let theta = params.sample(&mut rng);
            let out = self.eval(&x, &theta);
            if out.len() != self.out_dim {
                return Err(Error::dims("custom conjecture output", self.out_dim, out.len()));
            }
            let analytic = self.jacobian(&x, &theta);
            if analytic.shape() != (self.out_dim, self.in_dim) {
                return Err(Error::dims(
                    "custom conjecture Jacobian rows",
                    self.out_dim,
                    analytic.nrows(),
                ));
            }
            let fd = numdiff::central_jacobian(|p| Ok(self.eval(p, &theta)), &x)?;
            for (a, b) in analytic.iter().zip(fd.iter()) {
                if !numdiff::mixed_close(*a, *b, CUSTOM_JACOBIAN_TOL) {
                    return Err(Error::InvalidParameter(format!(
                        "custom conjecture Jacobian disagrees with finite differences at x = {x:?}: {a} vs {b}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Restricts the parameters to `domain`.
    pub fn with_param_domain(mut self, domain: BoxDomain) -> Result<Self> {
        if domain.dim() != self.param_dim {
            return Err(Error::dims("parameter domain", self.param_dim, domain.dim()));
        }
        self.param_domain = domain;
        Ok(self)
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn param_dim(&self) -> usize {
        self.param_dim
    }

    pub fn param_domain(&self) -> &BoxDomain {
        &self.param_domain
    }

    fn slope(&self, theta: &[f64], r: usize, c: usize) -> f64 {
        theta[self.out_dim + r * self.in_dim + c]
    }

    /// `γ(x; θ)`. Shapes are the caller's responsibility.
    pub fn eval(&self, x: &[f64], theta: &[f64]) -> Vec<f64> {
        match self.kind {
            FamilyKind::Affine => (0..self.out_dim)
                .map(|r| theta[r] + (0..self.in_dim).map(|c| self.slope(theta, r, c) * x[c]).sum::<f64>())
                .collect(),
            FamilyKind::Quadratic => (0..self.out_dim)
                .map(|r| {
                    theta[r] + (0..self.in_dim).map(|c| self.slope(theta, r, c) * x[c] * x[c]).sum::<f64>()
                })
                .collect(),
            FamilyKind::Custom => {
                let custom = self.custom.as_ref().expect("custom family carries evaluators");
                (custom.eval)(x, theta)
            }
        }
    }

    /// `∇_x γ(x; θ)`, shape `m_j × m_i`.
    pub fn jacobian(&self, x: &[f64], theta: &[f64]) -> DMatrix<f64> {
        match self.kind {
            FamilyKind::Affine => DMatrix::from_fn(self.out_dim, self.in_dim, |r, c| self.slope(theta, r, c)),
            FamilyKind::Quadratic => {
                DMatrix::from_fn(self.out_dim, self.in_dim, |r, c| 2.0 * x[c] * self.slope(theta, r, c))
            }
            FamilyKind::Custom => {
                let custom = self.custom.as_ref().expect("custom family carries evaluators");
                (custom.jacobian)(x, theta)
            }
        }
    }

    /// `out += ∇γ(x; θ)^T v`, skipping rows flagged in `skip`.
    pub fn accumulate_jacobian_tv(&self, x: &[f64], theta: &[f64], v: &[f64], skip: &[bool], out: &mut [f64]) {
        match self.kind {
            FamilyKind::Affine | FamilyKind::Quadratic => {
                for r in 0..self.out_dim {
                    if skip[r] {
                        continue;
                    }
                    for (c, o) in out.iter_mut().enumerate() {
                        let mut d = self.slope(theta, r, c);
                        if self.kind == FamilyKind::Quadratic {
                            d *= 2.0 * x[c];
                        }
                        *o += d * v[r];
                    }
                }
            }
            FamilyKind::Custom => {
                let jac = self.jacobian(x, theta);
                for r in 0..self.out_dim {
                    if skip[r] {
                        continue;
                    }
                    for (c, o) in out.iter_mut().enumerate() {
                        *o += jac[(r, c)] * v[r];
                    }
                }
            }
        }
    }

    /// Parameters with `γ(x_i) = x_j` and `∇γ(x_i) = alpha`.
    pub fn fit_point_slope(&self, x_i: &[f64], x_j: &[f64], alpha: &DMatrix<f64>) -> Result<Vec<f64>> {
        if x_i.len() != self.in_dim {
            return Err(Error::dims("fit input point", self.in_dim, x_i.len()));
        }
        if x_j.len() != self.out_dim {
            return Err(Error::dims("fit target point", self.out_dim, x_j.len()));
        }
        if alpha.shape() != (self.out_dim, self.in_dim) {
            return Err(Error::dims("fit slope rows", self.out_dim, alpha.nrows()));
        }
        let mut theta = vec![0.0; self.param_dim];
        match self.kind {
            FamilyKind::Affine => {
                for r in 0..self.out_dim {
                    let ax: f64 = (0..self.in_dim).map(|c| alpha[(r, c)] * x_i[c]).sum();
                    theta[r] = x_j[r] - ax;
                    for c in 0..self.in_dim {
                        theta[self.out_dim + r * self.in_dim + c] = alpha[(r, c)];
                    }
                }
            }
            FamilyKind::Quadratic => {
                if let Some(k) = x_i.iter().position(|v| *v == 0.0) {
                    return Err(Error::Singular(format!(
                        "quadratic point-slope fit divides by 2·x_i, and coordinate {k} of x_i is zero"
                    )));
                }
                for r in 0..self.out_dim {
                    let ax: f64 = (0..self.in_dim).map(|c| alpha[(r, c)] * x_i[c]).sum();
                    theta[r] = x_j[r] - 0.5 * ax;
                    for c in 0..self.in_dim {
                        theta[self.out_dim + r * self.in_dim + c] = alpha[(r, c)] / (2.0 * x_i[c]);
                    }
                }
            }
            FamilyKind::Custom => {
                return Err(Error::Unsupported(
                    "closed-form point-slope fitting is only available for affine and quadratic families".into(),
                ))
            }
        }
        if !self.param_domain.contains(&theta) {
            return Err(Error::OutOfDomain(format!(
                "fitted parameters {theta:?} leave the parameter domain"
            )));
        }
        Ok(theta)
    }

    /// Parameters of the identity map, when it belongs to the family.
    pub fn identity_theta(&self) -> Option<Vec<f64>> {
        if self.kind != FamilyKind::Affine || self.in_dim != self.out_dim {
            return None;
        }
        let mut theta = vec![0.0; self.param_dim];
        for r in 0..self.out_dim {
            theta[self.out_dim + r * self.in_dim + r] = 1.0;
        }
        Some(theta)
    }
}

/// Family plus parameters for one ordered pair.
#[derive(Debug, Clone)]
pub struct ConjectureEntry {
    pub family: ConjectureFamily,
    pub theta: Vec<f64>,
}

impl ConjectureEntry {
    pub fn new(family: ConjectureFamily, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != family.param_dim() {
            return Err(Error::dims("conjecture parameters", family.param_dim(), theta.len()));
        }
        if !family.param_domain().contains(&theta) {
            return Err(Error::OutOfDomain(format!(
                "parameters {theta:?} leave the parameter domain"
            )));
        }
        Ok(ConjectureEntry { family, theta })
    }

    /// Scalar affine conjecture `a + b x`.
    pub fn scalar_affine(a: f64, b: f64) -> Self {
        ConjectureEntry {
            family: ConjectureFamily::affine(1, 1),
            theta: vec![a, b],
        }
    }
}

/// Borrowed view of one conjecture held by a player.
#[derive(Clone, Copy)]
pub struct ConjectureRef<'a> {
    pub target: PlayerId,
    pub family: &'a ConjectureFamily,
    pub theta: &'a [f64],
}

/// All conjectures held by one player, ordered by opponent.
#[derive(Debug, Clone)]
pub struct PlayerConjectures {
    pub player: PlayerId,
    pub entries: Vec<(PlayerId, ConjectureEntry)>,
}

impl PlayerConjectures {
    pub fn refs(&self) -> Vec<ConjectureRef<'_>> {
        self.entries
            .iter()
            .map(|(j, e)| ConjectureRef {
                target: *j,
                family: &e.family,
                theta: &e.theta,
            })
            .collect()
    }
}

/// Conjectures for every ordered pair `(i, j)`, `i ≠ j`.
#[derive(Debug, Clone)]
pub struct ConjectureSet {
    n_players: usize,
    entries: BTreeMap<(usize, usize), ConjectureEntry>,
}

impl ConjectureSet {
    pub fn new(
        n_players: usize,
        entries: impl IntoIterator<Item = ((PlayerId, PlayerId), ConjectureEntry)>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for ((i, j), e) in entries {
            if i == j || i.0 >= n_players || j.0 >= n_players {
                return Err(Error::InvalidParameter(format!(
                    "invalid conjecture pair ({}, {}) for {n_players} players",
                    i.0, j.0
                )));
            }
            let e = ConjectureEntry::new(e.family, e.theta)?;
            if map.insert((i.0, j.0), e).is_some() {
                return Err(Error::InvalidParameter(format!(
                    "duplicate conjecture pair ({}, {})",
                    i.0, j.0
                )));
            }
        }
        let expected = n_players * n_players.saturating_sub(1);
        if map.len() != expected {
            return Err(Error::InvalidParameter(format!(
                "a conjecture set for {n_players} players needs {expected} entries, got {}",
                map.len()
            )));
        }
        Ok(ConjectureSet {
            n_players,
            entries: map,
        })
    }

    /// Rebuilds a set from per-player parts.
    pub fn from_players(n_players: usize, parts: Vec<PlayerConjectures>) -> Result<Self> {
        Self::new(
            n_players,
            parts
                .into_iter()
                .flat_map(|p| p.entries.into_iter().map(move |(j, e)| ((p.player, j), e))),
        )
    }

    /// Identity conjectures `γ_i^j(x) = x` (requires equal dimensions).
    pub fn identity(game: &GameDefinition) -> Result<Self> {
        let mut entries = Vec::new();
        for i in game.players() {
            for j in game.players().filter(|j| *j != i) {
                let fam = ConjectureFamily::affine(game.dim(i), game.dim(j));
                let theta = fam.identity_theta().ok_or_else(|| {
                    Error::InvalidParameter("identity conjectures need equal block dimensions".into())
                })?;
                entries.push(((i, j), ConjectureEntry::new(fam, theta)?));
            }
        }
        Self::new(game.n_players(), entries)
    }

    pub fn n_players(&self) -> usize {
        self.n_players
    }

    pub fn get(&self, i: PlayerId, j: PlayerId) -> Result<&ConjectureEntry> {
        self.entries
            .get(&(i.0, j.0))
            .ok_or(Error::MissingConjecture { i: i.0, j: j.0 })
    }

    pub fn iter(&self) -> impl Iterator<Item = ((PlayerId, PlayerId), &ConjectureEntry)> {
        self.entries.iter().map(|((i, j), e)| ((PlayerId(*i), PlayerId(*j)), e))
    }

    /// Player `i`'s conjectures, ordered by opponent.
    pub fn player(&self, i: PlayerId) -> PlayerConjectures {
        PlayerConjectures {
            player: i,
            entries: self
                .entries
                .range((i.0, 0)..(i.0 + 1, 0))
                .map(|((_, j), e)| (PlayerId(*j), e.clone()))
                .collect(),
        }
    }

    /// Checks family shapes against a game.
    pub fn validate_for(&self, game: &GameDefinition) -> Result<()> {
        if self.n_players != game.n_players() {
            return Err(Error::dims("conjecture set players", game.n_players(), self.n_players));
        }
        for ((i, j), e) in self.iter() {
            if e.family.in_dim() != game.dim(i) {
                return Err(Error::dims(format!("input of conjecture ({}, {})", i.0, j.0), game.dim(i), e.family.in_dim()));
            }
            if e.family.out_dim() != game.dim(j) {
                return Err(Error::dims(format!("output of conjecture ({}, {})", i.0, j.0), game.dim(j), e.family.out_dim()));
            }
        }
        Ok(())
    }

    pub fn eval_conjecture(&self, i: PlayerId, j: PlayerId, x_i: &[f64]) -> Result<Vec<f64>> {
        let e = self.get(i, j)?;
        if x_i.len() != e.family.in_dim() {
            return Err(Error::dims("conjecture input", e.family.in_dim(), x_i.len()));
        }
        Ok(e.family.eval(x_i, &e.theta))
    }

    pub fn conjecture_jacobian(&self, i: PlayerId, j: PlayerId, x_i: &[f64]) -> Result<DMatrix<f64>> {
        let e = self.get(i, j)?;
        if x_i.len() != e.family.in_dim() {
            return Err(Error::dims("conjecture input", e.family.in_dim(), x_i.len()));
        }
        Ok(e.family.jacobian(x_i, &e.theta))
    }
}

/// Profile seen by a player who replaces opponents with its conjectures.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjecturedPoint {
    /// Flat profile `(x_i, γ_i^{-i}(x_i))` in player order.
    pub profile: Vec<f64>,
    /// Per flat coordinate: whether clamping to the opponent's domain moved it.
    pub clamped: Vec<bool>,
}

impl ConjecturedPoint {
    pub fn any_clamped(&self) -> bool {
        self.clamped.iter().any(|c| *c)
    }
}

/// Builds `(x_i, γ_i^{-i}(x_i))`, clamping conjectured blocks to the
/// opponents' domains.
pub fn conjectured_point(view: &PlayerView, conj: &[ConjectureRef<'_>], x_i: &[f64]) -> Result<ConjecturedPoint> {
    let me = view.player();
    if x_i.len() != view.own_dim() {
        return Err(Error::dims(format!("strategy of player {}", me.0), view.own_dim(), x_i.len()));
    }
    if conj.len() + 1 != view.n_players() {
        return Err(Error::dims(
            format!("conjectures held by player {}", me.0),
            view.n_players() - 1,
            conj.len(),
        ));
    }
    let mut profile = vec![0.0; view.total_dim()];
    let mut clamped = vec![false; view.total_dim()];
    profile[view.block_range(me)].copy_from_slice(x_i);
    for c in conj {
        let range = view.block_range(c.target);
        if c.family.in_dim() != x_i.len() || c.family.out_dim() != range.len() {
            return Err(Error::dims(
                format!("conjecture ({}, {})", me.0, c.target.0),
                range.len(),
                c.family.out_dim(),
            ));
        }
        let mut value = c.family.eval(x_i, c.theta);
        let dom = view.domain(c.target);
        for (k, v) in value.iter_mut().enumerate() {
            let bounded = v.clamp(dom.lower()[k], dom.upper()[k]);
            if bounded != *v {
                clamped[range.start + k] = true;
                *v = bounded;
            }
        }
        profile[range].copy_from_slice(&value);
    }
    Ok(ConjecturedPoint { profile, clamped })
}

/// `J_i(x_i, γ_i^{-i}(x_i))` in the natural sense; may be non-finite.
pub fn conjectured_value(view: &PlayerView, conj: &[ConjectureRef<'_>], x_i: &[f64]) -> Result<f64> {
    let point = conjectured_point(view, conj, x_i)?;
    Ok(view.value(&point.profile))
}

/// Full derivative of the conjectured objective,
/// `∇_i J_i + (∇_i γ_i^{-i})^T ∇_{-i} J_i`, natural sense.
/// Clamped conjecture coordinates contribute nothing.
pub fn conjectured_grad(view: &PlayerView, conj: &[ConjectureRef<'_>], x_i: &[f64]) -> Result<Vec<f64>> {
    let point = conjectured_point(view, conj, x_i)?;
    let grad = view.gradient(&point.profile)?;
    let own_range = view.block_range(view.player());
    let mut out = grad[own_range].to_vec();
    for c in conj {
        let range = view.block_range(c.target);
        c.family
            .accumulate_jacobian_tv(x_i, c.theta, &grad[range.clone()], &point.clamped[range], &mut out);
    }
    Ok(out)
}

/// `J_i(x_i, γ_i^{-i}(x_i; θ_i))` for a whole game and conjecture set.
pub fn conjectured_objective(game: &GameDefinition, set: &ConjectureSet, i: PlayerId, x_i: &[f64]) -> Result<f64> {
    game.check_player(i)?;
    let view = game.player_view(i);
    let conj = set.player(i);
    let point = conjectured_point(&view, &conj.refs(), x_i)?;
    let v = view.value(&point.profile);
    if !v.is_finite() {
        return Err(Error::non_finite(
            format!("conjectured objective of player {}", i.0),
            &point.profile,
        ));
    }
    Ok(v)
}

/// Gradient of [`conjectured_objective`] w.r.t. `x_i`.
pub fn conjectured_gradient(game: &GameDefinition, set: &ConjectureSet, i: PlayerId, x_i: &[f64]) -> Result<Vec<f64>> {
    game.check_player(i)?;
    let view = game.player_view(i);
    let conj = set.player(i);
    conjectured_grad(&view, &conj.refs(), x_i)
}
