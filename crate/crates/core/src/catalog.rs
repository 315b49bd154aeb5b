//! The benchmark games: tragedy of the commons, Olsder's paradox, the
//! N-player coordination game and the bilinear saddle.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conjecture::{ConjectureEntry, ConjectureSet};
use crate::error::{Error, Result};
use crate::game::{GameDefinition, PlayerObjective, PlayerSpec};
use crate::objective::CoordinatorObjective;
use crate::polynomial::{monomial, Monomial};
use crate::profile::{BoxDomain, PlayerId, Sense, StrategyProfile};

/// Distance kept from the logarithmic singularities of the tragedy game.
pub const TRAGEDY_MARGIN: f64 = 1e-6;

/// Constructor parameters, enough to rebuild an entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "lowercase")]
pub enum CatalogParams {
    Tragedy { k: f64 },
    Olsder,
    Coordination { a: Vec<f64>, b: Vec<f64>, d: Vec<f64> },
    Saddle { xbar1: f64, xbar2: f64 },
}

impl CatalogParams {
    pub fn name(&self) -> &'static str {
        match self {
            CatalogParams::Tragedy { .. } => "tragedy",
            CatalogParams::Olsder => "olsder",
            CatalogParams::Coordination { .. } => "coordination",
            CatalogParams::Saddle { .. } => "saddle",
        }
    }

    pub fn build(&self) -> Result<CatalogEntry> {
        match self {
            CatalogParams::Tragedy { k } => make_tragedy(*k),
            CatalogParams::Olsder => Ok(make_olsder()),
            CatalogParams::Coordination { a, b, d } => make_coordination(a, b, d),
            CatalogParams::Saddle { xbar1, xbar2 } => Ok(make_saddle(*xbar1, *xbar2)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub game: GameDefinition,
    pub params: CatalogParams,
    /// Named reference profiles (`NE`, `SO`, and published constants).
    pub references: BTreeMap<String, StrategyProfile>,
    /// Per-player objective values at the references.
    pub reference_values: BTreeMap<String, Vec<f64>>,
    pub published_conjectures: Option<ConjectureSet>,
    /// Further named conjecture sets kept for negative tests.
    pub other_conjectures: BTreeMap<String, ConjectureSet>,
    /// Default coordinator objective for the game.
    pub coordinator: CoordinatorObjective,
    /// Caveats such as references clipped to the domain.
    pub flags: Vec<String>,
}

impl CatalogEntry {
    /// Entry by name with default parameters: `tragedy` (K = 12), `olsder`,
    /// `coordination` (N = 2, a = 1, b = 0.2, d = 1) and `saddle` at the origin.
    pub fn by_name(name: &str) -> Result<CatalogEntry> {
        match name {
            "tragedy" => make_tragedy(12.0),
            "olsder" => Ok(make_olsder()),
            "coordination" => make_coordination(&[1.0, 1.0], &[0.2, 0.2], &[1.0, 1.0]),
            "saddle" => Ok(make_saddle(0.0, 0.0)),
            other => Err(Error::InvalidParameter(format!("unknown catalog game '{other}'"))),
        }
    }

    pub fn reference(&self, name: &str) -> Option<&StrategyProfile> {
        self.references.get(name)
    }

    /// Per-player polynomial objectives, when the game is polynomial.
    pub fn polynomial_terms(&self) -> Option<Vec<Vec<Monomial>>> {
        match &self.params {
            CatalogParams::Tragedy { .. } => None,
            CatalogParams::Olsder => Some(olsder_terms()),
            CatalogParams::Coordination { a, b, d } => Some(coordination_terms(a, b, d)),
            CatalogParams::Saddle { xbar1, xbar2 } => Some(saddle_terms(*xbar1, *xbar2)),
        }
    }

    fn record_values(&mut self) {
        for (name, x) in &self.references {
            if self.reference_values.contains_key(name) {
                continue;
            }
            let values = self
                .game
                .players()
                .map(|i| self.game.eval_objective(i, x).unwrap_or(f64::NAN))
                .collect();
            self.reference_values.insert(name.clone(), values);
        }
    }
}

fn scalar_pair_set(a12: f64, b12: f64, a21: f64, b21: f64) -> ConjectureSet {
    ConjectureSet::new(
        2,
        vec![
            ((PlayerId(0), PlayerId(1)), ConjectureEntry::scalar_affine(a12, b12)),
            ((PlayerId(1), PlayerId(0)), ConjectureEntry::scalar_affine(a21, b21)),
        ],
    )
    .expect("two-player scalar set is complete")
}

/// `J_i = ln x_i + ln(K − x_1 − x_2)`, both maximize; `−∞` outside the
/// feasible triangle.
pub fn make_tragedy(k: f64) -> Result<CatalogEntry> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::InvalidParameter(format!("tragedy capacity K must be positive, got {k}")));
    }
    if k <= 4.0 * TRAGEDY_MARGIN {
        return Err(Error::InvalidParameter(format!("tragedy capacity K = {k} leaves no interior")));
    }
    let player = |i: usize| {
        PlayerObjective::new(move |x: &[f64]| {
            let slack = k - x[0] - x[1];
            if x[i] <= 0.0 || slack <= 0.0 {
                return f64::NEG_INFINITY;
            }
            x[i].ln() + slack.ln()
        })
        .with_gradient(move |x: &[f64]| {
            let slack = k - x[0] - x[1];
            let mut g = vec![-1.0 / slack; 2];
            g[i] += 1.0 / x[i];
            g
        })
    };
    let domain = BoxDomain::uniform(1, TRAGEDY_MARGIN, k - TRAGEDY_MARGIN)?;
    let sampling = BoxDomain::uniform(1, TRAGEDY_MARGIN, 0.5 * k - TRAGEDY_MARGIN)?;
    let game = GameDefinition::new(
        format!("tragedy(K={k})"),
        (0..2)
            .map(|i| PlayerSpec::new(1, Sense::Maximize, domain.clone(), player(i)).sampling(sampling.clone()))
            .collect(),
    )?;
    let mut references = BTreeMap::new();
    references.insert("NE".into(), StrategyProfile::scalars(&[k / 3.0, k / 3.0]));
    references.insert("SO".into(), StrategyProfile::scalars(&[k / 4.0, k / 4.0]));
    let coordinator = CoordinatorObjective::social_welfare(&game);
    let mut entry = CatalogEntry {
        game,
        params: CatalogParams::Tragedy { k },
        references,
        reference_values: BTreeMap::new(),
        published_conjectures: Some(scalar_pair_set(0.0, 1.0, 0.0, 1.0)),
        other_conjectures: BTreeMap::new(),
        coordinator,
        flags: Vec::new(),
    };
    entry.record_values();
    Ok(entry)
}

/// Published Olsder constants.
pub mod olsder {
    pub const NE: [f64; 2] = [123.98, 61.6];
    pub const NE_VALUES: [f64; 2] = [19984.0, 5284.0];
    pub const CCE: [f64; 2] = [164.4, 81.0];
    pub const CCE_VALUES: [f64; 2] = [32321.0, 14124.0];
    pub const SO: [f64; 2] = [300.04, 150.98];
    pub const SO_VALUES: [f64; 2] = [38040.0, 21404.0];
    /// `(a, b)` of `γ_1^2` and `γ_2^1`.
    pub const THETA_12: [f64; 2] = [-15.9704, 0.5564];
    pub const THETA_21: [f64; 2] = [-1.2970, 1.9959];
}

fn olsder_terms() -> Vec<Vec<Monomial>> {
    vec![
        vec![
            monomial(2, -12.5, &[(0, 2)]),
            monomial(2, 21.0, &[(0, 1), (1, 1)]),
            monomial(2, 1806.0, &[(0, 1)]),
            monomial(2, -1764.0, &[(1, 1)]),
            monomial(2, -63504.0, &[]),
        ],
        vec![
            monomial(2, 24.0, &[(0, 1), (1, 1)]),
            monomial(2, -50.0, &[(1, 2)]),
            monomial(2, 3060.0, &[(1, 1)]),
            monomial(2, -1200.0, &[(0, 1)]),
            monomial(2, -28000.0, &[]),
        ],
    ]
}

fn solve2(a: [[f64; 2]; 2], rhs: [f64; 2]) -> [f64; 2] {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    [
        (rhs[0] * a[1][1] - a[0][1] * rhs[1]) / det,
        (a[0][0] * rhs[1] - rhs[0] * a[1][0]) / det,
    ]
}

/// `J_1 = (x_1 − 84)(−12.5 x_1 + 21 x_2 + 756)`,
/// `J_2 = (x_2 − 50)(24 x_1 − 50 x_2 + 560)`, both maximize on `[0, 500]²`.
///
/// `NE` and `SO` are the stationary points of the formulas above. The
/// published points are kept as `NE_published`, `CCE` and `SO_published`
/// together with their published values.
pub fn make_olsder() -> CatalogEntry {
    let p1 = PlayerObjective::new(|x: &[f64]| (x[0] - 84.0) * (-12.5 * x[0] + 21.0 * x[1] + 756.0))
        .with_gradient(|x: &[f64]| vec![-25.0 * x[0] + 21.0 * x[1] + 1806.0, 21.0 * (x[0] - 84.0)]);
    let p2 = PlayerObjective::new(|x: &[f64]| (x[1] - 50.0) * (24.0 * x[0] - 50.0 * x[1] + 560.0))
        .with_gradient(|x: &[f64]| vec![24.0 * (x[1] - 50.0), 24.0 * x[0] - 100.0 * x[1] + 3060.0]);
    let domain = BoxDomain::uniform(1, 0.0, 500.0).expect("valid box");
    let game = GameDefinition::new(
        "olsder",
        vec![
            PlayerSpec::new(1, Sense::Maximize, domain.clone(), p1),
            PlayerSpec::new(1, Sense::Maximize, domain, p2),
        ],
    )
    .expect("valid game");
    // ∇_1 J_1 = 0 and ∇_2 J_2 = 0.
    let ne = solve2([[-25.0, 21.0], [24.0, -100.0]], [-1806.0, -3060.0]);
    // ∇(J_1 + J_2) = 0.
    let so = solve2([[-25.0, 45.0], [45.0, -100.0]], [-606.0, -1296.0]);
    let mut references = BTreeMap::new();
    references.insert("NE".into(), StrategyProfile::scalars(&ne));
    references.insert("SO".into(), StrategyProfile::scalars(&so));
    references.insert("NE_published".into(), StrategyProfile::scalars(&olsder::NE));
    references.insert("CCE".into(), StrategyProfile::scalars(&olsder::CCE));
    references.insert("SO_published".into(), StrategyProfile::scalars(&olsder::SO));
    let mut reference_values = BTreeMap::new();
    reference_values.insert("NE_published".to_string(), olsder::NE_VALUES.to_vec());
    reference_values.insert("CCE".to_string(), olsder::CCE_VALUES.to_vec());
    reference_values.insert("SO_published".to_string(), olsder::SO_VALUES.to_vec());
    let coordinator = CoordinatorObjective::social_welfare(&game);
    let mut entry = CatalogEntry {
        game,
        params: CatalogParams::Olsder,
        references,
        reference_values,
        published_conjectures: Some(scalar_pair_set(
            olsder::THETA_12[0],
            olsder::THETA_12[1],
            olsder::THETA_21[0],
            olsder::THETA_21[1],
        )),
        other_conjectures: BTreeMap::new(),
        coordinator,
        flags: Vec::new(),
    };
    entry.record_values();
    entry
}

fn coordination_terms(a: &[f64], b: &[f64], d: &[f64]) -> Vec<Vec<Monomial>> {
    let n = a.len();
    let nf = n as f64;
    let dbar = d.iter().sum::<f64>() / nf;
    (0..n)
        .map(|i| {
            let mut terms = Vec::new();
            let q = -a[i] / (nf * nf);
            for k in 0..n {
                terms.push(monomial(n, q, &[(k, 2)]));
                for l in k + 1..n {
                    terms.push(monomial(n, 2.0 * q, &[(k, 1), (l, 1)]));
                }
            }
            for k in 0..n {
                let mut c = 2.0 * a[i] * dbar / nf;
                if k == i {
                    c -= b[i];
                }
                terms.push(monomial(n, c, &[(k, 1)]));
            }
            terms.push(monomial(n, -a[i] * dbar * dbar + b[i] * d[i], &[]));
            terms
        })
        .collect()
}

/// `J_i = −a_i (mean(x) − mean(d))² − b_i (x_i − d_i)`, maximize, `x_i ≥ 0`.
///
/// With identical `a_i` and `b_i` the references are the symmetric
/// `NE` (`x_i = mean(d) − N b / 2a`) and `SO` (`x_i = mean(d) − b / 2a`);
/// negative values are clipped to 0 and flagged.
pub fn make_coordination(a: &[f64], b: &[f64], d: &[f64]) -> Result<CatalogEntry> {
    let n = a.len();
    if n == 0 || b.len() != n || d.len() != n {
        return Err(Error::InvalidParameter(format!(
            "coordination parameters need equal, nonzero lengths (a: {}, b: {}, d: {})",
            a.len(),
            b.len(),
            d.len()
        )));
    }
    if a.iter().any(|v| !(*v > 0.0)) || b.iter().any(|v| !(*v >= 0.0)) || d.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("coordination needs a_i > 0, b_i ≥ 0 and finite d_i".into()));
    }
    let nf = n as f64;
    let dbar = d.iter().sum::<f64>() / nf;
    let dmax = d.iter().fold(0.0_f64, |m, v| m.max(*v));
    let domain = BoxDomain::new(vec![0.0], vec![f64::INFINITY])?;
    let sampling = BoxDomain::uniform(1, 0.0, (2.0 * dmax).max(1.0))?;
    let players = (0..n)
        .map(|i| {
            let (ai, bi, di) = (a[i], b[i], d[i]);
            let obj = PlayerObjective::new(move |x: &[f64]| {
                let m = x.iter().sum::<f64>() / nf;
                -ai * (m - dbar).powi(2) - bi * (x[i] - di)
            })
            .with_gradient(move |x: &[f64]| {
                let m = x.iter().sum::<f64>() / nf;
                let mut g = vec![-2.0 * ai / nf * (m - dbar); x.len()];
                g[i] -= bi;
                g
            });
            PlayerSpec::new(1, Sense::Maximize, domain.clone(), obj).sampling(sampling.clone())
        })
        .collect();
    let game = GameDefinition::new(format!("coordination(N={n})"), players)?;
    let mut references = BTreeMap::new();
    let mut flags = Vec::new();
    let symmetric = a.iter().all(|v| *v == a[0]) && b.iter().all(|v| *v == b[0]);
    if symmetric {
        for (name, value) in [
            ("NE", dbar - nf * b[0] / (2.0 * a[0])),
            ("SO", dbar - b[0] / (2.0 * a[0])),
        ] {
            if value < 0.0 {
                flags.push(format!("{name} reference {value} clipped to the domain boundary 0"));
            }
            references.insert(name.to_string(), StrategyProfile::scalars(&vec![value.max(0.0); n]));
        }
    }
    let coordinator = CoordinatorObjective::social_welfare(&game);
    let mut entry = CatalogEntry {
        game,
        params: CatalogParams::Coordination {
            a: a.to_vec(),
            b: b.to_vec(),
            d: d.to_vec(),
        },
        references,
        reference_values: BTreeMap::new(),
        published_conjectures: None,
        other_conjectures: BTreeMap::new(),
        coordinator,
        flags,
    };
    entry.record_values();
    Ok(entry)
}

/// Ranks of the interior stationarity system `Σ_k x_k = A_i`, as
/// `(rank of the coefficient matrix, rank of the augmented matrix)`.
/// The system is solvable iff the ranks agree.
pub fn coordination_stationarity_ranks(a: &[f64], b: &[f64], d: &[f64]) -> (usize, usize) {
    let n = a.len();
    let nf = n as f64;
    let dbar = d.iter().sum::<f64>() / nf;
    let coef = DMatrix::from_element(n, n, 1.0);
    let aug = DMatrix::from_fn(n, n + 1, |r, c| {
        if c < n {
            1.0
        } else {
            nf * dbar - nf * nf * b[r] / (2.0 * a[r])
        }
    });
    (coef.rank(1e-9), aug.rank(1e-9 * aug.norm().max(1.0)))
}

/// Seeded coordination instance: `a_i ∈ [0.5, 2]`, `b_i ∈ [0, 0.5]`,
/// `d_i ∈ [1, 10]`; the symmetric variant repeats the first draw.
pub fn sample_coordination_instance(n: usize, symmetric: bool, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || {
        (
            rng.random_range(0.5..=2.0),
            rng.random_range(0.0..=0.5),
            rng.random_range(1.0..=10.0),
        )
    };
    let draws: Vec<(f64, f64, f64)> = if symmetric {
        vec![draw(); n]
    } else {
        (0..n).map(|_| draw()).collect()
    };
    (
        draws.iter().map(|t| t.0).collect(),
        draws.iter().map(|t| t.1).collect(),
        draws.iter().map(|t| t.2).collect(),
    )
}

fn saddle_terms(xbar1: f64, xbar2: f64) -> Vec<Vec<Monomial>> {
    let j1 = vec![
        monomial(2, 1.0, &[(0, 1), (1, 1)]),
        monomial(2, -xbar2, &[(0, 1)]),
        monomial(2, -xbar1, &[(1, 1)]),
        monomial(2, xbar1 * xbar2, &[]),
    ];
    let j2 = j1
        .iter()
        .map(|m| Monomial {
            coeff: -m.coeff,
            exponents: m.exponents.clone(),
        })
        .collect();
    vec![j1, j2]
}

/// `J_1 = −J_2 = (x_1 − x̄_1)(x_2 − x̄_2)`, both maximize on `x̄ ± 10`.
///
/// The published conjectures are `γ_1^2(x_1) = −x_1 + x̄_1 + x̄_2` and
/// `γ_2^1(x_2) = x_2 + x̄_1 − x̄_2`; the convex alternative with the slopes
/// swapped is stored under `"convex"`.
pub fn make_saddle(xbar1: f64, xbar2: f64) -> CatalogEntry {
    let p1 = PlayerObjective::new(move |x: &[f64]| (x[0] - xbar1) * (x[1] - xbar2))
        .with_gradient(move |x: &[f64]| vec![x[1] - xbar2, x[0] - xbar1]);
    let p2 = PlayerObjective::new(move |x: &[f64]| -(x[0] - xbar1) * (x[1] - xbar2))
        .with_gradient(move |x: &[f64]| vec![-(x[1] - xbar2), -(x[0] - xbar1)]);
    let game = GameDefinition::new(
        "saddle",
        vec![
            PlayerSpec::new(1, Sense::Maximize, BoxDomain::uniform(1, xbar1 - 10.0, xbar1 + 10.0).expect("valid box"), p1),
            PlayerSpec::new(1, Sense::Maximize, BoxDomain::uniform(1, xbar2 - 10.0, xbar2 + 10.0).expect("valid box"), p2),
        ],
    )
    .expect("valid game");
    let mut references = BTreeMap::new();
    references.insert("NE".into(), StrategyProfile::scalars(&[xbar1, xbar2]));
    let mut other_conjectures = BTreeMap::new();
    other_conjectures.insert("convex".to_string(), scalar_pair_set(xbar2 - xbar1, 1.0, xbar1 + xbar2, -1.0));
    let coordinator = CoordinatorObjective::product(&game);
    let mut entry = CatalogEntry {
        game,
        params: CatalogParams::Saddle { xbar1, xbar2 },
        references,
        reference_values: BTreeMap::new(),
        published_conjectures: Some(scalar_pair_set(xbar1 + xbar2, -1.0, xbar1 - xbar2, 1.0)),
        other_conjectures,
        coordinator,
        flags: Vec::new(),
    };
    entry.record_values();
    entry
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polynomial::Polynomial;

    fn poly_matches(entry: &CatalogEntry, points: &[[f64; 2]]) {
        let terms = entry.polynomial_terms().unwrap();
        for (i, t) in terms.into_iter().enumerate() {
            let p = Polynomial::new(2, t).unwrap();
            for x in points {
                let a = p.value(x);
                let b = entry.game.value_flat(PlayerId(i), x);
                assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn olsder_polynomial_expansion() {
        poly_matches(&make_olsder(), &[[0.0, 0.0], [123.0, 61.0], [300.04, 150.98]]);
    }

    #[test]
    fn saddle_polynomial_expansion() {
        poly_matches(&make_saddle(1.0, -2.0), &[[0.0, 0.0], [3.0, 1.0]]);
    }

    #[test]
    fn coordination_polynomial_expansion() {
        let e = make_coordination(&[1.0, 2.0, 0.5], &[0.1, 0.2, 0.0], &[1.0, 4.0, 2.0]).unwrap();
        let terms = e.polynomial_terms().unwrap();
        let x = [0.3, 2.0, 5.5];
        for (i, t) in terms.into_iter().enumerate() {
            let p = Polynomial::new(3, t).unwrap();
            assert!((p.value(&x) - e.game.value_flat(PlayerId(i), &x)).abs() < 1e-12);
        }
    }

    #[test]
    fn olsder_published_values_match_formula() {
        let e = make_olsder();
        for name in ["NE_published", "CCE", "SO_published"] {
            let x = e.reference(name).unwrap();
            let published = &e.reference_values[name];
            for i in e.game.players() {
                let v = e.game.eval_objective(i, x).unwrap();
                assert!((v - published[i.0]).abs() <= 1.0, "{name}: {v} vs {}", published[i.0]);
            }
        }
    }

    #[test]
    fn sampler_is_seeded() {
        assert_eq!(sample_coordination_instance(5, false, 3), sample_coordination_instance(5, false, 3));
        let (a, b, d) = sample_coordination_instance(4, true, 9);
        assert!(a.iter().all(|v| *v == a[0]) && b.iter().all(|v| *v == b[0]) && d.iter().all(|v| *v == d[0]));
    }

    #[test]
    fn invalid_parameters() {
        assert!(make_tragedy(0.0).is_err());
        assert!(make_coordination(&[1.0], &[0.0, 0.0], &[1.0]).is_err());
        assert!(make_coordination(&[0.0], &[0.0], &[1.0]).is_err());
    }
}
