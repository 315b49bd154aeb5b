//! JSON file formats: game specs, conjecture files, profiles and design results.

use serde::{Deserialize, Serialize};

use crate::catalog::{CatalogEntry, CatalogParams};
use crate::centralized::{DesignMode, DesignSolution};
use crate::conjecture::{ConjectureEntry, ConjectureFamily, ConjectureSet, FamilyKind};
use crate::consistency::ConsistencyReport;
use crate::error::{Error, Result};
use crate::game::{GameDefinition, PlayerSpec};
use crate::objective::CoordinatorObjective;
use crate::polynomial::{Monomial, Polynomial};
use crate::profile::{BoxDomain, PlayerId, Sense, StrategyProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SenseTag {
    #[serde(alias = "maximize")]
    Max,
    #[serde(alias = "minimize")]
    Min,
}

impl From<Sense> for SenseTag {
    fn from(s: Sense) -> Self {
        match s {
            Sense::Maximize => SenseTag::Max,
            Sense::Minimize => SenseTag::Min,
        }
    }
}

impl From<SenseTag> for Sense {
    fn from(s: SenseTag) -> Self {
        match s {
            SenseTag::Max => Sense::Maximize,
            SenseTag::Min => Sense::Minimize,
        }
    }
}

/// Box bounds with `null` standing for an infinite bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsSpec {
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
}

impl BoundsSpec {
    pub fn from_box(b: &BoxDomain) -> Self {
        let enc = |v: &[f64]| v.iter().map(|x| x.is_finite().then_some(*x)).collect();
        BoundsSpec {
            lower: enc(b.lower()),
            upper: enc(b.upper()),
        }
    }

    pub fn to_box(&self) -> Result<BoxDomain> {
        let lower = self.lower.iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect();
        let upper = self.upper.iter().map(|v| v.unwrap_or(f64::INFINITY)).collect();
        BoxDomain::new(lower, upper)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    #[serde(flatten)]
    pub bounds: BoundsSpec,
    /// Finite box for samplers, when it differs from the clipped domain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling: Option<BoundsSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "lowercase")]
pub enum GameKindSpec {
    Tragedy { k: f64 },
    Olsder,
    Coordination { a: Vec<f64>, b: Vec<f64>, d: Vec<f64> },
    Saddle { xbar1: f64, xbar2: f64 },
    /// One list of monomials per player over the flattened profile.
    Polynomial { objectives: Vec<Vec<Monomial>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub n: usize,
    pub dims: Vec<usize>,
    pub sense: Vec<SenseTag>,
    pub domains: Vec<DomainSpec>,
    pub game: GameKindSpec,
}

/// A game read from a spec, plus the catalog entry when the kind names one.
#[derive(Debug, Clone)]
pub struct LoadedGame {
    pub game: GameDefinition,
    pub entry: Option<CatalogEntry>,
}

impl LoadedGame {
    /// The catalog's coordinator objective, else social welfare.
    pub fn default_coordinator(&self) -> CoordinatorObjective {
        match &self.entry {
            Some(e) => e.coordinator.clone(),
            None => CoordinatorObjective::social_welfare(&self.game),
        }
    }
}

fn field(path: &str, msg: impl std::fmt::Display) -> Error {
    Error::Format(format!("{path}: {msg}"))
}

impl GameSpec {
    /// Spec of a catalog entry. Tragedy keeps its own kind, the polynomial
    /// games are written out term by term.
    pub fn from_entry(entry: &CatalogEntry) -> Self {
        let game = &entry.game;
        let kind = match entry.polynomial_terms() {
            Some(objectives) => GameKindSpec::Polynomial { objectives },
            None => match &entry.params {
                CatalogParams::Tragedy { k } => GameKindSpec::Tragedy { k: *k },
                CatalogParams::Olsder => GameKindSpec::Olsder,
                CatalogParams::Coordination { a, b, d } => GameKindSpec::Coordination {
                    a: a.clone(),
                    b: b.clone(),
                    d: d.clone(),
                },
                CatalogParams::Saddle { xbar1, xbar2 } => GameKindSpec::Saddle {
                    xbar1: *xbar1,
                    xbar2: *xbar2,
                },
            },
        };
        GameSpec {
            name: Some(game.name().to_string()),
            n: game.n_players(),
            dims: game.dims().to_vec(),
            sense: game.senses().iter().map(|s| SenseTag::from(*s)).collect(),
            domains: game
                .players()
                .map(|i| DomainSpec {
                    bounds: BoundsSpec::from_box(game.domain(i)),
                    sampling: Some(BoundsSpec::from_box(game.sampling_box(i))),
                })
                .collect(),
            game: kind,
        }
    }

    fn check_shape(&self) -> Result<()> {
        if self.n == 0 {
            return Err(field("n", "a game needs at least one player"));
        }
        if self.dims.len() != self.n {
            return Err(field("dims", format!("expected {} entries, found {}", self.n, self.dims.len())));
        }
        if self.sense.len() != self.n {
            return Err(field("sense", format!("expected {} entries, found {}", self.n, self.sense.len())));
        }
        if self.domains.len() != self.n {
            return Err(field("domains", format!("expected {} entries, found {}", self.n, self.domains.len())));
        }
        for (i, (d, dom)) in self.dims.iter().zip(&self.domains).enumerate() {
            if *d == 0 {
                return Err(field(&format!("dims[{i}]"), "dimension must be positive"));
            }
            for (name, b) in [("", Some(&dom.bounds)), (".sampling", dom.sampling.as_ref())] {
                let Some(b) = b else { continue };
                if b.lower.len() != *d || b.upper.len() != *d {
                    return Err(field(
                        &format!("domains[{i}]{name}"),
                        format!("bounds must have length {d}"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<LoadedGame> {
        self.check_shape()?;
        let total: usize = self.dims.iter().sum();
        let mut boxes = Vec::with_capacity(self.n);
        let mut sampling = Vec::with_capacity(self.n);
        for (i, dom) in self.domains.iter().enumerate() {
            boxes.push(dom.bounds.to_box().map_err(|e| field(&format!("domains[{i}]"), e))?);
            sampling.push(match &dom.sampling {
                Some(s) => Some(s.to_box().map_err(|e| field(&format!("domains[{i}].sampling"), e))?),
                None => None,
            });
        }
        let name = self.name.clone();
        let (objectives, entry, default_name) = match &self.game {
            GameKindSpec::Polynomial { objectives } => {
                if objectives.len() != self.n {
                    return Err(field(
                        "game.params.objectives",
                        format!("expected {} objectives, found {}", self.n, objectives.len()),
                    ));
                }
                let mut objs = Vec::with_capacity(self.n);
                for (i, terms) in objectives.iter().enumerate() {
                    let path = format!("game.params.objectives[{i}]");
                    if terms.is_empty() {
                        return Err(field(&path, "objective has no terms"));
                    }
                    let poly = Polynomial::new(total, terms.clone()).map_err(|e| field(&path, e))?;
                    objs.push(poly.into_objective());
                }
                (objs, None, "polynomial".to_string())
            }
            catalog => {
                let params = match catalog {
                    GameKindSpec::Tragedy { k } => CatalogParams::Tragedy { k: *k },
                    GameKindSpec::Olsder => CatalogParams::Olsder,
                    GameKindSpec::Coordination { a, b, d } => CatalogParams::Coordination {
                        a: a.clone(),
                        b: b.clone(),
                        d: d.clone(),
                    },
                    GameKindSpec::Saddle { xbar1, xbar2 } => CatalogParams::Saddle {
                        xbar1: *xbar1,
                        xbar2: *xbar2,
                    },
                    GameKindSpec::Polynomial { .. } => unreachable!(),
                };
                let entry = params.build().map_err(|e| field("game.params", e))?;
                let g = &entry.game;
                if g.dims() != self.dims.as_slice() {
                    return Err(field("dims", format!("{} requires dims {:?}", params.name(), g.dims())));
                }
                for i in g.players() {
                    if Sense::from(self.sense[i.0]) != g.sense(i) {
                        return Err(field(
                            &format!("sense[{}]", i.0),
                            format!("{} player {} has sense {}", params.name(), i.0, g.sense(i).short()),
                        ));
                    }
                    if sampling[i.0].is_none() && boxes[i.0] == *g.domain(i) {
                        sampling[i.0] = Some(g.sampling_box(i).clone());
                    }
                }
                let objs = g.players().map(|i| g.objective(i).clone()).collect();
                (objs, Some(entry), params.name().to_string())
            }
        };
        let players = objectives
            .into_iter()
            .enumerate()
            .map(|(i, obj)| {
                let p = PlayerSpec::new(self.dims[i], self.sense[i].into(), boxes[i].clone(), obj);
                match sampling[i].clone() {
                    Some(s) => p.sampling(s),
                    None => p,
                }
            })
            .collect();
        let game = GameDefinition::new(name.unwrap_or(default_name), players)?;
        let entry = entry.map(|mut e| {
            e.game = game.clone();
            e
        });
        Ok(LoadedGame { game, entry })
    }
}

pub fn parse_game_spec(text: &str) -> Result<GameSpec> {
    serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
}

pub fn load_game(text: &str) -> Result<LoadedGame> {
    parse_game_spec(text)?.build()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjectureRecord {
    pub i: usize,
    pub j: usize,
    pub family: FamilyKind,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjectureFile {
    pub entries: Vec<ConjectureRecord>,
}

impl ConjectureFile {
    pub fn from_set(set: &ConjectureSet) -> Self {
        ConjectureFile {
            entries: set
                .iter()
                .map(|((i, j), e)| ConjectureRecord {
                    i: i.0,
                    j: j.0,
                    family: e.family.kind(),
                    theta: e.theta.clone(),
                })
                .collect(),
        }
    }

    /// Rebuilds the set against `game`, which fixes every family's dimensions.
    pub fn to_set(&self, game: &GameDefinition) -> Result<ConjectureSet> {
        if self.entries.is_empty() {
            return Err(field("entries", "no conjectures listed"));
        }
        let n = game.n_players();
        let mut out = Vec::with_capacity(self.entries.len());
        for (k, r) in self.entries.iter().enumerate() {
            let path = format!("entries[{k}]");
            if r.i >= n || r.j >= n || r.i == r.j {
                return Err(field(&path, format!("invalid pair ({}, {}) for {n} players", r.i, r.j)));
            }
            if r.family == FamilyKind::Custom {
                return Err(field(&format!("{path}.family"), "custom conjectures cannot be read from files"));
            }
            let fam = ConjectureFamily::of_kind(r.family, game.dim(PlayerId(r.i)), game.dim(PlayerId(r.j)))
                .map_err(|e| field(&path, e))?;
            let entry = ConjectureEntry::new(fam, r.theta.clone()).map_err(|e| field(&format!("{path}.theta"), e))?;
            out.push(((PlayerId(r.i), PlayerId(r.j)), entry));
        }
        ConjectureSet::new(n, out).map_err(|e| field("entries", e))
    }
}

pub fn load_conjectures(text: &str, game: &GameDefinition) -> Result<ConjectureSet> {
    let file: ConjectureFile = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    file.to_set(game)
}

/// Accepts a bare array, `{"x": [...]}` or a result file's `x_star`.
pub fn load_profile(text: &str, game: &GameDefinition) -> Result<StrategyProfile> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum ProfileFile {
        Bare(Vec<f64>),
        X { x: Vec<f64> },
        Star { x_star: Vec<f64> },
    }
    let file: ProfileFile = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    let flat = match file {
        ProfileFile::Bare(v) | ProfileFile::X { x: v } | ProfileFile::Star { x_star: v } => v,
    };
    StrategyProfile::from_flat(game.dims(), &flat).map_err(|e| field("x", e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub x_star: Vec<f64>,
    pub theta: ConjectureFile,
    pub objective: f64,
    pub residuals: ConsistencyReport,
    pub status: String,
    pub mode: DesignMode,
    pub starts_tried: usize,
    pub best_start_index: usize,
}

impl ResultFile {
    pub fn new(solution: &DesignSolution, mode: DesignMode) -> Self {
        ResultFile {
            x_star: solution.x_star.flatten(),
            theta: ConjectureFile::from_set(&solution.theta_star),
            objective: solution.objective_value,
            residuals: solution.report.clone(),
            status: solution.status.name().to_string(),
            mode,
            starts_tried: solution.starts_tried,
            best_start_index: solution.best_start_index,
        }
    }
}

