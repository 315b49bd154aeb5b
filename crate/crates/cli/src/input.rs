//! Resolving command-line references to games, conjectures, profiles and
//! coordinator objectives.

use std::path::Path;
use std::sync::Arc;

use conjdesign::io::{self, LoadedGame, SenseTag};
use conjdesign::polynomial::{Monomial, Polynomial};
use conjdesign::{CatalogEntry, ConjectureSet, CoordinatorObjective, GameDefinition, StrategyProfile};
use serde::Deserialize;

use crate::Failure;

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn in_file(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::input(format!("{}: {e}", path.display()))
}

/// A spec file path, or the name of a catalog game with default parameters.
pub fn game(reference: &str) -> Result<LoadedGame, Failure> {
    let path = Path::new(reference);
    if path.exists() {
        return io::load_game(&read(path)?).map_err(|e| in_file(path, e));
    }
    match CatalogEntry::by_name(reference) {
        Ok(entry) => Ok(LoadedGame {
            game: entry.game.clone(),
            entry: Some(entry),
        }),
        Err(_) => Err(Failure::input(format!(
            "'{reference}' is neither a file nor a catalog game (tragedy, olsder, coordination, saddle)"
        ))),
    }
}

/// A conjecture file, or a conjecture set stored with a catalog game
/// (`published` or one of its named alternatives).
pub fn conjectures(reference: &str, loaded: &LoadedGame) -> Result<ConjectureSet, Failure> {
    let path = Path::new(reference);
    if path.exists() {
        return io::load_conjectures(&read(path)?, &loaded.game).map_err(|e| in_file(path, e));
    }
    let entry = loaded
        .entry
        .as_ref()
        .ok_or_else(|| Failure::input(format!("conjecture file '{reference}' not found")))?;
    let set = if reference == "published" {
        entry.published_conjectures.clone()
    } else {
        entry.other_conjectures.get(reference).cloned()
    };
    set.ok_or_else(|| Failure::input(format!("no conjecture file or stored set named '{reference}'")))
}

/// A profile file, a reference profile of a catalog game (`NE`, `SO`, ...)
/// or a comma-separated list of coordinates.
pub fn profile(reference: &str, loaded: &LoadedGame) -> Result<StrategyProfile, Failure> {
    let path = Path::new(reference);
    if path.exists() {
        return io::load_profile(&read(path)?, &loaded.game).map_err(|e| in_file(path, e));
    }
    if let Some(x) = loaded.entry.as_ref().and_then(|e| e.reference(reference)) {
        return Ok(x.clone());
    }
    let flat = parse_list(reference)?;
    StrategyProfile::from_flat(loaded.game.dims(), &flat).map_err(|e| Failure::input(format!("profile: {e}")))
}

pub fn parse_list(text: &str) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Failure::input(format!("'{text}' is not a profile file, reference or number list")))
        })
        .collect()
}

#[derive(Deserialize)]
struct ObjectiveFile {
    sense: SenseTag,
    terms: Vec<Monomial>,
}

/// `welfare`, `product`, `default` (the catalog's choice) or a JSON file
/// `{"sense": "max"|"min", "terms": [monomials]}` over the flattened profile.
pub fn objective(reference: &str, loaded: &LoadedGame) -> Result<CoordinatorObjective, Failure> {
    let game: &GameDefinition = &loaded.game;
    match reference {
        "default" => return Ok(loaded.default_coordinator()),
        "welfare" => return Ok(CoordinatorObjective::social_welfare(game)),
        "product" => return Ok(CoordinatorObjective::product(game)),
        _ => {}
    }
    let path = Path::new(reference);
    if !path.exists() {
        return Err(Failure::input(format!(
            "objective '{reference}' is not welfare, product, default or a file"
        )));
    }
    let file: ObjectiveFile = serde_json::from_str(&read(path)?).map_err(|e| in_file(path, e))?;
    let poly = Polynomial::new(game.total_dim(), file.terms).map_err(|e| in_file(path, format!("terms: {e}")))?;
    let g = poly.clone();
    Ok(CoordinatorObjective::custom(
        file.sense.into(),
        move |x: &[f64]| poly.value(x),
        Some(Arc::new(move |x: &[f64]| g.gradient(x))),
    ))
}
