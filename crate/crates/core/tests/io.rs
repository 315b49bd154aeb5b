mod common;

use common::*;
use conjdesign::io::{load_conjectures, load_game, load_profile, parse_game_spec, ConjectureFile, GameSpec, ResultFile};
use conjdesign::*;

fn entries() -> Vec<CatalogEntry> {
    let mut out = catalog();
    for name in ["tragedy", "olsder", "coordination", "saddle"] {
        out.push(CatalogEntry::by_name(name).unwrap());
    }
    out.push(make_coordination(&[1.3; 4], &[0.1; 4], &[2.0, 4.0, 6.0, 3.0]).unwrap());
    out.push(make_tragedy(100.0).unwrap());
    out
}

fn roundtrip(e: &CatalogEntry) -> GameDefinition {
    let text = serde_json::to_string_pretty(&GameSpec::from_entry(e)).unwrap();
    load_game(&text).unwrap().game
}

/// Largest own-gradient entry of `game` at `x`, relative to the gradient terms' scale.
fn own_stationarity(game: &GameDefinition, x: &[f64]) -> f64 {
    game.players()
        .flat_map(|i| {
            let g = game.gradient_flat(i, x).unwrap();
            let scale = 1.0 + x.iter().map(|v| v.abs()).sum::<f64>();
            game.block_range(i).map(move |k| g[k].abs() / scale).collect::<Vec<_>>()
        })
        .fold(0.0, f64::max)
}

#[test]
fn exported_games_reload_with_the_same_objectives() {
    for e in entries() {
        let g = roundtrip(&e);
        assert_eq!(g.dims(), e.game.dims());
        assert_eq!(g.senses(), e.game.senses());
        assert_eq!(g.domains(), e.game.domains());
        assert_eq!(g.sampling_boxes(), e.game.sampling_boxes());
        let b = e.game.profile_sampling_box();
        let mut points: Vec<Vec<f64>> = e.references.values().map(|x| x.flatten()).collect();
        points.push(b.center());
        points.push(b.lower().iter().zip(b.upper()).map(|(l, u)| l + 0.3 * (u - l)).collect());
        for x in &points {
            for i in g.players() {
                let (a, c) = (g.value_flat(i, x), e.game.value_flat(i, x));
                assert!((a - c).abs() <= 1e-10 * (1.0 + c.abs()), "{} player {}: {a} vs {c}", e.game.name(), i.0);
                let ga = g.gradient_flat(i, x).unwrap();
                let gc = e.game.gradient_flat(i, x).unwrap();
                for (p, q) in ga.iter().zip(&gc) {
                    assert!((p - q).abs() <= 1e-10 * (1.0 + q.abs()));
                }
            }
        }
    }
}

#[test]
fn reloaded_interior_equilibria_stay_stationary() {
    for e in entries() {
        let g = roundtrip(&e);
        let Some(ne) = e.reference("NE") else { continue };
        if !e.flags.is_empty() {
            continue;
        }
        let r = own_stationarity(&g, &ne.flatten());
        assert!(r <= 1e-10, "{}: {r}", e.game.name());
        if let Some(so) = e.reference("SO") {
            let x = so.flatten();
            let scale = 1.0 + x.iter().map(|v| v.abs()).sum::<f64>();
            let mut total = vec![0.0; x.len()];
            for i in g.players() {
                for (t, v) in total.iter_mut().zip(g.gradient_flat(i, &x).unwrap()) {
                    *t += v;
                }
            }
            assert!(norm(&total) / scale <= 1e-10, "{} SO: {total:?}", e.game.name());
        }
    }
}

#[test]
fn spec_serialization_is_stable() {
    for e in entries() {
        let text = serde_json::to_string(&GameSpec::from_entry(&e)).unwrap();
        let again = serde_json::to_string(&parse_game_spec(&text).unwrap()).unwrap();
        assert_eq!(text, again);
    }
}

#[test]
fn unbounded_sides_are_written_as_null() {
    let e = make_coordination(&[1.0, 1.0], &[0.2, 0.2], &[1.0, 1.0]).unwrap();
    let v = serde_json::to_value(GameSpec::from_entry(&e)).unwrap();
    assert_eq!(v["domains"][0]["upper"], serde_json::json!([null]));
    assert_eq!(v["domains"][0]["lower"], serde_json::json!([0.0]));
    assert_eq!(roundtrip(&e).domain(PlayerId(1)).upper()[0], f64::INFINITY);
}

#[test]
fn catalog_kinds_load_with_their_entry() {
    let text = r#"{"n": 2, "dims": [1, 1], "sense": ["max", "max"],
        "domains": [{"lower": [1e-6], "upper": [11.999999]}, {"lower": [1e-6], "upper": [11.999999]}],
        "game": {"kind": "tragedy", "params": {"k": 12.0}}}"#;
    let loaded = load_game(text).unwrap();
    let entry = loaded.entry.unwrap();
    assert_eq!(entry.reference("SO").unwrap().flatten(), vec![3.0, 3.0]);
    assert_eq!(loaded.game.name(), "tragedy");
}

#[test]
fn malformed_specs_are_rejected() {
    let good = serde_json::to_value(GameSpec::from_entry(&make_olsder())).unwrap();
    let mut cases = Vec::new();
    let mut v = good.clone();
    v["n"] = 0.into();
    cases.push(v);
    let mut v = good.clone();
    v["dims"] = serde_json::json!([1]);
    cases.push(v);
    let mut v = good.clone();
    v["game"]["params"]["objectives"][1] = serde_json::json!([]);
    cases.push(v);
    let mut v = good.clone();
    v["game"]["kind"] = "chess".into();
    cases.push(v);
    let mut v = good.clone();
    v["domains"][0]["lower"] = serde_json::json!([600.0]);
    cases.push(v);
    let mut v = good.clone();
    v["game"] = serde_json::json!({"kind": "saddle", "params": {"xbar1": 0.0, "xbar2": 0.0}});
    v["sense"] = serde_json::json!(["max", "min"]);
    cases.push(v);
    for case in cases {
        let err = load_game(&case.to_string()).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{case}: {err:?}");
    }
    assert!(matches!(load_game("{not json").unwrap_err(), Error::Format(_)));
}

#[test]
fn conjecture_files_roundtrip() {
    for e in catalog() {
        let Some(set) = &e.published_conjectures else { continue };
        let text = serde_json::to_string(&ConjectureFile::from_set(set)).unwrap();
        let back = load_conjectures(&text, &e.game).unwrap();
        for ((pair, a), (pair_b, b)) in set.iter().zip(back.iter()) {
            assert_eq!(pair, pair_b);
            assert_eq!(a.theta, b.theta);
            assert_eq!(a.family.kind(), b.family.kind());
        }
    }
}

#[test]
fn bad_conjecture_files_are_rejected() {
    let g = make_saddle(0.0, 0.0).game;
    for text in [
        r#"{"entries": []}"#,
        r#"{"entries": [{"i": 0, "j": 0, "family": "affine", "theta": [0, 1]}, {"i": 1, "j": 0, "family": "affine", "theta": [0, 1]}]}"#,
        r#"{"entries": [{"i": 0, "j": 1, "family": "custom", "theta": []}, {"i": 1, "j": 0, "family": "affine", "theta": [0, 1]}]}"#,
        r#"{"entries": [{"i": 0, "j": 1, "family": "affine", "theta": [0, 1, 2]}, {"i": 1, "j": 0, "family": "affine", "theta": [0, 1]}]}"#,
        r#"{"entries": [{"i": 0, "j": 1, "family": "affine", "theta": [0, 1]}]}"#,
        r#"{"entries": [{"i": 0, "j": 3, "family": "affine", "theta": [0, 1]}]}"#,
    ] {
        assert!(load_conjectures(text, &g).is_err(), "{text}");
    }
    let err = load_conjectures(r#"{"entries": []}"#, &g).unwrap_err();
    assert!(matches!(err, Error::Format(ref m) if m.contains("entries")), "{err:?}");
}

#[test]
fn profiles_load_from_every_form() {
    let g = make_olsder().game;
    for text in ["[1.5, 2.5]", r#"{"x": [1.5, 2.5]}"#, r#"{"x_star": [1.5, 2.5], "objective": 3}"#] {
        assert_eq!(load_profile(text, &g).unwrap().flatten(), vec![1.5, 2.5]);
    }
    assert!(load_profile("[1.0]", &g).is_err());
    assert!(load_profile(r#"{"y": [1, 2]}"#, &g).is_err());
}

#[test]
fn result_files_feed_back_into_loaders() {
    let e = make_tragedy(12.0).unwrap();
    let problem = DesignProblem {
        game: e.game.clone(),
        families: uniform_families(&e.game, FamilyKind::Affine).unwrap(),
        objective: e.coordinator.clone(),
        mode: DesignMode::Cs,
        options: SolverOptions::default(),
    };
    let sol = solve_centralized(&problem).unwrap();
    let text = serde_json::to_string(&ResultFile::new(&sol, DesignMode::Cs)).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["mode"], "CS");
    assert_eq!(load_profile(&text, &e.game).unwrap(), sol.x_star);
    let set = load_conjectures(&v["theta"].to_string(), &e.game).unwrap();
    for ((_, a), (_, b)) in set.iter().zip(sol.theta_star.iter()) {
        assert_eq!(a.theta, b.theta);
    }
}
