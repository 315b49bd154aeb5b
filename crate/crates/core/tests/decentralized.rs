mod common;

use std::collections::BTreeMap;

use common::*;
use conjdesign::conjecture::{conjectured_grad, conjectured_value, ConjectureRef};
use conjdesign::decentralized::{mirror_init, opponent_families, OpponentFamilies, PlayerSolveOptions};
use conjdesign::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn options(seed: u64) -> SolverOptions {
    SolverOptions {
        seed,
        ..SolverOptions::default()
    }
}

/// The two rows of the player's root system, recomputed from its solution.
fn root_rows(view: &PlayerView, fams: &OpponentFamilies, sol: &PlayerSolution, target: f64) -> (f64, f64) {
    let refs: Vec<ConjectureRef<'_>> = fams
        .iter()
        .map(|(j, f)| ConjectureRef {
            target: *j,
            family: f,
            theta: &sol.theta[j],
        })
        .collect();
    let g = conjectured_grad(view, &refs, &sol.x_tilde_i).unwrap();
    let v = conjectured_value(view, &refs, &sol.x_tilde_i).unwrap();
    (norm(&g), (v - target).abs())
}

fn affine(game: &GameDefinition) -> FamilyMap {
    uniform_families(game, FamilyKind::Affine).unwrap()
}

#[test]
fn coordinator_targets_on_catalog_games() {
    let e = make_tragedy(12.0).unwrap();
    let x = coordinator_select_target(&e.coordinator, &e.game, &options(0)).unwrap();
    assert!(x.distance(&StrategyProfile::scalars(&[3.0, 3.0])) < 1e-6, "{x:?}");

    let e = make_olsder();
    let x = coordinator_select_target(&e.coordinator, &e.game, &options(0)).unwrap();
    assert!(x.distance(e.reference("SO").unwrap()) < 1e-4, "{x:?}");
}

#[test]
fn coordinator_finds_interior_minimizer_of_distance() {
    let e = make_olsder();
    let c = [120.0, 340.0];
    let f = CoordinatorObjective::custom(Sense::Minimize, move |x: &[f64]| (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2), None);
    let x = coordinator_select_target(&f, &e.game, &options(0)).unwrap();
    assert!(x.distance(&StrategyProfile::scalars(&c)) < 1e-5, "{x:?}");
}

#[test]
fn targets_are_player_values() {
    let e = make_tragedy(12.0).unwrap();
    let t = compute_targets(&e.game, &StrategyProfile::scalars(&[3.0, 3.0])).unwrap();
    let v = 3f64.ln() + 6f64.ln();
    assert_eq!(t.targets, vec![v, v]);

    let e = make_olsder();
    let t = compute_targets(&e.game, &StrategyProfile::scalars(&[300.04, 150.98])).unwrap();
    assert!((t.targets[0] - 38040.0).abs() <= 1.0 && (t.targets[1] - 21404.0).abs() <= 1.0, "{:?}", t.targets);

    let zero = GameDefinition::new(
        "zero",
        (0..3)
            .map(|_| PlayerSpec::new(1, Sense::Minimize, BoxDomain::uniform(1, -1.0, 1.0).unwrap(), PlayerObjective::new(|_| 0.0)))
            .collect(),
    )
    .unwrap();
    let t = compute_targets(&zero, &StrategyProfile::scalars(&[0.1, 0.2, 0.3])).unwrap();
    assert_eq!(t.targets, vec![0.0; 3]);
}

#[test]
fn tragedy_player_root_from_nearby_guess() {
    let e = make_tragedy(12.0).unwrap();
    let view = e.game.player_view(PlayerId(0));
    let fams = opponent_families(&affine(&e.game), PlayerId(0));
    let target = 3f64.ln() + 6f64.ln();
    let init = PlayerInit {
        x_i: vec![2.0],
        thetas: BTreeMap::from([(PlayerId(1), vec![0.5, 0.8])]),
    };
    let sol = player_solve(&view, &fams, target, &init, 1e-10, 200).unwrap();
    assert_eq!(sol.status, PlayerStatus::Converged);
    let (g, gap) = root_rows(&view, &fams, &sol, target);
    assert!(g <= 1e-8 && gap <= 1e-8, "{sol:?}");
}

#[test]
fn decoupled_player_converges_quickly() {
    let c = 1.5;
    let own = PlayerObjective::new(move |x: &[f64]| -(x[0] - c).powi(2) + 7.0);
    let dom = BoxDomain::uniform(1, -5.0, 5.0).unwrap();
    let game = GameDefinition::new(
        "decoupled",
        vec![
            PlayerSpec::new(1, Sense::Maximize, dom.clone(), own),
            PlayerSpec::new(1, Sense::Maximize, dom, PlayerObjective::new(|x: &[f64]| x[0] * x[1])),
        ],
    )
    .unwrap();
    let view = game.player_view(PlayerId(0));
    let fams = opponent_families(&affine(&game), PlayerId(0));
    let init = PlayerInit {
        x_i: vec![0.0],
        thetas: BTreeMap::from([(PlayerId(1), vec![0.3, -0.2])]),
    };
    let sol = player_solve(&view, &fams, 7.0, &init, 1e-10, 200).unwrap();
    assert_eq!(sol.status, PlayerStatus::Converged);
    assert!((sol.x_tilde_i[0] - c).abs() < 1e-6);
    assert!(sol.iterations <= 5, "{} iterations", sol.iterations);
}

#[test]
fn olsder_player_one_from_random_guesses() {
    let e = make_olsder();
    let view = e.game.player_view(PlayerId(0));
    let fams = opponent_families(&affine(&e.game), PlayerId(0));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut ok = 0;
    for _ in 0..10 {
        // A random guess predicts a random opponent action inside its box.
        let x_i: f64 = rng.random_range(0.0..500.0);
        let x_j: f64 = rng.random_range(0.0..500.0);
        let slope: f64 = rng.random_range(-2.0..2.0);
        let init = PlayerInit {
            x_i: vec![x_i],
            thetas: BTreeMap::from([(PlayerId(1), vec![x_j - slope * x_i, slope])]),
        };
        let sol = player_solve(&view, &fams, 38040.0, &init, 1e-8, 200).unwrap();
        if sol.status == PlayerStatus::Converged && sol.residual <= 1e-6 {
            ok += 1;
        }
    }
    assert!(ok >= 8, "{ok}/10 random guesses reached a root");
}

#[test]
fn tragedy_protocol_has_no_gap() {
    let e = make_tragedy(12.0).unwrap();
    let out = assemble_decentralized(&e.game, &affine(&e.game), &e.coordinator, &options(0), &PlayerSolveOptions::default()).unwrap();
    assert!(out.all_converged());
    assert!(out.delta.abs() <= 1e-6, "Δ = {}", out.delta);
}

#[test]
fn symmetric_coordination_beats_nash() {
    let n = 20;
    let e = make_coordination(&vec![1.2; n], &vec![0.15; n], &(0..n).map(|k| 2.0 + (k % 7) as f64).collect::<Vec<_>>()).unwrap();
    let out = assemble_decentralized(&e.game, &affine(&e.game), &e.coordinator, &options(0), &PlayerSolveOptions::default()).unwrap();
    let ne = e.reference("NE").unwrap().flatten();
    let welfare = |x: &[f64]| e.coordinator.value(x);
    assert!(welfare(&out.x_tilde.flatten()) > welfare(&ne), "{} vs {}", welfare(&out.x_tilde.flatten()), welfare(&ne));
}

#[test]
fn constant_coordinator_has_zero_gap() {
    let e = make_olsder();
    let out = assemble_decentralized(&e.game, &affine(&e.game), &CoordinatorObjective::constant(3.0), &options(0), &PlayerSolveOptions::default()).unwrap();
    assert_eq!(out.delta, 0.0);
}

#[test]
fn player_never_reads_opponent_objectives() {
    for e in catalog() {
        let x = e.game.profile_sampling_box().center();
        let targets = compute_targets(&e.game, &e.game.profile_from_flat(&x).unwrap()).unwrap().targets;
        let fams = affine(&e.game);
        for i in e.game.players() {
            let mut other = e.game.clone();
            for j in e.game.players().filter(|j| *j != i) {
                other = other.with_objective(j, PlayerObjective::new(move |x: &[f64]| 1e3 * x.iter().sum::<f64>() + j.0 as f64));
            }
            let solve = |g: &GameDefinition| {
                let view = g.player_view(i);
                let f = opponent_families(&fams, i);
                player_multistart(&view, &f, targets[i.0], &mirror_init(&view, &f), 4, 9, 1e-10, 200).unwrap()
            };
            let a = solve(&e.game);
            let b = solve(&other);
            assert_eq!(a.primary, b.primary, "{} player {}", e.game.name(), i.0);
            assert_eq!(a.roots, b.roots);
        }
    }
}

#[test]
fn serial_and_parallel_players_agree() {
    let e = make_coordination(&[1.0, 1.5, 0.7, 1.1], &[0.2, 0.1, 0.4, 0.0], &[2.0, 5.0, 3.0, 4.0]).unwrap();
    let run = |parallel: bool| {
        let opts = SolverOptions {
            parallel,
            ..options(4)
        };
        assemble_decentralized(&e.game, &affine(&e.game), &e.coordinator, &opts, &PlayerSolveOptions::default()).unwrap()
    };
    let a = run(true);
    let b = run(false);
    assert_eq!(a.x_tilde, b.x_tilde);
    for (p, q) in a.players.iter().zip(&b.players) {
        assert_eq!(p.primary, q.primary);
        assert_eq!(p.roots, q.roots);
    }
    assert_eq!(a.delta.to_bits(), b.delta.to_bits());
}

#[test]
fn every_small_catalog_game_has_player_roots() {
    for e in catalog() {
        let out = assemble_decentralized(&e.game, &affine(&e.game), &e.coordinator, &options(0), &PlayerSolveOptions::default()).unwrap();
        for p in &out.players {
            assert_eq!(p.primary.status, PlayerStatus::Converged, "{} player {}", e.game.name(), p.primary.player.0);
            assert!(p.primary.residual <= 1e-6);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn converged_roots_satisfy_both_rows(idx in 0usize..4, u in prop::collection::vec(0.05..0.95f64, 3), i in 0usize..3, seed in 0u64..1000) {
        let e = &catalog()[idx];
        let g = &e.game;
        let i = PlayerId(i % g.n_players());
        let b = g.profile_sampling_box();
        let flat: Vec<f64> = (0..g.total_dim()).map(|k| b.lower()[k] + u[k] * (b.upper()[k] - b.lower()[k])).collect();
        let target = value(g, i.0, &flat);
        prop_assume!(target.is_finite());
        let view = g.player_view(i);
        let fams = opponent_families(&affine(g), i);
        let tol = 1e-9;
        let roots = player_multistart(&view, &fams, target, &mirror_init(&view, &fams), 4, seed, tol, 200).unwrap();
        for sol in roots.roots.iter().chain([&roots.primary]) {
            if sol.status == PlayerStatus::Converged {
                let (grad, gap) = root_rows(&view, &fams, sol, target);
                prop_assert!(grad <= tol && gap <= tol, "{}: rows ({grad}, {gap})", g.name());
            }
        }
    }
}
