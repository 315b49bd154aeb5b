mod common;

use common::*;
use conjdesign::*;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn scalar_set(a12: f64, b12: f64, a21: f64, b21: f64) -> ConjectureSet {
    ConjectureSet::new(
        2,
        vec![
            ((PlayerId(0), PlayerId(1)), ConjectureEntry::scalar_affine(a12, b12)),
            ((PlayerId(1), PlayerId(0)), ConjectureEntry::scalar_affine(a21, b21)),
        ],
    )
    .unwrap()
}

#[test]
fn olsder_conjecture_at_social_optimum() {
    let set = make_olsder().published_conjectures.unwrap();
    let v = set.eval_conjecture(PlayerId(0), PlayerId(1), &[300.04]).unwrap();
    assert!((v[0] - 150.98).abs() <= 0.05, "{v:?}");
    let j = set.conjecture_jacobian(PlayerId(0), PlayerId(1), &[17.0]).unwrap();
    assert_eq!(j[(0, 0)], 0.5564);
}

#[test]
fn identity_conjecture_returns_its_input() {
    let fam = ConjectureFamily::affine(3, 3);
    let theta = fam.identity_theta().unwrap();
    let x = [1.5, -2.0, 7.25];
    assert_eq!(fam.eval(&x, &theta), x.to_vec());
    assert_eq!(fam.jacobian(&x, &theta), DMatrix::identity(3, 3));
}

#[test]
fn tragedy_conjecture_maps_social_optimum_to_itself() {
    let set = make_tragedy(12.0).unwrap().published_conjectures.unwrap();
    assert_eq!(set.eval_conjecture(PlayerId(0), PlayerId(1), &[3.0]).unwrap(), vec![3.0]);
}

#[test]
fn quadratic_jacobian() {
    let fam = ConjectureFamily::quadratic(1, 1);
    assert_eq!(fam.jacobian(&[3.0], &[0.0, 1.0])[(0, 0)], 6.0);
}

#[test]
fn saddle_published_slopes() {
    let set = make_saddle(0.0, 0.0).published_conjectures.unwrap();
    assert_eq!(set.conjecture_jacobian(PlayerId(0), PlayerId(1), &[0.3]).unwrap()[(0, 0)], -1.0);
    assert_eq!(set.conjecture_jacobian(PlayerId(1), PlayerId(0), &[0.3]).unwrap()[(0, 0)], 1.0);
}

#[test]
fn missing_pair_is_a_lookup_error() {
    let set = scalar_set(0.0, 1.0, 0.0, 1.0);
    assert!(set.eval_conjecture(PlayerId(0), PlayerId(2), &[1.0]).is_err());
}

#[test]
fn tragedy_conjectured_objective_and_gradient() {
    let e = make_tragedy(12.0).unwrap();
    let set = e.published_conjectures.clone().unwrap();
    let v = conjectured_objective(&e.game, &set, PlayerId(0), &[3.0]).unwrap();
    assert!((v - (3f64.ln() + 6f64.ln())).abs() < 1e-14);
    assert!((v - 2.8904).abs() < 1e-4);
    let g = conjectured_gradient(&e.game, &set, PlayerId(0), &[3.0]).unwrap();
    assert!(g[0].abs() < 1e-14, "{g:?}");
}

#[test]
fn saddle_conjectured_objective_is_concave_square() {
    let e = make_saddle(0.0, 0.0);
    let set = e.published_conjectures.clone().unwrap();
    assert_eq!(conjectured_objective(&e.game, &set, PlayerId(0), &[2.0]).unwrap(), -4.0);
    assert_eq!(conjectured_gradient(&e.game, &set, PlayerId(0), &[0.0]).unwrap(), vec![0.0]);
    let convex = &e.other_conjectures["convex"];
    assert_eq!(conjectured_objective(&e.game, convex, PlayerId(0), &[2.0]).unwrap(), 4.0);
}

#[test]
fn olsder_conjectured_gradient_at_published_optimum() {
    let e = make_olsder();
    let set = e.published_conjectures.clone().unwrap();
    let g = conjectured_gradient(&e.game, &set, PlayerId(0), &[300.04]).unwrap();
    assert!(g[0].abs() <= 0.5, "{g:?}");
}

#[test]
fn identity_conjectures_on_the_diagonal() {
    let e = make_coordination(&[1.0, 1.0], &[0.3, 0.3], &[2.0, 2.0]).unwrap();
    let set = ConjectureSet::identity(&e.game).unwrap();
    let x = StrategyProfile::scalars(&[1.7, 1.7]);
    for i in [PlayerId(0), PlayerId(1)] {
        let c = conjectured_objective(&e.game, &set, i, x.block(i)).unwrap();
        assert_eq!(c, e.game.eval_objective(i, &x).unwrap());
    }
    let r = check_consistency(&e.game, &set, &x, 1).unwrap();
    assert_eq!(r.order0.as_deref(), Some(&[0.0, 0.0][..]));
    assert_eq!(r.max_order1().unwrap(), 0.0);
}

#[test]
fn affine_fit_by_substitution() {
    let fam = ConjectureFamily::affine(1, 1);
    let theta = fam.fit_point_slope(&[2.0], &[5.0], &DMatrix::from_element(1, 1, 3.0)).unwrap();
    assert_eq!(theta, vec![-1.0, 3.0]);
    assert_eq!(fam.eval(&[2.0], &theta), vec![5.0]);
    let constant = fam.fit_point_slope(&[2.0], &[5.0], &DMatrix::zeros(1, 1)).unwrap();
    assert_eq!(constant, vec![5.0, 0.0]);
}

#[test]
fn quadratic_fit_by_substitution() {
    let fam = ConjectureFamily::quadratic(1, 1);
    let theta = fam.fit_point_slope(&[1.0], &[4.0], &DMatrix::from_element(1, 1, 2.0)).unwrap();
    assert_eq!(theta, vec![3.0, 1.0]);
    assert_eq!(fam.eval(&[1.0], &theta), vec![4.0]);
    assert_eq!(fam.jacobian(&[1.0], &theta)[(0, 0)], 2.0);
    let err = fam.fit_point_slope(&[0.0], &[4.0], &DMatrix::from_element(1, 1, 2.0)).unwrap_err();
    assert!(matches!(err, Error::Singular(_)), "{err}");
}

#[test]
fn tragedy_published_set_is_consistent() {
    let e = make_tragedy(12.0).unwrap();
    let set = e.published_conjectures.clone().unwrap();
    let r = check_consistency(&e.game, &set, &StrategyProfile::scalars(&[3.0, 3.0]), 1).unwrap();
    assert!(r.max_residual <= 1e-12, "{r:?}");
}

#[test]
fn olsder_published_set_pair_residuals() {
    let e = make_olsder();
    let set = e.published_conjectures.clone().unwrap();
    let r = check_consistency(&e.game, &set, &StrategyProfile::scalars(&[300.04, 150.98]), 1).unwrap();
    assert!(r.max_order1().unwrap() <= 0.05, "{r:?}");
    assert!(r.max_stationarity() <= 0.5, "{r:?}");
}

#[test]
fn saddle_order_two_is_singular() {
    let e = make_saddle(0.0, 0.0);
    let err = check_consistency(&e.game, &e.other_conjectures["convex"], &StrategyProfile::scalars(&[0.0, 0.0]), 2).unwrap_err();
    assert!(matches!(err, Error::Singular(_)), "{err}");
}

#[test]
fn order_two_at_tragedy_nash() {
    // Best-response slope is −1/2, so b = −1/2 is second-order consistent.
    let e = make_tragedy(12.0).unwrap();
    let set = scalar_set(6.0, -0.5, 6.0, -0.5);
    let r = check_consistency(&e.game, &set, &StrategyProfile::scalars(&[4.0, 4.0]), 2).unwrap();
    assert!(r.max_order1().unwrap() < 1e-12);
    assert!(r.max_order2().unwrap() < 1e-5, "{r:?}");
}

fn matrix(rows: usize, cols: usize, v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |r, c| v[(r * cols + c) % v.len()])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn point_slope_fit_round_trip(
        quadratic in any::<bool>(),
        m_in in 1usize..4,
        m_out in 1usize..4,
        x_i in prop::collection::vec(prop_oneof![-10.0..-0.1f64, 0.1..10.0f64], 3),
        x_j in prop::collection::vec(-50.0..50.0f64, 3),
        alpha in prop::collection::vec(-5.0..5.0f64, 9),
    ) {
        let fam = if quadratic { ConjectureFamily::quadratic(m_in, m_out) } else { ConjectureFamily::affine(m_in, m_out) };
        let xi = &x_i[..m_in];
        let xj = &x_j[..m_out];
        let a = matrix(m_out, m_in, &alpha);
        let theta = fam.fit_point_slope(xi, xj, &a).unwrap();
        prop_assert_eq!(theta.len(), fam.param_dim());
        let v = fam.eval(xi, &theta);
        for (p, q) in v.iter().zip(xj) {
            prop_assert!((p - q).abs() <= 1e-10, "value {v:?} vs {xj:?}");
        }
        let jac = fam.jacobian(xi, &theta);
        prop_assert!((jac - &a).amax() <= 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn exact_first_order_implies_exact_zeroth_order(
        which in 0usize..3,
        x in prop::collection::vec(1i32..200, 3),
        slopes in prop::collection::vec(-3i32..=3, 6),
    ) {
        // Integer data keeps every conjecture evaluation exact.
        let e = match which {
            0 => make_olsder(),
            1 => make_coordination(&[1.0, 2.0, 0.5], &[0.1, 0.2, 0.3], &[100.0, 50.0, 20.0]).unwrap(),
            _ => make_saddle(3.0, -2.0),
        };
        let n = e.game.n_players();
        let lo: Vec<f64> = (0..n).map(|i| e.game.domain(PlayerId(i)).lower()[0]).collect();
        let xs: Vec<f64> = (0..n).map(|i| lo[i] + (x[i] % 20) as f64).collect();
        let mut entries = Vec::new();
        let mut s = slopes.iter();
        for i in 0..n {
            for j in (0..n).filter(|j| *j != i) {
                let b = *s.next().unwrap() as f64;
                entries.push(((PlayerId(i), PlayerId(j)), ConjectureEntry::scalar_affine(xs[j] - b * xs[i], b)));
            }
        }
        let set = ConjectureSet::new(n, entries).unwrap();
        let r = check_consistency(&e.game, &set, &StrategyProfile::scalars(&xs), 1).unwrap();
        prop_assert_eq!(r.max_order1().unwrap(), 0.0);
        for v in r.order0.unwrap() {
            prop_assert!(v <= 1e-12, "order-0 residual {v}");
        }
    }

    #[test]
    fn conjectured_gradient_matches_finite_differences(
        idx in 0usize..4,
        u in prop::collection::vec(0.2..0.8f64, 3),
        slopes in prop::collection::vec(-1.0..1.0f64, 6),
        shift in -0.05..0.05f64,
        quadratic in any::<bool>(),
    ) {
        let e = &catalog()[idx];
        let g = &e.game;
        let n = g.n_players();
        let b = g.profile_sampling_box();
        let xs: Vec<f64> = (0..n).map(|k| b.lower()[k] + u[k] * (b.upper()[k] - b.lower()[k])).collect();
        let mut entries = Vec::new();
        let mut s = slopes.iter();
        for i in 0..n {
            for j in (0..n).filter(|j| *j != i) {
                let fam = if quadratic { ConjectureFamily::quadratic(1, 1) } else { ConjectureFamily::affine(1, 1) };
                let theta = fam.fit_point_slope(&[xs[i]], &[xs[j]], &DMatrix::from_element(1, 1, *s.next().unwrap())).unwrap();
                entries.push(((PlayerId(i), PlayerId(j)), ConjectureEntry::new(fam, theta).unwrap()));
            }
        }
        let set = ConjectureSet::new(n, entries).unwrap();
        for i in 0..n {
            let width = b.upper()[i] - b.lower()[i];
            let xi = xs[i] + shift * width;
            let f = |p: &[f64]| conjectured_objective(g, &set, PlayerId(i), p).unwrap_or(f64::NAN);
            // Stay where no conjectured opponent is clamped to its domain.
            let inside = (0..n).filter(|j| *j != i).all(|j| {
                let v = set.eval_conjecture(PlayerId(i), PlayerId(j), &[xi]).unwrap()[0];
                let d = g.domain(PlayerId(j));
                v > d.lower()[0] + 1e-3 && v < d.upper()[0] - 1e-3
            });
            prop_assume!(inside && f(&[xi]).is_finite());
            let an = conjectured_gradient(g, &set, PlayerId(i), &[xi]).unwrap()[0];
            let fd = fd_gradient(f, &[xi])[0];
            prop_assert!((an - fd).abs() <= 1e-5 * an.abs().max(fd.abs()).max(1.0), "{}: {an} vs {fd}", g.name());
        }
    }

    #[test]
    fn order_two_is_independent_of_lower_orders(k in 1.0..100.0f64, b in -3.0..3.0f64) {
        let e = make_tragedy(k).unwrap();
        let ne = k / 3.0;
        let set = scalar_set(ne - b * ne, b, ne - b * ne, b);
        let r = check_consistency(&e.game, &set, &StrategyProfile::scalars(&[ne, ne]), 2).unwrap();
        prop_assert!(r.max_order1().unwrap() <= 1e-12 * k);
        for p in r.order2.unwrap() {
            prop_assert!((p.value - (b + 0.5).abs()).abs() <= 1e-5, "order-2 residual {} for slope {b}", p.value);
        }
    }
}
