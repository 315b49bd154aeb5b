#![allow(dead_code)]

use conjdesign::{make_coordination, make_olsder, make_saddle, make_tragedy, CatalogEntry, GameDefinition, PlayerId};

/// One entry per catalog constructor, with non-default parameters where the
/// constructor takes any.
pub fn catalog() -> Vec<CatalogEntry> {
    vec![
        make_tragedy(12.0).unwrap(),
        make_olsder(),
        make_coordination(&[1.0, 1.5, 0.7], &[0.2, 0.1, 0.4], &[2.0, 5.0, 3.0]).unwrap(),
        make_saddle(0.5, -1.0),
    ]
}

/// Central difference with its own step rule, kept apart from the library's.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let h = 1e-6 * x[k].abs().max(1.0);
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[k] += h;
            m[k] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
        .collect()
}

/// Maximizer of a unimodal function on `[lo, hi]` by golden-section search.
pub fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - r * (hi - lo);
    let mut d = lo + r * (hi - lo);
    for _ in 0..200 {
        if f(c) > f(d) {
            hi = d;
        } else {
            lo = c;
        }
        c = hi - r * (hi - lo);
        d = lo + r * (hi - lo);
    }
    0.5 * (lo + hi)
}

/// Root of `f` on `[lo, hi]` by bisection; `f(lo)` and `f(hi)` must differ in sign.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    assert!(flo * f(hi) < 0.0, "no sign change on [{lo}, {hi}]");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) < 0.0) == (flo < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

pub fn value(game: &GameDefinition, i: usize, x: &[f64]) -> f64 {
    game.objective(PlayerId(i)).value(x)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}
