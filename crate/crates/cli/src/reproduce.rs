//! The four benchmark experiments. Each writes its tables into
//! `<out_dir>/<experiment>/` together with a manifest of hashed outputs and
//! acceptance checks.

use std::path::{Path, PathBuf};

use conjdesign::catalog::{olsder, sample_coordination_instance};
use conjdesign::decentralized::PlayerSolveOptions;
use conjdesign::dynamics::tune_eta;
use conjdesign::io::ResultFile;
use conjdesign::{
    assemble_decentralized, induce_equilibrium, make_coordination, make_olsder, make_saddle, make_tragedy,
    run_dynamics, solve_centralized, uniform_families, Algorithm, CatalogEntry, CoordinatorObjective, DesignMode,
    DesignProblem, DesignSolution, DynamicsConfig, FamilyKind, PlayerId, SolveStatus, SolverOptions,
    StrategyProfile,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::args::Experiment;
use crate::commands::write_trajectory;
use crate::manifest::ExperimentManifest;
use crate::output::{ensure_dir, header, num, write_csv, write_json};
use crate::Failure;

pub const TRAGEDY_CAPACITIES: [f64; 3] = [1.0, 12.0, 100.0];
pub const COORDINATION_SIZES: [usize; 7] = [2, 5, 10, 15, 20, 30, 50];
pub const SADDLE_ETA_GRID: [f64; 4] = [0.01, 0.05, 0.1, 0.5];
/// Horizon of the saddle figure; SG must not converge within it.
pub const SADDLE_STEPS: usize = 1000;
/// Horizon for tuning the baselines, long enough for LOLA at its best step.
pub const SADDLE_TUNING_STEPS: usize = 5000;
pub const SADDLE_START: [f64; 2] = [1.0, 1.0];
/// Relative closeness below which two welfare values share the best label.
const WELFARE_TIE: f64 = 1e-9;

/// Runs one experiment and writes its manifest.
pub fn run(experiment: Experiment, out_dir: &Path, seed: u64) -> Result<ExperimentManifest, Failure> {
    let dir = out_dir.join(experiment.name());
    ensure_dir(&dir)?;
    let mut m = ExperimentManifest::new(experiment.name());
    m.param("seed", seed);
    let files = match experiment {
        Experiment::Tragedy => tragedy(&dir, seed, &mut m)?,
        Experiment::Olsder => olsder_table(&dir, seed, &mut m)?,
        Experiment::Coordination => coordination(&dir, seed, &mut m)?,
        Experiment::Saddle => saddle(&dir, &mut m)?,
    };
    for f in &files {
        m.output(&dir, f)?;
    }
    write_json(&dir.join("manifest.json"), &m)?;
    Ok(m)
}

fn design(entry: &CatalogEntry, objective: CoordinatorObjective, mode: DesignMode, options: SolverOptions) -> Result<DesignSolution, Failure> {
    let problem = DesignProblem {
        game: entry.game.clone(),
        families: uniform_families(&entry.game, FamilyKind::Affine)?,
        objective,
        mode,
        options,
    };
    Ok(solve_centralized(&problem)?)
}

fn values(entry: &CatalogEntry, x: &StrategyProfile) -> Result<Vec<f64>, Failure> {
    entry
        .game
        .players()
        .map(|i| entry.game.eval_objective(i, x).map_err(Failure::from))
        .collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn tragedy(dir: &Path, seed: u64, m: &mut ExperimentManifest) -> Result<Vec<PathBuf>, Failure> {
    m.param("K", TRAGEDY_CAPACITIES);
    m.param("mode", "CS");
    m.param("family", "affine");
    let mut rows = Vec::new();
    let mut files = Vec::new();
    for (idx, k) in TRAGEDY_CAPACITIES.iter().enumerate() {
        let entry = make_tragedy(*k)?;
        let sol = design(&entry, entry.coordinator.clone(), DesignMode::Cs, SolverOptions { seed, ..Default::default() })?;
        let theta: Vec<f64> = sol.theta_star.iter().flat_map(|(_, e)| e.theta.clone()).collect();
        let expected_theta = [0.0, 1.0, 0.0, 1.0];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(idx as u64);
        let x0 = entry.game.profile_from_flat(&entry.game.profile_sampling_box().sample(&mut rng))?;
        let induced = induce_equilibrium(&entry.game, &sol.theta_star, &x0, 1.0, 20_000, 1e-10)?;
        let so = [k / 4.0, k / 4.0];
        let ne = entry.reference("NE").expect("tragedy stores its NE").clone();
        let j_so = values(&entry, &sol.x_star)?;
        let j_ne = values(&entry, &ne)?;
        let theta_err = max_abs_diff(&theta, &expected_theta);
        let induced_err = max_abs_diff(&induced.x.flatten(), &so);
        m.check(
            format!("K={k}: designed conjectures (a, b) = (0, 1)"),
            sol.status == SolveStatus::Converged && theta_err <= 1e-6,
            format!("status {}, max deviation {theta_err:.3e}", sol.status.name()),
        );
        m.check(
            format!("K={k}: induced equilibrium at (K/4, K/4)"),
            induced_err <= 1e-6,
            format!("max deviation {induced_err:.3e} from x0 = {:?}", x0.flatten()),
        );
        m.check(
            format!("K={k}: J_i(SO) > J_i(NE) for both players"),
            j_so.iter().zip(&j_ne).all(|(a, b)| a > b),
            format!("J(SO) = {j_so:?}, J(NE) = {j_ne:?}"),
        );
        let mut row = vec![num(*k)];
        row.extend(sol.x_star.flatten().into_iter().map(num));
        row.extend(theta.iter().copied().map(num));
        row.extend(induced.x.flatten().into_iter().map(num));
        row.extend(so.iter().copied().map(num));
        row.extend(j_so.iter().copied().map(num));
        row.extend(j_ne.iter().copied().map(num));
        row.push(sol.status.name().to_string());
        rows.push(row);
        files.push(write_json(&dir.join(format!("design_K{k}.json")), &ResultFile::new(&sol, DesignMode::Cs))?);
    }
    let h = header(&[
        "K", "x1", "x2", "a12", "b12", "a21", "b21", "induced1", "induced2", "so1", "so2", "J1_so", "J2_so", "J1_ne",
        "J2_ne", "status",
    ]);
    files.insert(0, write_csv(&dir.join("tragedy.csv"), &h, &rows)?);
    Ok(files)
}

fn olsder_table(dir: &Path, seed: u64, m: &mut ExperimentManifest) -> Result<Vec<PathBuf>, Failure> {
    m.param("mode", "CS");
    m.param("family", "affine");
    let entry = make_olsder();
    let start = entry.game.profile_from_flat(&entry.game.profile_sampling_box().center())?;
    let nash = entry.game.nash_equilibrium(&start, 1e-10, 200)?;
    let ne_values = values(&entry, &nash.x)?;
    let sol = design(&entry, entry.coordinator.clone(), DesignMode::Cs, SolverOptions { seed, ..Default::default() })?;
    let so_values = values(&entry, &sol.x_star)?;
    let cce = StrategyProfile::scalars(&olsder::CCE);
    let rows = vec![
        ("NE", nash.x.flatten(), ne_values.clone(), olsder::NE, olsder::NE_VALUES),
        ("CCE", cce.flatten(), olsder::CCE_VALUES.to_vec(), olsder::CCE, olsder::CCE_VALUES),
        ("SO", sol.x_star.flatten(), so_values.clone(), olsder::SO, olsder::SO_VALUES),
    ];
    let rows: Vec<Vec<String>> = rows
        .into_iter()
        .map(|(name, x, j, px, pj)| {
            let mut r = vec![name.to_string()];
            r.extend(x.into_iter().map(num));
            r.extend(j.into_iter().map(num));
            r.extend(px.into_iter().chain(pj).map(num));
            r
        })
        .collect();
    let table = write_csv(
        &dir.join("table1.csv"),
        &header(&["row", "x1", "x2", "J1", "J2", "x1_published", "x2_published", "J1_published", "J2_published"]),
        &rows,
    )?;
    let theta12 = sol.theta_star.get(PlayerId(0), PlayerId(1))?.theta.clone();
    let theta21 = sol.theta_star.get(PlayerId(1), PlayerId(0))?.theta.clone();
    let conj_rows = vec![
        vec!["1->2".to_string(), num(theta12[0]), num(theta12[1]), num(olsder::THETA_12[0]), num(olsder::THETA_12[1])],
        vec!["2->1".to_string(), num(theta21[0]), num(theta21[1]), num(olsder::THETA_21[0]), num(olsder::THETA_21[1])],
    ];
    let conj = write_csv(
        &dir.join("conjectures.csv"),
        &header(&["pair", "a", "b", "a_published", "b_published"]),
        &conj_rows,
    )?;
    let result = write_json(&dir.join("design.json"), &ResultFile::new(&sol, DesignMode::Cs))?;

    let ne_err = max_abs_diff(&ne_values, &olsder::NE_VALUES);
    m.check(
        "NE returns within 1 of the published values",
        nash.converged && ne_err <= 1.0,
        format!("NE {:?} with returns {ne_values:?}, max deviation {ne_err:.3}", nash.x.flatten()),
    );
    let so_err = max_abs_diff(&so_values, &olsder::SO_VALUES);
    m.check(
        "SO returns within 1 of the published values",
        sol.status == SolveStatus::Converged && so_err <= 1.0,
        format!("SO {:?} with returns {so_values:?}, max deviation {so_err:.3}", sol.x_star.flatten()),
    );
    let published: Vec<f64> = olsder::THETA_12.iter().chain(&olsder::THETA_21).copied().collect();
    let designed: Vec<f64> = theta12.iter().chain(&theta21).copied().collect();
    let theta_err = max_abs_diff(&designed, &published);
    m.check(
        "conjecture constants within 0.05 of the published values",
        theta_err <= 0.05,
        format!("designed {designed:?}, max deviation {theta_err:.4}"),
    );
    Ok(vec![table, conj, result])
}

/// Seed of the coordination instance for one `(N, symmetric)` cell.
pub fn coordination_seed(seed: u64, n: usize, symmetric: bool) -> u64 {
    seed.wrapping_mul(1_000).wrapping_add(2 * n as u64 + symmetric as u64)
}

/// Welfare of one method on one coordination instance.
#[derive(Debug, Clone)]
pub struct MethodResult {
    pub label: &'static str,
    pub welfare: f64,
    pub ok: bool,
}

#[derive(Debug, Clone)]
pub struct CoordinationCell {
    pub n: usize,
    pub symmetric: bool,
    pub methods: Vec<MethodResult>,
    pub ne_welfare: Option<f64>,
    pub flags: Vec<String>,
    pub decentralized_converged: bool,
}

impl CoordinationCell {
    /// Labels of the successful methods tied for the highest welfare.
    pub fn best(&self) -> String {
        let ok: Vec<&MethodResult> = self.methods.iter().filter(|r| r.ok).collect();
        let Some(top) = ok.iter().map(|r| r.welfare).reduce(f64::max) else {
            return "none".into();
        };
        let labels: Vec<&str> = ok
            .iter()
            .filter(|r| top - r.welfare <= WELFARE_TIE * top.abs().max(1.0))
            .map(|r| r.label)
            .collect();
        labels.join("/")
    }

    pub fn best_welfare(&self) -> Option<f64> {
        self.methods.iter().filter(|r| r.ok).map(|r| r.welfare).reduce(f64::max)
    }
}

/// CS and CW from the relaxation start alone, then the decentralized protocol.
pub fn coordination_cell(n: usize, symmetric: bool, seed: u64) -> Result<CoordinationCell, Failure> {
    let (a, b, d) = sample_coordination_instance(n, symmetric, coordination_seed(seed, n, symmetric));
    let entry = make_coordination(&a, &b, &d)?;
    let welfare = CoordinatorObjective::social_welfare(&entry.game);
    let mut methods = Vec::new();
    for (label, mode) in [("CS", DesignMode::Cs), ("CW", DesignMode::Cw)] {
        let sol = design(&entry, welfare.clone(), mode, SolverOptions { n_starts: 1, seed, ..Default::default() })?;
        methods.push(MethodResult {
            label,
            welfare: welfare.value(&sol.x_star.flatten()),
            ok: sol.status == SolveStatus::Converged,
        });
    }
    let families = uniform_families(&entry.game, FamilyKind::Affine)?;
    let out = assemble_decentralized(
        &entry.game,
        &families,
        &welfare,
        &SolverOptions { seed, ..Default::default() },
        &PlayerSolveOptions::default(),
    )?;
    methods.push(MethodResult {
        label: "D",
        welfare: welfare.value(&out.x_tilde.flatten()),
        ok: out.all_converged(),
    });
    Ok(CoordinationCell {
        n,
        symmetric,
        ne_welfare: entry.reference("NE").map(|x| welfare.value(&x.flatten())),
        flags: entry.flags.clone(),
        decentralized_converged: out.all_converged(),
        methods,
    })
}

fn coordination(dir: &Path, seed: u64, m: &mut ExperimentManifest) -> Result<Vec<PathBuf>, Failure> {
    m.param("N", COORDINATION_SIZES);
    m.param("metric", "social welfare of the resulting profile");
    m.param("sampler", "a in [0.5, 2], b in [0, 0.5], d in [1, 10]");
    let mut rows = Vec::new();
    let mut table = Vec::new();
    for n in COORDINATION_SIZES {
        let mut best = Vec::new();
        for symmetric in [true, false] {
            let cell = coordination_cell(n, symmetric, seed)?;
            let kind = if symmetric { "symmetric" } else { "asymmetric" };
            if symmetric {
                let ne = cell.ne_welfare.unwrap_or(f64::NAN);
                let top = cell.best_welfare().unwrap_or(f64::NAN);
                m.check(
                    format!("N={n} symmetric: best welfare exceeds the NE welfare"),
                    top > ne,
                    format!("best {} = {top:.6}, NE {ne:.6}", cell.best()),
                );
            } else if n >= 15 {
                m.check(
                    format!("N={n} asymmetric: decentralized players all converge"),
                    cell.decentralized_converged,
                    format!("D converged = {}", cell.decentralized_converged),
                );
            }
            let mut row = vec![n.to_string(), kind.to_string()];
            for r in &cell.methods {
                row.push(num(r.welfare));
                row.push(r.ok.to_string());
            }
            row.push(cell.ne_welfare.map_or(String::new(), num));
            row.push(cell.best());
            row.push(cell.flags.join(";"));
            rows.push(row);
            best.push(cell.best());
        }
        table.push(vec![n.to_string(), best[0].clone(), best[1].clone()]);
    }
    let detail = write_csv(
        &dir.join("coordination.csv"),
        &header(&[
            "n", "instance", "welfare_cs", "ok_cs", "welfare_cw", "ok_cw", "welfare_d", "ok_d", "welfare_ne", "best",
            "flags",
        ]),
        &rows,
    )?;
    let summary = write_csv(&dir.join("table2.csv"), &header(&["n", "symmetric", "asymmetric"]), &table)?;
    Ok(vec![detail, summary])
}

/// Outcome of the saddle comparison for one algorithm.
#[derive(Debug, Clone)]
pub struct SaddleRun {
    pub algorithm: Algorithm,
    pub tuned: Option<conjdesign::Trajectory>,
}

fn saddle_config(algorithm: Algorithm, eta: f64, steps: usize) -> DynamicsConfig {
    DynamicsConfig::new(algorithm, eta, steps)
}

/// Every algorithm tuned over the step-size grid from `(1, 1)`.
pub fn saddle_runs() -> Result<Vec<SaddleRun>, Failure> {
    let entry = make_saddle(0.0, 0.0);
    let set = entry.published_conjectures.clone().expect("saddle stores its conjectures");
    let x0 = StrategyProfile::scalars(&SADDLE_START);
    let x_ref = entry.reference("NE").expect("saddle stores its NE").clone();
    Ok(Algorithm::ALL
        .iter()
        .map(|al| {
            let conj = (*al == Algorithm::ConjGd).then_some(&set);
            let base = saddle_config(*al, SADDLE_ETA_GRID[0], SADDLE_TUNING_STEPS);
            SaddleRun {
                algorithm: *al,
                tuned: tune_eta(&entry.game, &base, &SADDLE_ETA_GRID, &x0, conj, &x_ref),
            }
        })
        .collect())
}

/// Largest relative gap between SG's `‖x_t‖` and `(1 + η²)^{t/2} ‖x_0‖`
/// over the steps before the iterate first touches the box boundary.
pub fn sg_growth_error(eta: f64) -> Result<(f64, usize), Failure> {
    let entry = make_saddle(0.0, 0.0);
    let x0 = StrategyProfile::scalars(&SADDLE_START);
    let x_ref = entry.reference("NE").expect("saddle stores its NE").clone();
    let traj = run_dynamics(&entry.game, &saddle_config(Algorithm::Sg, eta, SADDLE_STEPS), &x0, None, &x_ref)?;
    let upper = entry.game.domain(PlayerId(0)).upper()[0];
    let r0 = (SADDLE_START[0].powi(2) + SADDLE_START[1].powi(2)).sqrt();
    let mut worst = 0.0_f64;
    let mut checked = 0;
    for ((t, d), x) in traj.steps.iter().zip(&traj.distances).zip(&traj.iterates).skip(1) {
        let x = x.flatten();
        if x.iter().any(|v| v.abs() >= upper) {
            break;
        }
        let predicted = (1.0 + eta * eta).powf(*t as f64 / 2.0) * r0;
        worst = worst.max((d - predicted).abs() / predicted);
        checked += 1;
    }
    Ok((worst, checked))
}

fn saddle(dir: &Path, m: &mut ExperimentManifest) -> Result<Vec<PathBuf>, Failure> {
    m.param("eta_grid", SADDLE_ETA_GRID);
    m.param("steps", SADDLE_STEPS);
    m.param("tuning_steps", SADDLE_TUNING_STEPS);
    m.param("x0", SADDLE_START);
    let runs = saddle_runs()?;
    let entry = make_saddle(0.0, 0.0);
    let x0 = StrategyProfile::scalars(&SADDLE_START);
    let x_ref = entry.reference("NE").expect("saddle stores its NE").clone();
    let mut files = Vec::new();
    let mut summary = Vec::new();
    for run in &runs {
        let name = format!("saddle_{}.csv", run.algorithm.name().to_lowercase());
        let traj = match &run.tuned {
            Some(t) => t.clone(),
            None => run_dynamics(&entry.game, &saddle_config(run.algorithm, 0.1, SADDLE_STEPS), &x0, None, &x_ref)?,
        };
        files.push(write_trajectory(&dir.join(name), &traj, 2)?);
        summary.push(vec![
            run.algorithm.name().to_string(),
            run.tuned.as_ref().map_or(String::new(), |t| num(t.eta)),
            run.tuned.as_ref().and_then(|t| t.converged_at).map_or(String::new(), |s| s.to_string()),
            num(traj.final_distance()),
        ]);
    }
    files.push(write_csv(
        &dir.join("saddle_summary.csv"),
        &header(&["algorithm", "tuned_eta", "converged_at", "final_distance"]),
        &summary,
    )?);

    let conj_at = runs[0].tuned.as_ref().and_then(|t| t.converged_at);
    m.check(
        "ConjGD reaches 1e-6 within 50 steps at its tuned step",
        conj_at.is_some_and(|t| t <= 50),
        format!("converged at {conj_at:?}"),
    );
    let mut sg_never = true;
    let mut growth = Vec::new();
    for eta in SADDLE_ETA_GRID {
        let traj = run_dynamics(&entry.game, &saddle_config(Algorithm::Sg, eta, SADDLE_STEPS), &x0, None, &x_ref)?;
        sg_never &= traj.converged_at.is_none();
        growth.push((eta, sg_growth_error(eta)?));
    }
    m.check("SG never reaches 1e-6 in 1000 steps", sg_never, format!("grid {SADDLE_ETA_GRID:?}"));
    let worst = growth.iter().map(|(_, (e, _))| *e).fold(0.0, f64::max);
    m.check(
        "SG norm follows (1 + eta^2)^(t/2) growth",
        worst <= 1e-10 && growth.iter().all(|(_, (_, n))| *n > 0),
        format!("max relative error {worst:.3e} over {:?} interior steps", growth.iter().map(|(_, (_, n))| *n).collect::<Vec<_>>()),
    );
    for run in runs.iter().filter(|r| !matches!(r.algorithm, Algorithm::ConjGd | Algorithm::Sg)) {
        let at = run.tuned.as_ref().and_then(|t| t.converged_at);
        m.check(
            format!("{} converges at its tuned step, later than ConjGD", run.algorithm.name()),
            matches!((at, conj_at), (Some(a), Some(c)) if a > c),
            format!(
                "converged at {at:?} with eta {:?}",
                run.tuned.as_ref().map(|t| t.eta)
            ),
        );
    }
    Ok(files)
}
