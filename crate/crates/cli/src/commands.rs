//! Subcommand implementations. Each returns the process exit code.

use std::path::{Path, PathBuf};

use conjdesign::catalog::CatalogParams;
use conjdesign::decentralized::PlayerSolveOptions;
use conjdesign::dynamics::CONVERGENCE_RADIUS;
use conjdesign::io::{self, ConjectureFile, GameSpec, ResultFile};
use conjdesign::{
    assemble_decentralized, check_consistency, run_dynamics, solve_centralized, uniform_families, Algorithm,
    ConsistencyReport, DesignMode, DesignProblem, DynamicsConfig, Error, PlayerStatus, SolveStatus, SolverOptions,
    StrategyProfile, Trajectory,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{CheckArgs, DecentralizedArgs, DynamicsArgs, ExportArgs, SolveArgs};
use crate::output::{fmt_vec, header, num, write_csv, write_json};
use crate::{exit, input, CmdResult, Failure};

/// Flags shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Global {
    pub seed: u64,
    pub tol: Option<f64>,
    pub out_dir: PathBuf,
}

fn print_report(report: &ConsistencyReport) {
    println!("{:<14} {:>8} {:>14}", "residual", "index", "value");
    for (i, v) in report.stationarity.iter().enumerate() {
        println!("{:<14} {:>8} {:>14.6e}", "stationarity", i, v);
    }
    if let Some(o) = &report.order0 {
        for (i, v) in o.iter().enumerate() {
            println!("{:<14} {:>8} {:>14.6e}", "order0", i, v);
        }
    }
    for (name, pairs) in [("order1", &report.order1), ("order2", &report.order2)] {
        for p in pairs.iter().flatten() {
            println!("{:<14} {:>8} {:>14.6e}", name, format!("{}->{}", p.i, p.j), p.value);
        }
    }
    println!("{:<14} {:>8} {:>14.6e}", "max", "", report.max_residual);
}

pub fn solve(g: &Global, a: &SolveArgs) -> CmdResult {
    let loaded = input::game(&a.game)?;
    let mode: DesignMode = a.mode.parse()?;
    let objective = input::objective(&a.objective, &loaded)?;
    let problem = DesignProblem {
        families: uniform_families(&loaded.game, a.family.into())?,
        game: loaded.game,
        objective,
        mode,
        options: SolverOptions {
            n_starts: a.starts,
            seed: g.seed,
            constraint_tol: g.tol.unwrap_or(SolverOptions::default().constraint_tol),
            ..Default::default()
        },
    };
    let sol = solve_centralized(&problem)?;
    let path = write_json(&g.out_dir.join(&a.output), &ResultFile::new(&sol, mode))?;
    println!("mode       {}", mode.name());
    println!("status     {}", sol.status.name());
    println!("objective  {:.6}", sol.objective_value);
    println!("x*         {}", fmt_vec(&sol.x_star.flatten()));
    for ((i, j), e) in sol.theta_star.iter() {
        println!("theta {}->{}  {}", i.0, j.0, fmt_vec(&e.theta));
    }
    print_report(&sol.report);
    println!("wrote {}", path.display());
    Ok(match sol.status {
        SolveStatus::Converged => exit::OK,
        SolveStatus::Infeasible => exit::INFEASIBLE,
        SolveStatus::MaxIter => exit::MAX_ITER,
    })
}

#[derive(Debug, Serialize)]
struct PlayerRow {
    player: usize,
    residual: f64,
    iterations: usize,
    status: &'static str,
    distinct_roots: usize,
    successes: usize,
    attempts: usize,
}

#[derive(Debug, Serialize)]
struct OutcomeFile {
    x_star: Vec<f64>,
    targets: Vec<f64>,
    x_tilde: Vec<f64>,
    theta: ConjectureFile,
    objective_at_target: f64,
    objective_at_outcome: f64,
    delta: f64,
    distance: f64,
    all_converged: bool,
    players: Vec<PlayerRow>,
}

fn status_name(s: PlayerStatus) -> &'static str {
    match s {
        PlayerStatus::Converged => "converged",
        PlayerStatus::MaxIter => "max_iter",
    }
}

pub fn decentralized(g: &Global, a: &DecentralizedArgs) -> CmdResult {
    let loaded = input::game(&a.game)?;
    let objective = input::objective(&a.objective, &loaded)?;
    let families = uniform_families(&loaded.game, a.family.into())?;
    let options = SolverOptions {
        n_starts: a.starts,
        seed: g.seed,
        ..Default::default()
    };
    let player_options = PlayerSolveOptions {
        tol: g.tol.unwrap_or(PlayerSolveOptions::default().tol),
        max_iter: a.max_iter,
        n_starts: a.player_starts,
    };
    let out = assemble_decentralized(&loaded.game, &families, &objective, &options, &player_options)?;
    let players: Vec<PlayerRow> = out
        .players
        .iter()
        .map(|p| PlayerRow {
            player: p.primary.player.0,
            residual: p.primary.residual,
            iterations: p.primary.iterations,
            status: status_name(p.primary.status),
            distinct_roots: p.roots.len(),
            successes: p.successes,
            attempts: p.attempts,
        })
        .collect();
    let rows: Vec<Vec<String>> = players
        .iter()
        .map(|p| vec![p.player.to_string(), num(p.residual), p.iterations.to_string(), p.status.to_string()])
        .collect();
    let csv_path = write_csv(
        &g.out_dir.join("players.csv"),
        &header(&["player", "residual", "iterations", "status"]),
        &rows,
    )?;
    let x_star = out.assignment.x_star.flatten();
    let x_tilde = out.x_tilde.flatten();
    let file = OutcomeFile {
        objective_at_target: objective.value(&x_star),
        objective_at_outcome: objective.value(&x_tilde),
        x_star,
        targets: out.assignment.targets.clone(),
        x_tilde,
        theta: ConjectureFile::from_set(&out.theta_tilde),
        delta: out.delta,
        distance: out.distance,
        all_converged: out.all_converged(),
        players,
    };
    let json_path = write_json(&g.out_dir.join(&a.output), &file)?;
    println!("x*        {}", fmt_vec(&file.x_star));
    println!("x~        {}", fmt_vec(&file.x_tilde));
    println!("delta     {:.6e}", file.delta);
    println!("distance  {:.6e}", file.distance);
    println!("{:>6} {:>14} {:>10} {:>10}", "player", "residual", "iterations", "status");
    for p in &file.players {
        println!("{:>6} {:>14.6e} {:>10} {:>10}", p.player, p.residual, p.iterations, p.status);
    }
    println!("wrote {} and {}", json_path.display(), csv_path.display());
    Ok(if file.all_converged { exit::OK } else { exit::MAX_ITER })
}

/// Rows `step, x_1..x_m, distance` for every recorded update after the start.
pub fn trajectory_rows(traj: &Trajectory) -> Vec<Vec<String>> {
    traj.steps
        .iter()
        .zip(&traj.iterates)
        .zip(&traj.distances)
        .filter(|((s, _), _)| **s > 0)
        .map(|((s, x), d)| {
            let mut row = vec![s.to_string()];
            row.extend(x.flatten().into_iter().map(num));
            row.push(num(*d));
            row
        })
        .collect()
}

pub fn trajectory_header(m: usize) -> Vec<String> {
    let mut h = vec!["step".to_string()];
    h.extend((1..=m).map(|k| format!("x_{k}")));
    h.push("distance".into());
    h
}

pub fn write_trajectory(path: &Path, traj: &Trajectory, m: usize) -> Result<PathBuf, Failure> {
    write_csv(path, &trajectory_header(m), &trajectory_rows(traj))
}

#[derive(Debug, Serialize)]
struct CellRecord {
    algorithm: Algorithm,
    eta: f64,
    file: Option<String>,
    converged_at: Option<usize>,
    final_distance: Option<f64>,
    diverged: bool,
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct DynamicsManifest {
    game: String,
    steps: usize,
    x0: Vec<f64>,
    reference: Vec<f64>,
    convergence_radius: f64,
    cells: Vec<CellRecord>,
}

pub fn dynamics(g: &Global, a: &DynamicsArgs) -> CmdResult {
    let loaded = input::game(&a.game)?;
    let game = &loaded.game;
    let algorithms: Vec<Algorithm> = a.algorithms.iter().map(|s| s.parse()).collect::<Result<_, Error>>()?;
    if a.eta.is_empty() || a.eta.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
        return Err(Failure::input("--eta needs positive finite step sizes"));
    }
    if a.record_every == 0 {
        return Err(Failure::input("--record-every must be positive"));
    }
    let x0 = match &a.x0 {
        Some(r) => input::profile(r, &loaded)?,
        None => StrategyProfile::from_flat(game.dims(), &vec![1.0; game.total_dim()])?,
    };
    let x_ref = match &a.reference {
        Some(r) => input::profile(r, &loaded)?,
        None => loaded
            .entry
            .as_ref()
            .and_then(|e| e.reference("NE"))
            .cloned()
            .ok_or_else(|| Failure::input("no NE reference stored for this game; pass --reference"))?,
    };
    let conjectures = if algorithms.contains(&Algorithm::ConjGd) {
        Some(match &a.conjectures {
            Some(r) => input::conjectures(r, &loaded)?,
            None => loaded
                .entry
                .as_ref()
                .and_then(|e| e.published_conjectures.clone())
                .ok_or_else(|| Failure::input("conj-gd needs --conjectures"))?,
        })
    } else {
        None
    };
    let cells: Vec<(Algorithm, f64)> = algorithms
        .iter()
        .flat_map(|al| a.eta.iter().map(move |e| (*al, *e)))
        .collect();
    let runs: Vec<Result<Trajectory, Error>> = cells
        .par_iter()
        .map(|(al, eta)| {
            let mut cfg = DynamicsConfig::new(*al, *eta, a.steps);
            cfg.record_every = a.record_every;
            if *al == Algorithm::Lola {
                cfg.lola_lookahead = Some(a.lookahead);
            }
            if *al == Algorithm::Sga {
                cfg.sga_lambda = Some(a.sga_lambda);
            }
            let conj = if *al == Algorithm::ConjGd { conjectures.as_ref() } else { None };
            run_dynamics(game, &cfg, &x0, conj, &x_ref)
        })
        .collect();
    let mut records = Vec::new();
    println!("{:<8} {:>8} {:>12} {:>14} {:>9}", "algo", "eta", "converged_at", "final_dist", "diverged");
    for ((al, eta), run) in cells.iter().zip(runs) {
        let rec = match run {
            Ok(traj) => {
                let name = format!("dynamics_{}_eta{}.csv", al.name().to_lowercase(), eta);
                write_trajectory(&g.out_dir.join(&name), &traj, game.total_dim())?;
                let start = traj.distances[0];
                CellRecord {
                    algorithm: *al,
                    eta: *eta,
                    file: Some(name),
                    converged_at: traj.converged_at,
                    final_distance: Some(traj.final_distance()),
                    diverged: traj.converged_at.is_none() && traj.final_distance() > start,
                    error: None,
                }
            }
            Err(e @ Error::Diverged { .. }) => CellRecord {
                algorithm: *al,
                eta: *eta,
                file: None,
                converged_at: None,
                final_distance: None,
                diverged: true,
                error: Some(e.to_string()),
            },
            Err(e) => return Err(e.into()),
        };
        println!(
            "{:<8} {:>8} {:>12} {:>14} {:>9}",
            al.name(),
            eta,
            rec.converged_at.map_or("-".to_string(), |t| t.to_string()),
            rec.final_distance.map_or("-".to_string(), |d| format!("{d:.6e}")),
            rec.diverged
        );
        records.push(rec);
    }
    let manifest = DynamicsManifest {
        game: game.name().to_string(),
        steps: a.steps,
        x0: x0.flatten(),
        reference: x_ref.flatten(),
        convergence_radius: CONVERGENCE_RADIUS,
        cells: records,
    };
    let path = write_json(&g.out_dir.join("dynamics_manifest.json"), &manifest)?;
    println!("wrote {}", path.display());
    Ok(exit::OK)
}

pub fn check(g: &Global, a: &CheckArgs) -> CmdResult {
    let loaded = input::game(&a.game)?;
    let set = input::conjectures(&a.conjectures, &loaded)?;
    let x = input::profile(&a.profile, &loaded)?;
    let tol = g.tol.unwrap_or(1e-6);
    let report = match check_consistency(&loaded.game, &set, &x, a.order) {
        Ok(r) => r,
        Err(Error::Singular(msg)) => {
            eprintln!("order-2 check failed: singular system in {msg}");
            return Ok(exit::SINGULAR);
        }
        Err(e) => return Err(e.into()),
    };
    print_report(&report);
    let path = write_json(&g.out_dir.join("check.json"), &report)?;
    println!("wrote {}", path.display());
    let pass = report.max_residual <= tol;
    println!("{} (max residual {:.6e}, tolerance {:.1e})", if pass { "consistent" } else { "inconsistent" }, report.max_residual, tol);
    Ok(if pass { exit::OK } else { exit::CHECK_FAILED })
}

pub fn export_game(g: &Global, a: &ExportArgs) -> CmdResult {
    let (name, spec) = match &a.params {
        Some(text) => {
            let params: serde_json::Value =
                serde_json::from_str(text).map_err(|e| Failure::input(format!("--params: {e}")))?;
            let tagged = serde_json::json!({ "kind": a.game, "params": params });
            let params: CatalogParams =
                serde_json::from_value(tagged).map_err(|e| Failure::input(format!("--params: {e}")))?;
            let entry = params.build()?;
            (a.game.clone(), GameSpec::from_entry(&entry))
        }
        None => {
            let path = Path::new(&a.game);
            if path.exists() {
                let text = std::fs::read_to_string(path)?;
                let spec = io::parse_game_spec(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
                spec.build().map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
                let stem = path.file_stem().map_or("game".into(), |s| s.to_string_lossy().to_string());
                (stem, spec)
            } else {
                let loaded = input::game(&a.game)?;
                let entry = loaded.entry.expect("catalog lookups carry their entry");
                (a.game.clone(), GameSpec::from_entry(&entry))
            }
        }
    };
    let file = a.output.clone().unwrap_or(format!("{name}.json"));
    let path = write_json(&g.out_dir.join(file), &spec)?;
    println!("wrote {}", path.display());
    Ok(exit::OK)
}
