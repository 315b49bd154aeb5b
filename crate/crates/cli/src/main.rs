use clap::Parser;

use conjdesign_cli::args::{Cli, Command};
use conjdesign_cli::commands::{self, Global};
use conjdesign_cli::{exit, reproduce, CmdResult};

fn run(cli: Cli) -> CmdResult {
    let global = Global {
        seed: cli.seed,
        tol: cli.tol,
        out_dir: cli.out_dir.clone(),
    };
    match &cli.command {
        Command::Solve(a) => commands::solve(&global, a),
        Command::Decentralized(a) => commands::decentralized(&global, a),
        Command::Dynamics(a) => commands::dynamics(&global, a),
        Command::Check(a) => commands::check(&global, a),
        Command::ExportGame(a) => commands::export_game(&global, a),
        Command::Reproduce(a) => {
            let m = reproduce::run(a.experiment, &cli.out_dir, cli.seed)?;
            for c in &m.checks {
                println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            println!("wrote {}", cli.out_dir.join(a.experiment.name()).join("manifest.json").display());
            Ok(if m.passed { exit::OK } else { exit::CHECK_FAILED })
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error: {e}");
            std::process::exit(exit::BAD_INPUT);
        }
    }
    let code = match run(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {f}");
            f.code
        }
    };
    std::process::exit(code);
}
