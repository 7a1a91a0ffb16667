mod args;
mod commands;
mod config;
mod sweep;

use std::process::ExitCode;

use clap::Parser;
use hotcold::{Category, Error, Result};

use args::{Cli, Command};
use config::Settings;

fn exit_code(category: Category) -> u8 {
    match category {
        Category::Usage => 2,
        Category::Data => 3,
        Category::Transport => 4,
        Category::Infeasible => 5,
    }
}

fn fail(category: Category, message: &str) -> ExitCode {
    // one line, so callers can split on the first `: `
    let message = message.replace('\n', " ");
    eprintln!("hotcold: error[{}]: {}", category.as_str(), message.trim());
    ExitCode::from(exit_code(category))
}

fn run(cli: Cli) -> Result<()> {
    let settings = Settings::new(cli.common)?;
    if let Some(jobs) = settings.jobs() {
        if jobs == 0 {
            return Err(Error::Argument("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::Argument(format!("cannot size the worker pool: {e}")))?;
    }
    match &cli.command {
        Command::Attack(a) => commands::attack(&settings, a),
        Command::Apply(a) => commands::apply(&settings, a),
        Command::Evaluate(a) => commands::evaluate_cmd(&settings, a),
        Command::Sweep(a) => sweep::sweep(&settings, a),
        Command::Baseline(a) => commands::baseline(&settings, a),
        Command::Synth(a) => commands::synth(&settings, a),
        Command::Augment(a) => commands::augment(&settings, a),
        Command::ImportYolo(a) => commands::import_yolo_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            return fail(Category::Usage, first.trim_start_matches("error: "));
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.category(), &e.to_string()),
    }
}
