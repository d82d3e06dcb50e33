mod args;
mod commands;
mod error;
mod run;

use clap::Parser;

use args::{Cli, Command};
use error::CliResult;

fn dispatch(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Window(a) => commands::window(a),
        Command::Attend(a) => commands::attend(a),
        Command::TrainHead(a) => commands::train_head(a),
        Command::Detect(a) => commands::detect(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Optimize(a) => commands::optimize(a),
        Command::Run(a) => run::run(a),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: cannot configure {jobs} worker threads: {e}");
            std::process::exit(2);
        }
    }
    if let Err(e) = dispatch(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
