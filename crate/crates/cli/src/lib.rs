pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;

use config::{Cli, Command};
use error::CliResult;

pub fn run(cli: &Cli) -> CliResult<Vec<std::path::PathBuf>> {
    match &cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Quantile(a) => commands::quantile(a),
        Command::Predict(a) => commands::predict(a),
        Command::Scedasis(a) => commands::scedasis(a),
        Command::TestCovariate(a) => commands::test_covariate(a),
        Command::Simulate(a) => commands::simulate(a),
    }
}
