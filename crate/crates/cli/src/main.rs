use clap::Parser;

use bpot_cli::config::Cli;

fn main() {
    // clap prints usage and exits with status 2 on bad invocations
    let cli = Cli::parse();
    match bpot_cli::run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            std::process::exit(1);
        }
    }
}
