use clap::Parser;
use sdbli::cli::{init_threads, run, Cli};

fn main() {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| run(cli));
    match result {
        Ok(paths) => {
            for p in paths {
                eprintln!("wrote {}", p.display());
            }
        }
        Err(e) => {
            eprintln!("sdbli: {e}");
            std::process::exit(e.code);
        }
    }
}
