use clap::Parser;
use hamrom_cli::{error_line, run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(manifest) => log::info!("wrote {}", manifest.display()),
        Err(err) => {
            eprintln!("{}", error_line(&err));
            std::process::exit(1);
        }
    }
}
