//! Command-line orchestration of the full-order, PSD, training and reduced-model phases.
//!
//! Phases communicate only through files in the output directory, so each
//! subcommand can run (and be tested) on its own.

pub mod commands;
pub mod config;
pub mod manifest;

pub use commands::{run, Cli, Command};
pub use config::Config;
pub use manifest::RunManifest;

/// Machine-parsable class of a failure, printed as `error[<class>]: <message>`.
pub fn error_class(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<hamrom::Error>() {
            return e.class();
        }
        if cause.downcast_ref::<config::ConfigError>().is_some() || cause.downcast_ref::<toml::de::Error>().is_some() {
            return "config";
        }
        if cause.downcast_ref::<commands::MissingInput>().is_some() {
            return "missing-input";
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return "io";
        }
    }
    "runtime"
}

/// Single-line rendering of an error chain.
pub fn error_line(err: &anyhow::Error) -> String {
    let msg = format!("{err:#}").replace('\n', " ");
    format!("error[{}]: {}", error_class(err), msg)
}
