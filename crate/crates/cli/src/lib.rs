//! Scenario files, pipelines and output formats behind the `ws4d` binary.

pub mod error;
pub mod expr;
pub mod io;
pub mod pipeline;
pub mod scenario;

pub use error::CliError;
pub use scenario::Scenario;

/// Reads `WS4D_THREADS`. The value only has to be a positive integer: every
/// computation is sequential, so results never depend on it.
pub fn thread_setting() -> Result<Option<usize>, CliError> {
    match std::env::var("WS4D_THREADS") {
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(CliError::Config(format!("WS4D_THREADS: {e}"))),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Config(format!("WS4D_THREADS must be a positive integer, got '{s}'"))),
        },
    }
}
