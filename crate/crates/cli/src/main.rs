use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ws4d::pipeline;
use ws4d::scenario::Projection;
use ws4d::{CliError, Scenario};

#[derive(Parser)]
#[command(name = "ws4d", version, about = "Weierstrass surfaces in 4D and their DSII deformations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its outputs.
    Run { scenario: PathBuf },
    /// Run a scenario and check every identity that applies to it.
    Verify {
        scenario: PathBuf,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Write the surface mesh of a scenario.
    Export {
        scenario: PathBuf,
        /// drop-x1, drop-x2, drop-x3, drop-x4 or stereographic.
        #[arg(long, default_value = "drop-x4")]
        projection: String,
        /// Mesh path; defaults to the scenario's surface_mesh output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    ws4d::thread_setting()?;
    match cli.command {
        Command::Run { scenario } => {
            let sc = Scenario::load(&scenario)?;
            let out = pipeline::run(&sc)?;
            let last = out.record.rows().last();
            if let Some(r) = last {
                println!(
                    "{}: t = {} W = {:e} C1 = {:e}{:+e}i dirac_res = {:e}",
                    sc.name, r.t, r.willmore, r.c1.re, r.c1.im, r.dirac_residual
                );
            }
            Ok(())
        }
        Command::Verify { scenario, json } => {
            let sc = Scenario::load(&scenario)?;
            let report = pipeline::verify(&sc)?;
            if json {
                let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Config(e.to_string()))?;
                println!("{text}");
            } else {
                println!("verify {}", report.scenario);
                for c in &report.checks {
                    println!("{}", c.line());
                }
            }
            match report.failed() {
                0 => Ok(()),
                failed => Err(CliError::VerifyFailed { failed, total: report.checks.len() }),
            }
        }
        Command::Export { scenario, projection, output } => {
            let projection: Projection = projection.parse()?;
            let sc = Scenario::load(&scenario)?;
            let path = pipeline::export(&sc, projection, output.as_deref())?;
            println!("wrote {}", path.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::to_string(&e.report()).unwrap_or_else(|_| format!("{{\"message\":\"{e}\"}}"));
            eprintln!("{report}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
