mod config;
mod experiments;
mod output;

use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use serde_json::{json, Value};

use config::{Cli, Job};
use output::{json_string, Artifacts};

/// Exit status 2: the configuration or input is invalid.
const EXIT_CONFIG: u8 = 2;
/// Exit status 3: a numerical method failed.
const EXIT_NUMERIC: u8 = 3;
const EXIT_IO: u8 = 1;

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Core(srqe::Error),
}

impl From<srqe::Error> for Failure {
    fn from(e: srqe::Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(srqe::Error::Io(e))
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        use srqe::Error::*;
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Core(NoConvergence { .. } | Resolution(_) | Resource(_) | Grading(_)) => EXIT_NUMERIC,
            Failure::Core(Io(_)) => EXIT_IO,
            Failure::Core(_) => EXIT_CONFIG,
        }
    }

    fn to_json(&self) -> Value {
        use srqe::Error::*;
        let (kind, diagnostics) = match self {
            Failure::Config(_) => ("invalid-config", Value::Null),
            Failure::Core(e) => match e {
                NoConvergence { iterations, wanted, converged, best_values, best_residuals } => (
                    "no-convergence",
                    json!({ "iterations": iterations, "wanted": wanted, "converged": converged, "best_values": best_values, "best_residuals": best_residuals }),
                ),
                OutOfRange { value, max } => ("out-of-range", json!({ "value": value, "max": max })),
                Domain(_) => ("domain", Value::Null),
                Resource(_) => ("resource", Value::Null),
                Configuration(_) => ("configuration", Value::Null),
                ModelInvariant(_) => ("model-invariant", Value::Null),
                Precondition(_) => ("precondition", Value::Null),
                Grading(_) => ("grading", Value::Null),
                Resolution(_) => ("resolution", Value::Null),
                Parse(_) => ("parse", Value::Null),
                Io(_) => ("io", Value::Null),
            },
        };
        let message = match self {
            Failure::Config(m) => m.clone(),
            Failure::Core(e) => e.to_string(),
        };
        json!({ "error": kind, "message": message, "exit_code": self.exit_code(), "diagnostics": diagnostics })
    }
}

fn report(f: &Failure, out: Option<&std::path::Path>) -> ExitCode {
    let body = json_string(&f.to_json()).unwrap_or_else(|_| format!("{{\"error\":\"{:?}\"}}\n", f));
    eprint!("{body}");
    if let Some(dir) = out {
        let _ = std::fs::create_dir_all(dir).and_then(|_| std::fs::write(dir.join("error.json"), &body));
    }
    ExitCode::from(f.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let job = match Job::resolve(cli) {
        Ok(j) => j,
        Err(m) => return report(&Failure::Config(m), None),
    };
    if let Some(n) = job.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return report(&Failure::Config(format!("cannot configure {n} threads: {e}")), None);
        }
    }
    let start = Instant::now();
    let mut artifacts = match Artifacts::create(&job.output_dir) {
        Ok(a) => a,
        Err(e) => return report(&e.into(), None),
    };
    if let Err(f) = experiments::run(&job.model, &job.command, job.seed, &mut artifacts) {
        return report(&f, Some(&job.output_dir));
    }
    let inputs = json!({
        "experiment": job.command.name(),
        "model": job.model,
        "parameters": job.command.parameters(),
        "seed": job.seed,
        "threads": job.threads,
        "output_dir": job.output_dir,
    });
    if let Err(e) = artifacts.manifest(inputs, start.elapsed().as_secs_f64()) {
        return report(&e.into(), Some(&job.output_dir));
    }
    println!("{} finished; artifacts in {}", job.command.name(), job.output_dir.display());
    ExitCode::SUCCESS
}
