mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// A one-line diagnostic and the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<concept_geometry::Error> for Failure {
    fn from(e: concept_geometry::Error) -> Self {
        Self::input(e.to_string())
    }
}

fn run(cli: &Cli) -> Result<bool, Failure> {
    match &cli.command {
        Command::Estimate(a) => commands::estimate(a).map(|_| true),
        Command::Heatmap(a) => commands::heatmap_cmd(a).map(|_| true),
        Command::Probe(a) => commands::probe(a).map(|_| true),
        Command::Intervene(a) => commands::intervene_cmd(a).map(|_| true),
        Command::SynthVerify(a) => commands::synth_verify(a),
        Command::SynthExport(a) => commands::synth_export(a).map(|_| true),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
