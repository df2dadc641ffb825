//! Command-line front end for `volfuse`.

pub mod args;
mod commands;
pub mod manifest;
pub mod output;
pub mod params;

use anyhow::Result;
use clap::Parser;

use crate::args::{Cli, Command};

pub fn run() -> Result<()> {
    run_with(Cli::parse())
}

pub fn run_with(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Fuse(a) => commands::fuse(a),
        Command::Optimize(a) => commands::optimize(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Reproduce(a) => commands::reproduce(a),
    }
}
