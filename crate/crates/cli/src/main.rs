//! `priordepth`: synthetic data, prior extraction, training, evaluation,
//! inference and timing for the prior-guided depth network.

mod bench;
mod config;
mod densify;
mod eval;
mod exit;
mod extract;
mod infer;
mod synth;
mod train;
mod viz;

use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use crate::train::ConfigArgs;

#[derive(Debug, Parser)]
#[command(
    name = "priordepth",
    version,
    about = "Monocular depth estimation guided by sparse depth priors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Synth(synth::SynthArgs),
    /// Build per-frame priors by matching consecutive frames.
    ExtractPriors(extract::ExtractArgs),
    /// Dump the dense prior maps of one prior file.
    Densify(densify::DensifyArgs),
    /// Train a network.
    Train(train::TrainArgs),
    /// Evaluate a checkpoint and emit the metrics CSV.
    Eval(eval::EvalArgs),
    /// Predict depth for one image.
    Infer(infer::InferArgs),
    /// Time the forward pass.
    Bench(bench::BenchArgs),
    /// Print the resolved run configuration.
    Config(ConfigArgs),
}

pub(crate) fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    let (w, h) = (parse(w)?, parse(h)?);
    if w == 0 || h == 0 {
        return Err("image size must be positive".into());
    }
    Ok((w, h))
}

pub(crate) fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected MIN,MAX, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    let (a, b) = (parse(a)?, parse(b)?);
    if !(a > 0.0 && a <= b) {
        return Err(format!("need 0 < MIN <= MAX, got {a},{b}"));
    }
    Ok((a, b))
}

/// One depth cap in meters; `inf` for the full range.
pub(crate) fn parse_cap(s: &str) -> Result<f64, String> {
    match s.trim() {
        "inf" | "∞" => Ok(f64::INFINITY),
        v => match v.parse::<f64>() {
            Ok(c) if c > 0.0 => Ok(c),
            _ => Err(format!("invalid cap {v:?}")),
        },
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth::run(a),
        Command::ExtractPriors(a) => extract::run(a),
        Command::Densify(a) => densify::run(a),
        Command::Train(a) => train::run(a),
        Command::Eval(a) => eval::run(a),
        Command::Infer(a) => infer::run(a),
        Command::Bench(a) => bench::run(a),
        Command::Config(a) => {
            print!("{}", a.resolve(toml::Table::new())?.to_toml()?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE } else { 0 });
        }
    };
    if matches!(cli.command, Command::Bench(_)) && std::env::var_os("RAYON_NUM_THREADS").is_none() {
        std::env::set_var("RAYON_NUM_THREADS", "1");
    }
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::code_for(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_parsers() {
        assert_eq!(parse_size("64x48"), Ok((64, 48)));
        assert!(parse_size("64").is_err());
        assert!(parse_size("0x48").is_err());
        assert_eq!(parse_range("0.5,1.5"), Ok((0.5, 1.5)));
        assert!(parse_range("2,1").is_err());
        assert_eq!(parse_cap("inf"), Ok(f64::INFINITY));
        assert_eq!(parse_cap("5"), Ok(5.0));
        assert!(parse_cap("-1").is_err());
        let cli = Cli::try_parse_from([
            "priordepth",
            "eval",
            "--checkpoint",
            "c",
            "--data",
            "d",
            "--caps",
            "inf,5,1",
        ])
        .unwrap();
        match cli.command {
            Command::Eval(a) => assert_eq!(a.caps, vec![f64::INFINITY, 5.0, 1.0]),
            _ => unreachable!(),
        }
    }

    #[test]
    fn command_line_is_well_formed() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
