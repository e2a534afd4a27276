use bjj::io::{commands, config};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "bjj",
    version,
    about = "Bosonic Josephson junction simulation, analysis and fitting toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate or evaluate a model and write trajectory CSVs
    Simulate(CommonArgs),
    /// Sample the analytic model with seeded Gaussian noise
    Synth(CommonArgs),
    /// Fit time series to the damped analytic model, write a JSON report
    Fit(CommonArgs),
    /// Convert between pendulum and TMBH parameterizations
    Convert(CommonArgs),
    /// Classify the regime and check rigid-pendulum validity
    Validate(CommonArgs),
    /// Evaluate analytic and numeric solutions side by side
    Compare(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON configuration file
    #[arg(long)]
    config: PathBuf,
    /// Config overrides as `--<json.path> <value>` pairs,
    /// e.g. `--time.n-points 500`
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "OVERRIDES")]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, args) = match &cli.command {
        Command::Simulate(a) => (config::Mode::Simulate, a),
        Command::Synth(a) => (config::Mode::Synth, a),
        Command::Fit(a) => (config::Mode::Fit, a),
        Command::Convert(a) => (config::Mode::Convert, a),
        Command::Validate(a) => (config::Mode::Validate, a),
        Command::Compare(a) => (config::Mode::Compare, a),
    };
    let overrides = match parse_overrides(&args.overrides) {
        Ok(o) => o,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let cfg = match config::load_config(&args.config, &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match commands::run(mode, &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    let mut it = raw.iter();
    while let Some(key) = it.next() {
        let key = key
            .strip_prefix("--")
            .ok_or_else(|| format!("override key must start with `--`, got `{key}`"))?;
        let value = it
            .next()
            .ok_or_else(|| format!("override `--{key}` is missing a value"))?;
        out.push((key.to_string(), value.clone()));
    }
    Ok(out)
}
