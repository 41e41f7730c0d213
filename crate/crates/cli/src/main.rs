use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crreflect_cli::analysis::Registry;
use crreflect_cli::manifest::Manifest;
use crreflect_cli::{json, run, CliError, Overrides, VERSION};
use crreflect_core::expr::{parse_expression, print_series};
use crreflect_core::VariableContext;

#[derive(Parser)]
#[command(name = "crreflect", about = "Exact reflection computations for formal CR maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the analyses listed in a JSON manifest.
    Analyze {
        manifest: PathBuf,
        /// Truncation order, overriding the manifest.
        #[arg(long)]
        order: Option<i32>,
        /// Seed for generic-point sampling (default 0).
        #[arg(long)]
        seed: Option<u64>,
        /// Report path; defaults to the manifest path with extension `report.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse an expression over the source and target alphabets and print it back.
    ParseCheck {
        expr: String,
        #[arg(long, default_value_t = 8)]
        order: i32,
        /// Number of z variables in the alphabet.
        #[arg(long, default_value_t = 2)]
        m: usize,
        /// Number of w variables in the alphabet.
        #[arg(long, default_value_t = 2)]
        d: usize,
    },
    /// List the analyses and print the version.
    Version,
}

fn analyze(path: &PathBuf, overrides: Overrides, out: Option<&PathBuf>) -> Result<bool, CliError> {
    let manifest = Manifest::from_json(&std::fs::read_to_string(path)?)?;
    let report = run(&manifest, overrides, &Registry::default())?;
    let out = out.cloned().unwrap_or_else(|| path.with_extension("report.json"));
    std::fs::write(&out, report.to_json())?;
    for line in &report.lines {
        println!("{line}");
    }
    println!("report: {}", out.display());
    Ok(!report.errored)
}

fn parse_check(expr: &str, order: i32, m: usize, d: usize) -> Result<(), CliError> {
    use crreflect_core::manifold::VarNames;
    let mut names = VarNames::source().ambient(m, d);
    names.extend(VarNames::target().ambient(m, d));
    let ctx = VariableContext::new(&names)?;
    let s = parse_expression(expr, &ctx, order).map_err(|e| CliError::Parse {
        what: "expression".into(),
        text: expr.into(),
        msg: e.to_string(),
    })?;
    println!("{}", print_series(&s));
    println!("{}", serde_json::to_string(&json::series(&s))?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analyze { manifest, order, seed, out } => {
            analyze(manifest, Overrides { order: *order, seed: *seed }, out.as_ref())
        }
        Command::ParseCheck { expr, order, m, d } => parse_check(expr, *order, *m, *d).map(|_| true),
        Command::Version => {
            println!("crreflect {VERSION}");
            for a in Registry::default().iter() {
                println!("  {:<22} {}", a.name(), a.describe());
            }
            Ok(true)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
