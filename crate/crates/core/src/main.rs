use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use injury_lab::campaign::campaign;
use injury_lab::scenario::{load_scenario, Construction, Scenario};
use injury_lab::trace::RunTrace;
use injury_lab::verify::{Options, Report};
use injury_lab::CnfOrdinal;

/// Exit status: 0 all checks pass, 1 a violation was found, 2 configuration error.
#[derive(Parser)]
#[command(name = "injury-lab", version, about = "Run and verify priority constructions")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario, write its trace and verifier report.
    Run {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        construction: Option<String>,
        #[arg(long)]
        alpha: Option<String>,
        #[arg(long)]
        stages: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        settle: u64,
    },
    /// Run a scenario for a range of seeds and summarize.
    Campaign {
        #[arg(long)]
        scenario: PathBuf,
        /// Half-open range `a..b`.
        #[arg(long, default_value = "0..100")]
        seeds: String,
        #[arg(long)]
        stages: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        settle: u64,
    },
    /// Verify a stored trace.
    VerifyTrace {
        #[arg(long)]
        trace: PathBuf,
        /// Scenario whose `verify` toggles apply.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        settle: u64,
    },
    /// Ordinal utilities.
    Cnf {
        #[command(subcommand)]
        cmd: CnfCmd,
    },
}

#[derive(Subcommand)]
enum CnfCmd {
    /// Print the Cantor normal form of an expression.
    Eval { expr: String },
}

enum Failure {
    Violation,
    Config(String),
}

fn config(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| config(format!("{}: {e}", path.display())))
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| config(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load(path: Option<&Path>) -> Result<Scenario, Failure> {
    match path {
        Some(p) => load_scenario(&read(p)?).map_err(|e| config(format!("{}: {e}", p.display()))),
        None => Ok(Scenario::default()),
    }
}

fn verdict(report: &Report) -> Result<(), Failure> {
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Violation)
    }
}

fn parse_range(s: &str) -> Result<std::ops::Range<u64>, Failure> {
    let (a, b) = s.split_once("..").ok_or_else(|| config(format!("bad seed range `{s}`")))?;
    let a: u64 = a.parse().map_err(|_| config(format!("bad seed range `{s}`")))?;
    let b: u64 = b.parse().map_err(|_| config(format!("bad seed range `{s}`")))?;
    if a >= b {
        return Err(config("seed range is empty"));
    }
    Ok(a..b)
}

fn run(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Run { scenario, construction, alpha, stages, seed, trace, report, settle } => {
            let mut sc = load(scenario.as_deref())?;
            if let Some(c) = construction {
                sc.construction = c.parse::<Construction>().map_err(config)?;
            }
            if let Some(a) = alpha {
                sc.alpha = Some(a.parse::<CnfOrdinal>().map_err(config)?);
            }
            if let Some(n) = stages {
                sc.stages = n;
            }
            let seed = seed.unwrap_or(sc.seed);
            let t = sc.run(seed).map_err(config)?;
            if let Some(p) = &trace {
                write_or_print(Some(p), &t.to_string())?;
            }
            let rep = sc.verify(&t, &Options { settle }).map_err(config)?;
            write_or_print(report.as_deref(), &rep.to_string())?;
            verdict(&rep)
        }
        Cmd::Campaign { scenario, seeds, stages, out, settle } => {
            let mut sc = load(Some(&scenario))?;
            if let Some(n) = stages {
                sc.stages = n;
            }
            let range = parse_range(&seeds)?;
            let sum = campaign(&sc, range, &Options { settle });
            write_or_print(out.as_deref(), &sum.to_string())?;
            if sum.errors().count() == sum.runs.len() {
                return Err(config("every run failed to configure"));
            }
            if sum.passed() {
                Ok(())
            } else {
                Err(Failure::Violation)
            }
        }
        Cmd::VerifyTrace { trace, scenario, report, settle } => {
            let t: RunTrace = read(&trace)?.parse().map_err(config)?;
            let sc = load(scenario.as_deref())?;
            let rep = sc.verify(&t, &Options { settle }).map_err(config)?;
            write_or_print(report.as_deref(), &rep.to_string())?;
            verdict(&rep)
        }
        Cmd::Cnf { cmd: CnfCmd::Eval { expr } } => {
            let v: CnfOrdinal = expr.parse().map_err(config)?;
            println!("{v}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Violation) => ExitCode::from(1),
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
