//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use skewlift::set::DEFAULT_CAP;

use crate::campaign::{run_campaign, run_one, InstanceSpec};
use crate::checks::{parse_checks, verify_instance, Check, VerifyOptions};
use crate::format::{Caps, InstanceFile};
use crate::report::{parse_records, summarize, CampaignReport, InstanceReport};

/// Environment variable overriding the cap on each factor space.
pub const CAP_ENV: &str = "SKEWLIFT_GROUND_CAP";

pub const EXIT_PASS: u8 = 0;
pub const EXIT_FAIL: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "skewlift", version, about = "Exact checks of liftings on finite skew products")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded instance as JSON.
    Gen {
        #[command(flatten)]
        spec: SpecArgs,
        /// Output file; standard output when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run checks on an instance file, or on a generated instance.
    Verify {
        /// Instance file. Without it the instance is generated from the spec flags.
        instance: Option<PathBuf>,
        #[command(flatten)]
        spec: SpecArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Generate and verify a range of seeds.
    Campaign {
        #[command(flatten)]
        spec: SpecArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Number of seeds, starting at --seed.
        #[arg(long, default_value_t = 50)]
        count: u64,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Use --size-x and --size-y for every seed instead of cycling below them.
        #[arg(long)]
        fixed_sizes: bool,
    },
    /// Summarize a saved report; exits 1 if it records a failure.
    Report { file: PathBuf },
}

#[derive(Debug, Args)]
struct SpecArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    size_x: usize,
    #[arg(long, default_value_t = 2)]
    size_y: usize,
    #[arg(long, default_value_t = 0.3)]
    null_rate: f64,
    #[arg(long, default_value_t = 0.3)]
    coarse_b_rate: f64,
    /// Pad the generator list with redundant unions up to this length.
    #[arg(long)]
    gens_len: Option<usize>,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Comma-separated checks, or `all`.
    #[arg(long, default_value = "all")]
    checks: String,
    /// Include construction traces in the report.
    #[arg(long)]
    trace: bool,
    /// Include per-check timings, which makes reports differ between runs.
    #[arg(long)]
    timing: bool,
    /// Report file; standard output when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

/// A usage error or a run that could not produce a report.
#[derive(Debug)]
struct Usage(String);

impl<E: std::fmt::Display> From<E> for Usage {
    fn from(e: E) -> Self {
        Usage(e.to_string())
    }
}

fn factor_cap() -> Result<usize, Usage> {
    match std::env::var(CAP_ENV) {
        Err(_) => Ok(DEFAULT_CAP),
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Usage(format!("{CAP_ENV}={v:?} is not a point count"))),
    }
}

fn caps() -> Result<Caps, Usage> {
    Ok(Caps {
        factor: factor_cap()?,
        ..Caps::default()
    })
}

impl SpecArgs {
    fn spec(&self) -> Result<InstanceSpec, Usage> {
        Ok(InstanceSpec {
            size_x: self.size_x,
            size_y: self.size_y,
            null_rate: self.null_rate,
            coarse_b_rate: self.coarse_b_rate,
            seed: self.seed,
            gens_len: self.gens_len,
            cap: factor_cap()?,
        })
    }
}

fn emit(output: &Option<PathBuf>, text: &str, out: &mut dyn Write) -> Result<(), Usage> {
    match output {
        Some(path) => fs::write(path, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn verdict(report: &CampaignReport) -> u8 {
    if report.passed() {
        EXIT_PASS
    } else {
        EXIT_FAIL
    }
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<u8, Usage> {
    match cli.command {
        Command::Gen { spec, output } => {
            let spec = spec.spec()?;
            let inst = spec.generate()?;
            let file = InstanceFile::from_instance(&inst, Some((&spec.params()).into()));
            emit(&output, &file.to_json(), out)?;
            Ok(EXIT_PASS)
        }
        Command::Verify { instance, spec, run } => {
            let checks: Vec<Check> = parse_checks(&run.checks).map_err(Usage)?;
            let opts = VerifyOptions {
                trace: run.trace,
                ..VerifyOptions::default()
            };
            let report = match instance {
                None => run_one(&spec.spec()?, &checks, &opts)?,
                Some(path) => {
                    let text = fs::read_to_string(&path)?;
                    let file = InstanceFile::parse(&text)?;
                    let inst = file.to_instance(caps()?)?;
                    let seed = file.spec.as_ref().map(|s| s.seed);
                    InstanceReport {
                        seed,
                        header: vec![("source".into(), path.display().to_string())],
                        outcomes: verify_instance(&inst, seed.unwrap_or(0), &checks, &opts),
                    }
                }
            };
            let report = CampaignReport {
                instances: vec![report],
            };
            emit(&run.output, &report.render(run.timing), out)?;
            Ok(verdict(&report))
        }
        Command::Campaign {
            spec,
            run,
            count,
            jobs,
            fixed_sizes,
        } => {
            if count == 0 {
                return Err(Usage("--count must be at least 1".into()));
            }
            let checks = parse_checks(&run.checks).map_err(Usage)?;
            let opts = VerifyOptions {
                trace: run.trace,
                ..VerifyOptions::default()
            };
            let base = spec.spec()?;
            base.params().validate()?;
            let report = run_campaign(&base, count, fixed_sizes, &checks, &opts, jobs)?;
            emit(&run.output, &report.render(run.timing), out)?;
            Ok(verdict(&report))
        }
        Command::Report { file } => {
            let text = fs::read_to_string(&file)?;
            let records = parse_records(&text)?;
            let (summary, ok) = summarize(&records);
            let text: String = summary.iter().map(|r| r.to_string()).collect();
            out.write_all(text.as_bytes())?;
            Ok(if ok { EXIT_PASS } else { EXIT_FAIL })
        }
    }
}

/// Runs the command line `args` (program name first), writing normal
/// output to `out` and diagnostics to `err`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = err.write_all(text.as_bytes());
                EXIT_USAGE
            } else {
                let _ = out.write_all(text.as_bytes());
                EXIT_PASS
            };
        }
    };
    match execute(cli, out) {
        Ok(code) => code,
        Err(Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
    }
}
