//! Command line front end: instrument, run, report, fuzz.

mod commands;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use std::path::PathBuf;

/// Coverage instrumentation and analysis for smali programs.
#[derive(Parser)]
#[command(name = "acv", version, disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Insert coverage probes into a smali source tree.
    Instrument {
        /// Directory containing .smali sources.
        #[arg(long = "in", value_name = "DIR")]
        input: PathBuf,
        /// Output directory for the instrumented tree and probe map.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Probe granularity: instruction, method or class.
        #[arg(long, default_value = "instruction")]
        granularity: String,
    },
    /// Execute a program and write its runtime coverage report.
    Run {
        /// Directory containing the (instrumented) .smali sources.
        #[arg(long, value_name = "DIR")]
        program: PathBuf,
        /// Script of entry-point calls to execute.
        #[arg(long, value_name = "FILE", conflicts_with = "entry")]
        script: Option<PathBuf>,
        /// Single entry point, as Lpkg/Class;->name(desc).
        #[arg(long, value_name = "SPEC")]
        entry: Option<String>,
        /// Integer arguments for --entry.
        #[arg(value_name = "ARG", allow_negative_numbers = true)]
        args: Vec<i64>,
        /// Path for the binary runtime report.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Path for the crash log (JSON lines). Omit to skip.
        #[arg(long, value_name = "FILE")]
        crashes: Option<PathBuf>,
        /// Probe map path; defaults to <program>/acv.probemap.json.
        #[arg(long = "probe-map", value_name = "FILE")]
        probe_map: Option<PathBuf>,
        #[arg(long, default_value_t = 1_000_000)]
        step_limit: u64,
        #[arg(long, default_value_t = 100_000)]
        heap_limit: usize,
    },
    /// Merge runtime reports and emit coverage output.
    Report {
        /// Probe map the runtime reports were collected against.
        #[arg(long = "probe-map", value_name = "FILE")]
        probe_map: PathBuf,
        /// Original program sources; required for html output.
        #[arg(long, value_name = "DIR")]
        program: Option<PathBuf>,
        /// Output directory.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Comma separated output formats: xml, html.
        #[arg(long, default_value = "xml")]
        format: String,
        /// Runtime report files to merge.
        #[arg(value_name = "ACVR", required = true)]
        reports: Vec<PathBuf>,
    },
    /// Run a coverage-guided search campaign over a generated corpus.
    Fuzz {
        /// Output directory for summary.json and summary.csv.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Number of generated programs.
        #[arg(long, default_value_t = 20)]
        programs: usize,
        /// Corpus generation seed.
        #[arg(long, default_value_t = 1)]
        corpus_seed: u64,
        /// Comma separated guidance modes: instruction, method, class, none.
        #[arg(long, default_value = "instruction,method,class,none")]
        modes: String,
        /// First search seed.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Number of search seeds per (program, mode) cell.
        #[arg(long, default_value_t = 1)]
        trials: u64,
        /// Suite evaluations per cell.
        #[arg(long, default_value_t = 60)]
        budget: usize,
        #[arg(long, default_value_t = 1_000_000)]
        step_limit: u64,
        #[arg(long, default_value_t = 100_000)]
        heap_limit: usize,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match cli.command {
        Command::Instrument { input, out, granularity } => {
            commands::instrument(&input, &out, &granularity)
        }
        Command::Run {
            program,
            script,
            entry,
            args,
            out,
            crashes,
            probe_map,
            step_limit,
            heap_limit,
        } => commands::run(&commands::RunArgs {
            program,
            script,
            entry,
            args,
            out,
            crashes,
            probe_map,
            step_limit,
            heap_limit,
        }),
        Command::Report { probe_map, program, out, format, reports } => {
            commands::report(&probe_map, program.as_deref(), &out, &format, &reports)
        }
        Command::Fuzz {
            out,
            programs,
            corpus_seed,
            modes,
            seed,
            trials,
            budget,
            step_limit,
            heap_limit,
        } => commands::fuzz(&commands::FuzzArgs {
            out,
            programs,
            corpus_seed,
            modes,
            seed,
            trials,
            budget,
            step_limit,
            heap_limit,
        }),
    };
    if let Err(e) = result {
        eprintln!("acv: {}", e.message);
        std::process::exit(e.code);
    }
}
