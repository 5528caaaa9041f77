//! Subcommand implementations. Exit codes: 0 success, 1 input error,
//! 2 verification or instrumentation failure, 3 resource limit.

use acv_coverage::{
    check_conservation, compute, emit_html, emit_xml, merge, read_runtime, write_runtime,
    CoverageReport,
};
use acv_dvm::{collect_runtime, parse_script, run_script, ExecError, Interpreter, Limits};
use acv_harness::{campaign, generate_corpus, summary_to_csv, summary_to_json, CampaignConfig,
    Mode, SearchError};
use acv_instrument::{inflation, instrument as instrument_program, Granularity, ProbeMap};
use acv_smali::parse::parse_sources;
use acv_smali::print::print_program;
use acv_smali::verify::verify;
use acv_smali::SmaliProgram;
use std::fs;
use std::path::{Path, PathBuf};

pub struct CliError {
    pub code: i32,
    pub message: String,
}

fn input_err(message: impl Into<String>) -> CliError {
    CliError { code: 1, message: message.into() }
}

fn tool_err(message: impl Into<String>) -> CliError {
    CliError { code: 2, message: message.into() }
}

fn limit_err(message: impl Into<String>) -> CliError {
    CliError { code: 3, message: message.into() }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| input_err(format!("{}: {e}", path.display())))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| input_err(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, data: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| input_err(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, data).map_err(|e| input_err(format!("{}: {e}", path.display())))
}

fn collect_smali(dir: &Path, root: &Path, files: &mut Vec<(String, String)>) -> Result<(), CliError> {
    let entries =
        fs::read_dir(dir).map_err(|e| input_err(format!("{}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    paths.sort();
    for path in paths {
        if path.is_dir() {
            collect_smali(&path, root, files)?;
        } else if path.extension().is_some_and(|e| e == "smali") {
            let rel = path.strip_prefix(root).unwrap_or(&path);
            files.push((rel.display().to_string(), read_file(&path)?));
        }
    }
    Ok(())
}

/// Loads every .smali file under `dir` into one parsed program.
fn load_program(dir: &Path) -> Result<SmaliProgram, CliError> {
    let mut files = Vec::new();
    collect_smali(dir, dir, &mut files)?;
    if files.is_empty() {
        return Err(input_err(format!("no .smali files under {}", dir.display())));
    }
    let outcome = parse_sources(&files);
    for d in &outcome.diagnostics {
        eprintln!("{d}");
    }
    outcome
        .program
        .ok_or_else(|| input_err(format!("parse failed for {}", dir.display())))
}

fn load_probe_map(path: &Path) -> Result<ProbeMap, CliError> {
    acv_instrument::from_json(&read_file(path)?)
        .map_err(|e| input_err(format!("{}: {e}", path.display())))
}

pub fn instrument(input: &Path, out: &Path, granularity: &str) -> Result<(), CliError> {
    let granularity: Granularity = granularity.parse().map_err(input_err)?;
    let program = load_program(input)?;
    let check = verify(&program);
    for w in &check.warnings {
        eprintln!("warning: {w}");
    }
    if !check.is_ok() {
        for v in &check.violations {
            eprintln!("{v}");
        }
        return Err(tool_err(format!(
            "input program failed verification with {} violation(s)",
            check.violations.len()
        )));
    }
    let result = instrument_program(&program, granularity)
        .map_err(|e| tool_err(e.to_string()))?;
    let recheck = verify(&result.program);
    if !recheck.is_ok() {
        for v in &recheck.violations {
            eprintln!("{v}");
        }
        return Err(tool_err("instrumented program failed verification".to_string()));
    }
    for (rel, text) in print_program(&result.program) {
        write_file(&out.join(rel), text.as_bytes())?;
    }
    write_file(
        &out.join("acv.probemap.json"),
        acv_instrument::to_json(&result.probe_map).as_bytes(),
    )?;
    let stats = inflation(&program, &result.program);
    let probes: usize = result.probe_map.classes.iter().map(|c| c.probe_count()).sum();
    println!("granularity: {granularity}");
    println!("classes: {}", result.probe_map.classes.len());
    println!("probes: {probes}");
    println!(
        "instructions: {} -> {} (x{:.2})",
        stats.original_instructions, stats.instrumented_instructions, stats.ratio
    );
    Ok(())
}

pub struct RunArgs {
    pub program: PathBuf,
    pub script: Option<PathBuf>,
    pub entry: Option<String>,
    pub args: Vec<i64>,
    pub out: PathBuf,
    pub crashes: Option<PathBuf>,
    pub probe_map: Option<PathBuf>,
    pub step_limit: u64,
    pub heap_limit: usize,
}

fn exec_error(e: ExecError) -> CliError {
    match e {
        ExecError::StepLimitExceeded | ExecError::HeapLimitExceeded => limit_err(e.to_string()),
        ExecError::EntryNotFound(_) => input_err(e.to_string()),
        ExecError::VerifyFailed(violations) => {
            for v in &violations {
                eprintln!("{v}");
            }
            tool_err("program failed verification".to_string())
        }
        ExecError::Fault(_) => tool_err(e.to_string()),
    }
}

pub fn run(args: &RunArgs) -> Result<(), CliError> {
    let program = load_program(&args.program)?;
    let map_path = args
        .probe_map
        .clone()
        .unwrap_or_else(|| args.program.join("acv.probemap.json"));
    let probe_map = load_probe_map(&map_path)?;
    let script_text = match (&args.script, &args.entry) {
        (Some(path), None) => read_file(path)?,
        (None, Some(spec)) => {
            let (class, rest) = spec
                .split_once("->")
                .ok_or_else(|| input_err(format!("bad entry spec `{spec}`")))?;
            let arg_text: Vec<String> = args.args.iter().map(|a| a.to_string()).collect();
            format!("call {class} {rest} {}\n", arg_text.join(" "))
        }
        _ => return Err(input_err("exactly one of --script or --entry is required")),
    };
    let lines = parse_script(&script_text).map_err(|e| input_err(e.to_string()))?;
    let limits = Limits { step_limit: args.step_limit, heap_limit: args.heap_limit };
    let mut interp = Interpreter::new(&program).map_err(exec_error)?;
    let run = run_script(&mut interp, &lines, limits).map_err(exec_error)?;
    let runtime = collect_runtime(&interp, &probe_map).map_err(|e| input_err(e.to_string()))?;
    write_file(&args.out, &write_runtime(&runtime))?;
    if let Some(path) = &args.crashes {
        let mut text = String::new();
        for record in interp.crashes() {
            text.push_str(&serde_json::to_string(record).expect("crash record serializes"));
            text.push('\n');
        }
        write_file(path, text.as_bytes())?;
    }
    let crash_count = interp.crashes().len();
    println!(
        "calls: {}, returns: {}, crashes: {crash_count}",
        run.outcomes.len(),
        run.outcomes.len() - crash_count
    );
    println!("report: {}", args.out.display());
    Ok(())
}

fn print_totals(report: &CoverageReport) {
    for (label, counter) in [
        ("instruction", report.instruction_counter),
        ("method", report.method_counter),
        ("class", report.class_counter),
    ] {
        println!(
            "{label} coverage: {:.1}% ({}/{})",
            counter.percent(),
            counter.covered,
            counter.total()
        );
    }
}

pub fn report(
    probe_map: &Path,
    program: Option<&Path>,
    out: &Path,
    format: &str,
    reports: &[PathBuf],
) -> Result<(), CliError> {
    let formats: Vec<&str> = format.split(',').map(str::trim).collect();
    for f in &formats {
        if !matches!(*f, "xml" | "html") {
            return Err(input_err(format!("unknown format `{f}`")));
        }
    }
    let probe_map = load_probe_map(probe_map)?;
    if reports.is_empty() {
        return Err(input_err("no runtime report files given"));
    }
    let mut runtimes = Vec::new();
    for path in reports {
        runtimes.push(
            read_runtime(&read_bytes(path)?)
                .map_err(|e| input_err(format!("{}: {e}", path.display())))?,
        );
    }
    let merged = merge(&runtimes).map_err(|e| input_err(e.to_string()))?;
    let coverage = compute(&probe_map, &merged).map_err(|e| input_err(e.to_string()))?;
    check_conservation(&coverage).map_err(tool_err)?;
    if formats.contains(&"xml") {
        write_file(&out.join("coverage.xml"), emit_xml(&coverage).as_bytes())?;
    }
    if formats.contains(&"html") {
        let dir = program
            .ok_or_else(|| input_err("html output requires --program"))?;
        let source = load_program(dir)?;
        for (name, page) in emit_html(&coverage, &source) {
            write_file(&out.join("html").join(name), page.as_bytes())?;
        }
    }
    println!("granularity: {}", coverage.granularity);
    print_totals(&coverage);
    Ok(())
}

pub struct FuzzArgs {
    pub out: PathBuf,
    pub programs: usize,
    pub corpus_seed: u64,
    pub modes: String,
    pub seed: u64,
    pub trials: u64,
    pub budget: usize,
    pub step_limit: u64,
    pub heap_limit: usize,
}

pub fn fuzz(args: &FuzzArgs) -> Result<(), CliError> {
    let mut modes = Vec::new();
    for part in args.modes.split(',') {
        modes.push(part.trim().parse::<Mode>().map_err(input_err)?);
    }
    if args.programs == 0 {
        return Err(input_err("--programs must be positive"));
    }
    if args.trials == 0 {
        return Err(input_err("--trials must be positive"));
    }
    let corpus = generate_corpus(args.corpus_seed, args.programs);
    let config = CampaignConfig {
        modes,
        seeds: (args.seed..args.seed + args.trials).collect(),
        budget: args.budget,
        limits: Limits { step_limit: args.step_limit, heap_limit: args.heap_limit },
    };
    let summary = campaign(&corpus, &config).map_err(|e| match e {
        SearchError::BudgetTooSmall { .. } => input_err(e.to_string()),
        other => tool_err(other.to_string()),
    })?;
    write_file(&args.out.join("summary.json"), summary_to_json(&summary).as_bytes())?;
    write_file(&args.out.join("summary.csv"), summary_to_csv(&summary).as_bytes())?;
    println!("mode          crashes  programs  types");
    for m in &summary.per_mode {
        println!(
            "{:<12}  {:>7}  {:>8}  {:>5}",
            m.mode.to_string(),
            m.unique_crashes,
            m.faulty_programs,
            m.crash_types
        );
    }
    Ok(())
}
