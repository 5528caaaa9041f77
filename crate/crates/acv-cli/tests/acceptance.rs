//! End-to-end acceptance checks for the whole toolchain. Each test covers one
//! top-level requirement and prints a single pass line; tolerances are pinned
//! in the assertions.

use acv_coverage::{check_conservation, compute, emit_xml, read_runtime, write_runtime,
    RuntimeReport};
use acv_dvm::{collect_runtime, expected_runtime, parse_script, run_script, CallOutcome,
    CrashRecord, Interpreter, Limits, Value};
use acv_harness::{campaign, generate_corpus, CampaignConfig, FaultCorpusProgram, Mode};
use acv_instrument::{inflation, instrument, Granularity, STORAGE_CLASS};
use acv_smali::model::{BodyItem, MethodSig};
use acv_smali::parse::parse_sources;
use acv_smali::verify::verify;
use acv_smali::SmaliProgram;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::process::Command;

const GRANULARITIES: [Granularity; 3] =
    [Granularity::Instruction, Granularity::Method, Granularity::Class];

fn limits() -> Limits {
    Limits { step_limit: 200_000, heap_limit: 50_000 }
}

fn fixture(rel: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(rel)
        .display()
        .to_string()
}

fn load_fixture_app() -> SmaliProgram {
    let files = vec![
        (
            "com/demo/Activity.smali".to_string(),
            std::fs::read_to_string(fixture("app/com/demo/Activity.smali")).unwrap(),
        ),
        (
            "com/demo/Util.smali".to_string(),
            std::fs::read_to_string(fixture("app/com/demo/Util.smali")).unwrap(),
        ),
    ];
    parse_sources(&files).program.expect("fixture app parses")
}

type Call = (String, MethodSig, [i32; 3]);

/// Deterministic call scripts for a corpus program: a few random suites over
/// its entry points plus one suite of every planted-fault witness.
fn scripts_for(p: &FaultCorpusProgram, salt: u64, random_suites: usize) -> Vec<Vec<Call>> {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed ^ salt);
    let entries = &p.program.entry_points;
    let mut scripts = Vec::new();
    for _ in 0..random_suites {
        let len = rng.gen_range(2..=5);
        let mut calls = Vec::new();
        for _ in 0..len {
            let (class, sig) = entries[rng.gen_range(0..entries.len())].clone();
            let args = [
                rng.gen_range(-4..=12),
                rng.gen_range(-4..=12),
                rng.gen_range(-4..=12),
            ];
            calls.push((class, sig, args));
        }
        scripts.push(calls);
    }
    scripts.push(
        p.faults
            .iter()
            .map(|f| (f.class.clone(), f.entry.clone(), f.witness))
            .collect(),
    );
    scripts
}

/// Everything observable from one suite run.
#[derive(Debug, PartialEq)]
struct Observed {
    outcomes: Vec<CallOutcome>,
    outputs: Vec<Value>,
    crashes: Vec<CrashRecord>,
}

fn run_calls(base: &Interpreter, calls: &[Call]) -> Observed {
    let mut interp = base.fork();
    let mut outcomes = Vec::new();
    for (class, sig, args) in calls {
        let vals: Vec<Value> = args.iter().map(|&a| Value::Int(a)).collect();
        outcomes.push(interp.call(class, sig, &vals, limits()).expect("call runs"));
    }
    Observed {
        outcomes,
        outputs: interp.trace().outputs.clone(),
        crashes: interp.crashes().to_vec(),
    }
}

#[test]
fn criterion_1_probe_insertion_structure() {
    let program = load_fixture_app();
    let out = instrument(&program, Granularity::Instruction).unwrap();

    let storage = out.program.find_class(STORAGE_CLASS).expect("storage class present");
    assert_eq!(storage.fields.len(), 2);
    assert!(storage.fields.iter().all(|f| f.descriptor == "[Z"));
    let clinit = storage
        .find_method(&MethodSig { name: "<clinit>".into(), descriptor: "()V".into() })
        .expect("storage <clinit>");
    let mnems: Vec<&str> = clinit
        .body
        .iter()
        .filter_map(|i| i.as_ins().map(|i| i.op.mnemonic))
        .collect();
    assert_eq!(mnems.iter().filter(|m| **m == "new-array").count(), 2);
    assert_eq!(mnems.iter().filter(|m| **m == "sput-object").count(), 2);
    // storage class sits at its sorted position among the classes
    let names: Vec<&String> = out.program.classes.iter().map(|c| &c.name).collect();
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(names, sorted);

    let activity = out.program.find_class("Lcom/demo/Activity;").unwrap();
    let original = program.find_class("Lcom/demo/Activity;").unwrap();
    let sig = MethodSig { name: "updateElements".into(), descriptor: "()V".into() };
    let method = activity.find_method(&sig).unwrap();
    let before = original.find_method(&sig).unwrap();
    // three scratch registers on top of the original frame
    assert_eq!(method.locals, before.locals + 3);
    let mnems: Vec<&str> = method
        .body
        .iter()
        .filter_map(|i| i.as_ins().map(|i| i.op.mnemonic))
        .collect();
    // prologue copies the shifted `this` parameter back to its original slot
    assert_eq!(mnems[0], "move-object/16");
    // inline entry probe: storage array, true constant, index, store
    assert_eq!(&mnems[1..=4], &["sget-object", "const/16", "const/16", "aput-boolean"]);
    // one trampoline pair per traceable instruction (3 in this method)
    let hops = method
        .body
        .iter()
        .filter(|i| matches!(i, BodyItem::Label(l) if l.starts_with("goto_hack_back_")))
        .count();
    assert_eq!(hops, 3);
    assert_eq!(mnems.iter().filter(|m| **m == "goto/32").count(), 2 * hops);
    // original instruction stream survives in order
    let origins: Vec<u32> = method
        .body
        .iter()
        .filter_map(|i| i.as_ins().and_then(|i| i.origin))
        .collect();
    let mut sorted_origins = origins.clone();
    sorted_origins.sort();
    assert_eq!(origins, sorted_origins);
    assert_eq!(origins.len(), 6);

    // probe vectors: one per traceable instruction plus one per method
    let map = &out.probe_map;
    assert_eq!(map.class("Lcom/demo/Activity;").unwrap().probe_count(), 5 + 4);
    assert_eq!(map.class("Lcom/demo/Util;").unwrap().probe_count(), 3 + 2);

    println!("criterion 1 (probe insertion structure): pass");
}

#[test]
fn criterion_2_behavior_preservation() {
    let corpus = generate_corpus(1001, 500);
    let mut compared = 0usize;
    for p in &corpus {
        let base = Interpreter::new(&p.program).expect("original verifies");
        let scripts = scripts_for(p, 0xb5, 5);
        let instrumented: Vec<Interpreter> = GRANULARITIES
            .iter()
            .map(|&g| {
                Interpreter::new(&instrument(&p.program, g).unwrap().program)
                    .expect("instrumented verifies")
            })
            .collect();
        for calls in &scripts {
            let reference = run_calls(&base, calls);
            for interp in &instrumented {
                let observed = run_calls(interp, calls);
                assert_eq!(observed, reference, "divergence in program seeded {}", p.seed);
                compared += 1;
            }
        }
    }
    assert_eq!(compared, 500 * 6 * 3);
    println!(
        "criterion 2 (behavior preservation, {compared} suite comparisons, zero divergence): pass"
    );
}

#[test]
fn criterion_3_probe_vectors_match_trace_oracle() {
    let corpus = generate_corpus(2002, 150);
    let mut checked = 0usize;
    for (pi, p) in corpus.iter().enumerate() {
        // instruction granularity everywhere, all three on a subset
        let grans: &[Granularity] =
            if pi % 3 == 0 { &GRANULARITIES } else { &[Granularity::Instruction] };
        for &g in grans {
            let out = instrument(&p.program, g).unwrap();
            let base = Interpreter::new(&p.program).unwrap();
            let inst_base = Interpreter::new(&out.program).unwrap();
            for calls in scripts_for(p, 0x0c, 3) {
                let mut original = base.fork();
                let mut instrumented = inst_base.fork();
                for (class, sig, args) in &calls {
                    let vals: Vec<Value> = args.iter().map(|&a| Value::Int(a)).collect();
                    original.call(class, sig, &vals, limits()).unwrap();
                    instrumented.call(class, sig, &vals, limits()).unwrap();
                }
                let collected = collect_runtime(&instrumented, &out.probe_map).unwrap();
                let predicted = expected_runtime(&out.probe_map, original.trace());
                assert_eq!(collected, predicted, "oracle mismatch, seed {}", p.seed);
                checked += 1;
            }
        }
    }
    println!("criterion 3 (probe vectors equal trace-derived oracle, {checked} runs): pass");
}

#[test]
fn criterion_4_verifier_closure() {
    let corpus = generate_corpus(1001, 500);
    let mut clean = 0usize;
    for p in &corpus {
        assert!(verify(&p.program).is_ok());
        for g in GRANULARITIES {
            let out = instrument(&p.program, g).unwrap();
            let check = verify(&out.program);
            assert!(check.is_ok(), "{:?}", check.violations);
            clean += 1;
        }
    }
    assert_eq!(clean, 1500);

    // frames too large to take the probe registers are refused, exit code 2
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_acv"))
        .args([
            "instrument",
            "--in",
            &fixture("bigframe"),
            "--out",
            dir.path().join("out").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    println!("criterion 4 (verifier accepts all 1500 instrumented programs, overflow refused): pass");
}

#[test]
fn criterion_5_method_granularity_is_cheaper() {
    let corpus = generate_corpus(3003, 100);
    let mut ratios = [0.0f64; 2];
    for p in &corpus {
        for (slot, g) in [(0, Granularity::Instruction), (1, Granularity::Method)] {
            let out = instrument(&p.program, g).unwrap();
            ratios[slot] += inflation(&p.program, &out.program).ratio;
        }
    }
    let instruction_mean = ratios[0] / 100.0;
    let method_mean = ratios[1] / 100.0;
    assert!(
        method_mean < instruction_mean,
        "method mean {method_mean:.3} not below instruction mean {instruction_mean:.3}"
    );
    println!(
        "criterion 5 (mean inflation: method x{method_mean:.2} < instruction x{instruction_mean:.2}): pass"
    );
}

#[test]
fn criterion_6_report_formats_are_faithful() {
    // binary report format: bit-exact roundtrip on random reports
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    for _ in 0..1000 {
        let classes = (0..rng.gen_range(0..5))
            .map(|i| {
                let name = format!("Lr/C{i}_{};", rng.gen_range(0..1000));
                let bits = (0..rng.gen_range(0..64)).map(|_| rng.gen()).collect();
                (name, bits)
            })
            .collect();
        let report = RuntimeReport { classes };
        assert_eq!(read_runtime(&write_runtime(&report)).unwrap(), report);
    }

    // XML output matches the frozen, hand-reviewed report byte for byte
    let program = load_fixture_app();
    let out = instrument(&program, Granularity::Instruction).unwrap();
    let mut interp = Interpreter::new(&out.program).unwrap();
    let script = std::fs::read_to_string(fixture("run.script")).unwrap();
    run_script(&mut interp, &parse_script(&script).unwrap(), limits()).unwrap();
    let runtime = collect_runtime(&interp, &out.probe_map).unwrap();
    let coverage = compute(&out.probe_map, &runtime).unwrap();
    let golden = std::fs::read_to_string(fixture("expected/coverage.xml")).unwrap();
    assert_eq!(emit_xml(&coverage), golden);

    // counter conservation holds on arbitrary corpus runs
    for p in generate_corpus(4004, 50) {
        for g in GRANULARITIES {
            let out = instrument(&p.program, g).unwrap();
            let base = Interpreter::new(&out.program).unwrap();
            let mut interp = base.fork();
            for (class, sig, args) in &scripts_for(&p, 0x6c, 1)[0] {
                let vals: Vec<Value> = args.iter().map(|&a| Value::Int(a)).collect();
                interp.call(class, sig, &vals, limits()).unwrap();
            }
            let runtime = collect_runtime(&interp, &out.probe_map).unwrap();
            let coverage = compute(&out.probe_map, &runtime).unwrap();
            check_conservation(&coverage).unwrap();
        }
    }

    println!("criterion 6 (report roundtrip, golden XML, counter conservation): pass");
}

#[test]
fn criterion_7_guided_search_beats_unguided() {
    let started = std::time::Instant::now();
    let corpus = generate_corpus(7007, 50);
    let config = CampaignConfig {
        modes: Mode::ALL.to_vec(),
        seeds: (1..=30).collect(),
        budget: 60,
        limits: limits(),
    };
    let summary = campaign(&corpus, &config).unwrap();

    // per (program, seed) cell: instruction guidance finds at least as many
    // unique crashes as no guidance in >= 60% of cells
    let cell = |mode: Mode, program: usize, seed: u64| {
        summary
            .cells
            .iter()
            .find(|c| c.mode == mode && c.program == program && c.seed == seed)
            .expect("cell present")
            .unique_crashes
    };
    let mut wins = 0usize;
    let mut total = 0usize;
    for program in 0..corpus.len() {
        for seed in 1..=30u64 {
            total += 1;
            if cell(Mode::Instruction, program, seed) >= cell(Mode::None, program, seed) {
                wins += 1;
            }
        }
    }
    let fraction = wins as f64 / total as f64;
    assert!(fraction >= 0.6, "instruction >= none in only {fraction:.2} of cells");

    // no two modes found exactly the same crash set
    for (i, &a) in Mode::ALL.iter().enumerate() {
        for &b in &Mode::ALL[i + 1..] {
            let differs = summary.overlap.iter().any(|(modes, count)| {
                *count > 0 && modes.contains(&a) != modes.contains(&b)
            });
            assert!(differs, "modes {a} and {b} found identical crash sets");
        }
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 1800, "campaign took {elapsed:?}");
    println!(
        "criterion 7 (instruction guidance >= unguided in {:.0}% of {total} cells, \
         mode crash sets pairwise distinct, {elapsed:.0?} wall clock): pass",
        fraction * 100.0
    );
}

#[test]
fn criterion_8_pipeline_reproduces_expected_coverage() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_acv");
    let inst = dir.path().join("inst");
    let acvr = dir.path().join("run.acvr");
    let report = dir.path().join("report");

    let out = Command::new(bin)
        .args(["instrument", "--in", &fixture("app"), "--out", inst.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let out = Command::new(bin)
        .args([
            "run",
            "--program",
            inst.to_str().unwrap(),
            "--script",
            &fixture("run.script"),
            "--out",
            acvr.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let out = Command::new(bin)
        .args([
            "report",
            "--probe-map",
            inst.join("acv.probemap.json").to_str().unwrap(),
            "--out",
            report.to_str().unwrap(),
            acvr.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");

    let stdout = String::from_utf8_lossy(&out.stdout);
    let expected = std::fs::read_to_string(fixture("expected/totals.txt")).unwrap();
    for line in expected.lines() {
        assert!(stdout.contains(line), "missing `{line}` in:\n{stdout}");
    }
    let golden = std::fs::read(fixture("expected/coverage.xml")).unwrap();
    let produced = std::fs::read(report.join("coverage.xml")).unwrap();
    assert_eq!(produced, golden);

    println!("criterion 8 (pipeline reproduces frozen coverage figures): pass");
}
