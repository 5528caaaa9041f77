use acv_dvm::{interpret, CallOutcome, Limits, Value};
use acv_harness::*;
use acv_instrument::{instrument, Granularity};
use acv_smali::parse::parse_sources;
use acv_smali::print::print_program;
use acv_smali::verify::verify;
use std::collections::BTreeSet;

fn limits() -> Limits {
    Limits { step_limit: 200_000, heap_limit: 50_000 }
}

#[test]
fn corpus_is_deterministic_and_empty_for_zero() {
    let a = generate_corpus(7, 5);
    let b = generate_corpus(7, 5);
    assert_eq!(a.len(), 5);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.program, y.program);
        assert_eq!(x.faults, y.faults);
    }
    let c = generate_corpus(8, 5);
    assert!(a.iter().zip(&c).any(|(x, y)| x.program != y.program));
    assert!(generate_corpus(7, 0).is_empty());
}

#[test]
fn corpus_programs_verify_instrument_and_roundtrip() {
    for p in generate_corpus(11, 10) {
        let r = verify(&p.program);
        assert!(r.is_ok(), "{:?}", r.violations);
        let files = print_program(&p.program);
        let reparsed = parse_sources(&files).program.expect("printed corpus reparses");
        assert_eq!(reparsed, p.program);
        for g in [Granularity::Instruction, Granularity::Method, Granularity::Class] {
            let out = instrument(&p.program, g).unwrap();
            assert!(verify(&out.program).is_ok());
        }
    }
}

#[test]
fn planted_faults_trigger_under_witness() {
    for p in generate_corpus(23, 15) {
        assert!(!p.faults.is_empty());
        for fault in &p.faults {
            let args: Vec<Value> = fault.witness.iter().map(|&a| Value::Int(a)).collect();
            let (outcome, _) =
                interpret(&p.program, &fault.class, &fault.entry, &args, limits()).unwrap();
            match outcome {
                CallOutcome::Crash(c) => {
                    assert_eq!(c.exception, fault.kind.exception(), "fault {fault:?}");
                    assert_eq!(c.class, fault.class);
                }
                other => panic!("witness did not crash: {fault:?} -> {other:?}"),
            }
        }
    }
}

#[test]
fn search_is_deterministic_per_seed() {
    let corpus = generate_corpus(3, 1);
    let cfg = SearchConfig { mode: Mode::Instruction, budget: 60, seed: 42, limits: limits() };
    let a = search(&corpus[0], &cfg).unwrap();
    let b = search(&corpus[0], &cfg).unwrap();
    assert_eq!(a.best, b.best);
    let ka: Vec<&CrashKey> = a.crashes.keys().collect();
    let kb: Vec<&CrashKey> = b.crashes.keys().collect();
    assert_eq!(ka, kb);
    assert_eq!(a.evaluations, b.evaluations);
    assert_eq!(a.evaluations, 60);
}

#[test]
fn degenerate_budget_and_budget_error() {
    let corpus = generate_corpus(5, 1);
    let cfg = SearchConfig { mode: Mode::Method, budget: POPULATION, seed: 1, limits: limits() };
    let r = search(&corpus[0], &cfg).unwrap();
    // no room for a second generation: only the initial population ran
    assert_eq!(r.evaluations, POPULATION);

    let bad = SearchConfig { mode: Mode::Method, budget: POPULATION - 1, seed: 1, limits: limits() };
    assert!(matches!(
        search(&corpus[0], &bad),
        Err(SearchError::BudgetTooSmall { .. })
    ));
}

#[test]
fn none_mode_pins_coverage_to_zero() {
    let corpus = generate_corpus(9, 1);
    let cfg = SearchConfig { mode: Mode::None, budget: 60, seed: 5, limits: limits() };
    let r = search(&corpus[0], &cfg).unwrap();
    assert_eq!(r.best_fitness.coverage, 0.0);
}

#[test]
fn found_crashes_replay() {
    let corpus = generate_corpus(17, 3);
    for p in &corpus {
        let cfg = SearchConfig { mode: Mode::Instruction, budget: 100, seed: 2, limits: limits() };
        let r = search(p, &cfg).unwrap();
        for (key, (_, suite)) in &r.crashes {
            let replayed = replay(p, Mode::Instruction, suite, limits()).unwrap();
            assert!(replayed.contains(key), "crash {key:?} did not replay");
        }
    }
}

#[test]
fn pareto_dominance_relation() {
    let a = Fitness { coverage: 0.5, crashes: 2, length: 10 };
    let b = Fitness { coverage: 0.4, crashes: 2, length: 10 };
    let c = Fitness { coverage: 0.6, crashes: 1, length: 5 };
    assert!(dominates(&a, &b));
    assert!(!dominates(&b, &a));
    assert!(!dominates(&a, &c) && !dominates(&c, &a));
    assert!(!dominates(&a, &a));
}

#[test]
fn campaign_partition_sums_and_union_bound() {
    let corpus = generate_corpus(29, 2);
    let cfg = CampaignConfig {
        modes: Mode::ALL.to_vec(),
        seeds: vec![1, 2],
        budget: 60,
        limits: limits(),
    };
    let summary = campaign(&corpus, &cfg).unwrap();
    assert_eq!(summary.cells.len(), 2 * 4 * 2);

    let partition_total: usize = summary.overlap.iter().map(|(_, n)| n).sum();
    let union: BTreeSet<_> = summary
        .per_mode
        .iter()
        .map(|m| m.unique_crashes)
        .collect();
    let _ = union;
    let max_mode = summary.per_mode.iter().map(|m| m.unique_crashes).max().unwrap();
    assert!(partition_total >= max_mode);
    // per-mode counts never exceed the partitioned union
    for m in &summary.per_mode {
        assert!(m.unique_crashes <= partition_total);
        assert!(m.crash_types <= m.unique_crashes.max(1));
    }

    let csv = summary_to_csv(&summary);
    assert!(csv.starts_with("mode,unique_crashes,faulty_programs,crash_types\n"));
    let json = summary_to_json(&summary);
    let back: CampaignSummary = serde_json::from_str(&json).unwrap();
    assert_eq!(back, summary);
}

#[test]
fn suites_serialize_to_runnable_scripts() {
    let corpus = generate_corpus(31, 1);
    let cfg = SearchConfig { mode: Mode::Class, budget: 40, seed: 3, limits: limits() };
    let r = search(&corpus[0], &cfg).unwrap();
    let script_text = r.best.to_script();
    let lines = acv_dvm::parse_script(&script_text).unwrap();
    assert_eq!(lines.len(), r.best.events.len() + 1);
    let mut interp = acv_dvm::Interpreter::new(&corpus[0].program).unwrap();
    let run = acv_dvm::run_script(&mut interp, &lines, limits()).unwrap();
    assert!(run.stopped);
}
