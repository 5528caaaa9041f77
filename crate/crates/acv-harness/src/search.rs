//! Evolutionary suite search with a Pareto fitness on coverage, unique
//! crashes, and suite length.
//!
//! A test suite is a list of entry calls. Each evaluation runs the suite on
//! a fresh interpreter fork, measures coverage through the probe arrays at
//! the mode's granularity (constant 0 in `none` mode), and collects crash
//! keys. Selection is nondominated sorting with a crowding-distance
//! tiebreak. All randomness flows from one seeded generator, so a (program,
//! mode, seed, budget) cell fully determines the result.

use crate::generate::{FaultCorpusProgram, ARG_RANGE};
use acv_coverage::compute;
use acv_dvm::{collect_runtime, CallOutcome, CrashRecord, Interpreter, Limits, Value};
use acv_instrument::{instrument, Granularity, ProbeMap};
use acv_smali::model::MethodSig;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Instruction,
    Method,
    Class,
    None,
}

impl Mode {
    pub fn granularity(self) -> Option<Granularity> {
        match self {
            Mode::Instruction => Some(Granularity::Instruction),
            Mode::Method => Some(Granularity::Method),
            Mode::Class => Some(Granularity::Class),
            Mode::None => None,
        }
    }

    pub const ALL: [Mode; 4] = [Mode::Instruction, Mode::Method, Mode::Class, Mode::None];
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Instruction => "instruction",
            Mode::Method => "method",
            Mode::Class => "class",
            Mode::None => "none",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "instruction" => Ok(Mode::Instruction),
            "method" => Ok(Mode::Method),
            "class" => Ok(Mode::Class),
            "none" => Ok(Mode::None),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallEvent {
    pub class: String,
    pub method: String,
    pub args: [i32; 3],
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TestSuite {
    pub events: Vec<CallEvent>,
}

impl TestSuite {
    /// Run-script form, replayable by the interpreter front end.
    pub fn to_script(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&format!(
                "call {} {}(III)V {} {} {}\n",
                e.class, e.method, e.args[0], e.args[1], e.args[2]
            ));
        }
        out.push_str("stop\n");
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fitness {
    pub coverage: f64,
    pub crashes: usize,
    pub length: usize,
}

/// Higher coverage, more crashes, shorter suite; strict in at least one.
pub fn dominates(a: &Fitness, b: &Fitness) -> bool {
    let ge = a.coverage >= b.coverage && a.crashes >= b.crashes && a.length <= b.length;
    let strict = a.coverage > b.coverage || a.crashes > b.crashes || a.length < b.length;
    ge && strict
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CrashKey {
    pub class: String,
    pub method: String,
    pub body_index: u32,
    pub exception: String,
}

impl CrashKey {
    pub fn of(record: &CrashRecord) -> CrashKey {
        CrashKey {
            class: record.class.clone(),
            method: record.method.clone(),
            body_index: record.body_index,
            exception: record.exception.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub mode: Mode,
    pub budget: usize,
    pub seed: u64,
    pub limits: Limits,
}

pub const POPULATION: usize = 20;
pub const MUTATION_RATE: f64 = 0.3;
pub const MAX_SUITE_LEN: usize = 50;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("budget {budget} is below the population size {POPULATION}")]
    BudgetTooSmall { budget: usize },
    #[error("instrumentation failed: {0}")]
    Instrument(#[from] acv_instrument::InstrumentError),
    #[error("interpreter rejected the program: {0}")]
    Exec(#[from] acv_dvm::ExecError),
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    /// Unique crashes with the suite that found each, for replay.
    pub crashes: BTreeMap<CrashKey, (CrashRecord, TestSuite)>,
    pub best: TestSuite,
    pub best_fitness: Fitness,
    pub evaluations: usize,
}

/// The program as the search runs it: instrumented at the mode's
/// granularity, or untouched for `none`.
pub struct PreparedProgram {
    base: Interpreter,
    probe_map: Option<ProbeMap>,
    entries: Vec<(String, MethodSig)>,
}

impl PreparedProgram {
    pub fn new(program: &FaultCorpusProgram, mode: Mode) -> Result<PreparedProgram, SearchError> {
        let (runnable, probe_map) = match mode.granularity() {
            Some(g) => {
                let out = instrument(&program.program, g)?;
                (out.program, Some(out.probe_map))
            }
            None => (program.program.clone(), None),
        };
        let entries = runnable.entry_points.clone();
        Ok(PreparedProgram { base: Interpreter::new(&runnable)?, probe_map, entries })
    }

    fn evaluate(
        &self,
        suite: &TestSuite,
        limits: Limits,
    ) -> (Fitness, Vec<(CrashKey, CrashRecord)>) {
        let mut interp = self.base.fork();
        for e in &suite.events {
            let sig = MethodSig { name: e.method.clone(), descriptor: "(III)V".into() };
            let args: Vec<Value> = e.args.iter().map(|&a| Value::Int(a)).collect();
            match interp.call(&e.class, &sig, &args, limits) {
                Ok(CallOutcome::Return(_)) | Ok(CallOutcome::Crash(_)) => {}
                Err(_) => break,
            }
        }
        let coverage = match &self.probe_map {
            None => 0.0,
            Some(map) => match collect_runtime(&interp, map).and_then(|r| compute(map, &r)) {
                Err(_) => 0.0,
                Ok(report) => {
                    let counter = match map.granularity {
                        Granularity::Instruction => report.instruction_counter,
                        Granularity::Method => report.method_counter,
                        Granularity::Class => report.class_counter,
                    };
                    counter.percent() / 100.0
                }
            },
        };
        let crashes: Vec<(CrashKey, CrashRecord)> = interp
            .crashes()
            .iter()
            .map(|r| (CrashKey::of(r), r.clone()))
            .collect();
        let unique: std::collections::BTreeSet<&CrashKey> =
            crashes.iter().map(|(k, _)| k).collect();
        let fitness = Fitness { coverage, crashes: unique.len(), length: suite.events.len() };
        (fitness, crashes)
    }
}

fn random_event(entries: &[(String, MethodSig)], rng: &mut ChaCha8Rng) -> CallEvent {
    let (class, sig) = entries.choose(rng).expect("program has entry points");
    CallEvent {
        class: class.clone(),
        method: sig.name.clone(),
        args: [
            rng.gen_range(ARG_RANGE),
            rng.gen_range(ARG_RANGE),
            rng.gen_range(ARG_RANGE),
        ],
    }
}

fn random_suite(entries: &[(String, MethodSig)], rng: &mut ChaCha8Rng) -> TestSuite {
    let len = rng.gen_range(1..=8);
    TestSuite {
        events: (0..len).map(|_| random_event(entries, rng)).collect(),
    }
}

fn mutate(suite: &mut TestSuite, entries: &[(String, MethodSig)], rng: &mut ChaCha8Rng) {
    match rng.gen_range(0..3) {
        0 if suite.events.len() < MAX_SUITE_LEN => {
            let at = rng.gen_range(0..=suite.events.len());
            suite.events.insert(at, random_event(entries, rng));
        }
        1 if suite.events.len() > 1 => {
            let at = rng.gen_range(0..suite.events.len());
            suite.events.remove(at);
        }
        _ => {
            if let Some(e) = suite.events.choose_mut(rng) {
                let slot = rng.gen_range(0..3);
                e.args[slot] = rng.gen_range(ARG_RANGE);
            }
        }
    }
}

fn crossover(a: &TestSuite, b: &TestSuite, rng: &mut ChaCha8Rng) -> TestSuite {
    let cut_a = rng.gen_range(0..=a.events.len());
    let cut_b = rng.gen_range(0..=b.events.len());
    let mut events: Vec<CallEvent> = a.events[..cut_a].to_vec();
    events.extend_from_slice(&b.events[cut_b..]);
    events.truncate(MAX_SUITE_LEN);
    if events.is_empty() {
        events.push(random_event_from(a, b));
    }
    TestSuite { events }
}

fn random_event_from(a: &TestSuite, b: &TestSuite) -> CallEvent {
    a.events
        .first()
        .or_else(|| b.events.first())
        .expect("suites are nonempty")
        .clone()
}

/// Fronts of nondominated sorting, best first.
fn nondominated_fronts(fitness: &[Fitness]) -> Vec<Vec<usize>> {
    let n = fitness.len();
    let mut dominated_by = vec![0usize; n];
    let mut dominates_list: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if i != j && dominates(&fitness[i], &fitness[j]) {
                dominates_list[i].push(j);
                dominated_by[j] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominates_list[i] {
                dominated_by[j] -= 1;
                if dominated_by[j] == 0 {
                    next.push(j);
                }
            }
        }
        fronts.push(std::mem::take(&mut current));
        current = next;
    }
    fronts
}

fn crowding(front: &[usize], fitness: &[Fitness]) -> Vec<(usize, f64)> {
    let mut distance: BTreeMap<usize, f64> = front.iter().map(|&i| (i, 0.0)).collect();
    let objectives: [fn(&Fitness) -> f64; 3] = [
        |f| f.coverage,
        |f| f.crashes as f64,
        |f| -(f.length as f64),
    ];
    for obj in objectives {
        let mut order: Vec<usize> = front.to_vec();
        order.sort_by(|&a, &b| obj(&fitness[a]).partial_cmp(&obj(&fitness[b])).unwrap());
        let lo = obj(&fitness[order[0]]);
        let hi = obj(&fitness[*order.last().unwrap()]);
        *distance.get_mut(&order[0]).unwrap() = f64::INFINITY;
        *distance.get_mut(order.last().unwrap()).unwrap() = f64::INFINITY;
        if hi > lo {
            for w in order.windows(3) {
                let d = (obj(&fitness[w[2]]) - obj(&fitness[w[0]])) / (hi - lo);
                *distance.get_mut(&w[1]).unwrap() += d;
            }
        }
    }
    front.iter().map(|&i| (i, distance[&i])).collect()
}

/// Truncates parents+offspring to the next generation by front rank, then
/// crowding distance within the split front.
fn select(
    population: Vec<(TestSuite, Fitness)>,
    size: usize,
) -> Vec<(TestSuite, Fitness)> {
    let fitness: Vec<Fitness> = population.iter().map(|(_, f)| *f).collect();
    let fronts = nondominated_fronts(&fitness);
    let mut chosen: Vec<usize> = Vec::new();
    for front in fronts {
        if chosen.len() + front.len() <= size {
            chosen.extend(front);
        } else {
            let mut ranked = crowding(&front, &fitness);
            ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            chosen.extend(ranked.into_iter().take(size - chosen.len()).map(|(i, _)| i));
            break;
        }
    }
    let mut keep: Vec<Option<(TestSuite, Fitness)>> =
        population.into_iter().map(Some).collect();
    chosen.into_iter().map(|i| keep[i].take().unwrap()).collect()
}

fn tournament<'a>(
    population: &'a [(TestSuite, Fitness)],
    rng: &mut ChaCha8Rng,
) -> &'a TestSuite {
    let a = rng.gen_range(0..population.len());
    let b = rng.gen_range(0..population.len());
    if dominates(&population[b].1, &population[a].1) {
        &population[b].0
    } else {
        &population[a].0
    }
}

pub fn search(
    program: &FaultCorpusProgram,
    config: &SearchConfig,
) -> Result<SearchResult, SearchError> {
    if config.budget < POPULATION {
        return Err(SearchError::BudgetTooSmall { budget: config.budget });
    }
    let prepared = PreparedProgram::new(program, config.mode)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut archive: BTreeMap<CrashKey, (CrashRecord, TestSuite)> = BTreeMap::new();
    let mut evaluations = 0usize;

    let evaluate = |suite: TestSuite,
                        archive: &mut BTreeMap<CrashKey, (CrashRecord, TestSuite)>,
                        evaluations: &mut usize| {
        let (fitness, crashes) = prepared.evaluate(&suite, config.limits);
        *evaluations += 1;
        for (key, record) in crashes {
            archive.entry(key).or_insert_with(|| (record, suite.clone()));
        }
        (suite, fitness)
    };

    let mut population: Vec<(TestSuite, Fitness)> = (0..POPULATION)
        .map(|_| random_suite(&prepared.entries, &mut rng))
        .map(|s| evaluate(s, &mut archive, &mut evaluations))
        .collect();

    while evaluations + POPULATION <= config.budget {
        let mut offspring = Vec::with_capacity(POPULATION);
        for _ in 0..POPULATION {
            let a = tournament(&population, &mut rng);
            let b = tournament(&population, &mut rng);
            let mut child = if rng.gen_bool(0.5) {
                crossover(a, b, &mut rng)
            } else {
                a.clone()
            };
            if rng.gen_bool(MUTATION_RATE) {
                mutate(&mut child, &prepared.entries, &mut rng);
            }
            offspring.push(evaluate(child, &mut archive, &mut evaluations));
        }
        population.extend(offspring);
        population = select(population, POPULATION);
    }

    let (best, best_fitness) = population
        .iter()
        .max_by(|(_, a), (_, b)| {
            a.crashes
                .cmp(&b.crashes)
                .then(a.coverage.partial_cmp(&b.coverage).unwrap())
                .then(b.length.cmp(&a.length))
        })
        .cloned()
        .expect("population nonempty");
    Ok(SearchResult { crashes: archive, best, best_fitness, evaluations })
}

/// Replays a suite against a fresh fork of the prepared program and
/// returns the crash keys it produces.
pub fn replay(
    program: &FaultCorpusProgram,
    mode: Mode,
    suite: &TestSuite,
    limits: Limits,
) -> Result<Vec<CrashKey>, SearchError> {
    let prepared = PreparedProgram::new(program, mode)?;
    let (_, crashes) = prepared.evaluate(suite, limits);
    Ok(crashes.into_iter().map(|(k, _)| k).collect())
}
