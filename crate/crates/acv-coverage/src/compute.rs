//! Coverage computation: joins a probe map with a runtime report into a
//! counter tree (program -> class -> method).
//!
//! Counters exist at three levels. INSTRUCTION counters only count
//! traceable instructions and are populated only when instruction probes
//! exist; at method or class granularity they stay 0/0. A method is
//! covered iff its entry probe fired; a class is covered iff any of its
//! methods is.

use crate::runtime::{ReportMismatch, RuntimeReport};
use acv_instrument::{ClassProbes, Granularity, ProbeMap, ProbeTarget};
use acv_smali::MethodSig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counter {
    pub covered: usize,
    pub missed: usize,
}

impl Counter {
    pub fn of(covered: usize, missed: usize) -> Self {
        Counter { covered, missed }
    }

    pub fn flag(covered: bool) -> Self {
        if covered {
            Counter::of(1, 0)
        } else {
            Counter::of(0, 1)
        }
    }

    pub fn total(&self) -> usize {
        self.covered + self.missed
    }

    pub fn percent(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            100.0 * self.covered as f64 / self.total() as f64
        }
    }

    pub fn add(&mut self, other: Counter) {
        self.covered += other.covered;
        self.missed += other.missed;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodCoverage {
    pub sig: MethodSig,
    pub covered: bool,
    pub instructions: Counter,
    pub methods: Counter,
    /// Body indices of covered instructions, for source highlighting.
    pub covered_indices: Vec<usize>,
    pub missed_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassCoverage {
    pub name: String,
    pub covered: bool,
    pub methods: Vec<MethodCoverage>,
    pub instruction_counter: Counter,
    pub method_counter: Counter,
    pub class_counter: Counter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub granularity: Granularity,
    pub classes: Vec<ClassCoverage>,
    pub instruction_counter: Counter,
    pub method_counter: Counter,
    pub class_counter: Counter,
}

pub fn compute(
    probe_map: &ProbeMap,
    runtime: &RuntimeReport,
) -> Result<CoverageReport, ReportMismatch> {
    if runtime.classes.len() != probe_map.classes.len() {
        return Err(ReportMismatch(format!(
            "{} classes in runtime report, {} in probe map",
            runtime.classes.len(),
            probe_map.classes.len()
        )));
    }
    let mut classes = Vec::new();
    let mut instruction_counter = Counter::default();
    let mut method_counter = Counter::default();
    let mut class_counter = Counter::default();
    for (cp, (rname, bits)) in probe_map.classes.iter().zip(&runtime.classes) {
        if *rname != cp.name {
            return Err(ReportMismatch(format!(
                "class `{rname}` in runtime report, `{}` in probe map",
                cp.name
            )));
        }
        if bits.len() != cp.probe_count() {
            return Err(ReportMismatch(format!(
                "class `{rname}`: {} probes fired vector, {} in probe map",
                bits.len(),
                cp.probe_count()
            )));
        }
        let cc = compute_class(cp, bits);
        instruction_counter.add(cc.instruction_counter);
        method_counter.add(cc.method_counter);
        class_counter.add(cc.class_counter);
        classes.push(cc);
    }
    Ok(CoverageReport {
        granularity: probe_map.granularity,
        classes,
        instruction_counter,
        method_counter,
        class_counter,
    })
}

fn compute_class(cp: &ClassProbes, bits: &[bool]) -> ClassCoverage {
    // probes are grouped per method, instruction probes then the entry
    // probe, so method order falls out of the entry-probe order
    let mut methods: Vec<MethodCoverage> = Vec::new();
    let mut pending: Vec<(usize, bool)> = Vec::new(); // (body index, fired)
    for (i, target) in cp.probes.iter().enumerate() {
        match target {
            ProbeTarget::Instruction { body_index, .. } => {
                pending.push((*body_index, bits[i]));
            }
            ProbeTarget::MethodEntry { method } => {
                let covered = bits[i];
                let mut covered_indices = Vec::new();
                let mut missed_indices = Vec::new();
                for (bi, fired) in pending.drain(..) {
                    if fired {
                        covered_indices.push(bi);
                    } else {
                        missed_indices.push(bi);
                    }
                }
                methods.push(MethodCoverage {
                    sig: method.clone(),
                    covered,
                    instructions: Counter::of(covered_indices.len(), missed_indices.len()),
                    methods: Counter::flag(covered),
                    covered_indices,
                    missed_indices,
                });
            }
        }
    }
    let covered = methods.iter().any(|m| m.covered);
    let mut instruction_counter = Counter::default();
    let mut method_counter = Counter::default();
    for m in &methods {
        instruction_counter.add(m.instructions);
        method_counter.add(m.methods);
    }
    ClassCoverage {
        name: cp.name.clone(),
        covered,
        methods,
        instruction_counter,
        method_counter,
        class_counter: Counter::flag(covered),
    }
}

/// Checks that every parent counter equals the sum of its children.
pub fn check_conservation(report: &CoverageReport) -> Result<(), String> {
    let mut instr = Counter::default();
    let mut meth = Counter::default();
    let mut class = Counter::default();
    for c in &report.classes {
        let mut ci = Counter::default();
        let mut cm = Counter::default();
        for m in &c.methods {
            ci.add(m.instructions);
            cm.add(m.methods);
        }
        if ci != c.instruction_counter || cm != c.method_counter {
            return Err(format!("class {} counters do not sum", c.name));
        }
        instr.add(c.instruction_counter);
        meth.add(c.method_counter);
        class.add(c.class_counter);
    }
    if instr != report.instruction_counter
        || meth != report.method_counter
        || class != report.class_counter
    {
        return Err("program counters do not sum".into());
    }
    Ok(())
}
