//! Deterministic generator of small programs with planted faults.
//!
//! Every program is built from per-method segments: plain emits, bounded
//! loops, branches, handled try/catch divisions, monitor sections, helper
//! calls, and guarded faults. A shallow fault hides behind two predicates on
//! the entry arguments (`p0 == key`, `p1 > threshold`); a deep one also pins
//! `p1` to one value and `p2` to a narrow window, so random inputs rarely
//! reach it. The generator records a witness input that satisfies the guard,
//! and keys are unique per program so one call triggers at most one fault.

use acv_smali::model::{
    AccessFlags, BodyItem, FieldDecl, Instruction, MethodSig, SmaliClass, SmaliMethod,
    SmaliProgram,
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const RUNTIME_CLASS: &str = "Lacv/Runtime;";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaultKind {
    DivZero,
    NullDeref,
    Throw,
}

impl FaultKind {
    pub fn exception(self) -> &'static str {
        match self {
            FaultKind::DivZero => "Ljava/lang/ArithmeticException;",
            FaultKind::NullDeref => "Ljava/lang/NullPointerException;",
            FaultKind::Throw => "Ljava/lang/RuntimeException;",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlantedFault {
    pub class: String,
    pub entry: MethodSig,
    pub kind: FaultKind,
    /// Arguments to `entry` that reach the fault.
    pub witness: [i32; 3],
}

#[derive(Debug, Clone)]
pub struct FaultCorpusProgram {
    pub program: SmaliProgram,
    pub faults: Vec<PlantedFault>,
    pub seed: u64,
}

/// All entry methods take three ints; argument values the search mutates
/// over stay in this range, which overlaps the fault guard keys.
pub const ARG_RANGE: std::ops::RangeInclusive<i32> = -4..=12;

const LOCALS: u16 = 6;

/// Second stage of a fault guard, after the `p0 == key` check.
#[derive(Debug, Clone, Copy)]
enum FaultGuard {
    /// Shallow: fires for any `p1` above the threshold.
    Threshold(i32),
    /// Deep: `p1 == a` and `p2` within `[b, b + 5]`.
    Window(i32, i32),
}

fn emit_call(reg: u16) -> Vec<BodyItem> {
    vec![BodyItem::Ins(
        Instruction::of("invoke-static")
            .v(reg)
            .method(RUNTIME_CLASS, "emit", "(I)V"),
    )]
}

struct MethodBuilder {
    body: Vec<BodyItem>,
    seg: usize,
}

impl MethodBuilder {
    fn new() -> Self {
        MethodBuilder { body: Vec::new(), seg: 0 }
    }

    fn label(&self, tag: &str) -> String {
        format!("s{}_{tag}", self.seg)
    }

    fn push_emit(&mut self, rng: &mut ChaCha8Rng) {
        let c = rng.gen_range(0..100);
        self.body.push(BodyItem::Ins(Instruction::of("const/16").v(0).lit(c)));
        self.body.push(BodyItem::Ins(Instruction::of("add-int").v(0).v(0).p(0)));
        self.body.extend(emit_call(0));
    }

    fn push_branch(&mut self, rng: &mut ChaCha8Rng) {
        let t = rng.gen_range(0..6);
        let (a, b) = (rng.gen_range(0..100), rng.gen_range(0..100));
        let l_else = self.label("else");
        let l_end = self.label("end");
        self.body.push(BodyItem::Ins(Instruction::of("const/16").v(1).lit(t)));
        self.body.push(BodyItem::Ins(Instruction::of("if-le").p(1).v(1).to_label(&l_else)));
        self.body.push(BodyItem::Ins(Instruction::of("const/16").v(0).lit(a)));
        self.body.extend(emit_call(0));
        self.body.push(BodyItem::Ins(Instruction::of("goto").to_label(&l_end)));
        self.body.push(BodyItem::Label(l_else));
        self.body.push(BodyItem::Ins(Instruction::of("const/16").v(0).lit(b)));
        self.body.extend(emit_call(0));
        self.body.push(BodyItem::Label(l_end));
    }

    fn push_loop(&mut self, rng: &mut ChaCha8Rng) {
        let n = rng.gen_range(2..=5);
        let l_head = self.label("head");
        let l_done = self.label("done");
        self.body.push(BodyItem::Ins(Instruction::of("const/4").v(2).lit(0)));
        self.body.push(BodyItem::Ins(Instruction::of("const/4").v(3).lit(n)));
        self.body.push(BodyItem::Label(l_head.clone()));
        self.body.push(BodyItem::Ins(Instruction::of("if-ge").v(2).v(3).to_label(&l_done)));
        self.body.extend(emit_call(2));
        self.body.push(BodyItem::Ins(Instruction::of("add-int/lit8").v(2).v(2).lit(1)));
        self.body.push(BodyItem::Ins(Instruction::of("goto").to_label(&l_head)));
        self.body.push(BodyItem::Label(l_done));
    }

    fn push_try_div(&mut self) {
        // division by an input, arithmetic faults handled locally
        let l_try = self.label("try");
        let l_tryend = self.label("tryend");
        let l_handler = self.label("h");
        let l_ok = self.label("ok");
        self.body.push(BodyItem::Label(l_try.clone()));
        self.body.push(BodyItem::Ins(Instruction::of("div-int").v(4).p(2).p(1)));
        self.body.push(BodyItem::Label(l_tryend.clone()));
        self.body.push(BodyItem::Ins(Instruction::of("goto").to_label(&l_ok)));
        self.body.push(BodyItem::Label(l_handler.clone()));
        self.body.push(BodyItem::Ins(Instruction::of("move-exception").v(5)));
        self.body.push(BodyItem::Ins(Instruction::of("const/4").v(4).lit(-1)));
        self.body.push(BodyItem::Label(l_ok));
        self.body.extend(emit_call(4));
        self.body.push(BodyItem::Try(acv_smali::model::TryDirective {
            start: l_try,
            end: l_tryend,
            exception: Some("Ljava/lang/ArithmeticException;".into()),
            handler: l_handler,
        }));
    }

    fn push_monitor(&mut self, rng: &mut ChaCha8Rng) {
        let c = rng.gen_range(0..100);
        self.body.push(BodyItem::Ins(
            Instruction::of("new-instance").v(1).type_ref("Ljava/lang/Object;"),
        ));
        self.body.push(BodyItem::Ins(Instruction::of("monitor-enter").v(1)));
        self.body.push(BodyItem::Ins(Instruction::of("const/16").v(0).lit(c)));
        self.body.extend(emit_call(0));
        self.body.push(BodyItem::Ins(Instruction::of("monitor-exit").v(1)));
    }

    fn push_helper_call(&mut self, class: &str) {
        self.body.push(BodyItem::Ins(
            Instruction::of("invoke-static").p(0).p(1).method(class, "mix", "(II)I"),
        ));
        self.body.push(BodyItem::Ins(Instruction::of("move-result").v(0)));
        self.body.extend(emit_call(0));
    }

    fn push_fault(&mut self, class: &str, kind: FaultKind, key: i32, guard: FaultGuard) {
        let l_skip = self.label("skip");
        self.body.push(BodyItem::Ins(Instruction::of("const/16").v(0).lit(key as i64)));
        self.body.push(BodyItem::Ins(Instruction::of("if-ne").p(0).v(0).to_label(&l_skip)));
        match guard {
            FaultGuard::Threshold(t) => {
                self.body.push(BodyItem::Ins(Instruction::of("const/16").v(1).lit(t as i64)));
                self.body.push(BodyItem::Ins(Instruction::of("if-le").p(1).v(1).to_label(&l_skip)));
            }
            FaultGuard::Window(a, b) => {
                self.body.push(BodyItem::Ins(Instruction::of("const/16").v(1).lit(a as i64)));
                self.body.push(BodyItem::Ins(Instruction::of("if-ne").p(1).v(1).to_label(&l_skip)));
                self.body.push(BodyItem::Ins(Instruction::of("const/16").v(1).lit(b as i64)));
                self.body.push(BodyItem::Ins(Instruction::of("if-lt").p(2).v(1).to_label(&l_skip)));
                self.body.push(BodyItem::Ins(
                    Instruction::of("const/16").v(1).lit(b as i64 + 5),
                ));
                self.body.push(BodyItem::Ins(Instruction::of("if-gt").p(2).v(1).to_label(&l_skip)));
            }
        }
        match kind {
            FaultKind::DivZero => {
                self.body.push(BodyItem::Ins(Instruction::of("const/4").v(2).lit(0)));
                self.body.push(BodyItem::Ins(Instruction::of("div-int").v(2).p(2).v(2)));
            }
            FaultKind::NullDeref => {
                self.body.push(BodyItem::Ins(
                    Instruction::of("sget-object").v(2).field(class, "sink", class),
                ));
                self.body.push(BodyItem::Ins(
                    Instruction::of("iget").v(3).v(2).field(class, "val", "I"),
                ));
            }
            FaultKind::Throw => {
                self.body.push(BodyItem::Ins(
                    Instruction::of("new-instance")
                        .v(2)
                        .type_ref("Ljava/lang/RuntimeException;"),
                ));
                self.body.push(BodyItem::Ins(Instruction::of("throw").v(2)));
            }
        }
        self.body.push(BodyItem::Label(l_skip));
    }

    fn next_segment(&mut self) {
        self.seg += 1;
    }

    fn finish(mut self) -> Vec<BodyItem> {
        self.body.push(BodyItem::Ins(Instruction::of("return-void")));
        self.body
    }
}

fn helper_method() -> SmaliMethod {
    SmaliMethod {
        name: "mix".into(),
        param_types: vec!["I".into(), "I".into()],
        return_type: "I".into(),
        access_flags: AccessFlags::STATIC,
        locals: 1,
        body: vec![
            BodyItem::Ins(Instruction::of("add-int").v(0).p(0).p(1)),
            BodyItem::Ins(Instruction::of("return").v(0)),
        ],
    }
}

fn generate_program(seed: u64, index: usize) -> FaultCorpusProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let class_count = rng.gen_range(1..=3);
    let class_names: Vec<String> =
        (0..class_count).map(|c| format!("Lgen/P{index}C{c};")).collect();

    // entry slots first, then faults distributed over them
    let mut entries: Vec<(usize, String)> = Vec::new();
    for (ci, _) in class_names.iter().enumerate() {
        for e in 0..rng.gen_range(1..=2) {
            entries.push((ci, format!("entry{e}")));
        }
    }
    let fault_count = rng.gen_range(1..=5.min(entries.len() * 2));
    let mut faults_by_entry: Vec<Vec<(FaultKind, i32, FaultGuard)>> =
        vec![Vec::new(); entries.len()];
    let mut faults = Vec::new();
    for key in 0..fault_count {
        let slot = rng.gen_range(0..entries.len());
        let kind = match rng.gen_range(0..3) {
            0 => FaultKind::DivZero,
            1 => FaultKind::NullDeref,
            _ => FaultKind::Throw,
        };
        let (guard, witness) = if rng.gen_bool(0.5) {
            let (a, b) = (rng.gen_range(ARG_RANGE), rng.gen_range(ARG_RANGE));
            (FaultGuard::Window(a, b), [key as i32, a, b])
        } else {
            let threshold = rng.gen_range(0..4);
            (FaultGuard::Threshold(threshold), [key as i32, threshold + 1, rng.gen_range(1..10)])
        };
        let (ci, name) = &entries[slot];
        faults.push(PlantedFault {
            class: class_names[*ci].clone(),
            entry: MethodSig { name: name.clone(), descriptor: "(III)V".into() },
            kind,
            witness,
        });
        faults_by_entry[slot].push((kind, key as i32, guard));
    }

    let mut classes = Vec::new();
    for (ci, class_name) in class_names.iter().enumerate() {
        let mut methods = vec![helper_method()];
        for (slot, (eci, name)) in entries.iter().enumerate() {
            if *eci != ci {
                continue;
            }
            let mut b = MethodBuilder::new();
            let plain_segments = rng.gen_range(2..=4);
            for _ in 0..plain_segments {
                match rng.gen_range(0..6) {
                    0 => b.push_emit(&mut rng),
                    1 => b.push_branch(&mut rng),
                    2 => b.push_loop(&mut rng),
                    3 => b.push_try_div(),
                    4 => b.push_monitor(&mut rng),
                    _ => b.push_helper_call(class_name),
                }
                b.next_segment();
            }
            for (kind, key, guard) in &faults_by_entry[slot] {
                b.push_fault(class_name, *kind, *key, *guard);
                b.next_segment();
            }
            methods.push(SmaliMethod {
                name: name.clone(),
                param_types: vec!["I".into(); 3],
                return_type: "V".into(),
                access_flags: AccessFlags::PUBLIC.union(AccessFlags::STATIC),
                locals: LOCALS,
                body: b.finish(),
            });
        }
        classes.push(SmaliClass {
            name: class_name.clone(),
            super_name: "Ljava/lang/Object;".into(),
            access_flags: AccessFlags::PUBLIC,
            fields: vec![
                FieldDecl {
                    name: "sink".into(),
                    descriptor: class_name.clone(),
                    access_flags: AccessFlags::PUBLIC.union(AccessFlags::STATIC),
                },
                FieldDecl {
                    name: "val".into(),
                    descriptor: "I".into(),
                    access_flags: AccessFlags::PUBLIC,
                },
            ],
            methods,
        });
    }
    FaultCorpusProgram { program: SmaliProgram::new(classes), faults, seed }
}

/// Deterministic corpus of `n` fault-planted programs.
pub fn generate_corpus(seed: u64, n: usize) -> Vec<FaultCorpusProgram> {
    (0..n).map(|i| generate_program(seed, i)).collect()
}
