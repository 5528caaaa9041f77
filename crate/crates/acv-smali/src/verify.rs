//! Mini-verifier enforcing Dalvik-style structural constraints.
//!
//! Checked rules: frame-size, per-format register ranges, paired-instruction
//! adjacency, move-exception placement, label resolution, reference
//! resolution inside the program, and monitor balance over the control-flow
//! graph. Monitor analysis is a per-block depth counter run to fixpoint;
//! join imprecision is reported as a warning, not a violation.

use crate::model::*;
use crate::opcodes::{BranchFlag, InstructionKind, OperandSpec, RegRange};
use std::collections::{HashMap, HashSet, VecDeque};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub class: String,
    pub method: Option<String>,
    pub body_index: Option<usize>,
    pub rule: &'static str,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}] {}", self.rule, self.class)?;
        if let Some(m) = &self.method {
            write!(f, "->{m}")?;
        }
        if let Some(i) = self.body_index {
            write!(f, " @{i}")?;
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Debug, Default)]
pub struct VerificationResult {
    pub violations: Vec<Violation>,
    pub warnings: Vec<Violation>,
}

impl VerificationResult {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

pub const RULE_FRAME_SIZE: &str = "frame-size";
pub const RULE_REGISTER_RANGE: &str = "register-range";
pub const RULE_PAIRED_ADJACENCY: &str = "paired-adjacency";
pub const RULE_MOVE_EXCEPTION: &str = "move-exception-placement";
pub const RULE_LABEL_RESOLUTION: &str = "label-resolution";
pub const RULE_UNRESOLVED_REF: &str = "unresolved-ref";
pub const RULE_MONITOR_BALANCE: &str = "monitor-balance";
pub const RULE_DUPLICATE: &str = "duplicate-definition";

/// Classes the runtime provides; references to them always resolve.
pub const BUILTIN_CLASSES: &[&str] = &[
    "Ljava/lang/Object;",
    "Ljava/lang/Throwable;",
    "Ljava/lang/Exception;",
    "Ljava/lang/RuntimeException;",
    "Ljava/lang/ArithmeticException;",
    "Ljava/lang/NullPointerException;",
    "Ljava/lang/ArrayIndexOutOfBoundsException;",
    "Ljava/lang/IllegalMonitorStateException;",
    "Ljava/lang/ClassCastException;",
    "Lacv/Runtime;",
];

pub fn is_builtin_class(name: &str) -> bool {
    BUILTIN_CLASSES.contains(&name)
}

pub fn verify(program: &SmaliProgram) -> VerificationResult {
    let mut result = VerificationResult::default();
    let class_index: HashMap<&str, &SmaliClass> =
        program.classes.iter().map(|c| (c.name.as_str(), c)).collect();

    let mut seen = HashSet::new();
    for class in &program.classes {
        if !seen.insert(class.name.as_str()) {
            result.violations.push(Violation {
                class: class.name.clone(),
                method: None,
                body_index: None,
                rule: RULE_DUPLICATE,
                message: "class defined more than once".into(),
            });
        }
        verify_class(class, &class_index, &mut result);
    }
    result
}

fn verify_class(
    class: &SmaliClass,
    classes: &HashMap<&str, &SmaliClass>,
    result: &mut VerificationResult,
) {
    if !classes.contains_key(class.super_name.as_str()) && !is_builtin_class(&class.super_name) {
        result.violations.push(Violation {
            class: class.name.clone(),
            method: None,
            body_index: None,
            rule: RULE_UNRESOLVED_REF,
            message: format!("super class {} not found", class.super_name),
        });
    }
    let mut sigs = HashSet::new();
    for method in &class.methods {
        if !sigs.insert(method.sig()) {
            result.violations.push(Violation {
                class: class.name.clone(),
                method: Some(method.sig().to_string()),
                body_index: None,
                rule: RULE_DUPLICATE,
                message: "method defined more than once".into(),
            });
        }
        verify_method(class, method, classes, result);
    }
}

struct MethodCtx<'a> {
    class: &'a SmaliClass,
    method: &'a SmaliMethod,
    label_defs: HashMap<&'a str, usize>,
}

impl MethodCtx<'_> {
    fn violation(&self, idx: Option<usize>, rule: &'static str, message: String) -> Violation {
        Violation {
            class: self.class.name.clone(),
            method: Some(self.method.sig().to_string()),
            body_index: idx,
            rule,
            message,
        }
    }
}

fn verify_method(
    class: &SmaliClass,
    method: &SmaliMethod,
    classes: &HashMap<&str, &SmaliClass>,
    result: &mut VerificationResult,
) {
    let mut label_defs: HashMap<&str, usize> = HashMap::new();
    for (idx, item) in method.body.iter().enumerate() {
        if let BodyItem::Label(l) = item {
            if label_defs.insert(l.as_str(), idx).is_some() {
                result.violations.push(Violation {
                    class: class.name.clone(),
                    method: Some(method.sig().to_string()),
                    body_index: Some(idx),
                    rule: RULE_LABEL_RESOLUTION,
                    message: format!("label :{l} defined more than once"),
                });
            }
        }
    }
    let ctx = MethodCtx { class, method, label_defs };

    let frame = method.frame_size();
    if frame > MAX_FRAME {
        result.violations.push(ctx.violation(
            None,
            RULE_FRAME_SIZE,
            format!("frame size {frame} exceeds {MAX_FRAME}"),
        ));
        return;
    }

    check_labels_and_ranges(&ctx, frame, classes, result);
    check_pairing(&ctx, result);
    check_monitor_balance(&ctx, result);
}

fn referenced_labels(item: &BodyItem) -> Vec<&str> {
    match item {
        BodyItem::Ins(ins) => ins.label.as_deref().into_iter().collect(),
        BodyItem::Try(t) => vec![&t.start, &t.end, &t.handler],
        BodyItem::PackedSwitch { targets, .. } => targets.iter().map(|s| s.as_str()).collect(),
        BodyItem::SparseSwitch { entries } => entries.iter().map(|(_, t)| t.as_str()).collect(),
        _ => Vec::new(),
    }
}

fn check_labels_and_ranges(
    ctx: &MethodCtx<'_>,
    frame: u32,
    classes: &HashMap<&str, &SmaliClass>,
    result: &mut VerificationResult,
) {
    for (idx, item) in ctx.method.body.iter().enumerate() {
        for label in referenced_labels(item) {
            if !ctx.label_defs.contains_key(label) {
                result.violations.push(ctx.violation(
                    Some(idx),
                    RULE_LABEL_RESOLUTION,
                    format!("unresolved label :{label}"),
                ));
            }
        }
        if let BodyItem::Try(t) = item {
            if let (Some(&s), Some(&e)) = (
                ctx.label_defs.get(t.start.as_str()),
                ctx.label_defs.get(t.end.as_str()),
            ) {
                if s >= e {
                    result.violations.push(ctx.violation(
                        Some(idx),
                        RULE_LABEL_RESOLUTION,
                        format!("empty try range :{} .. :{}", t.start, t.end),
                    ));
                }
            }
        }
        let ins = match item.as_ins() {
            Some(i) => i,
            None => continue,
        };
        check_register_operands(ctx, idx, ins, frame, result);
        check_symbolic_ref(ctx, idx, ins, classes, result);
    }
}

fn check_register_operands(
    ctx: &MethodCtx<'_>,
    idx: usize,
    ins: &Instruction,
    frame: u32,
    result: &mut VerificationResult,
) {
    let check = |reg: RegRef, range: RegRange, wide: bool| -> Option<String> {
        let abs = ctx.method.resolve_reg(reg);
        let top = abs + if wide { 1 } else { 0 };
        if top >= frame {
            Some(format!(
                "{}: register {reg} outside frame of {frame}",
                ins.mnemonic()
            ))
        } else if abs > range.max_index() {
            Some(format!(
                "{}: register {reg} (v{abs}) not addressable by a {}-bit field",
                ins.mnemonic(),
                match range {
                    RegRange::Bits4 => 4,
                    RegRange::Bits8 => 8,
                    RegRange::Bits16 => 16,
                }
            ))
        } else {
            None
        }
    };
    let mut regs = ins.regs.iter();
    let mut messages: Vec<String> = Vec::new();
    for spec in &ins.op.operands {
        match spec {
            OperandSpec::Reg { range, wide } => match regs.next() {
                Some(&r) => messages.extend(check(r, *range, *wide)),
                None => messages.push(format!("{}: missing register operand", ins.mnemonic())),
            },
            OperandSpec::RegList => {
                for &r in regs.by_ref() {
                    messages.extend(check(r, RegRange::Bits4, false));
                }
            }
            _ => {}
        }
    }
    for message in messages {
        result
            .violations
            .push(ctx.violation(Some(idx), RULE_REGISTER_RANGE, message));
    }
}

fn check_symbolic_ref(
    ctx: &MethodCtx<'_>,
    idx: usize,
    ins: &Instruction,
    classes: &HashMap<&str, &SmaliClass>,
    result: &mut VerificationResult,
) {
    let sref = match &ins.sref {
        Some(s) => s,
        None => return,
    };
    match sref {
        SymbolicRef::Method { class, name, descriptor } => {
            // only references into the program itself must resolve
            if is_builtin_class(class) {
                return;
            }
            let mut cur = classes.get(class.as_str());
            if cur.is_none() {
                return; // external class
            }
            while let Some(c) = cur {
                let found = c
                    .methods
                    .iter()
                    .any(|m| &m.name == name && &m.sig().descriptor == descriptor);
                if found {
                    return;
                }
                if is_builtin_class(&c.super_name) {
                    break;
                }
                cur = classes.get(c.super_name.as_str());
            }
            result.violations.push(ctx.violation(
                Some(idx),
                RULE_UNRESOLVED_REF,
                format!("method {class}->{name}{descriptor} not found"),
            ));
        }
        SymbolicRef::Field { class, name, descriptor } => {
            if is_builtin_class(class) {
                return;
            }
            if let Some(c) = classes.get(class.as_str()) {
                let found = c
                    .fields
                    .iter()
                    .any(|f| &f.name == name && &f.descriptor == descriptor);
                if !found {
                    result.violations.push(ctx.violation(
                        Some(idx),
                        RULE_UNRESOLVED_REF,
                        format!("field {class}->{name}:{descriptor} not found"),
                    ));
                }
            }
        }
        SymbolicRef::Type(t) => {
            if t.starts_with('L')
                && !t.starts_with("Ljava/")
                && !is_builtin_class(t)
                && !classes.contains_key(t.as_str())
                && ins.mnemonic() == "new-instance"
            {
                result.violations.push(ctx.violation(
                    Some(idx),
                    RULE_UNRESOLVED_REF,
                    format!("type {t} not found"),
                ));
            }
        }
    }
}

fn check_pairing(ctx: &MethodCtx<'_>, result: &mut VerificationResult) {
    let body = &ctx.method.body;
    let handler_labels: HashSet<&str> = body
        .iter()
        .filter_map(|item| match item {
            BodyItem::Try(t) => Some(t.handler.as_str()),
            _ => None,
        })
        .collect();

    for (idx, item) in body.iter().enumerate() {
        let ins = match item.as_ins() {
            Some(i) => i,
            None => continue,
        };
        if classify(ins) != InstructionKind::PairedSecond {
            continue;
        }
        if ins.mnemonic() == "move-exception" {
            // must be the first instruction of a catch handler: only labels
            // may sit between the handler label and the move-exception
            let mut i = idx;
            let mut in_handler = false;
            while i > 0 {
                i -= 1;
                match &body[i] {
                    BodyItem::Label(l) => {
                        if handler_labels.contains(l.as_str()) {
                            in_handler = true;
                            break;
                        }
                    }
                    _ => break,
                }
            }
            if !in_handler {
                result.violations.push(ctx.violation(
                    Some(idx),
                    RULE_MOVE_EXCEPTION,
                    "move-exception is not the first instruction of a catch handler".into(),
                ));
            }
        } else {
            // move-result* must immediately follow its invoke; labels and
            // catch directives between the two are tolerated
            let prev_ins = body[..idx].iter().rev().find_map(|it| it.as_ins());
            let ok = prev_ins.is_some_and(|p| classify(p) == InstructionKind::PairedFirst);
            if !ok {
                result.violations.push(ctx.violation(
                    Some(idx),
                    RULE_PAIRED_ADJACENCY,
                    format!("{} does not immediately follow an invoke", ins.mnemonic()),
                ));
            }
        }
    }
}

/// Basic blocks over body indices, normal control flow only.
struct Cfg {
    /// Leader index of each block, ascending.
    leaders: Vec<usize>,
    /// Successor leaders per block (indexed like `leaders`).
    succs: Vec<Vec<usize>>,
}

fn build_cfg(ctx: &MethodCtx<'_>) -> Cfg {
    let body = &ctx.method.body;
    let mut leader_set: HashSet<usize> = HashSet::new();
    leader_set.insert(0);
    for (idx, item) in body.iter().enumerate() {
        match item {
            BodyItem::Label(_) => {
                leader_set.insert(idx);
            }
            BodyItem::Ins(ins) => {
                let diverts = classify(ins) == InstructionKind::FlowTerminator
                    || ins.op.branch != BranchFlag::None;
                if diverts && idx + 1 < body.len() {
                    leader_set.insert(idx + 1);
                }
            }
            _ => {}
        }
    }
    let mut leaders: Vec<usize> = leader_set.into_iter().collect();
    leaders.sort_unstable();
    let block_of = |idx: usize| -> usize {
        match leaders.binary_search(&idx) {
            Ok(i) => i,
            Err(i) => i - 1,
        }
    };

    let mut succs: Vec<Vec<usize>> = vec![Vec::new(); leaders.len()];
    for (b, &start) in leaders.iter().enumerate() {
        let end = leaders.get(b + 1).copied().unwrap_or(body.len());
        let mut fallthrough = end < body.len();
        let mut targets: Vec<usize> = Vec::new();
        // the last instruction of the block decides the edges
        if let Some(ins) = body[start..end].iter().rev().find_map(|it| it.as_ins()) {
            let resolve = |label: &str| ctx.label_defs.get(label).copied();
            match classify(ins) {
                InstructionKind::FlowTerminator => {
                    fallthrough = false;
                    if let Some(l) = &ins.label {
                        // goto*
                        if let Some(t) = resolve(l) {
                            targets.push(t);
                        }
                    }
                }
                _ => match ins.op.branch {
                    BranchFlag::Branch => {
                        if let Some(t) = ins.label.as_deref().and_then(resolve) {
                            targets.push(t);
                        }
                    }
                    BranchFlag::Switch => {
                        if let Some(payload_at) = ins.label.as_deref().and_then(resolve) {
                            // payload sits right after its label
                            if let Some(item) = body.get(payload_at + 1) {
                                match item {
                                    BodyItem::PackedSwitch { targets: ts, .. } => {
                                        for t in ts {
                                            if let Some(i) = resolve(t) {
                                                targets.push(i);
                                            }
                                        }
                                    }
                                    BodyItem::SparseSwitch { entries } => {
                                        for (_, t) in entries {
                                            if let Some(i) = resolve(t) {
                                                targets.push(i);
                                            }
                                        }
                                    }
                                    _ => {}
                                }
                            }
                        }
                    }
                    BranchFlag::None => {}
                },
            }
        }
        if fallthrough {
            succs[b].push(b + 1);
        }
        for t in targets {
            succs[b].push(block_of(t));
        }
        succs[b].sort_unstable();
        succs[b].dedup();
    }
    Cfg { leaders, succs }
}

fn check_monitor_balance(ctx: &MethodCtx<'_>, result: &mut VerificationResult) {
    let body = &ctx.method.body;
    let has_monitors = body
        .iter()
        .filter_map(|it| it.as_ins())
        .any(|i| classify(i) == InstructionKind::MonitorOp);
    if !has_monitors {
        return;
    }
    let cfg = build_cfg(ctx);
    let mut depth_in: HashMap<usize, i32> = HashMap::new();
    let mut work: VecDeque<usize> = VecDeque::new();
    depth_in.insert(0, 0);
    work.push_back(0);
    // catch handlers are entered from their try range; seed them with the
    // depth at the range start once it is known
    let handler_seeds: Vec<(usize, usize)> = body
        .iter()
        .filter_map(|it| match it {
            BodyItem::Try(t) => {
                let s = ctx.label_defs.get(t.start.as_str())?;
                let h = ctx.label_defs.get(t.handler.as_str())?;
                Some((*s, *h))
            }
            _ => None,
        })
        .collect();
    let block_of = |idx: usize| -> usize {
        match cfg.leaders.binary_search(&idx) {
            Ok(i) => i,
            Err(i) => i - 1,
        }
    };

    let mut warned = false;
    let mut pass = 0;
    loop {
        while let Some(b) = work.pop_front() {
            let mut depth = depth_in[&b];
            let start = cfg.leaders[b];
            let end = cfg.leaders.get(b + 1).copied().unwrap_or(body.len());
            for (off, item) in body[start..end].iter().enumerate() {
                let ins = match item.as_ins() {
                    Some(i) => i,
                    None => continue,
                };
                match ins.mnemonic() {
                    "monitor-enter" => depth += 1,
                    "monitor-exit" => {
                        depth -= 1;
                        if depth < 0 {
                            result.violations.push(ctx.violation(
                                Some(start + off),
                                RULE_MONITOR_BALANCE,
                                "monitor-exit without a matching monitor-enter".into(),
                            ));
                            depth = 0;
                        }
                    }
                    m if m.starts_with("return") => {
                        if depth != 0 {
                            result.violations.push(ctx.violation(
                                Some(start + off),
                                RULE_MONITOR_BALANCE,
                                format!("return with {depth} monitor(s) still held"),
                            ));
                        }
                    }
                    _ => {}
                }
            }
            for &s in &cfg.succs[b] {
                match depth_in.get(&s) {
                    None => {
                        depth_in.insert(s, depth);
                        work.push_back(s);
                    }
                    Some(&d) if d != depth && !warned => {
                        warned = true;
                        result.warnings.push(ctx.violation(
                            Some(cfg.leaders[s]),
                            RULE_MONITOR_BALANCE,
                            format!("imprecise monitor depth at join ({d} vs {depth})"),
                        ));
                    }
                    _ => {}
                }
            }
        }
        // seed handlers discovered after their try range was analyzed
        let mut seeded = false;
        for &(start_idx, handler_idx) in &handler_seeds {
            let hb = block_of(handler_idx);
            if depth_in.contains_key(&hb) {
                continue;
            }
            if let Some(&d) = depth_in.get(&block_of(start_idx)) {
                depth_in.insert(hb, d);
                work.push_back(hb);
                seeded = true;
            }
        }
        pass += 1;
        if !seeded || pass > body.len() {
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_single;

    fn program(src: &str) -> SmaliProgram {
        let out = parse_single("t.smali", src);
        for d in out.errors() {
            panic!("parse error: {d}");
        }
        out.program.unwrap()
    }

    #[test]
    fn clean_method_verifies() {
        let p = program(
            ".class public LA;\n.super Ljava/lang/Object;\n.method public static m()I\n    .locals 1\n    const/4 v0, 0x5\n    return v0\n.end method\n",
        );
        assert!(verify(&p).is_ok());
    }

    #[test]
    fn frame_overflow_violation() {
        let p = program(
            ".class public LA;\n.super Ljava/lang/Object;\n.method public static m(JJ)V\n    .locals 254\n    return-void\n.end method\n",
        );
        let r = verify(&p);
        assert_eq!(r.violations[0].rule, RULE_FRAME_SIZE);
    }

    #[test]
    fn four_bit_format_range_violation() {
        // move uses 4-bit fields; v16 is out of range even inside the frame
        let p = program(
            ".class public LA;\n.super Ljava/lang/Object;\n.method public static m()V\n    .locals 20\n    const/16 v16, 0x0\n    move v0, v16\n    return-void\n.end method\n",
        );
        let r = verify(&p);
        assert!(r.violations.iter().any(|v| v.rule == RULE_REGISTER_RANGE));
    }

    #[test]
    fn register_outside_frame() {
        let p = program(
            ".class public LA;\n.super Ljava/lang/Object;\n.method public static m()V\n    .locals 1\n    const/4 v3, 0x0\n    return-void\n.end method\n",
        );
        let r = verify(&p);
        assert!(r.violations.iter().any(|v| v.rule == RULE_REGISTER_RANGE));
    }

    #[test]
    fn probe_between_invoke_and_move_result_is_violation() {
        let p = program(
            ".class public LA;\n.super Ljava/lang/Object;\n.method public static f()I\n    .locals 1\n    const/4 v0, 0x1\n    return v0\n.end method\n.method public static m()I\n    .locals 1\n    invoke-static {}, LA;->f()I\n    const/4 v0, 0x0\n    move-result v0\n    return v0\n.end method\n",
        );
        let r = verify(&p);
        assert!(r.violations.iter().any(|v| v.rule == RULE_PAIRED_ADJACENCY));
    }

    #[test]
    fn move_exception_outside_handler_is_violation() {
        let p = program(
            ".class public LA;\n.super Ljava/lang/Object;\n.method public static m()V\n    .locals 1\n    move-exception v0\n    return-void\n.end method\n",
        );
        let r = verify(&p);
        assert!(r.violations.iter().any(|v| v.rule == RULE_MOVE_EXCEPTION));
    }

    #[test]
    fn unresolved_invoke_target_in_program() {
        let p = program(
            ".class public LA;\n.super Ljava/lang/Object;\n.method public static m()V\n    .locals 0\n    invoke-static {}, LA;->nope()V\n    return-void\n.end method\n",
        );
        let r = verify(&p);
        assert!(r.violations.iter().any(|v| v.rule == RULE_UNRESOLVED_REF));
    }

    #[test]
    fn external_references_are_fine() {
        let p = program(
            ".class public LA;\n.super Ljava/lang/Object;\n.method public static m(I)V\n    .locals 0\n    invoke-static {p0}, Lacv/Runtime;->emit(I)V\n    return-void\n.end method\n",
        );
        assert!(verify(&p).is_ok());
    }

    #[test]
    fn balanced_monitors_ok_unbalanced_flagged() {
        let ok = program(
            ".class public LA;\n.super Ljava/lang/Object;\n.method public static m(Ljava/lang/Object;)V\n    .locals 0\n    monitor-enter p0\n    monitor-exit p0\n    return-void\n.end method\n",
        );
        assert!(verify(&ok).is_ok());

        let bad = program(
            ".class public LA;\n.super Ljava/lang/Object;\n.method public static m(Ljava/lang/Object;)V\n    .locals 0\n    monitor-enter p0\n    return-void\n.end method\n",
        );
        let r = verify(&bad);
        assert!(r.violations.iter().any(|v| v.rule == RULE_MONITOR_BALANCE));

        let exit_only = program(
            ".class public LA;\n.super Ljava/lang/Object;\n.method public static m(Ljava/lang/Object;)V\n    .locals 0\n    monitor-exit p0\n    return-void\n.end method\n",
        );
        let r = verify(&exit_only);
        assert!(r.violations.iter().any(|v| v.rule == RULE_MONITOR_BALANCE));
    }

    #[test]
    fn monitor_loop_reaches_fixpoint() {
        let p = program(
            ".class public LA;\n.super Ljava/lang/Object;\n.method public static m(Ljava/lang/Object;I)V\n    .locals 1\n    const/4 v0, 0x0\n:loop\n    monitor-enter p0\n    monitor-exit p0\n    add-int/lit8 v0, v0, 0x1\n    if-lt v0, p1, :loop\n    return-void\n.end method\n",
        );
        let r = verify(&p);
        assert!(r.is_ok(), "{:?}", r.violations);
    }
}
