use acv_instrument::*;
use acv_smali::model::{classify, BodyItem, RegRef};
use acv_smali::opcodes::InstructionKind;
use acv_smali::parse::parse_single;
use acv_smali::print::print_program;
use acv_smali::verify::verify;
use acv_smali::SmaliProgram;

const ACTIVITY: &str = r#"
.class public Lcom/demo/Activity;
.super Ljava/lang/Object;

.method private updateElements()V
    .locals 1
    const/4 v0, 0x0
:goto_0
    if-nez v0, :cond_0
    invoke-direct {p0}, Lcom/demo/Activity;->updateAllElements()Z
    move-result v0
    goto :goto_0
:cond_0
    return-void
.end method

.method private updateAllElements()Z
    .locals 1
    const/4 v0, 0x1
    return v0
.end method
"#;

fn activity_fixture() -> SmaliProgram {
    let out = parse_single("com/demo/Activity.smali", ACTIVITY);
    out.program.expect("fixture parses")
}

#[test]
fn update_elements_probe_structure() {
    let p = activity_fixture();
    let out = instrument(&p, Granularity::Instruction).unwrap();
    let class = out.program.find_class("Lcom/demo/Activity;").unwrap();
    let m = &class.methods[0];
    assert_eq!(m.name, "updateElements");
    // locals grow by exactly 3
    assert_eq!(m.locals, 4);

    // prologue: p0 copied back to its original absolute register v1
    let first = m.body[0].as_ins().unwrap();
    assert_eq!(first.mnemonic(), "move-object/16");
    assert_eq!(first.regs, vec![RegRef::V(1), RegRef::P(0)]);

    // inline entry probe: sget-object / const true / const index / aput-boolean
    let probe: Vec<&str> = m.body[1..5]
        .iter()
        .map(|b| b.as_ins().unwrap().mnemonic())
        .collect();
    assert_eq!(probe, vec!["sget-object", "const/16", "const/16", "aput-boolean"]);

    // probe registers are the top three of the new frame (frame was 2)
    let aput = m.body[4].as_ins().unwrap();
    assert_eq!(aput.regs, vec![RegRef::V(3), RegRef::V(2), RegRef::V(4)]);

    // original instructions keep their register indices; p0 became v1
    let invoke = m
        .body
        .iter()
        .filter_map(|b| b.as_ins())
        .find(|i| i.mnemonic() == "invoke-direct")
        .unwrap();
    assert_eq!(invoke.regs, vec![RegRef::V(1)]);

    // traceable instructions of the original method: const/4, if-nez,
    // move-result -> three trampoline blocks
    let hacks = m
        .body
        .iter()
        .filter(|b| matches!(b, BodyItem::Label(l) if l.starts_with("goto_hack_") && !l.contains("back")))
        .count();
    assert_eq!(hacks, 3);

    // a trampoline site directly precedes if-nez so the probe fires on both
    // branch outcomes
    let if_pos = m
        .body
        .iter()
        .position(|b| b.as_ins().is_some_and(|i| i.mnemonic() == "if-nez"))
        .unwrap();
    assert!(matches!(&m.body[if_pos - 1], BodyItem::Label(l) if l.starts_with("goto_hack_back_")));
    assert_eq!(m.body[if_pos - 2].as_ins().unwrap().mnemonic(), "goto/32");
}

#[test]
fn probe_count_is_traceable_plus_methods() {
    let p = activity_fixture();
    let out = instrument(&p, Granularity::Instruction).unwrap();
    let cp = out.probe_map.class("Lcom/demo/Activity;").unwrap();
    // updateElements: 3 traceable; updateAllElements: 1 traceable; 2 methods
    assert_eq!(cp.traceable_count, 4);
    assert_eq!(cp.untraceable_count, 4);
    assert_eq!(cp.probe_count(), 4 + 2);
    // indices dense and unique by construction of the vector; entry probes
    // follow each method's instruction probes
    assert!(matches!(&cp.probes[3], ProbeTarget::MethodEntry { method } if method.name == "updateElements"));
}

#[test]
fn method_granularity_emits_entry_probes_only() {
    let p = activity_fixture();
    let out = instrument(&p, Granularity::Method).unwrap();
    let cp = out.probe_map.class("Lcom/demo/Activity;").unwrap();
    assert_eq!(cp.probe_count(), 2);
    assert!(cp
        .probes
        .iter()
        .all(|t| matches!(t, ProbeTarget::MethodEntry { .. })));
    let m = &out.program.find_class("Lcom/demo/Activity;").unwrap().methods[0];
    assert!(!m
        .body
        .iter()
        .any(|b| matches!(b, BodyItem::Label(l) if l.starts_with("goto_hack"))));
}

#[test]
fn instrumented_program_verifies_and_roundtrips() {
    let p = activity_fixture();
    for g in [Granularity::Instruction, Granularity::Method, Granularity::Class] {
        let out = instrument(&p, g).unwrap();
        let r = verify(&out.program);
        assert!(r.is_ok(), "granularity {g}: {:?}", r.violations);
        // instrumented output survives print -> parse
        let files = print_program(&out.program);
        let reparsed = acv_smali::parse::parse_sources(&files);
        assert_eq!(reparsed.program.unwrap(), out.program);
    }
}

#[test]
fn register_safety_only_probes_touch_top_registers() {
    let p = activity_fixture();
    let out = instrument(&p, Granularity::Instruction).unwrap();
    let class = out.program.find_class("Lcom/demo/Activity;").unwrap();
    for m in &class.methods {
        let top = (m.frame_size() - 3) as u16;
        for item in &m.body {
            let Some(ins) = item.as_ins() else { continue };
            // original instructions carry an origin; probe code does not
            if ins.origin.is_some() {
                for r in &ins.regs {
                    assert!(m.resolve_reg(*r) < top as u32, "{ins:?}");
                }
            }
        }
    }
}

#[test]
fn frame_overflow_fails_cleanly() {
    let src = ".class public LBig;\n.super Ljava/lang/Object;\n.method public static m(JJ)V\n    .locals 250\n    return-void\n.end method\n";
    let p = parse_single("Big.smali", src).program.unwrap();
    // frame = 254, instrumentation needs 257
    match instrument(&p, Granularity::Instruction) {
        Err(InstrumentError::FrameOverflow(v)) => {
            assert_eq!(v[0].0, "LBig;");
        }
        other => panic!("expected FrameOverflow, got {other:?}"),
    }
}

#[test]
fn inflation_identity_and_ordering() {
    let p = activity_fixture();
    let same = inflation(&p, &p);
    assert_eq!(same.ratio, 1.0);
    let at_method = instrument(&p, Granularity::Method).unwrap();
    let at_instr = instrument(&p, Granularity::Instruction).unwrap();
    let rm = inflation(&p, &at_method.program);
    let ri = inflation(&p, &at_instr.program);
    assert!(rm.ratio >= 1.0);
    assert!(rm.ratio < ri.ratio);
}

#[test]
fn paired_sequences_stay_adjacent() {
    let p = activity_fixture();
    let out = instrument(&p, Granularity::Instruction).unwrap();
    let class = out.program.find_class("Lcom/demo/Activity;").unwrap();
    for m in &class.methods {
        let instrs: Vec<_> = m.body.iter().filter_map(|b| b.as_ins()).collect();
        for w in instrs.windows(2) {
            if classify(w[0]) == InstructionKind::PairedFirst {
                assert_eq!(classify(w[1]), InstructionKind::PairedSecond);
            }
        }
    }
}
