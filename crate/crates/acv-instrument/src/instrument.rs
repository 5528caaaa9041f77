//! Probe insertion: transforms a program into an instrumented program plus
//! its probe map.
//!
//! Per method: three fresh registers are allocated on top of the frame, a
//! prologue copies every parameter back to the absolute register it occupied
//! in the original frame (all `pN` references are rewritten to those `vN`
//! aliases), an inline entry probe marks the method, and at instruction
//! granularity each traceable instruction gets a `goto/32` trampoline to an
//! appended probe block. Trampolines keep probe stores out of positions the
//! verifier constrains (between paired instructions, inside monitor
//! regions).

use crate::probemap::*;
use acv_smali::model::{
    classify, frame_layout, is_object_type, AccessFlags, BodyItem, FieldDecl, Instruction,
    RegRef, SmaliClass, SmaliMethod, SmaliProgram, MAX_FRAME,
};
use acv_smali::opcodes::{BranchFlag, InstructionKind};
use thiserror::Error;

pub const STORAGE_CLASS: &str = "Lacv/StorageClass;";

#[derive(Debug, Error)]
pub enum InstrumentError {
    #[error("frame overflow in {0:?}")]
    FrameOverflow(Vec<(String, String)>),
    #[error("input program already contains {STORAGE_CLASS}")]
    StorageClassPresent,
}

#[derive(Debug)]
pub struct Instrumented {
    pub program: SmaliProgram,
    pub probe_map: ProbeMap,
}

/// Per-program instruction-count inflation.
#[derive(Debug, Clone, PartialEq)]
pub struct InflationStats {
    pub original_instructions: usize,
    pub instrumented_instructions: usize,
    pub ratio: f64,
}

pub fn inflation(original: &SmaliProgram, instrumented: &SmaliProgram) -> InflationStats {
    let original_instructions = original.instruction_count();
    let instrumented_instructions = instrumented.instruction_count();
    InflationStats {
        original_instructions,
        instrumented_instructions,
        ratio: if original_instructions == 0 {
            1.0
        } else {
            instrumented_instructions as f64 / original_instructions as f64
        },
    }
}

/// An instruction is traceable unless it terminates flow or is the first of
/// a paired sequence.
pub fn traceable(instr: &Instruction) -> bool {
    !matches!(
        classify(instr),
        InstructionKind::FlowTerminator | InstructionKind::PairedFirst
    )
}

/// Probes for diverting instructions (if-*, switches) sit directly before
/// them, so the probe fires regardless of which way the branch goes. All
/// other probes sit directly after their instruction.
fn probe_site_before(instr: &Instruction) -> bool {
    instr.op.branch != BranchFlag::None
}

/// Flattens `Lcom/demo/Activity;` to `com_demo_Activity`.
fn flat_class_name(name: &str) -> String {
    name.trim_start_matches('L')
        .trim_end_matches(';')
        .replace('/', "_")
}

fn const_index(reg: u16, value: usize) -> Instruction {
    let mnemonic = if value <= 0x7fff { "const/16" } else { "const" };
    Instruction::of(mnemonic).v(reg).lit(value as i64)
}

pub fn instrument(
    program: &SmaliProgram,
    granularity: Granularity,
) -> Result<Instrumented, InstrumentError> {
    if program.find_class(STORAGE_CLASS).is_some() {
        return Err(InstrumentError::StorageClassPresent);
    }
    let mut overflows = Vec::new();
    for class in &program.classes {
        for method in &class.methods {
            if method.frame_size() + 3 > MAX_FRAME {
                overflows.push((class.name.clone(), method.sig().to_string()));
            }
        }
    }
    if !overflows.is_empty() {
        return Err(InstrumentError::FrameOverflow(overflows));
    }

    let mut classes = Vec::new();
    let mut map_classes = Vec::new();
    for class in &program.classes {
        let storage_field = format!("{}0", flat_class_name(&class.name));
        let mut probes: Vec<ProbeTarget> = Vec::new();
        let mut per_method = Vec::new();
        let mut methods = Vec::new();
        for method in &class.methods {
            let (new_method, counts) = instrument_method(
                class,
                method,
                granularity,
                &storage_field,
                &mut probes,
            );
            per_method.push((method.sig(), counts));
            methods.push(new_method);
        }
        let traceable_count = per_method.iter().map(|(_, c)| c.traceable).sum();
        let untraceable_count = per_method.iter().map(|(_, c)| c.untraceable).sum();
        classes.push(SmaliClass { methods, ..class.clone() });
        map_classes.push(ClassProbes {
            name: class.name.clone(),
            storage_field,
            probes,
            traceable_count,
            untraceable_count,
            per_method,
        });
    }
    // keep classes sorted the way the parser merges files, so the
    // instrumented program is stable under print -> parse
    let storage = build_storage_class(&map_classes);
    let at = classes
        .binary_search_by(|c: &SmaliClass| c.name.cmp(&storage.name))
        .unwrap_or_else(|i| i);
    classes.insert(at, storage);
    Ok(Instrumented {
        program: SmaliProgram::new(classes),
        probe_map: ProbeMap { granularity, classes: map_classes },
    })
}

fn instrument_method(
    class: &SmaliClass,
    method: &SmaliMethod,
    granularity: Granularity,
    storage_field: &str,
    probes: &mut Vec<ProbeTarget>,
) -> (SmaliMethod, MethodCounts) {
    let layout = frame_layout(method, &class.name).expect("frame checked before");
    let frame = layout.total as u16;
    let (reg_arr, reg_true, reg_idx) = (frame, frame + 1, frame + 2);
    let old_locals = method.locals;
    let sig = method.sig();

    // probe plan: instruction probes in body order, then the entry probe
    let mut counts = MethodCounts::default();
    let mut instr_probes: Vec<(usize, usize)> = Vec::new(); // (body index, probe index)
    for (oi, item) in method.body.iter().enumerate() {
        let ins = match item.as_ins() {
            Some(i) => i,
            None => continue,
        };
        if traceable(ins) {
            counts.traceable += 1;
            if granularity == Granularity::Instruction {
                instr_probes.push((oi, probes.len()));
                probes.push(ProbeTarget::Instruction { method: sig.clone(), body_index: oi });
            }
        } else {
            counts.untraceable += 1;
        }
    }
    let entry_index = probes.len();
    probes.push(ProbeTarget::MethodEntry { method: sig.clone() });

    let mut body: Vec<BodyItem> = Vec::new();
    // parameter-copy prologue: pN values return to their original absolute
    // registers, freeing the top of the grown frame for the probe registers
    for param in &layout.params {
        let mnemonic = if param.width == 2 {
            "move-wide/16"
        } else if is_object_type(&param.descriptor) {
            "move-object/16"
        } else {
            "move/16"
        };
        body.push(BodyItem::Ins(
            Instruction::of(mnemonic).v(param.v).p(param.p),
        ));
    }
    body.push(BodyItem::Ins(
        Instruction::of("sget-object")
            .v(reg_arr)
            .field(STORAGE_CLASS, storage_field, "[Z"),
    ));
    body.push(BodyItem::Ins(Instruction::of("const/16").v(reg_true).lit(1)));
    body.push(BodyItem::Ins(const_index(reg_idx, entry_index)));
    body.push(BodyItem::Ins(
        Instruction::of("aput-boolean").v(reg_true).v(reg_arr).v(reg_idx),
    ));

    let probe_at = |oi: usize| {
        instr_probes
            .iter()
            .find(|(i, _)| *i == oi)
            .map(|(_, k)| *k)
    };
    let push_site = |body: &mut Vec<BodyItem>, k: usize| {
        body.push(BodyItem::Ins(
            Instruction::of("goto/32").to_label(&format!("goto_hack_{k}")),
        ));
        body.push(BodyItem::Label(format!("goto_hack_back_{k}")));
    };

    for (oi, item) in method.body.iter().enumerate() {
        match item {
            BodyItem::Ins(ins) => {
                let mut rewritten = ins.clone();
                rewritten.regs = rewritten
                    .regs
                    .iter()
                    .map(|r| match *r {
                        RegRef::P(k) => RegRef::V(old_locals + k),
                        v => v,
                    })
                    .collect();
                rewritten.origin = Some(oi as u32);
                let probe = probe_at(oi);
                match probe {
                    Some(k) if probe_site_before(ins) => {
                        push_site(&mut body, k);
                        body.push(BodyItem::Ins(rewritten));
                    }
                    Some(k) => {
                        body.push(BodyItem::Ins(rewritten));
                        push_site(&mut body, k);
                    }
                    None => body.push(BodyItem::Ins(rewritten)),
                }
            }
            other => body.push(other.clone()),
        }
    }

    // appended probe blocks
    for &(_, k) in &instr_probes {
        body.push(BodyItem::Label(format!("goto_hack_{k}")));
        body.push(BodyItem::Ins(const_index(reg_idx, k)));
        body.push(BodyItem::Ins(
            Instruction::of("aput-boolean").v(reg_true).v(reg_arr).v(reg_idx),
        ));
        body.push(BodyItem::Ins(
            Instruction::of("goto/32").to_label(&format!("goto_hack_back_{k}")),
        ));
    }

    (
        SmaliMethod {
            locals: old_locals + 3,
            body,
            ..method.clone()
        },
        counts,
    )
}

fn build_storage_class(map_classes: &[ClassProbes]) -> SmaliClass {
    let mut fields = Vec::new();
    let mut body = Vec::new();
    for c in map_classes {
        fields.push(FieldDecl {
            name: c.storage_field.clone(),
            descriptor: "[Z".into(),
            access_flags: AccessFlags::PUBLIC
                .union(AccessFlags::STATIC)
                .union(AccessFlags::SYNTHETIC),
        });
        body.push(BodyItem::Ins(const_index(0, c.probe_count())));
        body.push(BodyItem::Ins(Instruction::of("new-array").v(0).v(0).type_ref("[Z")));
        body.push(BodyItem::Ins(
            Instruction::of("sput-object")
                .v(0)
                .field(STORAGE_CLASS, &c.storage_field, "[Z"),
        ));
    }
    body.push(BodyItem::Ins(Instruction::of("return-void")));
    SmaliClass {
        name: STORAGE_CLASS.into(),
        super_name: "Ljava/lang/Object;".into(),
        access_flags: AccessFlags::PUBLIC.union(AccessFlags::SYNTHETIC),
        fields,
        methods: vec![SmaliMethod {
            name: "<clinit>".into(),
            param_types: Vec::new(),
            return_type: "V".into(),
            access_flags: AccessFlags::STATIC.union(AccessFlags::CONSTRUCTOR),
            locals: 1,
            body,
        }],
    }
}
