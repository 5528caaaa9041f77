//! Canonical smali text emission, the inverse of the parser.
//!
//! Formatting rules: 4-space indent inside methods, one instruction per
//! line, labels unindented, integer literals printed in hex.

use crate::model::*;
use crate::opcodes::OperandSpec;
use std::fmt::Write as _;

pub fn format_literal(v: i64) -> String {
    if v < 0 {
        format!("-0x{:x}", (v as i128).unsigned_abs())
    } else {
        format!("0x{v:x}")
    }
}

fn flags_prefix(flags: AccessFlags) -> String {
    let names = flags.names();
    if names.is_empty() {
        String::new()
    } else {
        format!("{} ", names.join(" "))
    }
}

pub fn format_instruction(ins: &Instruction) -> String {
    let mut regs = ins.regs.iter();
    let mut parts: Vec<String> = Vec::new();
    for spec in &ins.op.operands {
        match spec {
            OperandSpec::Reg { .. } => parts.push(regs.next().expect("reg operand").to_string()),
            OperandSpec::RegList => {
                let list: Vec<String> = regs.by_ref().map(|r| r.to_string()).collect();
                parts.push(format!("{{{}}}", list.join(", ")));
            }
            OperandSpec::Lit => parts.push(format_literal(ins.literal.expect("literal operand"))),
            OperandSpec::Label => {
                parts.push(format!(":{}", ins.label.as_ref().expect("label operand")))
            }
            OperandSpec::FieldRef => match ins.sref.as_ref() {
                Some(SymbolicRef::Field { class, name, descriptor }) => {
                    parts.push(format!("{class}->{name}:{descriptor}"))
                }
                _ => panic!("field operand missing"),
            },
            OperandSpec::MethodRef => match ins.sref.as_ref() {
                Some(SymbolicRef::Method { class, name, descriptor }) => {
                    parts.push(format!("{class}->{name}{descriptor}"))
                }
                _ => panic!("method operand missing"),
            },
            OperandSpec::TypeRef => match ins.sref.as_ref() {
                Some(SymbolicRef::Type(t)) => parts.push(t.clone()),
                _ => panic!("type operand missing"),
            },
        }
    }
    if parts.is_empty() {
        ins.op.mnemonic.to_string()
    } else {
        format!("{} {}", ins.op.mnemonic, parts.join(", "))
    }
}

/// Renders one body item to its source lines (without trailing newline).
pub fn format_body_item(item: &BodyItem) -> Vec<String> {
    match item {
        BodyItem::Ins(ins) => {
            let mut lines = Vec::new();
            if let Some(origin) = ins.origin {
                lines.push(format!("    .line {origin}"));
            }
            lines.push(format!("    {}", format_instruction(ins)));
            lines
        }
        BodyItem::Label(l) => vec![format!(":{l}")],
        BodyItem::Try(t) => {
            let range = format!("{{:{} .. :{}}} :{}", t.start, t.end, t.handler);
            match &t.exception {
                Some(ty) => vec![format!("    .catch {ty} {range}")],
                None => vec![format!("    .catchall {range}")],
            }
        }
        BodyItem::ArrayData { width, values } => {
            let mut lines = vec![format!("    .array-data {width}")];
            for v in values {
                lines.push(format!("        {}", format_literal(*v)));
            }
            lines.push("    .end array-data".to_string());
            lines
        }
        BodyItem::PackedSwitch { first_key, targets } => {
            let mut lines = vec![format!("    .packed-switch {}", format_literal(*first_key))];
            for t in targets {
                lines.push(format!("        :{t}"));
            }
            lines.push("    .end packed-switch".to_string());
            lines
        }
        BodyItem::SparseSwitch { entries } => {
            let mut lines = vec!["    .sparse-switch".to_string()];
            for (k, t) in entries {
                lines.push(format!("        {} -> :{t}", format_literal(*k)));
            }
            lines.push("    .end sparse-switch".to_string());
            lines
        }
    }
}

pub fn print_class(class: &SmaliClass) -> String {
    let mut out = String::new();
    writeln!(
        out,
        ".class {}{}",
        flags_prefix(class.access_flags),
        class.name
    )
    .unwrap();
    writeln!(out, ".super {}", class.super_name).unwrap();
    if !class.fields.is_empty() {
        writeln!(out).unwrap();
        for f in &class.fields {
            writeln!(
                out,
                ".field {}{}:{}",
                flags_prefix(f.access_flags),
                f.name,
                f.descriptor
            )
            .unwrap();
        }
    }
    for m in &class.methods {
        writeln!(out).unwrap();
        writeln!(out, ".method {}{}", flags_prefix(m.access_flags), m.sig()).unwrap();
        writeln!(out, "    .locals {}", m.locals).unwrap();
        for item in &m.body {
            for line in format_body_item(item) {
                writeln!(out, "{line}").unwrap();
            }
        }
        writeln!(out, ".end method").unwrap();
    }
    out
}

/// Relative source path for a class: package directories mirror the name.
pub fn class_path(class_name: &str) -> String {
    let trimmed = class_name.trim_start_matches('L').trim_end_matches(';');
    format!("{trimmed}.smali")
}

/// Prints every class of a program as (relative path, text) pairs.
pub fn print_program(program: &SmaliProgram) -> Vec<(String, String)> {
    program
        .classes
        .iter()
        .map(|c| (class_path(&c.name), print_class(c)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_sources;

    const SRC: &str = r#"
.class public Lcom/demo/Activity;
.super Ljava/lang/Object;

.field private static count:I

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
"#;

    fn reparse(files: Vec<(String, String)>) -> SmaliProgram {
        let out = parse_sources(&files);
        for d in &out.diagnostics {
            if d.severity == crate::parse::Severity::Error {
                panic!("reparse error: {d}");
            }
        }
        out.program.unwrap()
    }

    #[test]
    fn roundtrip_on_model() {
        let p = reparse(vec![("com/demo/Activity.smali".into(), SRC.into())]);
        let printed = print_program(&p);
        assert_eq!(printed[0].0, "com/demo/Activity.smali");
        let p2 = reparse(printed);
        assert_eq!(p, p2);
    }

    #[test]
    fn print_is_idempotent_on_text() {
        let p = reparse(vec![("com/demo/Activity.smali".into(), SRC.into())]);
        let once = print_program(&p);
        let twice = print_program(&reparse(once.clone()));
        assert_eq!(once, twice);
    }

    #[test]
    fn empty_program_prints_no_files() {
        let p = SmaliProgram::new(vec![]);
        assert!(print_program(&p).is_empty());
    }

    #[test]
    fn literals_print_in_hex() {
        assert_eq!(format_literal(0), "0x0");
        assert_eq!(format_literal(26), "0x1a");
        assert_eq!(format_literal(-5), "-0x5");
    }
}
