//! Parser from smali text to the program model.
//!
//! Input is the apktool layout: one class per `*.smali` file. The parser is
//! line based; errors are reported as diagnostics with source spans and
//! suppress the program, warnings (skipped directives) do not.

use crate::model::*;
use crate::opcodes::{self, OperandSpec};
use std::collections::{HashMap, HashSet};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceSpan {
    pub file: String,
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseDiagnostic {
    pub span: SourceSpan,
    pub severity: Severity,
    pub message: String,
}

impl std::fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(
            f,
            "{}:{}:{}: {}: {}",
            self.span.file, self.span.line, self.span.column, sev, self.message
        )
    }
}

#[derive(Debug)]
pub struct ParseOutcome {
    /// Present iff no error-severity diagnostic was produced.
    pub program: Option<SmaliProgram>,
    pub diagnostics: Vec<ParseDiagnostic>,
}

impl ParseOutcome {
    pub fn errors(&self) -> impl Iterator<Item = &ParseDiagnostic> {
        self.diagnostics
            .iter()
            .filter(|d| d.severity == Severity::Error)
    }
}

/// Parses a set of (path, text) smali sources into one program. Classes are
/// merged in file path order so the result does not depend on input order.
pub fn parse_sources(sources: &[(String, String)]) -> ParseOutcome {
    let mut sorted: Vec<&(String, String)> = sources.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));

    let mut diagnostics = Vec::new();
    let mut classes = Vec::new();
    let mut seen_names: HashMap<String, String> = HashMap::new();
    for (path, text) in sorted {
        let mut parser = ClassParser::new(path, text);
        if let Some(class) = parser.parse() {
            if let Some(prev) = seen_names.get(&class.name) {
                diagnostics.push(ParseDiagnostic {
                    span: SourceSpan { file: path.clone(), line: 1, column: 1 },
                    severity: Severity::Error,
                    message: format!("duplicate class {} (also defined in {})", class.name, prev),
                });
            } else {
                seen_names.insert(class.name.clone(), path.clone());
                classes.push(class);
            }
        }
        diagnostics.extend(parser.diagnostics);
    }
    let has_errors = diagnostics.iter().any(|d| d.severity == Severity::Error);
    ParseOutcome {
        program: if has_errors { None } else { Some(SmaliProgram::new(classes)) },
        diagnostics,
    }
}

/// Convenience wrapper for a single in-memory class source.
pub fn parse_single(path: &str, text: &str) -> ParseOutcome {
    parse_sources(&[(path.to_string(), text.to_string())])
}

struct ClassParser<'a> {
    file: String,
    lines: Vec<&'a str>,
    pos: usize,
    diagnostics: Vec<ParseDiagnostic>,
    failed: bool,
}

fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_str = !in_str,
            '#' if !in_str => return &line[..i],
            _ => {}
        }
    }
    line
}

fn parse_int(tok: &str) -> Option<i64> {
    let (neg, rest) = match tok.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, tok),
    };
    let v = if let Some(hex) = rest.strip_prefix("0x").or_else(|| rest.strip_prefix("0X")) {
        i64::from_str_radix(hex, 16).ok()?
    } else {
        rest.parse::<i64>().ok()?
    };
    Some(if neg { -v } else { v })
}

fn parse_reg(tok: &str) -> Option<RegRef> {
    let (kind, num) = tok.split_at(1);
    let n: u16 = num.parse().ok()?;
    match kind {
        "v" => Some(RegRef::V(n)),
        "p" => Some(RegRef::P(n)),
        _ => None,
    }
}

/// Splits an operand string on top-level commas ('{...}' groups stay whole).
fn split_operands(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut cur = String::new();
    for c in s.chars() {
        match c {
            '{' => {
                depth += 1;
                cur.push(c);
            }
            '}' => {
                depth = depth.saturating_sub(1);
                cur.push(c);
            }
            ',' if depth == 0 => {
                out.push(cur.trim().to_string());
                cur.clear();
            }
            _ => cur.push(c),
        }
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

fn parse_member_ref(tok: &str) -> Option<(String, String)> {
    let (class, rest) = tok.split_once("->")?;
    if !class.starts_with('L') || !class.ends_with(';') {
        return None;
    }
    Some((class.to_string(), rest.to_string()))
}

impl<'a> ClassParser<'a> {
    fn new(file: &str, text: &'a str) -> Self {
        ClassParser {
            file: file.to_string(),
            lines: text.lines().collect(),
            pos: 0,
            diagnostics: Vec::new(),
            failed: false,
        }
    }

    fn span(&self, line: usize) -> SourceSpan {
        SourceSpan { file: self.file.clone(), line: line + 1, column: 1 }
    }

    fn error(&mut self, line: usize, msg: impl Into<String>) {
        self.failed = true;
        self.diagnostics.push(ParseDiagnostic {
            span: self.span(line),
            severity: Severity::Error,
            message: msg.into(),
        });
    }

    fn warn(&mut self, line: usize, msg: impl Into<String>) {
        self.diagnostics.push(ParseDiagnostic {
            span: self.span(line),
            severity: Severity::Warning,
            message: msg.into(),
        });
    }

    fn next_line(&mut self) -> Option<(usize, String)> {
        while self.pos < self.lines.len() {
            let idx = self.pos;
            self.pos += 1;
            let text = strip_comment(self.lines[idx]).trim().to_string();
            if !text.is_empty() {
                return Some((idx, text));
            }
        }
        None
    }

    fn parse(&mut self) -> Option<SmaliClass> {
        let mut name = None;
        let mut super_name = "Ljava/lang/Object;".to_string();
        let mut class_flags = AccessFlags::default();
        let mut fields = Vec::new();
        let mut methods: Vec<SmaliMethod> = Vec::new();
        let mut method_sigs: HashSet<MethodSig> = HashSet::new();

        while let Some((idx, line)) = self.next_line() {
            let mut toks = line.split_whitespace();
            let head = toks.next().unwrap();
            match head {
                ".class" => {
                    let rest: Vec<&str> = toks.collect();
                    match rest.split_last() {
                        Some((desc, flags)) if desc.starts_with('L') && desc.ends_with(';') => {
                            name = Some(desc.to_string());
                            for f in flags {
                                match AccessFlags::from_name(f) {
                                    Some(bit) => class_flags = class_flags.union(bit),
                                    None => self.warn(idx, format!("unknown access flag `{f}`")),
                                }
                            }
                        }
                        _ => self.error(idx, "malformed .class directive"),
                    }
                }
                ".super" => match toks.next() {
                    Some(d) if d.starts_with('L') && d.ends_with(';') => {
                        super_name = d.to_string();
                    }
                    _ => self.error(idx, "malformed .super directive"),
                },
                ".field" => {
                    if let Some(field) = self.parse_field(idx, &line) {
                        fields.push(field);
                    }
                }
                ".method" => {
                    if let Some(m) = self.parse_method(idx, &line) {
                        if !method_sigs.insert(m.sig()) {
                            self.error(idx, format!("duplicate method {}", m.sig()));
                        } else {
                            methods.push(m);
                        }
                    }
                }
                ".annotation" => {
                    self.warn(idx, "skipping .annotation block");
                    while let Some((_, l)) = self.next_line() {
                        if l.starts_with(".end annotation") {
                            break;
                        }
                    }
                }
                other if other.starts_with('.') => {
                    self.warn(idx, format!("skipping unknown directive `{other}`"));
                }
                _ => self.error(idx, format!("unexpected top-level content `{line}`")),
            }
        }

        let name = match name {
            Some(n) => n,
            None => {
                self.error(0, "missing .class directive");
                return None;
            }
        };
        if self.failed {
            return None;
        }
        Some(SmaliClass {
            name,
            super_name,
            access_flags: class_flags,
            fields,
            methods,
        })
    }

    fn parse_field(&mut self, idx: usize, line: &str) -> Option<FieldDecl> {
        // .field <flags> name:descriptor
        let rest = line.trim_start_matches(".field").trim();
        let toks: Vec<&str> = rest.split_whitespace().collect();
        let (decl, flags) = toks.split_last()?;
        let mut access_flags = AccessFlags::default();
        for f in flags {
            match AccessFlags::from_name(f) {
                Some(bit) => access_flags = access_flags.union(bit),
                None => self.warn(idx, format!("unknown access flag `{f}`")),
            }
        }
        match decl.split_once(':') {
            Some((fname, desc)) if !fname.is_empty() && !desc.is_empty() => Some(FieldDecl {
                name: fname.to_string(),
                descriptor: desc.to_string(),
                access_flags,
            }),
            _ => {
                self.error(idx, "malformed .field directive");
                None
            }
        }
    }

    fn parse_method(&mut self, start_idx: usize, header: &str) -> Option<SmaliMethod> {
        let rest = header.trim_start_matches(".method").trim();
        let toks: Vec<&str> = rest.split_whitespace().collect();
        let (sig, flags) = match toks.split_last() {
            Some(v) => v,
            None => {
                self.error(start_idx, "malformed .method directive");
                return None;
            }
        };
        let mut access_flags = AccessFlags::default();
        for f in flags {
            match AccessFlags::from_name(f) {
                Some(bit) => access_flags = access_flags.union(bit),
                None => self.warn(start_idx, format!("unknown access flag `{f}`")),
            }
        }
        let (name, params, ret) = match sig.split_once('(').and_then(|(n, r)| {
            r.split_once(')').map(|(p, ret)| (n, p, ret))
        }) {
            Some(v) if !v.0.is_empty() && !v.2.is_empty() => v,
            _ => {
                self.error(start_idx, format!("malformed method signature `{sig}`"));
                return None;
            }
        };
        let param_types = match parse_type_list(params) {
            Ok(t) => t,
            Err(e) => {
                self.error(start_idx, e.to_string());
                return None;
            }
        };

        let mut method = SmaliMethod {
            name: name.to_string(),
            param_types,
            return_type: ret.to_string(),
            access_flags,
            locals: 0,
            body: Vec::new(),
        };
        let mut saw_frame_directive = false;
        let mut pending_origin: Option<u32> = None;
        let mut defined_labels: HashMap<String, usize> = HashMap::new();
        let mut referenced_labels: Vec<(String, usize)> = Vec::new();

        while let Some((idx, line)) = self.next_line() {
            if line == ".end method" {
                // labels must resolve and be unique
                for (label, at) in &referenced_labels {
                    if !defined_labels.contains_key(label) {
                        self.error(*at, format!("unresolved label :{label}"));
                    }
                }
                return if self.failed { None } else { Some(method) };
            }
            if let Some(l) = line.strip_prefix(':') {
                let label = l.split_whitespace().next().unwrap_or("").to_string();
                if label.is_empty() {
                    self.error(idx, "empty label name");
                } else if defined_labels.insert(label.clone(), idx).is_some() {
                    self.error(idx, format!("label :{label} defined more than once"));
                } else {
                    method.body.push(BodyItem::Label(label));
                }
                continue;
            }
            let head = line.split_whitespace().next().unwrap();
            match head {
                ".locals" => {
                    match line.split_whitespace().nth(1).and_then(|t| t.parse::<u16>().ok()) {
                        Some(n) => {
                            method.locals = n;
                            saw_frame_directive = true;
                        }
                        None => self.error(idx, "malformed .locals directive"),
                    }
                }
                ".registers" => {
                    // normalized to .locals: registers = locals + param width
                    match line.split_whitespace().nth(1).and_then(|t| t.parse::<u32>().ok()) {
                        Some(n) => {
                            let params = method.param_units();
                            if n < params {
                                self.error(idx, format!(
                                    ".registers {n} is smaller than the parameter width {params}"
                                ));
                            } else {
                                method.locals = (n - params) as u16;
                                saw_frame_directive = true;
                            }
                        }
                        None => self.error(idx, "malformed .registers directive"),
                    }
                }
                ".line" => {
                    match line.split_whitespace().nth(1).and_then(|t| t.parse::<u32>().ok()) {
                        Some(n) => pending_origin = Some(n),
                        None => self.error(idx, "malformed .line directive"),
                    }
                }
                ".catch" | ".catchall" => {
                    if let Some(t) = self.parse_catch(idx, &line, head == ".catchall") {
                        referenced_labels.push((t.start.clone(), idx));
                        referenced_labels.push((t.end.clone(), idx));
                        referenced_labels.push((t.handler.clone(), idx));
                        method.body.push(BodyItem::Try(t));
                    }
                }
                ".array-data" => {
                    if let Some(item) = self.parse_array_data(idx, &line) {
                        method.body.push(item);
                    }
                }
                ".packed-switch" => {
                    if let Some(item) = self.parse_packed_switch(idx, &line, &mut referenced_labels)
                    {
                        method.body.push(item);
                    }
                }
                ".sparse-switch" => {
                    if let Some(item) = self.parse_sparse_switch(idx, &mut referenced_labels) {
                        method.body.push(item);
                    }
                }
                ".annotation" => {
                    self.warn(idx, "skipping .annotation block");
                    while let Some((_, l)) = self.next_line() {
                        if l.starts_with(".end annotation") {
                            break;
                        }
                    }
                }
                d if d.starts_with('.') => {
                    self.warn(idx, format!("skipping unknown directive `{d}`"));
                }
                _ => {
                    if let Some(mut ins) = self.parse_instruction(idx, &line) {
                        ins.origin = pending_origin.take();
                        if let Some(l) = &ins.label {
                            referenced_labels.push((l.clone(), idx));
                        }
                        method.body.push(BodyItem::Ins(ins));
                    }
                }
            }
        }
        self.error(start_idx, "missing .end method");
        let _ = saw_frame_directive;
        None
    }

    fn parse_catch(&mut self, idx: usize, line: &str, catchall: bool) -> Option<TryDirective> {
        // .catch Ltype; {:start .. :end} :handler   /   .catchall {:s .. :e} :h
        let rest = if catchall {
            line.trim_start_matches(".catchall").trim()
        } else {
            line.trim_start_matches(".catch").trim()
        };
        let (exception, rest) = if catchall {
            (None, rest)
        } else {
            let (ty, r) = rest.split_once(' ')?;
            if !ty.starts_with('L') || !ty.ends_with(';') {
                self.error(idx, "malformed .catch exception type");
                return None;
            }
            (Some(ty.to_string()), r.trim())
        };
        let inner = rest.strip_prefix('{').and_then(|r| r.split_once('}'));
        let (range, handler) = match inner {
            Some((range, h)) => (range.trim(), h.trim()),
            None => {
                self.error(idx, "malformed catch range");
                return None;
            }
        };
        let parts: Vec<&str> = range.split("..").map(|s| s.trim()).collect();
        let (start, end) = match parts.as_slice() {
            [s, e] if s.starts_with(':') && e.starts_with(':') => (&s[1..], &e[1..]),
            _ => {
                self.error(idx, "malformed catch range");
                return None;
            }
        };
        if !handler.starts_with(':') {
            self.error(idx, "malformed catch handler label");
            return None;
        }
        Some(TryDirective {
            start: start.to_string(),
            end: end.to_string(),
            exception,
            handler: handler[1..].to_string(),
        })
    }

    fn parse_array_data(&mut self, idx: usize, line: &str) -> Option<BodyItem> {
        let width = match line.split_whitespace().nth(1).and_then(|t| t.parse::<u8>().ok()) {
            Some(w) if matches!(w, 1 | 2 | 4 | 8) => w,
            _ => {
                self.error(idx, "malformed .array-data width");
                return None;
            }
        };
        let mut values = Vec::new();
        while let Some((vidx, l)) = self.next_line() {
            if l.starts_with(".end array-data") {
                return Some(BodyItem::ArrayData { width, values });
            }
            for tok in l.split_whitespace() {
                match parse_int(tok) {
                    Some(v) => values.push(v),
                    None => self.error(vidx, format!("bad array-data value `{tok}`")),
                }
            }
        }
        self.error(idx, "unterminated .array-data block");
        None
    }

    fn parse_packed_switch(
        &mut self,
        idx: usize,
        line: &str,
        refs: &mut Vec<(String, usize)>,
    ) -> Option<BodyItem> {
        let first_key = match line.split_whitespace().nth(1).and_then(parse_int) {
            Some(k) => k,
            None => {
                self.error(idx, "malformed .packed-switch first key");
                return None;
            }
        };
        let mut targets = Vec::new();
        while let Some((tidx, l)) = self.next_line() {
            if l.starts_with(".end packed-switch") {
                return Some(BodyItem::PackedSwitch { first_key, targets });
            }
            match l.strip_prefix(':') {
                Some(t) => {
                    refs.push((t.to_string(), tidx));
                    targets.push(t.to_string());
                }
                None => self.error(tidx, format!("bad packed-switch target `{l}`")),
            }
        }
        self.error(idx, "unterminated .packed-switch block");
        None
    }

    fn parse_sparse_switch(
        &mut self,
        idx: usize,
        refs: &mut Vec<(String, usize)>,
    ) -> Option<BodyItem> {
        let mut entries = Vec::new();
        while let Some((eidx, l)) = self.next_line() {
            if l.starts_with(".end sparse-switch") {
                return Some(BodyItem::SparseSwitch { entries });
            }
            let parts: Vec<&str> = l.split("->").map(|s| s.trim()).collect();
            match parts.as_slice() {
                [key, target] if target.starts_with(':') => match parse_int(key) {
                    Some(k) => {
                        refs.push((target[1..].to_string(), eidx));
                        entries.push((k, target[1..].to_string()));
                    }
                    None => self.error(eidx, format!("bad sparse-switch key `{key}`")),
                },
                _ => self.error(eidx, format!("bad sparse-switch entry `{l}`")),
            }
        }
        self.error(idx, "unterminated .sparse-switch block");
        None
    }

    fn parse_instruction(&mut self, idx: usize, line: &str) -> Option<Instruction> {
        let (mnemonic, rest) = match line.split_once(char::is_whitespace) {
            Some((m, r)) => (m, r.trim()),
            None => (line, ""),
        };
        let op = match opcodes::lookup(mnemonic) {
            Ok(op) => op,
            Err(e) => {
                self.error(idx, e.to_string());
                return None;
            }
        };
        let tokens = split_operands(rest);
        if tokens.len() != op.operands.len() {
            self.error(
                idx,
                format!(
                    "{mnemonic}: expected {} operand(s), found {}",
                    op.operands.len(),
                    tokens.len()
                ),
            );
            return None;
        }
        let mut ins = Instruction {
            op,
            regs: Vec::new(),
            literal: None,
            label: None,
            sref: None,
            origin: None,
        };
        for (spec, tok) in op.operands.iter().zip(&tokens) {
            match spec {
                OperandSpec::Reg { .. } => match parse_reg(tok) {
                    Some(r) => ins.regs.push(r),
                    None => {
                        self.error(idx, format!("{mnemonic}: bad register `{tok}`"));
                        return None;
                    }
                },
                OperandSpec::RegList => {
                    let inner = match tok.strip_prefix('{').and_then(|t| t.strip_suffix('}')) {
                        Some(i) => i.trim(),
                        None => {
                            self.error(idx, format!("{mnemonic}: bad register list `{tok}`"));
                            return None;
                        }
                    };
                    if !inner.is_empty() {
                        for r in inner.split(',') {
                            match parse_reg(r.trim()) {
                                Some(reg) => ins.regs.push(reg),
                                None => {
                                    self.error(idx, format!("{mnemonic}: bad register `{r}`"));
                                    return None;
                                }
                            }
                        }
                    }
                }
                OperandSpec::Lit => match parse_int(tok) {
                    Some(v) => ins.literal = Some(v),
                    None => {
                        self.error(idx, format!("{mnemonic}: bad literal `{tok}`"));
                        return None;
                    }
                },
                OperandSpec::Label => match tok.strip_prefix(':') {
                    Some(l) => ins.label = Some(l.to_string()),
                    None => {
                        self.error(idx, format!("{mnemonic}: bad label `{tok}`"));
                        return None;
                    }
                },
                OperandSpec::FieldRef => {
                    match parse_member_ref(tok).and_then(|(class, rest)| {
                        rest.split_once(':').map(|(n, d)| (class, n.to_string(), d.to_string()))
                    }) {
                        Some((class, name, descriptor)) => {
                            ins.sref = Some(SymbolicRef::Field { class, name, descriptor });
                        }
                        None => {
                            self.error(idx, format!("{mnemonic}: bad field reference `{tok}`"));
                            return None;
                        }
                    }
                }
                OperandSpec::MethodRef => {
                    match parse_member_ref(tok).and_then(|(class, rest)| {
                        rest.find('(')
                            .map(|i| (class, rest[..i].to_string(), rest[i..].to_string()))
                    }) {
                        Some((class, name, descriptor)) => {
                            ins.sref = Some(SymbolicRef::Method { class, name, descriptor });
                        }
                        None => {
                            self.error(idx, format!("{mnemonic}: bad method reference `{tok}`"));
                            return None;
                        }
                    }
                }
                OperandSpec::TypeRef => {
                    if tok.starts_with('L') && tok.ends_with(';') || tok.starts_with('[') {
                        ins.sref = Some(SymbolicRef::Type(tok.to_string()));
                    } else {
                        self.error(idx, format!("{mnemonic}: bad type descriptor `{tok}`"));
                        return None;
                    }
                }
            }
        }
        Some(ins)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opcodes::InstructionKind;

    const ACTIVITY_SRC: &str = r#"
.class public Lcom/demo/Activity;
.super Ljava/lang/Object;

.method private updateElements()V
    .locals 1
    const/4 v0, 0x0
    .local v0, "updated":Z
:goto_0
    if-nez v0, :cond_0
    invoke-direct {p0}, Lcom/demo/Activity;->updateAllElements()Z
    move-result v0
    goto :goto_0
:cond_0
    return-void
.end method
"#;

    #[test]
    fn parses_activity_fixture_shape() {
        let out = parse_single("Activity.smali", ACTIVITY_SRC);
        let program = out.program.expect("parse ok");
        let class = &program.classes[0];
        assert_eq!(class.name, "Lcom/demo/Activity;");
        let m = &class.methods[0];
        assert_eq!(m.name, "updateElements");
        assert_eq!(m.locals, 1);
        // 6 instructions + 2 labels; the .local directive is skipped
        assert_eq!(m.body.len(), 8);
        assert_eq!(
            m.body.iter().filter(|b| matches!(b, BodyItem::Label(_))).count(),
            2
        );
        assert!(out
            .diagnostics
            .iter()
            .any(|d| d.severity == Severity::Warning && d.message.contains(".local")));
    }

    #[test]
    fn empty_input_is_empty_program() {
        let out = parse_sources(&[]);
        let program = out.program.unwrap();
        assert!(program.classes.is_empty());
        assert!(program.entry_points.is_empty());
    }

    #[test]
    fn unknown_opcode_is_error_with_span() {
        let src = ".class public LA;\n.super Ljava/lang/Object;\n.method public static m()V\n    .locals 0\n    frob-widget v0\n    return-void\n.end method\n";
        let out = parse_single("a.smali", src);
        assert!(out.program.is_none());
        let err = out.errors().next().unwrap();
        assert_eq!(err.span.line, 5);
        assert!(err.message.contains("frob-widget"));
    }

    #[test]
    fn unresolved_label_is_error() {
        let src = ".class public LA;\n.super Ljava/lang/Object;\n.method public static m()V\n    .locals 0\n    goto :nowhere\n.end method\n";
        let out = parse_single("a.smali", src);
        assert!(out.program.is_none());
        assert!(out.errors().any(|d| d.message.contains("nowhere")));
    }

    #[test]
    fn registers_normalizes_to_locals() {
        let src = ".class public LA;\n.super Ljava/lang/Object;\n.method public static m(IJ)V\n    .registers 7\n    return-void\n.end method\n";
        let out = parse_single("a.smali", src);
        let program = out.program.unwrap();
        // 7 registers - 3 parameter units = 4 locals
        assert_eq!(program.classes[0].methods[0].locals, 4);
    }

    #[test]
    fn entry_points_are_public_static() {
        let src = ".class public LA;\n.super Ljava/lang/Object;\n.method public static go()V\n    .locals 0\n    return-void\n.end method\n.method private helper()V\n    .locals 0\n    return-void\n.end method\n";
        let out = parse_single("a.smali", src);
        let program = out.program.unwrap();
        assert_eq!(program.entry_points.len(), 1);
        assert_eq!(program.entry_points[0].1.to_string(), "go()V");
    }

    #[test]
    fn catch_and_switch_directives() {
        let src = r#"
.class public LA;
.super Ljava/lang/Object;
.method public static m(I)V
    .locals 2
:try_start_0
    const/4 v0, 0x0
    div-int v0, p0, v0
:try_end_0
    .catch Ljava/lang/ArithmeticException; {:try_start_0 .. :try_end_0} :handler
    packed-switch p0, :pswitch_data
:handler
    move-exception v1
:pswitch_0
    return-void
:pswitch_data
    .packed-switch 0x0
        :pswitch_0
        :handler
    .end packed-switch
.end method
"#;
        let out = parse_single("a.smali", src);
        for d in out.errors() {
            panic!("unexpected error: {d}");
        }
        let program = out.program.unwrap();
        let body = &program.classes[0].methods[0].body;
        assert!(body.iter().any(|b| matches!(b, BodyItem::Try(_))));
        assert!(body
            .iter()
            .any(|b| matches!(b, BodyItem::PackedSwitch { targets, .. } if targets.len() == 2)));
    }

    #[test]
    fn line_directive_sets_origin_of_next_instruction_only() {
        let src = ".class public LA;\n.super Ljava/lang/Object;\n.method public static m()V\n    .locals 1\n    .line 7\n    const/4 v0, 0x0\n    const/4 v0, 0x1\n    return-void\n.end method\n";
        let out = parse_single("a.smali", src);
        let program = out.program.unwrap();
        let body = &program.classes[0].methods[0].body;
        assert_eq!(body[0].as_ins().unwrap().origin, Some(7));
        assert_eq!(body[1].as_ins().unwrap().origin, None);
    }

    #[test]
    fn classification_survives_parsing() {
        let out = parse_single("Activity.smali", ACTIVITY_SRC);
        let program = out.program.unwrap();
        let kinds: Vec<InstructionKind> = program.classes[0].methods[0]
            .body
            .iter()
            .filter_map(|b| b.as_ins())
            .map(crate::model::classify)
            .collect();
        use InstructionKind::*;
        assert_eq!(
            kinds,
            vec![Plain, Plain, PairedFirst, PairedSecond, FlowTerminator, FlowTerminator]
        );
    }
}
