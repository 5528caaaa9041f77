//! Typed in-memory representation of smali programs.
//!
//! The tree mirrors the textual structure: a program holds classes, a class
//! holds fields and methods, a method body is an ordered list of items
//! (instructions, labels, try directives and data payloads). All types are
//! immutable after construction and safe to share across threads.

use crate::error::{DescriptorError, FrameSizeError, UnsupportedOpcode};
use crate::opcodes::{self, InstructionKind, OpSpec};

pub const MAX_FRAME: u32 = 256;

/// Register reference as written in source: `vN` or `pN`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegRef {
    V(u16),
    P(u16),
}

impl std::fmt::Display for RegRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RegRef::V(n) => write!(f, "v{n}"),
            RegRef::P(n) => write!(f, "p{n}"),
        }
    }
}

/// Symbolic operand of a field/method/type-bearing instruction.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SymbolicRef {
    Field { class: String, name: String, descriptor: String },
    Method { class: String, name: String, descriptor: String },
    Type(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    pub op: &'static OpSpec,
    pub regs: Vec<RegRef>,
    pub literal: Option<i64>,
    pub label: Option<String>,
    pub sref: Option<SymbolicRef>,
    /// Body index of the corresponding instruction in the pre-instrumentation
    /// program, carried through text via `.line`. None for code that was
    /// never instrumented.
    pub origin: Option<u32>,
}

impl Instruction {
    /// Builder entry point for internally generated code. Panics on a
    /// mnemonic missing from the opcode table.
    pub fn of(mnemonic: &str) -> Instruction {
        Instruction {
            op: opcodes::lookup(mnemonic).expect("generated code uses table opcodes"),
            regs: Vec::new(),
            literal: None,
            label: None,
            sref: None,
            origin: None,
        }
    }

    pub fn r(mut self, reg: RegRef) -> Self {
        self.regs.push(reg);
        self
    }

    pub fn v(self, n: u16) -> Self {
        self.r(RegRef::V(n))
    }

    pub fn p(self, n: u16) -> Self {
        self.r(RegRef::P(n))
    }

    pub fn lit(mut self, v: i64) -> Self {
        self.literal = Some(v);
        self
    }

    pub fn to_label(mut self, l: &str) -> Self {
        self.label = Some(l.to_string());
        self
    }

    pub fn field(mut self, class: &str, name: &str, descriptor: &str) -> Self {
        self.sref = Some(SymbolicRef::Field {
            class: class.to_string(),
            name: name.to_string(),
            descriptor: descriptor.to_string(),
        });
        self
    }

    pub fn method(mut self, class: &str, name: &str, descriptor: &str) -> Self {
        self.sref = Some(SymbolicRef::Method {
            class: class.to_string(),
            name: name.to_string(),
            descriptor: descriptor.to_string(),
        });
        self
    }

    pub fn type_ref(mut self, descriptor: &str) -> Self {
        self.sref = Some(SymbolicRef::Type(descriptor.to_string()));
        self
    }

    pub fn mnemonic(&self) -> &'static str {
        self.op.mnemonic
    }
}

/// `.catch` / `.catchall` directive. `exception` is None for catch-all.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TryDirective {
    pub start: String,
    pub end: String,
    pub exception: Option<String>,
    pub handler: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BodyItem {
    Ins(Instruction),
    Label(String),
    Try(TryDirective),
    ArrayData { width: u8, values: Vec<i64> },
    PackedSwitch { first_key: i64, targets: Vec<String> },
    SparseSwitch { entries: Vec<(i64, String)> },
}

impl BodyItem {
    pub fn as_ins(&self) -> Option<&Instruction> {
        match self {
            BodyItem::Ins(i) => Some(i),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AccessFlags(pub u32);

impl AccessFlags {
    pub const PUBLIC: AccessFlags = AccessFlags(1);
    pub const PRIVATE: AccessFlags = AccessFlags(2);
    pub const PROTECTED: AccessFlags = AccessFlags(4);
    pub const STATIC: AccessFlags = AccessFlags(8);
    pub const FINAL: AccessFlags = AccessFlags(16);
    pub const SYNTHETIC: AccessFlags = AccessFlags(32);
    pub const CONSTRUCTOR: AccessFlags = AccessFlags(64);
    pub const ABSTRACT: AccessFlags = AccessFlags(128);

    const NAMES: [(&'static str, u32); 8] = [
        ("public", 1),
        ("private", 2),
        ("protected", 4),
        ("static", 8),
        ("final", 16),
        ("synthetic", 32),
        ("constructor", 64),
        ("abstract", 128),
    ];

    pub fn from_name(name: &str) -> Option<AccessFlags> {
        Self::NAMES
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, bit)| AccessFlags(*bit))
    }

    pub fn union(self, other: AccessFlags) -> AccessFlags {
        AccessFlags(self.0 | other.0)
    }

    pub fn contains(self, other: AccessFlags) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn is_static(self) -> bool {
        self.contains(Self::STATIC)
    }

    /// Flag names in canonical order, for printing.
    pub fn names(self) -> Vec<&'static str> {
        Self::NAMES
            .iter()
            .filter(|(_, bit)| self.0 & bit != 0)
            .map(|(n, _)| *n)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldDecl {
    pub name: String,
    pub descriptor: String,
    pub access_flags: AccessFlags,
}

impl FieldDecl {
    pub fn is_static(&self) -> bool {
        self.access_flags.is_static()
    }
}

/// Method identity within a class: name plus full descriptor `(params)ret`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MethodSig {
    pub name: String,
    pub descriptor: String,
}

impl std::fmt::Display for MethodSig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}{}", self.name, self.descriptor)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmaliMethod {
    pub name: String,
    pub param_types: Vec<String>,
    pub return_type: String,
    pub access_flags: AccessFlags,
    /// Non-parameter register count (the `.locals` directive).
    pub locals: u16,
    pub body: Vec<BodyItem>,
}

/// Width in register units of a type descriptor: J and D take a pair.
pub fn type_width(descriptor: &str) -> u32 {
    match descriptor {
        "J" | "D" => 2,
        _ => 1,
    }
}

pub fn is_object_type(descriptor: &str) -> bool {
    descriptor.starts_with('L') || descriptor.starts_with('[')
}

/// Splits the parameter part of a method descriptor into type descriptors.
pub fn parse_type_list(params: &str) -> Result<Vec<String>, DescriptorError> {
    let mut out = Vec::new();
    let bytes = params.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let start = i;
        while i < bytes.len() && bytes[i] == b'[' {
            i += 1;
        }
        if i >= bytes.len() {
            return Err(DescriptorError(params.to_string()));
        }
        match bytes[i] {
            b'L' => {
                while i < bytes.len() && bytes[i] != b';' {
                    i += 1;
                }
                if i >= bytes.len() {
                    return Err(DescriptorError(params.to_string()));
                }
                i += 1;
            }
            b'I' | b'J' | b'Z' | b'B' | b'S' | b'C' | b'F' | b'D' => i += 1,
            _ => return Err(DescriptorError(params.to_string())),
        }
        out.push(params[start..i].to_string());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamInfo {
    /// First `pN` number of this parameter.
    pub p: u16,
    /// Absolute register index it occupies.
    pub v: u16,
    pub width: u32,
    pub descriptor: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameLayout {
    pub total: u32,
    pub params: Vec<ParamInfo>,
}

impl SmaliMethod {
    pub fn is_static(&self) -> bool {
        self.access_flags.is_static()
    }

    pub fn sig(&self) -> MethodSig {
        MethodSig {
            name: self.name.clone(),
            descriptor: format!("({}){}", self.param_types.concat(), self.return_type),
        }
    }

    /// Register units taken by parameters, including `this` for instance
    /// methods.
    pub fn param_units(&self) -> u32 {
        let this = if self.is_static() { 0 } else { 1 };
        this + self.param_types.iter().map(|t| type_width(t)).sum::<u32>()
    }

    pub fn frame_size(&self) -> u32 {
        self.locals as u32 + self.param_units()
    }

    /// Resolves a register reference to its absolute frame index.
    pub fn resolve_reg(&self, r: RegRef) -> u32 {
        match r {
            RegRef::V(n) => n as u32,
            RegRef::P(n) => self.locals as u32 + n as u32,
        }
    }
}

/// Computes the frame layout: total size plus, for each parameter, its `pN`
/// number and absolute register index. Parameters occupy the highest
/// registers of the frame.
pub fn frame_layout(method: &SmaliMethod, class: &str) -> Result<FrameLayout, FrameSizeError> {
    let total = method.frame_size();
    if total > MAX_FRAME {
        return Err(FrameSizeError {
            class: class.to_string(),
            method: method.sig().to_string(),
            size: total,
        });
    }
    let mut params = Vec::new();
    let mut p = 0u16;
    if !method.is_static() {
        params.push(ParamInfo {
            p,
            v: method.locals,
            width: 1,
            descriptor: "Ljava/lang/Object;".to_string(),
        });
        p += 1;
    }
    for ty in &method.param_types {
        let width = type_width(ty);
        params.push(ParamInfo {
            p,
            v: method.locals + p,
            width,
            descriptor: ty.clone(),
        });
        p += width as u16;
    }
    Ok(FrameLayout { total, params })
}

/// Returns the unique kind of an instruction per the probe taxonomy.
pub fn classify(instr: &Instruction) -> InstructionKind {
    instr.op.kind
}

/// Same classification keyed by mnemonic, for callers that have not parsed
/// an instruction yet.
pub fn classify_mnemonic(mnemonic: &str) -> Result<InstructionKind, UnsupportedOpcode> {
    opcodes::lookup(mnemonic).map(|s| s.kind)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmaliClass {
    pub name: String,
    pub super_name: String,
    pub access_flags: AccessFlags,
    pub fields: Vec<FieldDecl>,
    pub methods: Vec<SmaliMethod>,
}

impl SmaliClass {
    pub fn find_method(&self, sig: &MethodSig) -> Option<&SmaliMethod> {
        self.methods.iter().find(|m| &m.sig() == sig)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmaliProgram {
    pub classes: Vec<SmaliClass>,
    /// Runnable static methods: (class name, method signature).
    pub entry_points: Vec<(String, MethodSig)>,
}

impl SmaliProgram {
    /// Builds a program, deriving entry points from public static methods
    /// (excluding `<clinit>`).
    pub fn new(classes: Vec<SmaliClass>) -> SmaliProgram {
        let mut entry_points = Vec::new();
        for class in &classes {
            for method in &class.methods {
                if method.is_static()
                    && method.access_flags.contains(AccessFlags::PUBLIC)
                    && !method.name.starts_with('<')
                {
                    entry_points.push((class.name.clone(), method.sig()));
                }
            }
        }
        SmaliProgram { classes, entry_points }
    }

    pub fn find_class(&self, name: &str) -> Option<&SmaliClass> {
        self.classes.iter().find(|c| c.name == name)
    }

    /// Total instruction count over all method bodies, excluding labels,
    /// directives and data payloads.
    pub fn instruction_count(&self) -> usize {
        self.classes
            .iter()
            .flat_map(|c| &c.methods)
            .flat_map(|m| &m.body)
            .filter(|item| matches!(item, BodyItem::Ins(_)))
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn method(locals: u16, is_static: bool, params: &[&str]) -> SmaliMethod {
        SmaliMethod {
            name: "m".into(),
            param_types: params.iter().map(|s| s.to_string()).collect(),
            return_type: "V".into(),
            access_flags: if is_static {
                AccessFlags::STATIC
            } else {
                AccessFlags::default()
            },
            locals,
            body: vec![BodyItem::Ins(Instruction::of("return-void"))],
        }
    }

    #[test]
    fn frame_layout_instance_no_params() {
        // .locals 1, instance method: frame 2, p0 = v1
        let m = method(1, false, &[]);
        let fl = frame_layout(&m, "LC;").unwrap();
        assert_eq!(fl.total, 2);
        assert_eq!(fl.params.len(), 1);
        assert_eq!((fl.params[0].p, fl.params[0].v), (0, 1));
    }

    #[test]
    fn frame_layout_empty_static() {
        let m = method(0, true, &[]);
        let fl = frame_layout(&m, "LC;").unwrap();
        assert_eq!(fl.total, 0);
        assert!(fl.params.is_empty());
    }

    #[test]
    fn frame_layout_wide_params() {
        // static (J, I) with .locals 3: frame 6, p0 = v3 wide, p2 = v5
        let m = method(3, true, &["J", "I"]);
        let fl = frame_layout(&m, "LC;").unwrap();
        assert_eq!(fl.total, 6);
        assert_eq!((fl.params[0].p, fl.params[0].v, fl.params[0].width), (0, 3, 2));
        assert_eq!((fl.params[1].p, fl.params[1].v, fl.params[1].width), (2, 5, 1));
    }

    #[test]
    fn frame_overflow() {
        // .locals 254 with 2 wide params: frame 258 > 256
        let m = method(254, true, &["J", "J"]);
        let err = frame_layout(&m, "LC;").unwrap_err();
        assert_eq!(err.size, 258);
    }

    #[test]
    fn classify_examples() {
        use InstructionKind::*;
        assert_eq!(classify(&Instruction::of("goto").to_label("l0")), FlowTerminator);
        assert_eq!(
            classify(&Instruction::of("invoke-direct").v(1).method("LC;", "m", "()Z")),
            PairedFirst
        );
        assert_eq!(classify(&Instruction::of("const/4").v(0).lit(0)), Plain);
        assert_eq!(classify(&Instruction::of("move-result").v(0)), PairedSecond);
        assert_eq!(classify(&Instruction::of("monitor-exit").v(0)), MonitorOp);
        assert!(classify_mnemonic("not-an-opcode").is_err());
    }

    #[test]
    fn type_list_parsing() {
        assert_eq!(
            parse_type_list("IJ[ILcom/a/B;Z").unwrap(),
            vec!["I", "J", "[I", "Lcom/a/B;", "Z"]
        );
        assert!(parse_type_list("Lunterminated").is_err());
        assert!(parse_type_list("Q").is_err());
    }
}
