//! Opcode format table for the supported Dalvik subset.
//!
//! The table lives in `data/opcodes.tsv` and is the single source of truth
//! for the parser, verifier, instrumenter and interpreter: operand shapes,
//! register index ranges, the paired/terminator taxonomy and branch flags
//! all come from here.

use once_cell::sync::Lazy;
use std::collections::HashMap;

use crate::error::UnsupportedOpcode;

const TABLE_TSV: &str = include_str!("../data/opcodes.tsv");

/// How many bits the encoded instruction has for a register index field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegRange {
    Bits4,
    Bits8,
    Bits16,
}

impl RegRange {
    pub fn max_index(self) -> u32 {
        match self {
            RegRange::Bits4 => 15,
            RegRange::Bits8 => 255,
            RegRange::Bits16 => 65535,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperandSpec {
    /// One register operand; `wide` means it names a register pair.
    Reg { range: RegRange, wide: bool },
    /// Brace-enclosed invoke argument list, each register 4-bit addressable.
    RegList,
    Lit,
    Label,
    FieldRef,
    MethodRef,
    TypeRef,
}

/// Classification used by the probe-placement rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InstructionKind {
    FlowTerminator,
    PairedFirst,
    PairedSecond,
    MonitorOp,
    Plain,
}

/// Control-flow behaviour beyond plain fallthrough, for CFG construction
/// and probe placement at diverting instructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchFlag {
    None,
    Branch,
    Switch,
}

#[derive(Debug)]
pub struct OpSpec {
    pub mnemonic: &'static str,
    pub operands: Vec<OperandSpec>,
    pub kind: InstructionKind,
    pub branch: BranchFlag,
}

impl PartialEq for OpSpec {
    fn eq(&self, other: &Self) -> bool {
        self.mnemonic == other.mnemonic
    }
}
impl Eq for OpSpec {}

fn parse_operand(tok: &str) -> OperandSpec {
    match tok {
        "r4" => OperandSpec::Reg { range: RegRange::Bits4, wide: false },
        "r8" => OperandSpec::Reg { range: RegRange::Bits8, wide: false },
        "r16" => OperandSpec::Reg { range: RegRange::Bits16, wide: false },
        "r4w" => OperandSpec::Reg { range: RegRange::Bits4, wide: true },
        "r8w" => OperandSpec::Reg { range: RegRange::Bits8, wide: true },
        "r16w" => OperandSpec::Reg { range: RegRange::Bits16, wide: true },
        "rlist" => OperandSpec::RegList,
        "lit" => OperandSpec::Lit,
        "label" => OperandSpec::Label,
        "field" => OperandSpec::FieldRef,
        "method" => OperandSpec::MethodRef,
        "type" => OperandSpec::TypeRef,
        other => panic!("opcode table: unknown operand token {other:?}"),
    }
}

static TABLE: Lazy<Vec<OpSpec>> = Lazy::new(|| {
    let mut specs = Vec::new();
    for line in TABLE_TSV.lines() {
        let line = line.trim_end();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        assert!(cols.len() == 5, "opcode table: bad row {line:?}");
        let operands = if cols[1] == "-" {
            Vec::new()
        } else {
            cols[1].split(',').map(parse_operand).collect()
        };
        let kind = match cols[3] {
            "plain" => InstructionKind::Plain,
            "terminator" => InstructionKind::FlowTerminator,
            "paired-first" => InstructionKind::PairedFirst,
            "paired-second" => InstructionKind::PairedSecond,
            "monitor" => InstructionKind::MonitorOp,
            other => panic!("opcode table: unknown kind {other:?}"),
        };
        let branch = match cols[4] {
            "-" => BranchFlag::None,
            "branch" => BranchFlag::Branch,
            "switch" => BranchFlag::Switch,
            other => panic!("opcode table: unknown flag {other:?}"),
        };
        specs.push(OpSpec { mnemonic: cols[0], operands, kind, branch });
    }
    specs
});

static BY_MNEMONIC: Lazy<HashMap<&'static str, &'static OpSpec>> =
    Lazy::new(|| TABLE.iter().map(|s| (s.mnemonic, s)).collect());

/// All supported opcodes, in table order.
pub fn all() -> &'static [OpSpec] {
    &TABLE
}

pub fn lookup(mnemonic: &str) -> Result<&'static OpSpec, UnsupportedOpcode> {
    BY_MNEMONIC
        .get(mnemonic)
        .copied()
        .ok_or_else(|| UnsupportedOpcode { mnemonic: mnemonic.to_string() })
}
