//! Typed model, parser, printer and mini-verifier for a supported subset of
//! smali (Dalvik assembly).

pub mod error;
pub mod model;
pub mod opcodes;
pub mod parse;
pub mod print;
pub mod verify;

pub use model::{
    classify, classify_mnemonic, frame_layout, AccessFlags, BodyItem, FieldDecl, FrameLayout,
    Instruction, MethodSig, RegRef, SmaliClass, SmaliMethod, SmaliProgram, SymbolicRef,
    TryDirective,
};
pub use opcodes::InstructionKind;
