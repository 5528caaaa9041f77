//! Register-machine interpreter for the supported smali subset, with crash
//! logging, execution tracing and runtime-report collection.

pub mod collect;
pub mod interp;
pub mod script;

pub use collect::{collect_runtime, expected_runtime};
pub use interp::{
    interpret, CallOutcome, CrashRecord, ExecError, ExecutionTrace, Interpreter, Limits,
    StackEntry, Value,
};
pub use script::{parse_script, run_script, ScriptError, ScriptLine, ScriptRun};
