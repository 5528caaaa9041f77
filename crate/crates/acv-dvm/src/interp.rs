//! Register-machine interpreter for the supported smali subset.
//!
//! One interpreter owns a heap, static storage, monitor table, crash log
//! and execution trace that persist across calls, so a sequence of entry
//! invocations observes accumulated state. Call frames live on an explicit
//! stack; the host stack depth never depends on the interpreted program.
//!
//! The trace records an instruction only once it completes without raising,
//! which is the same condition under which an instrumented program reaches
//! the probe attached to that instruction.

use acv_smali::model::{
    frame_layout, BodyItem, Instruction, MethodSig, RegRef, SmaliMethod, SmaliProgram, SymbolicRef,
    TryDirective,
};
use acv_smali::verify::verify;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Value {
    Int(i32),
    Wide(i64),
    Bool(bool),
    ObjectRef(usize),
    Null,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub step_limit: u64,
    pub heap_limit: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { step_limit: 1_000_000, heap_limit: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackEntry {
    pub class: String,
    pub method: String,
    pub body_index: u32,
}

/// One uncaught exception. `body_index` refers to the pre-instrumentation
/// body when the faulting instruction carries an origin, so records match
/// between a program and its instrumented form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashRecord {
    pub seq: u64,
    pub class: String,
    pub method: String,
    pub body_index: u32,
    pub exception: String,
    pub stack: Vec<StackEntry>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExecutionTrace {
    /// (class, method, body index) of every instruction that completed.
    pub executed: BTreeSet<(String, MethodSig, usize)>,
    /// (class, method) of every method a frame was pushed for.
    pub entered: BTreeSet<(String, MethodSig)>,
    /// Values passed to the built-in `emit`, in order.
    pub outputs: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CallOutcome {
    Return(Option<Value>),
    Crash(CrashRecord),
}

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("step limit exceeded")]
    StepLimitExceeded,
    #[error("heap limit exceeded")]
    HeapLimitExceeded,
    #[error("entry not found: {0}")]
    EntryNotFound(String),
    #[error("program failed verification ({} violations)", .0.len())]
    VerifyFailed(Vec<String>),
    #[error("machine fault: {0}")]
    Fault(String),
}

const OBJECT: &str = "Ljava/lang/Object;";
const NPE: &str = "Ljava/lang/NullPointerException;";
const ARITH: &str = "Ljava/lang/ArithmeticException;";
const OOB: &str = "Ljava/lang/ArrayIndexOutOfBoundsException;";
const MONITOR: &str = "Ljava/lang/IllegalMonitorStateException;";
const CAST: &str = "Ljava/lang/ClassCastException;";
const RUNTIME_CLASS: &str = "Lacv/Runtime;";

fn builtin_super(name: &str) -> Option<&'static str> {
    match name {
        "Ljava/lang/Throwable;" => Some(OBJECT),
        "Ljava/lang/Exception;" => Some("Ljava/lang/Throwable;"),
        "Ljava/lang/RuntimeException;" => Some("Ljava/lang/Exception;"),
        ARITH | NPE | OOB | MONITOR | CAST => Some("Ljava/lang/RuntimeException;"),
        _ => None,
    }
}

#[derive(Debug, Clone)]
enum HeapObj {
    IntArray(Vec<i32>),
    BoolArray(Vec<bool>),
    ObjArray { elem: String, data: Vec<Value> },
    Instance { class: String, fields: HashMap<String, Value> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Undef,
    Val(Value),
    WideHigh,
}

struct RTry {
    start: usize,
    end: usize,
    handler: usize,
    exception: Option<String>,
}

struct MethodIndex {
    labels: HashMap<String, usize>,
    trys: Vec<RTry>,
}

/// Immutable resolved program shared by frames and parallel interpreters.
pub struct ProgramIndex {
    pub program: SmaliProgram,
    class_by_name: HashMap<String, usize>,
    methods: Vec<Vec<MethodIndex>>,
    sigs: Vec<Vec<MethodSig>>,
}

fn index_method(method: &SmaliMethod) -> MethodIndex {
    let mut labels = HashMap::new();
    for (i, item) in method.body.iter().enumerate() {
        if let BodyItem::Label(l) = item {
            labels.insert(l.clone(), i);
        }
    }
    let resolve = |l: &str| *labels.get(l).expect("verified label");
    let trys = method
        .body
        .iter()
        .filter_map(|item| match item {
            BodyItem::Try(TryDirective { start, end, exception, handler }) => Some(RTry {
                start: resolve(start),
                end: resolve(end),
                handler: resolve(handler),
                exception: exception.clone(),
            }),
            _ => None,
        })
        .collect();
    MethodIndex { labels, trys }
}

impl ProgramIndex {
    fn new(program: SmaliProgram) -> ProgramIndex {
        let class_by_name = program
            .classes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.name.clone(), i))
            .collect();
        let methods = program
            .classes
            .iter()
            .map(|c| c.methods.iter().map(index_method).collect())
            .collect();
        let sigs = program
            .classes
            .iter()
            .map(|c| c.methods.iter().map(|m| m.sig()).collect())
            .collect();
        ProgramIndex { program, class_by_name, methods, sigs }
    }

    fn method(&self, ci: usize, mi: usize) -> &SmaliMethod {
        &self.program.classes[ci].methods[mi]
    }

    fn find(&self, class: &str, sig: &MethodSig) -> Option<(usize, usize)> {
        let ci = *self.class_by_name.get(class)?;
        let mi = self.sigs[ci].iter().position(|s| s == sig)?;
        Some((ci, mi))
    }

    /// Virtual lookup: walks the super chain from `class`.
    fn find_virtual(&self, class: &str, sig: &MethodSig) -> Option<(usize, usize)> {
        let mut cur = class.to_string();
        loop {
            if let Some(hit) = self.find(&cur, sig) {
                return Some(hit);
            }
            cur = match self.class_by_name.get(&cur) {
                Some(&ci) => self.program.classes[ci].super_name.clone(),
                None => builtin_super(&cur)?.to_string(),
            };
        }
    }

    fn is_subtype(&self, sub: &str, sup: &str) -> bool {
        let mut cur = sub.to_string();
        loop {
            if cur == sup {
                return true;
            }
            cur = match self.class_by_name.get(&cur) {
                Some(&ci) => self.program.classes[ci].super_name.clone(),
                None => match builtin_super(&cur) {
                    Some(s) => s.to_string(),
                    None => return false,
                },
            };
        }
    }
}

struct Frame {
    ci: usize,
    mi: usize,
    regs: Vec<Slot>,
    pc: usize,
    /// Whether the caller's pc moves past its invoke when this frame
    /// returns; false for `<clinit>` frames, which re-run the trigger.
    caller_advances: bool,
}

enum Exec {
    Advance,
    Jump(usize),
    Return(Option<Value>),
    Call(Frame),
    /// Run a pushed `<clinit>` frame, then re-execute this instruction.
    Retry(Frame),
    RaiseBuiltin(&'static str),
    ThrowObj(usize),
}

pub struct Interpreter {
    index: Arc<ProgramIndex>,
    heap: Vec<HeapObj>,
    statics: HashMap<(String, String), Value>,
    initialized: BTreeSet<String>,
    monitors: HashMap<usize, u32>,
    frames: Vec<Frame>,
    last_result: Option<Value>,
    pending_exception: Option<usize>,
    trace: ExecutionTrace,
    crashes: Vec<CrashRecord>,
}

type Fault = String;

fn fault<T>(msg: impl Into<String>) -> Result<T, Fault> {
    Err(msg.into())
}

fn read_single(regs: &[Slot], i: usize) -> Result<Value, Fault> {
    match regs.get(i) {
        Some(Slot::Undef) => Ok(Value::Int(0)),
        Some(Slot::Val(Value::Wide(_))) | Some(Slot::WideHigh) => {
            fault(format!("v{i}: half of a wide pair read as a single register"))
        }
        Some(Slot::Val(v)) => Ok(*v),
        None => fault(format!("v{i} out of frame")),
    }
}

fn read_wide(regs: &[Slot], i: usize) -> Result<i64, Fault> {
    match (regs.get(i), regs.get(i + 1)) {
        (Some(Slot::Val(Value::Wide(w))), Some(Slot::WideHigh)) => Ok(*w),
        _ => fault(format!("v{i}: not a wide pair")),
    }
}

fn invalidate(regs: &mut [Slot], i: usize) {
    match regs[i] {
        Slot::Val(Value::Wide(_)) => {
            if regs.get(i + 1) == Some(&Slot::WideHigh) {
                regs[i + 1] = Slot::Undef;
            }
        }
        Slot::WideHigh => {
            if i > 0 && matches!(regs[i - 1], Slot::Val(Value::Wide(_))) {
                regs[i - 1] = Slot::Undef;
            }
        }
        _ => {}
    }
}

fn write_single(regs: &mut [Slot], i: usize, v: Value) -> Result<(), Fault> {
    if i >= regs.len() {
        return fault(format!("v{i} out of frame"));
    }
    invalidate(regs, i);
    regs[i] = Slot::Val(v);
    Ok(())
}

fn write_wide(regs: &mut [Slot], i: usize, w: i64) -> Result<(), Fault> {
    if i + 1 >= regs.len() {
        return fault(format!("v{i} out of frame for wide pair"));
    }
    invalidate(regs, i);
    invalidate(regs, i + 1);
    regs[i] = Slot::Val(Value::Wide(w));
    regs[i + 1] = Slot::WideHigh;
    Ok(())
}

fn as_int(v: Value) -> Result<i32, Fault> {
    match v {
        Value::Int(i) => Ok(i),
        Value::Bool(b) => Ok(b as i32),
        Value::Null => Ok(0),
        Value::ObjectRef(id) => Ok(id as i32 + 1),
        Value::Wide(_) => fault("wide value used as int"),
    }
}

fn default_for(descriptor: &str) -> Value {
    match descriptor {
        "J" | "D" => Value::Wide(0),
        "Z" => Value::Bool(false),
        d if d.starts_with('L') || d.starts_with('[') => Value::Null,
        _ => Value::Int(0),
    }
}

fn field_ref(ins: &Instruction) -> Result<(&str, &str, &str), Fault> {
    match ins.sref.as_ref() {
        Some(SymbolicRef::Field { class, name, descriptor }) => {
            Ok((class, name, descriptor))
        }
        _ => fault("missing field operand"),
    }
}

fn method_ref(ins: &Instruction) -> Result<(&str, MethodSig), Fault> {
    match ins.sref.as_ref() {
        Some(SymbolicRef::Method { class, name, descriptor }) => Ok((
            class,
            MethodSig { name: name.clone(), descriptor: descriptor.clone() },
        )),
        _ => fault("missing method operand"),
    }
}

fn type_ref(ins: &Instruction) -> Result<&str, Fault> {
    match ins.sref.as_ref() {
        Some(SymbolicRef::Type(t)) => Ok(t),
        _ => fault("missing type operand"),
    }
}

impl Interpreter {
    /// Builds an interpreter over a verified program. Refuses programs with
    /// verifier violations.
    pub fn new(program: &SmaliProgram) -> Result<Interpreter, ExecError> {
        let result = verify(program);
        if !result.is_ok() {
            return Err(ExecError::VerifyFailed(
                result.violations.iter().map(|v| v.to_string()).collect(),
            ));
        }
        Ok(Interpreter {
            index: Arc::new(ProgramIndex::new(program.clone())),
            heap: Vec::new(),
            statics: HashMap::new(),
            initialized: BTreeSet::new(),
            monitors: HashMap::new(),
            frames: Vec::new(),
            last_result: None,
            pending_exception: None,
            trace: ExecutionTrace::default(),
            crashes: Vec::new(),
        })
    }

    /// Fresh interpreter over the same (already verified) program, sharing
    /// the resolved index but none of the run state. Cheap; meant for
    /// running many independent inputs against one program.
    pub fn fork(&self) -> Interpreter {
        Interpreter {
            index: self.index.clone(),
            heap: Vec::new(),
            statics: HashMap::new(),
            initialized: BTreeSet::new(),
            monitors: HashMap::new(),
            frames: Vec::new(),
            last_result: None,
            pending_exception: None,
            trace: ExecutionTrace::default(),
            crashes: Vec::new(),
        }
    }

    pub fn program(&self) -> &SmaliProgram {
        &self.index.program
    }

    pub fn trace(&self) -> &ExecutionTrace {
        &self.trace
    }

    pub fn crashes(&self) -> &[CrashRecord] {
        &self.crashes
    }

    pub fn static_value(&self, class: &str, field: &str) -> Option<Value> {
        self.statics.get(&(class.to_string(), field.to_string())).copied()
    }

    /// Reads a boolean array out of the heap, for runtime-report collection.
    pub fn bool_array(&self, v: Value) -> Option<Vec<bool>> {
        match v {
            Value::ObjectRef(id) => match self.heap.get(id)? {
                HeapObj::BoolArray(b) => Some(b.clone()),
                _ => None,
            },
            _ => None,
        }
    }

    /// Invokes a static entry point. Heap, statics and trace persist across
    /// calls; the step budget is per call.
    pub fn call(
        &mut self,
        class: &str,
        sig: &MethodSig,
        args: &[Value],
        limits: Limits,
    ) -> Result<CallOutcome, ExecError> {
        let index = self.index.clone();
        let (ci, mi) = index
            .find(class, sig)
            .ok_or_else(|| ExecError::EntryNotFound(format!("{class}->{sig}")))?;
        let method = index.method(ci, mi);
        if !method.is_static() {
            return Err(ExecError::EntryNotFound(format!("{class}->{sig} is not static")));
        }
        let frame = self
            .entry_frame(&index, ci, mi, args)
            .map_err(ExecError::Fault)?;
        self.frames.clear();
        self.push_frame(&index, frame);
        self.pending_exception = None;
        self.last_result = None;
        self.run(&index, limits)
    }

    fn entry_frame(
        &self,
        index: &ProgramIndex,
        ci: usize,
        mi: usize,
        args: &[Value],
    ) -> Result<Frame, Fault> {
        let method = index.method(ci, mi);
        let layout = frame_layout(method, &index.program.classes[ci].name)
            .map_err(|e| e.to_string())?;
        if layout.params.len() != args.len() {
            return fault(format!(
                "entry takes {} arguments, got {}",
                layout.params.len(),
                args.len()
            ));
        }
        let mut regs = vec![Slot::Undef; layout.total as usize];
        for (param, &arg) in layout.params.iter().zip(args) {
            if param.width == 2 {
                let Value::Wide(w) = arg else {
                    return fault("wide parameter needs a wide argument");
                };
                write_wide(&mut regs, param.v as usize, w)?;
            } else {
                write_single(&mut regs, param.v as usize, arg)?;
            }
        }
        Ok(Frame { ci, mi, regs, pc: 0, caller_advances: false })
    }

    fn push_frame(&mut self, index: &ProgramIndex, frame: Frame) {
        let class = index.program.classes[frame.ci].name.clone();
        let sig = index.sigs[frame.ci][frame.mi].clone();
        if !self.trace.entered.contains(&(class.clone(), sig.clone())) {
            self.trace.entered.insert((class, sig));
        }
        self.frames.push(frame);
    }

    fn record(&mut self, index: &ProgramIndex, ci: usize, mi: usize, pc: usize) {
        let class = &index.program.classes[ci].name;
        let sig = &index.sigs[ci][mi];
        if !self
            .trace
            .executed
            .contains(&(class.clone(), sig.clone(), pc))
        {
            self.trace.executed.insert((class.clone(), sig.clone(), pc));
        }
    }

    fn run(&mut self, index: &Arc<ProgramIndex>, limits: Limits) -> Result<CallOutcome, ExecError> {
        let index = index.clone();
        let mut steps = 0u64;
        loop {
            let Some(top) = self.frames.last() else {
                return Ok(CallOutcome::Return(self.last_result));
            };
            let (ci, mi, pc) = (top.ci, top.mi, top.pc);
            let method = index.method(ci, mi);
            if pc >= method.body.len() {
                return Err(ExecError::Fault(format!(
                    "control fell off the end of {}",
                    index.sigs[ci][mi]
                )));
            }
            let ins = match &method.body[pc] {
                BodyItem::Ins(i) => i,
                _ => {
                    self.frames.last_mut().unwrap().pc += 1;
                    continue;
                }
            };
            steps += 1;
            if steps > limits.step_limit {
                return Err(ExecError::StepLimitExceeded);
            }
            let exec = self
                .exec(&index, ci, mi, method, ins, limits)
                .map_err(|f| match f {
                    ExecFault::Machine(m) => ExecError::Fault(m),
                    ExecFault::Limit(e) => e,
                })?;
            match exec {
                Exec::Advance => {
                    self.record(&index, ci, mi, pc);
                    self.frames.last_mut().unwrap().pc += 1;
                }
                Exec::Jump(target) => {
                    self.record(&index, ci, mi, pc);
                    self.frames.last_mut().unwrap().pc = target;
                }
                Exec::Return(v) => {
                    self.record(&index, ci, mi, pc);
                    let popped = self.frames.pop().unwrap();
                    self.last_result = v;
                    if let Some(caller) = self.frames.last_mut() {
                        if popped.caller_advances {
                            caller.pc += 1;
                        }
                    }
                }
                Exec::Call(frame) => {
                    self.record(&index, ci, mi, pc);
                    self.push_frame(&index, frame);
                }
                Exec::Retry(frame) => {
                    self.push_frame(&index, frame);
                }
                Exec::RaiseBuiltin(class) => {
                    let id = self.alloc(
                        HeapObj::Instance { class: class.to_string(), fields: HashMap::new() },
                        limits,
                    )?;
                    if let Some(crash) = self.unwind(&index, id)? {
                        return Ok(CallOutcome::Crash(crash));
                    }
                }
                Exec::ThrowObj(id) => {
                    if let Some(crash) = self.unwind(&index, id)? {
                        return Ok(CallOutcome::Crash(crash));
                    }
                }
            }
        }
    }

    fn alloc(&mut self, obj: HeapObj, limits: Limits) -> Result<usize, ExecError> {
        if self.heap.len() >= limits.heap_limit {
            return Err(ExecError::HeapLimitExceeded);
        }
        self.heap.push(obj);
        Ok(self.heap.len() - 1)
    }

    fn exception_class(&self, id: usize) -> String {
        match &self.heap[id] {
            HeapObj::Instance { class, .. } => class.clone(),
            _ => "Ljava/lang/Throwable;".to_string(),
        }
    }

    fn snapshot(&self, index: &ProgramIndex) -> Vec<StackEntry> {
        self.frames
            .iter()
            .rev()
            .map(|f| {
                let method = index.method(f.ci, f.mi);
                let body_index = match method.body.get(f.pc) {
                    Some(BodyItem::Ins(i)) => i.origin.unwrap_or(f.pc as u32),
                    _ => f.pc as u32,
                };
                StackEntry {
                    class: index.program.classes[f.ci].name.clone(),
                    method: index.sigs[f.ci][f.mi].to_string(),
                    body_index,
                }
            })
            .collect()
    }

    /// Dispatches an in-flight exception: innermost matching try range wins;
    /// an uncaught exception empties the stack and yields a crash record.
    fn unwind(
        &mut self,
        index: &ProgramIndex,
        exc_id: usize,
    ) -> Result<Option<CrashRecord>, ExecError> {
        let exc_class = self.exception_class(exc_id);
        let stack = self.snapshot(index);
        while let Some(frame) = self.frames.last() {
            let midx = &index.methods[frame.ci][frame.mi];
            let pc = frame.pc;
            let hit = midx
                .trys
                .iter()
                .filter(|t| t.start <= pc && pc < t.end)
                .filter(|t| match &t.exception {
                    None => true,
                    Some(ty) => index.is_subtype(&exc_class, ty),
                })
                .min_by_key(|t| t.end - t.start);
            if let Some(t) = hit {
                let handler = t.handler;
                self.frames.last_mut().unwrap().pc = handler;
                self.pending_exception = Some(exc_id);
                return Ok(None);
            }
            self.frames.pop();
        }
        let top = stack.first().cloned().unwrap_or(StackEntry {
            class: String::new(),
            method: String::new(),
            body_index: 0,
        });
        let record = CrashRecord {
            seq: self.crashes.len() as u64,
            class: top.class,
            method: top.method,
            body_index: top.body_index,
            exception: exc_class,
            stack,
        };
        self.crashes.push(record.clone());
        Ok(Some(record))
    }

    /// Pushes a `<clinit>` frame if `class` is a program class with an
    /// uninitialized static initializer.
    fn clinit_frame(&mut self, index: &ProgramIndex, class: &str) -> Option<Frame> {
        if self.initialized.contains(class) {
            return None;
        }
        self.initialized.insert(class.to_string());
        let sig = MethodSig { name: "<clinit>".into(), descriptor: "()V".into() };
        let (ci, mi) = index.find(class, &sig)?;
        let method = index.method(ci, mi);
        Some(Frame {
            ci,
            mi,
            regs: vec![Slot::Undef; method.frame_size() as usize],
            pc: 0,
            caller_advances: false,
        })
    }

    fn build_call_frame(
        &self,
        index: &ProgramIndex,
        caller_method: &SmaliMethod,
        caller_regs: &[Slot],
        ci: usize,
        mi: usize,
        arg_regs: &[RegRef],
    ) -> Result<Result<Frame, &'static str>, Fault> {
        let callee = index.method(ci, mi);
        let layout = frame_layout(callee, &index.program.classes[ci].name)
            .map_err(|e| e.to_string())?;
        let mut regs = vec![Slot::Undef; layout.total as usize];
        let mut cursor = 0usize;
        for (k, param) in layout.params.iter().enumerate() {
            let Some(&r) = arg_regs.get(cursor) else {
                return fault("too few argument registers");
            };
            let src = caller_method.resolve_reg(r) as usize;
            if param.width == 2 {
                let w = read_wide(caller_regs, src)?;
                write_wide(&mut regs, param.v as usize, w)?;
                cursor += 2;
            } else {
                let v = read_single(caller_regs, src)?;
                if k == 0 && !callee.is_static() && v == Value::Null {
                    return Ok(Err(NPE));
                }
                write_single(&mut regs, param.v as usize, v)?;
                cursor += 1;
            }
        }
        if cursor != arg_regs.len() {
            return fault("argument register count does not match descriptor");
        }
        Ok(Ok(Frame { ci, mi, regs, pc: 0, caller_advances: true }))
    }

    fn exec(
        &mut self,
        index: &ProgramIndex,
        ci: usize,
        mi: usize,
        method: &SmaliMethod,
        ins: &Instruction,
        limits: Limits,
    ) -> Result<Exec, ExecFault> {
        let labels = &index.methods[ci][mi].labels;
        let reg = |k: usize| -> Result<usize, Fault> {
            ins.regs
                .get(k)
                .map(|r| method.resolve_reg(*r) as usize)
                .ok_or_else(|| "missing register operand".to_string())
        };
        let lit = || -> Result<i64, Fault> {
            ins.literal.ok_or_else(|| "missing literal operand".to_string())
        };
        let label_idx = || -> Result<usize, Fault> {
            let l = ins.label.as_ref().ok_or("missing label operand")?;
            labels
                .get(l)
                .copied()
                .ok_or_else(|| format!("unresolved label :{l}"))
        };
        macro_rules! regs {
            () => {
                &self.frames.last().unwrap().regs
            };
        }
        macro_rules! regs_mut {
            () => {
                &mut self.frames.last_mut().unwrap().regs
            };
        }

        let m = ins.mnemonic();
        let exec = match m {
            "const/4" | "const/16" | "const" => {
                let d = reg(0)?;
                write_single(regs_mut!(), d, Value::Int(lit()? as i32))?;
                Exec::Advance
            }
            "const-wide/16" | "const-wide/32" | "const-wide" => {
                let d = reg(0)?;
                write_wide(regs_mut!(), d, lit()?)?;
                Exec::Advance
            }
            "move" | "move/from16" | "move/16" | "move-object" | "move-object/from16"
            | "move-object/16" => {
                let (d, s) = (reg(0)?, reg(1)?);
                let v = read_single(regs!(), s)?;
                write_single(regs_mut!(), d, v)?;
                Exec::Advance
            }
            "move-wide" | "move-wide/from16" | "move-wide/16" => {
                let (d, s) = (reg(0)?, reg(1)?);
                let w = read_wide(regs!(), s)?;
                write_wide(regs_mut!(), d, w)?;
                Exec::Advance
            }
            "move-result" | "move-result-object" => {
                let d = reg(0)?;
                let v = self
                    .last_result
                    .ok_or_else(|| "move-result without a pending result".to_string())?;
                write_single(regs_mut!(), d, v)?;
                Exec::Advance
            }
            "move-result-wide" => {
                let d = reg(0)?;
                match self.last_result {
                    Some(Value::Wide(w)) => write_wide(regs_mut!(), d, w)?,
                    _ => return Err("move-result-wide without a wide result".to_string().into()),
                }
                Exec::Advance
            }
            "move-exception" => {
                let d = reg(0)?;
                let id = self
                    .pending_exception
                    .take()
                    .ok_or_else(|| "move-exception without a pending exception".to_string())?;
                write_single(regs_mut!(), d, Value::ObjectRef(id))?;
                Exec::Advance
            }
            "return-void" => Exec::Return(None),
            "return" | "return-object" => Exec::Return(Some(read_single(regs!(), reg(0)?)?)),
            "return-wide" => Exec::Return(Some(Value::Wide(read_wide(regs!(), reg(0)?)?))),
            "goto" | "goto/16" | "goto/32" => Exec::Jump(label_idx()?),
            "throw" => match read_single(regs!(), reg(0)?)? {
                Value::Null => Exec::RaiseBuiltin(NPE),
                Value::ObjectRef(id) => Exec::ThrowObj(id),
                _ => return Err("throw of a non-object".to_string().into()),
            },
            "if-eq" | "if-ne" | "if-lt" | "if-ge" | "if-gt" | "if-le" => {
                let a = as_int(read_single(regs!(), reg(0)?)?)?;
                let b = as_int(read_single(regs!(), reg(1)?)?)?;
                let taken = match m {
                    "if-eq" => a == b,
                    "if-ne" => a != b,
                    "if-lt" => a < b,
                    "if-ge" => a >= b,
                    "if-gt" => a > b,
                    _ => a <= b,
                };
                if taken { Exec::Jump(label_idx()?) } else { Exec::Advance }
            }
            "if-eqz" | "if-nez" | "if-ltz" | "if-gez" | "if-gtz" | "if-lez" => {
                let a = as_int(read_single(regs!(), reg(0)?)?)?;
                let taken = match m {
                    "if-eqz" => a == 0,
                    "if-nez" => a != 0,
                    "if-ltz" => a < 0,
                    "if-gez" => a >= 0,
                    "if-gtz" => a > 0,
                    _ => a <= 0,
                };
                if taken { Exec::Jump(label_idx()?) } else { Exec::Advance }
            }
            "new-array" => {
                let (d, s) = (reg(0)?, reg(1)?);
                let len = as_int(read_single(regs!(), s)?)?;
                if len < 0 {
                    return Ok(Exec::RaiseBuiltin(OOB));
                }
                let ty = type_ref(ins)?.to_string();
                let obj = match ty.as_str() {
                    "[I" => HeapObj::IntArray(vec![0; len as usize]),
                    "[Z" => HeapObj::BoolArray(vec![false; len as usize]),
                    other => HeapObj::ObjArray {
                        elem: other.to_string(),
                        data: vec![Value::Null; len as usize],
                    },
                };
                let id = self.alloc(obj, limits)?;
                write_single(regs_mut!(), d, Value::ObjectRef(id))?;
                Exec::Advance
            }
            "array-length" => {
                let (d, s) = (reg(0)?, reg(1)?);
                match read_single(regs!(), s)? {
                    Value::Null => Exec::RaiseBuiltin(NPE),
                    Value::ObjectRef(id) => {
                        let len = match &self.heap[id] {
                            HeapObj::IntArray(v) => v.len(),
                            HeapObj::BoolArray(v) => v.len(),
                            HeapObj::ObjArray { data, .. } => data.len(),
                            HeapObj::Instance { .. } => {
                                return Err("array-length on a non-array".to_string().into())
                            }
                        };
                        write_single(regs_mut!(), d, Value::Int(len as i32))?;
                        Exec::Advance
                    }
                    _ => return Err("array-length on a non-object".to_string().into()),
                }
            }
            "fill-array-data" => {
                let s = reg(0)?;
                let at = label_idx()?;
                let values = method.body[at..]
                    .iter()
                    .find_map(|item| match item {
                        BodyItem::ArrayData { values, .. } => Some(values.clone()),
                        _ => None,
                    })
                    .ok_or_else(|| "fill-array-data without a payload".to_string())?;
                match read_single(regs!(), s)? {
                    Value::Null => Exec::RaiseBuiltin(NPE),
                    Value::ObjectRef(id) => {
                        match &mut self.heap[id] {
                            HeapObj::IntArray(data) => {
                                for (slot, v) in data.iter_mut().zip(&values) {
                                    *slot = *v as i32;
                                }
                            }
                            HeapObj::BoolArray(data) => {
                                for (slot, v) in data.iter_mut().zip(&values) {
                                    *slot = *v != 0;
                                }
                            }
                            _ => return Err("fill-array-data on a non-array".to_string().into()),
                        }
                        Exec::Advance
                    }
                    _ => return Err("fill-array-data on a non-object".to_string().into()),
                }
            }
            "aget" | "aget-boolean" => {
                let (d, a, i) = (reg(0)?, reg(1)?, reg(2)?);
                let idx_v = as_int(read_single(regs!(), i)?)?;
                match read_single(regs!(), a)? {
                    Value::Null => Exec::RaiseBuiltin(NPE),
                    Value::ObjectRef(id) => {
                        let got = match &self.heap[id] {
                            HeapObj::IntArray(v) => {
                                v.get(idx_v as usize).copied().map(Value::Int)
                            }
                            HeapObj::BoolArray(v) => {
                                v.get(idx_v as usize).copied().map(Value::Bool)
                            }
                            HeapObj::ObjArray { data, .. } => data.get(idx_v as usize).copied(),
                            HeapObj::Instance { .. } => {
                                return Err("array read on a non-array".to_string().into())
                            }
                        };
                        match got {
                            Some(v) if idx_v >= 0 => {
                                write_single(regs_mut!(), d, v)?;
                                Exec::Advance
                            }
                            _ => Exec::RaiseBuiltin(OOB),
                        }
                    }
                    _ => return Err("array read on a non-object".to_string().into()),
                }
            }
            "aput" | "aput-boolean" => {
                let (s, a, i) = (reg(0)?, reg(1)?, reg(2)?);
                let idx_v = as_int(read_single(regs!(), i)?)?;
                let v = read_single(regs!(), s)?;
                match read_single(regs!(), a)? {
                    Value::Null => Exec::RaiseBuiltin(NPE),
                    Value::ObjectRef(id) => {
                        let in_bounds = idx_v >= 0 && {
                            let n = match &self.heap[id] {
                                HeapObj::IntArray(d) => d.len(),
                                HeapObj::BoolArray(d) => d.len(),
                                HeapObj::ObjArray { data, .. } => data.len(),
                                HeapObj::Instance { .. } => {
                                    return Err("array write on a non-array".to_string().into())
                                }
                            };
                            (idx_v as usize) < n
                        };
                        if !in_bounds {
                            return Ok(Exec::RaiseBuiltin(OOB));
                        }
                        match &mut self.heap[id] {
                            HeapObj::IntArray(d) => d[idx_v as usize] = as_int(v)?,
                            HeapObj::BoolArray(d) => d[idx_v as usize] = as_int(v)? != 0,
                            HeapObj::ObjArray { data, .. } => data[idx_v as usize] = v,
                            HeapObj::Instance { .. } => unreachable!(),
                        }
                        Exec::Advance
                    }
                    _ => return Err("array write on a non-object".to_string().into()),
                }
            }
            "sget-object" => {
                let d = reg(0)?;
                let (class, name, descriptor) = field_ref(ins)?;
                let (class, name, descriptor) =
                    (class.to_string(), name.to_string(), descriptor.to_string());
                if let Some(frame) = self.clinit_frame(index, &class) {
                    return Ok(Exec::Retry(frame));
                }
                let v = self
                    .statics
                    .get(&(class, name))
                    .copied()
                    .unwrap_or_else(|| default_for(&descriptor));
                write_single(regs_mut!(), d, v)?;
                Exec::Advance
            }
            "sput-object" => {
                let s = reg(0)?;
                let (class, name, _) = field_ref(ins)?;
                let (class, name) = (class.to_string(), name.to_string());
                if let Some(frame) = self.clinit_frame(index, &class) {
                    return Ok(Exec::Retry(frame));
                }
                let v = read_single(regs!(), s)?;
                self.statics.insert((class, name), v);
                Exec::Advance
            }
            "iget" | "iget-object" => {
                let (d, o) = (reg(0)?, reg(1)?);
                let (_, name, descriptor) = field_ref(ins)?;
                let (name, descriptor) = (name.to_string(), descriptor.to_string());
                match read_single(regs!(), o)? {
                    Value::Null => Exec::RaiseBuiltin(NPE),
                    Value::ObjectRef(id) => match &self.heap[id] {
                        HeapObj::Instance { fields, .. } => {
                            let v = fields
                                .get(&name)
                                .copied()
                                .unwrap_or_else(|| default_for(&descriptor));
                            write_single(regs_mut!(), d, v)?;
                            Exec::Advance
                        }
                        _ => return Err("field read on a non-instance".to_string().into()),
                    },
                    _ => return Err("field read on a non-object".to_string().into()),
                }
            }
            "iput" | "iput-object" => {
                let (s, o) = (reg(0)?, reg(1)?);
                let (_, name, _) = field_ref(ins)?;
                let name = name.to_string();
                let v = read_single(regs!(), s)?;
                match read_single(regs!(), o)? {
                    Value::Null => Exec::RaiseBuiltin(NPE),
                    Value::ObjectRef(id) => match &mut self.heap[id] {
                        HeapObj::Instance { fields, .. } => {
                            fields.insert(name, v);
                            Exec::Advance
                        }
                        _ => return Err("field write on a non-instance".to_string().into()),
                    },
                    _ => return Err("field write on a non-object".to_string().into()),
                }
            }
            "invoke-static" | "invoke-direct" | "invoke-virtual" => {
                return self.exec_invoke(index, method, ins, m, limits);
            }
            "monitor-enter" => match read_single(regs!(), reg(0)?)? {
                Value::Null => Exec::RaiseBuiltin(NPE),
                Value::ObjectRef(id) => {
                    *self.monitors.entry(id).or_insert(0) += 1;
                    Exec::Advance
                }
                _ => return Err("monitor-enter on a non-object".to_string().into()),
            },
            "monitor-exit" => match read_single(regs!(), reg(0)?)? {
                Value::Null => Exec::RaiseBuiltin(NPE),
                Value::ObjectRef(id) => match self.monitors.get_mut(&id) {
                    Some(depth) if *depth > 0 => {
                        *depth -= 1;
                        Exec::Advance
                    }
                    _ => Exec::RaiseBuiltin(MONITOR),
                },
                _ => return Err("monitor-exit on a non-object".to_string().into()),
            },
            "check-cast" => {
                let s = reg(0)?;
                let target = type_ref(ins)?.to_string();
                match read_single(regs!(), s)? {
                    Value::Null => Exec::Advance,
                    Value::ObjectRef(id) => {
                        let ok = match &self.heap[id] {
                            HeapObj::Instance { class, .. } => index.is_subtype(class, &target),
                            HeapObj::IntArray(_) => target == "[I" || target == OBJECT,
                            HeapObj::BoolArray(_) => target == "[Z" || target == OBJECT,
                            HeapObj::ObjArray { elem, .. } => {
                                target == *elem || target == OBJECT
                            }
                        };
                        if ok { Exec::Advance } else { Exec::RaiseBuiltin(CAST) }
                    }
                    _ => return Err("check-cast on a non-object".to_string().into()),
                }
            }
            "new-instance" => {
                let d = reg(0)?;
                let ty = type_ref(ins)?.to_string();
                if let Some(frame) = self.clinit_frame(index, &ty) {
                    return Ok(Exec::Retry(frame));
                }
                let id = self.alloc(
                    HeapObj::Instance { class: ty, fields: HashMap::new() },
                    limits,
                )?;
                write_single(regs_mut!(), d, Value::ObjectRef(id))?;
                Exec::Advance
            }
            "add-int" | "sub-int" | "mul-int" | "div-int" | "rem-int" => {
                let (d, a, b) = (reg(0)?, reg(1)?, reg(2)?);
                let x = as_int(read_single(regs!(), a)?)?;
                let y = as_int(read_single(regs!(), b)?)?;
                match arith(m, x, y) {
                    Some(r) => {
                        write_single(regs_mut!(), d, Value::Int(r))?;
                        Exec::Advance
                    }
                    None => Exec::RaiseBuiltin(ARITH),
                }
            }
            "add-int/2addr" | "sub-int/2addr" | "mul-int/2addr" | "div-int/2addr"
            | "rem-int/2addr" => {
                let (d, b) = (reg(0)?, reg(1)?);
                let x = as_int(read_single(regs!(), d)?)?;
                let y = as_int(read_single(regs!(), b)?)?;
                match arith(m.trim_end_matches("/2addr"), x, y) {
                    Some(r) => {
                        write_single(regs_mut!(), d, Value::Int(r))?;
                        Exec::Advance
                    }
                    None => Exec::RaiseBuiltin(ARITH),
                }
            }
            "add-int/lit8" | "sub-int/lit8" | "mul-int/lit8" | "div-int/lit8"
            | "rem-int/lit8" => {
                let (d, a) = (reg(0)?, reg(1)?);
                let x = as_int(read_single(regs!(), a)?)?;
                let y = lit()? as i32;
                match arith(m.trim_end_matches("/lit8"), x, y) {
                    Some(r) => {
                        write_single(regs_mut!(), d, Value::Int(r))?;
                        Exec::Advance
                    }
                    None => Exec::RaiseBuiltin(ARITH),
                }
            }
            "packed-switch" => {
                let v = as_int(read_single(regs!(), reg(0)?)?)? as i64;
                let at = label_idx()?;
                let payload = method.body[at..]
                    .iter()
                    .find_map(|item| match item {
                        BodyItem::PackedSwitch { first_key, targets } => {
                            Some((*first_key, targets.clone()))
                        }
                        _ => None,
                    })
                    .ok_or_else(|| "packed-switch without a payload".to_string())?;
                let (first_key, targets) = payload;
                let off = v - first_key;
                if off >= 0 && (off as usize) < targets.len() {
                    let t = labels
                        .get(&targets[off as usize])
                        .copied()
                        .ok_or_else(|| "unresolved switch target".to_string())?;
                    Exec::Jump(t)
                } else {
                    Exec::Advance
                }
            }
            "sparse-switch" => {
                let v = as_int(read_single(regs!(), reg(0)?)?)? as i64;
                let at = label_idx()?;
                let entries = method.body[at..]
                    .iter()
                    .find_map(|item| match item {
                        BodyItem::SparseSwitch { entries } => Some(entries.clone()),
                        _ => None,
                    })
                    .ok_or_else(|| "sparse-switch without a payload".to_string())?;
                match entries.iter().find(|(k, _)| *k == v) {
                    Some((_, target)) => {
                        let t = labels
                            .get(target)
                            .copied()
                            .ok_or_else(|| "unresolved switch target".to_string())?;
                        Exec::Jump(t)
                    }
                    None => Exec::Advance,
                }
            }
            other => return Err(format!("no interpreter for `{other}`").into()),
        };
        Ok(exec)
    }

    fn exec_invoke(
        &mut self,
        index: &ProgramIndex,
        caller_method: &SmaliMethod,
        ins: &Instruction,
        mnemonic: &str,
        _limits: Limits,
    ) -> Result<Exec, ExecFault> {
        let (class, sig) = method_ref(ins)?;
        let class = class.to_string();

        // built-in externals: `emit` is the output channel, constructors of
        // built-in classes are no-ops
        if class == RUNTIME_CLASS && sig.name == "emit" {
            let caller = self.frames.last().unwrap();
            let r = *ins.regs.first().ok_or_else(|| "emit takes one argument".to_string())?;
            let v = read_single(&caller.regs, caller_method.resolve_reg(r) as usize)?;
            self.trace.outputs.push(v);
            self.last_result = None;
            return Ok(Exec::Advance);
        }
        let is_program_class = index.class_by_name.contains_key(&class);
        if !is_program_class {
            if sig.name == "<init>" {
                // null receiver still faults
                let caller = self.frames.last().unwrap();
                let r = *ins.regs.first().ok_or_else(|| "<init> needs a receiver".to_string())?;
                let v = read_single(&caller.regs, caller_method.resolve_reg(r) as usize)?;
                if v == Value::Null {
                    return Ok(Exec::RaiseBuiltin(NPE));
                }
                self.last_result = None;
                return Ok(Exec::Advance);
            }
            return Err(format!("call to unknown external {class}->{sig}").to_string().into());
        }

        if mnemonic == "invoke-static" {
            if let Some(frame) = self.clinit_frame(index, &class) {
                return Ok(Exec::Retry(frame));
            }
        }

        let target = if mnemonic == "invoke-virtual" {
            // dispatch on the runtime class of the receiver
            let caller = self.frames.last().unwrap();
            let r = *ins.regs.first().ok_or_else(|| "virtual call needs a receiver".to_string())?;
            let recv = read_single(&caller.regs, caller_method.resolve_reg(r) as usize)?;
            match recv {
                Value::Null => return Ok(Exec::RaiseBuiltin(NPE)),
                Value::ObjectRef(id) => match &self.heap[id] {
                    HeapObj::Instance { class: runtime_class, .. } => {
                        index.find_virtual(runtime_class, &sig)
                    }
                    _ => index.find_virtual(&class, &sig),
                },
                _ => return Err("virtual call on a non-object".to_string().into()),
            }
        } else {
            index.find(&class, &sig)
        };
        let (ci, mi) = target
            .ok_or_else(|| format!("unresolved method {class}->{sig}"))?;
        let caller = self.frames.last().unwrap();
        match self.build_call_frame(index, caller_method, &caller.regs, ci, mi, &ins.regs)? {
            Ok(frame) => Ok(Exec::Call(frame)),
            Err(exc) => Ok(Exec::RaiseBuiltin(exc)),
        }
    }
}

fn arith(op: &str, x: i32, y: i32) -> Option<i32> {
    match op {
        "add-int" => Some(x.wrapping_add(y)),
        "sub-int" => Some(x.wrapping_sub(y)),
        "mul-int" => Some(x.wrapping_mul(y)),
        "div-int" => (y != 0).then(|| x.wrapping_div(y)),
        "rem-int" => (y != 0).then(|| x.wrapping_rem(y)),
        _ => None,
    }
}

enum ExecFault {
    Machine(String),
    Limit(ExecError),
}

impl From<String> for ExecFault {
    fn from(s: String) -> Self {
        ExecFault::Machine(s)
    }
}

impl From<ExecError> for ExecFault {
    fn from(e: ExecError) -> Self {
        ExecFault::Limit(e)
    }
}

/// One-shot convenience wrapper: verify, run a single entry, return its
/// outcome and trace.
pub fn interpret(
    program: &SmaliProgram,
    class: &str,
    sig: &MethodSig,
    args: &[Value],
    limits: Limits,
) -> Result<(CallOutcome, ExecutionTrace), ExecError> {
    let mut interp = Interpreter::new(program)?;
    let outcome = interp.call(class, sig, args, limits)?;
    Ok((outcome, interp.trace().clone()))
}
