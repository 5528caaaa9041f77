//! Entry invocation scripts: a text file of `call` lines executed in order
//! against one interpreter, so static and heap state carry across calls.
//!
//! Grammar, one statement per line:
//!   call <class> <method><descriptor> <arg>*
//!   stop
//! Arguments are coerced by the descriptor: integral types take decimal or
//! 0x literals, J/D take the same as 64-bit, reference types only accept
//! `null`. Blank lines and `#` comments are skipped.

use crate::interp::{CallOutcome, ExecError, Interpreter, Limits, Value};
use acv_smali::model::{parse_type_list, MethodSig};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptLine {
    Call { class: String, sig: MethodSig, args: Vec<Value> },
    Stop,
}

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("script line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn parse_int(token: &str) -> Option<i64> {
    if let Some(hex) = token.strip_prefix("0x") {
        i64::from_str_radix(hex, 16).ok()
    } else if let Some(hex) = token.strip_prefix("-0x") {
        i64::from_str_radix(hex, 16).ok().map(|v| -v)
    } else {
        token.parse().ok()
    }
}

pub fn parse_script(text: &str) -> Result<Vec<ScriptLine>, ScriptError> {
    let mut lines = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let err = |message: String| ScriptError::Parse { line: n + 1, message };
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line == "stop" {
            lines.push(ScriptLine::Stop);
            continue;
        }
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("call") => {}
            other => return Err(err(format!("unknown statement {other:?}"))),
        }
        let class = tokens
            .next()
            .ok_or_else(|| err("missing class".into()))?
            .to_string();
        let method = tokens.next().ok_or_else(|| err("missing method".into()))?;
        let open = method
            .find('(')
            .ok_or_else(|| err(format!("method `{method}` has no descriptor")))?;
        let close = method
            .find(')')
            .ok_or_else(|| err(format!("method `{method}` has no descriptor")))?;
        let sig = MethodSig {
            name: method[..open].to_string(),
            descriptor: method[open..].to_string(),
        };
        let params = parse_type_list(&method[open + 1..close])
            .map_err(|e| err(e.to_string()))?;
        let mut args = Vec::new();
        for ty in &params {
            let token = tokens
                .next()
                .ok_or_else(|| err(format!("missing argument of type {ty}")))?;
            let value = match ty.as_str() {
                "J" | "D" => parse_int(token).map(Value::Wide),
                "Z" => match token {
                    "true" | "1" => Some(Value::Bool(true)),
                    "false" | "0" => Some(Value::Bool(false)),
                    _ => None,
                },
                t if t.starts_with('L') || t.starts_with('[') => {
                    (token == "null").then_some(Value::Null)
                }
                _ => parse_int(token).map(|v| Value::Int(v as i32)),
            };
            args.push(value.ok_or_else(|| err(format!("bad {ty} argument `{token}`")))?);
        }
        if tokens.next().is_some() {
            return Err(err("trailing tokens after arguments".into()));
        }
        lines.push(ScriptLine::Call { class, sig, args });
    }
    Ok(lines)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptRun {
    pub outcomes: Vec<CallOutcome>,
    pub stopped: bool,
}

/// Runs the script to its end or `stop`. A crash ends the call but not the
/// script; limit and fault errors abort it.
pub fn run_script(
    interp: &mut Interpreter,
    lines: &[ScriptLine],
    limits: Limits,
) -> Result<ScriptRun, ExecError> {
    let mut outcomes = Vec::new();
    for line in lines {
        match line {
            ScriptLine::Stop => return Ok(ScriptRun { outcomes, stopped: true }),
            ScriptLine::Call { class, sig, args } => {
                outcomes.push(interp.call(class, sig, args, limits)?);
            }
        }
    }
    Ok(ScriptRun { outcomes, stopped: false })
}
