//! Reads coverage state out of a finished run: the storage class's boolean
//! arrays become the per-class fired-probe vectors of a runtime report.

use crate::interp::Interpreter;
use acv_coverage::runtime::{ReportMismatch, RuntimeReport};
use acv_instrument::{ProbeMap, STORAGE_CLASS};

/// Builds the runtime report for a run of an instrumented program. A class
/// whose storage array was never allocated (no method of it ran and no
/// probe touched the storage class) reads as all-false.
pub fn collect_runtime(
    interp: &Interpreter,
    probe_map: &ProbeMap,
) -> Result<RuntimeReport, ReportMismatch> {
    let storage = interp
        .program()
        .find_class(STORAGE_CLASS)
        .ok_or_else(|| ReportMismatch(format!("program has no {STORAGE_CLASS}")))?;
    let mut classes = Vec::new();
    for cp in &probe_map.classes {
        if !storage.fields.iter().any(|f| f.name == cp.storage_field) {
            return Err(ReportMismatch(format!(
                "storage field {} missing for class {}",
                cp.storage_field, cp.name
            )));
        }
        let bits = match interp.static_value(STORAGE_CLASS, &cp.storage_field) {
            None => vec![false; cp.probe_count()],
            Some(v) => interp.bool_array(v).ok_or_else(|| {
                ReportMismatch(format!("storage field {} is not a boolean array", cp.storage_field))
            })?,
        };
        if bits.len() != cp.probe_count() {
            return Err(ReportMismatch(format!(
                "class {}: storage array has {} slots, probe map has {}",
                cp.name,
                bits.len(),
                cp.probe_count()
            )));
        }
        classes.push((cp.name.clone(), bits));
    }
    Ok(RuntimeReport { classes })
}

/// The probe vector a run should produce, predicted from the execution
/// trace of the ORIGINAL program: an instruction probe is true iff the
/// instruction completed, an entry probe is true iff the method was
/// entered. Instruction probes exist only for traceable instructions, so
/// the restriction to traceable code is implicit in the probe map.
pub fn expected_runtime(
    probe_map: &ProbeMap,
    trace: &crate::interp::ExecutionTrace,
) -> RuntimeReport {
    use acv_instrument::ProbeTarget;
    let classes = probe_map
        .classes
        .iter()
        .map(|cp| {
            let bits = cp
                .probes
                .iter()
                .map(|p| match p {
                    ProbeTarget::Instruction { method, body_index } => trace.executed.contains(&(
                        cp.name.clone(),
                        method.clone(),
                        *body_index,
                    )),
                    ProbeTarget::MethodEntry { method } => {
                        trace.entered.contains(&(cp.name.clone(), method.clone()))
                    }
                })
                .collect();
            (cp.name.clone(), bits)
        })
        .collect();
    RuntimeReport { classes }
}
