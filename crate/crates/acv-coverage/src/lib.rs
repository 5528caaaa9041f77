//! Coverage reporting: runtime report persistence and merging, coverage
//! computation, and XML/HTML emission.

pub mod compute;
pub mod html;
pub mod runtime;
pub mod xml;

pub use compute::{check_conservation, compute, ClassCoverage, Counter, CoverageReport, MethodCoverage};
pub use html::emit_html;
pub use runtime::{merge, read_runtime, write_runtime, FormatError, ReportMismatch, RuntimeReport};
pub use xml::{counter_entries, emit_xml, read_counters, CounterEntry};
