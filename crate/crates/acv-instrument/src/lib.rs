//! Coverage-probe instrumentation for smali programs.

pub mod instrument;
pub mod probemap;

pub use instrument::{
    inflation, instrument, traceable, InflationStats, InstrumentError, Instrumented,
    STORAGE_CLASS,
};
pub use probemap::{
    from_json, to_json, ClassProbes, Granularity, MethodCounts, ProbeMap, ProbeMapError,
    ProbeTarget,
};
