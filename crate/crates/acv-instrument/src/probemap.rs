//! The instrumentation report: probe index to source location mapping.

use acv_smali::MethodSig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Instruction,
    Method,
    Class,
}

impl std::fmt::Display for Granularity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Granularity::Instruction => "instruction",
            Granularity::Method => "method",
            Granularity::Class => "class",
        })
    }
}

impl std::str::FromStr for Granularity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "instruction" => Ok(Granularity::Instruction),
            "method" => Ok(Granularity::Method),
            "class" => Ok(Granularity::Class),
            other => Err(format!("unknown granularity `{other}`")),
        }
    }
}

/// What a probe index tracks.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ProbeTarget {
    MethodEntry { method: MethodSig },
    Instruction { method: MethodSig, body_index: usize },
}

impl ProbeTarget {
    pub fn method(&self) -> &MethodSig {
        match self {
            ProbeTarget::MethodEntry { method } => method,
            ProbeTarget::Instruction { method, .. } => method,
        }
    }
}

/// Per-method traceable/untraceable instruction counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MethodCounts {
    pub traceable: usize,
    pub untraceable: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassProbes {
    pub name: String,
    pub storage_field: String,
    /// Probe index -> target; indices are dense 0..N-1 in vector order.
    pub probes: Vec<ProbeTarget>,
    pub traceable_count: usize,
    pub untraceable_count: usize,
    /// In-memory only; empty after deserialization.
    pub per_method: Vec<(MethodSig, MethodCounts)>,
}

impl ClassProbes {
    pub fn probe_count(&self) -> usize {
        self.probes.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeMap {
    pub granularity: Granularity,
    pub classes: Vec<ClassProbes>,
}

impl ProbeMap {
    pub fn class(&self, name: &str) -> Option<&ClassProbes> {
        self.classes.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Error)]
pub enum ProbeMapError {
    #[error("probe map: {0}")]
    Json(#[from] serde_json::Error),
    #[error("probe map: unsupported version {0}")]
    Version(u32),
    #[error("probe map: {0}")]
    Invalid(String),
}

// Serialized layout; field order is part of the file format.
#[derive(Serialize, Deserialize)]
struct FileProbe {
    index: usize,
    kind: String,
    method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    body_index: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct FileClass {
    name: String,
    storage_field: String,
    probes: Vec<FileProbe>,
    traceable_count: usize,
    untraceable_count: usize,
}

#[derive(Serialize, Deserialize)]
struct FileMap {
    version: u32,
    granularity: Granularity,
    classes: Vec<FileClass>,
}

fn sig_to_string(sig: &MethodSig) -> String {
    sig.to_string()
}

fn sig_from_string(s: &str) -> Result<MethodSig, ProbeMapError> {
    match s.find('(') {
        Some(i) => Ok(MethodSig {
            name: s[..i].to_string(),
            descriptor: s[i..].to_string(),
        }),
        None => Err(ProbeMapError::Invalid(format!("bad method id `{s}`"))),
    }
}

pub fn to_json(map: &ProbeMap) -> String {
    let file = FileMap {
        version: 1,
        granularity: map.granularity,
        classes: map
            .classes
            .iter()
            .map(|c| FileClass {
                name: c.name.clone(),
                storage_field: c.storage_field.clone(),
                probes: c
                    .probes
                    .iter()
                    .enumerate()
                    .map(|(index, t)| match t {
                        ProbeTarget::MethodEntry { method } => FileProbe {
                            index,
                            kind: "method_entry".into(),
                            method: sig_to_string(method),
                            body_index: None,
                        },
                        ProbeTarget::Instruction { method, body_index } => FileProbe {
                            index,
                            kind: "instruction".into(),
                            method: sig_to_string(method),
                            body_index: Some(*body_index),
                        },
                    })
                    .collect(),
                traceable_count: c.traceable_count,
                untraceable_count: c.untraceable_count,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("probe map serializes")
}

pub fn from_json(text: &str) -> Result<ProbeMap, ProbeMapError> {
    let file: FileMap = serde_json::from_str(text)?;
    if file.version != 1 {
        return Err(ProbeMapError::Version(file.version));
    }
    let mut classes = Vec::new();
    for c in file.classes {
        let mut probes = Vec::new();
        for (i, p) in c.probes.iter().enumerate() {
            if p.index != i {
                return Err(ProbeMapError::Invalid(format!(
                    "class {}: probe indices not dense at {}",
                    c.name, p.index
                )));
            }
            let method = sig_from_string(&p.method)?;
            probes.push(match p.kind.as_str() {
                "method_entry" => ProbeTarget::MethodEntry { method },
                "instruction" => ProbeTarget::Instruction {
                    method,
                    body_index: p.body_index.ok_or_else(|| {
                        ProbeMapError::Invalid("instruction probe without body_index".into())
                    })?,
                },
                other => {
                    return Err(ProbeMapError::Invalid(format!("unknown probe kind `{other}`")))
                }
            });
        }
        classes.push(ClassProbes {
            name: c.name,
            storage_field: c.storage_field,
            probes,
            traceable_count: c.traceable_count,
            untraceable_count: c.untraceable_count,
            per_method: Vec::new(),
        });
    }
    Ok(ProbeMap { granularity: file.granularity, classes })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_roundtrip() {
        let sig = MethodSig { name: "m".into(), descriptor: "()V".into() };
        let map = ProbeMap {
            granularity: Granularity::Instruction,
            classes: vec![ClassProbes {
                name: "LA;".into(),
                storage_field: "A0".into(),
                probes: vec![
                    ProbeTarget::Instruction { method: sig.clone(), body_index: 0 },
                    ProbeTarget::MethodEntry { method: sig.clone() },
                ],
                traceable_count: 1,
                untraceable_count: 1,
                per_method: Vec::new(),
            }],
        };
        let text = to_json(&map);
        let back = from_json(&text).unwrap();
        assert_eq!(back, map);
        // field order is fixed: version first, then granularity, then classes
        let v = text.find("\"version\"").unwrap();
        let g = text.find("\"granularity\"").unwrap();
        let c = text.find("\"classes\"").unwrap();
        assert!(v < g && g < c);
    }

    #[test]
    fn non_dense_indices_rejected() {
        let text = r#"{"version":1,"granularity":"method","classes":[
            {"name":"LA;","storage_field":"A0",
             "probes":[{"index":1,"kind":"method_entry","method":"m()V"}],
             "traceable_count":0,"untraceable_count":0}]}"#;
        assert!(from_json(text).is_err());
    }
}
