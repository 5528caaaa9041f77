//! Runtime report: per-class boolean vectors of fired probes, with a
//! binary on-disk format and multi-run merging.
//!
//! File format (`*.acvr`, all integers little-endian): magic `ACVR`,
//! version u16 = 1, reserved u16 = 0, class count u32, then per class:
//! name length u16 + UTF-8 bytes, probe count u32, ceil(n/8) bytes of
//! LSB-first packed bits.

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"ACVR";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RuntimeReport {
    /// Class name -> fired-probe vector, in probe-map class order.
    pub classes: Vec<(String, Vec<bool>)>,
}

impl RuntimeReport {
    pub fn vector(&self, class: &str) -> Option<&Vec<bool>> {
        self.classes.iter().find(|(n, _)| n == class).map(|(_, v)| v)
    }
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    Version(u16),
    #[error("truncated file")]
    Truncated,
    #[error("trailing bytes after report")]
    TrailingData,
    #[error("class name is not UTF-8")]
    BadName,
}

#[derive(Debug, Error)]
#[error("report mismatch: {0}")]
pub struct ReportMismatch(pub String);

pub fn write_runtime(report: &RuntimeReport) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&(report.classes.len() as u32).to_le_bytes());
    for (name, bits) in &report.classes {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(bits.len() as u32).to_le_bytes());
        let mut byte = 0u8;
        for (i, &b) in bits.iter().enumerate() {
            if b {
                byte |= 1 << (i % 8);
            }
            if i % 8 == 7 {
                out.push(byte);
                byte = 0;
            }
        }
        if bits.len() % 8 != 0 {
            out.push(byte);
        }
    }
    out
}

pub fn read_runtime(data: &[u8]) -> Result<RuntimeReport, FormatError> {
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8], FormatError> {
        if *pos + n > data.len() {
            return Err(FormatError::Truncated);
        }
        let s = &data[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    if take(&mut pos, 4)? != MAGIC {
        return Err(FormatError::BadMagic);
    }
    let version = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap());
    if version != VERSION {
        return Err(FormatError::Version(version));
    }
    let _reserved = take(&mut pos, 2)?;
    let count = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
    let mut classes = Vec::new();
    for _ in 0..count {
        let name_len = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(take(&mut pos, name_len)?)
            .map_err(|_| FormatError::BadName)?
            .to_string();
        let n = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let bytes = take(&mut pos, n.div_ceil(8))?;
        let bits = (0..n).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect();
        classes.push((name, bits));
    }
    if pos != data.len() {
        return Err(FormatError::TrailingData);
    }
    Ok(RuntimeReport { classes })
}

/// Elementwise OR over reports from the same probe map.
pub fn merge(reports: &[RuntimeReport]) -> Result<RuntimeReport, ReportMismatch> {
    let mut iter = reports.iter();
    let mut acc = match iter.next() {
        Some(first) => first.clone(),
        None => return Ok(RuntimeReport::default()),
    };
    for r in iter {
        if r.classes.len() != acc.classes.len() {
            return Err(ReportMismatch(format!(
                "class count {} vs {}",
                r.classes.len(),
                acc.classes.len()
            )));
        }
        for ((an, av), (bn, bv)) in acc.classes.iter_mut().zip(&r.classes) {
            if an != bn || av.len() != bv.len() {
                return Err(ReportMismatch(format!("class {an} vs {bn}")));
            }
            for (a, b) in av.iter_mut().zip(bv) {
                *a |= *b;
            }
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_report_is_twelve_bytes() {
        let bytes = write_runtime(&RuntimeReport::default());
        assert_eq!(bytes.len(), 12);
        assert_eq!(read_runtime(&bytes).unwrap(), RuntimeReport::default());
    }

    #[test]
    fn packing_is_lsb_first() {
        let r = RuntimeReport {
            classes: vec![("LA;".into(), vec![true, false, true])],
        };
        let bytes = write_runtime(&r);
        assert_eq!(*bytes.last().unwrap(), 0b0000_0101);
    }

    #[test]
    fn bad_magic_and_truncation() {
        assert!(matches!(read_runtime(b"NOPE"), Err(FormatError::BadMagic)));
        let mut ok = write_runtime(&RuntimeReport {
            classes: vec![("LA;".into(), vec![true; 9])],
        });
        ok.pop();
        assert!(matches!(read_runtime(&ok), Err(FormatError::Truncated)));
    }

    #[test]
    fn merge_identity_and_idempotence() {
        let r = RuntimeReport {
            classes: vec![("LA;".into(), vec![true, false, true])],
        };
        let zero = RuntimeReport {
            classes: vec![("LA;".into(), vec![false; 3])],
        };
        assert_eq!(merge(&[r.clone(), zero]).unwrap(), r);
        assert_eq!(merge(&[r.clone(), r.clone()]).unwrap(), r);
    }

    #[test]
    fn merge_shape_mismatch() {
        let a = RuntimeReport {
            classes: vec![("LA;".into(), vec![false; 3])],
        };
        let b = RuntimeReport {
            classes: vec![("LA;".into(), vec![false; 4])],
        };
        assert!(merge(&[a, b]).is_err());
    }

    fn arb_report() -> impl Strategy<Value = RuntimeReport> {
        proptest::collection::vec(
            ("[A-Za-z/]{1,20}", proptest::collection::vec(any::<bool>(), 0..64)),
            0..8,
        )
        .prop_map(|classes| RuntimeReport {
            classes: classes
                .into_iter()
                .map(|(n, v)| (format!("L{n};"), v))
                .collect(),
        })
    }

    proptest! {
        #[test]
        fn roundtrip_bit_exact(r in arb_report()) {
            let bytes = write_runtime(&r);
            prop_assert_eq!(read_runtime(&bytes).unwrap(), r);
        }

        #[test]
        fn merge_is_monotone(r in arb_report()) {
            let merged = merge(&[r.clone(), r.clone()]).unwrap();
            for ((_, a), (_, b)) in merged.classes.iter().zip(&r.classes) {
                for (x, y) in a.iter().zip(b) {
                    prop_assert!(*x >= *y);
                }
            }
        }
    }
}
