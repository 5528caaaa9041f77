//! XML report emission and a counter re-reader for round-trip checks.
//!
//! Element nesting is `report > class > method > counter`, with aggregate
//! counters emitted after the children they summarize, so the program
//! counters close the document.

use crate::compute::{Counter, CoverageReport};

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn counter_line(out: &mut String, indent: &str, kind: &str, c: Counter) {
    out.push_str(&format!(
        "{indent}<counter type=\"{kind}\" missed=\"{}\" covered=\"{}\"/>\n",
        c.missed, c.covered
    ));
}

pub fn emit_xml(report: &CoverageReport) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str(&format!(
        "<report granularity=\"{}\">\n",
        report.granularity
    ));
    for class in &report.classes {
        out.push_str(&format!("  <class name=\"{}\">\n", escape(&class.name)));
        for method in &class.methods {
            out.push_str(&format!(
                "    <method name=\"{}\">\n",
                escape(&method.sig.to_string())
            ));
            counter_line(&mut out, "      ", "INSTRUCTION", method.instructions);
            counter_line(&mut out, "      ", "METHOD", method.methods);
            out.push_str("    </method>\n");
        }
        counter_line(&mut out, "    ", "INSTRUCTION", class.instruction_counter);
        counter_line(&mut out, "    ", "METHOD", class.method_counter);
        counter_line(&mut out, "    ", "CLASS", class.class_counter);
        out.push_str("  </class>\n");
    }
    counter_line(&mut out, "  ", "INSTRUCTION", report.instruction_counter);
    counter_line(&mut out, "  ", "METHOD", report.method_counter);
    counter_line(&mut out, "  ", "CLASS", report.class_counter);
    out.push_str("</report>\n");
    out
}

/// A counter keyed by its position in the tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterEntry {
    /// Element path, e.g. `["LA;", "m()V"]`; empty for program counters.
    pub path: Vec<String>,
    pub kind: String,
    pub counter: Counter,
}

/// Reads back the counters from XML produced by [`emit_xml`]. Only handles
/// that emitter's shape; it exists to assert the round-trip invariant.
pub fn read_counters(xml: &str) -> Result<Vec<CounterEntry>, String> {
    let mut path: Vec<String> = Vec::new();
    let mut entries = Vec::new();
    for raw in xml.lines() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with("<?xml") {
            continue;
        }
        if line.starts_with("</") || line == "<report>" || line.starts_with("<report ") {
            if line.starts_with("</") {
                path.pop();
            } else {
                path.push(String::new()); // report root, name unused
            }
            continue;
        }
        if let Some(rest) = line.strip_prefix("<counter ") {
            let kind = attr(rest, "type")?;
            let missed = attr(rest, "missed")?
                .parse()
                .map_err(|_| "bad missed attribute".to_string())?;
            let covered = attr(rest, "covered")?
                .parse()
                .map_err(|_| "bad covered attribute".to_string())?;
            entries.push(CounterEntry {
                path: path[1..].to_vec(),
                kind,
                counter: Counter { covered, missed },
            });
        } else if line.starts_with("<class ") || line.starts_with("<method ") {
            path.push(unescape(&attr(line.trim_start_matches('<'), "name")?));
        } else {
            return Err(format!("unexpected line `{line}`"));
        }
    }
    if !path.is_empty() {
        return Err("unbalanced elements".into());
    }
    Ok(entries)
}

fn attr(s: &str, name: &str) -> Result<String, String> {
    let key = format!("{name}=\"");
    let start = s.find(&key).ok_or_else(|| format!("missing {name}"))? + key.len();
    let end = s[start..]
        .find('"')
        .ok_or_else(|| format!("unterminated {name}"))?;
    Ok(s[start..start + end].to_string())
}

fn unescape(s: &str) -> String {
    s.replace("&quot;", "\"")
        .replace("&gt;", ">")
        .replace("&lt;", "<")
        .replace("&amp;", "&")
}

/// The counter entries a report should serialize to, for comparison with
/// [`read_counters`].
pub fn counter_entries(report: &CoverageReport) -> Vec<CounterEntry> {
    let mut entries = Vec::new();
    for class in &report.classes {
        for method in &class.methods {
            let p = vec![class.name.clone(), method.sig.to_string()];
            entries.push(CounterEntry {
                path: p.clone(),
                kind: "INSTRUCTION".into(),
                counter: method.instructions,
            });
            entries.push(CounterEntry { path: p, kind: "METHOD".into(), counter: method.methods });
        }
        let p = vec![class.name.clone()];
        entries.push(CounterEntry {
            path: p.clone(),
            kind: "INSTRUCTION".into(),
            counter: class.instruction_counter,
        });
        entries.push(CounterEntry {
            path: p.clone(),
            kind: "METHOD".into(),
            counter: class.method_counter,
        });
        entries.push(CounterEntry { path: p, kind: "CLASS".into(), counter: class.class_counter });
    }
    entries.push(CounterEntry {
        path: Vec::new(),
        kind: "INSTRUCTION".into(),
        counter: report.instruction_counter,
    });
    entries.push(CounterEntry {
        path: Vec::new(),
        kind: "METHOD".into(),
        counter: report.method_counter,
    });
    entries.push(CounterEntry {
        path: Vec::new(),
        kind: "CLASS".into(),
        counter: report.class_counter,
    });
    entries
}
