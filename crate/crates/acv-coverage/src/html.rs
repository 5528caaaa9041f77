//! HTML report emission: an index page with per-class coverage bars and
//! one page per class with covered instructions highlighted.
//!
//! Output is plain generated text with inline CSS, no scripts. Pages
//! render the original program, so highlight positions come from the
//! per-method body indices in the coverage report.

use crate::compute::{ClassCoverage, Counter, CoverageReport};
use acv_smali::model::{BodyItem, SmaliClass, SmaliProgram};
use acv_smali::print::format_body_item;

const CSS: &str = "body{font-family:monospace;margin:1em 2em}\
table{border-collapse:collapse}td,th{border:1px solid #999;padding:2px 8px;text-align:left}\
.bar{display:inline-block;width:120px;height:10px;background:#c66}\
.bar span{display:block;height:10px;background:#6a6}\
pre{line-height:1.35}.cov{background:#cfc}.miss{background:#fcc}";

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn page_name(class_name: &str) -> String {
    let flat = class_name
        .trim_start_matches('L')
        .trim_end_matches(';')
        .replace('/', "_");
    format!("{flat}.html")
}

fn bar(c: Counter) -> String {
    format!(
        "<span class=\"bar\"><span style=\"width:{:.0}%\"></span></span> {:.1}%",
        c.percent(),
        c.percent()
    )
}

fn page(title: &str, body: &str) -> String {
    format!(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">\
<title>{}</title><style>{CSS}</style></head>\n<body>\n{body}</body></html>\n",
        escape(title)
    )
}

fn index_page(report: &CoverageReport) -> String {
    let mut body = String::from("<h1>Coverage report</h1>\n");
    body.push_str(&format!(
        "<p>Granularity: {}. Methods: {}/{}. Classes: {}/{}.",
        report.granularity,
        report.method_counter.covered,
        report.method_counter.total(),
        report.class_counter.covered,
        report.class_counter.total(),
    ));
    if report.instruction_counter.total() > 0 {
        body.push_str(&format!(
            " Instructions: {}/{}.",
            report.instruction_counter.covered,
            report.instruction_counter.total(),
        ));
    }
    body.push_str("</p>\n<table>\n<tr><th>Class</th><th>Methods</th><th>Coverage</th></tr>\n");
    for class in &report.classes {
        let c = if report.instruction_counter.total() > 0 {
            class.instruction_counter
        } else {
            class.method_counter
        };
        body.push_str(&format!(
            "<tr><td><a href=\"{}\">{}</a></td><td>{}/{}</td><td>{}</td></tr>\n",
            page_name(&class.name),
            escape(&class.name),
            class.method_counter.covered,
            class.method_counter.total(),
            bar(c),
        ));
    }
    body.push_str("</table>\n");
    page("Coverage report", &body)
}

fn class_page(cc: &ClassCoverage, class: &SmaliClass) -> String {
    let mut body = format!("<h1>{}</h1>\n<p><a href=\"index.html\">index</a></p>\n", escape(&cc.name));
    for method in &class.methods {
        let sig = method.sig();
        let mcov = cc.methods.iter().find(|m| m.sig == sig);
        let state = match mcov {
            Some(m) if m.covered => "cov",
            Some(_) => "miss",
            None => "",
        };
        body.push_str(&format!(
            "<h2><span class=\"{state}\">{}</span></h2>\n<pre>\n",
            escape(&sig.to_string())
        ));
        for (bi, item) in method.body.iter().enumerate() {
            let class_attr = match (mcov, item) {
                (Some(m), BodyItem::Ins(_)) if m.covered_indices.contains(&bi) => "cov",
                (Some(m), BodyItem::Ins(_)) if m.missed_indices.contains(&bi) => "miss",
                _ => "",
            };
            for line in format_body_item(item) {
                if class_attr.is_empty() {
                    body.push_str(&format!("{}\n", escape(&line)));
                } else {
                    body.push_str(&format!(
                        "<span class=\"{class_attr}\">{}</span>\n",
                        escape(&line)
                    ));
                }
            }
        }
        body.push_str("</pre>\n");
    }
    page(&cc.name, &body)
}

/// Renders the report as (file name, content) pairs: `index.html` plus one
/// page per class of the original program.
pub fn emit_html(report: &CoverageReport, program: &SmaliProgram) -> Vec<(String, String)> {
    let mut pages = vec![("index.html".to_string(), index_page(report))];
    for cc in &report.classes {
        if let Some(class) = program.find_class(&cc.name) {
            pages.push((page_name(&cc.name), class_page(cc, class)));
        }
    }
    pages
}
