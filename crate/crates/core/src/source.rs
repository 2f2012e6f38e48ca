//! Line-level static scanning of generated execution-language (Python) source.
//!
//! Only what the orchestrator needs: top-level definitions, import
//! statements and entrypoint signatures. Correctness of generated code is
//! established by running it, not by analysing it.

use std::collections::BTreeSet;

/// Lines that are not inside a triple-quoted string, with their indices.
fn code_lines(src: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut in_str: Option<&str> = None;
    for (i, line) in src.lines().enumerate() {
        let was_inside = in_str.is_some();
        let mut rest = line;
        loop {
            match in_str {
                Some(q) => match rest.find(q) {
                    Some(p) => {
                        rest = &rest[p + 3..];
                        in_str = None;
                    }
                    None => break,
                },
                None => {
                    let a = rest.find("\"\"\"");
                    let b = rest.find("'''");
                    let (p, q) = match (a, b) {
                        (Some(a), Some(b)) if a <= b => (a, "\"\"\""),
                        (Some(_), Some(b)) => (b, "'''"),
                        (Some(a), None) => (a, "\"\"\""),
                        (None, Some(b)) => (b, "'''"),
                        (None, None) => break,
                    };
                    rest = &rest[p + 3..];
                    in_str = Some(q);
                }
            }
        }
        if !was_inside {
            out.push((i, line));
        }
    }
    out
}

fn def_name(line: &str) -> Option<&str> {
    let rest = line
        .strip_prefix("def ")
        .or_else(|| line.strip_prefix("async def "))?;
    let end = rest.find(|c: char| c == '(' || c.is_whitespace())?;
    Some(&rest[..end])
}

fn class_name(line: &str) -> Option<&str> {
    let rest = line.strip_prefix("class ")?;
    let end = rest.find(|c: char| c == '(' || c == ':' || c.is_whitespace())?;
    Some(&rest[..end])
}

fn assigned_name(line: &str) -> Option<&str> {
    let first = line.chars().next()?;
    if !(first.is_ascii_alphabetic() || first == '_') {
        return None;
    }
    let end = line.find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))?;
    let name = &line[..end];
    let rest = line[end..].trim_start();
    let is_assign = (rest.starts_with('=') && !rest.starts_with("=="))
        || rest.starts_with(':') && rest.contains('=');
    if is_assign && !matches!(name, "if" | "for" | "while" | "with" | "else" | "try" | "elif") {
        Some(name)
    } else {
        None
    }
}

pub fn top_level_functions(src: &str) -> Vec<String> {
    code_lines(src)
        .into_iter()
        .filter_map(|(_, l)| def_name(l).map(str::to_string))
        .collect()
}

pub fn defines_function(src: &str, name: &str) -> bool {
    code_lines(src).into_iter().any(|(_, l)| def_name(l) == Some(name))
}

/// Names bound at module level by `def`, `class` or assignment.
pub fn top_level_symbols(src: &str) -> BTreeSet<String> {
    code_lines(src)
        .into_iter()
        .filter_map(|(_, l)| {
            def_name(l)
                .or_else(|| class_name(l))
                .or_else(|| assigned_name(l))
                .map(str::to_string)
        })
        .filter(|n| !n.starts_with("__"))
        .collect()
}

/// The `def ...:` header of a top-level function, joined onto one line.
pub fn function_signature(src: &str, name: &str) -> Option<String> {
    let lines: Vec<&str> = src.lines().collect();
    let (start, _) = code_lines(src)
        .into_iter()
        .find(|(_, l)| def_name(l) == Some(name))?;
    let mut sig = String::new();
    for l in &lines[start..] {
        if !sig.is_empty() {
            sig.push(' ');
        }
        sig.push_str(l.trim());
        if l.trim_end().ends_with(':') {
            return Some(sig);
        }
    }
    Some(sig)
}

/// Body lines of a top-level function (everything indented below its header).
pub fn function_body(src: &str, name: &str) -> Vec<String> {
    let lines: Vec<&str> = src.lines().collect();
    let Some((start, _)) = code_lines(src)
        .into_iter()
        .find(|(_, l)| def_name(l) == Some(name))
    else {
        return Vec::new();
    };
    let mut i = start;
    while i < lines.len() && !lines[i].trim_end().ends_with(':') {
        i += 1;
    }
    lines
        .iter()
        .skip(i + 1)
        .take_while(|l| l.trim().is_empty() || l.starts_with(' ') || l.starts_with('\t'))
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.to_string())
        .collect()
}

/// Module-level import statements, each as written (parenthesized
/// continuations joined).
pub fn import_statements(src: &str) -> Vec<String> {
    let lines: Vec<&str> = src.lines().collect();
    let mut out = Vec::new();
    for (i, l) in code_lines(src) {
        if !(l.starts_with("import ") || l.starts_with("from ")) {
            continue;
        }
        if l.starts_with("from __future__") {
            continue;
        }
        let mut stmt = l.trim_end().to_string();
        if stmt.contains('(') && !stmt.contains(')') {
            for cont in &lines[i + 1..] {
                stmt.push(' ');
                stmt.push_str(cont.trim());
                if cont.contains(')') {
                    break;
                }
            }
        }
        out.push(stmt);
    }
    out
}

/// Root module names referenced by import statements at any indentation.
pub fn imported_modules(src: &str) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (_, l) in code_lines(src) {
        let t = l.trim_start();
        let names: Vec<&str> = if let Some(rest) = t.strip_prefix("import ") {
            rest.split(',')
                .filter_map(|p| p.split_whitespace().next())
                .collect()
        } else if let Some(rest) = t.strip_prefix("from ") {
            rest.split_whitespace().next().into_iter().collect()
        } else {
            continue;
        };
        for n in names {
            let root = n.split('.').next().unwrap_or(n);
            if root.is_empty() || root == "__future__" {
                continue;
            }
            if seen.insert(root.to_string()) {
                out.push(root.to_string());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SRC: &str = r#"import os, sys
from collections import (
    Counter,
    defaultdict,
)
import numpy.linalg as la

LIMIT = 10
_cache: dict = {}

def load(path):
    """
def fake():
    """
    return open(path).read()

async def fetch():
    import json
    return 1

class Model(object):
    pass

if __name__ == "__main__":
    load("x")
"#;

    #[test]
    fn scans_definitions_and_symbols() {
        assert_eq!(top_level_functions(SRC), vec!["load", "fetch"]);
        assert!(!defines_function(SRC, "fake"));
        let syms = top_level_symbols(SRC);
        let want: BTreeSet<String> = ["LIMIT", "_cache", "load", "fetch", "Model"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(syms, want);
    }

    #[test]
    fn scans_imports() {
        assert_eq!(
            imported_modules(SRC),
            vec!["os", "sys", "collections", "numpy", "json"]
        );
        let stmts = import_statements(SRC);
        assert_eq!(stmts.len(), 3);
        assert_eq!(stmts[1], "from collections import ( Counter, defaultdict, )");
    }

    #[test]
    fn signature_and_body() {
        let src = "def f(a,\n      b):\n    x = a\n    return x\n\ny = 1\n";
        assert_eq!(function_signature(src, "f").unwrap(), "def f(a, b):");
        assert_eq!(function_body(src, "f"), vec!["    x = a", "    return x"]);
    }
}
