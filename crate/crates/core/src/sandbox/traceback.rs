use std::sync::LazyLock;

use regex::Regex;

use crate::model::Frame;

static FRAME: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"^\s*File "([^"]+)", line (\d+)(?:, in (.+))?\s*$"#).expect("frame regex")
});

static EXCEPTION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^([A-Za-z_][\w.]*)(?::\s?(.*))?$").expect("exception regex")
});

const HEADER: &str = "Traceback (most recent call last):";

fn looks_like_exception_name(name: &str) -> bool {
    let last = name.rsplit('.').next().unwrap_or(name);
    last.ends_with("Error")
        || last.ends_with("Exception")
        || last.ends_with("Warning")
        || matches!(last, "KeyboardInterrupt" | "SystemExit" | "StopIteration" | "GeneratorExit")
}

/// Frames of the last traceback in `stderr`, outermost first.
///
/// The exception line is attached to the innermost frame. Syntax errors,
/// which carry no function name, report `<module>`. Unrelated log lines
/// between frames are ignored.
pub fn parse_traceback(stderr: &str) -> Vec<Frame> {
    let lines: Vec<&str> = stderr.lines().collect();
    let Some(start) = lines.iter().rposition(|l| l.trim_end() == HEADER) else {
        return syntax_only(&lines);
    };
    let mut frames: Vec<Frame> = Vec::new();
    let mut fallback_msg: Option<String> = None;
    let mut message: Option<String> = None;
    for line in &lines[start + 1..] {
        if let Some(c) = FRAME.captures(line) {
            frames.push(Frame {
                file: c[1].to_string(),
                line: c[2].parse().unwrap_or(0),
                function: c.get(3).map_or("<module>", |m| m.as_str().trim()).to_string(),
                message: None,
            });
            continue;
        }
        if frames.is_empty() || line.starts_with(' ') || line.starts_with('\t') || line.trim().is_empty() {
            continue;
        }
        let trimmed = line.trim_end();
        if let Some(c) = EXCEPTION.captures(trimmed) {
            if looks_like_exception_name(&c[1]) {
                message = Some(trimmed.to_string());
                break;
            }
        }
        if fallback_msg.is_none() {
            fallback_msg = Some(trimmed.to_string());
        }
    }
    if let Some(last) = frames.last_mut() {
        last.message = message.or(fallback_msg);
    }
    frames
}

/// A bare `SyntaxError` report at import time has a frame but no header.
fn syntax_only(lines: &[&str]) -> Vec<Frame> {
    for (i, line) in lines.iter().enumerate() {
        let Some(c) = FRAME.captures(line) else { continue };
        let msg = lines[i + 1..]
            .iter()
            .find(|l| l.starts_with("SyntaxError") || l.starts_with("IndentationError") || l.starts_with("TabError"));
        if let Some(m) = msg {
            return vec![Frame {
                file: c[1].to_string(),
                line: c[2].parse().unwrap_or(0),
                function: c.get(3).map_or("<module>", |m| m.as_str().trim()).to_string(),
                message: Some(m.trim_end().to_string()),
            }];
        }
    }
    Vec::new()
}
