use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedCode {
    pub source: String,
    /// False when the response had no fence and the whole text was taken.
    pub fenced: bool,
}

/// Content of the first fenced code block, or the whole trimmed text.
pub fn extract_code_block(text: &str) -> Result<ExtractedCode> {
    if text.trim().is_empty() {
        return Err(Error::EmptyCompletion);
    }
    let mut lines = text.lines();
    let mut body: Option<Vec<&str>> = None;
    for line in lines.by_ref() {
        if line.trim_start().starts_with("```") {
            body = Some(Vec::new());
            break;
        }
    }
    if let Some(mut body) = body {
        for line in lines {
            if line.trim_start().starts_with("```") {
                break;
            }
            body.push(line);
        }
        return Ok(ExtractedCode {
            source: body.join("\n"),
            fenced: true,
        });
    }
    Ok(ExtractedCode {
        source: text.trim().to_string(),
        fenced: false,
    })
}

/// First JSON object in a response: a fenced block, the whole text, or the
/// outermost `{...}` span.
pub fn extract_json(text: &str) -> Option<serde_json::Value> {
    let candidates = [
        extract_code_block(text).ok().map(|c| c.source),
        Some(text.trim().to_string()),
        match (text.find('{'), text.rfind('}')) {
            (Some(a), Some(b)) if a < b => Some(text[a..=b].to_string()),
            _ => None,
        },
    ];
    candidates
        .into_iter()
        .flatten()
        .find_map(|c| serde_json::from_str::<serde_json::Value>(&c).ok())
        .filter(|v| v.is_object())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fenced_minimal() {
        let c = extract_code_block("```\nx=1\n```").unwrap();
        assert_eq!(c.source, "x=1");
        assert!(c.fenced);
    }

    #[test]
    fn fenced_with_language_and_tail() {
        let c = extract_code_block("here:\n```lang\na\nb\n```\ntail").unwrap();
        assert_eq!(c.source, "a\nb");
    }

    #[test]
    fn unfenced() {
        let c = extract_code_block("no fences, just code").unwrap();
        assert_eq!(c.source, "no fences, just code");
        assert!(!c.fenced);
    }

    #[test]
    fn empty_is_error() {
        assert!(matches!(extract_code_block("  \n"), Err(Error::EmptyCompletion)));
    }

    #[test]
    fn json_from_prose() {
        let v = extract_json("Sure! {\"a\": 1} hope that helps").unwrap();
        assert_eq!(v["a"], 1);
        let v = extract_json("```json\n{\"b\": 2}\n```").unwrap();
        assert_eq!(v["b"], 2);
        assert!(extract_json("no json").is_none());
    }
}
