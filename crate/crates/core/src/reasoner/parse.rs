//! Extraction of `{decision, confidence, reasoning}` from free-form replies.

use serde_json::{Map, Value};

use super::{Backend, ChannelDecision};

/// End offset (exclusive) of the balanced `{...}` block starting at `start`,
/// treating braces inside JSON strings as text.
fn balanced_end(bytes: &[u8], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (off, &b) in bytes[start..].iter().enumerate() {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(start + off + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// JSON objects embedded in `text`, in order of their opening brace.
fn embedded_objects(text: &str) -> impl Iterator<Item = Map<String, Value>> + '_ {
    let bytes = text.as_bytes();
    bytes
        .iter()
        .enumerate()
        .filter(|(_, &b)| b == b'{')
        .filter_map(move |(start, _)| {
            let end = balanced_end(bytes, start)?;
            match serde_json::from_str::<Value>(&text[start..end]) {
                Ok(Value::Object(map)) => Some(map),
                _ => None,
            }
        })
}

fn as_label(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.trim().to_string()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn as_confidence(v: &Value) -> Option<f64> {
    let x = match v {
        Value::Number(n) => n.as_f64()?,
        Value::String(s) => s.trim().parse().ok()?,
        _ => return None,
    };
    x.is_finite().then(|| x.clamp(0.0, 1.0))
}

/// Interpret a reasoner reply. Never fails: anything unusable becomes an
/// invalid decision carrying an error note.
pub fn parse_decision(response: &str, classes: &[String], channel: Option<usize>) -> ChannelDecision {
    let invalid = |note: String| ChannelDecision::invalid(channel, Backend::Llm, note);

    let mut first = None;
    let mut chosen = None;
    for obj in embedded_objects(response) {
        if obj.contains_key("decision") {
            chosen = Some(obj);
            break;
        }
        first.get_or_insert(obj);
    }
    let Some(obj) = chosen.or(first) else {
        return invalid("no JSON object found".into());
    };

    let Some(raw_label) = obj.get("decision").and_then(as_label) else {
        return invalid("missing key: decision".into());
    };
    let Some(confidence) = obj.get("confidence").and_then(as_confidence) else {
        return invalid("missing key: confidence".into());
    };
    let rationale = ["reasoning", "rationale"]
        .iter()
        .find_map(|k| obj.get(*k).and_then(Value::as_str))
        .unwrap_or_default()
        .to_string();

    let Some(label) = classes.iter().find(|c| c.eq_ignore_ascii_case(&raw_label)) else {
        return ChannelDecision {
            rationale,
            ..invalid(format!("label {raw_label:?} is not a known class"))
        };
    };
    ChannelDecision {
        channel,
        label: Some(label.clone()),
        confidence,
        rationale,
        backend: Backend::Llm,
        error: None,
    }
}
