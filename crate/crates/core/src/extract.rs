//! Pulling a JSON object out of free-form model output.
//!
//! Model replies wrap JSON in prose, markdown fences, or use the
//! single-quoted style of the prompt examples. The first balanced `{…}`
//! region is tried first, then the contents of fenced blocks, then any
//! later balanced regions. Each candidate is parsed as strict JSON and, if
//! that fails, as JSON5.

use serde_json::{Map, Value};

/// Byte ranges of balanced top-level `{…}` regions, in order of their
/// opening brace. Braces inside quoted strings (either quote style) are
/// ignored.
fn balanced_regions(text: &str) -> Vec<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut regions = Vec::new();
    let mut start = 0;
    while let Some(off) = bytes[start..].iter().position(|&b| b == b'{') {
        let open = start + off;
        match close_of(bytes, open) {
            Some(close) => {
                regions.push((open, close + 1));
                start = close + 1;
            }
            None => start = open + 1,
        }
    }
    regions
}

fn close_of(bytes: &[u8], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut quote: Option<u8> = None;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(open) {
        if let Some(q) = quote {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                _ if b == q => quote = None,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' | b'\'' => quote = Some(b),
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

/// Contents of each ``` fenced block, with the info string dropped.
fn fenced_blocks(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let body_start = after.find('\n').map(|i| i + 1).unwrap_or(after.len());
        let body = &after[body_start..];
        match body.find("```") {
            Some(close) => {
                out.push(&body[..close]);
                rest = &body[close + 3..];
            }
            None => break,
        }
    }
    out
}

fn parse_object(candidate: &str) -> Option<Map<String, Value>> {
    let candidate = candidate.trim();
    let value = serde_json::from_str::<Value>(candidate)
        .ok()
        .or_else(|| json5::from_str::<Value>(candidate).ok())?;
    match value {
        Value::Object(map) => Some(map),
        _ => None,
    }
}

/// Returns the first JSON object found in `text`, or `None`.
pub fn first_json_object(text: &str) -> Option<Map<String, Value>> {
    let regions = balanced_regions(text);
    let mut candidates: Vec<&str> = Vec::new();
    if let Some(&(s, e)) = regions.first() {
        candidates.push(&text[s..e]);
    }
    candidates.extend(fenced_blocks(text));
    candidates.extend(regions.iter().skip(1).map(|&(s, e)| &text[s..e]));
    candidates.into_iter().find_map(parse_object)
}

/// Case-insensitive key lookup.
pub fn get_ci<'a>(map: &'a Map<String, Value>, key: &str) -> Option<&'a Value> {
    map.get(key).or_else(|| {
        map.iter()
            .find(|(k, _)| k.trim().eq_ignore_ascii_case(key))
            .map(|(_, v)| v)
    })
}
