use super::LlmError;
use crate::chem::parse_smiles;

fn tagged_blocks(text: &str) -> Vec<&str> {
    let lower = text.to_ascii_lowercase();
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(open) = lower[from..].find("<answer>") {
        let start = from + open + "<answer>".len();
        match lower[start..].find("</answer>") {
            Some(close) => {
                out.push(&text[start..start + close]);
                from = start + close + "</answer>".len();
            }
            None => break,
        }
    }
    out
}

fn fenced_blocks(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut parts = text.split("```");
    parts.next();
    while let Some(block) = parts.next() {
        // Drop an info string such as ```smiles.
        let body = match block.split_once('\n') {
            Some((first, rest)) if !first.trim().is_empty() && !first.contains(' ') && !rest.trim().is_empty() => rest,
            _ => block,
        };
        out.push(body);
        parts.next();
    }
    out
}

fn clean(candidate: &str) -> &str {
    candidate.trim().trim_matches(|c: char| c == '`' || c == '"' || c == '\'' || c.is_whitespace())
}

fn parses(candidate: &str) -> bool {
    !candidate.is_empty() && !candidate.contains(char::is_whitespace) && parse_smiles(candidate).is_ok()
}

fn looks_like_smiles(token: &str) -> bool {
    const SYMBOLS: &str = "()[]=#@+-/\\%.0123456789";
    let chemical = token.chars().all(|c| c.is_ascii_alphanumeric() || SYMBOLS.contains(c));
    let structural = token.len() >= 3 || token.chars().any(|c| SYMBOLS.contains(c));
    chemical && structural && token.chars().any(|c| c.is_ascii_uppercase() || "cnos".contains(c))
}

/// Pulls the predicted SMILES out of a completion: the last `<answer>` block,
/// else the last fenced block, else the last token that parses as SMILES.
pub fn extract_smiles(text: &str) -> Result<String, LlmError> {
    if let Some(last) = tagged_blocks(text).last() {
        let c = clean(last);
        if parses(c) {
            return Ok(c.to_string());
        }
    }
    if let Some(c) = fenced_blocks(text).iter().rev().map(|b| clean(b)).find(|c| parses(c)) {
        return Ok(c.to_string());
    }
    text.split_whitespace()
        .rev()
        .map(|t| clean(t).trim_end_matches([',', ';', ':', '!', '?']).trim_end_matches('.'))
        .find(|t| looks_like_smiles(t) && parses(t))
        .map(str::to_string)
        .ok_or(LlmError::NoAnswerFound)
}
