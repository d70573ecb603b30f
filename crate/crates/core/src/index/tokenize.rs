use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

/// Splits code into lowercase tokens: runs of alphanumerics, further split at
/// camelCase boundaries (`getHTTPServer` -> `get`, `http`, `server`).
pub fn tokenize_code(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut run: Vec<char> = Vec::new();
    for c in text.chars().chain(core::iter::once(' ')) {
        if c.is_alphanumeric() {
            run.push(c);
            continue;
        }
        if !run.is_empty() {
            split_camel(&run, &mut tokens);
            run.clear();
        }
    }
    tokens
}

fn split_camel(run: &[char], out: &mut Vec<String>) {
    let mut start = 0;
    for i in 1..run.len() {
        let prev = run[i - 1];
        let cur = run[i];
        let next_lower = run.get(i + 1).is_some_and(|c| c.is_lowercase());
        let boundary = cur.is_uppercase()
            && ((prev.is_lowercase() || prev.is_numeric()) || (prev.is_uppercase() && next_lower));
        if boundary {
            push_lower(&run[start..i], out);
            start = i;
        }
    }
    push_lower(&run[start..], out);
}

fn push_lower(chars: &[char], out: &mut Vec<String>) {
    if chars.is_empty() {
        return;
    }
    let s: String = chars.iter().collect();
    let lower = s.to_lowercase();
    if !lower.is_empty() {
        out.push(lower);
    }
}

/// Jaccard similarity over token sets. Two empty inputs are identical (1.0);
/// exactly one empty input gives 0.0.
pub fn jaccard_similarity<S: AsRef<str>>(a: &[S], b: &[S]) -> f64 {
    let sa: BTreeSet<&str> = a.iter().map(AsRef::as_ref).collect();
    let sb: BTreeSet<&str> = b.iter().map(AsRef::as_ref).collect();
    jaccard_sets(&sa, &sb)
}

pub(crate) fn jaccard_sets(sa: &BTreeSet<&str>, sb: &BTreeSet<&str>) -> f64 {
    match (sa.is_empty(), sb.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let inter = sa.intersection(sb).count();
    let union = sa.len() + sb.len() - inter;
    inter as f64 / union as f64
}
