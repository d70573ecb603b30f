use alloc::vec::Vec;

/// Unit-cost edit distance over Unicode scalar values.
pub fn levenshtein_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = alloc::vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let substitute = prev[j] + usize::from(ca != cb);
            cur[j + 1] = substitute.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `100 * (1 - lev / max_len)` in characters; two empty strings score 100.
pub fn edit_similarity(generation: &str, ground_truth: &str) -> f64 {
    let max_len = generation.chars().count().max(ground_truth.chars().count());
    if max_len == 0 {
        return 100.0;
    }
    100.0 * (1.0 - levenshtein_distance(generation, ground_truth) as f64 / max_len as f64)
}

/// 1 when the strings are equal after trimming outer whitespace.
pub fn exact_match(generation: &str, ground_truth: &str) -> u8 {
    u8::from(generation.trim() == ground_truth.trim())
}
