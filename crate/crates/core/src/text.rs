//! Line-window helpers that keep the original bytes intact.

/// The last `n` lines of `s`, where a trailing `\n` belongs to the last line.
pub fn last_lines(s: &str, n: usize) -> &str {
    if n == 0 {
        return &s[s.len()..];
    }
    let body = s.strip_suffix('\n').unwrap_or(s);
    let mut seen = 0;
    for (i, b) in body.bytes().enumerate().rev() {
        if b == b'\n' {
            seen += 1;
            if seen == n {
                return &s[i + 1..];
            }
        }
    }
    s
}

/// The first `n` lines of `s`. A leading `\n` terminates the line holding the
/// hole and is not counted.
pub fn first_lines(s: &str, n: usize) -> &str {
    if n == 0 {
        return &s[..0];
    }
    let skip = usize::from(s.starts_with('\n'));
    let mut seen = 0;
    for (i, b) in s.bytes().enumerate().skip(skip) {
        if b == b'\n' {
            seen += 1;
            if seen == n {
                return &s[..i];
            }
        }
    }
    s
}
