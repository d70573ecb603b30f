//! Heuristic function-body extraction.
//!
//! Brace languages: a function opens on a line ending in `{` whose head looks
//! like `name(params)` (or carries a `fn`/`func`/`function` keyword), and its
//! body runs to the line whose leading `}` balances that brace. Indent
//! languages: a `def` header followed by a strictly deeper-indented block.
//! Comments and string literals are blanked before counting delimiters.

use alloc::string::String;
use alloc::vec::Vec;

use super::{task_id, CompletionTask, CorpusError, Language, SourceFile, TaskKind};

const CONTROL_WORDS: &[&str] = &[
    "if", "for", "while", "switch", "catch", "synchronized", "foreach", "using", "lock", "return",
    "else", "do", "try", "new", "sizeof", "with", "match", "when", "throw", "case", "await", "in",
    "loop", "unsafe", "fixed", "checked", "unchecked", "defer", "go", "select", "typeof",
];

const FN_KEYWORDS: &[&str] = &["fn", "func", "fun", "function"];

/// Extraction output with the number of candidate functions that could not be delimited.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FunctionTasks {
    pub tasks: Vec<CompletionTask>,
    pub skipped: usize,
}

pub fn extract_function_body_tasks(file: &SourceFile) -> Result<Vec<CompletionTask>, CorpusError> {
    extract_function_body_tasks_detailed(file).map(|r| r.tasks)
}

/// Like [`extract_function_body_tasks`] but also reports unparseable candidates.
pub fn extract_function_body_tasks_detailed(file: &SourceFile) -> Result<FunctionTasks, CorpusError> {
    let spans = match file.language {
        Language::BraceLang => brace_bodies(file),
        Language::IndentLang => indent_bodies(file),
        Language::Other => return Err(CorpusError::UnsupportedLanguage(file.rel_path.clone())),
    };
    let mut out = FunctionTasks { tasks: Vec::new(), skipped: spans.skipped };
    for span in spans.bodies {
        let ground_truth = file.join(span.body_start, span.body_end);
        if ground_truth.trim().is_empty() {
            out.skipped += 1;
            continue;
        }
        out.tasks.push(CompletionTask {
            task_id: task_id(file, TaskKind::FunctionBody, span.body_start + 1),
            kind: TaskKind::FunctionBody,
            prefix: file.join(0, span.body_start),
            suffix: file.join(span.body_end, file.line_count()),
            ground_truth,
            source_file: file.file_ref(),
            hole_start_line: span.body_start + 1,
        });
    }
    out.tasks.sort_by_key(|t| t.hole_start_line);
    Ok(out)
}

/// Body occupies lines `[body_start, body_end)`, 0-based.
struct BodySpan {
    body_start: usize,
    body_end: usize,
}

struct Spans {
    bodies: Vec<BodySpan>,
    skipped: usize,
}

// ---------------------------------------------------------------------------
// brace languages

/// Blanks comments and string/char literals, keeping one output line per input line.
fn strip_brace_lines(lines: &[String]) -> Vec<String> {
    let mut in_block = false;
    let mut out = Vec::with_capacity(lines.len());
    for raw in lines {
        let chars: Vec<char> = raw.trim_end_matches('\n').chars().collect();
        let mut code = String::with_capacity(chars.len());
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let next = chars.get(i + 1).copied();
            if in_block {
                if c == '*' && next == Some('/') {
                    in_block = false;
                    i += 2;
                } else {
                    i += 1;
                }
                code.push(' ');
                continue;
            }
            match c {
                '/' if next == Some('/') => break,
                '/' if next == Some('*') => {
                    in_block = true;
                    code.push(' ');
                    i += 2;
                }
                '"' | '`' => {
                    let quote = c;
                    i += 1;
                    while i < chars.len() && chars[i] != quote {
                        if chars[i] == '\\' {
                            i += 1;
                        }
                        i += 1;
                    }
                    i += 1;
                    code.push_str("\"\"");
                }
                '\'' => {
                    // Char literal ('x' or '\n'); anything else (lifetimes) is kept.
                    let close = if next == Some('\\') {
                        (i + 2..(i + 8).min(chars.len())).find(|&j| chars[j] == '\'')
                    } else if chars.get(i + 2) == Some(&'\'') {
                        Some(i + 2)
                    } else {
                        None
                    };
                    match close {
                        Some(j) => {
                            code.push_str("''");
                            i = j + 1;
                        }
                        None => {
                            code.push(c);
                            i += 1;
                        }
                    }
                }
                _ => {
                    code.push(c);
                    i += 1;
                }
            }
        }
        out.push(code);
    }
    out
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '$'
}

/// Does `head` (text before the opening `{`) look like a function signature?
fn is_signature(head: &str) -> bool {
    let head = head.trim();
    if head.is_empty() || head.contains(';') {
        return false;
    }
    let words: Vec<&str> = head.split(|c: char| !is_ident_char(c)).filter(|w| !w.is_empty()).collect();
    let Some(close) = head.rfind(')') else {
        return false;
    };
    let tail = head[close + 1..].trim();
    if tail.contains("=>") || tail.contains('=') {
        return false;
    }
    if words.iter().any(|w| FN_KEYWORDS.contains(w)) {
        return words.first().map_or(true, |w| !CONTROL_WORDS.contains(w));
    }
    let tail_ok = tail.is_empty()
        || ["throws", "const", "noexcept", "override", "final", "where", ":", "mutable"]
            .iter()
            .any(|p| tail.starts_with(p));
    if !tail_ok {
        return false;
    }

    // Walk back to the '(' that matches the last ')'.
    let bytes: Vec<char> = head[..close].chars().collect();
    let mut depth = 0usize;
    let mut open = None;
    for i in (0..bytes.len()).rev() {
        match bytes[i] {
            ')' => depth += 1,
            '(' if depth == 0 => {
                open = Some(i);
                break;
            }
            '(' => depth -= 1,
            _ => {}
        }
    }
    let Some(open) = open else {
        return false;
    };
    let mut j = open;
    while j > 0 && bytes[j - 1].is_whitespace() {
        j -= 1;
    }
    // Skip generic arguments such as `Foo<T>(`.
    if j > 0 && bytes[j - 1] == '>' {
        let mut angle = 0usize;
        while j > 0 {
            j -= 1;
            match bytes[j] {
                '>' => angle += 1,
                '<' => {
                    angle -= 1;
                    if angle == 0 {
                        break;
                    }
                }
                _ => {}
            }
        }
        while j > 0 && bytes[j - 1].is_whitespace() {
            j -= 1;
        }
    }
    let end = j;
    while j > 0 && is_ident_char(bytes[j - 1]) {
        j -= 1;
    }
    if j == end || bytes[j].is_ascii_digit() {
        return false;
    }
    let name: String = bytes[j..end].iter().collect();
    if CONTROL_WORDS.contains(&name.as_str()) {
        return false;
    }
    let before: String = bytes[..j].iter().collect();
    let prev_word = before.split(|c: char| !is_ident_char(c)).filter(|w| !w.is_empty()).last();
    !matches!(prev_word, Some(w) if CONTROL_WORDS.contains(&w))
        && !before.trim_end().ends_with('.')
}

fn paren_balance(s: &str) -> i64 {
    s.chars().fold(0, |acc, c| match c {
        '(' => acc + 1,
        ')' => acc - 1,
        _ => acc,
    })
}

/// Joins the head with preceding lines when its parameter list started earlier.
fn full_head(stripped: &[String], line: usize, head: &str) -> String {
    let mut text = String::from(head);
    let mut balance = paren_balance(head);
    let mut i = line;
    while balance < 0 && i > 0 && line - i < 8 {
        i -= 1;
        let prev = stripped[i].trim();
        balance += paren_balance(prev);
        let mut joined = String::from(prev);
        joined.push(' ');
        joined.push_str(&text);
        text = joined;
    }
    text
}

fn brace_bodies(file: &SourceFile) -> Spans {
    let stripped = strip_brace_lines(&file.lines);
    let mut spans = Spans { bodies: Vec::new(), skipped: 0 };
    for (o, line) in stripped.iter().enumerate() {
        let t = line.trim_end();
        let Some(head) = t.strip_suffix('{') else {
            continue;
        };
        let head = if head.trim().is_empty() {
            // Allman style: the header is the previous non-blank line.
            match (0..o).rev().find(|&p| !stripped[p].trim().is_empty()) {
                Some(p) if !stripped[p].trim_end().ends_with('{') && !stripped[p].trim_end().ends_with('}') => {
                    full_head(&stripped, p, stripped[p].trim())
                }
                _ => continue,
            }
        } else {
            full_head(&stripped, o, head)
        };
        if !is_signature(&head) {
            continue;
        }
        match find_close(&stripped, o) {
            Some(close) => spans.bodies.push(BodySpan { body_start: o + 1, body_end: close }),
            None => spans.skipped += 1,
        }
    }
    spans
}

/// Finds the line that closes the brace opened at the end of line `open`.
/// The closing `}` must be the first code character on its line.
fn find_close(stripped: &[String], open: usize) -> Option<usize> {
    let mut depth: i64 = 0;
    for c in stripped[open].chars() {
        match c {
            '{' => depth += 1,
            '}' => depth -= 1,
            _ => {}
        }
    }
    let target = depth - 1;
    if depth < 1 {
        return None;
    }
    for (j, line) in stripped.iter().enumerate().skip(open + 1) {
        for c in line.chars() {
            match c {
                '{' => depth += 1,
                '}' => {
                    depth -= 1;
                    if depth == target {
                        return line.trim_start().starts_with('}').then_some(j);
                    }
                }
                _ => {}
            }
        }
    }
    None
}

// ---------------------------------------------------------------------------
// indent languages

struct IndentLine {
    code: String,
    /// Line begins inside a multi-line string literal.
    in_string: bool,
}

fn strip_indent_lines(lines: &[String]) -> Vec<IndentLine> {
    let mut open_triple: Option<char> = None;
    let mut out = Vec::with_capacity(lines.len());
    for raw in lines {
        let chars: Vec<char> = raw.trim_end_matches('\n').chars().collect();
        let starts_in_string = open_triple.is_some();
        let mut code = String::new();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let triple = |q: char, at: usize| chars.len() >= at + 3 && chars[at..at + 3].iter().all(|&x| x == q);
            if let Some(q) = open_triple {
                if triple(q, i) {
                    open_triple = None;
                    code.push_str("\"\"");
                    i += 3;
                } else {
                    i += 1;
                }
                continue;
            }
            match c {
                '#' => break,
                '"' | '\'' if triple(c, i) => {
                    open_triple = Some(c);
                    i += 3;
                }
                '"' | '\'' => {
                    i += 1;
                    while i < chars.len() && chars[i] != c {
                        if chars[i] == '\\' {
                            i += 1;
                        }
                        i += 1;
                    }
                    i += 1;
                    code.push_str("\"\"");
                }
                _ => {
                    code.push(c);
                    i += 1;
                }
            }
        }
        out.push(IndentLine { code, in_string: starts_in_string });
    }
    out
}

fn indent_width(line: &str) -> usize {
    let mut width = 0;
    for c in line.chars() {
        match c {
            ' ' => width += 1,
            '\t' => width = (width / 8 + 1) * 8,
            _ => break,
        }
    }
    width
}

fn indent_bodies(file: &SourceFile) -> Spans {
    let stripped = strip_indent_lines(&file.lines);
    let n = file.lines.len();
    let mut spans = Spans { bodies: Vec::new(), skipped: 0 };
    for (d, info) in stripped.iter().enumerate() {
        if info.in_string {
            continue;
        }
        let t = info.code.trim_start();
        if !(t.starts_with("def ") || t.starts_with("async def ")) {
            continue;
        }
        let def_indent = indent_width(&file.lines[d]);

        // Header may span lines until the parameter list closes and ends with ':'.
        let mut balance = 0i64;
        let mut header_end = None;
        for (h, hl) in stripped.iter().enumerate().skip(d).take(12) {
            balance += paren_balance(&hl.code);
            if balance <= 0 && hl.code.trim_end().ends_with(':') {
                header_end = Some(h);
                break;
            }
        }
        let Some(h) = header_end else {
            spans.skipped += 1;
            continue;
        };

        let mut body_end = None;
        for j in h + 1..n {
            let raw = &file.lines[j];
            if raw.trim().is_empty() {
                continue;
            }
            if !stripped[j].in_string && indent_width(raw) <= def_indent {
                break;
            }
            body_end = Some(j);
        }
        match body_end {
            Some(e) => spans.bodies.push(BodySpan { body_start: h + 1, body_end: e + 1 }),
            None => spans.skipped += 1,
        }
    }
    spans
}

#[cfg(test)]
mod tests {
    use super::*;

    const JAVA: &str = concat!(
        "package demo;\n",
        "public class Counter {\n",
        "    private int count;\n",
        "    public int next(int step) {\n",
        "        int value = count + step;\n",
        "        count = value;\n",
        "        return value;\n",
        "    }\n",
        "}\n",
        "// end\n",
    );

    #[test]
    fn brace_method_with_three_line_body() {
        let file = SourceFile::from_text("r", "Counter.java", JAVA);
        let tasks = extract_function_body_tasks(&file).unwrap();
        assert_eq!(tasks.len(), 1);
        let t = &tasks[0];
        assert_eq!(
            t.ground_truth,
            "        int value = count + step;\n        count = value;\n        return value;\n"
        );
        assert_eq!(t.hole_start_line, 5);
        assert!(t.prefix.ends_with("public int next(int step) {\n"));
        assert!(t.suffix.starts_with("    }\n"));
        assert_eq!(t.reconstruct(), JAVA);
        assert_eq!(t.kind, TaskKind::FunctionBody);
    }

    #[test]
    fn no_functions_no_tasks() {
        let file = SourceFile::from_text("r", "A.java", "class A {\n  int x;\n}\n");
        assert!(extract_function_body_tasks(&file).unwrap().is_empty());
        let py = SourceFile::from_text("r", "a.py", "x = 1\ny = 2\n");
        assert!(extract_function_body_tasks(&py).unwrap().is_empty());
    }

    #[test]
    fn nested_functions_both_extracted_in_line_order() {
        let src = "function outer(a) {\n  var k = 1;\n  function inner(b) {\n    return b + k;\n  }\n  return inner(a);\n}\n";
        let file = SourceFile::from_text("r", "n.js", src);
        let tasks = extract_function_body_tasks(&file).unwrap();
        assert_eq!(tasks.len(), 2);
        assert_eq!(tasks[0].hole_start_line, 2);
        assert_eq!(tasks[1].hole_start_line, 4);
        assert_eq!(tasks[1].ground_truth, "    return b + k;\n");
        assert_eq!(
            tasks[0].ground_truth,
            "  var k = 1;\n  function inner(b) {\n    return b + k;\n  }\n  return inner(a);\n"
        );
        for t in &tasks {
            assert_eq!(t.reconstruct(), src);
        }
    }

    #[test]
    fn control_flow_blocks_are_not_functions() {
        let src = "void f() {\n  if (x) {\n    y();\n  }\n  for (int i = 0; i < n; i++) {\n    z();\n  }\n  while (ok(a)) {\n    w();\n  }\n  Runnable r = new Runnable() {\n    int q;\n  };\n}\n";
        let file = SourceFile::from_text("r", "F.java", src);
        let tasks = extract_function_body_tasks(&file).unwrap();
        assert_eq!(tasks.len(), 1);
        assert_eq!(tasks[0].hole_start_line, 2);
    }

    #[test]
    fn braces_in_strings_and_comments_ignored() {
        let src = "int g() {\n  String s = \"}\"; // }\n  char c = '}';\n  /* } */ return 1;\n}\n";
        let file = SourceFile::from_text("r", "G.java", src);
        let tasks = extract_function_body_tasks(&file).unwrap();
        assert_eq!(tasks.len(), 1);
        assert_eq!(tasks[0].suffix, "}\n");
    }

    #[test]
    fn multiline_and_allman_signatures() {
        let src = "public void run(int a,\n                int b) {\n  go(a, b);\n}\nvoid other()\n{\n  stop();\n}\n";
        let file = SourceFile::from_text("r", "M.java", src);
        let tasks = extract_function_body_tasks(&file).unwrap();
        assert_eq!(tasks.len(), 2);
        assert_eq!(tasks[0].ground_truth, "  go(a, b);\n");
        assert_eq!(tasks[1].ground_truth, "  stop();\n");
    }

    #[test]
    fn rust_and_go_signatures() {
        let src = "pub fn parse<'a>(s: &'a str) -> Result<(), E> {\n    todo(s)\n}\nfunc (r *T) Name(a int) (int, error) {\n\treturn 0, nil\n}\n";
        let file = SourceFile::from_text("r", "x.rs", src);
        assert_eq!(extract_function_body_tasks(&file).unwrap().len(), 2);
    }

    #[test]
    fn unbalanced_close_is_skipped() {
        let src = "int h() {\n  return 1; }\nint k() {\n  return 2;\n";
        let file = SourceFile::from_text("r", "H.java", src);
        let out = extract_function_body_tasks_detailed(&file).unwrap();
        assert!(out.tasks.is_empty());
        assert_eq!(out.skipped, 2);
    }

    #[test]
    fn python_def_bodies() {
        let src = "import os\n\ndef add(a, b):\n    c = a + b\n\n    return c\n\n\nclass K:\n    def m(self,\n          x):\n        def inner():\n            return x\n        return inner\n\nprint(add(1, 2))\n";
        let file = SourceFile::from_text("r", "m.py", src);
        let tasks = extract_function_body_tasks(&file).unwrap();
        assert_eq!(tasks.len(), 3);
        assert_eq!(tasks[0].ground_truth, "    c = a + b\n\n    return c\n");
        assert!(tasks[0].suffix.starts_with("\n\nclass K:"));
        assert_eq!(tasks[1].hole_start_line, 12);
        assert_eq!(
            tasks[1].ground_truth,
            "        def inner():\n            return x\n        return inner\n"
        );
        assert_eq!(tasks[2].ground_truth, "            return x\n");
        for t in &tasks {
            assert_eq!(t.reconstruct(), src);
        }
    }

    #[test]
    fn python_docstring_with_shallow_lines() {
        let src = "def f():\n    \"\"\"Doc\nflush left\n    \"\"\"\n    return 1\nx = 2\n";
        let file = SourceFile::from_text("r", "d.py", src);
        let tasks = extract_function_body_tasks(&file).unwrap();
        assert_eq!(tasks.len(), 1);
        assert_eq!(tasks[0].suffix, "x = 2\n");
    }

    #[test]
    fn one_line_def_is_skipped() {
        let file = SourceFile::from_text("r", "o.py", "def f(): return 1\nx = 1\n");
        let out = extract_function_body_tasks_detailed(&file).unwrap();
        assert!(out.tasks.is_empty());
    }

    #[test]
    fn other_language_rejected() {
        let file = SourceFile::from_text("r", "notes.txt", "hello\n");
        assert!(matches!(extract_function_body_tasks(&file), Err(CorpusError::UnsupportedLanguage(_))));
    }
}
