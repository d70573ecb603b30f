#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// Writes `n` small source files (two thirds Java, the rest Python).
pub fn write_corpus(dir: &Path, n: usize) {
    fs::create_dir_all(dir.join("src")).unwrap();
    for i in 0..n {
        if i % 3 == 2 {
            let text = format!(
                "import math\n\n\ndef scale_{i}(values):\n    total = 0\n    for v in values:\n        total += v * {i}\n    return total\n\n\n\
                 def label_{i}(name):\n    prefix = \"svc{i}\"\n    return prefix + \":\" + name.strip()\n"
            );
            fs::write(dir.join(format!("src/util_{i:02}.py")), text).unwrap();
        } else {
            let text = format!(
                "package demo.svc;\n\nimport java.util.List;\n\npublic class Service{i} {{\n    private final int limit = {i};\n\n\
                 \x20   public int total{i}(List<Integer> values) {{\n        int sum = 0;\n        for (int v : values) {{\n\
                 \x20           sum += v * {i};\n        }}\n        return sum + limit;\n    }}\n\n\
                 \x20   public String label{i}(String name) {{\n        String prefix = \"svc{i}\";\n        return prefix + \":\" + name.trim();\n    }}\n}}\n"
            );
            fs::write(dir.join(format!("src/Service{i:02}.java")), text).unwrap();
        }
    }
    fs::write(dir.join("README.txt"), "not source\n").unwrap();
}

/// Writes a config using local backends and returns its path.
pub fn write_config(dir: &Path, corpus: &Path, extra: &str) -> PathBuf {
    let path = dir.join("prism.json");
    let text = format!(
        r#"{{
  "corpus": [{{"path": "{}", "include": ["**/*.java", "**/*.py"], "repo_id": "demo"}}],
  "backend": {{"kind": "local", "dim": 128}},
  "seed": 7,
  "selector": {{"passes": 2}}{extra}
}}
"#,
        corpus.display()
    );
    fs::write(&path, text).unwrap();
    path
}

pub fn prism(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prism")).args(args).output().expect("binary runs")
}

pub fn ok(args: &[&str]) -> String {
    let out = prism(args);
    assert!(out.status.success(), "prism {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// ingest, index, train and run into `out`.
pub fn full_run(config: &Path, out: &Path) {
    let (config, out) = (config.to_str().unwrap(), out.to_str().unwrap());
    for step in ["ingest", "index", "train", "run"] {
        ok(&[step, "--config", config, "--out", out, "--jobs", "2"]);
    }
}
