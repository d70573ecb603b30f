use prism_core::corpus::{CodeSnippet, CompletionTask, FileRef, TaskKind};
use prism_core::embed::{LocalEmbedder, ScriptedGenerator};
use prism_core::eval::{run_benchmark, EvalError, FailurePolicy};
use prism_core::generate::{assemble_augmented_prompt, assemble_fim_prompt, complete_task, Pipeline, PromptConfig, Strategy};
use prism_core::retrieve::{build_perspective_index, NoCache, Perspective, PerspectiveIndex, RetrievalConfig, SnippetStore};
use prism_core::synthetic::{venn_benchmark, VENN_EMBED_DIM};

fn task() -> CompletionTask {
    CompletionTask {
        task_id: String::from("demo/Main.java:3:rl"),
        kind: TaskKind::RandomLine,
        prefix: String::from("class Main {\n  int total = ledger.sumAccounts(book);\n"),
        suffix: String::from("\n}\n"),
        ground_truth: String::from("  audit.record(total);"),
        source_file: FileRef { repo_id: String::from("demo"), rel_path: String::from("Main.java") },
        hole_start_line: 3,
    }
}

fn corpus() -> Vec<CodeSnippet> {
    vec![
        CodeSnippet::new("demo", "Audit.java", 1, 3, "int total = ledger.sumAccounts(book);\naudit.record(total);\n"),
        CodeSnippet::new("demo", "Render.java", 1, 2, "canvas.draw(shape);\nwindow.flush();\n"),
        CodeSnippet::new("demo", "Net.java", 1, 2, "socket.open(port);\nstream.write(bytes);\n"),
    ]
}

struct Fixture {
    snippets: Vec<CodeSnippet>,
    store: SnippetStore,
    indexes: Vec<PerspectiveIndex>,
    embedder: LocalEmbedder,
    generator: ScriptedGenerator,
    retrieval: RetrievalConfig,
    prompt: PromptConfig,
    perspectives: Vec<Perspective>,
}

impl Fixture {
    fn new() -> Self {
        let snippets = corpus();
        let embedder = LocalEmbedder::new(256);
        let retrieval = RetrievalConfig::default();
        let prompt = PromptConfig::default();
        let t = task();
        let mut generator = ScriptedGenerator::new();
        // The model answers correctly only when the planted snippet is in its context.
        let planted = assemble_augmented_prompt(&prompt, t.language(), &[&snippets[0].text], &t.prefix, &t.suffix);
        generator.script(&planted, "  audit.record(total);\n  more();");
        let perspectives = vec![Perspective::LEXICAL, Perspective::BM25];
        let indexes = perspectives
            .iter()
            .map(|p| build_perspective_index(&snippets, p, &embedder, Some(&generator), &NoCache, &retrieval).unwrap())
            .collect();
        Fixture { store: SnippetStore::new(snippets.clone()), snippets, indexes, embedder, generator, retrieval, prompt, perspectives }
    }

    fn pipeline(&self) -> Pipeline<'_> {
        Pipeline {
            perspectives: &self.perspectives,
            indexes: &self.indexes,
            store: &self.store,
            embedder: &self.embedder,
            generator: &self.generator,
            retrieval: &self.retrieval,
            prompt: &self.prompt,
            linucb: None,
            logistic: None,
        }
    }
}

#[test]
fn planted_snippet_yields_exact_match() {
    let fx = Fixture::new();
    let record = complete_task(&fx.pipeline(), &task(), &Strategy::Single(Perspective::LEXICAL)).unwrap();
    assert_eq!(record.retrieval_ids, [fx.snippets[0].snippet_id.clone()]);
    assert_eq!(record.generation, "  audit.record(total);");
    assert_eq!((record.em, record.es), (1, 100.0));
    assert_eq!(record.arm, Some(0));
    assert!(record.error.is_none());

    let base = complete_task(&fx.pipeline(), &task(), &Strategy::Base).unwrap();
    assert!(base.retrieval_ids.is_empty());
    assert_eq!(base.em, 0);
    assert_eq!(base.prompt_hash, prism_core::embed::prompt_hash(&assemble_fim_prompt(&fx.prompt, &task().prefix, &task().suffix)));
}

#[test]
fn union_deduplicates_in_arm_order() {
    let fx = Fixture::new();
    let record = complete_task(&fx.pipeline(), &task(), &Strategy::Union).unwrap();
    // lexical and BM25 both find the planted snippet first
    assert_eq!(record.retrieval_ids, [fx.snippets[0].snippet_id.clone()]);
    assert_eq!(record.em, 1);
    assert_eq!(record.arm, None);
}

#[test]
fn selectors_must_be_present_and_arms_active() {
    let fx = Fixture::new();
    assert!(complete_task(&fx.pipeline(), &task(), &Strategy::LinUcb).is_err());
    assert!(complete_task(&fx.pipeline(), &task(), &Strategy::Single(Perspective::SUMMARY)).is_err());
}

#[test]
fn strategy_names_round_trip() {
    for name in ["base", "single:lexical", "single:hypo_line", "single:summary#6", "single:bm25", "union", "maxsim", "logistic", "linucb"] {
        let parsed: Strategy = name.parse().unwrap();
        assert_eq!(parsed.name(), name);
    }
    assert!("single:nope".parse::<Strategy>().is_err());
    assert!("single:lexical#5".parse::<Strategy>().is_err());
}

#[test]
fn benchmark_is_deterministic_and_rejects_empty_input() {
    let fx = Fixture::new();
    let strategies = [Strategy::Base, Strategy::Single(Perspective::LEXICAL), Strategy::Single(Perspective::BM25), Strategy::MaxSim];
    let a = run_benchmark(&fx.pipeline(), &[task()], &strategies, FailurePolicy::Count).unwrap();
    let b = run_benchmark(&fx.pipeline(), &[task()], &strategies, FailurePolicy::Count).unwrap();
    assert_eq!(serde_json::to_string(&a.1).unwrap(), serde_json::to_string(&b.1).unwrap());
    assert_eq!(a.0.row("single:lexical", "Avg").unwrap().em, 100.0);
    assert!(matches!(run_benchmark(&fx.pipeline(), &[task()], &[], FailurePolicy::Count), Err(EvalError::EmptyInput)));
}

#[test]
fn venn_singles_each_solve_a_third() {
    let retrieval = RetrievalConfig::default();
    let prompt = PromptConfig::default();
    let bench = venn_benchmark(3, 30, 3, &retrieval, &prompt);
    let embedder = LocalEmbedder::new(VENN_EMBED_DIM);
    let perspectives = Perspective::defaults().to_vec();
    let indexes: Vec<_> = perspectives
        .iter()
        .map(|p| build_perspective_index(&bench.snippets, p, &embedder, Some(&bench.generator), &NoCache, &retrieval).unwrap())
        .collect();
    let store = SnippetStore::new(bench.snippets.clone());
    let pipeline = Pipeline {
        perspectives: &perspectives,
        indexes: &indexes,
        store: &store,
        embedder: &embedder,
        generator: &bench.generator,
        retrieval: &retrieval,
        prompt: &prompt,
        linucb: None,
        logistic: None,
    };
    let strategies: Vec<Strategy> = perspectives.iter().map(|p| Strategy::Single(*p)).collect();
    let (report, records) = run_benchmark(&pipeline, &bench.test, &strategies, FailurePolicy::Count).unwrap();
    for s in &strategies {
        let em = report.row(&s.name(), "Avg").unwrap().em;
        assert!((em - 100.0 / 3.0).abs() < 1e-9, "{s}: {em}");
    }
    for r in records.iter().filter(|r| r.em == 1) {
        let solver = bench.solvable_by[&r.task_id];
        assert_eq!(perspectives[r.arm.unwrap()].id, solver);
    }
}
