use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn toolrec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_toolrec"))
        .args(args)
        .env_remove("TOOLREC_LLM_API_KEY")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_clean_fixture_reports_zero_violations() {
    let o = toolrec(&[
        "validate",
        "--catalog",
        s(&fixture("catalog.json")),
        "--dataset",
        s(&fixture("dataset.jsonl")),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("0 violations"));
}

#[test]
fn validate_lists_every_bad_record() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.jsonl");
    std::fs::write(
        &data,
        concat!(
            "{\"query\": \"check the weather\", \"tools\": [\"weather_report\"]}\n",
            "{\"query\": \"mystery\", \"tools\": [\"no_such_tool\"]}\n",
            "{\"query\": \"\", \"tools\": [\"weather_report\"]}\n",
        ),
    )
    .unwrap();
    let o = toolrec(&[
        "validate",
        "--catalog",
        s(&fixture("catalog.json")),
        "--dataset",
        s(&data),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let text = stdout(&o);
    assert!(text.contains(":2: unknown tool `no_such_tool`"), "{text}");
    assert!(text.contains(":3: empty query"), "{text}");
    assert!(text.contains("2 violations"), "{text}");
}

#[test]
fn validate_missing_path_is_an_input_error() {
    let o = toolrec(&["validate", "--catalog", "/definitely/not/here.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/definitely/not/here.json"));
}

#[test]
fn unknown_flag_is_an_input_error() {
    let o = toolrec(&["evaluate", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
}

fn recommend_args<'a>(out: &'a str, extra: &[&'a str]) -> Vec<String> {
    let mut v: Vec<String> = [
        "recommend",
        "--query",
        "Check the weather in Paris and translate it, then email the result",
        "--catalog",
        s(&fixture("catalog.json")),
        "--dataset",
        s(&fixture("dataset.jsonl")),
        "--out",
        out,
    ]
    .iter()
    .map(|a| a.to_string())
    .collect();
    v.extend(extra.iter().map(|a| a.to_string()));
    v
}

#[test]
fn recommend_output_is_stable_and_writes_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.json");
    let rules = fixture("rules.txt");
    let args = recommend_args(s(&trace), &["--mapper", "mock", "--rules", s(&rules)]);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let first = toolrec(&args);
    let second = toolrec(&args);
    assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));
    assert_eq!(stdout(&first), stdout(&second));
    let text = stdout(&first);
    assert!(text.starts_with("recommended: "), "{text}");
    for id in ["weather_report", "text_translator", "email_sender"] {
        assert!(text.contains(&format!("{id} (bundle-retained)")), "{text}");
    }
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&trace).unwrap()).unwrap();
    assert_eq!(json["result"]["ranked_order"].as_array().unwrap().len(), 3);
    assert!(json["trace"]["acquisition"]["document_key"].is_string());
}

#[test]
fn recommend_missing_catalog_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.json");
    let o = toolrec(&[
        "recommend",
        "--query",
        "weather",
        "--catalog",
        "/missing/catalog.json",
        "--dataset",
        s(&fixture("dataset.jsonl")),
        "--mapper",
        "mock",
        "--rules",
        s(&fixture("rules.txt")),
        "--out",
        s(&trace),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/missing/catalog.json"));
}

#[test]
fn recommend_mock_without_rules_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.json");
    let args = recommend_args(s(&trace), &["--mapper", "mock"]);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let o = toolrec(&args);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--rules"));
}

#[test]
fn remote_mapper_without_credentials_names_the_variable() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.json");
    let args = recommend_args(s(&trace), &["--mapper", "remote"]);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let o = toolrec(&args);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("TOOLREC_LLM_API_KEY"), "{}", stderr(&o));
}

#[test]
fn dense_scorer_without_embeddings_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.json");
    let rules = fixture("rules.txt");
    let args = recommend_args(
        s(&trace),
        &["--mapper", "mock", "--rules", s(&rules), "--scorer", "dense"],
    );
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let o = toolrec(&args);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--embeddings"));
}

fn evaluate(out: &Path, extra: &[&str]) -> Output {
    let (catalog, dataset, rules) = (fixture("catalog.json"), fixture("dataset.jsonl"), fixture("rules.txt"));
    let mut args = vec![
        "evaluate",
        "--catalog",
        s(&catalog),
        "--dataset",
        s(&dataset),
        "--mapper",
        "mock",
        "--rules",
        s(&rules),
        "--seed",
        "3",
        "--out",
        s(out),
    ];
    args.extend_from_slice(extra);
    toolrec(&args)
}

#[test]
fn evaluate_writes_every_report_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = evaluate(dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in [
        "per_query.jsonl",
        "report.txt",
        "report.json",
        "manifest.json",
        "timing.json",
    ] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let table = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(table.contains("TRACC") && table.contains("NDCG@K") && table.contains("avg len diff"));
    assert_eq!(stdout(&o).lines().next(), table.lines().next());
    let per_query = std::fs::read_to_string(dir.path().join("per_query.jsonl")).unwrap();
    assert_eq!(per_query.lines().count(), 7);
}

#[test]
fn ablation_flag_is_recorded_in_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = evaluate(dir.path(), &["--ablation-no-bundle"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["enable_bundle_acquisition"], false);
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 3);
}

#[test]
fn evaluate_rejects_a_fraction_that_empties_a_side() {
    let dir = tempfile::tempdir().unwrap();
    let o = evaluate(dir.path(), &["--test-fraction", "0.01"]);
    assert_eq!(o.status.code(), Some(2));
}
