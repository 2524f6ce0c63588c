use std::sync::Arc;

use toolrec_core::coverage::CoverageMapper;
use toolrec_core::llm::{MockRuleTable, RuleMockMapper};
use toolrec_core::{
    AcquisitionConfig, EmbeddingTable, HistoricalRecord, History, Pipeline, PipelineConfig, Provenance, Query,
    ScorerKind, Tool, ToolCorpus, ToolSet,
};

const RULES: &str = "\
extract: weather => get the weather
extract: translate => translate the text
extract: email => email the result
match: weather => weather
match: translate => translate
match: email => mail
";

fn corpus() -> Arc<ToolCorpus> {
    let tools = [
        ("weather", "Weather", "current weather for a city"),
        ("translate", "Translator", "translate text between languages"),
        ("mail", "Mailer", "send an email message"),
        ("stocks", "Stocks", "stock market quotes"),
    ];
    Arc::new(ToolCorpus::new(tools.iter().map(|(i, n, d)| Tool::new(*i, *n, *d).unwrap()).collect()).unwrap())
}

fn set(ids: &[&str]) -> ToolSet {
    ids.iter().map(|s| toolrec_core::ToolId::new(*s).unwrap()).collect()
}

fn history(c: &ToolCorpus) -> Arc<History> {
    let rows: [(&str, &[&str]); 3] = [
        ("weather in Rome then translate it", &["weather", "translate"]),
        ("email the stock report", &["mail", "stocks"]),
        ("translate and email the memo", &["translate", "mail"]),
    ];
    let records = rows
        .iter()
        .map(|(q, b)| HistoricalRecord::new(Query::new(*q).unwrap(), set(b)).unwrap())
        .collect();
    Arc::new(History::new(records, c).unwrap())
}

fn mapper() -> Arc<dyn CoverageMapper> {
    Arc::new(RuleMockMapper::new(MockRuleTable::parse(RULES).unwrap()))
}

fn queries() -> Vec<Query> {
    [
        "weather in Paris then translate it",
        "translate and email the letter",
        "email the stock report",
        "weather and email",
        "translate",
    ]
    .iter()
    .map(|q| Query::new(*q).unwrap())
    .collect()
}

#[test]
fn batch_matches_sequential_in_order() {
    let c = corpus();
    let h = history(&c);
    let p = Pipeline::new(Arc::clone(&c), h, PipelineConfig::default(), mapper(), None).unwrap();
    let qs = queries();
    let sequential: Vec<_> = qs.iter().map(|q| p.recommend(q).unwrap().0).collect();
    for jobs in [1, 4] {
        let batch: Vec<_> = p.recommend_batch(&qs, jobs).into_iter().map(|r| r.unwrap().0).collect();
        assert_eq!(batch, sequential, "jobs = {jobs}");
    }
}

#[test]
fn every_result_satisfies_the_output_invariants() {
    let c = corpus();
    for enable in [true, false] {
        let cfg = PipelineConfig {
            enable_bundle_acquisition: enable,
            ..Default::default()
        };
        let p = Pipeline::new(Arc::clone(&c), history(&c), cfg, mapper(), None).unwrap();
        for q in queries() {
            let (r, _) = p.recommend(&q).unwrap();
            r.check_invariants().unwrap();
            assert!(r.recommended.iter().all(|t| c.contains(t.as_str())));
            if !enable {
                assert!(r.provenance.values().all(|p| *p == Provenance::RerankedAddition));
            }
        }
    }
}

#[test]
fn random_baseline_depends_only_on_seed_and_query() {
    let c = corpus();
    let run = |seed| {
        let cfg = PipelineConfig {
            acquisition: AcquisitionConfig {
                scorer: ScorerKind::Random,
                random_seed: Some(seed),
                ..Default::default()
            },
            ..Default::default()
        };
        let p = Pipeline::new(Arc::clone(&c), history(&c), cfg, mapper(), None).unwrap();
        queries()
            .iter()
            .map(|q| p.recommend(q).unwrap().1.acquisition.unwrap().bundle)
            .collect::<Vec<_>>()
    };
    assert_eq!(run(11), run(11));
    let h = history(&c);
    for bundle in run(11) {
        assert!(h.contains_bundle(&bundle));
    }
}

#[test]
fn dense_scorer_runs_end_to_end() {
    let c = corpus();
    let h = history(&c);
    // Axes: weather, translate, email, stocks.
    let axis = |w: f64, t: f64, e: f64, s: f64| vec![w, t, e, s];
    let mut table = EmbeddingTable::new(4).unwrap();
    for (key, v) in [
        ("weather", axis(1.0, 0.0, 0.0, 0.0)),
        ("translate", axis(0.0, 1.0, 0.0, 0.0)),
        ("mail", axis(0.0, 0.0, 1.0, 0.0)),
        ("stocks", axis(0.0, 0.0, 0.0, 1.0)),
        ("bundle-0", axis(1.0, 1.0, 0.0, 0.0)),
        ("bundle-1", axis(0.0, 0.0, 1.0, 1.0)),
        ("bundle-2", axis(0.0, 1.0, 1.0, 0.0)),
        ("record-0", axis(1.0, 1.0, 0.0, 0.0)),
        ("record-1", axis(0.0, 0.0, 1.0, 1.0)),
        ("record-2", axis(0.0, 1.0, 1.0, 0.0)),
        ("weather and email", axis(1.0, 0.0, 1.0, 0.0)),
        ("email the result", axis(0.1, 0.0, 1.0, 0.0)),
        ("get the weather", axis(1.0, 0.0, 0.1, 0.0)),
    ] {
        table.insert(key, v).unwrap();
    }
    let cfg = PipelineConfig {
        acquisition: AcquisitionConfig {
            scorer: ScorerKind::Dense,
            ..Default::default()
        },
        ..Default::default()
    };
    let p = Pipeline::new(Arc::clone(&c), h, cfg, mapper(), Some(Arc::new(table))).unwrap();
    let (r, trace) = p.recommend(&Query::new("weather and email").unwrap()).unwrap();
    let acquired = trace.acquisition.unwrap();
    // Ties between bundle-0 and bundle-2 go to the earlier bundle.
    assert_eq!(acquired.bundle, set(&["weather", "translate"]));
    assert!(r.recommended.contains("weather"));
    assert_eq!(r.provenance.get("weather"), Some(&Provenance::BundleRetained));
    r.check_invariants().unwrap();
}

#[test]
fn dense_scorer_without_a_vector_reports_the_key() {
    let c = corpus();
    let cfg = PipelineConfig {
        acquisition: AcquisitionConfig {
            scorer: ScorerKind::Dense,
            ..Default::default()
        },
        ..Default::default()
    };
    let empty = EmbeddingTable::new(4).unwrap();
    let err = Pipeline::new(Arc::clone(&c), history(&c), cfg, mapper(), Some(Arc::new(empty)))
        .err()
        .expect("missing vectors are rejected");
    assert!(err.to_string().contains("missing embedding"), "{err}");
}
