//! End-to-end analysis over the synthetic corpus with the offline stub.

use std::sync::Arc;

use coachlab_core::analysis::{run_analysis, AnalysisOptions, EmbedSource};
use coachlab_core::gateway::{EmbeddingCache, GatewaySettings, LlmGateway, OfflineStub};
use coachlab_core::synth::{synth_corpus, SynthSpec};

fn counted() -> (Arc<OfflineStub>, LlmGateway) {
    let stub = Arc::new(OfflineStub::default());
    let gw = LlmGateway::new(stub.clone(), stub.clone(), EmbeddingCache::in_memory(), GatewaySettings::default());
    (stub, gw)
}

#[tokio::test]
async fn synthetic_corpus_end_to_end() {
    let corpus = synth_corpus(&SynthSpec::default());
    let opts = AnalysisOptions::default();
    let a = run_analysis(&LlmGateway::offline(), corpus.clone(), &opts).await.unwrap();
    let mut reversed = corpus.clone();
    reversed.reverse();
    let b = run_analysis(&LlmGateway::offline(), reversed, &opts).await.unwrap();
    assert_eq!(a.to_json(), b.to_json());

    assert_eq!(a.participants.input, 105);
    assert_eq!(a.participants.retained, 101);
    assert_eq!(a.participants.retained_by_condition["treatment"], 69);
    assert_eq!(a.participants.complete_surveys_by_condition["control"], 29);
    let fluency = &a.sections["creativity"]["fluency"]["inputs"];
    let total = |c: &str| fluency[c]["mean"].as_f64().unwrap() * fluency[c]["n"].as_f64().unwrap();
    assert!((total("treatment") - 590.0).abs() < 1e-9);
    assert!((total("control") - 295.0).abs() < 1e-9);
    assert!(!a.to_json().contains("\"error\""));
}

#[tokio::test]
async fn work_dir_caches_extraction() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth_corpus(&SynthSpec { treatment: 8, control: 6, treatment_ideas: 40, control_ideas: 30, ..SynthSpec::default() });
    let opts = AnalysisOptions { work_dir: Some(dir.path().to_path_buf()), ..AnalysisOptions::default() };

    let (stub, gw) = counted();
    let first = run_analysis(&gw, corpus.clone(), &opts).await.unwrap();
    assert!(stub.chat_calls() > 0);
    for f in ["ideas.jsonl", "metrics.jsonl", "behavior.jsonl"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }

    let (stub2, gw2) = counted();
    let second = run_analysis(&gw2, corpus, &opts).await.unwrap();
    assert_eq!(stub2.chat_calls(), 0);
    assert_eq!(first.to_json(), second.to_json());
}

#[tokio::test]
async fn embed_source_changes_provenance_only_where_expected() {
    let corpus = synth_corpus(&SynthSpec { treatment: 8, control: 6, treatment_ideas: 40, control_ideas: 30, ..SynthSpec::default() });
    let title = AnalysisOptions { embed_source: EmbedSource::Title, ..AnalysisOptions::default() };
    let r = run_analysis(&LlmGateway::offline(), corpus, &title).await.unwrap();
    assert_eq!(r.provenance.embed_source, "title");
}
