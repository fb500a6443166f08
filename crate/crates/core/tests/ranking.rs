use std::collections::BTreeMap;

use socialformer::model::{group_loss, ModelConfig, ModelParams};
use socialformer::pipeline::PipelineConfig;
use socialformer::ranking::{
    build_groups, generate, mrr_at_k, rerank, train, Candidates, Collection, FixtureConfig,
    Fixtures, TrainConfig,
};
use socialformer::text::{tokenize, Qrels};

fn small_model(seed: u64) -> ModelParams {
    ModelParams::init(&ModelConfig {
        embed_dim: 8,
        num_heads: 2,
        num_blocks: 2,
        ffn_dim: 16,
        window_size: 32,
        max_subgraphs: 4,
        vocab_hash_size: 512,
        init_seed: seed,
    })
    .unwrap()
}

fn small_pipeline() -> PipelineConfig {
    PipelineConfig {
        max_subgraphs: 4,
        cap: 16,
        ..Default::default()
    }
}

fn small_fixtures(seed: u64, queries: usize, candidates: usize) -> (Fixtures, Collection) {
    let fixtures = generate(&FixtureConfig {
        num_queries: queries,
        candidates_per_query: candidates,
        doc_len: (60, 100),
        plant_spread: 10,
        seed,
        ..Default::default()
    });
    let (corpus, queries) = fixtures.tokenized(2048).unwrap();
    let collection = Collection::new(corpus, queries).unwrap();
    (fixtures, collection)
}

/// Every document is the same single token, so every candidate gets the
/// same model input.
fn identical_collection(n: usize) -> (Collection, Qrels, Candidates) {
    let ids: Vec<String> = (0..n).map(|i| format!("d{i}")).collect();
    let corpus = ids
        .iter()
        .map(|id| tokenize(id.clone(), "same", 16).unwrap())
        .collect();
    let queries = vec![tokenize("q", "same", 16).unwrap()];
    let collection = Collection::new(corpus, queries).unwrap();
    let judged: BTreeMap<String, i32> = ids
        .iter()
        .enumerate()
        .map(|(i, d)| (d.clone(), i32::from(i == 3)))
        .collect();
    let qrels = Qrels::from([("q".to_string(), judged)]);
    let candidates = Candidates::from([("q".to_string(), ids)]);
    (collection, qrels, candidates)
}

#[test]
fn single_candidate_ranks_first() {
    let (fixtures, collection) = small_fixtures(1, 1, 3);
    let params = small_model(0);
    let doc = fixtures.candidates["q000"][1].clone();
    let ranked = rerank(
        &params,
        &collection,
        "q000",
        std::slice::from_ref(&doc),
        &small_pipeline(),
        0,
    )
    .unwrap();
    assert_eq!(ranked.len(), 1);
    assert_eq!(
        (ranked[0].doc_id.as_str(), ranked[0].rank),
        (doc.as_str(), 1)
    );
}

#[test]
fn tied_scores_rank_by_doc_id() {
    let (collection, _, candidates) = identical_collection(5);
    let params = small_model(0);
    let mut shuffled = candidates["q"].clone();
    shuffled.reverse();
    let ranked = rerank(&params, &collection, "q", &shuffled, &small_pipeline(), 4).unwrap();
    let ids: Vec<&str> = ranked.iter().map(|e| e.doc_id.as_str()).collect();
    assert_eq!(ids, ["d0", "d1", "d2", "d3", "d4"]);
    assert!(ranked.iter().all(|e| e.score == ranked[0].score));
}

#[test]
fn fixture_query_golden_ordering() {
    let (fixtures, collection) = small_fixtures(3, 1, 5);
    let params = small_model(7);
    let ranked = rerank(
        &params,
        &collection,
        "q000",
        &fixtures.candidates["q000"],
        &small_pipeline(),
        7,
    )
    .unwrap();
    let ids: Vec<&str> = ranked.iter().map(|e| e.doc_id.as_str()).collect();
    assert_eq!(
        ids,
        ["D00002", "D00003", "D00000", "D00004", "D00001"],
        "{ranked:?}"
    );
}

#[test]
fn unknown_ids_are_reported() {
    let (_, collection) = small_fixtures(1, 1, 2);
    let params = small_model(0);
    let err = rerank(
        &params,
        &collection,
        "q000",
        &["missing".to_string()],
        &small_pipeline(),
        0,
    )
    .unwrap_err();
    assert!(err.to_string().contains("missing"));
    assert!(rerank(&params, &collection, "nope", &[], &small_pipeline(), 0).is_ok());
}

#[test]
fn zero_steps_leave_parameters_unchanged() {
    let (fixtures, collection) = small_fixtures(2, 2, 4);
    let initial = small_model(1);
    let config = TrainConfig {
        pipeline: small_pipeline(),
        max_steps: Some(0),
        ..Default::default()
    };
    let out = train(
        &collection,
        &fixtures.qrels,
        &fixtures.candidates,
        initial.clone(),
        &config,
    )
    .unwrap();
    assert!(out.losses.is_empty());
    assert_eq!(out.params, initial);
}

#[test]
fn identical_documents_keep_uniform_loss() {
    let (collection, qrels, candidates) = identical_collection(8);
    let config = TrainConfig {
        pipeline: small_pipeline(),
        epochs: 3,
        ..Default::default()
    };
    let out = train(&collection, &qrels, &candidates, small_model(2), &config).unwrap();
    assert_eq!(out.losses.len(), 3);
    for (_, loss) in out.losses {
        assert!((loss - 8f64.ln()).abs() < 1e-12, "{loss}");
    }
}

#[test]
fn training_lowers_mean_group_loss() {
    let (fixtures, collection) = small_fixtures(5, 12, 8);
    let seed = 5;
    let config = TrainConfig {
        pipeline: small_pipeline(),
        seed,
        epochs: 2,
        ..Default::default()
    };
    let initial = small_model(seed);
    let groups = build_groups(
        &fixtures.qrels,
        &fixtures.candidates,
        config.neg_ratio,
        seed,
    );
    let mean_loss = |params: &ModelParams| {
        let total: f64 = groups
            .iter()
            .map(|g| {
                let inputs: Vec<_> = g
                    .doc_ids()
                    .map(|d| {
                        collection
                            .input(&g.query_id, d, &config.pipeline, params, seed)
                            .unwrap()
                    })
                    .collect();
                group_loss(params, &inputs, 0).unwrap()
            })
            .sum();
        total / groups.len() as f64
    };
    let before = mean_loss(&initial);
    let out = train(
        &collection,
        &fixtures.qrels,
        &fixtures.candidates,
        initial,
        &config,
    )
    .unwrap();
    let after = mean_loss(&out.params);
    assert!(after < before, "{before} -> {after}");
    assert_eq!(out.losses.len(), 24);
    assert_eq!(out.losses.last().unwrap().0, 24);
}

#[test]
fn training_is_deterministic() {
    let (fixtures, collection) = small_fixtures(6, 3, 4);
    let config = TrainConfig {
        pipeline: small_pipeline(),
        seed: 6,
        ..Default::default()
    };
    let a = train(
        &collection,
        &fixtures.qrels,
        &fixtures.candidates,
        small_model(0),
        &config,
    )
    .unwrap();
    let b = train(
        &collection,
        &fixtures.qrels,
        &fixtures.candidates,
        small_model(0),
        &config,
    )
    .unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.losses, b.losses);
}

#[test]
fn trained_run_is_scored_against_qrels() {
    let (fixtures, collection) = small_fixtures(8, 3, 4);
    let params = small_model(0);
    let run = socialformer::ranking::rerank_all(
        &params,
        &collection,
        &fixtures.candidates,
        &small_pipeline(),
        0,
    )
    .unwrap();
    assert_eq!(run.len(), 3);
    let mrr = mrr_at_k(&run, &fixtures.qrels, 10);
    assert!(mrr > 0.0 && mrr <= 1.0);
}
