use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use replyscore::corpus::LabeledSentence;
use replyscore::fewshot::{build_context, reconstruct_context, run_fewshot, sample_examples, FewShotConfig};
use replyscore::promptgrid::{expand_grid, filter_specs, GridConfig, PromptSpec, ReplyForm};
use replyscore::scoring::{ConstantBackend, HashNoiseBackend, LikelihoodMethod, OracleBackend};
use replyscore::synthetic::separable_corpus;
use replyscore::{Mode, SentimentLabel};

fn specs(codes: &[&str]) -> Vec<PromptSpec> {
    let all = expand_grid(&GridConfig::default_grid()).unwrap();
    let codes: Vec<String> = codes.iter().map(|c| c.to_string()).collect();
    filter_specs(&all, &codes).unwrap()
}

fn data() -> (Vec<LabeledSentence>, Vec<LabeledSentence>) {
    let train = separable_corpus(7, &SentimentLabel::ALL, 1, "tr-");
    let test = separable_corpus(5, &SentimentLabel::ALL, 2, "te-");
    (train, test)
}

/// Independent enumeration of the documented draw: one ChaCha20 stream per
/// sentence index, one uniform index per class pool in class order.
fn expected_ids(train: &[LabeledSentence], seed: u64, index: usize) -> Vec<String> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    SentimentLabel::ALL
        .iter()
        .map(|&label| {
            let pool: Vec<&LabeledSentence> = train.iter().filter(|s| s.gold == label).collect();
            pool[rng.gen_range(0..pool.len())].id.clone()
        })
        .collect()
}

#[test]
fn sampling_follows_the_seeded_stream() {
    let (train, _) = data();
    let spec = &specs(&["7-2-2"])[0];
    for seed in [1, 2] {
        for index in 0..10 {
            let ids: Vec<String> = sample_examples(&train, seed, index, spec)
                .unwrap()
                .into_iter()
                .map(|e| e.sentence_id)
                .collect();
            assert_eq!(ids, expected_ids(&train, seed, index), "seed {seed} index {index}");
        }
    }
    let draws = |seed| (0..10).map(|i| expected_ids(&train, seed, i)).collect::<Vec<_>>();
    assert_ne!(draws(1), draws(2));
}

#[test]
fn examples_cover_each_class_in_order() {
    let (train, test) = data();
    let spec = &specs(&["7-2-2"])[0];
    let examples = sample_examples(&train, 3, 0, spec).unwrap();
    let labels: Vec<SentimentLabel> = examples.iter().map(|e| e.label).collect();
    assert_eq!(labels, SentimentLabel::ALL.to_vec());
    let context = build_context(&examples, spec, &test[0].text).unwrap();
    let serialized = context.serialize();
    assert!(serialized.ends_with(&context.target_query));
    for e in &examples {
        assert!(serialized.contains(&format!("{}\n{}\n", e.query, e.response)));
    }
    assert!(build_context(&examples[..3], spec, &test[0].text).is_err());
}

#[test]
fn manifest_reconstructs_every_context() {
    let (train, test) = data();
    let specs = specs(&["7-2-2", "2-1-0"]);
    let backend = HashNoiseBackend::new(5);
    let config = FewShotConfig {
        runs: 2,
        base_seed: 11,
        ..FewShotConfig::default()
    };
    let out = run_fewshot(
        &test,
        &train,
        &specs,
        &[LikelihoodMethod::L1Sum],
        &backend,
        Mode::FourClass,
        &config,
    )
    .unwrap();
    assert_eq!(out.manifests.len(), 2);
    for (r, manifest) in out.manifests.iter().enumerate() {
        assert_eq!(manifest.seed, 11 + r as u64);
        assert_eq!(manifest.entries.len(), test.len());
        for (i, sentence) in test.iter().enumerate() {
            let entry = &manifest.entries[&sentence.id];
            assert_eq!(entry.sentence_index, i);
            assert_eq!(entry.example_ids, expected_ids(&train, manifest.seed, i));
            for spec in &specs {
                reconstruct_context(entry, manifest.reply_form, &train, spec, &sentence.text).unwrap();
            }
        }
    }
    let json = serde_json::to_string(&out.manifests[0]).unwrap();
    let back: replyscore::fewshot::AuditManifest = serde_json::from_str(&json).unwrap();
    assert_eq!(back, out.manifests[0]);

    let mut tampered = out.manifests[0].entries[&test[0].id].clone();
    tampered.example_ids.swap(0, 1);
    assert!(reconstruct_context(&tampered, ReplyForm::Bare, &train, &specs[0], &test[0].text).is_err());
}

#[test]
fn test_sentences_never_serve_as_examples() {
    let (train, test) = data();
    let specs = specs(&["9-1-4"]);
    let backend = OracleBackend::new(test.iter().chain(&train), specs.iter().flat_map(|s| &s.replies));
    let config = FewShotConfig {
        runs: 3,
        ..FewShotConfig::default()
    };
    let out = run_fewshot(
        &test,
        &train,
        &specs,
        &[LikelihoodMethod::L2PerToken],
        &backend,
        Mode::FourClass,
        &config,
    )
    .unwrap();
    let test_ids: HashSet<&str> = test.iter().map(|s| s.id.as_str()).collect();
    for manifest in &out.manifests {
        for entry in manifest.entries.values() {
            assert!(entry.example_ids.iter().all(|id| !test_ids.contains(id.as_str())));
        }
    }
    let cell = out.report.cell("9-1-4", LikelihoodMethod::L2PerToken).unwrap();
    assert_eq!(cell.f1_per_run, vec![100.0; 3]);

    let mut overlapping = train.clone();
    overlapping.push(test[0].clone());
    assert!(run_fewshot(
        &test,
        &overlapping,
        &specs,
        &[LikelihoodMethod::L1Sum],
        &backend,
        Mode::FourClass,
        &config
    )
    .is_err());
}

#[test]
fn constant_backend_has_zero_spread() {
    let (train, test) = data();
    let specs = specs(&["7-2-2"]);
    let backend = ConstantBackend::new(SentimentLabel::Neg, specs.iter().flat_map(|s| &s.replies));
    let config = FewShotConfig {
        runs: 4,
        ..FewShotConfig::default()
    };
    let out = run_fewshot(
        &test,
        &train,
        &specs,
        &LikelihoodMethod::ALL,
        &backend,
        Mode::FourClass,
        &config,
    )
    .unwrap();
    for cell in &out.report.cells {
        assert_eq!(cell.f1_per_run.len(), 4);
        assert_eq!(cell.std, 0.0);
        // Always NEG over a balanced 4-class test set: F1 of NEG is 2/5, others 0.
        assert!((cell.mean - 10.0).abs() < 1e-9, "{}", cell.mean);
    }
    assert_eq!(out.report.std_kind, "population");
}
