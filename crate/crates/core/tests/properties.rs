use std::sync::Arc;

use proptest::prelude::*;

use replyscore::baseline::build_vocab;
use replyscore::corpus::{class_distribution, stratified_split, ClassDistribution, Corpus, LabeledSentence, Split};
use replyscore::metrics::{accuracy, cohens_kappa, macro_f1, ConfusionMatrix};
use replyscore::promptgrid::{expand_grid, filter_specs, GridConfig, ReplyCandidate};
use replyscore::scoring::{
    evaluate_run, predict_from_scores, CachedBackend, CompletionScore, HashNoiseBackend, LikelihoodMethod,
    ScorerBackend, ScoringOptions, TokenLogProb,
};
use replyscore::synthetic::synthetic_corpus;
use replyscore::{Mode, SentimentLabel};

fn label() -> impl Strategy<Value = SentimentLabel> {
    prop::sample::select(SentimentLabel::ALL.to_vec())
}

fn replies() -> Vec<ReplyCandidate> {
    expand_grid(&GridConfig::default_grid()).unwrap()[0].replies.clone()
}

fn scores_with_shift(logprobs: &[Vec<f64>], shift: f64) -> Vec<CompletionScore> {
    logprobs
        .iter()
        .enumerate()
        .map(|(i, lps)| {
            let tokens = lps
                .iter()
                .enumerate()
                .map(|(j, &lp)| TokenLogProb::new(format!("t{j}"), lp + shift))
                .collect();
            CompletionScore::new(format!("svar {i}"), tokens).unwrap()
        })
        .collect()
}

proptest! {
    #[test]
    fn per_token_argmax_ignores_a_constant_shift(
        logprobs in prop::collection::vec(prop::collection::vec(-20.0f64..0.0, 1..6), 2..8),
        shift in -5.0f64..5.0,
    ) {
        let replies = replies();
        let refs: Vec<&ReplyCandidate> = replies.iter().take(logprobs.len()).collect();
        let method = [LikelihoodMethod::L2PerToken];
        let base = predict_from_scores("s", "7-2-2", &refs, &scores_with_shift(&logprobs, 0.0), &method);
        let moved = predict_from_scores("s", "7-2-2", &refs, &scores_with_shift(&logprobs, shift), &method);
        // Averages within 1e-9 of each other could swap under rounding.
        let mut avgs: Vec<f64> = logprobs.iter().map(|l| l.iter().sum::<f64>() / l.len() as f64).collect();
        avgs.sort_by(|a, b| b.partial_cmp(a).unwrap());
        prop_assume!(avgs[0] - avgs[1] > 1e-9);
        prop_assert_eq!(&base[0].chosen_reply, &moved[0].chosen_reply);
    }

    #[test]
    fn kappa_is_symmetric_and_bounded(pairs in prop::collection::vec((label(), label()), 1..60)) {
        let (a, b): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let ab = cohens_kappa(&a, &b).unwrap();
        let ba = cohens_kappa(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&ab));
    }

    #[test]
    fn macro_f1_and_accuracy_are_percentages(pairs in prop::collection::vec((label(), label()), 0..80)) {
        let cm = ConfusionMatrix::from_pairs(&SentimentLabel::ALL, pairs.clone()).unwrap();
        let f1 = macro_f1(&cm);
        prop_assert!((0.0..=100.0).contains(&f1));
        prop_assert!((0.0..=100.0).contains(&accuracy(&cm)));
        if !pairs.is_empty() && pairs.iter().all(|(g, p)| g == p) {
            prop_assert!((accuracy(&cm) - 100.0).abs() < 1e-9);
        }
    }

    #[test]
    fn split_is_balanced_per_class(
        counts in (1usize..40, 1usize..40, 1usize..40, 1usize..40),
        seed in any::<u64>(),
    ) {
        let dist = ClassDistribution::from_counts(counts.0, counts.1, counts.2, counts.3);
        let corpus = Corpus::new(synthetic_corpus(&dist, 3)).unwrap();
        let split = stratified_split(&corpus, seed).unwrap();
        let train = class_distribution(&split, Some(Split::Train)).unwrap();
        let test = class_distribution(&split, Some(Split::Test)).unwrap();
        for l in SentimentLabel::ALL {
            prop_assert!(train.get(l).abs_diff(test.get(l)) <= 1);
            prop_assert_eq!(train.get(l) + test.get(l), dist.get(l));
        }
        prop_assert_eq!(stratified_split(&corpus, seed).unwrap(), split);
    }

    #[test]
    fn vocabulary_ignores_sentence_order(seed in any::<u64>(), rotate in 0usize..50) {
        let dist = ClassDistribution::from_counts(15, 15, 10, 10);
        let sentences: Vec<LabeledSentence> = synthetic_corpus(&dist, seed);
        let mut rotated = sentences.clone();
        rotated.rotate_left(rotate);
        prop_assert_eq!(build_vocab(&sentences).unwrap(), build_vocab(&rotated).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn replayed_cache_reproduces_predictions(seed in any::<u64>(), jobs in 1usize..4) {
        let dir = tempfile::tempdir().unwrap();
        let test = synthetic_corpus(&ClassDistribution::from_counts(4, 4, 3, 2), seed);
        let all = expand_grid(&GridConfig::default_grid()).unwrap();
        let specs = filter_specs(&all, &["7-2-2".to_string(), "9-1-4".to_string()]).unwrap();
        let options = ScoringOptions { jobs, ..ScoringOptions::default() };
        let live = CachedBackend::open(dir.path(), Arc::new(HashNoiseBackend::new(seed))).unwrap();
        let first = evaluate_run(&test, &specs, &LikelihoodMethod::ALL, &live, Mode::FourClass, &options).unwrap();
        live.flush().unwrap();
        let replay = CachedBackend::replay(dir.path(), HashNoiseBackend::new(seed).id()).unwrap();
        let second = evaluate_run(&test, &specs, &LikelihoodMethod::ALL, &replay, Mode::FourClass, &options).unwrap();
        prop_assert_eq!(
            serde_json::to_string(&first.predictions).unwrap(),
            serde_json::to_string(&second.predictions).unwrap()
        );
        prop_assert_eq!(replay.misses(), 0);
    }
}
