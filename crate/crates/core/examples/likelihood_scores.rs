//! The three likelihood scores on a hand-scored backend, where the shorter
//! reply wins under the plain sum but loses once scores are normalised.
//!
//!     cargo run --example likelihood_scores

use replyscore::corpus::LabeledSentence;
use replyscore::promptgrid::{expand_grid, GridConfig, ReplyForm};
use replyscore::scoring::{classify, FnBackend, LikelihoodMethod, TokenLogProb};
use replyscore::{BackendError, SentimentLabel};

fn main() -> replyscore::Result<()> {
    let spec = expand_grid(&GridConfig::default_grid())?
        .into_iter()
        .find(|s| s.code.to_string() == "7-2-2")
        .expect("7-2-2 is in the default grid");
    let pick = |form, label| {
        spec.replies
            .iter()
            .find(|r| r.form == form && r.label == label)
            .expect("reply exists")
            .clone()
    };
    let pos = pick(ReplyForm::Bare, SentimentLabel::Pos);
    let neg = pick(ReplyForm::Opinion, SentimentLabel::Neg);

    // POS: 2 tokens at -2.0 (sum -4). NEG: 6 subwords at -1.0 (sum -6).
    let (pos_text, neg_text) = (pos.text.clone(), neg.text.clone());
    let backend = FnBackend::new("hand-scored", move |_: &str, completion: &str| {
        let pieces: &[&str] = if completion == pos_text {
            &["Positivt", " ."]
        } else if completion == neg_text {
            &["Jeg", " vil", " si", " neg", "ativt", " ."]
        } else {
            return Err(BackendError::new("unexpected reply"));
        };
        let lp = if pieces.len() == 2 { -2.0 } else { -1.0 };
        Ok(pieces.iter().map(|p| TokenLogProb::new(*p, lp)).collect())
    });

    let sentence = LabeledSentence::new(
        "demo",
        "Legen var grei , men ventetiden var lang .",
        SentimentLabel::Mix,
    );
    let replies = vec![pos, neg];
    for method in LikelihoodMethod::ALL {
        let p = classify(&sentence, &spec, &replies, method, &backend, None)?;
        let scores: Vec<String> = p
            .scores
            .iter()
            .map(|s| format!("{:?} {:.3}", s.reply, s.score))
            .collect();
        println!("{method}: {} <- [{}]", p.label, scores.join(", "));
    }
    Ok(())
}
