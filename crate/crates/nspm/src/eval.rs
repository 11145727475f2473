//! Corpus BLEU-4, exact-match accuracy, and the end-to-end evaluation
//! driver (translate, optionally repair, then score).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{decode_sequence, print_sparql, CodecPreset, PatternTerm, QueryAst, TokenSeq};
use crate::interpreter::repair_sequence;
use crate::learner::Seq2SeqModel;
use crate::util::{map_ordered, Execution};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("hypothesis count {hyps} does not match reference count {refs}")]
    LengthMismatch { hyps: usize, refs: usize },
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus-level BLEU with uniform 4-gram weights, clipped counts, and the
/// standard brevity penalty. No smoothing: a missing n-gram order anywhere
/// in the corpus gives 0.
pub fn bleu_corpus(hypotheses: &[TokenSeq], references: &[TokenSeq]) -> Result<f64, EvalError> {
    if hypotheses.len() != references.len() {
        return Err(EvalError::LengthMismatch {
            hyps: hypotheses.len(),
            refs: references.len(),
        });
    }
    if hypotheses.is_empty() {
        return Ok(0.0);
    }
    let mut hyp_len = 0usize;
    let mut ref_len = 0usize;
    let mut clipped = [0usize; 4];
    let mut total = [0usize; 4];
    for (hyp, reference) in hypotheses.iter().zip(references) {
        hyp_len += hyp.len();
        ref_len += reference.len();
        for n in 1..=4 {
            let hyp_counts = ngram_counts(hyp.tokens(), n);
            let ref_counts = ngram_counts(reference.tokens(), n);
            for (gram, count) in &hyp_counts {
                total[n - 1] += count;
                clipped[n - 1] += (*count).min(ref_counts.get(gram).copied().unwrap_or(0));
            }
        }
    }
    let mut log_sum = 0.0;
    for n in 0..4 {
        if clipped[n] == 0 || total[n] == 0 {
            return Ok(0.0);
        }
        log_sum += 0.25 * (clipped[n] as f64 / total[n] as f64).ln();
    }
    let bp = if hyp_len >= ref_len {
        1.0
    } else if hyp_len == 0 {
        0.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    Ok(bp * log_sum.exp())
}

fn canonical(seq: &TokenSeq, preset: &CodecPreset) -> Option<String> {
    decode_sequence(seq, preset).ok().map(|ast| print_sparql(&ast))
}

/// Fraction of hypotheses whose decoded canonical query text equals the
/// reference's. An undecodable hypothesis never matches.
pub fn exact_match_accuracy(
    hypotheses: &[TokenSeq],
    references: &[TokenSeq],
    preset: &CodecPreset,
) -> Result<f64, EvalError> {
    if hypotheses.len() != references.len() {
        return Err(EvalError::LengthMismatch {
            hyps: hypotheses.len(),
            refs: references.len(),
        });
    }
    if hypotheses.is_empty() {
        return Ok(0.0);
    }
    let matches = hypotheses
        .iter()
        .zip(references)
        .filter(|(h, r)| match (canonical(h, preset), canonical(r, preset)) {
            (Some(a), Some(b)) => a == b,
            // keep a sane fallback when the reference itself is nonstandard
            (None, None) => h == r,
            _ => false,
        })
        .count();
    Ok(matches as f64 / hypotheses.len() as f64)
}

/// Replaces every resource-prefixed local name so that two queries that
/// differ only in which entity they mention compare equal.
fn mask_entities(mut ast: QueryAst) -> QueryAst {
    for p in &mut ast.patterns {
        for term in [&mut p.subject, &mut p.predicate, &mut p.object] {
            if let PatternTerm::Prefixed { prefix, local } = term {
                if *prefix == crate::codec::Prefix::Dbr {
                    *local = "_".into();
                }
            }
        }
    }
    ast
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorBreakdown {
    /// Raw output contained an `<unk>` token.
    pub oov: usize,
    /// Output only decoded after repair actions.
    pub repaired: usize,
    /// No repair produced a decodable query.
    pub unrepairable: usize,
    /// Decoded fine and matches the reference up to the choice of entity.
    pub entity_collision_suspect: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub bleu: f64,
    pub exact_match: f64,
    pub errors: ErrorBreakdown,
}

/// Translates every question, optionally repairs the output, and scores
/// BLEU/exact match against the reference queries.
pub fn evaluate(
    model: &Seq2SeqModel,
    pairs: &[(TokenSeq, TokenSeq)],
    preset: &CodecPreset,
    use_interpreter: bool,
    max_decode_len: usize,
    mode: Execution,
) -> EvalReport {
    let raw = map_ordered(mode, pairs, |_, (nl, _)| model.translate(nl, max_decode_len));
    let mut errors = ErrorBreakdown::default();
    let mut finals: Vec<TokenSeq> = Vec::with_capacity(raw.len());
    for (hyp, (_, gold)) in raw.into_iter().zip(pairs) {
        if hyp.iter().any(|t| t == "<unk>") {
            errors.oov += 1;
        }
        let fixed = if use_interpreter {
            match repair_sequence(&hyp, preset) {
                Ok(report) => {
                    if report.was_modified() {
                        errors.repaired += 1;
                    }
                    report.tokens
                }
                Err(_) => {
                    errors.unrepairable += 1;
                    hyp
                }
            }
        } else {
            hyp
        };
        if let (Ok(h_ast), Ok(g_ast)) = (
            decode_sequence(&fixed, preset),
            decode_sequence(gold, preset),
        ) {
            if h_ast != g_ast && mask_entities(h_ast) == mask_entities(g_ast) {
                errors.entity_collision_suspect += 1;
            }
        }
        finals.push(fixed);
    }
    let refs: Vec<TokenSeq> = pairs.iter().map(|(_, q)| q.clone()).collect();
    let bleu = bleu_corpus(&finals, &refs).expect("same length");
    let exact_match = exact_match_accuracy(&finals, &refs, preset).expect("same length");
    EvalReport {
        n: pairs.len(),
        bleu,
        exact_match,
        errors,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::PRESET_V3;

    fn seq(s: &str) -> TokenSeq {
        TokenSeq::parse(s)
    }

    #[test]
    fn identical_corpus_scores_one() {
        let refs = vec![seq("a b c d e"), seq("f g h i")];
        assert!((bleu_corpus(&refs, &refs).unwrap() - 1.0).abs() < 1e-12);
        }

    #[test]
    fn hand_computed_single_sentence_score() {
        // hyp "a b c d e" vs ref "a b c d f": p1=4/5 p2=3/4 p3=2/3 p4=1/2,
        // equal lengths so BP=1; score = (4/5*3/4*2/3*1/2)^(1/4) = 0.2^0.25
        let hyp = vec![seq("a b c d e")];
        let reference = vec![seq("a b c d f")];
        let expected = 0.2f64.powf(0.25);
        let got = bleu_corpus(&hyp, &reference).unwrap();
        assert!((got - expected).abs() < 1e-12, "got {got}, want {expected}");
    }

    #[test]
    fn clipping_limits_repeated_tokens() {
        // "a a a a" vs "a b c d": clipped unigrams = 1 of 4; no bigram match
        let hyp = vec![seq("a a a a")];
        let reference = vec![seq("a b c d")];
        assert_eq!(bleu_corpus(&hyp, &reference).unwrap(), 0.0);
    }

    #[test]
    fn brevity_penalty_applies_to_short_hypotheses() {
        let hyp = vec![seq("a b c d")];
        let reference = vec![seq("a b c d e f g h")];
        let got = bleu_corpus(&hyp, &reference).unwrap();
        let expected = (1.0f64 - 8.0 / 4.0).exp(); // precisions all 1
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(matches!(
            bleu_corpus(&[seq("a")], &[]),
            Err(EvalError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn exact_match_uses_canonical_form() {
        let preset = &PRESET_V3;
        let gold = seq("select var_a where brack_open dbr_Inception dbo_director var_a brack_close");
        // same query, different surface case on keywords
        let hyp = seq("SELECT var_a WHERE brack_open dbr_Inception dbo_director var_a brack_close");
        assert_eq!(exact_match_accuracy(&[hyp], &[gold.clone()], preset).unwrap(), 1.0);
        let wrong = seq("select var_a where brack_open dbr_Avatar dbo_director var_a brack_close");
        assert_eq!(exact_match_accuracy(&[wrong], &[gold], preset).unwrap(), 0.0);
    }

    #[test]
    fn undecodable_hypothesis_never_matches() {
        let preset = &PRESET_V3;
        let gold = seq("select var_a where brack_open dbr_Inception dbo_director var_a brack_close");
        let broken = seq("select brack_close");
        assert_eq!(
            exact_match_accuracy(&[broken], &[gold], preset).unwrap(),
            0.0
        );
    }

    #[test]
    fn entity_mask_spots_collisions() {
        let a = decode_sequence(
            &seq("select var_a where brack_open dbr_Inception dbo_director var_a brack_close"),
            &PRESET_V3,
        )
        .unwrap();
        let b = decode_sequence(
            &seq("select var_a where brack_open dbr_Avatar dbo_director var_a brack_close"),
            &PRESET_V3,
        )
        .unwrap();
        assert_ne!(a, b);
        assert_eq!(mask_entities(a), mask_entities(b));
    }
}
