//! Rule-based repair of model output token sequences.
//!
//! The repair ladder is conservative: a sequence that already decodes is
//! returned untouched. Otherwise progressively stronger fixes are applied —
//! truncation at a stray end marker, dropping out-of-vocabulary tokens,
//! keyword/bracket completion, and finally rebuilding a minimal query from
//! the recognizable pieces. Every change is recorded as a replayable action.

use thiserror::Error;

use crate::codec::{
    decode_sequence, encode_query, print_sparql, token_is_in_vocabulary, CodecPreset, Literal,
    PatternTerm, Prefix, QueryAst, QueryForm, TokenSeq,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RepairAction {
    /// Token at `position` (in the sequence as it was at that stage) removed.
    DroppedUnknown { position: usize, token: String },
    /// Everything from `position` on removed after an explicit end marker.
    TruncatedAfterEos { position: usize },
    /// A required keyword inserted at `position`.
    InsertedKeyword { position: usize, token: String },
    /// A bracket token added or removed to balance the group.
    BalancedBracket { position: usize, token: String, inserted: bool },
    /// The ladder gave up on local fixes and rebuilt a minimal query from
    /// the salvageable terms; `kept_patterns` complete triples survived.
    RebuiltStructure { kept_patterns: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepairReport {
    pub tokens: TokenSeq,
    pub actions: Vec<RepairAction>,
}

impl RepairReport {
    pub fn was_modified(&self) -> bool {
        !self.actions.is_empty()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InterpreterError {
    #[error("sequence cannot be repaired into a query: {0}")]
    Unrepairable(String),
}

fn is_kw(token: &str, kw: &str) -> bool {
    token.eq_ignore_ascii_case(kw)
}

fn open_token(preset: &CodecPreset) -> &'static str {
    if preset.merged_tokens {
        "brack_open"
    } else {
        "{"
    }
}

fn close_token(preset: &CodecPreset) -> &'static str {
    if preset.merged_tokens {
        "brack_close"
    } else {
        "}"
    }
}

/// One recognizable unit of a broken sequence, used by the rebuild stage.
enum Item {
    Var(String),
    Ent(Prefix, String),
    Lit(Literal),
    Count,
    Distinct,
}

fn structural(token: &str, preset: &CodecPreset) -> bool {
    if [
        "select", "ask", "distinct", "where", "filter", "limit", "count", "order", "by", "asc",
        "desc",
    ]
    .iter()
    .any(|k| is_kw(token, k))
    {
        return true;
    }
    if preset.merged_tokens {
        matches!(
            token,
            "brack_open" | "brack_close" | "sep_dot" | "ord_asc" | "ord_desc" | "agg_count"
        ) || token.starts_with("math_")
    } else {
        matches!(
            token,
            "{" | "}" | "." | "(" | ")" | "<" | ">" | "=" | "<=" | ">=" | "!="
        )
    }
}

fn classify(tokens: &[String], preset: &CodecPreset) -> Vec<Item> {
    let mut items = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let t = tokens[i].as_str();
        if is_kw(t, "count") || t == "agg_count" {
            items.push(Item::Count);
            i += 1;
            continue;
        }
        if is_kw(t, "distinct") {
            items.push(Item::Distinct);
            i += 1;
            continue;
        }
        if preset.merged_tokens {
            if let Some(v) = t.strip_prefix("var_") {
                if !v.is_empty() {
                    items.push(Item::Var(v.to_string()));
                    i += 1;
                    continue;
                }
            }
            if let Some((prefix, local)) = t.split_once('_').and_then(|(p, l)| {
                Prefix::parse(p).filter(|_| !l.is_empty()).map(|p| (p, l))
            }) {
                if !structural(t, preset) {
                    items.push(Item::Ent(prefix, local.to_string()));
                    i += 1;
                    continue;
                }
            }
        } else {
            if let Some(v) = t.strip_prefix('?') {
                if !v.is_empty() {
                    items.push(Item::Var(v.to_string()));
                    i += 1;
                    continue;
                }
            }
            if let Some(prefix) = Prefix::parse(t) {
                // the next token is the local name if it is open-class
                if let Some(local) = tokens.get(i + 1) {
                    if !structural(local, preset)
                        && Prefix::parse(local).is_none()
                        && !local.starts_with('?')
                    {
                        items.push(Item::Ent(prefix, local.clone()));
                        i += 2;
                        continue;
                    }
                }
                i += 1;
                continue;
            }
        }
        if let Some(lit) = parse_literal(t) {
            items.push(Item::Lit(lit));
        }
        i += 1;
    }
    items
}

fn parse_literal(token: &str) -> Option<Literal> {
    if let Some(inner) = token.strip_prefix('"').and_then(|t| t.strip_suffix('"')) {
        if !inner.contains('"') {
            return Some(Literal::Str(inner.to_string()));
        }
        return None;
    }
    let body = token.strip_prefix('-').unwrap_or(token);
    if !body.is_empty() && body.chars().all(|c| c.is_ascii_digit() || c == '.') && body != "." {
        return Some(Literal::Num(token.to_string()));
    }
    None
}

fn term_of(item: &Item) -> Option<PatternTerm> {
    match item {
        Item::Var(v) => Some(PatternTerm::Var(v.clone())),
        Item::Ent(p, l) => Some(PatternTerm::prefixed(*p, l.clone())),
        Item::Lit(l) => Some(PatternTerm::Literal(l.clone())),
        _ => None,
    }
}

/// Greedy triple extraction: any window of three terms whose subject and
/// predicate are not literals becomes a pattern.
fn extract_patterns(items: &[Item]) -> Vec<crate::codec::TriplePattern> {
    let terms: Vec<PatternTerm> = items.iter().filter_map(term_of).collect();
    let mut patterns = Vec::new();
    let mut i = 0;
    while i + 2 < terms.len() + 1 && i + 3 <= terms.len() {
        let s = &terms[i];
        let p = &terms[i + 1];
        let o = &terms[i + 2];
        let s_ok = !matches!(s, PatternTerm::Literal(_));
        let p_ok = matches!(p, PatternTerm::Prefixed { .. } | PatternTerm::Var(_));
        if s_ok && p_ok {
            patterns.push(crate::codec::TriplePattern {
                subject: s.clone(),
                predicate: p.clone(),
                object: o.clone(),
            });
            i += 3;
        } else {
            i += 1;
        }
    }
    patterns
}

fn rebuild(
    tokens: &[String],
    preset: &CodecPreset,
    actions: &mut Vec<RepairAction>,
) -> Result<TokenSeq, InterpreterError> {
    let form_pos = tokens
        .iter()
        .position(|t| is_kw(t, "select") || is_kw(t, "ask"))
        .ok_or_else(|| InterpreterError::Unrepairable("no query form token".into()))?;
    let form = if is_kw(&tokens[form_pos], "select") {
        QueryForm::Select
    } else {
        QueryForm::Ask
    };
    let items = classify(&tokens[form_pos + 1..], preset);
    let patterns = extract_patterns(&items);
    if patterns.is_empty() {
        return Err(InterpreterError::Unrepairable(
            "no complete triple pattern".into(),
        ));
    }
    let mut ast = match form {
        QueryForm::Select => QueryAst::select(vec![], patterns),
        QueryForm::Ask => QueryAst::ask(patterns),
    };
    if form == QueryForm::Select {
        let bound: Vec<String> = ast.pattern_vars().iter().map(|s| s.to_string()).collect();
        // first mentioned variable that is actually bound
        let projected = items.iter().find_map(|it| match it {
            Item::Var(v) if bound.iter().any(|b| b == v) => Some(v.clone()),
            _ => None,
        });
        let Some(var) = projected else {
            return Err(InterpreterError::Unrepairable(
                "no bindable projection variable".into(),
            ));
        };
        let counted = items.iter().any(|it| matches!(it, Item::Count));
        if counted {
            ast.count_var = Some(var);
        } else {
            ast.projection = vec![var];
        }
        ast.distinct = !counted && items.iter().any(|it| matches!(it, Item::Distinct));
    }
    let kept = ast.patterns.len();
    let seq = encode_query(&ast, preset)
        .map_err(|e| InterpreterError::Unrepairable(format!("rebuild failed: {e}")))?;
    actions.push(RepairAction::RebuiltStructure { kept_patterns: kept });
    Ok(seq)
}

/// Applies the repair ladder. Valid sequences come back unmodified; the
/// result always decodes under the preset, or `Unrepairable` is returned.
pub fn repair_sequence(
    seq: &TokenSeq,
    preset: &CodecPreset,
) -> Result<RepairReport, InterpreterError> {
    let done = |tokens: Vec<String>, actions: Vec<RepairAction>| RepairReport {
        tokens: TokenSeq::new(tokens),
        actions,
    };
    if decode_sequence(seq, preset).is_ok() {
        return Ok(done(seq.tokens().to_vec(), Vec::new()));
    }

    let mut actions = Vec::new();
    let mut tokens: Vec<String> = seq.tokens().to_vec();

    // stage 1: cut at an explicit end marker
    if let Some(pos) = tokens.iter().position(|t| t == "<eos>") {
        tokens.truncate(pos);
        actions.push(RepairAction::TruncatedAfterEos { position: pos });
    }

    // stage 2: drop everything outside the preset's token map
    let mut kept = Vec::with_capacity(tokens.len());
    for (i, t) in tokens.into_iter().enumerate() {
        if token_is_in_vocabulary(&t, preset) {
            kept.push(t);
        } else {
            actions.push(RepairAction::DroppedUnknown { position: i, token: t });
        }
    }
    let mut tokens = kept;
    if decode_sequence(&TokenSeq::new(tokens.clone()), preset).is_ok() {
        return Ok(done(tokens, actions));
    }

    // stage 3: keyword and bracket completion
    let form_pos = tokens
        .iter()
        .position(|t| is_kw(t, "select") || is_kw(t, "ask"));
    if let Some(form_pos) = form_pos {
        // leading junk before the form keyword never decodes
        for (i, t) in tokens.drain(0..form_pos).enumerate() {
            actions.push(RepairAction::DroppedUnknown { position: i, token: t });
        }
        let open = open_token(preset);
        let close = close_token(preset);
        if !tokens.iter().any(|t| is_kw(t, "where")) {
            if let Some(open_pos) = tokens.iter().position(|t| t == open) {
                tokens.insert(open_pos, preset.keyword("where"));
                actions.push(RepairAction::InsertedKeyword {
                    position: open_pos,
                    token: preset.keyword("where"),
                });
            }
        }
        if let Some(where_pos) = tokens.iter().position(|t| is_kw(t, "where")) {
            if tokens.get(where_pos + 1).map(String::as_str) != Some(open) {
                tokens.insert(where_pos + 1, open.to_string());
                actions.push(RepairAction::BalancedBracket {
                    position: where_pos + 1,
                    token: open.to_string(),
                    inserted: true,
                });
            }
        }
        let opens = tokens.iter().filter(|t| *t == open).count();
        let closes = tokens.iter().filter(|t| *t == close).count();
        if opens > closes {
            for _ in 0..opens - closes {
                tokens.push(close.to_string());
                actions.push(RepairAction::BalancedBracket {
                    position: tokens.len() - 1,
                    token: close.to_string(),
                    inserted: true,
                });
            }
        } else if closes > opens {
            for _ in 0..closes - opens {
                if let Some(pos) = tokens.iter().rposition(|t| t == close) {
                    tokens.remove(pos);
                    actions.push(RepairAction::BalancedBracket {
                        position: pos,
                        token: close.to_string(),
                        inserted: false,
                    });
                }
            }
        }
        if decode_sequence(&TokenSeq::new(tokens.clone()), preset).is_ok() {
            return Ok(done(tokens, actions));
        }
    }

    // stage 4: rebuild a minimal query from the salvageable pieces
    let seq = rebuild(&tokens, preset, &mut actions)?;
    Ok(RepairReport {
        tokens: seq,
        actions,
    })
}

/// Repairs a sequence and renders the canonical SPARQL text.
pub fn interpret(seq: &TokenSeq, preset: &CodecPreset) -> Result<(String, RepairReport), InterpreterError> {
    let report = repair_sequence(seq, preset)?;
    let ast = decode_sequence(&report.tokens, preset).map_err(|e| {
        InterpreterError::Unrepairable(format!("repaired sequence still undecodable: {e}"))
    })?;
    Ok((print_sparql(&ast), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{encode_query, parse_sparql, ALL_PRESETS, PRESET_V1, PRESET_V3};
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn valid_sequences(preset: &CodecPreset) -> Vec<TokenSeq> {
        [
            "SELECT ?a WHERE { dbr:Inception dbo:director ?a }",
            "ASK WHERE { dbr:Inception rdf:type dbo:Film }",
            "SELECT DISTINCT ?a WHERE { ?a dbo:year ?y . FILTER(?y < 2000) } ORDER BY DESC(?y) LIMIT 3",
            "SELECT COUNT(?f) WHERE { ?f rdf:type dbo:Film }",
        ]
        .iter()
        .map(|s| encode_query(&parse_sparql(s).unwrap(), preset).unwrap())
        .collect()
    }

    #[test]
    fn valid_sequences_pass_through_untouched() {
        for preset in &ALL_PRESETS {
            for seq in valid_sequences(preset) {
                let report = repair_sequence(&seq, preset).unwrap();
                assert!(report.actions.is_empty(), "{} modified {seq}", preset.id);
                assert_eq!(report.tokens, seq);
            }
        }
    }

    #[test]
    fn drops_unknown_token_and_recovers() {
        let seq = TokenSeq::parse(
            "select var_a where brack_open <unk> dbr_Inception dbo_director var_a brack_close",
        );
        let report = repair_sequence(&seq, &PRESET_V3).unwrap();
        assert_eq!(
            report.actions,
            vec![RepairAction::DroppedUnknown {
                position: 4,
                token: "<unk>".into()
            }]
        );
        assert!(decode_sequence(&report.tokens, &PRESET_V3).is_ok());
    }

    #[test]
    fn balances_missing_close_bracket() {
        let seq = TokenSeq::parse("select var_a where brack_open dbr_Inception dbo_director var_a");
        let report = repair_sequence(&seq, &PRESET_V3).unwrap();
        assert!(report
            .actions
            .iter()
            .any(|a| matches!(a, RepairAction::BalancedBracket { inserted: true, .. })));
        assert!(decode_sequence(&report.tokens, &PRESET_V3).is_ok());
    }

    #[test]
    fn inserts_missing_where() {
        let seq = TokenSeq::parse("select var_a brack_open dbr_Inception dbo_director var_a brack_close");
        let report = repair_sequence(&seq, &PRESET_V3).unwrap();
        assert!(report
            .actions
            .iter()
            .any(|a| matches!(a, RepairAction::InsertedKeyword { .. })));
        assert!(decode_sequence(&report.tokens, &PRESET_V3).is_ok());
    }

    #[test]
    fn truncates_after_eos_marker() {
        let seq = TokenSeq::parse(
            "select var_a where brack_open dbr_Inception dbo_director var_a brack_close <eos> var_b",
        );
        let report = repair_sequence(&seq, &PRESET_V3).unwrap();
        assert_eq!(report.actions[0], RepairAction::TruncatedAfterEos { position: 8 });
        assert!(decode_sequence(&report.tokens, &PRESET_V3).is_ok());
    }

    #[test]
    fn rebuilds_scrambled_but_term_complete_sequence() {
        let seq = TokenSeq::parse("select brack_close var_a dbr_Inception dbo_director var_a sep_dot");
        let (_sparql, report) = interpret(&seq, &PRESET_V3).unwrap();
        assert!(report
            .actions
            .iter()
            .any(|a| matches!(a, RepairAction::RebuiltStructure { .. })));
    }

    #[test]
    fn no_form_token_is_unrepairable() {
        let seq = TokenSeq::parse("var_a where brack_open dbr_Inception dbo_director var_a brack_close");
        assert!(matches!(
            repair_sequence(&seq, &PRESET_V3),
            Err(InterpreterError::Unrepairable(_))
        ));
    }

    #[test]
    fn select_without_any_variable_is_unrepairable() {
        let seq = TokenSeq::parse("select where brack_open dbr_A dbo_b dbr_C brack_close brack_close");
        assert!(matches!(
            repair_sequence(&seq, &PRESET_V3),
            Err(InterpreterError::Unrepairable(_))
        ));
    }

    #[test]
    fn repair_is_idempotent() {
        let broken = [
            "select var_a where brack_open dbr_Inception dbo_director var_a",
            "select var_a brack_open dbr_Inception dbo_director var_a brack_close",
            "ask brack_open dbr_A dbo_b dbr_C",
        ];
        for s in broken {
            let seq = TokenSeq::parse(s);
            let first = repair_sequence(&seq, &PRESET_V3).unwrap();
            let second = repair_sequence(&first.tokens, &PRESET_V3).unwrap();
            assert!(second.actions.is_empty());
            assert_eq!(first.tokens, second.tokens);
        }
    }

    #[test]
    fn split_preset_repair_also_works() {
        let seq = TokenSeq::parse("SELECT ?a WHERE { dbr Inception dbo director ?a");
        let report = repair_sequence(&seq, &PRESET_V1).unwrap();
        assert!(decode_sequence(&report.tokens, &PRESET_V1).is_ok());
    }

    /// Random token soup must never panic: either a decodable repair or
    /// a clean Unrepairable.
    #[test]
    fn fuzz_never_panics_and_output_always_decodes() {
        let pool = [
            "select", "ask", "where", "brack_open", "brack_close", "sep_dot", "var_a", "var_b",
            "dbr_Inception", "dbo_director", "rdf_type", "dbo_Film", "filter", "math_lt", "2000",
            "limit", "5", "ord_desc", "agg_count", "distinct", "<unk>", "garbage~token", "\"x\"",
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..2000 {
            let len = rng.gen_range(0..20);
            let tokens: Vec<String> = (0..len)
                .map(|_| pool.choose(&mut rng).unwrap().to_string())
                .collect();
            let seq = TokenSeq::new(tokens);
            if let Ok(report) = repair_sequence(&seq, &PRESET_V3) {
                decode_sequence(&report.tokens, &PRESET_V3).expect("repaired output decodes");
            }
        }
    }
}
