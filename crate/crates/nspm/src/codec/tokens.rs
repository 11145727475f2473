//! Token-sequence back end: `encode_query` / `decode_sequence`.
//!
//! Split-URI presets (v1, v1.1, v2.1) emit a prefixed name as two tokens and
//! punctuation as single characters. Merged presets (v3, v4) emit
//! `dbr_Inception`, `brack_open`, `brack_close`, `sep_dot`, `var_a`,
//! `ord_asc|ord_desc`, `agg_count`, and `math_*` comparator tokens.

use super::ast::*;
use super::{CodecError, CodecPreset, TokenSeq};

const MERGED_COMPARATORS: [(Comparator, &str); 6] = [
    (Comparator::Lt, "math_lt"),
    (Comparator::Gt, "math_gt"),
    (Comparator::Eq, "math_eq"),
    (Comparator::Le, "math_leq"),
    (Comparator::Ge, "math_geq"),
    (Comparator::Ne, "math_neq"),
];

pub fn encode_query(ast: &QueryAst, preset: &CodecPreset) -> Result<TokenSeq, CodecError> {
    ast.validate().map_err(CodecError::UnsupportedConstruct)?;
    let mut out: Vec<String> = Vec::new();
    let kw = |s: &'static str| preset.keyword(s);
    let push_var = |out: &mut Vec<String>, v: &str| {
        if preset.merged_tokens {
            out.push(format!("var_{v}"));
        } else {
            out.push(format!("?{v}"));
        }
    };
    let push_term = |out: &mut Vec<String>, term: &PatternTerm| {
        match term {
            PatternTerm::Prefixed { prefix, local } => {
                if preset.merged_tokens {
                    out.push(format!("{}_{local}", prefix.as_str()));
                } else if preset.split_uris {
                    out.push(prefix.as_str().to_string());
                    out.push(local.clone());
                } else {
                    out.push(format!("{}:{local}", prefix.as_str()));
                }
            }
            PatternTerm::Var(v) => push_var(out, v),
            PatternTerm::Literal(l) => out.push(literal_token(l)),
        }
    };

    match ast.form {
        QueryForm::Select => {
            out.push(kw("select"));
            if ast.distinct {
                out.push(kw("distinct"));
            }
            if let Some(v) = &ast.count_var {
                if preset.merged_tokens {
                    out.push("agg_count".into());
                    push_var(&mut out, v);
                } else {
                    out.push(kw("count"));
                    out.push("(".into());
                    push_var(&mut out, v);
                    out.push(")".into());
                }
            } else {
                for v in &ast.projection {
                    push_var(&mut out, v);
                }
            }
        }
        QueryForm::Ask => out.push(kw("ask")),
    }
    out.push(kw("where"));
    out.push(if preset.merged_tokens { "brack_open".into() } else { "{".into() });

    let sep = if preset.merged_tokens { "sep_dot" } else { "." };
    let mut first = true;
    for p in &ast.patterns {
        if !first {
            out.push(sep.into());
        }
        first = false;
        push_term(&mut out, &p.subject);
        push_term(&mut out, &p.predicate);
        push_term(&mut out, &p.object);
    }
    for f in &ast.filters {
        if !first {
            out.push(sep.into());
        }
        first = false;
        out.push(kw("filter"));
        if preset.merged_tokens {
            push_var(&mut out, &f.var);
            out.push(merged_comparator(f.op).into());
            out.push(literal_token(&f.value));
        } else {
            out.push("(".into());
            push_var(&mut out, &f.var);
            out.push(f.op.symbol().into());
            out.push(literal_token(&f.value));
            out.push(")".into());
        }
    }
    out.push(if preset.merged_tokens { "brack_close".into() } else { "}".into() });

    if let Some(order) = &ast.order {
        if preset.merged_tokens {
            out.push(match order.dir {
                OrderDir::Asc => "ord_asc".into(),
                OrderDir::Desc => "ord_desc".into(),
            });
            push_var(&mut out, &order.var);
        } else {
            out.push(kw("order"));
            out.push(kw("by"));
            out.push(match order.dir {
                OrderDir::Asc => kw("asc"),
                OrderDir::Desc => kw("desc"),
            });
            out.push("(".into());
            push_var(&mut out, &order.var);
            out.push(")".into());
        }
    }
    if let Some(limit) = ast.limit {
        out.push(kw("limit"));
        out.push(limit.to_string());
    }
    Ok(TokenSeq::new(out))
}

fn merged_comparator(op: Comparator) -> &'static str {
    MERGED_COMPARATORS
        .iter()
        .find(|(c, _)| *c == op)
        .map(|(_, t)| *t)
        .unwrap()
}

fn literal_token(literal: &Literal) -> String {
    match literal {
        Literal::Num(n) => n.clone(),
        Literal::Str(s) => format!("\"{s}\""),
    }
}

fn parse_literal_token(token: &str) -> Option<Literal> {
    if let Some(inner) = token.strip_prefix('"').and_then(|t| t.strip_suffix('"')) {
        if inner.contains('"') {
            return None;
        }
        return Some(Literal::Str(inner.to_string()));
    }
    if is_number_token(token) {
        return Some(Literal::Num(token.to_string()));
    }
    None
}

fn is_number_token(token: &str) -> bool {
    let body = token.strip_prefix('-').unwrap_or(token);
    if body.is_empty() {
        return false;
    }
    let mut dots = 0;
    for (i, c) in body.char_indices() {
        match c {
            '0'..='9' => {}
            '.' if i > 0 && i + 1 < body.len() && dots == 0 => dots += 1,
            _ => return false,
        }
    }
    true
}

fn is_ident(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Splits a merged entity token (`dbr_Inception`) at the first underscore.
fn split_merged_entity(token: &str) -> Option<(Prefix, &str)> {
    let (prefix, local) = token.split_once('_')?;
    let prefix = Prefix::parse(prefix)?;
    if local.is_empty() {
        return None;
    }
    Some((prefix, local))
}

/// Whether a token can appear in output under this preset's token map.
/// Local-name and literal tokens are open-class; everything else is the
/// closed structural set.
pub fn token_is_in_vocabulary(token: &str, preset: &CodecPreset) -> bool {
    let lower = token.to_ascii_lowercase();
    if preset.merged_tokens {
        match lower.as_str() {
            "select" | "ask" | "distinct" | "where" | "filter" | "limit" | "brack_open"
            | "brack_close" | "sep_dot" | "ord_asc" | "ord_desc" | "agg_count" => return true,
            _ => {}
        }
        if MERGED_COMPARATORS.iter().any(|(_, t)| *t == lower) {
            return true;
        }
        if let Some(v) = token.strip_prefix("var_") {
            return is_ident(v);
        }
        // merged entity tokens win over bare numbers/strings
        split_merged_entity(token).is_some()
            || is_number_token(token)
            || parse_literal_token(token).is_some()
    } else {
        match lower.as_str() {
            "select" | "ask" | "distinct" | "where" | "filter" | "limit" | "count" | "order"
            | "by" | "asc" | "desc" => return true,
            _ => {}
        }
        match token {
            "{" | "}" | "." | "(" | ")" | "<" | ">" | "=" | "<=" | ">=" | "!=" => return true,
            _ => {}
        }
        if let Some(v) = token.strip_prefix('?') {
            return is_ident(v);
        }
        if Prefix::parse(token).is_some() {
            return true;
        }
        // bare local names are open-class in split mode
        !token.is_empty()
            && !token.contains(char::is_whitespace)
            && (token.chars().all(|c| {
                c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '(' | ')' | ',' | '%' | '\'' | '.')
            }) || parse_literal_token(token).is_some())
    }
}

struct Decoder<'a> {
    tokens: &'a [String],
    pos: usize,
    preset: &'a CodecPreset,
}

impl<'a> Decoder<'a> {
    fn peek(&self) -> Option<&'a str> {
        self.tokens.get(self.pos).map(String::as_str)
    }

    fn next(&mut self) -> Option<&'a str> {
        let t = self.peek();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self) -> Result<T, CodecError> {
        Err(CodecError::DecodeError {
            position: self.pos.min(self.tokens.len().saturating_sub(1)),
            token: self.peek().unwrap_or("").to_string(),
        })
    }

    fn err_at<T>(&self, pos: usize) -> Result<T, CodecError> {
        Err(CodecError::DecodeError {
            position: pos,
            token: self.tokens.get(pos).cloned().unwrap_or_default(),
        })
    }

    fn is_kw(&self, token: &str, kw: &str) -> bool {
        token.eq_ignore_ascii_case(kw)
    }

    fn try_kw(&mut self, kw: &str) -> bool {
        if self.peek().is_some_and(|t| self.is_kw(t, kw)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), CodecError> {
        if self.try_kw(kw) {
            Ok(())
        } else {
            self.err()
        }
    }

    fn expect_punct(&mut self, punct: &str) -> Result<(), CodecError> {
        if self.peek() == Some(punct) {
            self.pos += 1;
            Ok(())
        } else {
            self.err()
        }
    }

    fn open_brace(&mut self) -> Result<(), CodecError> {
        self.expect_punct(if self.preset.merged_tokens { "brack_open" } else { "{" })
    }

    fn at_close_brace(&self) -> bool {
        self.peek() == Some(if self.preset.merged_tokens { "brack_close" } else { "}" })
    }

    fn at_separator(&self) -> bool {
        self.peek() == Some(if self.preset.merged_tokens { "sep_dot" } else { "." })
    }

    fn variable(&mut self) -> Result<String, CodecError> {
        let Some(token) = self.peek() else { return self.err() };
        let name = if self.preset.merged_tokens {
            token.strip_prefix("var_")
        } else {
            token.strip_prefix('?')
        };
        match name {
            Some(v) if is_ident(v) => {
                self.pos += 1;
                Ok(v.to_string())
            }
            _ => self.err(),
        }
    }

    fn term(&mut self) -> Result<PatternTerm, CodecError> {
        let Some(token) = self.peek() else { return self.err() };
        if self.preset.merged_tokens {
            if let Some(v) = token.strip_prefix("var_") {
                if is_ident(v) {
                    self.pos += 1;
                    return Ok(PatternTerm::Var(v.to_string()));
                }
            }
            if let Some((prefix, local)) = split_merged_entity(token) {
                self.pos += 1;
                return Ok(PatternTerm::Prefixed {
                    prefix,
                    local: local.to_string(),
                });
            }
            if let Some(lit) = parse_literal_token(token) {
                self.pos += 1;
                return Ok(PatternTerm::Literal(lit));
            }
            self.err()
        } else {
            if let Some(v) = token.strip_prefix('?') {
                if is_ident(v) {
                    self.pos += 1;
                    return Ok(PatternTerm::Var(v.to_string()));
                }
            }
            if let Some(prefix) = Prefix::parse(token) {
                // one-token lookahead: the next token is the local name
                let prefix_pos = self.pos;
                self.pos += 1;
                let Some(local) = self.next() else {
                    return self.err_at(prefix_pos);
                };
                if local.is_empty() {
                    return self.err_at(prefix_pos + 1);
                }
                return Ok(PatternTerm::Prefixed {
                    prefix,
                    local: local.to_string(),
                });
            }
            if let Some(lit) = parse_literal_token(token) {
                self.pos += 1;
                return Ok(PatternTerm::Literal(lit));
            }
            self.err()
        }
    }

    fn literal(&mut self) -> Result<Literal, CodecError> {
        match self.peek().and_then(parse_literal_token) {
            Some(lit) => {
                self.pos += 1;
                Ok(lit)
            }
            None => self.err(),
        }
    }

    fn comparator(&mut self) -> Result<Comparator, CodecError> {
        let Some(token) = self.peek() else { return self.err() };
        let found = if self.preset.merged_tokens {
            MERGED_COMPARATORS.iter().find(|(_, t)| *t == token).map(|(c, _)| *c)
        } else {
            MERGED_COMPARATORS
                .iter()
                .map(|(c, _)| *c)
                .find(|c| c.symbol() == token)
        };
        match found {
            Some(c) => {
                self.pos += 1;
                Ok(c)
            }
            None => self.err(),
        }
    }

    fn group(&mut self, ast: &mut QueryAst) -> Result<(), CodecError> {
        self.open_brace()?;
        loop {
            if self.at_close_brace() {
                // encoder never emits an empty group; reject it
                if ast.patterns.is_empty() && ast.filters.is_empty() {
                    return self.err();
                }
                self.pos += 1;
                return Ok(());
            }
            if self.peek().is_some_and(|t| self.is_kw(t, "filter")) {
                self.pos += 1;
                if self.preset.merged_tokens {
                    let var = self.variable()?;
                    let op = self.comparator()?;
                    let value = self.literal()?;
                    ast.filters.push(Filter { var, op, value });
                } else {
                    self.expect_punct("(")?;
                    let var = self.variable()?;
                    let op = self.comparator()?;
                    let value = self.literal()?;
                    self.expect_punct(")")?;
                    ast.filters.push(Filter { var, op, value });
                }
            } else {
                let subject = self.term()?;
                let predicate = self.term()?;
                let object = self.term()?;
                ast.patterns.push(TriplePattern {
                    subject,
                    predicate,
                    object,
                });
            }
            if self.at_separator() {
                self.pos += 1;
            } else if !self.at_close_brace() {
                return self.err();
            }
        }
    }
}

pub fn decode_sequence(seq: &TokenSeq, preset: &CodecPreset) -> Result<QueryAst, CodecError> {
    let tokens = seq.tokens();
    if tokens.is_empty() {
        return Err(CodecError::DecodeError {
            position: 0,
            token: String::new(),
        });
    }
    let mut d = Decoder {
        tokens,
        pos: 0,
        preset,
    };
    let mut ast = QueryAst {
        form: QueryForm::Select,
        distinct: false,
        count_var: None,
        projection: Vec::new(),
        patterns: Vec::new(),
        filters: Vec::new(),
        order: None,
        limit: None,
    };
    if d.try_kw("select") {
        ast.form = QueryForm::Select;
        ast.distinct = d.try_kw("distinct");
        let has_count = if preset.merged_tokens {
            d.try_kw("agg_count")
        } else if d.peek().is_some_and(|t| t.eq_ignore_ascii_case("count")) {
            d.pos += 1;
            d.expect_punct("(")?;
            let v = d.variable()?;
            d.expect_punct(")")?;
            ast.count_var = Some(v);
            false
        } else {
            false
        };
        if has_count {
            ast.count_var = Some(d.variable()?);
        }
        if ast.count_var.is_none() {
            loop {
                let before = d.pos;
                match d.variable() {
                    Ok(v) => ast.projection.push(v),
                    Err(_) => {
                        d.pos = before;
                        break;
                    }
                }
            }
            if ast.projection.is_empty() {
                return d.err();
            }
        }
        d.expect_kw("where")?;
        d.group(&mut ast)?;
        if preset.merged_tokens {
            if d.try_kw("ord_asc") {
                ast.order = Some(Order {
                    dir: OrderDir::Asc,
                    var: d.variable()?,
                });
            } else if d.try_kw("ord_desc") {
                ast.order = Some(Order {
                    dir: OrderDir::Desc,
                    var: d.variable()?,
                });
            }
        } else if d.try_kw("order") {
            d.expect_kw("by")?;
            let dir = if d.try_kw("asc") {
                OrderDir::Asc
            } else if d.try_kw("desc") {
                OrderDir::Desc
            } else {
                return d.err();
            };
            d.expect_punct("(")?;
            let var = d.variable()?;
            d.expect_punct(")")?;
            ast.order = Some(Order { dir, var });
        }
        if d.try_kw("limit") {
            let Some(token) = d.peek() else { return d.err() };
            let limit: u64 = match token.parse() {
                Ok(n) if n > 0 => n,
                _ => return d.err(),
            };
            d.pos += 1;
            ast.limit = Some(limit);
        }
    } else if d.try_kw("ask") {
        ast.form = QueryForm::Ask;
        d.expect_kw("where")?;
        d.group(&mut ast)?;
    } else {
        return d.err();
    }
    if d.peek().is_some() {
        return d.err();
    }
    if ast.validate().is_err() {
        return Err(CodecError::DecodeError {
            position: tokens.len() - 1,
            token: tokens[tokens.len() - 1].clone(),
        });
    }
    Ok(ast)
}
