//! Token/index mapping with reserved PAD/BOS/EOS/UNK slots.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::codec::TokenSeq;

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;

pub const RESERVED: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Keeps tokens with count >= `min_count`, ordered by (descending count,
    /// lexicographic) after the reserved slots.
    pub fn build<'a, I>(sequences: I, min_count: usize) -> Vocab
    where
        I: IntoIterator<Item = &'a TokenSeq>,
    {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for seq in sequences {
            for token in seq.iter() {
                *counts.entry(token.as_str()).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(t, c)| *c >= min_count && !RESERVED.contains(t))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let tokens: Vec<String> = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(kept.into_iter().map(|(t, _)| t.to_string()))
            .collect();
        Vocab::from_tokens(tokens)
    }

    /// Rebuilds from an index-ordered token list (checkpoint loading).
    pub fn from_tokens(tokens: Vec<String>) -> Vocab {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // reserved slots always present
    }

    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, idx: usize) -> &str {
        &self.tokens[idx]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, seq: &TokenSeq) -> Vec<usize> {
        seq.iter().map(|t| self.lookup(t)).collect()
    }

    /// Indices back to tokens, skipping reserved ones.
    pub fn decode(&self, indices: &[usize]) -> TokenSeq {
        TokenSeq::new(
            indices
                .iter()
                .filter(|&&i| i >= RESERVED.len() && i < self.tokens.len())
                .map(|&i| self.tokens[i].clone())
                .collect(),
        )
    }

    /// Restores the skipped index after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seqs(lines: &[&str]) -> Vec<TokenSeq> {
        lines.iter().map(|l| TokenSeq::parse(l)).collect()
    }

    #[test]
    fn threshold_rule() {
        let data = seqs(&["a a a b"]);
        let vocab = Vocab::build(&data, 2);
        assert_eq!(vocab.tokens(), &["<pad>", "<bos>", "<eos>", "<unk>", "a"]);
        assert_eq!(vocab.lookup("b"), UNK);
        assert_eq!(vocab.lookup("a"), 4);
    }

    #[test]
    fn empty_token_set_keeps_reserved() {
        let data: Vec<TokenSeq> = Vec::new();
        let vocab = Vocab::build(&data, 1);
        assert_eq!(vocab.len(), 4);
    }

    #[test]
    fn equal_counts_order_lexicographically() {
        let data = seqs(&["b a", "a b", "c"]);
        let vocab = Vocab::build(&data, 1);
        assert_eq!(vocab.tokens()[4..], ["a", "b", "c"]);
    }

    #[test]
    fn reserved_tokens_never_collide() {
        let data = seqs(&["<unk> real <unk>"]);
        let vocab = Vocab::build(&data, 1);
        assert_eq!(vocab.lookup("<unk>"), UNK);
        assert_eq!(vocab.len(), 5);
        assert_eq!(vocab.token(4), "real");
    }

    #[test]
    fn decode_skips_reserved() {
        let data = seqs(&["x y"]);
        let vocab = Vocab::build(&data, 1);
        let ids = vec![BOS, vocab.lookup("x"), vocab.lookup("y"), EOS, PAD];
        assert_eq!(vocab.decode(&ids).to_string(), "x y");
    }
}
