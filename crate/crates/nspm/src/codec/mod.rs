//! SPARQL <-> token-sequence codec.
//!
//! Each encoding preset fixes a token map for the same grammar subset. The
//! ladder mirrors the experiment settings: v1 splits prefixed names into two
//! tokens and keeps raw punctuation, v1.1 lowercases keywords, v2.1 adds the
//! whitespace fix on the raw-text path, v3/v4 merge structural tokens
//! (`brack_open`, `sep_dot`, `var_a`, `dbr_Inception`) which shortens every
//! sequence containing a prefixed name.

mod ast;
mod nl;
mod sparql;
mod tokens;

pub use ast::{
    Comparator, Filter, Literal, Order, OrderDir, PatternTerm, Prefix, QueryAst, QueryForm,
    TriplePattern, ALL_PREFIXES,
};
pub use nl::tokenize_nl;
pub use sparql::{parse_sparql, print_sparql, valid_local_name};
pub use tokens::{decode_sequence, encode_query, token_is_in_vocabulary};

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("syntax error at offset {position}: expected {expected}")]
    SyntaxError { position: usize, expected: String },
    #[error("construct outside the grammar subset: {0}")]
    UnsupportedConstruct(String),
    #[error("cannot decode token {token:?} at position {position}")]
    DecodeError { position: usize, token: String },
    #[error("no token survives tokenization of the question")]
    EmptyQuestion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PresetId {
    V1,
    V1_1,
    V2_1,
    V3,
    V4,
}

impl PresetId {
    pub fn as_str(self) -> &'static str {
        match self {
            PresetId::V1 => "v1",
            PresetId::V1_1 => "v1.1",
            PresetId::V2_1 => "v2.1",
            PresetId::V3 => "v3",
            PresetId::V4 => "v4",
        }
    }

    pub fn parse(s: &str) -> Option<PresetId> {
        match s {
            "v1" => Some(PresetId::V1),
            "v1.1" => Some(PresetId::V1_1),
            "v2.1" => Some(PresetId::V2_1),
            "v3" => Some(PresetId::V3),
            "v4" => Some(PresetId::V4),
            _ => None,
        }
    }
}

impl fmt::Display for PresetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Tokenizer/merging rules for one encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodecPreset {
    pub id: PresetId,
    /// Prefixed names become two tokens (`dbr Inception`).
    pub split_uris: bool,
    /// Structural merges: `brack_open`, `sep_dot`, `var_a`, `dbr_Inception`,
    /// `ord_desc`, `agg_count`, `math_lt`.
    pub merged_tokens: bool,
    /// Collapse repeated spaces on the raw-text path before tokenizing.
    pub whitespace_fix: bool,
    pub lowercase_keywords: bool,
}

pub const PRESET_V1: CodecPreset = CodecPreset {
    id: PresetId::V1,
    split_uris: true,
    merged_tokens: false,
    whitespace_fix: false,
    lowercase_keywords: false,
};

pub const PRESET_V1_1: CodecPreset = CodecPreset {
    id: PresetId::V1_1,
    split_uris: true,
    merged_tokens: false,
    whitespace_fix: false,
    lowercase_keywords: true,
};

pub const PRESET_V2_1: CodecPreset = CodecPreset {
    id: PresetId::V2_1,
    split_uris: true,
    merged_tokens: false,
    whitespace_fix: true,
    lowercase_keywords: true,
};

pub const PRESET_V3: CodecPreset = CodecPreset {
    id: PresetId::V3,
    split_uris: false,
    merged_tokens: true,
    whitespace_fix: true,
    lowercase_keywords: true,
};

/// v4 differs from v3 only in generator options (direct entity translations).
pub const PRESET_V4: CodecPreset = CodecPreset {
    id: PresetId::V4,
    ..PRESET_V3
};

pub const ALL_PRESETS: [CodecPreset; 5] =
    [PRESET_V1, PRESET_V1_1, PRESET_V2_1, PRESET_V3, PRESET_V4];

impl CodecPreset {
    pub fn by_id(id: PresetId) -> CodecPreset {
        match id {
            PresetId::V1 => PRESET_V1,
            PresetId::V1_1 => PRESET_V1_1,
            PresetId::V2_1 => PRESET_V2_1,
            PresetId::V3 => PRESET_V3,
            PresetId::V4 => PRESET_V4,
        }
    }

    pub fn from_name(name: &str) -> Option<CodecPreset> {
        PresetId::parse(name).map(CodecPreset::by_id)
    }

    pub(crate) fn keyword(&self, lower: &'static str) -> String {
        if self.lowercase_keywords {
            lower.to_string()
        } else {
            lower.to_uppercase()
        }
    }
}

/// An ordered sequence of whitespace-free, non-empty tokens; serialization
/// is single-space joined.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn new(tokens: Vec<String>) -> TokenSeq {
        for t in &tokens {
            debug_assert!(!t.is_empty() && !t.contains(char::is_whitespace), "bad token {t:?}");
        }
        TokenSeq(tokens)
    }

    /// Splits a serialized line back into tokens.
    pub fn parse(line: &str) -> TokenSeq {
        TokenSeq(line.split_whitespace().map(String::from).collect())
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }

    pub fn into_vec(self) -> Vec<String> {
        self.0
    }
}

impl fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(" "))
    }
}

impl From<Vec<&str>> for TokenSeq {
    fn from(tokens: Vec<&str>) -> TokenSeq {
        TokenSeq::new(tokens.into_iter().map(String::from).collect())
    }
}

/// Parses raw query text under a preset's whitespace rule, then encodes it.
pub fn encode_text(text: &str, preset: &CodecPreset) -> Result<TokenSeq, CodecError> {
    let cleaned = if preset.whitespace_fix {
        collapse_spaces(text)
    } else {
        text.to_string()
    };
    let ast = parse_sparql(&cleaned)?;
    encode_query(&ast, preset)
}

fn collapse_spaces(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut prev_space = false;
    for c in text.chars() {
        if c == ' ' {
            if !prev_space {
                out.push(c);
            }
            prev_space = true;
        } else {
            prev_space = false;
            out.push(c);
        }
    }
    out
}
