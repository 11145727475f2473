//! Question-side tokenizer. Lowercase, strip `?!.,'"`, whitespace-split;
//! repeated whitespace always collapses (the v2.1 fix concerns the query
//! side only).

use super::{CodecError, TokenSeq};

pub fn tokenize_nl(text: &str) -> Result<TokenSeq, CodecError> {
    let cleaned: String = text
        .to_lowercase()
        .chars()
        .filter(|c| !matches!(c, '?' | '!' | '.' | ',' | '\'' | '"'))
        .collect();
    let tokens: Vec<String> = cleaned.split_whitespace().map(String::from).collect();
    if tokens.is_empty() {
        return Err(CodecError::EmptyQuestion);
    }
    Ok(TokenSeq::new(tokens))
}
