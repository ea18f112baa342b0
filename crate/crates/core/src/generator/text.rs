//! Conversion between text and token ids for generators that expose their
//! vocabulary as strings.

use crate::error::{Error, Result};
use crate::types::TokenId;

/// Greedy longest-match tokenization against `vocab`.
pub fn tokenize(vocab: &[String], text: &str) -> Result<Vec<TokenId>> {
    let mut out = Vec::new();
    let mut rest = text;
    while !rest.is_empty() {
        let best = vocab
            .iter()
            .enumerate()
            .filter(|(_, t)| !t.is_empty() && rest.starts_with(t.as_str()))
            .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(&a.0)));
        match best {
            Some((id, tok)) => {
                out.push(id as TokenId);
                rest = &rest[tok.len()..];
            }
            None => {
                return Err(Error::invalid(format!(
                    "cannot tokenize `{}`",
                    rest.chars().take(16).collect::<String>()
                )))
            }
        }
    }
    Ok(out)
}

/// Concatenates token strings, skipping `eos` and out-of-range ids.
pub fn detokenize(vocab: &[String], tokens: &[TokenId], eos: Option<TokenId>) -> String {
    tokens
        .iter()
        .filter(|&&t| Some(t) != eos)
        .filter_map(|&t| vocab.get(t as usize))
        .map(String::as_str)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn longest_match_wins() {
        let vocab: Vec<String> = ["<eos>", "a", "b", "ab", "abc"].iter().map(|s| s.to_string()).collect();
        assert_eq!(tokenize(&vocab, "abcab").unwrap(), vec![4, 3]);
        assert_eq!(tokenize(&vocab, "ba").unwrap(), vec![2, 1]);
        assert!(tokenize(&vocab, "x").is_err());
        assert_eq!(detokenize(&vocab, &[4, 1, 0], Some(0)), "abca");
    }
}
