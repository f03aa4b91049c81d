//! Frequency-ranked vocabulary with reserved control tokens.

use crate::corpus::sample::Sample;
use crate::error::{Error, Result};
use std::collections::HashMap;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
/// Sentence boundary marker; also separates topic from passages on input.
pub const SNT: usize = 4;

pub const RESERVED: [&str; 5] = ["<pad>", "<unk>", "<bos>", "<eos>", "<snt>"];

#[derive(Debug, Clone)]
pub struct Vocabulary {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    /// Rank tokens by frequency (ties broken lexicographically), truncate to
    /// `max_size` including the reserved entries.
    pub fn build(samples: &[Sample], max_size: usize) -> Result<Vocabulary> {
        if max_size < RESERVED.len() + 1 {
            return Err(Error::Vocab(format!(
                "max_size {max_size} cannot hold the {} reserved tokens",
                RESERVED.len()
            )));
        }
        if samples.is_empty() {
            return Err(Error::Vocab("no samples to build from".into()));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for sample in samples {
            for token in sample.all_tokens() {
                *counts.entry(token).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(t, _)| !RESERVED.contains(t))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut id_to_token: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        for (token, _) in ranked.into_iter().take(max_size - RESERVED.len()) {
            id_to_token.push(token.to_string());
        }
        Ok(Vocabulary::from_tokens(id_to_token))
    }

    /// Rebuild from a saved id→token list (checkpoint manifests).
    pub fn from_tokens(id_to_token: Vec<String>) -> Vocabulary {
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            token_to_id,
            id_to_token,
        }
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.token_to_id.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.id_to_token[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }
}
