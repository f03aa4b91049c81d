//! Keyphrase bank assembly and selection-label alignment.

use crate::corpus::stopwords::is_content_word;
use std::collections::BTreeSet;

pub const MAX_PHRASE_TOKENS: usize = 10;

/// A candidate talking point: at most ten lowercased tokens with at least one
/// content word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Keyphrase {
    tokens: Vec<String>,
    content_words: Vec<String>,
}

impl Keyphrase {
    /// Lowercase, truncate to ten tokens, and keep only phrases that still
    /// contain a content word. Candidates violating that are not keyphrases.
    pub fn new(tokens: &[String]) -> Option<Keyphrase> {
        let tokens: Vec<String> = tokens
            .iter()
            .take(MAX_PHRASE_TOKENS)
            .map(|t| t.to_lowercase())
            .collect();
        if tokens.is_empty() {
            return None;
        }
        let content_words: Vec<String> = tokens
            .iter()
            .filter(|t| is_content_word(t))
            .cloned()
            .collect();
        if content_words.is_empty() {
            return None;
        }
        Some(Keyphrase {
            tokens,
            content_words,
        })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn content_words(&self) -> &[String] {
        &self.content_words
    }
}

/// One slot of the encoded bank.
#[derive(Debug, Clone, PartialEq)]
pub enum BankEntry {
    Start,
    End,
    Phrase(Keyphrase),
}

/// The keyphrase bank with `<START>` at index 0 and `<END>` at the last
/// index. `remap[i]` gives the bank index of input candidate `i`
/// (None when dropped by dedup follows the kept copy, or by the cap).
#[derive(Debug, Clone)]
pub struct Bank {
    entries: Vec<BankEntry>,
    remap: Vec<Option<usize>>,
}

impl Bank {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn start_index(&self) -> usize {
        0
    }

    pub fn end_index(&self) -> usize {
        self.entries.len() - 1
    }

    pub fn entries(&self) -> &[BankEntry] {
        &self.entries
    }

    pub fn phrase(&self, bank_index: usize) -> Option<&Keyphrase> {
        match &self.entries[bank_index] {
            BankEntry::Phrase(p) => Some(p),
            _ => None,
        }
    }

    /// Bank indices of real phrases (sentinels excluded).
    pub fn content_indices(&self) -> std::ops::Range<usize> {
        1..self.entries.len() - 1
    }

    pub fn n_content(&self) -> usize {
        self.entries.len() - 2
    }

    /// Bank index for an input candidate index (pre-sentinel numbering).
    pub fn rebase(&self, candidate_index: usize) -> Option<usize> {
        self.remap.get(candidate_index).copied().flatten()
    }

    /// Inverse of [`Bank::rebase`] for content entries.
    pub fn candidate_index(&self, bank_index: usize) -> Option<usize> {
        self.remap
            .iter()
            .position(|m| *m == Some(bank_index))
    }
}

/// De-duplicate by exact token sequence, truncate to `cap`, then wrap with
/// the sentinels. Duplicate candidates remap onto the kept copy.
pub fn build_keyphrase_bank(candidates: &[Keyphrase], cap: usize) -> Bank {
    assert!(cap >= 1, "bank cap must be at least 1");
    let mut kept: Vec<Keyphrase> = Vec::new();
    let mut remap: Vec<Option<usize>> = Vec::with_capacity(candidates.len());
    for candidate in candidates {
        if let Some(pos) = kept.iter().position(|k| k.tokens == candidate.tokens) {
            remap.push(Some(pos + 1));
            continue;
        }
        if kept.len() < cap {
            kept.push(candidate.clone());
            remap.push(Some(kept.len())); // +1 for <START> at index 0
        } else {
            remap.push(None);
        }
    }
    let mut entries = Vec::with_capacity(kept.len() + 2);
    entries.push(BankEntry::Start);
    entries.extend(kept.into_iter().map(BankEntry::Phrase));
    entries.push(BankEntry::End);
    Bank { entries, remap }
}

/// Bank for a sample's raw keyphrase lists: candidates failing validation
/// (over-long after truncation is fine, but zero content words is not) drop
/// out. Returns the bank plus the map from original list position to bank
/// index.
pub fn build_sample_bank(
    keyphrases: &[Vec<String>],
    cap: usize,
) -> (Bank, Vec<Option<usize>>) {
    let mut candidates = Vec::new();
    let mut orig_to_candidate = vec![None; keyphrases.len()];
    for (i, phrase) in keyphrases.iter().enumerate() {
        if let Some(k) = Keyphrase::new(phrase) {
            orig_to_candidate[i] = Some(candidates.len());
            candidates.push(k);
        }
    }
    let bank = build_keyphrase_bank(&candidates, cap);
    let orig_to_bank = orig_to_candidate
        .into_iter()
        .map(|c| c.and_then(|ci| bank.rebase(ci)))
        .collect();
    (bank, orig_to_bank)
}

/// Gold selection labels: bank index `k` is selected for the sentence iff
/// some content word of phrase `k` occurs in the sentence (exact lowercase
/// token match). Sentinels are never selected.
pub fn align_selection_labels(sentence: &[String], bank: &Bank) -> BTreeSet<usize> {
    let sentence_words: BTreeSet<String> = sentence.iter().map(|t| t.to_lowercase()).collect();
    let mut selected = BTreeSet::new();
    for k in bank.content_indices() {
        if let Some(phrase) = bank.phrase(k) {
            if phrase
                .content_words()
                .iter()
                .any(|w| sentence_words.contains(w))
            {
                selected.insert(k);
            }
        }
    }
    selected
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phrase(words: &[&str]) -> Keyphrase {
        Keyphrase::new(&words.iter().map(|w| w.to_string()).collect::<Vec<_>>()).unwrap()
    }

    fn tokens(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn empty_candidates_give_sentinels_only() {
        let bank = build_keyphrase_bank(&[], 70);
        assert_eq!(bank.len(), 2);
        assert!(matches!(bank.entries()[0], BankEntry::Start));
        assert!(matches!(bank.entries()[1], BankEntry::End));
    }

    #[test]
    fn duplicates_collapse() {
        let cands = vec![
            phrase(&["foreign", "aid"]),
            phrase(&["foreign", "aid"]),
            phrase(&["foreign", "aid"]),
        ];
        let bank = build_keyphrase_bank(&cands, 70);
        assert_eq!(bank.len(), 3);
        assert_eq!(bank.rebase(0), Some(1));
        assert_eq!(bank.rebase(2), Some(1));
    }

    #[test]
    fn cap_keeps_first_seventy_in_order() {
        let cands: Vec<Keyphrase> = (0..80)
            .map(|i| phrase(&[&format!("word{i}")]))
            .collect();
        let bank = build_keyphrase_bank(&cands, 70);
        assert_eq!(bank.len(), 72);
        assert_eq!(bank.phrase(1).unwrap().tokens()[0], "word0");
        assert_eq!(bank.phrase(70).unwrap().tokens()[0], "word69");
        assert_eq!(bank.rebase(75), None);
    }

    #[test]
    fn phrases_are_truncated_and_lowercased() {
        let long: Vec<String> = (0..15).map(|i| format!("W{i}")).collect();
        let p = Keyphrase::new(&long).unwrap();
        assert_eq!(p.tokens().len(), MAX_PHRASE_TOKENS);
        assert_eq!(p.tokens()[0], "w0");
    }

    #[test]
    fn stopword_only_candidates_rejected() {
        assert!(Keyphrase::new(&tokens(&["the", "of"])).is_none());
        assert!(Keyphrase::new(&tokens(&[])).is_none());
    }

    #[test]
    fn overlapping_content_word_selects() {
        let bank = build_keyphrase_bank(&[phrase(&["foreign", "aid"])], 70);
        let selected = align_selection_labels(&tokens(&["aid", "helps", "nations"]), &bank);
        assert_eq!(selected, BTreeSet::from([1]));
    }

    #[test]
    fn no_overlap_selects_nothing() {
        let bank = build_keyphrase_bank(&[phrase(&["foreign", "aid"])], 70);
        let selected = align_selection_labels(&tokens(&["totally", "unrelated"]), &bank);
        assert!(selected.is_empty());
    }

    #[test]
    fn hand_checked_multi_phrase_fixture() {
        let bank = build_keyphrase_bank(
            &[
                phrase(&["solar", "power"]),
                phrase(&["carbon", "tax"]),
                phrase(&["wind", "farms"]),
                phrase(&["coal", "mines"]),
            ],
            70,
        );
        // Contains content words of phrases at bank indices 1 and 3.
        let sentence = tokens(&["the", "solar", "and", "wind", "options"]);
        let selected = align_selection_labels(&sentence, &bank);
        assert_eq!(selected, BTreeSet::from([1, 3]));
    }

    #[test]
    fn alignment_is_monotone_under_token_addition() {
        let bank = build_keyphrase_bank(&[phrase(&["foreign", "aid"]), phrase(&["trade"])], 70);
        let base = tokens(&["aid", "now"]);
        let before = align_selection_labels(&base, &bank);
        let mut extended = base.clone();
        extended.push("trade".into());
        let after = align_selection_labels(&extended, &bank);
        assert!(before.is_subset(&after));
    }
}
