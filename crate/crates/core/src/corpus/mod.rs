//! Data model, corpus file format, vocabulary, keyphrase bank assembly,
//! selection-label alignment, and the synthetic-corpus generator.

pub mod bank;
pub mod sample;
pub mod stopwords;
pub mod synth;
pub mod vocab;

pub use bank::{
    align_selection_labels, build_keyphrase_bank, build_sample_bank, Bank, BankEntry, Keyphrase,
};
pub use sample::{
    load_corpus, load_corpus_for_task, require_training_targets, write_corpus, Sample,
    TargetSentence,
};
pub use stopwords::{is_content_word, is_stopword};
pub use synth::{generate_synthetic_corpus, SynthConfig};
pub use vocab::{Vocabulary, BOS, EOS, PAD, SNT, UNK};
