//! The data model and the JSON-lines corpus format.
//!
//! One sample per line:
//! `{"id": str, "topic": [str], "passages": [str]|null, "keyphrases": [[str]],
//!   "targets": [{"tokens": [str], "selection": [int], "style": int}],
//!   "global_style": 0|1|null}`
//!
//! `selection` indices refer to positions in `keyphrases` before sentinel
//! insertion; the bank rebases them once sentinels are added.

use crate::config::Task;
use crate::corpus::vocab::{Vocabulary, SNT};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

pub const TOPIC_TRUNCATE: usize = 500;
pub const PASSAGE_TRUNCATE: usize = 400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSentence {
    pub tokens: Vec<String>,
    pub selection: Vec<usize>,
    pub style: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub topic: Vec<String>,
    pub passages: Option<Vec<String>>,
    pub keyphrases: Vec<Vec<String>>,
    pub targets: Vec<TargetSentence>,
    pub global_style: Option<u8>,
}

impl Sample {
    /// Every token stream in the sample, for vocabulary counting.
    pub fn all_tokens(&self) -> impl Iterator<Item = &str> {
        self.topic
            .iter()
            .map(|s| s.as_str())
            .chain(self.passages.iter().flatten().map(|s| s.as_str()))
            .chain(self.keyphrases.iter().flatten().map(|s| s.as_str()))
            .chain(
                self.targets
                    .iter()
                    .flat_map(|t| t.tokens.iter().map(|s| s.as_str())),
            )
    }

    /// Encoder input: topic truncated to 500 tokens, then a boundary token
    /// and the passages truncated to 400 when present.
    pub fn encoder_input(&self, vocab: &Vocabulary) -> Vec<usize> {
        let mut ids: Vec<usize> = self
            .topic
            .iter()
            .take(TOPIC_TRUNCATE)
            .map(|t| vocab.id(t))
            .collect();
        if let Some(passages) = &self.passages {
            if !passages.is_empty() {
                ids.push(SNT);
                ids.extend(passages.iter().take(PASSAGE_TRUNCATE).map(|t| vocab.id(t)));
            }
        }
        ids
    }

    /// Encoder input as tokens, same truncation, for copy bookkeeping.
    pub fn encoder_input_tokens(&self) -> Vec<String> {
        let mut tokens: Vec<String> = self.topic.iter().take(TOPIC_TRUNCATE).cloned().collect();
        if let Some(passages) = &self.passages {
            if !passages.is_empty() {
                tokens.push("<snt>".to_string());
                tokens.extend(passages.iter().take(PASSAGE_TRUNCATE).cloned());
            }
        }
        tokens
    }

    fn validate(&self, line: usize) -> Result<()> {
        if self.topic.is_empty() {
            return Err(Error::Corpus {
                line: Some(line),
                msg: format!("sample {}: empty topic", self.id),
            });
        }
        let n_phrases = self.keyphrases.len();
        for target in &self.targets {
            if target.tokens.is_empty() {
                return Err(Error::Corpus {
                    line: Some(line),
                    msg: format!("sample {}: empty target sentence", self.id),
                });
            }
            if let Some(&bad) = target.selection.iter().find(|&&s| s >= n_phrases) {
                return Err(Error::Corpus {
                    line: Some(line),
                    msg: format!(
                        "sample {}: selection index {bad} out of range for {n_phrases} keyphrases",
                        self.id
                    ),
                });
            }
        }
        if let Some(g) = self.global_style {
            if g > 1 {
                return Err(Error::Corpus {
                    line: Some(line),
                    msg: format!("sample {}: global_style must be 0 or 1, got {g}", self.id),
                });
            }
        }
        Ok(())
    }
}

/// Load a corpus file, validating structure only (no task yet).
pub fn load_corpus(path: &Path) -> Result<Vec<Sample>> {
    let file = File::open(path).map_err(|e| Error::Corpus {
        line: None,
        msg: format!("{}: {e}", path.display()),
    })?;
    let reader = BufReader::new(file);
    let mut samples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Corpus {
            line: Some(line_no),
            msg: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: Sample = serde_json::from_str(&line).map_err(|e| Error::Corpus {
            line: Some(line_no),
            msg: e.to_string(),
        })?;
        sample.validate(line_no)?;
        samples.push(sample);
    }
    Ok(samples)
}

/// Load and additionally validate task-specific fields: style ids must be
/// within the task's arity and Wikipedia samples need a global style.
pub fn load_corpus_for_task(path: &Path, task: Task) -> Result<Vec<Sample>> {
    let samples = load_corpus(path)?;
    let arity = task.n_styles();
    for (i, sample) in samples.iter().enumerate() {
        for target in &sample.targets {
            if target.style >= arity {
                return Err(Error::Corpus {
                    line: Some(i + 1),
                    msg: format!(
                        "sample {}: style id {} unknown for task {task} (arity {arity})",
                        sample.id, target.style
                    ),
                });
            }
        }
        if task.has_global_style() && !sample.targets.is_empty() && sample.global_style.is_none() {
            return Err(Error::Corpus {
                line: Some(i + 1),
                msg: format!("sample {}: task {task} requires global_style", sample.id),
            });
        }
    }
    Ok(samples)
}

/// Samples usable for training: targets present and nonempty.
pub fn require_training_targets(samples: &[Sample]) -> Result<()> {
    for (i, sample) in samples.iter().enumerate() {
        if sample.targets.is_empty() {
            return Err(Error::Corpus {
                line: Some(i + 1),
                msg: format!("sample {}: targets empty in training mode", sample.id),
            });
        }
    }
    Ok(())
}

pub fn write_corpus(samples: &[Sample], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::Corpus {
        line: None,
        msg: format!("{}: {e}", path.display()),
    })?;
    let mut writer = BufWriter::new(file);
    for sample in samples {
        let line = serde_json::to_string(sample).map_err(|e| Error::Corpus {
            line: None,
            msg: e.to_string(),
        })?;
        writeln!(writer, "{line}")?;
    }
    writer.flush()?;
    Ok(())
}
