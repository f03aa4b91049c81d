//! Run configuration: task selection, hyperparameters, and the flat
//! `key=value` config-file format.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

/// Generation task. Determines style arity, bank cap, the global style bit,
/// and the title encoder mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Argument,
    Wikipedia,
    Abstract,
}

impl Task {
    pub fn n_styles(&self) -> usize {
        match self {
            Task::Argument => 3,
            Task::Wikipedia => 4,
            Task::Abstract => 1,
        }
    }

    pub fn bank_cap(&self) -> usize {
        match self {
            Task::Argument => 70,
            Task::Wikipedia | Task::Abstract => 30,
        }
    }

    pub fn has_global_style(&self) -> bool {
        matches!(self, Task::Wikipedia)
    }

    /// Wikipedia titles are short; they are encoded by summing word
    /// embeddings instead of running the recurrent reader.
    pub fn title_sum_encoder(&self) -> bool {
        matches!(self, Task::Wikipedia)
    }

    pub fn parse(s: &str) -> Result<Task> {
        match s {
            "argument" => Ok(Task::Argument),
            "wikipedia" => Ok(Task::Wikipedia),
            "abstract" => Ok(Task::Abstract),
            other => Err(Error::Config(format!(
                "unknown task '{other}' (expected argument, wikipedia, or abstract)"
            ))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Argument => write!(f, "argument"),
            Task::Wikipedia => write!(f, "wikipedia"),
            Task::Abstract => write!(f, "abstract"),
        }
    }
}

/// Everything a run needs. Defaults follow the reference setup: 512-dim
/// hidden states, 2 decoder layers, dropout 0.2, AdaGrad at lr 0.15 with
/// 0.1 initial accumulator, gradient clip 2.0, batch 64, beam 5, 50K vocab.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub task: Task,
    pub hidden: usize,
    pub embed: usize,
    pub layers: usize,
    pub dropout: f64,
    pub lr: f64,
    pub acc_init: f64,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub gamma: f64,
    pub eta: f64,
    pub seed: u64,
    pub vocab_max: usize,
    pub bank_cap: usize,
    pub beam: usize,
    pub max_sentences: usize,
    pub max_sentence_len: usize,
    pub threshold: f64,
    pub oracle_plan: bool,
    /// Reserved hook; language-model pretraining is not performed here.
    pub lm_pretrain: bool,
}

impl RunConfig {
    pub fn for_task(task: Task) -> RunConfig {
        RunConfig {
            task,
            hidden: 512,
            embed: 300,
            layers: 2,
            dropout: 0.2,
            lr: 0.15,
            acc_init: 0.1,
            clip_norm: 2.0,
            batch_size: 64,
            max_epochs: 30,
            gamma: 1.0,
            eta: 1.0,
            seed: 1,
            vocab_max: 50_000,
            bank_cap: task.bank_cap(),
            beam: 5,
            max_sentences: 10,
            max_sentence_len: 40,
            threshold: 0.5,
            oracle_plan: false,
            lm_pretrain: false,
        }
    }

    pub fn n_styles(&self) -> usize {
        self.task.n_styles()
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.hidden % 2 != 0 {
            return Err(Error::Config(format!(
                "hidden must be positive and even (bidirectional halves), got {}",
                self.hidden
            )));
        }
        if self.embed == 0 || self.layers == 0 || self.batch_size == 0 {
            return Err(Error::Config("embed, layers, batch must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} not in [0,1)", self.dropout)));
        }
        if self.lr <= 0.0 || self.acc_init <= 0.0 || self.clip_norm <= 0.0 {
            return Err(Error::Config("lr, acc_init, clip must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.threshold) || self.threshold == 0.0 {
            return Err(Error::Config(format!(
                "threshold {} not in (0,1)",
                self.threshold
            )));
        }
        if self.beam == 0 || self.max_sentences == 0 || self.max_sentence_len == 0 {
            return Err(Error::Config(
                "beam, max_sentences, max_sentence_len must be at least 1".into(),
            ));
        }
        if self.vocab_max < 6 {
            return Err(Error::Config(format!(
                "vocab_max {} cannot hold the reserved tokens",
                self.vocab_max
            )));
        }
        if self.bank_cap == 0 {
            return Err(Error::Config("bank_cap must be at least 1".into()));
        }
        Ok(())
    }

    /// Apply one `key=value` assignment. Unknown keys are rejected so typos
    /// never pass silently.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("invalid value '{value}' for key '{key}'")))
        }
        match key {
            "task" => {
                self.task = Task::parse(value)?;
                self.bank_cap = self.task.bank_cap();
            }
            "hidden" => self.hidden = num(key, value)?,
            "embed" => self.embed = num(key, value)?,
            "layers" => self.layers = num(key, value)?,
            "dropout" => self.dropout = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "acc_init" => self.acc_init = num(key, value)?,
            "clip" => self.clip_norm = num(key, value)?,
            "batch" => self.batch_size = num(key, value)?,
            "epochs" => self.max_epochs = num(key, value)?,
            "gamma" => self.gamma = num(key, value)?,
            "eta" => self.eta = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "vocab" => self.vocab_max = num(key, value)?,
            "bank_cap" => self.bank_cap = num(key, value)?,
            "beam" => self.beam = num(key, value)?,
            "max_sentences" => self.max_sentences = num(key, value)?,
            "max_sentence_len" => self.max_sentence_len = num(key, value)?,
            "threshold" => self.threshold = num(key, value)?,
            "oracle_plan" => self.oracle_plan = num(key, value)?,
            "lm_pretrain" => self.lm_pretrain = num(key, value)?,
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Echo of the resolved configuration, one `key=value` per line.
    pub fn render(&self) -> String {
        format!(
            "task={}\nhidden={}\nembed={}\nlayers={}\ndropout={}\nlr={}\nacc_init={}\nclip={}\nbatch={}\nepochs={}\ngamma={}\neta={}\nseed={}\nvocab={}\nbank_cap={}\nbeam={}\nmax_sentences={}\nmax_sentence_len={}\nthreshold={}\noracle_plan={}\nlm_pretrain={}\n",
            self.task,
            self.hidden,
            self.embed,
            self.layers,
            self.dropout,
            self.lr,
            self.acc_init,
            self.clip_norm,
            self.batch_size,
            self.max_epochs,
            self.gamma,
            self.eta,
            self.seed,
            self.vocab_max,
            self.bank_cap,
            self.beam,
            self.max_sentences,
            self.max_sentence_len,
            self.threshold,
            self.oracle_plan,
            self.lm_pretrain,
        )
    }
}

/// Parse a flat `key=value` config file (empty lines and `#` comments
/// allowed), then apply command-line overrides on top.
pub fn load_config(
    path: Option<&Path>,
    task: Task,
    overrides: &[(String, String)],
) -> Result<RunConfig> {
    let mut config = RunConfig::for_task(task);
    if let Some(path) = path {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got '{line}'", i + 1))
            })?;
            config.set(key.trim(), value.trim())?;
        }
    }
    for (key, value) in overrides {
        config.set(key, value)?;
    }
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_yields_reference_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.cfg");
        std::fs::write(&path, "").unwrap();
        let config = load_config(Some(&path), Task::Argument, &[]).unwrap();
        assert_eq!(config, RunConfig::for_task(Task::Argument));
        assert_eq!(config.hidden, 512);
        assert_eq!(config.lr, 0.15);
    }

    #[test]
    fn overrides_beat_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.cfg");
        std::fs::write(&path, "beam=3\nhidden=64\n").unwrap();
        let config = load_config(
            Some(&path),
            Task::Argument,
            &[("beam".into(), "1".into())],
        )
        .unwrap();
        assert_eq!(config.beam, 1);
        assert_eq!(config.hidden, 64);
    }

    #[test]
    fn unknown_key_rejected() {
        let mut config = RunConfig::for_task(Task::Argument);
        let err = config.set("hiden", "64").unwrap_err();
        assert!(err.to_string().contains("hiden"));
    }

    #[test]
    fn task_drives_arity_and_caps() {
        assert_eq!(Task::Argument.n_styles(), 3);
        assert_eq!(Task::Wikipedia.n_styles(), 4);
        assert_eq!(Task::Abstract.n_styles(), 1);
        assert_eq!(RunConfig::for_task(Task::Argument).bank_cap, 70);
        assert_eq!(RunConfig::for_task(Task::Wikipedia).bank_cap, 30);
        assert_eq!(RunConfig::for_task(Task::Abstract).bank_cap, 30);
    }

    #[test]
    fn odd_hidden_rejected() {
        let mut config = RunConfig::for_task(Task::Argument);
        config.hidden = 65;
        assert!(config.validate().is_err());
    }
}
