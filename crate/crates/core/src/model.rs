//! Model parameters: creation, naming, tape binding, and the extended
//! vocabulary used by the copy mechanism.

use crate::config::RunConfig;
use crate::corpus::bank::{Bank, BankEntry};
use crate::corpus::vocab::{Vocabulary, UNK};
use crate::error::{Error, Result};
use crate::numcore::array::{Array, ParamSet};
use crate::numcore::lstm::{lstm_init, LstmWeights};
use crate::numcore::optim::NamedGrads;
use crate::numcore::tape::{Tape, Var};
use rand::Rng;
use std::collections::{BTreeMap, HashMap};

pub const INIT_SCALE: f64 = 0.1;

/// Structural dimensions, derived from the run configuration and vocabulary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelDims {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
    pub layers: usize,
    pub n_styles: usize,
    pub global_bit: bool,
    pub title_sum: bool,
    pub dropout: f64,
}

impl ModelDims {
    pub fn from_config(config: &RunConfig, vocab_size: usize) -> ModelDims {
        ModelDims {
            vocab: vocab_size,
            embed: config.embed,
            hidden: config.hidden,
            layers: config.layers,
            n_styles: config.n_styles(),
            global_bit: config.task.has_global_style(),
            title_sum: config.task.title_sum_encoder(),
            dropout: config.dropout,
        }
    }

    pub fn gbit(&self) -> usize {
        usize::from(self.global_bit)
    }

    /// Width of the style conditioning vector fed to the output layer:
    /// the one-hot plus the global bit when the task defines it.
    pub fn style_vec_width(&self) -> usize {
        self.n_styles + self.gbit()
    }

    /// Per-direction width of the bidirectional readers.
    pub fn half_hidden(&self) -> usize {
        self.hidden / 2
    }
}

/// All trainable arrays plus the dimensions that shaped them.
#[derive(Debug, Clone)]
pub struct Model {
    pub dims: ModelDims,
    pub params: ParamSet,
}

fn add_lstm<R: Rng>(
    params: &mut ParamSet,
    prefix: &str,
    d_in: usize,
    d_h: usize,
    rng: &mut R,
) {
    let (w, b) = lstm_init(d_in, d_h, INIT_SCALE, rng);
    params.add(&format!("{prefix}_w"), w);
    params.add(&format!("{prefix}_b"), b);
}

fn add_affine<R: Rng>(
    params: &mut ParamSet,
    name: &str,
    rows: usize,
    cols: usize,
    bias: bool,
    rng: &mut R,
) {
    params.add(
        &format!("{name}_w"),
        Array::uniform(vec![rows, cols], -INIT_SCALE, INIT_SCALE, rng),
    );
    if bias {
        params.add(
            &format!("{name}_b"),
            Array::uniform(vec![1, cols], -INIT_SCALE, INIT_SCALE, rng),
        );
    }
}

impl Model {
    /// Fresh parameters, uniform in [-0.1, 0.1], in a fixed registration
    /// order so checkpoints and optimizer state stay aligned.
    pub fn new<R: Rng>(config: &RunConfig, vocab_size: usize, rng: &mut R) -> Model {
        let dims = ModelDims::from_config(config, vocab_size);
        let h = dims.hidden;
        let half = dims.half_hidden();
        let e = dims.embed;
        let mut params = ParamSet::new();

        params.add(
            "embedding",
            Array::uniform(vec![dims.vocab, e], -INIT_SCALE, INIT_SCALE, rng),
        );
        params.add(
            "kp_start",
            Array::uniform(vec![1, e], -INIT_SCALE, INIT_SCALE, rng),
        );
        params.add(
            "kp_end",
            Array::uniform(vec![1, e], -INIT_SCALE, INIT_SCALE, rng),
        );

        if dims.title_sum {
            add_affine(&mut params, "title", e, h, true, rng);
        } else {
            add_lstm(&mut params, "enc_fwd", e, half, rng);
            add_lstm(&mut params, "enc_bwd", e, half, rng);
            add_affine(&mut params, "bridge_h", h, h, true, rng);
            add_affine(&mut params, "bridge_c", h, h, true, rng);
        }
        add_lstm(&mut params, "kp_fwd", e, half, rng);
        add_lstm(&mut params, "kp_bwd", e, half, rng);

        for layer in 0..dims.layers {
            let d_in = if layer == 0 { h + dims.gbit() } else { h };
            add_lstm(&mut params, &format!("plan_l{layer}"), d_in, h, rng);
        }
        add_affine(&mut params, "sel", h, 1, true, rng);
        params.add(
            "sel_bilinear",
            Array::uniform(vec![h, h], -INIT_SCALE, INIT_SCALE, rng),
        );
        add_affine(&mut params, "style", h + dims.gbit() + h, h, true, rng);
        add_affine(&mut params, "style_out", h, dims.n_styles, true, rng);

        params.add(
            "fuse_s",
            Array::uniform(vec![h, h], -INIT_SCALE, INIT_SCALE, rng),
        );
        params.add(
            "fuse_y",
            Array::uniform(vec![e, h], -INIT_SCALE, INIT_SCALE, rng),
        );
        params.add(
            "fuse_b",
            Array::uniform(vec![1, h], -INIT_SCALE, INIT_SCALE, rng),
        );
        for layer in 0..dims.layers {
            add_lstm(&mut params, &format!("real_l{layer}"), h, h, rng);
        }
        params.add(
            "attn_input",
            Array::uniform(vec![h, h], -INIT_SCALE, INIT_SCALE, rng),
        );
        params.add(
            "attn_bank",
            Array::uniform(vec![h, h], -INIT_SCALE, INIT_SCALE, rng),
        );
        add_affine(
            &mut params,
            "out",
            3 * h + dims.style_vec_width(),
            dims.vocab,
            true,
            rng,
        );
        add_affine(&mut params, "gate", 3 * h + e, 3, true, rng);
        // Start with the gate favoring generation: once the gate collapses
        // onto a copy route the other routes' gradients vanish with their
        // mixture weight, so generation must get a head start. Copy-only
        // targets still wake the copy routes (they carry all of the
        // probability there).
        *params.get_mut("gate_b").unwrap() =
            Array::from_vec(vec![1, 3], vec![2.0, -1.0, -1.0]).unwrap();
        params.get_mut("gate_b").unwrap().set_requires_grad(true);

        Model { dims, params }
    }

    /// Copy every parameter onto a tape. Leaves carry requires-grad.
    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        bind_params(&self.params, tape)
    }

    /// Same, but frozen: decoding never needs gradients.
    pub fn bind_frozen(&self, tape: &mut Tape) -> BoundParams {
        let mut map = BTreeMap::new();
        for (name, array) in self.params.iter() {
            let mut frozen = array.clone();
            frozen.set_requires_grad(false);
            map.insert(name.to_string(), tape.leaf(&frozen));
        }
        BoundParams { map }
    }
}

/// Bind a bare parameter set (gradient checking re-binds perturbed copies).
pub fn bind_params(params: &ParamSet, tape: &mut Tape) -> BoundParams {
    let mut map = BTreeMap::new();
    for (name, array) in params.iter() {
        map.insert(name.to_string(), tape.leaf(array));
    }
    BoundParams { map }
}

/// Tape handles for every bound parameter.
#[derive(Debug, Clone)]
pub struct BoundParams {
    map: BTreeMap<String, Var>,
}

impl BoundParams {
    pub fn var(&self, name: &str) -> Var {
        *self
            .map
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name} not bound"))
    }

    pub fn lstm(&self, prefix: &str, hidden: usize) -> LstmWeights {
        LstmWeights {
            w: self.var(&format!("{prefix}_w")),
            b: self.var(&format!("{prefix}_b")),
            hidden,
        }
    }

    /// Pull gradients for every bound parameter out of the tape.
    pub fn extract_grads(&self, tape: &Tape) -> NamedGrads {
        self.map
            .iter()
            .map(|(name, &var)| (name.clone(), tape.grad(var).to_vec()))
            .collect()
    }
}

/// Base vocabulary extended with out-of-vocabulary tokens reachable by
/// copying from the input statement or the bank phrases.
#[derive(Debug, Clone)]
pub struct ExtendedVocab {
    base: usize,
    ext_tokens: Vec<String>,
    ext_index: HashMap<String, usize>,
}

impl ExtendedVocab {
    pub fn build(vocab: &Vocabulary, input_tokens: &[String], bank: &Bank) -> ExtendedVocab {
        let mut ext = ExtendedVocab {
            base: vocab.len(),
            ext_tokens: Vec::new(),
            ext_index: HashMap::new(),
        };
        for token in input_tokens {
            ext.intern(vocab, token);
        }
        for entry in bank.entries() {
            if let BankEntry::Phrase(p) = entry {
                for token in p.tokens() {
                    ext.intern(vocab, token);
                }
            }
        }
        ext
    }

    fn intern(&mut self, vocab: &Vocabulary, token: &str) {
        if !vocab.contains(token) && !self.ext_index.contains_key(token) {
            let id = self.base + self.ext_tokens.len();
            self.ext_tokens.push(token.to_string());
            self.ext_index.insert(token.to_string(), id);
        }
    }

    pub fn len(&self) -> usize {
        self.base + self.ext_tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn base(&self) -> usize {
        self.base
    }

    /// Extended id: the vocabulary id when known, the extended id when the
    /// token is a source-only word, UNK otherwise.
    pub fn id_of(&self, vocab: &Vocabulary, token: &str) -> usize {
        if vocab.contains(token) {
            vocab.id(token)
        } else if let Some(&id) = self.ext_index.get(token) {
            id
        } else {
            UNK
        }
    }

    pub fn token_of<'a>(&'a self, vocab: &'a Vocabulary, id: usize) -> &'a str {
        if id < self.base {
            vocab.token(id)
        } else {
            &self.ext_tokens[id - self.base]
        }
    }

    /// Id used to embed a previous token: extended ids fall back to UNK.
    pub fn embedding_id(&self, id: usize) -> usize {
        if id < self.base {
            id
        } else {
            UNK
        }
    }
}

/// Scatter groups mapping source structures onto extended-vocabulary slots.
pub fn input_copy_groups(
    ext: &ExtendedVocab,
    vocab: &Vocabulary,
    input_tokens: &[String],
) -> Vec<Vec<usize>> {
    input_tokens
        .iter()
        .map(|t| vec![ext.id_of(vocab, t)])
        .collect()
}

/// Per bank entry: the extended ids of the phrase tokens; sentinels get an
/// empty group (their attention mass is masked out of the copy path).
pub fn bank_copy_groups(
    ext: &ExtendedVocab,
    vocab: &Vocabulary,
    bank: &Bank,
) -> Vec<Vec<usize>> {
    bank.entries()
        .iter()
        .map(|entry| match entry {
            BankEntry::Phrase(p) => p
                .tokens()
                .iter()
                .map(|t| ext.id_of(vocab, t))
                .collect(),
            _ => Vec::new(),
        })
        .collect()
}

/// Inverted-dropout mask: entries are 0 with probability `rate`, else
/// 1/(1-rate). One mask per sample per layer gap, reused across time steps.
pub fn dropout_mask<R: Rng>(width: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    let keep = 1.0 - rate;
    (0..width)
        .map(|_| {
            if rng.gen::<f64>() < rate {
                0.0
            } else {
                1.0 / keep
            }
        })
        .collect()
}

/// Load pretrained embeddings (one line per word: token then floats) over a
/// randomly initialized table. Unknown words keep their random rows.
pub fn load_embedding_file(
    path: &std::path::Path,
    vocab: &Vocabulary,
    table: &mut Array,
) -> Result<usize> {
    let (rows, cols) = table.dims2();
    debug_assert_eq!(rows, vocab.len());
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut loaded = 0usize;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let word = parts
            .next()
            .ok_or_else(|| Error::Corpus {
                line: Some(i + 1),
                msg: "empty embedding line".into(),
            })?;
        if !vocab.contains(word) {
            continue;
        }
        let id = vocab.id(word);
        let floats: Vec<f64> = parts
            .map(|p| {
                p.parse::<f64>().map_err(|_| Error::Corpus {
                    line: Some(i + 1),
                    msg: format!("bad float '{p}' in embedding file"),
                })
            })
            .collect::<Result<_>>()?;
        if floats.len() != cols {
            return Err(Error::Corpus {
                line: Some(i + 1),
                msg: format!(
                    "embedding for '{word}' has {} floats, expected {cols}",
                    floats.len()
                ),
            });
        }
        table.values_mut()[id * cols..(id + 1) * cols].copy_from_slice(&floats);
        loaded += 1;
    }
    Ok(loaded)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Task;
    use crate::corpus::bank::{build_keyphrase_bank, Keyphrase};
    use crate::corpus::sample::{Sample, TargetSentence};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_config() -> RunConfig {
        let mut config = RunConfig::for_task(Task::Argument);
        config.hidden = 8;
        config.embed = 6;
        config.layers = 2;
        config
    }

    #[test]
    fn param_creation_is_deterministic() {
        let config = small_config();
        let a = Model::new(&config, 20, &mut ChaCha8Rng::seed_from_u64(1));
        let b = Model::new(&config, 20, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a.params.names(), b.params.names());
        for (name, arr) in a.params.iter() {
            assert_eq!(arr.values(), b.params.get(name).unwrap().values());
        }
    }

    #[test]
    fn forget_gate_bias_starts_at_one() {
        let config = small_config();
        let model = Model::new(&config, 20, &mut ChaCha8Rng::seed_from_u64(1));
        let b = model.params.get("plan_l0_b").unwrap();
        let h = config.hidden;
        for j in h..2 * h {
            assert_eq!(b.values()[j], 1.0);
        }
    }

    #[test]
    fn wikipedia_model_has_title_projection_not_encoder_lstm() {
        let mut config = RunConfig::for_task(Task::Wikipedia);
        config.hidden = 8;
        config.embed = 6;
        let model = Model::new(&config, 20, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(model.params.get("title_w").is_some());
        assert!(model.params.get("enc_fwd_w").is_none());
        assert!(model.params.get("kp_fwd_w").is_some());
    }

    #[test]
    fn extended_vocab_assigns_source_only_ids() {
        let sample = Sample {
            id: "s".into(),
            topic: vec!["known".into(), "martian".into()],
            passages: None,
            keyphrases: vec![vec!["quantum".into(), "drive".into()]],
            targets: vec![TargetSentence {
                tokens: vec!["known".into()],
                selection: vec![],
                style: 0,
            }],
            global_style: None,
        };
        // Vocabulary will contain every token here; craft one missing some.
        let vocab = Vocabulary::from_tokens(
            ["<pad>", "<unk>", "<bos>", "<eos>", "<snt>", "known"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        );
        let candidates: Vec<Keyphrase> = sample
            .keyphrases
            .iter()
            .map(|p| Keyphrase::new(p).unwrap())
            .collect();
        let bank = build_keyphrase_bank(&candidates, 70);
        let ext = ExtendedVocab::build(&vocab, &sample.topic, &bank);
        assert_eq!(ext.len(), vocab.len() + 3); // martian, quantum, drive
        assert_eq!(ext.id_of(&vocab, "known"), 5);
        let martian = ext.id_of(&vocab, "martian");
        assert!(martian >= vocab.len());
        assert_eq!(ext.token_of(&vocab, martian), "martian");
        assert_eq!(ext.embedding_id(martian), UNK);
        assert_eq!(ext.id_of(&vocab, "neverseen"), UNK);
    }

    #[test]
    fn dropout_mask_is_inverted() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mask = dropout_mask(1000, 0.2, &mut rng);
        let kept = mask.iter().filter(|&&m| m > 0.0).count();
        assert!(mask.iter().all(|&m| m == 0.0 || (m - 1.25).abs() < 1e-12));
        assert!((700..900).contains(&kept), "kept {kept}");
    }

    #[test]
    fn embedding_file_overlays_known_words() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vecs.txt");
        std::fs::write(&path, "known 1.0 2.0 3.0\nunseen 9.0 9.0 9.0\n").unwrap();
        let vocab = Vocabulary::from_tokens(
            ["<pad>", "<unk>", "<bos>", "<eos>", "<snt>", "known"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        );
        let mut table = Array::zeros(vec![6, 3]);
        let loaded = load_embedding_file(&path, &vocab, &mut table).unwrap();
        assert_eq!(loaded, 1);
        assert_eq!(&table.values()[15..18], &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn embedding_file_wrong_width_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vecs.txt");
        std::fs::write(&path, "known 1.0 2.0\n").unwrap();
        let vocab = Vocabulary::from_tokens(
            ["<pad>", "<unk>", "<bos>", "<eos>", "<snt>", "known"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        );
        let mut table = Array::zeros(vec![6, 3]);
        assert!(load_embedding_file(&path, &vocab, &mut table).is_err());
    }
}
