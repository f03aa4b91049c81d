//! Joint objective assembly and the teacher-forced training loop.
//!
//! Per batch: gold selections feed the planner input, gold styles feed the
//! output layer, and the word/selection/style losses are batch-averaged,
//! weighted, summed, backpropagated, clipped, and stepped with AdaGrad.

pub mod checkpoint;

use crate::config::RunConfig;
use crate::corpus::bank::{build_sample_bank, Bank};
use crate::corpus::sample::Sample;
use crate::corpus::vocab::{Vocabulary, BOS, EOS, SNT};
use crate::encoder::{encode_input, encode_keyphrase_bank};
use crate::error::{Error, Result};
use crate::model::{
    bank_copy_groups, dropout_mask, input_copy_groups, BoundParams, ExtendedVocab, Model,
};
use crate::numcore::optim::{adagrad_update, clip_global_norm, OptimState};
use crate::numcore::tape::{Tape, Var};
use crate::planner::{
    plan_step, predict_style, selection_embedding, selection_loss, start_selection, style_loss,
    PlannerState,
};
use crate::realizer::{
    output_distribution, realize_step, style_vector, DecoderState, RealizeContext,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{load_checkpoint, load_checkpoint_expecting, save_checkpoint, CheckpointMeta};

/// A sample preprocessed into model inputs: ids, bank, gold plan vectors,
/// the teacher-forcing token stream, and copy bookkeeping.
#[derive(Debug, Clone)]
pub struct SamplePrep {
    pub id: String,
    pub input_ids: Vec<usize>,
    pub bank: Bank,
    /// Original keyphrase position → bank index.
    pub orig_to_bank: Vec<Option<usize>>,
    /// Per sentence: bank-sized gold selection vector.
    pub gold_selections: Vec<Vec<f64>>,
    pub gold_styles: Vec<usize>,
    /// Teacher-forcing stream: (gold extended id, sentence index). Sentences
    /// end with the boundary token, the last one with end-of-sequence.
    pub stream: Vec<(usize, usize)>,
    pub ext: ExtendedVocab,
    pub input_groups: Vec<Vec<usize>>,
    pub bank_groups: Vec<Vec<usize>>,
    pub global_bit: Option<f64>,
}

impl SamplePrep {
    pub fn n_sentences(&self) -> usize {
        self.gold_selections.len()
    }
}

/// Build model inputs for one sample. Targets may be empty (inference on
/// unlabeled inputs); training validates nonemptiness upfront.
pub fn prepare_sample(
    sample: &Sample,
    vocab: &Vocabulary,
    config: &RunConfig,
) -> Result<SamplePrep> {
    let (bank, orig_to_bank) = build_sample_bank(&sample.keyphrases, config.bank_cap);
    let input_tokens = sample.encoder_input_tokens();
    let input_ids = sample.encoder_input(vocab);
    let ext = ExtendedVocab::build(vocab, &input_tokens, &bank);
    let input_groups = input_copy_groups(&ext, vocab, &input_tokens);
    let bank_groups = bank_copy_groups(&ext, vocab, &bank);

    let n_styles = config.n_styles();
    let mut gold_selections = Vec::with_capacity(sample.targets.len());
    let mut gold_styles = Vec::with_capacity(sample.targets.len());
    let mut stream = Vec::new();
    let n_sentences = sample.targets.len();
    for (j, target) in sample.targets.iter().enumerate() {
        let mut v = vec![0.0; bank.len()];
        for &orig in &target.selection {
            if let Some(bank_idx) = orig_to_bank.get(orig).copied().flatten() {
                v[bank_idx] = 1.0;
            }
        }
        gold_selections.push(v);
        if target.style >= n_styles {
            return Err(Error::Corpus {
                line: None,
                msg: format!(
                    "sample {}: style {} out of range for arity {n_styles}",
                    sample.id, target.style
                ),
            });
        }
        gold_styles.push(target.style);
        for token in &target.tokens {
            stream.push((ext.id_of(vocab, token), j));
        }
        let terminator = if j + 1 == n_sentences { EOS } else { SNT };
        stream.push((terminator, j));
    }

    let global_bit = if config.task.has_global_style() {
        match sample.global_style {
            Some(bit) => Some(bit as f64),
            None => {
                return Err(Error::Corpus {
                    line: None,
                    msg: format!("sample {}: task requires a global style", sample.id),
                })
            }
        }
    } else {
        None
    };

    Ok(SamplePrep {
        id: sample.id.clone(),
        input_ids,
        bank,
        orig_to_bank,
        gold_selections,
        gold_styles,
        stream,
        ext,
        input_groups,
        bank_groups,
        global_bit,
    })
}

/// Variational dropout masks for one batch: per sample, per layer gap, one
/// mask for the planner stack and one for the realizer stack.
#[derive(Debug, Clone, Default)]
pub struct BatchDropout {
    planner: Vec<Vec<Vec<f64>>>,
    realizer: Vec<Vec<Vec<f64>>>,
}

pub fn draw_dropout(
    dims: &crate::model::ModelDims,
    n_samples: usize,
    rng: &mut ChaCha8Rng,
) -> BatchDropout {
    let gaps = dims.layers.saturating_sub(1);
    let mut planner = Vec::with_capacity(n_samples);
    let mut realizer = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        planner.push(
            (0..gaps)
                .map(|_| dropout_mask(dims.hidden, dims.dropout, rng))
                .collect(),
        );
        realizer.push(
            (0..gaps)
                .map(|_| dropout_mask(dims.hidden, dims.dropout, rng))
                .collect(),
        );
    }
    BatchDropout { planner, realizer }
}

/// Loss values and teacher-forced accuracy for a batch.
#[derive(Debug, Clone, Copy, Default)]
pub struct BatchStats {
    pub joint: f64,
    pub gen: f64,
    pub sel: f64,
    pub style: f64,
    pub tokens: usize,
    pub correct: usize,
}

impl BatchStats {
    pub fn token_accuracy(&self) -> f64 {
        if self.tokens == 0 {
            0.0
        } else {
            self.correct as f64 / self.tokens as f64
        }
    }
}

/// Weighted objective: `l_gen + gamma·l_style + eta·l_sel`.
pub fn joint_loss(
    tape: &mut Tape,
    l_gen: Var,
    l_style: Var,
    l_sel: Var,
    gamma: f64,
    eta: f64,
) -> Result<Var> {
    let style_term = tape.scale_const(l_style, gamma);
    let sel_term = tape.scale_const(l_sel, eta);
    let partial = tape.add(l_gen, style_term)?;
    tape.add(partial, sel_term)
}

/// Teacher-forced forward for a batch, building the joint loss on the tape.
pub fn batch_joint_loss(
    tape: &mut Tape,
    bp: &BoundParams,
    dims: &crate::model::ModelDims,
    vocab: &Vocabulary,
    preps: &[&SamplePrep],
    gamma: f64,
    eta: f64,
    dropout: Option<&BatchDropout>,
) -> Result<(Var, BatchStats)> {
    assert!(!preps.is_empty());
    let n = preps.len();

    let mut sel_terms: Vec<(Var, Vec<f64>)> = Vec::new();
    let mut style_terms: Vec<(Var, usize)> = Vec::new();
    let mut gen_total: Option<Var> = None;
    let mut tokens = 0usize;
    let mut correct = 0usize;

    for (si, prep) in preps.iter().enumerate() {
        let enc = encode_input(tape, bp, dims, &prep.input_ids)?;
        let memory = encode_keyphrase_bank(tape, bp, dims, &prep.bank, vocab)?;

        // Planner: teacher-forced over gold selections, then the stop step
        // whose gold selection is the end sentinel alone.
        let planner_masks = dropout.map(|d| d.planner[si].as_slice());
        let mut pstate = PlannerState::fresh(&enc, dims, memory.size);
        let mut prev_v = start_selection(&memory);
        pstate.record_selection(&prev_v);
        let mut s_list: Vec<Var> = Vec::with_capacity(prep.n_sentences());
        for j in 0..prep.n_sentences() {
            let scored = plan_step(
                tape,
                bp,
                dims,
                &mut pstate,
                &prev_v,
                &memory,
                prep.global_bit,
                planner_masks,
            )?;
            sel_terms.push((scored.scores, prep.gold_selections[j].clone()));
            let m_own = selection_embedding(tape, &prep.gold_selections[j], &memory, prep.global_bit)?;
            let (dist, _) = predict_style(tape, bp, dims, m_own, scored.s_top)?;
            style_terms.push((dist, prep.gold_styles[j]));
            s_list.push(scored.s_top);
            pstate.record_selection(&prep.gold_selections[j]);
            prev_v = prep.gold_selections[j].clone();
        }
        let stop = plan_step(
            tape,
            bp,
            dims,
            &mut pstate,
            &prev_v,
            &memory,
            prep.global_bit,
            planner_masks,
        )?;
        let mut end_gold = vec![0.0; memory.size];
        end_gold[memory.end_index] = 1.0;
        sel_terms.push((stop.scores, end_gold));

        // Realizer: teacher-forced over the token stream.
        let realizer_masks = dropout.map(|d| d.realizer[si].as_slice());
        let ctx = RealizeContext {
            enc: &enc,
            memory: &memory,
            ext_width: prep.ext.len(),
            input_groups: &prep.input_groups,
            bank_groups: &prep.bank_groups,
        };
        let mut dstate = DecoderState::fresh(&enc, dims);
        let mut y_prev = BOS;
        for &(gold_ext, j) in &prep.stream {
            let emb_id = prep.ext.embedding_id(y_prev);
            let y_emb = tape.embed_sum(bp.var("embedding"), &[emb_id])?;
            let (next_state, z) =
                realize_step(tape, bp, dims, &dstate, y_emb, s_list[j], realizer_masks)?;
            dstate = next_state;
            let style = style_vector(dims, prep.gold_styles[j], prep.global_bit);
            let step = output_distribution(tape, bp, dims, &ctx, z, &style, y_emb)?;
            let term = tape.neg_log_pick(step.dist, gold_ext)?;
            gen_total = Some(match gen_total {
                Some(acc) => tape.add(acc, term)?,
                None => term,
            });

            let values = tape.values(step.dist);
            let mut best = 0usize;
            for (i, &p) in values.iter().enumerate() {
                if p > values[best] {
                    best = i;
                }
            }
            tokens += 1;
            if best == gold_ext {
                correct += 1;
            }
            y_prev = gold_ext;
        }
    }

    let l_sel = selection_loss(tape, &sel_terms, n)?;
    let l_style = style_loss(tape, &style_terms, n)?;
    let gen_sum = gen_total.unwrap_or_else(|| tape.constant_scalar(0.0));
    let l_gen = tape.scale_const(gen_sum, 1.0 / n as f64);
    let joint = joint_loss(tape, l_gen, l_style, l_sel, gamma, eta)?;

    let stats = BatchStats {
        joint: tape.value_scalar(joint),
        gen: tape.value_scalar(l_gen),
        sel: tape.value_scalar(l_sel),
        style: tape.value_scalar(l_style),
        tokens,
        correct,
    };
    Ok((joint, stats))
}

/// Mean stats over an epoch.
#[derive(Debug, Clone, Copy, Default)]
pub struct EpochStats {
    pub joint: f64,
    pub gen: f64,
    pub sel: f64,
    pub style: f64,
    pub batches: usize,
    pub token_accuracy: f64,
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add((epoch as u64).wrapping_mul(0x9E3779B97F4A7C15)))
}

/// One pass over the data: seed-determined permutation, teacher-forced
/// forward, backward, global-norm clip, AdaGrad. Partial final batches are
/// trained too.
pub fn train_epoch(
    model: &mut Model,
    opt: &mut OptimState,
    preps: &[SamplePrep],
    vocab: &Vocabulary,
    config: &RunConfig,
    epoch: usize,
) -> Result<EpochStats> {
    if preps.is_empty() {
        return Err(Error::Model("empty training set".into()));
    }
    let mut rng = epoch_rng(config.seed, epoch);
    let mut order: Vec<usize> = (0..preps.len()).collect();
    order.shuffle(&mut rng);

    let mut totals = EpochStats::default();
    let mut tokens = 0usize;
    let mut correct = 0usize;
    for (batch_id, chunk) in order.chunks(config.batch_size).enumerate() {
        let batch: Vec<&SamplePrep> = chunk.iter().map(|&i| &preps[i]).collect();
        let mut tape = Tape::new();
        let bp = model.bind(&mut tape);
        let dropout = if config.dropout > 0.0 && model.dims.layers > 1 {
            Some(draw_dropout(&model.dims, batch.len(), &mut rng))
        } else {
            None
        };
        let (joint, stats) = batch_joint_loss(
            &mut tape,
            &bp,
            &model.dims,
            vocab,
            &batch,
            config.gamma,
            config.eta,
            dropout.as_ref(),
        )?;
        if !stats.joint.is_finite() {
            return Err(Error::Model(format!(
                "non-finite loss in batch {batch_id} of epoch {epoch}"
            )));
        }
        tape.backward(joint)?;
        let mut grads = bp.extract_grads(&tape);
        clip_global_norm(&mut grads, opt.clip_norm());
        adagrad_update(&mut model.params, &grads, opt)?;

        totals.joint += stats.joint;
        totals.gen += stats.gen;
        totals.sel += stats.sel;
        totals.style += stats.style;
        totals.batches += 1;
        tokens += stats.tokens;
        correct += stats.correct;
    }
    let b = totals.batches as f64;
    totals.joint /= b;
    totals.gen /= b;
    totals.sel /= b;
    totals.style /= b;
    totals.token_accuracy = if tokens == 0 {
        0.0
    } else {
        correct as f64 / tokens as f64
    };
    Ok(totals)
}

/// Loss and accuracy without updating anything (dropout off).
pub fn evaluate_loss(
    model: &Model,
    preps: &[SamplePrep],
    vocab: &Vocabulary,
    config: &RunConfig,
) -> Result<EpochStats> {
    if preps.is_empty() {
        return Err(Error::Model("empty evaluation set".into()));
    }
    let mut totals = EpochStats::default();
    let mut tokens = 0usize;
    let mut correct = 0usize;
    for chunk in (0..preps.len()).collect::<Vec<_>>().chunks(config.batch_size) {
        let batch: Vec<&SamplePrep> = chunk.iter().map(|&i| &preps[i]).collect();
        let mut tape = Tape::new();
        let bp = model.bind_frozen(&mut tape);
        let (_, stats) = batch_joint_loss(
            &mut tape,
            &bp,
            &model.dims,
            vocab,
            &batch,
            config.gamma,
            config.eta,
            None,
        )?;
        totals.joint += stats.joint;
        totals.gen += stats.gen;
        totals.sel += stats.sel;
        totals.style += stats.style;
        totals.batches += 1;
        tokens += stats.tokens;
        correct += stats.correct;
    }
    let b = totals.batches as f64;
    totals.joint /= b;
    totals.gen /= b;
    totals.sel /= b;
    totals.style /= b;
    totals.token_accuracy = if tokens == 0 {
        0.0
    } else {
        correct as f64 / tokens as f64
    };
    Ok(totals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Task;
    use crate::corpus::synth::{generate_synthetic_corpus, SynthConfig};
    use crate::corpus::vocab::Vocabulary;

    fn tiny_config() -> RunConfig {
        let mut config = RunConfig::for_task(Task::Argument);
        config.hidden = 16;
        config.embed = 12;
        config.layers = 2;
        config.dropout = 0.0;
        config.batch_size = 8;
        config.seed = 42;
        config
    }

    fn tiny_setup(n: usize) -> (Model, Vec<SamplePrep>, Vocabulary, RunConfig) {
        let config = tiny_config();
        let samples = generate_synthetic_corpus(5, n, &SynthConfig::default());
        let vocab = Vocabulary::build(&samples, config.vocab_max).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let model = Model::new(&config, vocab.len(), &mut rng);
        let preps: Vec<SamplePrep> = samples
            .iter()
            .map(|s| prepare_sample(s, &vocab, &config).unwrap())
            .collect();
        (model, preps, vocab, config)
    }

    #[test]
    fn joint_loss_is_the_weighted_sum() {
        let mut tape = Tape::new();
        let g = tape.constant_scalar(1.0);
        let st = tape.constant_scalar(2.0);
        let se = tape.constant_scalar(3.0);
        let j = joint_loss(&mut tape, g, st, se, 1.0, 1.0).unwrap();
        assert!((tape.value_scalar(j) - 6.0).abs() < 1e-12);

        let j0 = joint_loss(&mut tape, g, st, se, 0.0, 0.0).unwrap();
        assert!((tape.value_scalar(j0) - 1.0).abs() < 1e-12);

        let g2 = tape.constant_scalar(2.0);
        let st2 = tape.constant_scalar(4.0);
        let se2 = tape.constant_scalar(6.0);
        let j2 = joint_loss(&mut tape, g2, st2, se2, 1.0, 1.0).unwrap();
        assert!((tape.value_scalar(j2) - 2.0 * tape.value_scalar(j)).abs() < 1e-12);
    }

    #[test]
    fn zero_learning_rate_keeps_parameters_and_reports_stats() {
        let (mut model, preps, vocab, mut config) = tiny_setup(8);
        config.lr = 1e-300; // effectively zero while satisfying positivity
        let before: Vec<Vec<f64>> = model.params.iter().map(|(_, a)| a.values().to_vec()).collect();
        let mut opt = OptimState::new(&model.params, config.lr, config.acc_init, config.clip_norm);
        let stats = train_epoch(&mut model, &mut opt, &preps, &vocab, &config, 0).unwrap();
        assert!(stats.joint.is_finite() && stats.batches >= 1);
        for ((_, after), before) in model.params.iter().zip(&before) {
            for (a, b) in after.values().iter().zip(before) {
                assert!((a - b).abs() < 1e-290);
            }
        }
    }

    #[test]
    fn fixed_seed_training_is_bitwise_reproducible() {
        let run = || {
            let (mut model, preps, vocab, mut config) = tiny_setup(8);
            config.dropout = 0.2;
            let mut opt =
                OptimState::new(&model.params, config.lr, config.acc_init, config.clip_norm);
            for epoch in 0..2 {
                train_epoch(&mut model, &mut opt, &preps, &vocab, &config, epoch).unwrap();
            }
            model
                .params
                .iter()
                .flat_map(|(_, a)| a.values().iter().map(|v| v.to_bits()))
                .collect::<Vec<u64>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn loss_decreases_on_synthetic_corpus() {
        let (mut model, preps, vocab, config) = tiny_setup(8);
        let mut opt = OptimState::new(&model.params, config.lr, config.acc_init, config.clip_norm);
        let first = train_epoch(&mut model, &mut opt, &preps, &vocab, &config, 0).unwrap();
        let mut last = first;
        for epoch in 1..12 {
            last = train_epoch(&mut model, &mut opt, &preps, &vocab, &config, epoch).unwrap();
        }
        assert!(
            last.joint < first.joint,
            "no improvement: {} -> {}",
            first.joint,
            last.joint
        );
    }

    #[test]
    fn partial_final_batch_is_trained() {
        let (mut model, preps, vocab, mut config) = tiny_setup(5);
        config.batch_size = 4; // 5 samples -> batches of 4 and 1
        let mut opt = OptimState::new(&model.params, config.lr, config.acc_init, config.clip_norm);
        let stats = train_epoch(&mut model, &mut opt, &preps, &vocab, &config, 0).unwrap();
        assert_eq!(stats.batches, 2);
    }
}
