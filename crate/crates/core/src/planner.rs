//! Sentence-level content planning: selection-history tracking, attentive
//! keyphrase selection, style specification, and the planning losses.
//!
//! Per sentence the planner consumes the previous selection's summation
//! embedding, advances its recurrent state, and scores every bank entry with
//! the selection history as the attention query. Training feeds gold
//! selections; inference binarizes the scores. Both paths share
//! [`plan_step`].

use crate::encoder::{EncoderState, KeyphraseMemory};
use crate::error::{Error, Result};
use crate::model::{BoundParams, ModelDims};
use crate::numcore::lstm::lstm_step;
use crate::numcore::tape::{Tape, Var};

/// Recurrent planner state plus the selection usage counts (sentinels
/// included, so the history reflects the start marker once).
#[derive(Debug, Clone)]
pub struct PlannerState {
    pub layers: Vec<(Var, Var)>,
    pub counts: Vec<f64>,
}

impl PlannerState {
    /// Fresh state: every layer starts from the encoder bridge, counts at
    /// zero until the caller records the start selection.
    pub fn fresh(enc: &EncoderState, dims: &ModelDims, memory_size: usize) -> PlannerState {
        PlannerState {
            layers: vec![(enc.h0, enc.c0); dims.layers],
            counts: vec![0.0; memory_size],
        }
    }

    pub fn record_selection(&mut self, v: &[f64]) {
        debug_assert_eq!(v.len(), self.counts.len());
        for (c, x) in self.counts.iter_mut().zip(v) {
            *c += x;
        }
    }
}

/// One-hot selection of the start sentinel, the planner's first input.
pub fn start_selection(memory: &KeyphraseMemory) -> Vec<f64> {
    let mut v = vec![0.0; memory.size];
    v[memory.start_index] = 1.0;
    v
}

/// Summation embedding of a selection: vᵀ × E, with the global style bit
/// appended when the task defines one.
pub fn selection_embedding(
    tape: &mut Tape,
    v: &[f64],
    memory: &KeyphraseMemory,
    global_bit: Option<f64>,
) -> Result<Var> {
    let row = tape.constant_row(v.to_vec());
    let m = tape.matmul(row, memory.matrix)?;
    match global_bit {
        Some(bit) => {
            let bit_var = tape.constant_row(vec![bit]);
            tape.concat(&[m, bit_var])
        }
        None => Ok(m),
    }
}

/// Scores for the next sentence's selection.
#[derive(Debug, Clone, Copy)]
pub struct PlanScores {
    /// 1×|M| selection probabilities.
    pub scores: Var,
    /// Top-layer planner state that produced them.
    pub s_top: Var,
}

/// Advance the planner one sentence: consume the previous selection, then
/// score every bank entry with σ(w_vᵀs + q W^c h^e_k) where q is built from
/// the usage counts before this sentence's selection is known.
pub fn plan_step(
    tape: &mut Tape,
    bp: &BoundParams,
    dims: &ModelDims,
    state: &mut PlannerState,
    prev_v: &[f64],
    memory: &KeyphraseMemory,
    global_bit: Option<f64>,
    dropout_masks: Option<&[Vec<f64>]>,
) -> Result<PlanScores> {
    if prev_v.len() != memory.size {
        return Err(Error::Model(format!(
            "selection vector has {} entries for a bank of {}",
            prev_v.len(),
            memory.size
        )));
    }
    let m_in = selection_embedding(tape, prev_v, memory, global_bit)?;

    let mut x = m_in;
    for layer in 0..dims.layers {
        let weights = bp.lstm(&format!("plan_l{layer}"), dims.hidden);
        let (h, c) = state.layers[layer];
        let (nh, nc) = lstm_step(tape, x, h, c, &weights)?;
        state.layers[layer] = (nh, nc);
        x = nh;
        if layer + 1 < dims.layers {
            if let Some(masks) = dropout_masks {
                let mask = tape.constant_row(masks[layer].clone());
                x = tape.mul(x, mask)?;
            }
        }
    }
    let s_top = x;

    // q = countsᵀ × E, the history query (counts cover selections made
    // before this sentence).
    let counts_row = tape.constant_row(state.counts.clone());
    let q = tape.matmul(counts_row, memory.matrix)?;
    let qc = tape.matmul(q, bp.var("sel_bilinear"))?;
    let bank_term = tape.matmul_nt(qc, memory.matrix)?;

    let s_lin = tape.matmul(s_top, bp.var("sel_w"))?;
    let s_term = tape.add(s_lin, bp.var("sel_b"))?;
    let logits = tape.add_scalar(bank_term, s_term)?;
    let scores = tape.sigmoid(logits);
    Ok(PlanScores { scores, s_top })
}

/// Style distribution from the sentence's own selection embedding and the
/// planner state; the one-hot argmax breaks ties toward the lowest id.
pub fn predict_style(
    tape: &mut Tape,
    bp: &BoundParams,
    dims: &ModelDims,
    m_own: Var,
    s_top: Var,
) -> Result<(Var, usize)> {
    let cat = tape.concat(&[m_own, s_top])?;
    let lin = tape.matmul(cat, bp.var("style_w"))?;
    let biased = tape.add(lin, bp.var("style_b"))?;
    let hidden = tape.tanh(biased);
    let logits_lin = tape.matmul(hidden, bp.var("style_out_w"))?;
    let logits = tape.add(logits_lin, bp.var("style_out_b"))?;
    let dist = tape.softmax_rows(logits)?;
    let values = tape.values(dist);
    let mut best = 0usize;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    debug_assert!(best < dims.n_styles);
    Ok((dist, best))
}

/// Summed binary cross-entropy over sentences and bank entries, divided by
/// the batch size.
pub fn selection_loss(
    tape: &mut Tape,
    scored: &[(Var, Vec<f64>)],
    batch_size: usize,
) -> Result<Var> {
    assert!(batch_size >= 1);
    let mut total: Option<Var> = None;
    for (scores, gold) in scored {
        let term = tape.bce(*scores, gold)?;
        total = Some(match total {
            Some(acc) => tape.add(acc, term)?,
            None => term,
        });
    }
    let total = total.unwrap_or_else(|| tape.constant_scalar(0.0));
    Ok(tape.scale_const(total, 1.0 / batch_size as f64))
}

/// Cross-entropy of style distributions against gold ids, divided by the
/// batch size.
pub fn style_loss(tape: &mut Tape, dists: &[(Var, usize)], batch_size: usize) -> Result<Var> {
    assert!(batch_size >= 1);
    let mut total: Option<Var> = None;
    for (dist, gold) in dists {
        let term = tape.neg_log_pick(*dist, *gold)?;
        total = Some(match total {
            Some(acc) => tape.add(acc, term)?,
            None => term,
        });
    }
    let total = total.unwrap_or_else(|| tape.constant_scalar(0.0));
    Ok(tape.scale_const(total, 1.0 / batch_size as f64))
}

/// Stopping and binarization limits for plan inference.
#[derive(Debug, Clone, Copy)]
pub struct PlanLimits {
    pub max_sentences: usize,
    pub threshold: f64,
}

impl Default for PlanLimits {
    fn default() -> Self {
        PlanLimits {
            max_sentences: 10,
            threshold: 0.5,
        }
    }
}

/// One planned sentence.
#[derive(Debug, Clone)]
pub struct PlanStep {
    /// Bank indices of the selected content phrases.
    pub selection: Vec<usize>,
    /// Bank-sized binary selection vector.
    pub v: Vec<f64>,
    pub style: usize,
    pub style_dist: Vec<f64>,
    /// Planner state the realizer conditions on.
    pub s_top: Var,
}

/// Run the planner freely: binarize scores at the threshold (argmax fallback
/// among content entries when nothing clears it), stop when the end sentinel
/// clears the threshold or the sentence cap is hit.
pub fn infer_plan(
    tape: &mut Tape,
    bp: &BoundParams,
    dims: &ModelDims,
    enc: &EncoderState,
    memory: &KeyphraseMemory,
    global_bit: Option<f64>,
    limits: PlanLimits,
) -> Result<Vec<PlanStep>> {
    assert!(limits.max_sentences >= 1);
    assert!(limits.threshold > 0.0 && limits.threshold < 1.0);
    let mut state = PlannerState::fresh(enc, dims, memory.size);
    let mut prev_v = start_selection(memory);
    state.record_selection(&prev_v);
    let mut plan = Vec::new();

    for _ in 0..limits.max_sentences {
        let scored = plan_step(tape, bp, dims, &mut state, &prev_v, memory, global_bit, None)?;
        let values = tape.values(scored.scores).to_vec();
        if values[memory.end_index] > limits.threshold {
            break;
        }
        let mut v = vec![0.0; memory.size];
        let mut selection = Vec::new();
        for k in 1..memory.size - 1 {
            if values[k] > limits.threshold {
                v[k] = 1.0;
                selection.push(k);
            }
        }
        if selection.is_empty() && memory.size > 2 {
            let mut best = 1usize;
            for k in 2..memory.size - 1 {
                if values[k] > values[best] {
                    best = k;
                }
            }
            v[best] = 1.0;
            selection.push(best);
        }
        let m_own = selection_embedding(tape, &v, memory, global_bit)?;
        let (style_dist, style) = predict_style(tape, bp, dims, m_own, scored.s_top)?;
        plan.push(PlanStep {
            selection,
            v: v.clone(),
            style,
            style_dist: tape.values(style_dist).to_vec(),
            s_top: scored.s_top,
        });
        state.record_selection(&v);
        prev_v = v;
    }
    Ok(plan)
}

/// Teacher-forced planning over gold selections; styles are still predicted.
/// Used by oracle-plan generation.
pub fn teacher_forced_plan(
    tape: &mut Tape,
    bp: &BoundParams,
    dims: &ModelDims,
    enc: &EncoderState,
    memory: &KeyphraseMemory,
    gold_selections: &[Vec<f64>],
    global_bit: Option<f64>,
) -> Result<Vec<PlanStep>> {
    let mut state = PlannerState::fresh(enc, dims, memory.size);
    let mut prev_v = start_selection(memory);
    state.record_selection(&prev_v);
    let mut plan = Vec::new();
    for gold in gold_selections {
        let scored = plan_step(tape, bp, dims, &mut state, &prev_v, memory, global_bit, None)?;
        let m_own = selection_embedding(tape, gold, memory, global_bit)?;
        let (style_dist, style) = predict_style(tape, bp, dims, m_own, scored.s_top)?;
        let selection: Vec<usize> = gold
            .iter()
            .enumerate()
            .filter(|&(k, &x)| x > 0.5 && k != memory.start_index && k != memory.end_index)
            .map(|(k, _)| k)
            .collect();
        plan.push(PlanStep {
            selection,
            v: gold.clone(),
            style,
            style_dist: tape.values(style_dist).to_vec(),
            s_top: scored.s_top,
        });
        state.record_selection(gold);
        prev_v = gold.clone();
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{RunConfig, Task};
    use crate::corpus::bank::{build_keyphrase_bank, Keyphrase};
    use crate::corpus::vocab::Vocabulary;
    use crate::encoder::{encode_input, encode_keyphrase_bank};
    use crate::model::Model;
    use crate::numcore::array::Array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const H: usize = 8;

    fn toy_vocab() -> Vocabulary {
        let mut tokens: Vec<String> = crate::corpus::vocab::RESERVED
            .iter()
            .map(|s| s.to_string())
            .collect();
        for w in ["alpha", "beta", "gamma", "delta"] {
            tokens.push(w.into());
        }
        Vocabulary::from_tokens(tokens)
    }

    fn toy_setup(seed: u64) -> (Model, Vocabulary, crate::corpus::bank::Bank) {
        let mut config = RunConfig::for_task(Task::Argument);
        config.hidden = H;
        config.embed = 6;
        config.layers = 1;
        let vocab = toy_vocab();
        let model = Model::new(&config, vocab.len(), &mut ChaCha8Rng::seed_from_u64(seed));
        let phrases: Vec<Keyphrase> = ["alpha", "beta", "gamma"]
            .iter()
            .map(|w| Keyphrase::new(&[w.to_string()]).unwrap())
            .collect();
        let bank = build_keyphrase_bank(&phrases, 70);
        (model, vocab, bank)
    }

    #[test]
    fn start_selection_embeds_the_start_row() {
        let (model, vocab, bank) = toy_setup(3);
        let mut tape = Tape::new();
        let bp = model.bind_frozen(&mut tape);
        let memory = encode_keyphrase_bank(&mut tape, &bp, &model.dims, &bank, &vocab).unwrap();
        let v0 = start_selection(&memory);
        let m = selection_embedding(&mut tape, &v0, &memory, None).unwrap();
        let e_row = &tape.values(memory.matrix)[0..H];
        assert_eq!(tape.values(m), e_row);
    }

    #[test]
    fn zero_counts_reduce_scores_to_state_term() {
        let (model, vocab, bank) = toy_setup(5);
        let mut tape = Tape::new();
        let bp = model.bind_frozen(&mut tape);
        let enc = encode_input(&mut tape, &bp, &model.dims, &[5, 6]).unwrap();
        let memory = encode_keyphrase_bank(&mut tape, &bp, &model.dims, &bank, &vocab).unwrap();
        let mut state = PlannerState::fresh(&enc, &model.dims, memory.size);
        // counts left at zero: q = 0, so every score is σ(w_vᵀs + b).
        let v0 = start_selection(&memory);
        let scored =
            plan_step(&mut tape, &bp, &model.dims, &mut state, &v0, &memory, None, None).unwrap();
        let values = tape.values(scored.scores);
        for v in values {
            assert!((v - values[0]).abs() < 1e-12);
        }
    }

    /// Selecting phrase k twice leaves coefficient 2 on row k of the count
    /// vector; q must equal countsᵀE recomputed independently.
    #[test]
    fn history_query_matches_count_decomposition() {
        let (model, vocab, bank) = toy_setup(7);
        let mut tape = Tape::new();
        let bp = model.bind_frozen(&mut tape);
        let enc = encode_input(&mut tape, &bp, &model.dims, &[5]).unwrap();
        let memory = encode_keyphrase_bank(&mut tape, &bp, &model.dims, &bank, &vocab).unwrap();
        let mut state = PlannerState::fresh(&enc, &model.dims, memory.size);
        let v0 = start_selection(&memory);
        state.record_selection(&v0);
        let mut pick = vec![0.0; memory.size];
        pick[2] = 1.0;
        state.record_selection(&pick);
        state.record_selection(&pick);

        assert_eq!(state.counts[2], 2.0);
        let e = tape.values(memory.matrix).to_vec();
        let mut expected = vec![0.0; H];
        for (k, &c) in state.counts.iter().enumerate() {
            for j in 0..H {
                expected[j] += c * e[k * H + j];
            }
        }
        let counts_row = tape.constant_row(state.counts.clone());
        let q = tape.matmul(counts_row, memory.matrix).unwrap();
        for (a, b) in tape.values(q).iter().zip(&expected) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn style_distribution_sums_to_one() {
        let (model, vocab, bank) = toy_setup(9);
        let mut tape = Tape::new();
        let bp = model.bind_frozen(&mut tape);
        let enc = encode_input(&mut tape, &bp, &model.dims, &[5, 7]).unwrap();
        let memory = encode_keyphrase_bank(&mut tape, &bp, &model.dims, &bank, &vocab).unwrap();
        let mut state = PlannerState::fresh(&enc, &model.dims, memory.size);
        let v0 = start_selection(&memory);
        let scored =
            plan_step(&mut tape, &bp, &model.dims, &mut state, &v0, &memory, None, None).unwrap();
        let m = selection_embedding(&mut tape, &v0, &memory, None).unwrap();
        let (dist, _) = predict_style(&mut tape, &bp, &model.dims, m, scored.s_top).unwrap();
        let sum: f64 = tape.values(dist).iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    /// Zero weights give a uniform style distribution and the tie rule picks
    /// style 0.
    #[test]
    fn zero_style_weights_tie_to_lowest_id() {
        let (mut model, vocab, bank) = toy_setup(11);
        for name in ["style_w", "style_b", "style_out_w", "style_out_b"] {
            let arr = model.params.get_mut(name).unwrap();
            let shape = arr.shape().to_vec();
            *arr = Array::zeros(shape);
            arr.set_requires_grad(true);
        }
        let mut tape = Tape::new();
        let bp = model.bind_frozen(&mut tape);
        let enc = encode_input(&mut tape, &bp, &model.dims, &[5]).unwrap();
        let memory = encode_keyphrase_bank(&mut tape, &bp, &model.dims, &bank, &vocab).unwrap();
        let mut state = PlannerState::fresh(&enc, &model.dims, memory.size);
        let v0 = start_selection(&memory);
        let scored =
            plan_step(&mut tape, &bp, &model.dims, &mut state, &v0, &memory, None, None).unwrap();
        let m = selection_embedding(&mut tape, &v0, &memory, None).unwrap();
        let (dist, best) = predict_style(&mut tape, &bp, &model.dims, m, scored.s_top).unwrap();
        for v in tape.values(dist) {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
        assert_eq!(best, 0);
    }

    #[test]
    fn selection_loss_examples() {
        let mut tape = Tape::new();
        // Perfect scores: near zero loss.
        let perfect = tape.constant_row(vec![1.0 - 1e-13, 1e-13, 1e-13, 1e-13]);
        let loss = selection_loss(
            &mut tape,
            &[(perfect, vec![1.0, 0.0, 0.0, 0.0])],
            1,
        )
        .unwrap();
        assert!(tape.value_scalar(loss) < 1e-9);

        // 0.5 everywhere over a 4-entry bank, one sentence: 4·ln 2.
        let half = tape.constant_row(vec![0.5; 4]);
        let loss = selection_loss(&mut tape, &[(half, vec![1.0, 0.0, 1.0, 0.0])], 1).unwrap();
        assert!((tape.value_scalar(loss) - 4.0 * (2f64).ln()).abs() < 1e-12);

        // Permutation equivariance over bank indices.
        let p = tape.constant_row(vec![0.9, 0.2, 0.7, 0.4]);
        let l1 = selection_loss(&mut tape, &[(p, vec![1.0, 0.0, 1.0, 0.0])], 1).unwrap();
        let p2 = tape.constant_row(vec![0.4, 0.7, 0.2, 0.9]);
        let l2 = selection_loss(&mut tape, &[(p2, vec![0.0, 1.0, 0.0, 1.0])], 1).unwrap();
        assert!((tape.value_scalar(l1) - tape.value_scalar(l2)).abs() < 1e-12);
    }

    #[test]
    fn style_loss_examples() {
        let mut tape = Tape::new();
        let onehot = tape.constant_row(vec![0.0, 1.0, 0.0]);
        let l = style_loss(&mut tape, &[(onehot, 1)], 1).unwrap();
        assert!(tape.value_scalar(l).abs() < 1e-9);

        let uniform = tape.constant_row(vec![1.0 / 3.0; 3]);
        let l = style_loss(&mut tape, &[(uniform, 2)], 1).unwrap();
        assert!((tape.value_scalar(l) - 3f64.ln()).abs() < 1e-12);

        // Additivity: dropping a sentence removes exactly its term.
        let a = tape.constant_row(vec![0.5, 0.25, 0.25]);
        let b = tape.constant_row(vec![0.1, 0.6, 0.3]);
        let both = style_loss(&mut tape, &[(a, 0), (b, 1)], 1).unwrap();
        let only_a = style_loss(&mut tape, &[(a, 0)], 1).unwrap();
        let term_b = -(0.6f64).ln();
        assert!(
            (tape.value_scalar(both) - tape.value_scalar(only_a) - term_b).abs() < 1e-12
        );
    }

    fn forced_score_model(bias: f64) -> (Model, Vocabulary, crate::corpus::bank::Bank) {
        // Zero selection weights force every score to σ(bias).
        let (mut model, vocab, bank) = toy_setup(13);
        for name in ["sel_w", "sel_bilinear"] {
            let arr = model.params.get_mut(name).unwrap();
            let shape = arr.shape().to_vec();
            *arr = Array::zeros(shape);
            arr.set_requires_grad(true);
        }
        *model.params.get_mut("sel_b").unwrap() =
            Array::from_vec(vec![1, 1], vec![bias]).unwrap();
        (model, vocab, bank)
    }

    #[test]
    fn immediate_end_gives_empty_plan() {
        // σ(5) ≈ 0.993 > 0.5 on every entry including <END>: stop at once.
        let (model, vocab, bank) = forced_score_model(5.0);
        let mut tape = Tape::new();
        let bp = model.bind_frozen(&mut tape);
        let enc = encode_input(&mut tape, &bp, &model.dims, &[5]).unwrap();
        let memory = encode_keyphrase_bank(&mut tape, &bp, &model.dims, &bank, &vocab).unwrap();
        let plan = infer_plan(
            &mut tape,
            &bp,
            &model.dims,
            &enc,
            &memory,
            None,
            PlanLimits::default(),
        )
        .unwrap();
        assert!(plan.is_empty());
    }

    #[test]
    fn below_threshold_falls_back_to_argmax_single_selection() {
        // σ(−5) ≈ 0.0067 < 0.5 everywhere: argmax fallback selects exactly one.
        let (model, vocab, bank) = forced_score_model(-5.0);
        let mut tape = Tape::new();
        let bp = model.bind_frozen(&mut tape);
        let enc = encode_input(&mut tape, &bp, &model.dims, &[5]).unwrap();
        let memory = encode_keyphrase_bank(&mut tape, &bp, &model.dims, &bank, &vocab).unwrap();
        let plan = infer_plan(
            &mut tape,
            &bp,
            &model.dims,
            &enc,
            &memory,
            None,
            PlanLimits {
                max_sentences: 3,
                threshold: 0.5,
            },
        )
        .unwrap();
        assert_eq!(plan.len(), 3); // end never fires, cap reached
        for step in &plan {
            assert_eq!(step.selection.len(), 1);
        }
    }

    #[test]
    fn sentence_cap_bounds_the_plan() {
        let (model, vocab, bank) = forced_score_model(-5.0);
        let mut tape = Tape::new();
        let bp = model.bind_frozen(&mut tape);
        let enc = encode_input(&mut tape, &bp, &model.dims, &[5]).unwrap();
        let memory = encode_keyphrase_bank(&mut tape, &bp, &model.dims, &bank, &vocab).unwrap();
        let plan = infer_plan(
            &mut tape,
            &bp,
            &model.dims,
            &enc,
            &memory,
            None,
            PlanLimits {
                max_sentences: 2,
                threshold: 0.5,
            },
        )
        .unwrap();
        assert_eq!(plan.len(), 2);
    }
}
