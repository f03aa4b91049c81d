//! Style-controlled word-level decoding.
//!
//! Each step fuses the current plan state with the previous token, advances a
//! stacked LSTM, attends over both the input statement and the keyphrase
//! memory, and mixes three output routes with a learned gate: generate from
//! the vocabulary, copy an input token, or copy a bank phrase token. Copying
//! extends the vocabulary with source-only words.

use crate::corpus::vocab::PAD;
use crate::encoder::{EncoderState, KeyphraseMemory};
use crate::error::Result;
use crate::model::{BoundParams, ModelDims};
use crate::numcore::lstm::lstm_step;
use crate::numcore::tape::{Tape, Var};

/// The output logits pass through tanh, which bounds them to (−1,1); a
/// softmax over that range can never put more than ~e²/V on one token. A
/// gain of ln·V + 2 restores sharp distributions at any vocabulary size
/// while keeping the bounded form.
pub fn output_logit_gain(vocab: usize) -> f64 {
    (vocab as f64).ln() + 2.0
}

/// Decoder recurrent state, one (h, c) pair per layer.
#[derive(Debug, Clone)]
pub struct DecoderState {
    pub layers: Vec<(Var, Var)>,
}

impl DecoderState {
    pub fn fresh(enc: &EncoderState, dims: &ModelDims) -> DecoderState {
        DecoderState {
            layers: vec![(enc.h0, enc.c0); dims.layers],
        }
    }
}

/// Everything fixed for one sample's decoding.
pub struct RealizeContext<'a> {
    pub enc: &'a EncoderState,
    pub memory: &'a KeyphraseMemory,
    /// Extended-vocabulary width.
    pub ext_width: usize,
    /// Per input position: the extended id it copies onto.
    pub input_groups: &'a [Vec<usize>],
    /// Per bank entry: extended ids of the phrase tokens (empty = sentinel).
    pub bank_groups: &'a [Vec<usize>],
}

/// Advance the decoder: fused input `tanh(W_ws·s + W_ww·y_prev + b)` through
/// the stacked cells, with variational dropout between layers when masks are
/// supplied. Returns the new state and the top hidden state z.
pub fn realize_step(
    tape: &mut Tape,
    bp: &BoundParams,
    dims: &ModelDims,
    state: &DecoderState,
    y_prev_emb: Var,
    s_plan: Var,
    dropout_masks: Option<&[Vec<f64>]>,
) -> Result<(DecoderState, Var)> {
    let s_lin = tape.matmul(s_plan, bp.var("fuse_s"))?;
    let y_lin = tape.matmul(y_prev_emb, bp.var("fuse_y"))?;
    let sum = tape.add(s_lin, y_lin)?;
    let biased = tape.add(sum, bp.var("fuse_b"))?;
    let fused = tape.tanh(biased);

    let mut layers = Vec::with_capacity(dims.layers);
    let mut x = fused;
    for layer in 0..dims.layers {
        let weights = bp.lstm(&format!("real_l{layer}"), dims.hidden);
        let (h, c) = state.layers[layer];
        let (nh, nc) = lstm_step(tape, x, h, c, &weights)?;
        layers.push((nh, nc));
        x = nh;
        if layer + 1 < dims.layers {
            if let Some(masks) = dropout_masks {
                let mask = tape.constant_row(masks[layer].clone());
                x = tape.mul(x, mask)?;
            }
        }
    }
    Ok((DecoderState { layers }, x))
}

/// The per-step output: the extended-vocabulary distribution plus the
/// bank-copy attention used for UNK repair.
pub struct StepDistribution {
    pub dist: Var,
    /// Copy attention over bank entries (sentinels masked to zero).
    pub bank_copy: Var,
}

/// Mix generation and the two copy routes into one distribution over the
/// extended vocabulary. `style_vec` is the style one-hot, with the global
/// bit appended when the task defines one. PAD can never be generated.
pub fn output_distribution(
    tape: &mut Tape,
    bp: &BoundParams,
    dims: &ModelDims,
    ctx: &RealizeContext<'_>,
    z: Var,
    style_vec: &[f64],
    y_prev_emb: Var,
) -> Result<StepDistribution> {
    debug_assert_eq!(style_vec.len(), dims.style_vec_width());

    // Attention over the input statement.
    let zw = tape.matmul(z, bp.var("attn_input"))?;
    let input_scores = tape.matmul_nt(zw, ctx.enc.hidden_seq)?;
    let alpha_w = tape.softmax_rows(input_scores)?;
    let c_w = tape.matmul(alpha_w, ctx.enc.hidden_seq)?;

    // Attention over the keyphrase memory.
    let ze = tape.matmul(z, bp.var("attn_bank"))?;
    let bank_scores = tape.matmul_nt(ze, ctx.memory.matrix)?;
    let alpha_e = tape.softmax_rows(bank_scores)?;
    let c_e = tape.matmul(alpha_e, ctx.memory.matrix)?;

    // The copy route renormalizes over content entries only; sentinel mass
    // would have no token to land on.
    let masked_scores = tape.mask_cols(
        bank_scores,
        &[ctx.memory.start_index, ctx.memory.end_index],
    )?;
    let bank_copy = tape.softmax_rows(masked_scores)?;

    // Generation route over the base vocabulary.
    let style = tape.constant_row(style_vec.to_vec());
    let cat = tape.concat(&[z, c_w, c_e, style])?;
    let lin = tape.matmul(cat, bp.var("out_w"))?;
    let logits_raw = tape.add(lin, bp.var("out_b"))?;
    let bounded = tape.tanh(logits_raw);
    let scaled = tape.scale_const(bounded, output_logit_gain(dims.vocab));
    let logits = tape.mask_cols(scaled, &[PAD])?;
    let gen = tape.softmax_rows(logits)?;

    // Gate over {generate, copy-input, copy-bank}.
    let gate_cat = tape.concat(&[z, c_w, c_e, y_prev_emb])?;
    let gate_lin = tape.matmul(gate_cat, bp.var("gate_w"))?;
    let gate_logits = tape.add(gate_lin, bp.var("gate_b"))?;
    let gate = tape.softmax_rows(gate_logits)?;
    let g_gen = tape.slice_cols(gate, 0, 1)?;
    let g_input = tape.slice_cols(gate, 1, 1)?;
    let g_bank = tape.slice_cols(gate, 2, 1)?;

    let gen_ext = tape.pad_cols(gen, ctx.ext_width)?;
    let input_ext = tape.copy_scatter(alpha_w, ctx.input_groups, ctx.ext_width)?;
    let bank_ext = tape.copy_scatter(bank_copy, ctx.bank_groups, ctx.ext_width)?;

    let part_gen = tape.mul_scalar(gen_ext, g_gen)?;
    let part_input = tape.mul_scalar(input_ext, g_input)?;
    let part_bank = tape.mul_scalar(bank_ext, g_bank)?;
    let partial = tape.add(part_gen, part_input)?;
    let dist = tape.add(partial, part_bank)?;

    Ok(StepDistribution { dist, bank_copy })
}

/// Style one-hot with the global bit appended when defined.
pub fn style_vector(dims: &ModelDims, style: usize, global_bit: Option<f64>) -> Vec<f64> {
    let mut v = vec![0.0; dims.style_vec_width()];
    v[style] = 1.0;
    if dims.global_bit {
        v[dims.n_styles] = global_bit.unwrap_or(0.0);
    }
    v
}
