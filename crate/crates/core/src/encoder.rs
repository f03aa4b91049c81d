//! Input statement encoding and keyphrase bank encoding.
//!
//! The statement runs through a bidirectional reader (half the hidden width
//! per direction, concatenated); its endpoint states are affine-bridged to
//! the decoder width and seed both decoders. Each keyphrase is reduced to the
//! sum of its word embeddings, then a second bidirectional reader produces
//! the memory matrix row per bank entry.

use crate::corpus::bank::{Bank, BankEntry};
use crate::corpus::vocab::Vocabulary;
use crate::error::{Error, Result};
use crate::model::{BoundParams, ModelDims};
use crate::numcore::lstm::lstm_step;
use crate::numcore::tape::{Tape, Var};

/// Encoded input statement.
#[derive(Debug, Clone)]
pub struct EncoderState {
    /// L×H matrix of per-token states (attention keys).
    pub hidden_seq: Var,
    /// Decoder-width initial hidden state.
    pub h0: Var,
    /// Decoder-width initial cell state.
    pub c0: Var,
    pub len: usize,
}

/// Encoded keyphrase bank: the |M|×H matrix of entry encodings.
#[derive(Debug, Clone)]
pub struct KeyphraseMemory {
    pub matrix: Var,
    pub size: usize,
    pub start_index: usize,
    pub end_index: usize,
}

fn run_direction(
    tape: &mut Tape,
    inputs: &[Var],
    weights: crate::numcore::lstm::LstmWeights,
    reverse: bool,
) -> Result<Vec<Var>> {
    let d = weights.hidden;
    let mut h = tape.constant_row(vec![0.0; d]);
    let mut c = tape.constant_row(vec![0.0; d]);
    let mut states = vec![h; inputs.len()];
    let order: Vec<usize> = if reverse {
        (0..inputs.len()).rev().collect()
    } else {
        (0..inputs.len()).collect()
    };
    for i in order {
        let (nh, nc) = lstm_step(tape, inputs[i], h, c, &weights)?;
        h = nh;
        c = nc;
        states[i] = nh;
    }
    Ok(states)
}

/// Like [`run_direction`] but also returns the final cell state.
fn run_direction_with_cell(
    tape: &mut Tape,
    inputs: &[Var],
    weights: crate::numcore::lstm::LstmWeights,
    reverse: bool,
) -> Result<(Vec<Var>, Var)> {
    let d = weights.hidden;
    let mut h = tape.constant_row(vec![0.0; d]);
    let mut c = tape.constant_row(vec![0.0; d]);
    let mut states = vec![h; inputs.len()];
    let order: Vec<usize> = if reverse {
        (0..inputs.len()).rev().collect()
    } else {
        (0..inputs.len()).collect()
    };
    for i in order {
        let (nh, nc) = lstm_step(tape, inputs[i], h, c, &weights)?;
        h = nh;
        c = nc;
        states[i] = nh;
    }
    Ok((states, c))
}

/// Encode the (already truncated) input token ids.
pub fn encode_input(
    tape: &mut Tape,
    bp: &BoundParams,
    dims: &ModelDims,
    input_ids: &[usize],
) -> Result<EncoderState> {
    if input_ids.is_empty() {
        return Err(Error::Model("encoder input is empty".into()));
    }
    let embedding = bp.var("embedding");
    let embeds: Vec<Var> = input_ids
        .iter()
        .map(|&id| tape.embed_sum(embedding, &[id]))
        .collect::<Result<_>>()?;

    if dims.title_sum {
        // Short titles: per-token affine rows for attention, summed
        // embedding for the initial state. No recurrent reader.
        let w = bp.var("title_w");
        let b = bp.var("title_b");
        let mut rows = Vec::with_capacity(embeds.len());
        for &e in &embeds {
            let lin = tape.matmul(e, w)?;
            rows.push(tape.add(lin, b)?);
        }
        let hidden_seq = tape.stack_rows(&rows)?;
        let sum = tape.embed_sum(embedding, input_ids)?;
        let lin = tape.matmul(sum, w)?;
        let h0 = tape.add(lin, b)?;
        let c0 = tape.constant_row(vec![0.0; dims.hidden]);
        return Ok(EncoderState {
            hidden_seq,
            h0,
            c0,
            len: input_ids.len(),
        });
    }

    let half = dims.half_hidden();
    let fwd = bp.lstm("enc_fwd", half);
    let bwd = bp.lstm("enc_bwd", half);
    let (f_states, f_cell) = run_direction_with_cell(tape, &embeds, fwd, false)?;
    let (b_states, b_cell) = run_direction_with_cell(tape, &embeds, bwd, true)?;

    let mut rows = Vec::with_capacity(embeds.len());
    for i in 0..embeds.len() {
        rows.push(tape.concat(&[f_states[i], b_states[i]])?);
    }
    let hidden_seq = tape.stack_rows(&rows)?;

    // Endpoints: last forward state and first-position backward state.
    let h_cat = tape.concat(&[f_states[embeds.len() - 1], b_states[0]])?;
    let c_cat = tape.concat(&[f_cell, b_cell])?;
    let bh_w = bp.var("bridge_h_w");
    let bh_b = bp.var("bridge_h_b");
    let bc_w = bp.var("bridge_c_w");
    let bc_b = bp.var("bridge_c_b");
    let h_lin = tape.matmul(h_cat, bh_w)?;
    let h0 = tape.add(h_lin, bh_b)?;
    let c_lin = tape.matmul(c_cat, bc_w)?;
    let c0 = tape.add(c_lin, bc_b)?;

    Ok(EncoderState {
        hidden_seq,
        h0,
        c0,
        len: input_ids.len(),
    })
}

/// Phrase vector: the sum of word embeddings, order-independent; sentinels
/// use their own learned embeddings.
fn entry_vector(
    tape: &mut Tape,
    bp: &BoundParams,
    vocab: &Vocabulary,
    entry: &BankEntry,
) -> Result<Var> {
    match entry {
        BankEntry::Start => Ok(bp.var("kp_start")),
        BankEntry::End => Ok(bp.var("kp_end")),
        BankEntry::Phrase(p) => {
            let ids: Vec<usize> = p.tokens().iter().map(|t| vocab.id(t)).collect();
            tape.embed_sum(bp.var("embedding"), &ids)
        }
    }
}

/// Run the keyphrase reader over the bank (sentinels included) and stack the
/// per-entry states into the memory matrix.
pub fn encode_keyphrase_bank(
    tape: &mut Tape,
    bp: &BoundParams,
    dims: &ModelDims,
    bank: &Bank,
    vocab: &Vocabulary,
) -> Result<KeyphraseMemory> {
    let vectors: Vec<Var> = bank
        .entries()
        .iter()
        .map(|e| entry_vector(tape, bp, vocab, e))
        .collect::<Result<_>>()?;

    let half = dims.half_hidden();
    let fwd = bp.lstm("kp_fwd", half);
    let bwd = bp.lstm("kp_bwd", half);
    let f_states = run_direction(tape, &vectors, fwd, false)?;
    let b_states = run_direction(tape, &vectors, bwd, true)?;
    let mut rows = Vec::with_capacity(vectors.len());
    for i in 0..vectors.len() {
        rows.push(tape.concat(&[f_states[i], b_states[i]])?);
    }
    let matrix = tape.stack_rows(&rows)?;
    Ok(KeyphraseMemory {
        matrix,
        size: bank.len(),
        start_index: bank.start_index(),
        end_index: bank.end_index(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{RunConfig, Task};
    use crate::corpus::bank::{build_keyphrase_bank, Keyphrase};
    use crate::model::Model;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_vocab() -> Vocabulary {
        let mut tokens: Vec<String> = crate::corpus::vocab::RESERVED
            .iter()
            .map(|s| s.to_string())
            .collect();
        for w in ["alpha", "beta", "gamma", "delta", "foreign", "aid"] {
            tokens.push(w.into());
        }
        Vocabulary::from_tokens(tokens)
    }

    fn toy_model(task: Task) -> Model {
        let mut config = RunConfig::for_task(task);
        config.hidden = 8;
        config.embed = 6;
        config.layers = 1;
        Model::new(&config, toy_vocab().len(), &mut ChaCha8Rng::seed_from_u64(2))
    }

    #[test]
    fn single_token_input_has_one_row() {
        let model = toy_model(Task::Argument);
        let mut tape = Tape::new();
        let bp = model.bind_frozen(&mut tape);
        let enc = encode_input(&mut tape, &bp, &model.dims, &[5]).unwrap();
        assert_eq!(tape.shape(enc.hidden_seq), (1, 8));
        assert_eq!(tape.shape(enc.h0), (1, 8));
        assert_eq!(enc.len, 1);
    }

    #[test]
    fn empty_input_rejected() {
        let model = toy_model(Task::Argument);
        let mut tape = Tape::new();
        let bp = model.bind_frozen(&mut tape);
        assert!(encode_input(&mut tape, &bp, &model.dims, &[]).is_err());
    }

    /// With mirrored weights (backward cell given the forward cell's
    /// weights), the forward states of x equal the backward states of
    /// reverse(x), read in reverse.
    #[test]
    fn direction_symmetry_under_mirrored_weights() {
        let mut model = toy_model(Task::Argument);
        let fwd_w = model.params.get("enc_fwd_w").unwrap().clone();
        let fwd_b = model.params.get("enc_fwd_b").unwrap().clone();
        *model.params.get_mut("enc_bwd_w").unwrap() = fwd_w;
        *model.params.get_mut("enc_bwd_b").unwrap() = fwd_b;

        let ids = [5usize, 6, 7];
        let reversed: Vec<usize> = ids.iter().rev().copied().collect();

        let mut tape = Tape::new();
        let bp = model.bind_frozen(&mut tape);
        let enc_a = encode_input(&mut tape, &bp, &model.dims, &ids).unwrap();
        let enc_b = encode_input(&mut tape, &bp, &model.dims, &reversed).unwrap();
        let a = tape.values(enc_a.hidden_seq).to_vec();
        let b = tape.values(enc_b.hidden_seq).to_vec();
        let h = 8;
        let half = 4;
        for i in 0..3 {
            // forward half of position i in x == backward half of position
            // (L-1-i) in reverse(x)
            let fwd_i = &a[i * h..i * h + half];
            let bwd_rev = &b[(2 - i) * h + half..(2 - i) * h + h];
            for (x, y) in fwd_i.iter().zip(bwd_rev) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn phrase_vector_is_order_independent() {
        let model = toy_model(Task::Argument);
        let vocab = toy_vocab();
        let p1 = Keyphrase::new(&["foreign".into(), "aid".into()]).unwrap();
        let p2 = Keyphrase::new(&["aid".into(), "foreign".into()]).unwrap();
        let mut tape = Tape::new();
        let bp = model.bind_frozen(&mut tape);
        let v1 = entry_vector(&mut tape, &bp, &vocab, &BankEntry::Phrase(p1)).unwrap();
        let v2 = entry_vector(&mut tape, &bp, &vocab, &BankEntry::Phrase(p2)).unwrap();
        assert_eq!(tape.values(v1), tape.values(v2));
    }

    /// The reader is order-sensitive: permuting interior bank entries changes
    /// the affected rows.
    #[test]
    fn bank_order_changes_entry_encodings() {
        let model = toy_model(Task::Argument);
        let vocab = toy_vocab();
        let a = Keyphrase::new(&["alpha".into()]).unwrap();
        let b = Keyphrase::new(&["beta".into()]).unwrap();
        let bank_ab = build_keyphrase_bank(&[a.clone(), b.clone()], 70);
        let bank_ba = build_keyphrase_bank(&[b, a], 70);
        let mut tape = Tape::new();
        let bp = model.bind_frozen(&mut tape);
        let mem_ab = encode_keyphrase_bank(&mut tape, &bp, &model.dims, &bank_ab, &vocab).unwrap();
        let mem_ba = encode_keyphrase_bank(&mut tape, &bp, &model.dims, &bank_ba, &vocab).unwrap();
        let rows_ab = tape.values(mem_ab.matrix).to_vec();
        let rows_ba = tape.values(mem_ba.matrix).to_vec();
        let h = 8;
        // Entry "alpha" sits at row 1 in ab and row 2 in ba; encodings differ
        // because the reader saw different neighbors.
        let alpha_ab = &rows_ab[h..2 * h];
        let alpha_ba = &rows_ba[2 * h..3 * h];
        assert!(alpha_ab
            .iter()
            .zip(alpha_ba)
            .any(|(x, y)| (x - y).abs() > 1e-9));
    }

    #[test]
    fn memory_row_count_tracks_bank_size() {
        let model = toy_model(Task::Argument);
        let vocab = toy_vocab();
        let phrases: Vec<Keyphrase> = ["alpha", "beta", "gamma"]
            .iter()
            .map(|w| Keyphrase::new(&[w.to_string()]).unwrap())
            .collect();
        let bank = build_keyphrase_bank(&phrases, 70);
        let mut tape = Tape::new();
        let bp = model.bind_frozen(&mut tape);
        let mem = encode_keyphrase_bank(&mut tape, &bp, &model.dims, &bank, &vocab).unwrap();
        assert_eq!(tape.shape(mem.matrix), (5, 8));
        assert_eq!(mem.end_index, 4);
    }

    #[test]
    fn title_sum_encoder_runs_without_recurrent_reader() {
        let model = toy_model(Task::Wikipedia);
        let mut tape = Tape::new();
        let bp = model.bind_frozen(&mut tape);
        let enc = encode_input(&mut tape, &bp, &model.dims, &[5, 6]).unwrap();
        assert_eq!(tape.shape(enc.hidden_seq), (2, 8));
        assert_eq!(tape.values(enc.c0), &[0.0; 8]);
    }
}
