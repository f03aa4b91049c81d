//! Full generation: plan execution, per-sentence beam search under the
//! decoding constraints (trigram blocking over the whole output, forced stop
//! when everything is pruned), oracle-plan mode, and UNK repair.

use crate::config::RunConfig;
use crate::corpus::bank::Bank;
use crate::corpus::vocab::{Vocabulary, BOS, EOS, PAD, SNT, UNK};
use crate::encoder::{encode_input, encode_keyphrase_bank, EncoderState, KeyphraseMemory};
use crate::error::{Error, Result};
use crate::model::{BoundParams, Model};
use crate::planner::{infer_plan, teacher_forced_plan, PlanLimits, PlanStep};
use crate::realizer::{
    output_distribution, realize_step, style_vector, DecoderState, RealizeContext,
};
use crate::training::SamplePrep;
use crate::numcore::tape::Tape;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// Decode options, usually taken from the run configuration.
#[derive(Debug, Clone, Copy)]
pub struct GenerateOptions {
    pub beam: usize,
    pub max_sentences: usize,
    pub max_sentence_len: usize,
    pub threshold: f64,
    pub oracle_plan: bool,
    /// Greedy decoding (independent implementation; beam=1 must match it).
    pub greedy: bool,
}

impl GenerateOptions {
    pub fn from_config(config: &RunConfig) -> GenerateOptions {
        GenerateOptions {
            beam: config.beam,
            max_sentences: config.max_sentences,
            max_sentence_len: config.max_sentence_len,
            threshold: config.threshold,
            oracle_plan: config.oracle_plan,
            greedy: false,
        }
    }
}

/// One plan step as emitted in generation files: original keyphrase-list
/// indices plus the style id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub selection: Vec<usize>,
    pub style: usize,
}

/// A generated sample: token sentences plus the executed plan.
#[derive(Debug, Clone)]
pub struct Generation {
    pub id: String,
    /// Sentences after UNK repair.
    pub sentences: Vec<Vec<String>>,
    /// Sentences as decoded, before UNK repair. Trigram blocking is a
    /// decode-time constraint and holds on this stream.
    pub raw_sentences: Vec<Vec<String>>,
    pub plan: Vec<PlanSummary>,
}

impl Generation {
    pub fn all_tokens(&self) -> Vec<String> {
        self.sentences.iter().flatten().cloned().collect()
    }

    pub fn raw_tokens(&self) -> Vec<String> {
        self.raw_sentences.iter().flatten().cloned().collect()
    }
}

type Trigram = (usize, usize, usize);

#[derive(Debug, Clone)]
struct Hypothesis {
    state: DecoderState,
    y_prev: usize,
    tokens: Vec<usize>,
    copy_argmax: Vec<Option<usize>>,
    logprob: f64,
    trigrams: HashSet<Trigram>,
    last_two: (Option<usize>, Option<usize>),
    finished: bool,
}

impl Hypothesis {
    fn would_repeat(&self, next: usize) -> bool {
        if let (Some(a), Some(b)) = self.last_two {
            self.trigrams.contains(&(a, b, next))
        } else {
            false
        }
    }

    /// Append a token. Terminators end the sentence but are not part of the
    /// emitted text, so they stay outside the trigram window: the window
    /// spans sentence boundaries exactly as the final output does.
    fn extended(&self, next: usize, logp: f64, state: DecoderState, copy: Option<usize>) -> Hypothesis {
        let mut h = self.clone();
        let terminator = next == SNT || next == EOS;
        if !terminator {
            if let (Some(a), Some(b)) = h.last_two {
                h.trigrams.insert((a, b, next));
            }
            h.last_two = (h.last_two.1, Some(next));
        }
        h.tokens.push(next);
        h.copy_argmax.push(copy);
        h.logprob += logp;
        h.y_prev = next;
        h.state = state;
        h.finished = terminator;
        h
    }

    /// Length-normalized ranking score: mean log-probability per token.
    fn score(&self) -> f64 {
        self.logprob / self.tokens.len().max(1) as f64
    }
}

struct SentenceResult {
    tokens: Vec<usize>,
    copy_argmax: Vec<Option<usize>>,
    state: DecoderState,
    y_prev: usize,
    trigrams: HashSet<Trigram>,
    last_two: (Option<usize>, Option<usize>),
    logprob: f64,
}

struct DecodeShared<'a> {
    bp: &'a BoundParams,
    model: &'a Model,
    ctx: RealizeContext<'a>,
    style_vec: Vec<f64>,
}

/// One decode step for a hypothesis: distribution values plus the bank-copy
/// argmax over content entries.
fn step_distribution(
    tape: &mut Tape,
    shared: &DecodeShared<'_>,
    hyp: &Hypothesis,
    s_plan: crate::numcore::tape::Var,
) -> Result<(Vec<f64>, DecoderState, Option<usize>)> {
    let emb_id = if hyp.y_prev < shared.ctx.ext_width {
        if hyp.y_prev >= shared.model.dims.vocab {
            UNK
        } else {
            hyp.y_prev
        }
    } else {
        UNK
    };
    let dims = &shared.model.dims;
    let y_emb = tape.embed_sum(shared.bp.var("embedding"), &[emb_id])?;
    let (next_state, z) = realize_step(tape, shared.bp, dims, &hyp.state, y_emb, s_plan, None)?;
    let step = output_distribution(tape, shared.bp, dims, &shared.ctx, z, &shared.style_vec, y_emb)?;
    let dist = tape.values(step.dist).to_vec();
    let copy_values = tape.values(step.bank_copy);
    let mut best_copy: Option<usize> = None;
    for k in 1..copy_values.len().saturating_sub(1) {
        if best_copy.map_or(true, |b| copy_values[k] > copy_values[b]) {
            best_copy = Some(k);
        }
    }
    Ok((dist, next_state, best_copy))
}

/// Beam-search one sentence. Any extension that would repeat a trigram seen
/// anywhere in the output so far is pruned; if every extension of a
/// hypothesis is pruned it finishes with a forced end-of-sequence. Completed
/// hypotheses are ranked by mean log-probability.
#[allow(clippy::too_many_arguments)]
fn beam_search_sentence(
    tape: &mut Tape,
    shared: &DecodeShared<'_>,
    plan_step: &PlanStep,
    init: SentenceResult,
    beam_size: usize,
    max_len: usize,
) -> Result<SentenceResult> {
    assert!(beam_size >= 1 && max_len >= 1);
    let start = Hypothesis {
        state: init.state,
        y_prev: init.y_prev,
        tokens: Vec::new(),
        copy_argmax: Vec::new(),
        logprob: 0.0,
        trigrams: init.trigrams,
        last_two: init.last_two,
        finished: false,
    };
    let carried_logprob = init.logprob;
    let mut live = vec![start];
    let mut completed: Vec<Hypothesis> = Vec::new();

    for _ in 0..max_len {
        if live.is_empty() {
            break;
        }
        // (total logprob, ext id, live index, state, copy record, step logp)
        let mut candidates: Vec<(f64, usize, usize, DecoderState, Option<usize>, f64)> =
            Vec::new();
        for (hi, hyp) in live.iter().enumerate() {
            let (dist, next_state, copy) = step_distribution(tape, shared, hyp, plan_step.s_top)?;
            let mut any = false;
            for (ext_id, &p) in dist.iter().enumerate() {
                if ext_id == PAD || ext_id == BOS || p <= 0.0 {
                    continue;
                }
                if hyp.would_repeat(ext_id) {
                    continue; // trigram blocking
                }
                let logp = p.ln();
                candidates.push((
                    hyp.logprob + logp,
                    ext_id,
                    hi,
                    next_state.clone(),
                    copy,
                    logp,
                ));
                any = true;
            }
            if !any {
                // Everything pruned: force the end-of-sequence marker.
                candidates.push((hyp.logprob, EOS, hi, next_state, copy, 0.0));
            }
        }
        candidates.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        let mut next_live = Vec::with_capacity(beam_size);
        for (_, ext_id, hi, state, copy, logp) in candidates.into_iter().take(beam_size) {
            let hyp = live[hi].extended(ext_id, logp, state, copy);
            if hyp.finished {
                completed.push(hyp);
            } else {
                next_live.push(hyp);
            }
        }
        live = next_live;
        if completed.len() >= beam_size {
            break;
        }
    }
    // Sentence-length cap reached: force-complete whatever is still live.
    for hyp in live {
        let state = hyp.state.clone();
        completed.push(hyp.extended(EOS, 0.0, state, None));
    }
    let best = completed
        .into_iter()
        .enumerate()
        .max_by(|(ai, a), (bi, b)| {
            a.score()
                .partial_cmp(&b.score())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(bi.cmp(ai))
        })
        .map(|(_, h)| h)
        .expect("at least one completed hypothesis");

    Ok(SentenceResult {
        tokens: best.tokens,
        copy_argmax: best.copy_argmax,
        state: best.state,
        y_prev: best.y_prev,
        trigrams: best.trigrams,
        last_two: best.last_two,
        logprob: carried_logprob + best.logprob,
    })
}

/// Greedy decoding of one sentence: the independent reference path that
/// beam=1 must match token for token.
fn greedy_sentence(
    tape: &mut Tape,
    shared: &DecodeShared<'_>,
    plan_step: &PlanStep,
    init: SentenceResult,
    max_len: usize,
) -> Result<SentenceResult> {
    let mut hyp = Hypothesis {
        state: init.state,
        y_prev: init.y_prev,
        tokens: Vec::new(),
        copy_argmax: Vec::new(),
        logprob: 0.0,
        trigrams: init.trigrams,
        last_two: init.last_two,
        finished: false,
    };
    let carried_logprob = init.logprob;
    for _ in 0..max_len {
        let (dist, next_state, copy) = step_distribution(tape, shared, &hyp, plan_step.s_top)?;
        let mut best: Option<(usize, f64)> = None;
        for (ext_id, &p) in dist.iter().enumerate() {
            if ext_id == PAD || ext_id == BOS || p <= 0.0 || hyp.would_repeat(ext_id) {
                continue;
            }
            if best.map_or(true, |(_, bp)| p > bp) {
                best = Some((ext_id, p));
            }
        }
        match best {
            Some((ext_id, p)) => {
                hyp = hyp.extended(ext_id, p.ln(), next_state, copy);
            }
            None => {
                hyp = hyp.extended(EOS, 0.0, next_state, copy);
            }
        }
        if hyp.finished {
            break;
        }
    }
    if !hyp.finished {
        let state = hyp.state.clone();
        hyp = hyp.extended(EOS, 0.0, state, None);
    }
    Ok(SentenceResult {
        tokens: hyp.tokens,
        copy_argmax: hyp.copy_argmax,
        state: hyp.state,
        y_prev: hyp.y_prev,
        trigrams: hyp.trigrams,
        last_two: hyp.last_two,
        logprob: carried_logprob + hyp.logprob,
    })
}

/// Replace each `<unk>` with all tokens of the bank phrase that had the
/// highest copy attention at that step; sentinels are never candidates. When
/// the bank has no content phrases the token stays.
pub fn replace_unknown_tokens(
    tokens: &[String],
    records: &[Option<usize>],
    bank: &Bank,
) -> Vec<String> {
    debug_assert_eq!(tokens.len(), records.len());
    let mut out = Vec::with_capacity(tokens.len());
    for (token, record) in tokens.iter().zip(records) {
        if token == "<unk>" {
            if let Some(k) = record {
                if let Some(phrase) = bank.phrase(*k) {
                    out.extend(phrase.tokens().iter().cloned());
                    continue;
                }
            }
        }
        out.push(token.clone());
    }
    out
}

fn bank_to_original(prep: &SamplePrep) -> Vec<Option<usize>> {
    let mut map = vec![None; prep.bank.len()];
    for (orig, bank_idx) in prep.orig_to_bank.iter().enumerate() {
        if let Some(b) = bank_idx {
            if map[*b].is_none() {
                map[*b] = Some(orig);
            }
        }
    }
    map
}

fn plan_summary(prep: &SamplePrep, plan: &[PlanStep]) -> Vec<PlanSummary> {
    let back = bank_to_original(prep);
    plan.iter()
        .map(|step| PlanSummary {
            selection: step
                .selection
                .iter()
                .filter_map(|&k| back[k])
                .collect(),
            style: step.style,
        })
        .collect()
}

/// Run the full pipeline for one prepared sample. With `oracle_plan` the
/// gold selections drive the planner (styles stay predicted); otherwise the
/// plan is inferred. Each plan step decodes one sentence; the sentence
/// boundary token advances the plan.
pub fn generate(
    model: &Model,
    vocab: &Vocabulary,
    prep: &SamplePrep,
    options: &GenerateOptions,
) -> Result<Generation> {
    if options.beam < 1 {
        return Err(Error::Model("beam size must be at least 1".into()));
    }
    let mut tape = Tape::new();
    let bp = model.bind_frozen(&mut tape);
    let dims = &model.dims;
    let enc: EncoderState = encode_input(&mut tape, &bp, dims, &prep.input_ids)?;
    let memory: KeyphraseMemory =
        encode_keyphrase_bank(&mut tape, &bp, dims, &prep.bank, vocab)?;

    let plan: Vec<PlanStep> = if options.oracle_plan {
        if prep.gold_selections.is_empty() {
            return Err(Error::Model(format!(
                "sample {}: oracle plan requested but no gold plan present",
                prep.id
            )));
        }
        teacher_forced_plan(
            &mut tape,
            &bp,
            dims,
            &enc,
            &memory,
            &prep.gold_selections,
            prep.global_bit,
        )?
    } else {
        infer_plan(
            &mut tape,
            &bp,
            dims,
            &enc,
            &memory,
            prep.global_bit,
            PlanLimits {
                max_sentences: options.max_sentences,
                threshold: options.threshold,
            },
        )?
    };

    let mut carry = SentenceResult {
        tokens: Vec::new(),
        copy_argmax: Vec::new(),
        state: DecoderState::fresh(&enc, dims),
        y_prev: BOS,
        trigrams: HashSet::new(),
        last_two: (None, None),
        logprob: 0.0,
    };
    let mut sentences = Vec::with_capacity(plan.len());
    let mut raw_sentences = Vec::with_capacity(plan.len());
    for step in &plan {
        let shared = DecodeShared {
            bp: &bp,
            model,
            ctx: RealizeContext {
                enc: &enc,
                memory: &memory,
                ext_width: prep.ext.len(),
                input_groups: &prep.input_groups,
                bank_groups: &prep.bank_groups,
            },
            style_vec: style_vector(dims, step.style, prep.global_bit),
        };
        let init = SentenceResult {
            tokens: Vec::new(),
            copy_argmax: Vec::new(),
            state: carry.state.clone(),
            y_prev: carry.y_prev,
            trigrams: carry.trigrams.clone(),
            last_two: carry.last_two,
            logprob: carry.logprob,
        };
        let result = if options.greedy {
            greedy_sentence(&mut tape, &shared, step, init, options.max_sentence_len)?
        } else {
            beam_search_sentence(
                &mut tape,
                &shared,
                step,
                init,
                options.beam,
                options.max_sentence_len,
            )?
        };

        let mut words = Vec::new();
        let mut records = Vec::new();
        for (i, &ext_id) in result.tokens.iter().enumerate() {
            if ext_id == SNT || ext_id == EOS {
                continue;
            }
            words.push(prep.ext.token_of(vocab, ext_id).to_string());
            records.push(result.copy_argmax[i]);
        }
        let repaired = replace_unknown_tokens(&words, &records, &prep.bank);
        raw_sentences.push(words);
        sentences.push(repaired);
        carry = result;
    }

    Ok(Generation {
        id: prep.id.clone(),
        sentences,
        raw_sentences,
        plan: plan_summary(prep, &plan),
    })
}

/// No repeated trigram anywhere in the token stream.
pub fn has_repeated_trigram(tokens: &[String]) -> bool {
    let mut seen: HashSet<(&str, &str, &str)> = HashSet::new();
    for w in tokens.windows(3) {
        let tri = (w[0].as_str(), w[1].as_str(), w[2].as_str());
        if !seen.insert(tri) {
            return true;
        }
    }
    false
}
