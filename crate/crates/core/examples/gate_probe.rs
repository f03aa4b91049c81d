// Dump gate values and route contributions at phrase-token steps.
use plangen_core::config::{RunConfig, Task};
use plangen_core::corpus::synth::{generate_synthetic_corpus, SynthConfig};
use plangen_core::corpus::vocab::Vocabulary;
use plangen_core::corpus::vocab::BOS;
use plangen_core::encoder::{encode_input, encode_keyphrase_bank};
use plangen_core::model::Model;
use plangen_core::numcore::optim::OptimState;
use plangen_core::numcore::tape::Tape;
use plangen_core::planner::{plan_step, start_selection, PlannerState};
use plangen_core::realizer::{realize_step, style_vector, DecoderState};
use plangen_core::training::{prepare_sample, train_epoch, SamplePrep};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut config = RunConfig::for_task(Task::Argument);
    config.hidden = 64; config.embed = 64; config.layers = 2;
    config.dropout = 0.0; config.batch_size = 8; config.seed = 2024;
    let samples = generate_synthetic_corpus(2024, 64, &SynthConfig::default());
    let vocab = Vocabulary::build(&samples, config.vocab_max).unwrap();
    let mut model = Model::new(&config, vocab.len(), &mut ChaCha8Rng::seed_from_u64(config.seed));
    let preps: Vec<SamplePrep> = samples.iter().map(|s| prepare_sample(s, &vocab, &config).unwrap()).collect();
    let mut opt = OptimState::new(&model.params, config.lr, config.acc_init, config.clip_norm);
    for epoch in 0..150 { train_epoch(&mut model, &mut opt, &preps, &vocab, &config, epoch).unwrap(); }

    let prep = &preps[0];
    let sample = &samples[0];
    println!("targets: {:?}", sample.targets.iter().map(|t| t.tokens.join(" ")).collect::<Vec<_>>());
    let mut tape = Tape::new();
    let bp = model.bind_frozen(&mut tape);
    let dims = &model.dims;
    let enc = encode_input(&mut tape, &bp, dims, &prep.input_ids).unwrap();
    let memory = encode_keyphrase_bank(&mut tape, &bp, dims, &prep.bank, &vocab).unwrap();
    let mut pstate = PlannerState::fresh(&enc, dims, memory.size);
    let mut prev = start_selection(&memory);
    pstate.record_selection(&prev);
    let mut s_list = Vec::new();
    for j in 0..prep.n_sentences() {
        let scored = plan_step(&mut tape, &bp, dims, &mut pstate, &prev, &memory, None, None).unwrap();
        s_list.push(scored.s_top);
        pstate.record_selection(&prep.gold_selections[j]);
        prev = prep.gold_selections[j].clone();
    }
    // Manually rebuild output_distribution internals to see the routes.
    let mut dstate = DecoderState::fresh(&enc, dims);
    let mut y_prev = BOS;
    for &(gold, j) in &prep.stream {
        let emb_id = prep.ext.embedding_id(y_prev);
        let y_emb = tape.embed_sum(bp.var("embedding"), &[emb_id]).unwrap();
        let (ns, z) = realize_step(&mut tape, &bp, dims, &dstate, y_emb, s_list[j], None).unwrap();
        dstate = ns;
        let style = style_vector(dims, prep.gold_styles[j], None);

        // replicate internals
        let zw = tape.matmul(z, bp.var("attn_input")).unwrap();
        let input_scores = tape.matmul_nt(zw, enc.hidden_seq).unwrap();
        let alpha_w = tape.softmax_rows(input_scores).unwrap();
        let c_w = tape.matmul(alpha_w, enc.hidden_seq).unwrap();
        let ze = tape.matmul(z, bp.var("attn_bank")).unwrap();
        let bank_scores = tape.matmul_nt(ze, memory.matrix).unwrap();
        let alpha_e = tape.softmax_rows(bank_scores).unwrap();
        let c_e = tape.matmul(alpha_e, memory.matrix).unwrap();
        let style_v = tape.constant_row(style.clone());
        let cat = tape.concat(&[z, c_w, c_e, style_v]).unwrap();
        let lin = tape.matmul(cat, bp.var("out_w")).unwrap();
        let logits_raw = tape.add(lin, bp.var("out_b")).unwrap();
        let bounded = tape.tanh(logits_raw);
        let gv = plangen_core::realizer::output_logit_gain(dims.vocab);
        let scaled = tape.scale_const(bounded, gv);
        let logits = tape.mask_cols(scaled, &[0]).unwrap();
        let gen = tape.softmax_rows(logits).unwrap();
        let gate_cat = tape.concat(&[z, c_w, c_e, y_emb]).unwrap();
        let gate_lin = tape.matmul(gate_cat, bp.var("gate_w")).unwrap();
        let gate_logits = tape.add(gate_lin, bp.var("gate_b")).unwrap();
        let gate = tape.softmax_rows(gate_logits).unwrap();
        let g = tape.values(gate).to_vec();
        let genv = tape.values(gen).to_vec();
        let gold_tok = prep.ext.token_of(&vocab, gold);
        if gold < dims.vocab && genv[gold] < 0.9 {
            let mut best = 1; for (i,&p) in genv.iter().enumerate() { if p > genv[best] { best = i; } }
            let tanh_at_gold = tape.values(bounded)[gold];
            println!("j={j} gold={gold_tok:<10} p_gen={:.4} gen_argmax={}({:.4}) gate=({:.3},{:.3},{:.3}) tanh_gold={:.4}",
                genv[gold], prep.ext.token_of(&vocab, best), genv[best], g[0], g[1], g[2], tanh_at_gold);
        }
        y_prev = gold;
    }
}
