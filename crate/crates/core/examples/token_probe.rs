// Diagnose the generation-loss floor: train briefly, then dump per-token
// probabilities for the failing steps of a few samples.
use plangen_core::config::{RunConfig, Task};
use plangen_core::corpus::synth::{generate_synthetic_corpus, SynthConfig};
use plangen_core::corpus::vocab::Vocabulary;
use plangen_core::model::Model;
use plangen_core::numcore::optim::OptimState;
use plangen_core::numcore::tape::Tape;
use plangen_core::training::{batch_joint_loss, prepare_sample, train_epoch, SamplePrep};
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
    for epoch in 0..200 {
        train_epoch(&mut model, &mut opt, &preps, &vocab, &config, epoch).unwrap();
    }

    // Teacher-forced pass over the first 6 samples, dumping failing steps.
    for (sample, prep) in samples.iter().zip(&preps).take(6) {
        let mut tape = Tape::new();
        let bp = model.bind_frozen(&mut tape);
        // Re-run the internals by calling batch_joint_loss on one sample and
        // reading back nothing; instead re-drive the realizer manually.
        let refs = vec![prep];
        let (_, stats) = batch_joint_loss(&mut tape, &bp, &model.dims, &vocab, &refs, 1.0, 1.0, None).unwrap();
        println!("== sample {} gen-loss-contrib {:.3} acc {}/{}", sample.id, stats.gen, stats.correct, stats.tokens);
        println!("  targets: {:?}", sample.targets.iter().map(|t| t.tokens.join(" ")).collect::<Vec<_>>());
    }
    // Now instrument step by step for sample 0 using the public pieces.
    use plangen_core::encoder::{encode_input, encode_keyphrase_bank};
    use plangen_core::planner::{plan_step, selection_embedding, start_selection, PlannerState};
    use plangen_core::realizer::{output_distribution, realize_step, style_vector, DecoderState, RealizeContext};
    use plangen_core::corpus::vocab::BOS;
    let prep = &preps[0];
    let mut tape = Tape::new();
    let bp = model.bind_frozen(&mut tape);
    let enc = encode_input(&mut tape, &bp, &model.dims, &prep.input_ids).unwrap();
    let memory = encode_keyphrase_bank(&mut tape, &bp, &model.dims, &prep.bank, &vocab).unwrap();
    let mut pstate = PlannerState::fresh(&enc, &model.dims, memory.size);
    let mut prev = start_selection(&memory);
    pstate.record_selection(&prev);
    let mut s_list = Vec::new();
    for j in 0..prep.n_sentences() {
        let scored = plan_step(&mut tape, &bp, &model.dims, &mut pstate, &prev, &memory, None, None).unwrap();
        s_list.push(scored.s_top);
        pstate.record_selection(&prep.gold_selections[j]);
        prev = prep.gold_selections[j].clone();
    }
    let ctx = RealizeContext { enc: &enc, memory: &memory, ext_width: prep.ext.len(),
        input_groups: &prep.input_groups, bank_groups: &prep.bank_groups };
    let mut dstate = DecoderState::fresh(&enc, &model.dims);
    let mut y_prev = BOS;
    for &(gold, j) in &prep.stream {
        let emb_id = prep.ext.embedding_id(y_prev);
        let y_emb = tape.embed_sum(bp.var("embedding"), &[emb_id]).unwrap();
        let (ns, z) = realize_step(&mut tape, &bp, &model.dims, &dstate, y_emb, s_list[j], None).unwrap();
        dstate = ns;
        let style = style_vector(&model.dims, prep.gold_styles[j], None);
        let step = output_distribution(&mut tape, &bp, &model.dims, &ctx, z, &style, y_emb).unwrap();
        let dist = tape.values(step.dist);
        let mut best = 0; for (i,&p) in dist.iter().enumerate() { if p > dist[best] { best = i; } }
        let mark = if best == gold { " " } else { "X" };
        println!("{mark} j={j} gold={:12} p={:.4} | argmax={:12} p={:.4}",
            prep.ext.token_of(&vocab, gold), dist[gold],
            prep.ext.token_of(&vocab, best), dist[best]);
        y_prev = gold;
    }
}
