// Probe for the overfit experiment: trains on the 64-sample synthetic corpus
// and reports token accuracy, reproduction rate, plan quality, and timing.
use plangen_core::config::{RunConfig, Task};
use plangen_core::corpus::synth::{generate_synthetic_corpus, SynthConfig};
use plangen_core::corpus::vocab::Vocabulary;
use plangen_core::inference::{generate, GenerateOptions};
use plangen_core::metrics::selection_f1;
use plangen_core::model::Model;
use plangen_core::numcore::optim::OptimState;
use plangen_core::training::{evaluate_loss, prepare_sample, train_epoch, SamplePrep};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    let mut config = RunConfig::for_task(Task::Argument);
    config.hidden = 64;
    config.embed = 64;
    config.layers = 2;
    config.dropout = 0.0;
    config.batch_size = 8;
    config.seed = 2024;

    let samples = generate_synthetic_corpus(2024, 64, &SynthConfig::default());
    let vocab = Vocabulary::build(&samples, config.vocab_max).unwrap();
    println!("vocab = {}", vocab.len());
    let mut model = Model::new(&config, vocab.len(), &mut ChaCha8Rng::seed_from_u64(config.seed));
    println!("params = {}", model.params.total_params());
    let preps: Vec<SamplePrep> = samples.iter().map(|s| prepare_sample(s, &vocab, &config).unwrap()).collect();
    let mut opt = OptimState::new(&model.params, config.lr, config.acc_init, config.clip_norm);

    let mut reached = None;
    for epoch in 0..500 {
        let stats = train_epoch(&mut model, &mut opt, &preps, &vocab, &config, epoch).unwrap();
        if epoch % 10 == 0 || stats.token_accuracy >= 0.995 {
            println!(
                "epoch {epoch:3} joint {:.4} gen {:.4} sel {:.4} style {:.4} acc {:.4} [{:?}]",
                stats.joint, stats.gen, stats.sel, stats.style, stats.token_accuracy, t0.elapsed()
            );
        }
        if stats.token_accuracy >= 0.995 && stats.sel < 0.05 && stats.style < 0.02 {
            reached = Some(epoch);
            break;
        }
    }
    let eval = evaluate_loss(&model, &preps, &vocab, &config).unwrap();
    println!("eval acc (dropout off) = {:.4}; reached at {:?}; train time {:?}", eval.token_accuracy, reached, t0.elapsed());

    // Oracle-plan greedy reproduction.
    let t1 = Instant::now();
    let oracle = GenerateOptions {
        beam: 1, max_sentences: 10, max_sentence_len: 40, threshold: 0.5,
        oracle_plan: true, greedy: true,
    };
    let mut total = 0usize;
    let mut exact = 0usize;
    for (sample, prep) in samples.iter().zip(&preps) {
        let out = generate(&model, &vocab, prep, &oracle).unwrap();
        for (j, target) in sample.targets.iter().enumerate() {
            total += 1;
            if out.sentences.get(j).map(|s| s.as_slice()) == Some(target.tokens.as_slice()) {
                exact += 1;
            }
        }
    }
    println!("oracle greedy reproduction: {exact}/{total} = {:.3} [{:?}]", exact as f64 / total as f64, t1.elapsed());

    // Inferred plans: selection F1 + style accuracy.
    let infer = GenerateOptions { oracle_plan: false, ..oracle };
    let mut pairs: Vec<(BTreeSet<usize>, BTreeSet<usize>)> = Vec::new();
    let mut style_total = 0usize;
    let mut style_right = 0usize;
    let mut sent_count_pred = 0usize;
    let mut sent_count_gold = 0usize;
    for (sample, prep) in samples.iter().zip(&preps) {
        let out = generate(&model, &vocab, prep, &infer).unwrap();
        let pred: BTreeSet<usize> = out.plan.iter().flat_map(|p| p.selection.iter().copied()).collect();
        let gold: BTreeSet<usize> = sample.targets.iter().flat_map(|t| t.selection.iter().copied()).collect();
        pairs.push((pred, gold));
        sent_count_pred += out.plan.len();
        sent_count_gold += sample.targets.len();
        for (j, target) in sample.targets.iter().enumerate() {
            if let Some(step) = out.plan.get(j) {
                style_total += 1;
                if step.style == target.style { style_right += 1; }
            } else {
                style_total += 1;
            }
        }
    }
    println!(
        "plan: selection F1 {:.4}, style acc {:.4}, sentences {}/{} [total {:?}]",
        selection_f1(&pairs), style_right as f64 / style_total as f64,
        sent_count_pred, sent_count_gold, t0.elapsed()
    );
}
