//! Full-model gradient checks: analytic gradients of the joint loss against
//! central differences, parameter by parameter, on toy batches.

use plangen_core::config::{RunConfig, Task};
use plangen_core::corpus::synth::{generate_synthetic_corpus, SynthConfig};
use plangen_core::corpus::vocab::Vocabulary;
use plangen_core::model::{bind_params, Model, ModelDims};
use plangen_core::numcore::array::ParamSet;
use plangen_core::numcore::gradcheck::check_gradients;
use plangen_core::numcore::optim::NamedGrads;
use plangen_core::numcore::tape::Tape;
use plangen_core::training::{batch_joint_loss, prepare_sample, SamplePrep};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn toy_config(task: Task) -> RunConfig {
    let mut config = RunConfig::for_task(task);
    config.hidden = 8;
    config.embed = 8;
    config.layers = 2;
    config.dropout = 0.0; // gradient checks require a deterministic forward
    config
}

struct Toy {
    dims: ModelDims,
    params: ParamSet,
    vocab: Vocabulary,
    preps: Vec<SamplePrep>,
    config: RunConfig,
}

fn toy(task: Task, seed: u64, n_samples: usize) -> Toy {
    let config = toy_config(task);
    let synth = SynthConfig {
        task,
        sentences_min: 1,
        sentences_max: 2,
        bank_min: 2,
        bank_max: 3,
    };
    let samples = generate_synthetic_corpus(seed, n_samples, &synth);
    let vocab = Vocabulary::build(&samples, config.vocab_max).unwrap();
    let model = Model::new(&config, vocab.len(), &mut ChaCha8Rng::seed_from_u64(seed));
    let preps = samples
        .iter()
        .map(|s| prepare_sample(s, &vocab, &config).unwrap())
        .collect();
    Toy {
        dims: model.dims,
        params: model.params,
        vocab,
        preps,
        config,
    }
}

fn loss_of(toy: &Toy, ps: &ParamSet) -> plangen_core::Result<f64> {
    let mut tape = Tape::new();
    let bp = bind_params(ps, &mut tape);
    let refs: Vec<&SamplePrep> = toy.preps.iter().collect();
    let (joint, _) = batch_joint_loss(
        &mut tape,
        &bp,
        &toy.dims,
        &toy.vocab,
        &refs,
        toy.config.gamma,
        toy.config.eta,
        None,
    )?;
    Ok(tape.value_scalar(joint))
}

fn grads_of(toy: &Toy, ps: &ParamSet) -> plangen_core::Result<NamedGrads> {
    let mut tape = Tape::new();
    let bp = bind_params(ps, &mut tape);
    let refs: Vec<&SamplePrep> = toy.preps.iter().collect();
    let (joint, _) = batch_joint_loss(
        &mut tape,
        &bp,
        &toy.dims,
        &toy.vocab,
        &refs,
        toy.config.gamma,
        toy.config.eta,
        None,
    )?;
    tape.backward(joint)?;
    Ok(bp.extract_grads(&tape))
}

/// Every parameter of the full argument-task model passes a central
/// difference check on a 2-sample batch.
#[test]
fn full_joint_loss_gradients_argument_task() {
    let mut toy = toy(Task::Argument, 101, 2);
    let t2 = Toy {
        dims: toy.dims,
        params: toy.params.clone(),
        vocab: toy.vocab.clone(),
        preps: toy.preps.clone(),
        config: toy.config.clone(),
    };
    let report = check_gradients(
        &mut toy.params,
        1e-5,
        |ps| loss_of(&t2, ps),
        |ps| grads_of(&t2, ps),
    )
    .unwrap();
    assert!(
        report.passes(1e-4),
        "gradient check failed:\n{report}"
    );
}

/// The Wikipedia path (title-sum encoder, global style bit, 4 styles) passes
/// the same check.
#[test]
fn full_joint_loss_gradients_wikipedia_task() {
    let mut toy = toy(Task::Wikipedia, 103, 2);
    let t2 = Toy {
        dims: toy.dims,
        params: toy.params.clone(),
        vocab: toy.vocab.clone(),
        preps: toy.preps.clone(),
        config: toy.config.clone(),
    };
    let report = check_gradients(
        &mut toy.params,
        1e-5,
        |ps| loss_of(&t2, ps),
        |ps| grads_of(&t2, ps),
    )
    .unwrap();
    assert!(report.passes(1e-4), "gradient check failed:\n{report}");
}
