//! AdaGrad with global-norm gradient clipping.

use crate::error::{Error, Result};
use crate::numcore::array::ParamSet;
use std::collections::BTreeMap;

/// Gradients keyed by parameter name. BTreeMap keeps iteration deterministic.
pub type NamedGrads = BTreeMap<String, Vec<f64>>;

/// Per-parameter squared-gradient accumulators plus the step hyperparameters.
#[derive(Debug, Clone)]
pub struct OptimState {
    learning_rate: f64,
    clip_norm: f64,
    /// Parallel to the ParamSet registration order.
    acc: Vec<Vec<f64>>,
}

impl OptimState {
    /// Accumulators start at `acc_init` (0.1 in the reference configuration).
    pub fn new(params: &ParamSet, learning_rate: f64, acc_init: f64, clip_norm: f64) -> OptimState {
        assert!(learning_rate > 0.0 && clip_norm > 0.0 && acc_init >= 0.0);
        let acc = params
            .iter()
            .map(|(_, a)| vec![acc_init; a.numel()])
            .collect();
        OptimState {
            learning_rate,
            clip_norm,
            acc,
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn clip_norm(&self) -> f64 {
        self.clip_norm
    }

    pub fn accumulator(&self, index: usize) -> &[f64] {
        &self.acc[index]
    }
}

/// Scale all gradients so their global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm. Idempotent: a second call is a no-op.
pub fn clip_global_norm(grads: &mut NamedGrads, max_norm: f64) -> f64 {
    assert!(max_norm > 0.0);
    let sq: f64 = grads
        .values()
        .map(|g| g.iter().map(|v| v * v).sum::<f64>())
        .sum();
    let norm = sq.sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.values_mut() {
            for v in g.iter_mut() {
                *v *= scale;
            }
        }
    }
    norm
}

/// One AdaGrad step: `acc += g²; p -= lr · g / sqrt(acc)`, elementwise.
pub fn adagrad_update(
    params: &mut ParamSet,
    grads: &NamedGrads,
    opt: &mut OptimState,
) -> Result<()> {
    if opt.acc.len() != params.len() {
        return Err(Error::Optim(format!(
            "optimizer state has {} entries for {} parameters",
            opt.acc.len(),
            params.len()
        )));
    }
    let lr = opt.learning_rate;
    for idx in 0..params.len() {
        let (name, array) = params.at_mut(idx);
        let g = match grads.get(name) {
            Some(g) => g,
            None => continue, // parameter untouched this step
        };
        if g.len() != array.numel() {
            return Err(Error::Optim(format!(
                "gradient for {name} has {} elements, parameter has {}",
                g.len(),
                array.numel()
            )));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Optim(format!("non-finite gradient for {name}")));
        }
        let acc = &mut opt.acc[idx];
        let vals = array.values_mut();
        for i in 0..g.len() {
            acc[i] += g[i] * g[i];
            vals[i] -= lr * g[i] / acc[i].sqrt();
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::array::Array;

    fn one_param(v: f64) -> ParamSet {
        let mut ps = ParamSet::new();
        ps.add("p", Array::scalar(v));
        ps
    }

    #[test]
    fn zero_gradient_changes_nothing() {
        let mut ps = one_param(0.3);
        let mut opt = OptimState::new(&ps, 0.15, 0.1, 2.0);
        let mut grads = NamedGrads::new();
        grads.insert("p".into(), vec![0.0]);
        adagrad_update(&mut ps, &grads, &mut opt).unwrap();
        assert_eq!(ps.get("p").unwrap().values(), &[0.3]);
        assert_eq!(opt.accumulator(0), &[0.1]);
    }

    /// Scalar reference: p=0, g=1, acc=0.1, lr=0.15 → acc'=1.1,
    /// p' = −0.15/sqrt(1.1).
    #[test]
    fn scalar_reference_step() {
        let mut ps = one_param(0.0);
        let mut opt = OptimState::new(&ps, 0.15, 0.1, 2.0);
        let mut grads = NamedGrads::new();
        grads.insert("p".into(), vec![1.0]);
        adagrad_update(&mut ps, &grads, &mut opt).unwrap();
        assert!((opt.accumulator(0)[0] - 1.1).abs() < 1e-15);
        let expected = -0.15 / 1.1f64.sqrt();
        assert!((ps.get("p").unwrap().values()[0] - expected).abs() < 1e-12);
        assert!((expected - (-0.143019)).abs() < 1e-6);
    }

    #[test]
    fn identical_gradients_shrink_the_second_step() {
        let mut ps = one_param(0.0);
        let mut opt = OptimState::new(&ps, 0.15, 0.1, 2.0);
        let mut grads = NamedGrads::new();
        grads.insert("p".into(), vec![1.0]);
        adagrad_update(&mut ps, &grads, &mut opt).unwrap();
        let step1 = ps.get("p").unwrap().values()[0].abs();
        let before = ps.get("p").unwrap().values()[0];
        adagrad_update(&mut ps, &grads, &mut opt).unwrap();
        let step2 = (ps.get("p").unwrap().values()[0] - before).abs();
        assert!(step2 < step1);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut ps = one_param(0.0);
        let mut opt = OptimState::new(&ps, 0.15, 0.1, 2.0);
        let mut grads = NamedGrads::new();
        grads.insert("p".into(), vec![1.0, 2.0]);
        assert!(adagrad_update(&mut ps, &grads, &mut opt).is_err());
    }

    #[test]
    fn clip_scales_proportionally() {
        let mut grads = NamedGrads::new();
        grads.insert("g".into(), vec![3.0, 4.0]);
        let norm = clip_global_norm(&mut grads, 2.0);
        assert!((norm - 5.0).abs() < 1e-12);
        let g = &grads["g"];
        assert!((g[0] - 1.2).abs() < 1e-12 && (g[1] - 1.6).abs() < 1e-12);
    }

    #[test]
    fn clip_below_threshold_is_identity() {
        let mut grads = NamedGrads::new();
        grads.insert("g".into(), vec![0.6, 0.8]);
        clip_global_norm(&mut grads, 2.0);
        assert_eq!(grads["g"], vec![0.6, 0.8]);
    }
}
