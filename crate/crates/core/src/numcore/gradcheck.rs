//! Central-difference gradient checking for any loss over a [`ParamSet`].

use crate::error::{Error, Result};
use crate::numcore::array::ParamSet;
use crate::numcore::optim::NamedGrads;
use std::fmt;

/// Worst relative error observed for one parameter.
#[derive(Debug, Clone)]
pub struct GradCheckEntry {
    pub name: String,
    pub max_rel_err: f64,
    pub elements: usize,
}

/// Per-parameter report; formats as an aligned text table.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.max_rel_err)
            .fold(0.0, f64::max)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_err() < tolerance
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name_w = self
            .entries
            .iter()
            .map(|e| e.name.len())
            .max()
            .unwrap_or(4)
            .max(9);
        writeln!(f, "{:<name_w$}  {:>10}  {:>12}", "parameter", "elements", "max rel err")?;
        for e in &self.entries {
            writeln!(
                f,
                "{:<name_w$}  {:>10}  {:>12.3e}",
                e.name, e.elements, e.max_rel_err
            )?;
        }
        Ok(())
    }
}

/// Combined relative/absolute error. The denominator floor makes elements
/// whose gradient is below central-difference resolution (cancellation noise
/// scales with the loss magnitude over eps) absolute-checked instead of
/// producing spurious relative blowups.
const REL_FLOOR: f64 = 1e-3;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

/// Compare analytic gradients against central differences, one parameter
/// element at a time.
///
/// `loss` must be a pure function of the parameters (dropout disabled); it is
/// evaluated twice at the base point and rejected if the two values differ.
/// `grads` evaluates analytic gradients via the tape.
pub fn check_gradients<L, G>(
    params: &mut ParamSet,
    eps: f64,
    mut loss: L,
    mut grads: G,
) -> Result<GradCheckReport>
where
    L: FnMut(&ParamSet) -> Result<f64>,
    G: FnMut(&ParamSet) -> Result<NamedGrads>,
{
    if eps <= 0.0 {
        return Err(Error::GradCheck("eps must be positive".into()));
    }
    let base1 = loss(params)?;
    let base2 = loss(params)?;
    if base1.to_bits() != base2.to_bits() {
        return Err(Error::GradCheck(format!(
            "forward is not deterministic: {base1} vs {base2}"
        )));
    }

    let analytic = grads(params)?;
    let mut entries = Vec::with_capacity(params.len());
    for idx in 0..params.len() {
        let name = params.names()[idx].clone();
        let n = params.get(&name).unwrap().numel();
        let ana = analytic
            .get(&name)
            .ok_or_else(|| Error::GradCheck(format!("no analytic gradient for {name}")))?
            .clone();
        if ana.len() != n {
            return Err(Error::GradCheck(format!(
                "analytic gradient for {name} has {} elements, expected {n}",
                ana.len()
            )));
        }
        let mut worst = 0.0_f64;
        for i in 0..n {
            let orig = params.get(&name).unwrap().values()[i];
            params.get_mut(&name).unwrap().values_mut()[i] = orig + eps;
            let up = loss(params)?;
            params.get_mut(&name).unwrap().values_mut()[i] = orig - eps;
            let down = loss(params)?;
            params.get_mut(&name).unwrap().values_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            worst = worst.max(rel_err(ana[i], numeric));
        }
        entries.push(GradCheckEntry {
            name,
            max_rel_err: worst,
            elements: n,
        });
    }
    Ok(GradCheckReport { entries })
}
