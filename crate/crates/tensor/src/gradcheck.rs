//! Central finite-difference checks for tape gradients.
//!
//! The numeric side only ever evaluates the forward function on perturbed
//! copies of the inputs, so it shares nothing with the backward rules it
//! checks.
//!
//! A central difference is meaningless when the two probes land on opposite
//! sides of a ReLU or absolute-value kink. Both probes run on kink-tracking
//! tapes and entries whose kink patterns differ are counted as skipped
//! instead of compared.

use crate::error::{Result, TensorError};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    /// Central-difference step.
    pub step: f64,
    /// Added to the relative-error denominator so that entries whose true
    /// gradient is zero compare on an absolute scale.
    pub floor: f64,
    /// Check at most this many evenly spaced entries per input.
    pub max_entries_per_input: Option<usize>,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            step: 1e-5,
            floor: 1e-7,
            max_entries_per_input: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub input: usize,
    pub entry: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Entries whose probes straddled a kink.
    pub skipped: usize,

    pub max_rel_error: f64,
    pub worst: Option<Mismatch>,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.checked > 0 && self.max_rel_error < tolerance
    }
}

fn sampled_entries(len: usize, limit: Option<usize>) -> Vec<usize> {
    match limit {
        Some(n) if n < len => {
            let mut idx: Vec<usize> = (0..n).map(|i| i * (len - 1) / (n - 1).max(1)).collect();
            idx.dedup();
            idx
        }
        _ => (0..len).collect(),
    }
}

fn eval_scalar<F>(f: &F, inputs: &[Tensor]) -> Result<(f64, Vec<bool>)>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::tracking_kinks();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let value = f(&tape, &vars)?.value().item()?;
    Ok((value, tape.kink_pattern().unwrap_or_default()))
}

impl GradCheck {
    /// Compares tape gradients of the scalar `f(inputs)` with central
    /// differences, for every input.
    pub fn run<F>(&self, inputs: &[Tensor], f: F) -> Result<GradCheckReport>
    where
        F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
    {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let root = f(&tape, &vars)?;
        if root.value().len() != 1 {
            return Err(TensorError::Usage("gradient check needs a scalar function".into()));
        }
        let grads = tape.backward(&root)?;
        let analytic: Vec<Tensor> = vars.iter().map(|v| grads.wrt(v)).collect();
        drop(root);
        drop(vars);

        let mut report = GradCheckReport::default();
        let mut probe = inputs.to_vec();
        for (which, input) in inputs.iter().enumerate() {
            for entry in sampled_entries(input.len(), self.max_entries_per_input) {
                let original = input.data()[entry];
                probe[which].data_mut()[entry] = original + self.step;
                let (plus, plus_kinks) = eval_scalar(&f, &probe)?;
                probe[which].data_mut()[entry] = original - self.step;
                let (minus, minus_kinks) = eval_scalar(&f, &probe)?;
                probe[which].data_mut()[entry] = original;
                if plus_kinks != minus_kinks {
                    report.skipped += 1;
                    continue;
                }

                let numeric = (plus - minus) / (2.0 * self.step);
                let a = analytic[which].data()[entry];
                let rel_error = (a - numeric).abs() / (a.abs().max(numeric.abs()) + self.floor);
                report.checked += 1;
                if rel_error > report.max_rel_error || report.worst.is_none() {
                    report.max_rel_error = report.max_rel_error.max(rel_error);
                    report.worst = Some(Mismatch {
                        input: which,
                        entry,
                        analytic: a,
                        numeric,
                        rel_error,
                    });
                }
            }
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_passes() {
        let x = Tensor::new(&[3], vec![0.5, -1.0, 2.0]).unwrap();
        let ok = GradCheck::default()
            .run(&[x.clone()], |_, v| Ok(v[0].mul(&v[0])?.sum()))
            .unwrap();
        assert!(ok.passes(1e-6), "{ok:?}");
    }

    #[test]
    fn probes_across_a_kink_are_skipped() {
        let x = Tensor::new(&[2], vec![1e-7, 0.5]).unwrap();
        let r = GradCheck::default().run(&[x], |_, v| Ok(v[0].relu().sum())).unwrap();
        assert_eq!((r.checked, r.skipped), (1, 1));
        assert!(r.passes(1e-9));
    }

    #[test]
    fn samples_requested_entries() {
        assert_eq!(sampled_entries(10, Some(3)), vec![0, 4, 9]);
        assert_eq!(sampled_entries(2, Some(5)), vec![0, 1]);
    }
}
