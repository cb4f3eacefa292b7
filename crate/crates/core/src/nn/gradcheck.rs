use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{ParamStore, Tensor};
use crate::error::{param_err, shape_err, Error, Result};

/// Outcome of a finite-difference gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    /// Largest relative error per parameter tensor, in store order.
    pub per_param: Vec<(String, f64)>,
}

/// Compares analytic gradients against central differences on every
/// coordinate of every parameter.
///
/// `f(params, with_grad)` returns the scalar objective and, when `with_grad`
/// is set, one gradient tensor per parameter in store order. The relative
/// error of a coordinate is `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check<F>(params: &ParamStore, eps: f64, mut f: F) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore, bool) -> Result<(f64, Vec<Tensor>)>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(param_err!("finite-difference step {eps} outside [1e-7, 1e-3]"));
    }
    let (value, analytic) = f(params, true)?;
    if !value.is_finite() {
        return Err(Error::NonFinite("objective at probe point".into()));
    }
    if analytic.len() != params.len() {
        return Err(shape_err!("{} gradients for {} parameters", analytic.len(), params.len()));
    }
    let mut probe = params.clone();
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: None, per_param: Vec::new() };
    for p in 0..params.len() {
        if analytic[p].shape() != params.value(p).shape() {
            return Err(shape_err!("gradient shape mismatch for {}", params.name(p)));
        }
        let mut worst_here: f64 = 0.0;
        for c in 0..params.value(p).len() {
            let orig = params.value(p).data()[c];
            probe.value_mut(p).data_mut()[c] = orig + eps;
            let (plus, _) = f(&probe, false)?;
            probe.value_mut(p).data_mut()[c] = orig - eps;
            let (minus, _) = f(&probe, false)?;
            probe.value_mut(p).data_mut()[c] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite("objective at perturbed point".into()));
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[p].data()[c];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst_here = worst_here.max(rel);
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((params.name(p).to_string(), c));
            }
        }
        report.per_param.push((params.name(p).to_string(), worst_here));
    }
    Ok(report)
}
