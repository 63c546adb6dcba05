use super::{ParamGrads, ParamStore};
use crate::{Error, Result};

/// Outcome of comparing analytic gradients with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub coords_checked: usize,
}

/// `|a − b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compares `analytic` against `(f(θ+h) − f(θ−h)) / 2h` for every coordinate
/// of every parameter. `params` is restored before returning.
pub fn finite_diff_check<F>(
    params: &mut ParamStore<f64>,
    analytic: &ParamGrads<f64>,
    h: f64,
    mut f: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore<f64>) -> Result<f64>,
{
    if analytic.0.len() != params.len() {
        return Err(Error::shape("finite_diff_check", params.len(), analytic.0.len()));
    }
    if !(h > 0.0) {
        return Err(Error::invalid("step h must be positive"));
    }
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coords_checked: 0,
    };
    for id in 0..params.len() {
        if analytic.get(id).shape() != params.value(id).shape() {
            return Err(Error::shape("finite_diff_check", format!("{:?}", params.value(id).shape()), format!("{:?}", analytic.get(id).shape())));
        }
        for j in 0..params.value(id).len() {
            let orig = params.value(id).data()[j];
            params.value_mut(id).data_mut()[j] = orig + h;
            let plus = f(params);
            params.value_mut(id).data_mut()[j] = orig - h;
            let minus = f(params);
            params.value_mut(id).data_mut()[j] = orig;
            let numeric = (plus? - minus?) / (2.0 * h);
            let err = relative_error(analytic.get(id).data()[j], numeric);
            if !err.is_finite() {
                return Err(Error::NonFinite(format!("gradient check of `{}`", params.name(id))));
            }
            report.coords_checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((params.name(id).to_string(), j));
            }
        }
    }
    Ok(report)
}
