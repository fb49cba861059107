use super::{ParamId, ParamStore, Tape, Var};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter and flat index of the worst coordinate.
    pub worst: Option<(ParamId, usize)>,
    pub coordinates: usize,
}

/// Denominator floor of [`relative_error`]. Gradients smaller than this are
/// compared on absolute error, since central differences of an exactly zero
/// gradient only measure roundoff.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Compares reverse-mode gradients of `f` with central differences of
/// width `step` for every coordinate of `params`. `f` must be deterministic.
pub fn gradient_check<F>(store: &ParamStore, params: &[ParamId], step: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let loss = f(&mut tape, store)?;
    let grads = tape.backward(loss, store.len())?;

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut t = Tape::new();
        let l = f(&mut t, s)?;
        Ok(t.value(l).item())
    };

    let mut work = store.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        coordinates: 0,
    };
    for &id in params {
        for i in 0..store.get(id).len() {
            let original = store.get(id).data()[i];
            work.get_mut(id).data_mut()[i] = original + step;
            let plus = eval(&work)?;
            work.get_mut(id).data_mut()[i] = original - step;
            let minus = eval(&work)?;
            work.get_mut(id).data_mut()[i] = original;

            let numeric = (plus - minus) / (2.0 * step);
            let analytic = grads.get(id).map_or(0.0, |g| g.data()[i]);
            let err = relative_error(analytic, numeric);
            report.coordinates += 1;
            if err > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = report.max_relative_error.max(err);
                report.worst = Some((id, i));
            }
        }
    }
    Ok(report)
}
