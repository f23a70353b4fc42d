use super::params::{Gradients, ParamStore};
use super::tape::{Tape, Var};

/// Result of comparing analytic and numerical gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(parameter name, flat index)` of the worst entry.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// `|a - n| / max(|a| + |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-6)
}

/// Gradient of `loss` at the current parameters, computed on the tape.
pub fn analytic_gradients<F>(store: &ParamStore, loss: &F) -> Gradients
where
    F: Fn(&mut Tape, &ParamStore) -> Var,
{
    let mut tape = Tape::new();
    let out = loss(&mut tape, store);
    tape.backward(out, store)
}

/// Checks `analytic` against central differences over every parameter entry.
pub fn compare_with_numeric<F>(store: &mut ParamStore, eps: f64, loss: &F, analytic: &Gradients) -> GradCheckReport
where
    F: Fn(&mut Tape, &ParamStore) -> Var,
{
    let eval = |s: &ParamStore| {
        let mut tape = Tape::new();
        let out = loss(&mut tape, s);
        tape.scalar(out)
    };
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: None, checked: 0 };
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for k in 0..store.get(id).len() {
            let orig = store.get(id).data[k];
            store.get_mut(id).data[k] = orig + eps;
            let up = eval(store);
            store.get_mut(id).data[k] = orig - eps;
            let down = eval(store);
            store.get_mut(id).data[k] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let err = relative_error(analytic.get(id).data[k], numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((store.name(id).to_string(), k));
            }
        }
    }
    report
}

pub fn grad_check<F>(store: &mut ParamStore, eps: f64, loss: F) -> GradCheckReport
where
    F: Fn(&mut Tape, &ParamStore) -> Var,
{
    let analytic = analytic_gradients(store, &loss);
    compare_with_numeric(store, eps, &loss, &analytic)
}
