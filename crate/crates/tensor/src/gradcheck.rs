use crate::params::{Gradients, ParamId, ParamStore};

/// Denominator floor for the relative error, so that entries whose true
/// gradient is ~0 are compared on an absolute scale.
pub const DEFAULT_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `max |g_tape − g_fd| / max(|g_tape|, |g_fd|, floor)` over all entries.
    pub max_rel_error: f64,
    pub worst_param: Option<String>,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub entries_checked: usize,
}

/// Compares tape gradients against central differences of `f`.
///
/// `f` must be a deterministic function of the parameter values. Points
/// where `f` has a kink within `h` of the evaluation point (e.g. `|x|` at
/// `x = 0`) are outside the contract and will report large errors.
pub fn finite_diff_check<F>(
    mut f: F,
    store: &ParamStore,
    analytic: &Gradients,
    h: f64,
) -> GradCheckReport
where
    F: FnMut(&ParamStore) -> f64,
{
    finite_diff_check_with_floor(&mut f, store, analytic, h, DEFAULT_FLOOR)
}

pub fn finite_diff_check_with_floor<F>(
    f: &mut F,
    store: &ParamStore,
    analytic: &Gradients,
    h: f64,
    floor: f64,
) -> GradCheckReport
where
    F: FnMut(&ParamStore) -> f64,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut work = store.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: None,
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        entries_checked: 0,
    };
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        let n = store.get(id).len();
        for i in 0..n {
            let x0 = store.get(id).data()[i];
            work.get_mut(id).data_mut()[i] = x0 + h;
            let fp = f(&work);
            work.get_mut(id).data_mut()[i] = x0 - h;
            let fm = f(&work);
            work.get_mut(id).data_mut()[i] = x0;
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic.get(id).data()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            report.entries_checked += 1;
            if rel > report.max_rel_error || rel.is_nan() {
                report.max_rel_error = if rel.is_nan() { f64::INFINITY } else { rel };
                report.worst_param = Some(store.name(id).to_string());
                report.worst_index = i;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    report
}
