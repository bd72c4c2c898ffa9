//! Central finite-difference verification of tape gradients.

use super::matrix::Matrix;
use super::params::{ParamId, ParamStore};
use super::tape::Gradients;

/// Denominator floor of the relative error `|a − n| / (|a| + 1e-8)`.
pub const REL_ERROR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct WorstCoordinate {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub passed: bool,
    pub checked: usize,
    /// Coordinates excluded because `f` has a kink within one step.
    pub kinks: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Coordinates above tolerance, kinks excluded.
    pub failing: usize,
    pub worst: Option<WorstCoordinate>,
}

/// `(f(θ + h·e_i) − f(θ − h·e_i)) / 2h` for every entry of parameter `id`.
pub fn numeric_gradient(
    store: &mut ParamStore,
    id: ParamId,
    h: f64,
    f: impl Fn(&ParamStore) -> f64,
) -> Matrix {
    let (r, c) = store.value(id).shape();
    let mut out = Matrix::zeros(r, c);
    for i in 0..r * c {
        let (fp, fm) = two_sided(store, id, i, h, &f);
        out.data_mut()[i] = (fp - fm) / (2.0 * h);
    }
    out
}

fn two_sided(
    store: &mut ParamStore,
    id: ParamId,
    i: usize,
    h: f64,
    f: &impl Fn(&ParamStore) -> f64,
) -> (f64, f64) {
    let orig = store.value(id).data()[i];
    store.value_mut(id).data_mut()[i] = orig + h;
    let fp = f(store);
    store.value_mut(id).data_mut()[i] = orig - h;
    let fm = f(store);
    store.value_mut(id).data_mut()[i] = orig;
    (fp, fm)
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + REL_ERROR_FLOOR)
}

/// One-sided slopes at steps `h` and `h/10`. For a smooth function their
/// gap shrinks tenfold with the step; a kink inside the stencil breaks that.
fn has_kink(
    store: &mut ParamStore,
    id: ParamId,
    i: usize,
    h: f64,
    f: &impl Fn(&ParamStore) -> f64,
) -> bool {
    let f0 = f(store);
    let gap = |store: &mut ParamStore, step: f64| {
        let (fp, fm) = two_sided(store, id, i, step, f);
        ((fp - f0) / step - (f0 - fm) / step).abs()
    };
    let wide = gap(store, h);
    let narrow = gap(store, h / 10.0);
    let ratio = wide / narrow.max(f64::MIN_POSITIVE);
    wide > 1e-6 && !(5.0..=20.0).contains(&ratio)
}

/// Checks `analytic` against central differences of `f` over `params`.
/// Coordinates that fail the tolerance only because of a kink are counted
/// in `kinks` and do not fail the check.
pub fn finite_diff_check(
    store: &mut ParamStore,
    params: &[ParamId],
    analytic: &Gradients,
    f: impl Fn(&ParamStore) -> f64,
    step: f64,
    tolerance: f64,
) -> GradCheckReport {
    assert!(step > 0.0, "finite-difference step must be positive");
    let mut report = GradCheckReport {
        passed: true,
        checked: 0,
        kinks: 0,
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        failing: 0,
        worst: None,
    };
    for &id in params {
        let n = store.value(id).len();
        for i in 0..n {
            let a = analytic.get(id).map_or(0.0, |g| g.data()[i]);
            let (fp, fm) = two_sided(store, id, i, step, &f);
            let num = (fp - fm) / (2.0 * step);
            let err = rel_error(a, num);
            report.checked += 1;
            if err > tolerance && has_kink(store, id, i, step, &f) {
                report.kinks += 1;
                continue;
            }
            report.max_abs_error = report.max_abs_error.max((a - num).abs());
            if err > tolerance {
                report.failing += 1;
            }
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some(WorstCoordinate {
                    param: store.name(id).to_string(),
                    index: i,
                    analytic: a,
                    numeric: num,
                    rel_error: err,
                });
            }
        }
    }
    report.passed = report.max_rel_error <= tolerance;
    report
}
