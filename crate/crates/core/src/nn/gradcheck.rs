//! Central finite-difference gradient checking.

/// Largest relative discrepancy between analytic and numeric gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Gradients smaller than this are compared in absolute rather than relative terms.
pub const REL_ERROR_FLOOR: f64 = 1e-8;

/// Compares `analytic` with `(f(x+eps·e_i) − f(x−eps·e_i)) / (2·eps)` for every
/// coordinate of `x`. The relative error of a coordinate is
/// `|a − n| / max(|a|, |n|, REL_ERROR_FLOOR)`.
pub fn grad_check<F>(f: F, x: &[f64], analytic: &[f64], eps: f64) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    grad_check_with_floor(f, x, analytic, eps, REL_ERROR_FLOOR)
}

/// [`grad_check`] with a caller-chosen floor for the relative-error denominator.
/// Deep graphs accumulate round-off of order 1e-10 in the numeric estimate, so
/// gradients that are analytically zero need a larger floor there.
pub fn grad_check_with_floor<F>(
    mut f: F,
    x: &[f64],
    analytic: &[f64],
    eps: f64,
    floor: f64,
) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(x.len(), analytic.len(), "gradient length mismatch");
    let mut probe = x.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    for i in 0..x.len() {
        probe[i] = x[i] + eps;
        let up = f(&probe);
        probe[i] = x[i] - eps;
        let down = f(&probe);
        probe[i] = x[i];
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic[i];
        let denom = a.abs().max(numeric.abs()).max(floor);
        let rel = (a - numeric).abs() / denom;
        if rel > report.max_rel_error || i == 0 {
            report = GradCheckReport {
                max_rel_error: rel,
                worst_index: i,
                analytic: a,
                numeric,
            };
        }
    }
    report
}
