//! Central finite differences against analytic parameter gradients.

use super::Params;

/// Below this magnitude gradients are compared in absolute terms: a central
/// difference with step `1e-5` carries roundoff near `1e-11` for O(1)
/// losses, which would otherwise dominate the ratio.
pub const FLOOR: f64 = 1e-6;

/// Outcome of a gradient comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(|analytic|, FLOOR)`.
    pub max_relative_error: f64,
    /// Flat index of the worst parameter.
    pub worst_index: usize,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub checked: usize,
}

/// Perturbs every parameter by `±step` and compares the central difference
/// of `loss` with `analytic`.
pub fn check_gradients<P, F>(params: &P, analytic: &P, loss: F, step: f64) -> GradCheckReport
where
    P: Params + Clone,
    F: Fn(&P) -> f64,
{
    let base = params.flat();
    let grads = analytic.flat();
    assert_eq!(base.len(), grads.len(), "gradient and parameters differ in size");
    let mut probe = params.clone();
    let mut values = base.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_index: 0,
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
        checked: base.len(),
    };
    for i in 0..base.len() {
        values[i] = base[i] + step;
        probe.set_flat(&values);
        let plus = loss(&probe);
        values[i] = base[i] - step;
        probe.set_flat(&values);
        let minus = loss(&probe);
        values[i] = base[i];
        let numeric = (plus - minus) / (2.0 * step);
        let rel = (grads[i] - numeric).abs() / grads[i].abs().max(FLOOR);
        if rel > report.max_relative_error || !rel.is_finite() {
            report = GradCheckReport {
                max_relative_error: rel,
                worst_index: i,
                analytic_at_worst: grads[i],
                numeric_at_worst: numeric,
                checked: base.len(),
            };
        }
    }
    report
}
