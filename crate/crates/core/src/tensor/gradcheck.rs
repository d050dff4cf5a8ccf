//! Central finite-difference gradient verification.

/// Step used for the central differences.
pub const FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `max |a - n| / max(|a|, |n|, 1e-8)` over all coordinates.
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `analytic` against central differences of `loss` around `point`.
pub fn grad_check<F>(mut loss: F, point: &[f64], analytic: &[f64], tolerance: f64) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(point.len(), analytic.len(), "gradient length must match the point");
    let mut probe = point.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
        checked: point.len(),
        tolerance,
        passed: true,
    };
    for i in 0..point.len() {
        probe[i] = point[i] + FD_STEP;
        let up = loss(&probe);
        probe[i] = point[i] - FD_STEP;
        let down = loss(&probe);
        probe[i] = point[i];
        let numeric = (up - down) / (2.0 * FD_STEP);
        let err = relative_error(analytic[i], numeric);
        if err > report.max_rel_error || !err.is_finite() {
            report.max_rel_error = err;
            report.worst_index = i;
            report.analytic_at_worst = analytic[i];
            report.numeric_at_worst = numeric;
        }
    }
    report.passed = report.max_rel_error.is_finite() && report.max_rel_error < tolerance;
    report
}
