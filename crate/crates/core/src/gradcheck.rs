//! Central finite-difference gradient checks.

/// Central-difference gradient of `f` at `x` with step `h`.
pub fn central_difference<F>(mut f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| central_difference_at(&mut f, &mut probe, i, h))
        .collect()
}

/// Central difference along coordinate `i` only. `probe` is restored on return.
pub fn central_difference_at<F>(f: &mut F, probe: &mut [f64], i: usize, h: f64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let orig = probe[i];
    probe[i] = orig + h;
    let up = f(probe);
    probe[i] = orig - h;
    let down = f(probe);
    probe[i] = orig;
    (up - down) / (2.0 * h)
}

/// Tolerances for comparing an analytic gradient with finite differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub step: f64,
    pub rel_tol: f64,
    /// Denominator floor so near-zero gradients are judged absolutely.
    pub abs_floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-5,
            rel_tol: 1e-4,
            abs_floor: 1e-8,
        }
    }
}

impl GradCheckConfig {
    /// `|a - n| / max(|a|, |n|, abs_floor)`.
    pub fn rel_error(&self, analytic: f64, numeric: f64) -> f64 {
        (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(self.abs_floor)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub failures: usize,
    pub max_rel_error: f64,
    /// Coordinate with the largest relative error.
    pub worst: Option<usize>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.checked > 0
    }
}

/// Compares `analytic` with central differences of `f` on `coords`.
pub fn check_coordinates<F>(
    mut f: F,
    x: &[f64],
    analytic: &[f64],
    coords: &[usize],
    cfg: &GradCheckConfig,
) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    let mut report = GradCheckReport {
        checked: 0,
        failures: 0,
        max_rel_error: 0.0,
        worst: None,
    };
    for &i in coords {
        let numeric = central_difference_at(&mut f, &mut probe, i, cfg.step);
        let err = cfg.rel_error(analytic[i], numeric);
        report.checked += 1;
        if err.is_nan() || err > cfg.rel_tol {
            report.failures += 1;
        }
        if report.worst.is_none() || err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst = Some(i);
        }
    }
    report
}
