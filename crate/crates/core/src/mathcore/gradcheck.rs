/// Central finite-difference step.
pub const FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

/// Compare an analytic gradient against central finite differences of
/// `loss` at `params`. Relative error per component is
/// |g_a - g_n| / max(|g_a|, |g_n|, 1e-8).
///
/// Intended for small parameter vectors (a few thousand entries at most);
/// the loss is evaluated twice per parameter.
pub fn grad_check(
    loss: impl Fn(&[f64]) -> f64,
    params: &[f64],
    analytic: &[f64],
    tolerance: f64,
) -> GradCheckReport {
    assert_eq!(params.len(), analytic.len(), "gradient length");
    let mut work = params.to_vec();
    let mut max_rel_err = 0.0;
    let mut worst_index = 0;
    for i in 0..params.len() {
        let orig = work[i];
        work[i] = orig + FD_STEP;
        let lp = loss(&work);
        work[i] = orig - FD_STEP;
        let lm = loss(&work);
        work[i] = orig;
        let numeric = (lp - lm) / (2.0 * FD_STEP);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        let rel = (analytic[i] - numeric).abs() / denom;
        if rel > max_rel_err {
            max_rel_err = rel;
            worst_index = i;
        }
    }
    GradCheckReport {
        max_rel_err,
        worst_index,
        tolerance,
    }
}
