use super::params::ParamSet;

/// Relative error used by [`grad_check`]; the floor keeps near-zero entries
/// from turning finite-difference round-off into huge ratios.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares `analytic` against central differences of `loss` at `params`,
/// element by element, and returns the largest relative error.
pub fn grad_check<F>(mut loss: F, params: &ParamSet, analytic: &ParamSet, h: f64) -> f64
where
    F: FnMut(&ParamSet) -> f64,
{
    assert!(params.same_layout(analytic), "gradient layout mismatch");
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for i in 0..params.scalar_count() {
        let x = params.flat_get(i);
        probe.flat_set(i, x + h);
        let up = loss(&probe);
        probe.flat_set(i, x - h);
        let down = loss(&probe);
        probe.flat_set(i, x);
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max(relative_error(analytic.flat_get(i), numeric));
    }
    worst
}
