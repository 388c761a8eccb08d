//! Finite-difference oracles for gradient verification.
//!
//! These deliberately know nothing about the graph: they probe any scalar
//! function of a flat f64 parameter vector. Checks run in f64 even though
//! the production graph is f32, so the 1e-4 tolerance tests the math and
//! not the float width.

/// Central difference df/dx_i = (f(x+h·e_i) − f(x−h·e_i)) / 2h for every i.
pub fn central_diff(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut xs = x.to_vec();
    (0..xs.len())
        .map(|i| {
            let orig = xs[i];
            xs[i] = orig + h;
            let fp = f(&xs);
            xs[i] = orig - h;
            let fm = f(&xs);
            xs[i] = orig;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// |a−b| / max(1, |a|, |b|): relative for large gradients, absolute for
/// small ones, so finite-difference truncation noise near zero does not
/// produce spurious failures.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| rel_err(a, n))
        .fold(0.0, f64::max)
}

/// Compare a function's reported gradient against central differences.
/// `build` must return (value, full gradient) for a given parameter vector.
pub fn check_scalar_fn(
    build: &mut dyn FnMut(&[f64]) -> (f64, Vec<f64>),
    x0: &[f64],
    h: f64,
) -> f64 {
    let analytic = build(x0).1;
    let numeric = {
        let mut f = |x: &[f64]| build(x).0;
        central_diff(&mut f, x0, h)
    };
    max_rel_err(&analytic, &numeric)
}
