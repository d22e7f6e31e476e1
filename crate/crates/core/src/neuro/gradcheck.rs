use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub probes: usize,
    pub max_rel_error: f64,
    /// Coordinate with the largest error.
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

/// Compares an analytic gradient with central differences on randomly chosen
/// coordinates.
///
/// `loss_and_grad` returns the loss and its full analytic gradient at the
/// given point. The error at a coordinate is
/// `|a - n| / max(1e-8, |a| + |n|)`; the report carries the worst one. When
/// `probes` is at least the parameter count every coordinate is checked.
pub fn finite_diff_check<F, R>(
    params: &[f64],
    mut loss_and_grad: F,
    probes: usize,
    eps: f64,
    rng: &mut R,
) -> GradCheckReport
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
    R: Rng + ?Sized,
{
    let (_, analytic) = loss_and_grad(params);
    assert_eq!(analytic.len(), params.len(), "gradient length");
    let coords: Vec<usize> = if probes >= params.len() {
        (0..params.len()).collect()
    } else {
        sample(rng, params.len(), probes).into_vec()
    };

    let mut point = params.to_vec();
    let mut report = GradCheckReport {
        probes: coords.len(),
        max_rel_error: 0.0,
        worst_index: coords.first().copied().unwrap_or(0),
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };
    for k in coords {
        point[k] = params[k] + eps;
        let (up, _) = loss_and_grad(&point);
        point[k] = params[k] - eps;
        let (down, _) = loss_and_grad(&point);
        point[k] = params[k];

        let numeric = (up - down) / (2.0 * eps);
        let a = analytic[k];
        let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_index = k;
            report.worst_analytic = a;
            report.worst_numeric = numeric;
        }
    }
    report
}
