//! Central-difference gradient checking against the gradient slots of a
//! [`ParamSet`].

use crate::error::{Error, Result};
use crate::param::ParamSet;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub per_tensor: Vec<TensorCheck>,
    /// (tensor name, flat index, analytic, numeric) of the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares the analytic gradients already stored on `params` with
/// `(f(θ+h) − f(θ−h)) / 2h` per coordinate.
///
/// Tensors larger than `max_coords` are checked on evenly strided
/// coordinates. Parameters are restored bit-exactly afterwards.
pub fn finite_diff_check<P, F>(
    params: &mut P,
    h: f64,
    max_coords: Option<usize>,
    mut loss: F,
) -> Result<GradCheckReport>
where
    P: ParamSet + ?Sized,
    F: FnMut(&P) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::Usage(format!("finite difference step must be positive, got {h}")));
    }
    let analytic = params.grads();
    let names = params.names();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        per_tensor: Vec::new(),
        worst: None,
    };
    for (ti, (name, grad)) in names.iter().zip(&analytic).enumerate() {
        let n = grad.len();
        let stride = match max_coords {
            Some(m) if m > 0 && n > m => n.div_ceil(m),
            _ => 1,
        };
        let mut tc = TensorCheck {
            name: name.clone(),
            checked: 0,
            max_rel_error: 0.0,
        };
        for coord in (0..n).step_by(stride) {
            let original = nudge(params, ti, coord, None);
            nudge(params, ti, coord, Some(original + h));
            let plus = loss(params)?;
            nudge(params, ti, coord, Some(original - h));
            let minus = loss(params)?;
            nudge(params, ti, coord, Some(original));
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss perturbing {name}[{coord}]")));
            }
            let numeric = (plus - minus) / (2.0 * h);
            let err = relative_error(grad[coord], numeric);
            tc.checked += 1;
            tc.max_rel_error = tc.max_rel_error.max(err);
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((name.clone(), coord, grad[coord], numeric));
            }
        }
        report.per_tensor.push(tc);
    }
    Ok(report)
}

/// Reads (and optionally overwrites) one scalar of the `tensor`-th tensor.
fn nudge<P: ParamSet + ?Sized>(params: &mut P, tensor: usize, coord: usize, set: Option<f64>) -> f64 {
    let mut i = 0;
    let mut old = 0.0;
    params.visit_mut(&mut |_, t| {
        if i == tensor {
            old = t.data()[coord];
            if let Some(v) = set {
                t.data_mut()[coord] = v;
            }
        }
        i += 1;
    });
    old
}
