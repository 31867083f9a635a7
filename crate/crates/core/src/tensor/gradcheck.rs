//! Central finite-difference gradient checking.

use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Outcome of checking one function.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub name: String,
    /// Worst relative error over the checked inputs.
    pub rel_err: f64,
    pub passed: bool,
}

/// Gradients with both norms below this are treated as zero; central
/// differences at the usual steps cannot resolve anything smaller.
pub const ZERO_GRADIENT: f64 = 1e-7;

/// `‖a − n‖ / max(‖a‖, ‖n‖)`, or 0 when both gradients vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, b)| a - b).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale < ZERO_GRADIENT {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Analytic gradients of the scalar `f(inputs)` with respect to every
/// input, as computed by [`Graph::backward`].
pub fn analytic_gradients(
    inputs: &[Tensor],
    f: &dyn Fn(&mut Graph, &[Var]) -> Result<Var>,
) -> Result<Vec<Vec<f64>>> {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    g.backward(out)?;
    Ok(vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| {
            g.grad_data(v)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; t.len()])
        })
        .collect())
}

fn evaluate(inputs: &[Tensor], f: &dyn Fn(&mut Graph, &[Var]) -> Result<Var>) -> Result<f64> {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let v = g.value(out);
    if v.len() != 1 {
        return Err(Error::NotScalar(v.shape().to_vec()));
    }
    Ok(v.item())
}

/// Central differences `(f(x + h) − f(x − h)) / 2h` for every element of
/// every input.
///
/// Each difference is repeated at `h / 2`. When the two disagree the stencil
/// straddles a kink such as ReLU at zero and the step is shrunk tenfold, up to
/// [`MAX_REFINE`] times, until they agree.
pub fn numeric_gradients(
    inputs: &[Tensor],
    f: &dyn Fn(&mut Graph, &[Var]) -> Result<Var>,
    step: f64,
) -> Result<Vec<Vec<f64>>> {
    let mut work = inputs.to_vec();
    let mut grads = Vec::with_capacity(inputs.len());
    for i in 0..inputs.len() {
        let mut gi = Vec::with_capacity(inputs[i].len());
        for e in 0..inputs[i].len() {
            let orig = work[i].data()[e];
            let mut central = |h: f64| -> Result<f64> {
                work[i].data_mut()[e] = orig + h;
                let plus = evaluate(&work, f)?;
                work[i].data_mut()[e] = orig - h;
                let minus = evaluate(&work, f)?;
                work[i].data_mut()[e] = orig;
                Ok((plus - minus) / (2.0 * h))
            };
            let mut h = step;
            let mut d = central(h)?;
            for _ in 0..MAX_REFINE {
                let half = central(h / 2.0)?;
                if (d - half).abs() <= KINK_TOLERANCE * d.abs().max(half.abs()).max(1.0) {
                    break;
                }
                h /= 10.0;
                d = central(h)?;
            }
            gi.push(d);
        }
        grads.push(gi);
    }
    Ok(grads)
}

/// Step refinements attempted per element before giving up.
pub const MAX_REFINE: usize = 3;

/// Disagreement between the `h` and `h / 2` differences that marks a kink.
/// Truncation error on smooth functions is orders of magnitude smaller.
pub const KINK_TOLERANCE: f64 = 1e-5;

/// Compares analytic and numeric gradients of `f` at `inputs`.
///
/// `corrupt` scales the analytic gradient before comparison; it exists so
/// callers can demonstrate that a broken gradient is caught.
pub fn check(
    name: &str,
    inputs: &[Tensor],
    f: &dyn Fn(&mut Graph, &[Var]) -> Result<Var>,
    step: f64,
    tolerance: f64,
    corrupt: bool,
) -> Result<GradCheck> {
    let mut analytic = analytic_gradients(inputs, f)?;
    if corrupt {
        for g in analytic.iter_mut().flatten() {
            *g = *g * 1.1 + 1e-3;
        }
    }
    let numeric = numeric_gradients(inputs, f, step)?;
    let rel_err = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| relative_error(a, n))
        .fold(0.0, f64::max);
    Ok(GradCheck {
        name: name.to_owned(),
        rel_err,
        passed: rel_err < tolerance,
    })
}
