//! Central finite-difference verification of reverse-mode gradients.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::params::ParamSet;
use crate::rng::labeled_rng;

pub const FD_STEP: f64 = 1e-5;

/// Worst disagreement found by a gradient check.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub probes: usize,
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

fn eval<F>(params: &ParamSet, f: &F) -> Result<(Graph, Var, f64)>
where
    F: Fn(&mut Graph, &ParamSet) -> Result<Var>,
{
    let mut g = Graph::new();
    let out = f(&mut g, params)?;
    let v = g.value(out).data()[0];
    if !v.is_finite() {
        return Err(Error::NonFinite { op: "grad_check" });
    }
    Ok((g, out, v))
}

/// Reverse-mode gradients of `f` for every parameter, in parameter order.
pub fn analytic_gradients<F>(params: &ParamSet, f: &F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&mut Graph, &ParamSet) -> Result<Var>,
{
    let (g, out, _) = eval(params, f)?;
    let grads = g.backward(out)?;
    let mut scratch = params.clone();
    scratch.zero_grads();
    g.accumulate_param_grads(&grads, &mut scratch);
    Ok(scratch.iter().map(|(_, p)| p.grad.clone().unwrap_or_default()).collect())
}

/// Compares `analytic` against central differences. `max_probes` limits the number of
/// scalars checked (chosen by `seed`); `None` checks every parameter scalar.
pub fn compare_with_finite_differences<F>(
    params: &ParamSet,
    f: &F,
    analytic: &[Vec<f64>],
    seed: u64,
    max_probes: Option<usize>,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamSet) -> Result<Var>,
{
    let mut probes: Vec<(usize, usize)> = params
        .iter()
        .flat_map(|(id, p)| (0..p.value.len()).map(move |j| (id.index(), j)))
        .collect();
    if let Some(limit) = max_probes {
        probes.shuffle(&mut labeled_rng(seed, "grad_check"));
        probes.truncate(limit);
    }
    let ids: Vec<_> = params.iter().map(|(id, _)| id).collect();
    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        probes: probes.len(),
    };
    for &(pi, j) in &probes {
        let id = ids[pi];
        let original = work.value(id).clone();
        let mut nudge = |delta: f64| -> Result<f64> {
            let mut data = original.data().to_vec();
            data[j] += delta;
            work.set_value(id, crate::tensor::Tensor::new(original.shape(), data)?)?;
            Ok(eval(&work, f)?.2)
        };
        let plus = nudge(FD_STEP)?;
        let minus = nudge(-FD_STEP)?;
        work.set_value(id, original)?;
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        let a = analytic[pi][j];
        let err = relative_error(a, numeric);
        if err > report.max_rel_error || report.worst_param.is_empty() {
            report.max_rel_error = err;
            report.worst_param = params.get(id).name.clone();
            report.worst_index = j;
            report.analytic = a;
            report.numeric = numeric;
        }
    }
    Ok(report)
}

/// Full gradient check of a scalar-valued parametric function over all parameters.
pub fn grad_check<F>(params: &ParamSet, f: F, seed: u64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamSet) -> Result<Var>,
{
    let analytic = analytic_gradients(params, &f)?;
    compare_with_finite_differences(params, &f, &analytic, seed, None)
}
