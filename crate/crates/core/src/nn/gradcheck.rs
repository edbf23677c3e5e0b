//! Central finite-difference verification of tape gradients.

use super::params::ParamStore;
use super::tape::{Graph, Var};
use super::tensor::Tensor;
use super::Result;

/// Denominator floor of the relative error, so gradients that are zero
/// analytically are compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Parameter name or `input[k]`, and flat index, of the worst entry.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares analytic gradients of the scalar built by `f` against central
/// differences with step `eps`, over every parameter in `store` and every
/// entry of `inputs`.
pub fn check<F>(store: &ParamStore, inputs: &[Tensor], eps: f64, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |store: &ParamStore, inputs: &[Tensor]| -> Result<f64> {
        let mut g = Graph::with_params(store);
        let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok(g.scalar(out))
    };

    let mut g = Graph::with_params(store);
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;
    let pgrads = g.param_grads(&grads);

    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    let mut record = |err: f64, name: String, i: usize| {
        report.checked += 1;
        if report.worst.is_none() || err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst = Some((name, i));
        }
    };

    let mut work = store.clone();
    for id in store.ids() {
        for i in 0..store.get(id).len() {
            let orig = store.get(id).data()[i];
            work.get_mut(id).data_mut()[i] = orig + eps;
            let up = eval(&work, inputs)?;
            work.get_mut(id).data_mut()[i] = orig - eps;
            let down = eval(&work, inputs)?;
            work.get_mut(id).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let analytic = pgrads[id.index()].data()[i];
            record(relative_error(analytic, numeric), store.name(id).to_string(), i);
        }
    }

    let mut shifted = inputs.to_vec();
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads
            .get(*v)
            .cloned()
            .unwrap_or_else(|| Tensor::new(inputs[k].shape().to_vec(), vec![0.0; inputs[k].len()]).expect("shape"));
        for i in 0..inputs[k].len() {
            let orig = inputs[k].data()[i];
            shifted[k].data_mut()[i] = orig + eps;
            let up = eval(store, &shifted)?;
            shifted[k].data_mut()[i] = orig - eps;
            let down = eval(store, &shifted)?;
            shifted[k].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            record(relative_error(analytic.data()[i], numeric), format!("input[{k}]"), i);
        }
    }
    Ok(report)
}
