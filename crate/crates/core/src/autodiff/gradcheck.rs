//! Central finite-difference checking of [`Graph::backward`].

use crate::autodiff::graph::{Graph, NodeId};
use crate::error::{Error, Result};

/// Denominator floor for the relative error, so that near-zero gradients are
/// compared on an absolute scale.
pub const REL_ERR_FLOOR: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(parameter, flat index)` of the worst entry.
    pub worst: Option<(String, usize)>,
    pub entries_checked: usize,
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Compares the reverse-mode gradient of `loss` with respect to every `Param`
/// node against central differences with step `eps`.
///
/// The graph is restored to its original parameter values afterwards.
pub fn grad_check(graph: &mut Graph, loss: NodeId, eps: f64) -> Result<GradCheckReport> {
    if !(eps > 0.0) {
        return Err(Error::arg(format!("finite-difference step must be positive, got {eps}")));
    }
    let grads = graph.backward(loss)?;
    let params: Vec<(NodeId, String)> = graph
        .params()
        .into_iter()
        .map(|(id, name)| (id, name.to_string()))
        .collect();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        entries_checked: 0,
    };
    for (id, name) in params {
        let analytic = grads
            .wrt(id)
            .cloned()
            .unwrap_or_else(|| crate::Tensor::zeros(graph.shape(id)));
        for i in 0..analytic.len() {
            let orig = graph.value(id).data()[i];
            graph.value_mut(id).data_mut()[i] = orig + eps;
            graph.refresh()?;
            let plus = scalar(graph, loss);
            graph.value_mut(id).data_mut()[i] = orig - eps;
            graph.refresh()?;
            let minus = scalar(graph, loss);
            graph.value_mut(id).data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let err = rel_error(analytic.data()[i], numeric);
            report.entries_checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((name.clone(), i));
            }
        }
    }
    graph.refresh()?;
    Ok(report)
}

fn scalar(graph: &Graph, id: NodeId) -> f64 {
    graph.value(id).data()[0]
}
