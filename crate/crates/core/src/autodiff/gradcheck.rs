//! Central finite-difference verification of tape gradients.
//!
//! The checker re-evaluates a user-supplied loss builder with each parameter
//! element nudged by `+h` and `-h` and compares the secant slope against the
//! analytic gradient from `backward`. It is part of the public API because
//! network definitions in downstream modules (and their integration tests)
//! verify their own graphs with it.

use super::store::ParamStore;
use super::tape::{NodeId, Tape};
use super::tensor::TensorError;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Parameter name and flat element index of the worst mismatch.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// Default step for the central difference.
pub const DEFAULT_H: f64 = 1e-5;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Compare analytic gradients of `build` against central differences over
/// every element of every tensor in `store`.
///
/// `build` must construct the full loss graph on the given tape (binding the
/// store exactly once) and return the scalar loss node. It is called once
/// for the analytic pass and twice per parameter element.
pub fn check_gradients<F>(
    store: &mut ParamStore,
    h: f64,
    mut build: F,
) -> Result<GradCheckReport, TensorError>
where
    F: FnMut(&ParamStore, &mut Tape) -> Result<NodeId, TensorError>,
{
    let mut tape = Tape::new();
    let loss = build(store, &mut tape)?;
    let grads = tape.backward(loss)?;

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        checked: 0,
    };

    for slot in 0..store.len() {
        let analytic = grads.dense(store, slot);
        for i in 0..analytic.len() {
            let original = store.tensor_at(slot).data()[i];

            store.tensor_at_mut(slot).data_mut()[i] = original + h;
            let mut tp = Tape::new();
            let lp = build(store, &mut tp)?;
            let fp = tp.value(lp).item()?;

            store.tensor_at_mut(slot).data_mut()[i] = original - h;
            let mut tm = Tape::new();
            let lm = build(store, &mut tm)?;
            let fm = tm.value(lm).item()?;

            store.tensor_at_mut(slot).data_mut()[i] = original;

            let fd = (fp - fm) / (2.0 * h);
            let err = rel_err(analytic.data()[i], fd);
            report.checked += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = Some((store.name_at(slot).to_string(), i));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::tensor::Tensor;

    #[test]
    fn composite_graph_passes_gradcheck() {
        let mut store = ParamStore::new();
        store
            .insert("w", Tensor::from_vec(2, 3, vec![0.3, -0.8, 0.5, 1.2, -0.1, 0.7]))
            .unwrap();
        store.insert("b", Tensor::row(vec![0.1, -0.2])).unwrap();

        let report = check_gradients(&mut store, DEFAULT_H, |store, tape| {
            let ids = tape.bind(store)?;
            let x = tape.constant(Tensor::from_vec(4, 3, vec![
                0.5, -1.0, 0.25, 0.9, 0.4, -0.6, -0.3, 0.8, 1.1, 0.2, -0.7, 0.35,
            ]));
            let h = tape.matmul_nt(x, ids[0])?;
            let hb = tape.add_row(h, ids[1])?;
            let t = tape.tanh(hb);
            let sp = tape.softplus(t);
            let sq = tape.square(sp);
            Ok(tape.mean_all(sq))
        })
        .unwrap();
        assert!(
            report.max_rel_err < 1e-6,
            "max rel err {} at {:?}",
            report.max_rel_err,
            report.worst
        );
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // exp's derivative is exp(x); a graph using log1p-style mismatch is
        // simulated by checking exp against a deliberately skewed h, so here
        // we instead corrupt the analytic side by building a different loss
        // in the analytic pass than in the probe passes.
        let mut store = ParamStore::new();
        store.insert("w", Tensor::scalar(0.5)).unwrap();
        let mut first = true;
        let report = check_gradients(&mut store, DEFAULT_H, move |store, tape| {
            let ids = tape.bind(store)?;
            let y = if first {
                first = false;
                tape.square(ids[0])
            } else {
                tape.exp(ids[0])
            };
            Ok(tape.sum_all(y))
        })
        .unwrap();
        assert!(report.max_rel_err > 1e-2);
    }
}
