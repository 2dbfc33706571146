//! Reparameterised sampling from a tanh-squashed Gaussian.
//!
//! Actions are `a = s * tanh(z)` with `z = mu + sigma * xi`, `xi ~ N(0, I)`,
//! and `s` the action scale, so every component lands in `(-s, s)`. The log
//! density follows from the change of variables:
//!
//! ```text
//! log p(a) = log N(z; mu, sigma) - sum_c [ log(1 - tanh2(z_c)) + log s ]
//! ```
//!
//! with the squash correction evaluated in the overflow-free form
//! `log(1 - tanh2(z)) = 2 (log 2 - z - softplus(-2 z))`. Because
//! `z - mu = sigma * xi` exactly, the Gaussian term reduces to
//! `-xi^2/2 - log sigma - log(2 pi)/2` per component, where only
//! `log sigma` carries a gradient; the sampled path contributes its
//! gradient through `z`.

use super::tape::{NodeId, Tape};
use super::tensor::{Tensor, TensorError};
use rand::Rng;
use rand_distr::StandardNormal;

/// Bounds applied to the log standard deviation before exponentiation.
pub const LOG_SIGMA_MIN: f64 = -20.0;
pub const LOG_SIGMA_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_74;
const LN_2: f64 = std::f64::consts::LN_2;

/// Sampled action node and its per-row log density.
pub struct SquashedSample {
    /// `n x d` actions in `(-scale, scale)`.
    pub action: NodeId,
    /// `n x 1` log densities, one per row of `mu`.
    pub log_density: NodeId,
    /// The standard normal draws used, for reproducing the sample.
    pub xi: Tensor,
}

/// Draw standard normal noise shaped like `mu`.
pub fn standard_normal_like(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Tensor::from_vec(rows, cols, data)
}

/// Build the sampling subgraph on `tape` from `mu` and `log_sigma` nodes
/// (both `n x d`) with the given noise draw `xi`.
///
/// Gradients flow into `mu` and `log_sigma` through both the action and the
/// log density, which is what the actor objective needs.
pub fn reparam_sample_tanh(
    tape: &mut Tape,
    mu: NodeId,
    log_sigma: NodeId,
    scale: f64,
    xi: Tensor,
) -> Result<SquashedSample, TensorError> {
    assert!(scale > 0.0, "action scale must be positive");
    let (rows, cols) = tape.value(mu).shape();
    if xi.shape() != (rows, cols) {
        return Err(TensorError::ShapeMismatch {
            op: "reparam_sample_tanh",
            lhs: (rows, cols),
            rhs: xi.shape(),
        });
    }

    let ls = tape.clamp(log_sigma, LOG_SIGMA_MIN, LOG_SIGMA_MAX);
    let sigma = tape.exp(ls);
    let xi_node = tape.constant(xi.clone());
    let noise = tape.mul(sigma, xi_node)?;
    let z = tape.add(mu, noise)?;
    let squashed = tape.tanh(z);
    let action = tape.scale(squashed, scale);

    // Constant part of the per-component log density.
    let const_part = xi.map(|x| -0.5 * x * x - HALF_LN_2PI - 2.0 * LN_2 - scale.ln());
    let const_node = tape.constant(const_part);
    let minus_ls = tape.sub(const_node, ls)?;
    let two_z = tape.scale(z, 2.0);
    let neg_two_z = tape.scale(z, -2.0);
    let sp = tape.softplus(neg_two_z);
    let two_sp = tape.scale(sp, 2.0);
    let partial = tape.add(minus_ls, two_z)?;
    let per_component = tape.add(partial, two_sp)?;
    let log_density = tape.sum_rows(per_component);

    Ok(SquashedSample {
        action,
        log_density,
        xi,
    })
}

/// Deterministic head used at evaluation time: `scale * tanh(mu)`.
pub fn squash_mean(mu: &Tensor, scale: f64) -> Tensor {
    mu.map(|m| scale * m.tanh())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::ParamStore;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_once(mu: Vec<f64>, log_sigma: Vec<f64>, scale: f64, xi: Vec<f64>) -> (Tensor, Tensor) {
        let n = mu.len();
        let mut tape = Tape::new();
        let mu = tape.constant(Tensor::from_vec(n, 1, mu));
        let ls = tape.constant(Tensor::from_vec(n, 1, log_sigma));
        let xi = Tensor::from_vec(n, 1, xi);
        let s = reparam_sample_tanh(&mut tape, mu, ls, scale, xi).unwrap();
        (tape.value(s.action).clone(), tape.value(s.log_density).clone())
    }

    #[test]
    fn vanishing_sigma_recovers_squashed_mean() {
        let (action, _) = sample_once(vec![0.7, -1.2], vec![-40.0, -40.0], 2.0, vec![1.3, -0.4]);
        // log sigma clamps at -20, so sigma ~ 2e-9 and the noise is negligible
        assert!((action.data()[0] - 2.0 * f64::tanh(0.7)).abs() < 1e-7);
        assert!((action.data()[1] - 2.0 * f64::tanh(-1.2)).abs() < 1e-7);
    }

    #[test]
    fn actions_stay_strictly_inside_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let scale = 2.0_f64.sqrt() * 3.0;
        for _ in 0..200 {
            let mu = rng.gen_range(-6.0..6.0);
            let ls = rng.gen_range(-3.0..2.0);
            let xi = standard_normal_like(1, 1, &mut rng);
            let (action, logp) = sample_once(vec![mu], vec![ls], scale, xi.data().to_vec());
            let a = action.data()[0];
            assert!(a.abs() <= scale, "|{a}| > {scale}");
            assert!(logp.is_finite());
        }
    }

    #[test]
    fn log_density_integrates_to_one_in_1d() {
        // Trapezoid quadrature of exp(log p(a)) over the open interval
        // (-scale, scale); the density vanishes at the endpoints.
        let scale = 1.5;
        let (mu, sigma) = (0.4, 0.8);
        let n = 20_001;
        let h = 2.0 * scale / (n - 1) as f64;
        let mut total = 0.0;
        for i in 1..n - 1 {
            let a: f64 = -scale + i as f64 * h;
            let z = (a / scale).atanh();
            let xi = (z - mu) / sigma;
            let (_, logp) = sample_once(vec![mu], vec![sigma.ln()], scale, vec![xi]);
            total += logp.data()[0].exp() * h;
        }
        assert!(
            (total - 1.0).abs() < 1e-4,
            "density integrates to {total}, expected 1"
        );
    }

    #[test]
    fn log_density_matches_direct_change_of_variables() {
        let (scale, mu, sigma, xi) = (2.5_f64, -0.3_f64, 0.6_f64, 0.9_f64);
        let z = mu + sigma * xi;
        let gauss = -0.5 * xi * xi - sigma.ln() - HALF_LN_2PI;
        let jac = (1.0 - z.tanh().powi(2)).ln() + scale.ln();
        let expected = gauss - jac;
        let (_, logp) = sample_once(vec![mu], vec![sigma.ln()], scale, vec![xi]);
        assert!((logp.data()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn gradients_flow_into_mu_and_log_sigma() {
        let mut store = ParamStore::new();
        let mu_id = store.insert("mu", Tensor::from_vec(2, 1, vec![0.2, -0.5])).unwrap();
        let ls_id = store
            .insert("ls", Tensor::from_vec(2, 1, vec![-1.0, 0.3]))
            .unwrap();
        let mut tape = Tape::new();
        let ids = tape.bind(&store).unwrap();
        let xi = Tensor::from_vec(2, 1, vec![0.7, -1.1]);
        let s = reparam_sample_tanh(&mut tape, ids[mu_id.0], ids[ls_id.0], 2.0, xi).unwrap();
        let loss = tape.mean_all(s.log_density);
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get(mu_id).unwrap().is_finite());
        assert!(grads.get(ls_id).unwrap().is_finite());
        // the -log sigma term alone guarantees a nonzero log-sigma gradient
        assert!(grads.get(ls_id).unwrap().data().iter().any(|g| g.abs() > 1e-6));
    }
}
