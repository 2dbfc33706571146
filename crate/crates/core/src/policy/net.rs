use super::batch::TeamBatch;
use super::variant::ModelVariant;
use crate::autodiff::{
    reparam_sample_tanh, squash_mean, standard_normal_like, NodeId, ParamId, ParamStore, Tape,
    Tensor, TensorError,
};
use crate::dynamics::OBS_DIM;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ACT_DIM: usize = 2;
/// Critic input width: observation plus action.
pub const CRITIC_IN: usize = OBS_DIM + ACT_DIM;
/// Default peak thrust per axis, newtons.
pub const F_MAX_DEFAULT: f64 = 2.0;
/// Decoder hidden widths shared by every variant.
const DECODER_WIDTHS: [usize; 2] = [64, 16];

/// One graph-convolution layer on the tape:
/// `relu(H Theta1^T + [sum_j h_j || sum_j r_ij] Theta2^T + bias)`.
///
/// With `relpos` off the aggregate is the plain neighbor feature sum.
/// `relu` off leaves the output linear (used by output heads and tests).
pub fn graph_conv(
    tape: &mut Tape,
    h: NodeId,
    theta1: NodeId,
    theta2: NodeId,
    bias: Option<NodeId>,
    batch: &TeamBatch,
    relpos: bool,
    relu: bool,
) -> Result<NodeId, TensorError> {
    let own = tape.matmul_nt(h, theta1)?;
    let agg = tape.neighbor_agg(h, batch.neigh().clone())?;
    let message = if relpos {
        let rel = tape.constant(batch.relpos().clone());
        let cat = tape.concat_cols(agg, rel)?;
        tape.matmul_nt(cat, theta2)?
    } else {
        tape.matmul_nt(agg, theta2)?
    };
    let mut out = tape.add(own, message)?;
    if let Some(b) = bias {
        out = tape.add_row(out, b)?;
    }
    Ok(if relu { tape.relu(out) } else { out })
}

#[derive(Debug, Clone, Copy)]
struct GcIds {
    theta1: ParamId,
    theta2: ParamId,
    bias: Option<ParamId>,
}

#[derive(Debug, Clone, Copy)]
struct DenseIds {
    w: ParamId,
    b: Option<ParamId>,
}

#[derive(Debug, Clone)]
enum Trunk {
    Graph { layers: Vec<GcIds>, relpos: bool },
    Dense(Vec<DenseIds>),
}

/// Trunk plus decoder for one network head; parameters live in a shared
/// [`ParamStore`] under `prefix`.
#[derive(Debug, Clone)]
struct Net {
    trunk: Trunk,
    decoder: Vec<DenseIds>,
}

fn xavier(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor::from_vec(rows, cols, data)
}

impl Net {
    fn build(
        store: &mut ParamStore,
        prefix: &str,
        in_dim: usize,
        out_dim: usize,
        variant: ModelVariant,
        bias: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Net, TensorError> {
        assert!(variant.is_learned(), "no network for {variant}");
        let widths = variant.trunk_widths();
        let dense_layer = |store: &mut ParamStore,
                               name: String,
                               rows: usize,
                               cols: usize,
                               rng: &mut ChaCha8Rng|
         -> Result<DenseIds, TensorError> {
            let w = store.insert(&format!("{name}.w"), xavier(rows, cols, rng))?;
            let b = if bias {
                Some(store.insert(&format!("{name}.b"), Tensor::zeros(1, rows))?)
            } else {
                None
            };
            Ok(DenseIds { w, b })
        };

        let mut c_in = in_dim;
        let trunk = if variant.uses_graph() {
            let relpos = variant == ModelVariant::Full;
            let mut layers = Vec::new();
            for (l, &c_out) in widths.iter().enumerate() {
                let name = format!("{prefix}gc{}", l + 1);
                let agg_in = if relpos { c_in + 2 } else { c_in };
                let theta1 = store.insert(&format!("{name}.theta1"), xavier(c_out, c_in, rng))?;
                let theta2 = store.insert(&format!("{name}.theta2"), xavier(c_out, agg_in, rng))?;
                let b = if bias {
                    Some(store.insert(&format!("{name}.bias"), Tensor::zeros(1, c_out))?)
                } else {
                    None
                };
                layers.push(GcIds {
                    theta1,
                    theta2,
                    bias: b,
                });
                c_in = c_out;
            }
            Trunk::Graph { layers, relpos }
        } else {
            let mut layers = Vec::new();
            for (l, &c_out) in widths.iter().enumerate() {
                layers.push(dense_layer(store, format!("{prefix}mlp{}", l + 1), c_out, c_in, rng)?);
                c_in = c_out;
            }
            Trunk::Dense(layers)
        };

        let mut decoder = Vec::new();
        for (l, &c_out) in DECODER_WIDTHS.iter().enumerate() {
            decoder.push(dense_layer(store, format!("{prefix}dec{}", l + 1), c_out, c_in, rng)?);
            c_in = c_out;
        }
        decoder.push(dense_layer(store, format!("{prefix}head"), out_dim, c_in, rng)?);
        Ok(Net { trunk, decoder })
    }

    fn forward(
        &self,
        tape: &mut Tape,
        leaves: &[NodeId],
        input: NodeId,
        batch: &TeamBatch,
    ) -> Result<NodeId, TensorError> {
        let leaf = |id: ParamId| leaves[id.index()];
        let mut h = input;
        match &self.trunk {
            Trunk::Graph { layers, relpos } => {
                for l in layers {
                    h = graph_conv(
                        tape,
                        h,
                        leaf(l.theta1),
                        leaf(l.theta2),
                        l.bias.map(leaf),
                        batch,
                        *relpos,
                        true,
                    )?;
                }
            }
            Trunk::Dense(layers) => {
                for l in layers {
                    h = dense(tape, h, leaf(l.w), l.b.map(leaf), true)?;
                }
            }
        }
        let last = self.decoder.len() - 1;
        for (i, l) in self.decoder.iter().enumerate() {
            h = dense(tape, h, leaf(l.w), l.b.map(leaf), i < last)?;
        }
        Ok(h)
    }
}

/// `relu(x W^T + b)`, the weight stored out x in.
fn dense(
    tape: &mut Tape,
    x: NodeId,
    w: NodeId,
    b: Option<NodeId>,
    relu: bool,
) -> Result<NodeId, TensorError> {
    let mut h = tape.matmul_nt(x, w)?;
    if let Some(b) = b {
        h = tape.add_row(h, b)?;
    }
    Ok(if relu { tape.relu(h) } else { h })
}

/// Stochastic policy head over one or more stacked teams.
#[derive(Debug, Clone)]
pub struct Actor {
    pub variant: ModelVariant,
    pub store: ParamStore,
    net: Option<Net>,
    pub f_max: f64,
}

impl Actor {
    pub fn new(variant: ModelVariant, f_max: f64, seed: u64) -> Actor {
        Actor::with_bias(variant, f_max, seed, true)
    }

    pub fn with_bias(variant: ModelVariant, f_max: f64, seed: u64, bias: bool) -> Actor {
        let mut store = ParamStore::new();
        let net = if variant.is_learned() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Some(
                Net::build(&mut store, "", OBS_DIM, 2 * ACT_DIM, variant, bias, &mut rng)
                    .expect("fresh store accepts the layer names"),
            )
        } else {
            None
        };
        Actor {
            variant,
            store,
            net,
            f_max,
        }
    }

    /// Action scale applied after tanh squashing.
    pub fn scale(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.f_max
    }

    /// Mean and log-std heads, each rows x 2.
    pub fn forward(
        &self,
        tape: &mut Tape,
        leaves: &[NodeId],
        obs: NodeId,
        batch: &TeamBatch,
    ) -> Result<(NodeId, NodeId), TensorError> {
        let net = self.net.as_ref().expect("tracking_only has no actor network");
        let out = net.forward(tape, leaves, obs, batch)?;
        let mu = tape.slice_cols(out, 0, ACT_DIM)?;
        let log_sigma = tape.slice_cols(out, ACT_DIM, 2 * ACT_DIM)?;
        Ok((mu, log_sigma))
    }

    /// Sample actions for environment stepping (no gradients retained).
    /// Returns the rows x 2 actions and the per-row log densities.
    pub fn act(
        &self,
        batch: &TeamBatch,
        obs: &Tensor,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Tensor, Tensor), TensorError> {
        let rows = obs.rows();
        if !self.variant.is_learned() {
            return Ok((Tensor::zeros(rows, ACT_DIM), Tensor::zeros(rows, 1)));
        }
        let mut tape = Tape::new();
        let leaves = tape.freeze(&self.store);
        let obs_node = tape.constant(obs.clone());
        let (mu, log_sigma) = self.forward(&mut tape, &leaves, obs_node, batch)?;
        let xi = standard_normal_like(rows, ACT_DIM, rng);
        let sample = reparam_sample_tanh(&mut tape, mu, log_sigma, self.scale(), xi)?;
        Ok((
            tape.value(sample.action).clone(),
            tape.value(sample.log_density).clone(),
        ))
    }

    /// Deterministic evaluation head: `scale * tanh(mu)`.
    pub fn act_deterministic(
        &self,
        batch: &TeamBatch,
        obs: &Tensor,
    ) -> Result<Tensor, TensorError> {
        if !self.variant.is_learned() {
            return Ok(Tensor::zeros(obs.rows(), ACT_DIM));
        }
        let mut tape = Tape::new();
        let leaves = tape.freeze(&self.store);
        let obs_node = tape.constant(obs.clone());
        let (mu, _) = self.forward(&mut tape, &leaves, obs_node, batch)?;
        Ok(squash_mean(tape.value(mu), self.scale()))
    }
}

/// Twin Q networks sharing one parameter store (`q1.*` / `q2.*` prefixes)
/// so a single optimizer step updates both.
#[derive(Debug, Clone)]
pub struct TwinCritic {
    pub variant: ModelVariant,
    pub store: ParamStore,
    q1: Net,
    q2: Net,
}

impl TwinCritic {
    pub fn new(variant: ModelVariant, seed: u64) -> TwinCritic {
        TwinCritic::with_bias(variant, seed, true)
    }

    pub fn with_bias(variant: ModelVariant, seed: u64, bias: bool) -> TwinCritic {
        assert!(variant.is_learned(), "tracking_only has no critic");
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q1 = Net::build(&mut store, "q1.", CRITIC_IN, 1, variant, bias, &mut rng)
            .expect("fresh store accepts the layer names");
        let q2 = Net::build(&mut store, "q2.", CRITIC_IN, 1, variant, bias, &mut rng)
            .expect("fresh store accepts the layer names");
        TwinCritic {
            variant,
            store,
            q1,
            q2,
        }
    }

    /// Both Q heads over obs || action rows; each result is rows x 1.
    pub fn forward_pair(
        &self,
        tape: &mut Tape,
        leaves: &[NodeId],
        obs: NodeId,
        actions: NodeId,
        batch: &TeamBatch,
    ) -> Result<(NodeId, NodeId), TensorError> {
        let input = tape.concat_cols(obs, actions)?;
        let a = self.q1.forward(tape, leaves, input, batch)?;
        let b = self.q2.forward(tape, leaves, input, batch)?;
        Ok((a, b))
    }

    /// Q values without gradient tracking (target computation).
    pub fn values(
        &self,
        batch: &TeamBatch,
        obs: &Tensor,
        actions: &Tensor,
    ) -> Result<(Tensor, Tensor), TensorError> {
        let mut tape = Tape::new();
        let leaves = tape.freeze(&self.store);
        let obs_node = tape.constant(obs.clone());
        let act_node = tape.constant(actions.clone());
        let (a, b) = self.forward_pair(&mut tape, &leaves, obs_node, act_node, batch)?;
        Ok((tape.value(a).clone(), tape.value(b).clone()))
    }
}
