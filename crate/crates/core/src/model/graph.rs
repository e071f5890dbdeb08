use super::{Layer, ModelParams};
use crate::numcore::{Bindings, CompGraph, NodeId};

/// Weight and bias leaves for every layer, in canonical parameter order.
#[derive(Debug, Clone)]
pub struct ParamLeaves {
    pub dlc: Vec<(NodeId, NodeId)>,
    pub encoder: Vec<(NodeId, NodeId)>,
    pub mu_head: (NodeId, NodeId),
    pub logvar_head: (NodeId, NodeId),
    pub decoder: Vec<(NodeId, NodeId)>,
}

impl ParamLeaves {
    /// Leaves in the same order as [`ModelParams::tensors`].
    pub fn ordered(&self) -> Vec<NodeId> {
        self.dlc
            .iter()
            .chain(&self.encoder)
            .chain([&self.mu_head, &self.logvar_head])
            .chain(&self.decoder)
            .flat_map(|&(w, b)| [w, b])
            .collect()
    }

    pub fn bind<'a>(&self, bindings: &mut Bindings<'a>, params: &'a ModelParams) {
        for (leaf, tensor) in self.ordered().into_iter().zip(params.tensors()) {
            bindings.bind(leaf, tensor);
        }
    }
}

/// Nodes of the batched model forward pass.
#[derive(Debug, Clone)]
pub struct ForwardNodes {
    pub params: ParamLeaves,
    /// `B x dN` windows.
    pub window: NodeId,
    /// `B x latent_dim` standard-normal draws (zeros for the mean path).
    pub epsilon: NodeId,
    pub x_hat: NodeId,
    pub delta_hat: NodeId,
    pub combined: NodeId,
    pub mu: NodeId,
    /// Clamped log-variance.
    pub logvar: NodeId,
    pub sigma: NodeId,
    pub z: NodeId,
}

fn mlp_nodes(
    g: &mut CompGraph,
    prefix: &str,
    layers: &[Layer],
    input: NodeId,
    linear_out: bool,
) -> (NodeId, Vec<(NodeId, NodeId)>) {
    let mut h = input;
    let mut leaves = Vec::with_capacity(layers.len());
    for (i, _) in layers.iter().enumerate() {
        let w = g.param(format!("{prefix}.{i}.weight"));
        let b = g.param(format!("{prefix}.{i}.bias"));
        h = g.linear(h, w, b);
        if !(linear_out && i + 1 == layers.len()) {
            h = g.tanh(h);
        }
        leaves.push((w, b));
    }
    (h, leaves)
}

/// Append the batched model forward pass to `g`, using `params` only for its
/// layer layout.
pub fn build_forward(g: &mut CompGraph, params: &ModelParams) -> ForwardNodes {
    let window = g.input("window");
    let epsilon = g.input("epsilon");
    let (x_hat, dlc) = mlp_nodes(g, "dlc", &params.dlc, window, true);
    let (r, encoder) = mlp_nodes(g, "encoder", &params.encoder, window, false);
    let mu_w = g.param("mu_head.weight");
    let mu_b = g.param("mu_head.bias");
    let mu = g.linear(r, mu_w, mu_b);
    let lv_w = g.param("logvar_head.weight");
    let lv_b = g.param("logvar_head.bias");
    let raw = g.linear(r, lv_w, lv_b);
    let (lo, hi) = params.logvar_clamp;
    let logvar = g.clamp(raw, lo, hi);
    let half = g.scale(logvar, 0.5);
    let sigma = g.exp(half);
    let noise = g.mul(sigma, epsilon);
    let z = g.add(mu, noise);
    let (delta_hat, decoder) = mlp_nodes(g, "decoder", &params.decoder, z, true);
    let combined = g.add(x_hat, delta_hat);
    ForwardNodes {
        params: ParamLeaves {
            dlc,
            encoder,
            mu_head: (mu_w, mu_b),
            logvar_head: (lv_w, lv_b),
            decoder,
        },
        window,
        epsilon,
        x_hat,
        delta_hat,
        combined,
        mu,
        logvar,
        sigma,
        z,
    }
}
