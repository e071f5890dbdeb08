use super::{LossBreakdown, WindowSample};
use crate::error::{Error, Result};
use crate::model::{build_forward, ForwardNodes, ModelParams};
use crate::numcore::{backward, forward, Bindings, CompGraph, DenseArray, NodeId};

/// The batched training objective as a differentiable graph.
///
/// Built once per batch size; the returned total is the batch mean of
/// `|x_hat + delta_hat - x|^2 + |delta_hat - delta|^2 + kl_weight * KL`,
/// with the KL term written as `0.5 * sum(mu^2 + exp(v) - v - 1)` in terms of
/// the clamped log-variance `v`.
#[derive(Debug, Clone)]
pub struct ObjectiveGraph {
    graph: CompGraph,
    nodes: ForwardNodes,
    target: NodeId,
    target_delta: NodeId,
    recon: NodeId,
    delta: NodeId,
    kl: NodeId,
    total: NodeId,
    batch: usize,
    latent: usize,
}

impl ObjectiveGraph {
    pub fn new(params: &ModelParams, batch: usize, kl_weight: f64) -> Self {
        let mut g = CompGraph::new();
        let nodes = build_forward(&mut g, params);
        let target = g.input("target");
        let target_delta = g.input("target_delta");

        let recon_err = g.sub(nodes.combined, target);
        let recon = g.sum_squares(recon_err);
        let delta_err = g.sub(nodes.delta_hat, target_delta);
        let delta = g.sum_squares(delta_err);

        let latent = params.latent_dim();
        let mu_sq = g.sum_squares(nodes.mu);
        let var = g.exp(nodes.logvar);
        let var_sum = g.sum(var);
        let lv_sum = g.sum(nodes.logvar);
        let a = g.add(mu_sq, var_sum);
        let b = g.sub(a, lv_sum);
        let kl = g.affine(b, 0.5, -0.5 * (batch * latent) as f64);

        let fit = g.add(recon, delta);
        let weighted_kl = g.scale(kl, kl_weight);
        let sum = g.add(fit, weighted_kl);
        let total = g.scale(sum, 1.0 / batch as f64);

        Self {
            graph: g,
            nodes,
            target,
            target_delta,
            recon,
            delta,
            kl,
            total,
            batch,
            latent,
        }
    }

    pub fn batch_size(&self) -> usize {
        self.batch
    }

    pub fn graph(&self) -> &CompGraph {
        &self.graph
    }

    pub fn total_node(&self) -> NodeId {
        self.total
    }

    fn stack(rows: impl Iterator<Item = Vec<f64>>, n_rows: usize) -> Result<DenseArray> {
        let mut data = Vec::new();
        for r in rows {
            data.extend(r);
        }
        let cols = if n_rows == 0 { 0 } else { data.len() / n_rows };
        DenseArray::matrix(n_rows, cols, data)
    }

    /// Batch-mean loss components and gradients of the total with respect to
    /// every parameter tensor, in [`ModelParams::tensors`] order.
    pub fn gradient(
        &self,
        params: &ModelParams,
        batch: &[&WindowSample],
        epsilon: &[f64],
    ) -> Result<(LossBreakdown, Vec<DenseArray>)> {
        if batch.len() != self.batch {
            return Err(Error::shape(
                "ObjectiveGraph",
                format!("graph built for batch {}, got {}", self.batch, batch.len()),
            ));
        }
        if epsilon.len() != self.batch * self.latent {
            return Err(Error::shape(
                "ObjectiveGraph epsilon",
                format!("expected {} draws, got {}", self.batch * self.latent, epsilon.len()),
            ));
        }
        let b = self.batch;
        let window = Self::stack(batch.iter().map(|s| s.input.clone()), b)?;
        let target = Self::stack(batch.iter().map(|s| s.target.clone()), b)?;
        let target_delta = Self::stack(batch.iter().map(|s| s.target_delta.clone()), b)?;
        let eps = DenseArray::matrix(b, self.latent, epsilon.to_vec())?;

        let mut bind = Bindings::new();
        self.nodes.params.bind(&mut bind, params);
        bind.bind(self.nodes.window, &window)
            .bind(self.nodes.epsilon, &eps)
            .bind(self.target, &target)
            .bind(self.target_delta, &target_delta);
        let values = forward(&self.graph, &bind)?;
        let mut grads = backward(&self.graph, &values, self.total)?;
        let scale = 1.0 / b as f64;
        let parts = LossBreakdown {
            recon: values.scalar(self.recon) * scale,
            delta: values.scalar(self.delta) * scale,
            kl: values.scalar(self.kl) * scale,
            total: values.scalar(self.total),
        };
        let tensors = self
            .nodes
            .params
            .ordered()
            .into_iter()
            .map(|leaf| grads.take(leaf).expect("every parameter leaf has a gradient"))
            .collect();
        Ok((parts, tensors))
    }
}
