//! Reconstruction decoder, cross-entropy loss, analytic gradients and the
//! full-batch training loop for the siamese encoder.
//!
//! The decoder turns sample and anchor embeddings back into connectivity
//! distributions with a softmax over negative squared distances. The loss is
//! the cross-entropy between the fitted `p` and the reconstruction `q`, summed
//! (not averaged) over samples. Gradients flow through both encoder branches
//! and are summed into the shared weights.

mod decoder;
mod optim;

pub use decoder::{decode, loss, LossValue, Q_FLOOR};
pub use optim::Optimizer;

use crate::anchor_graph::AnchorGraph;
use crate::conv::{self, backprop_branch, Branch, EncoderParams, ForwardCache};
use crate::error::{invalid, Error, Result};
use crate::numerics::DenseMatrix;

use decoder::{distance_gradient, embedding_gradients, loss_from_reconstruction, reconstruct};
use optim::OptimizerState;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub inner_epochs: usize,
    /// Step size. Zero is allowed and leaves the weights untouched.
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    /// Rescale the gradient to at most this global L2 norm.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            inner_epochs: 200,
            learning_rate: 1e-3,
            optimizer: Optimizer::default(),
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.inner_epochs == 0 {
            return Err(invalid("inner_epochs must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid(format!("learning rate {} is not valid", self.learning_rate)));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(invalid("grad_clip must be positive"));
            }
        }
        Ok(())
    }
}

/// Loss at the start of every epoch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossTrace {
    pub values: Vec<f64>,
}

impl LossTrace {
    pub fn first(&self) -> Option<f64> {
        self.values.first().copied()
    }

    pub fn last(&self) -> Option<f64> {
        self.values.last().copied()
    }
}

/// One gradient matrix per encoder layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<DenseMatrix>,
}

impl Gradients {
    fn zeros_like(params: &EncoderParams) -> Self {
        Self {
            layers: params
                .layers()
                .iter()
                .map(|w| DenseMatrix::zeros(w.rows(), w.cols()))
                .collect(),
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|g| g.as_slice().iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(DenseMatrix::is_finite)
    }
}

/// Gradient of the reconstruction loss with respect to every weight, given the
/// caches of matched forward passes over samples and anchors.
pub fn backward(
    g: &AnchorGraph,
    samples: &ForwardCache,
    anchors: &ForwardCache,
    params: &EncoderParams,
    p: &AnchorGraph,
    q: &DenseMatrix,
) -> Result<Gradients> {
    let (dz, dt) = upstream_gradients(samples, anchors, p, q)?;
    branch_gradients(g, samples, anchors, params, Some(&dz), Some(&dt))
}

/// `∂L/∂Z` and `∂L/∂Z_t`.
pub fn upstream_gradients(
    samples: &ForwardCache,
    anchors: &ForwardCache,
    p: &AnchorGraph,
    q: &DenseMatrix,
) -> Result<(DenseMatrix, DenseMatrix)> {
    if samples.branch() != Branch::Samples || anchors.branch() != Branch::Anchors {
        return Err(Error::StaleCache("caches passed for the wrong branches".into()));
    }
    let (n, m) = (samples.output().rows(), anchors.output().rows());
    if q.shape() != (n, m) || (p.n_samples(), p.n_anchors()) != (n, m) {
        return Err(Error::StaleCache(format!(
            "forward passes produced {n} samples and {m} anchors, q is {}x{}, p is {}x{}",
            q.rows(),
            q.cols(),
            p.n_samples(),
            p.n_anchors()
        )));
    }
    let grad_d = distance_gradient(p.b(), q);
    embedding_gradients(&grad_d, samples.output(), anchors.output())
}

/// Backpropagates the given upstream gradients; a `None` branch contributes
/// nothing. The shared weights receive the sum of both branches.
pub fn branch_gradients(
    g: &AnchorGraph,
    samples: &ForwardCache,
    anchors: &ForwardCache,
    params: &EncoderParams,
    d_samples: Option<&DenseMatrix>,
    d_anchors: Option<&DenseMatrix>,
) -> Result<Gradients> {
    let mut grads = Gradients::zeros_like(params);
    if let Some(dz) = d_samples {
        backprop_branch(g, samples, params, dz, &mut grads.layers)?;
    }
    if let Some(dt) = d_anchors {
        backprop_branch(g, anchors, params, dt, &mut grads.layers)?;
    }
    Ok(grads)
}

/// Reconstruction loss of the encoder on `(x, c)` with `g` as both the
/// convolution graph and the target.
pub fn reconstruction_loss(
    g: &AnchorGraph,
    x: &DenseMatrix,
    c: &DenseMatrix,
    params: &EncoderParams,
) -> Result<f64> {
    let z = conv::encode_samples(g, x, params)?;
    let z_t = conv::encode_anchors(g, c, params)?;
    let r = reconstruct(&z, &z_t)?;
    Ok(loss_from_reconstruction(g.b(), &r))
}

/// Loss and gradients at the current weights.
pub fn loss_and_gradients(
    g: &AnchorGraph,
    x: &DenseMatrix,
    c: &DenseMatrix,
    params: &EncoderParams,
) -> Result<(f64, Gradients)> {
    let (z, sc) = conv::conv_forward_samples(g, x, params)?;
    let (z_t, ac) = conv::conv_forward_anchors(g, c, params)?;
    let r = reconstruct(&z, &z_t)?;
    let value = loss_from_reconstruction(g.b(), &r);
    let grads = backward(g, &sc, &ac, params, g, &r.q)?;
    Ok((value, grads))
}

/// Full-batch training of the shared encoder weights for
/// `cfg.inner_epochs` steps. The trace holds the loss before each step.
pub fn train(
    g: &AnchorGraph,
    x: &DenseMatrix,
    c: &DenseMatrix,
    params: &EncoderParams,
    cfg: &TrainConfig,
) -> Result<(EncoderParams, LossTrace)> {
    cfg.validate()?;
    let mut params = params.clone();
    let mut state = OptimizerState::new(
        cfg.optimizer,
        cfg.learning_rate,
        params.layers().iter().map(|w| w.shape()),
    );
    let mut trace = LossTrace::default();
    for epoch in 0..cfg.inner_epochs {
        let (value, mut grads) = loss_and_gradients(g, x, c, &params)?;
        if !value.is_finite() || !grads.is_finite() {
            return Err(Error::Diverged { epoch, loss: value });
        }
        trace.values.push(value);
        if let Some(max_norm) = cfg.grad_clip {
            let norm = grads.global_norm();
            if norm > max_norm {
                let s = max_norm / norm;
                grads.layers.iter_mut().for_each(|g| g.scale_in_place(s));
            }
        }
        if cfg.learning_rate > 0.0 {
            state.apply(params.layers_mut(), &grads.layers);
        }
    }
    Ok((params, trace))
}
