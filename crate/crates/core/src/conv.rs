//! Graph convolution over the anchor graph in `O(n)` per layer.
//!
//! A sample layer computes `φ(A H W)` with `A = B Δ⁻¹ Bᵀ`. Evaluated right to
//! left as `B · ((Δ⁻¹ · (Bᵀ H)) · W)`, every product involves either the
//! k-sparse `B` or an `m`-row matrix, so `A` never exists in memory.
//!
//! Anchors have no edges to the sample graph, so they get their own branch
//! with the same weights and the anchor graph `A_t = Δ⁻¹ Bᵀ B`, evaluated as
//! `Δ⁻¹ · (Bᵀ · (B · H))`.

use crate::anchor_graph::AnchorGraph;
use crate::error::{invalid, Error, Result};
use crate::numerics::{DenseMatrix, SeededRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Linear => v,
        }
    }

    #[inline]
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

/// Encoder weights shared by the sample and anchor branches.
///
/// Hidden layers use ReLU and the output layer is linear.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    layers: Vec<DenseMatrix>,
    activations: Vec<Activation>,
}

impl EncoderParams {
    pub fn new(layers: Vec<DenseMatrix>) -> Result<Self> {
        if layers.is_empty() {
            return Err(invalid("encoder needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].cols() != pair[1].rows() {
                return Err(Error::DimensionMismatch {
                    op: "encoder layer chain",
                    left: pair[0].shape(),
                    right: pair[1].shape(),
                });
            }
        }
        let last = layers.len() - 1;
        let activations = (0..layers.len())
            .map(|l| if l == last { Activation::Linear } else { Activation::Relu })
            .collect();
        Ok(Self { layers, activations })
    }

    pub fn layers(&self) -> &[DenseMatrix] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [DenseMatrix] {
        &mut self.layers
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].cols()
    }

    /// `[d_in, d_1, ..., d_L]`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|w| w.cols()))
            .collect()
    }
}

/// Glorot-uniform weights for the layer sizes `[d_in, d_1, ..., d_L]`.
pub fn init_params(layer_dims: &[usize], rng: &mut SeededRng) -> Result<EncoderParams> {
    if layer_dims.len() < 2 {
        return Err(invalid("layer_dims needs an input size and at least one layer size"));
    }
    if layer_dims.contains(&0) {
        return Err(invalid("layer sizes must be positive"));
    }
    let layers = layer_dims
        .windows(2)
        .map(|w| {
            let bound = (6.0 / (w[0] + w[1]) as f64).sqrt();
            DenseMatrix::from_fn(w[0], w[1], |_, _| rng.uniform_range(-bound, bound))
        })
        .collect();
    EncoderParams::new(layers)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Samples,
    Anchors,
}

/// Intermediates kept from one layer of a forward pass.
#[derive(Clone, Debug)]
pub struct LayerCache {
    /// `m x d_in`: `Δ⁻¹ Bᵀ H` for samples, `A_t H` for anchors.
    pub(crate) aggregated: DenseMatrix,
    pub(crate) pre_activation: DenseMatrix,
}

/// Everything backpropagation needs from a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub(crate) branch: Branch,
    pub(crate) layers: Vec<LayerCache>,
    pub(crate) output: DenseMatrix,
}

impl ForwardCache {
    pub fn branch(&self) -> Branch {
        self.branch
    }

    pub fn output(&self) -> &DenseMatrix {
        &self.output
    }

    pub fn pre_activations(&self) -> impl Iterator<Item = &DenseMatrix> {
        self.layers.iter().map(|l| &l.pre_activation)
    }
}

fn check_input(op: &'static str, rows: usize, x: &DenseMatrix, params: &EncoderParams) -> Result<()> {
    if x.rows() != rows || x.cols() != params.input_dim() {
        return Err(Error::DimensionMismatch {
            op,
            left: (rows, params.input_dim()),
            right: x.shape(),
        });
    }
    Ok(())
}

/// Sample-branch encoder `Z = φ_L(A ⋯ φ_1(A X W_1) ⋯ W_L)`.
pub fn conv_forward_samples(
    g: &AnchorGraph,
    x: &DenseMatrix,
    params: &EncoderParams,
) -> Result<(DenseMatrix, ForwardCache)> {
    forward(g, x, params, Branch::Samples, true).map(|(z, c)| {
        let cache = c.expect("cache requested");
        (z, cache)
    })
}

/// Anchor-branch encoder `Z_t = φ_L(A_t ⋯ φ_1(A_t C W_1) ⋯ W_L)`.
pub fn conv_forward_anchors(
    g: &AnchorGraph,
    c: &DenseMatrix,
    params: &EncoderParams,
) -> Result<(DenseMatrix, ForwardCache)> {
    forward(g, c, params, Branch::Anchors, true).map(|(z, c)| {
        let cache = c.expect("cache requested");
        (z, cache)
    })
}

/// Inference-mode sample embedding; no intermediates retained.
pub fn encode_samples(g: &AnchorGraph, x: &DenseMatrix, params: &EncoderParams) -> Result<DenseMatrix> {
    forward(g, x, params, Branch::Samples, false).map(|(z, _)| z)
}

/// Inference-mode anchor embedding.
pub fn encode_anchors(g: &AnchorGraph, c: &DenseMatrix, params: &EncoderParams) -> Result<DenseMatrix> {
    forward(g, c, params, Branch::Anchors, false).map(|(z, _)| z)
}

fn forward(
    g: &AnchorGraph,
    input: &DenseMatrix,
    params: &EncoderParams,
    branch: Branch,
    keep_cache: bool,
) -> Result<(DenseMatrix, Option<ForwardCache>)> {
    let rows = match branch {
        Branch::Samples => g.n_samples(),
        Branch::Anchors => g.n_anchors(),
    };
    let op = match branch {
        Branch::Samples => "conv_forward_samples",
        Branch::Anchors => "conv_forward_anchors",
    };
    check_input(op, rows, input, params)?;
    let inv = g.inverse_degrees()?;
    let b = g.b();

    let mut layers = Vec::new();
    let mut h = input.clone();
    for (w, act) in params.layers.iter().zip(&params.activations) {
        let (aggregated, pre) = match branch {
            Branch::Samples => {
                // T1 = Bᵀ H, T2 = Δ⁻¹ T1, T3 = T2 W, pre = B T3
                let mut t2 = b.t_mul_dense(&h)?;
                t2.scale_rows_in_place(&inv);
                let t3 = t2.matmul(w)?;
                (t2, b.mul_dense(&t3)?)
            }
            Branch::Anchors => {
                let mut s = b.t_mul_dense(&b.mul_dense(&h)?)?;
                s.scale_rows_in_place(&inv);
                let pre = s.matmul(w)?;
                (s, pre)
            }
        };
        h = pre.map(|v| act.apply(v));
        if keep_cache {
            layers.push(LayerCache {
                aggregated,
                pre_activation: pre,
            });
        }
    }
    let cache = keep_cache.then(|| ForwardCache {
        branch,
        layers,
        output: h.clone(),
    });
    Ok((h, cache))
}

/// Backpropagates `d_out = ∂L/∂(branch output)` into weight gradients, which
/// are accumulated into `grads` (one matrix per layer).
pub(crate) fn backprop_branch(
    g: &AnchorGraph,
    cache: &ForwardCache,
    params: &EncoderParams,
    d_out: &DenseMatrix,
    grads: &mut [DenseMatrix],
) -> Result<()> {
    if cache.layers.len() != params.layers.len() || grads.len() != params.layers.len() {
        return Err(Error::StaleCache(format!(
            "cache has {} layers, params have {}",
            cache.layers.len(),
            params.layers.len()
        )));
    }
    if d_out.shape() != cache.output.shape() {
        return Err(Error::StaleCache(format!(
            "upstream gradient is {}x{} but the cached output is {}x{}",
            d_out.rows(),
            d_out.cols(),
            cache.output.rows(),
            cache.output.cols()
        )));
    }
    let inv = g.inverse_degrees()?;
    let b = g.b();
    let mut grad = d_out.clone();

    for l in (0..params.layers.len()).rev() {
        let w = &params.layers[l];
        let layer = &cache.layers[l];
        if layer.aggregated.cols() != w.rows() || layer.pre_activation.shape() != grad.shape() {
            return Err(Error::StaleCache(format!("layer {l} cache does not match the weights")));
        }
        let act = params.activations[l];
        let mut g_pre = grad;
        for (gv, &p) in g_pre.as_mut_slice().iter_mut().zip(layer.pre_activation.as_slice()) {
            *gv *= act.derivative(p);
        }
        match cache.branch {
            Branch::Samples => {
                // pre = B T2 W: ∂W = T2ᵀ (Bᵀ G), ∂H = B Δ⁻¹ (Bᵀ G) Wᵀ
                let u = b.t_mul_dense(&g_pre)?;
                grads[l].add_assign(&layer.aggregated.t_matmul(&u)?)?;
                if l > 0 {
                    let mut t = u.matmul_t(w)?;
                    t.scale_rows_in_place(&inv);
                    grad = b.mul_dense(&t)?;
                } else {
                    break;
                }
            }
            Branch::Anchors => {
                // pre = S W with S = A_t H: ∂W = Sᵀ G, ∂H = Bᵀ B Δ⁻¹ G Wᵀ
                grads[l].add_assign(&layer.aggregated.t_matmul(&g_pre)?)?;
                if l > 0 {
                    let mut t = g_pre.matmul_t(w)?;
                    t.scale_rows_in_place(&inv);
                    grad = b.t_mul_dense(&b.mul_dense(&t)?)?;
                } else {
                    break;
                }
            }
        }
    }
    Ok(())
}
