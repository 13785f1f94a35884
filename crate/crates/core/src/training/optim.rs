use crate::numerics::DenseMatrix;

/// First-order update rule for the encoder weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Optimizer {
    /// Plain full-batch gradient descent.
    Gd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Default for Optimizer {
    fn default() -> Self {
        Self::adam()
    }
}

pub(crate) struct OptimizerState {
    kind: Optimizer,
    lr: f64,
    step: i32,
    first: Vec<DenseMatrix>,
    second: Vec<DenseMatrix>,
}

impl OptimizerState {
    pub fn new(kind: Optimizer, lr: f64, shapes: impl Iterator<Item = (usize, usize)>) -> Self {
        let (first, second) = match kind {
            Optimizer::Gd => (Vec::new(), Vec::new()),
            Optimizer::Adam { .. } => shapes
                .map(|(r, c)| (DenseMatrix::zeros(r, c), DenseMatrix::zeros(r, c)))
                .unzip(),
        };
        Self {
            kind,
            lr,
            step: 0,
            first,
            second,
        }
    }

    pub fn apply(&mut self, weights: &mut [DenseMatrix], grads: &[DenseMatrix]) {
        self.step += 1;
        match self.kind {
            Optimizer::Gd => {
                for (w, g) in weights.iter_mut().zip(grads) {
                    w.as_mut_slice()
                        .iter_mut()
                        .zip(g.as_slice())
                        .for_each(|(w, g)| *w -= self.lr * g);
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let c1 = 1.0 - beta1.powi(self.step);
                let c2 = 1.0 - beta2.powi(self.step);
                for l in 0..weights.len() {
                    let w = weights[l].as_mut_slice();
                    let g = grads[l].as_slice();
                    let m = self.first[l].as_mut_slice();
                    let v = self.second[l].as_mut_slice();
                    for i in 0..w.len() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        w[i] -= self.lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
    }
}
