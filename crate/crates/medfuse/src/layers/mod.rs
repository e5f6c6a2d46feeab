//! Differentiable layers with hand-written backward passes.
//!
//! Every layer follows the same shape: `forward` returns the output plus a
//! cache of the intermediates the backward pass needs, and `backward`
//! consumes that cache together with the upstream gradient, returning the
//! input gradient and per-parameter gradients. Each backward pass is checked
//! against central finite differences in the tests and by the `gradcheck`
//! module.

mod attention;
mod conv;
mod dense;
mod recurrent;

pub use attention::{
    attention, attention_backward, AttentionCache, AttentionPool, AttentionPoolCache,
    AttentionPoolGrads,
};
pub use conv::{
    global_pool, global_pool_backward, Conv2dCache, Conv2dGrads, Conv2dLayer, GlobalPoolCache,
    Pool2d, Pool2dCache, PoolKind,
};
pub use dense::{DenseCache, DenseGrads, DenseLayer, EmbeddingGrads, EmbeddingTable};
pub use recurrent::{BiLstm, BiLstmCache, BiLstmGrads, LstmCell, LstmGrads, LstmStepCache};

use crate::rng::Rng;
use crate::tensor::Tensor;

/// Glorot-uniform initialization: entries drawn from
/// `uniform(-s, s)` with `s = sqrt(6 / (fan_in + fan_out))`, in row-major
/// order from the given stream.
pub fn glorot_uniform(rng: &mut Rng, dims: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = dims.iter().product();
    let data = (0..n).map(|_| rng.uniform_symmetric(s)).collect();
    Tensor::from_vec(dims, data).expect("valid init dims")
}

/// Softmax backward for one probability vector `y` given upstream `dy`:
/// `dx_i = y_i * (dy_i - sum_j dy_j * y_j)`.
pub(crate) fn softmax_vec_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    let dot: f64 = y.iter().zip(dy).map(|(a, b)| a * b).sum();
    y.iter().zip(dy).map(|(&yi, &di)| yi * (di - dot)).collect()
}

#[cfg(test)]
pub(crate) mod testutil {
    //! Finite-difference helpers shared by the per-layer gradient tests.
    //! These only ever call `forward`, so they stay independent of the
    //! backward implementations they verify.

    use crate::rng::Rng;
    use crate::tensor::Tensor;

    pub const FD_EPS: f64 = 1e-5;
    pub const FD_TOL: f64 = 1e-4;

    pub fn rel_err(a: f64, n: f64) -> f64 {
        (a - n).abs() / f64::max(1e-8, a.abs() + n.abs())
    }

    /// Random tensor with entries in [-1, 1).
    pub fn rand_tensor(rng: &mut Rng, dims: &[usize]) -> Tensor {
        let n: usize = dims.iter().product();
        Tensor::from_vec(dims, (0..n).map(|_| rng.uniform_symmetric(1.0)).collect()).unwrap()
    }
}
