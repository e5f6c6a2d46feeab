//! Fully connected layer and embedding table.

use crate::error::{Error, Result};
use crate::tensor::{outer, Tensor, Unary};

/// Affine map with optional element-wise activation: `y = act(W x + b)`.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    /// `[out, in]`
    pub weight: Tensor,
    /// `[out]`
    pub bias: Tensor,
    pub activation: Option<Unary>,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    x: Tensor,
    pre: Tensor,
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub d_weight: Tensor,
    pub d_bias: Tensor,
}

impl DenseLayer {
    pub fn new(weight: Tensor, bias: Tensor, activation: Option<Unary>) -> Result<Self> {
        if weight.shape().rank() != 2 || bias.shape().rank() != 1 || weight.dims()[0] != bias.len()
        {
            return Err(Error::ShapeMismatch {
                op: "dense_new",
                left: weight.dims().to_vec(),
                right: bias.dims().to_vec(),
            });
        }
        Ok(DenseLayer {
            weight,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.dims()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, DenseCache)> {
        if x.shape().rank() != 1 || x.len() != self.in_dim() {
            return Err(Error::ShapeMismatch {
                op: "dense_forward",
                left: self.weight.dims().to_vec(),
                right: x.dims().to_vec(),
            });
        }
        let pre = self.weight.matvec(x)?.add(&self.bias)?;
        let y = match self.activation {
            Some(a) => pre.map(a),
            None => pre.clone(),
        };
        Ok((
            y,
            DenseCache {
                x: x.clone(),
                pre,
            },
        ))
    }

    pub fn backward(&self, cache: &DenseCache, upstream: &Tensor) -> Result<(Tensor, DenseGrads)> {
        if upstream.dims() != [self.out_dim()] {
            return Err(Error::ShapeMismatch {
                op: "dense_backward",
                left: vec![self.out_dim()],
                right: upstream.dims().to_vec(),
            });
        }
        let dpre = match self.activation {
            Some(a) => {
                let data = upstream
                    .data()
                    .iter()
                    .zip(cache.pre.data())
                    .map(|(&u, &p)| u * a.derivative(p))
                    .collect();
                Tensor::from_vec(&[self.out_dim()], data)?
            }
            None => upstream.clone(),
        };
        let d_weight = outer(&dpre, &cache.x)?;
        let dx = self.weight.matvec_t(&dpre)?;
        Ok((
            dx,
            DenseGrads {
                d_weight,
                d_bias: dpre,
            },
        ))
    }
}

/// Token-id to dense-vector lookup table.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    /// `[V, d_emb]`
    pub table: Tensor,
}

#[derive(Debug, Clone)]
pub struct EmbeddingGrads {
    pub d_table: Tensor,
}

impl EmbeddingTable {
    pub fn new(table: Tensor) -> Result<Self> {
        if table.shape().rank() != 2 {
            return Err(Error::InvalidShape(format!(
                "embedding table must be rank 2, got {:?}",
                table.dims()
            )));
        }
        Ok(EmbeddingTable { table })
    }

    pub fn vocab_size(&self) -> usize {
        self.table.dims()[0]
    }

    pub fn dim(&self) -> usize {
        self.table.dims()[1]
    }

    /// Row `t` of the output is the table row for `tokens[t]`.
    pub fn lookup(&self, tokens: &[usize]) -> Result<Tensor> {
        let (v, d) = (self.vocab_size(), self.dim());
        let mut out = Vec::with_capacity(tokens.len() * d);
        for &t in tokens {
            if t >= v {
                return Err(Error::TokenOutOfRange { id: t, vocab: v });
            }
            out.extend_from_slice(self.table.row(t));
        }
        Tensor::from_vec(&[tokens.len(), d], out)
    }

    /// Accumulate upstream rows into the table gradient at token positions.
    pub fn backward(&self, tokens: &[usize], upstream: &Tensor) -> Result<EmbeddingGrads> {
        let d = self.dim();
        if upstream.dims() != [tokens.len(), d] {
            return Err(Error::ShapeMismatch {
                op: "embedding_backward",
                left: vec![tokens.len(), d],
                right: upstream.dims().to_vec(),
            });
        }
        let mut d_table = Tensor::zeros(self.table.dims())?;
        for (t, &tok) in tokens.iter().enumerate() {
            let urow = upstream.row(t).to_vec();
            let dst = &mut d_table.data_mut()[tok * d..(tok + 1) * d];
            for (dd, u) in dst.iter_mut().zip(urow) {
                *dd += u;
            }
        }
        Ok(EmbeddingGrads { d_table })
    }
}
