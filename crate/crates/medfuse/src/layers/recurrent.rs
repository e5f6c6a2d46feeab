//! LSTM cell and bidirectional LSTM.
//!
//! Standard four-gate cell:
//!
//! ```text
//! i = sigmoid(W_i x + U_i h_prev + b_i)      input gate
//! f = sigmoid(W_f x + U_f h_prev + b_f)      forget gate
//! o = sigmoid(W_o x + U_o h_prev + b_o)      output gate
//! g = tanh   (W_g x + U_g h_prev + b_g)      candidate
//! c = f * c_prev + i * g
//! h = o * tanh(c)
//! ```
//!
//! The bidirectional wrapper runs one cell left-to-right and another
//! right-to-left and concatenates the per-step hidden states, so its output
//! width is exactly `2h`. Initial hidden and cell states are zero vectors.

use crate::error::{Error, Result};
use crate::layers::glorot_uniform;
use crate::rng::Rng;
use crate::tensor::{outer, sigmoid, Tensor};

#[derive(Debug, Clone)]
pub struct LstmCell {
    // Input weights [h, d], recurrent weights [h, h], biases [h].
    pub w_i: Tensor,
    pub w_f: Tensor,
    pub w_o: Tensor,
    pub w_g: Tensor,
    pub u_i: Tensor,
    pub u_f: Tensor,
    pub u_o: Tensor,
    pub u_g: Tensor,
    pub b_i: Tensor,
    pub b_f: Tensor,
    pub b_o: Tensor,
    pub b_g: Tensor,
}

#[derive(Debug, Clone)]
pub struct LstmStepCache {
    x: Tensor,
    h_prev: Tensor,
    c_prev: Tensor,
    i: Tensor,
    f: Tensor,
    o: Tensor,
    g: Tensor,
    tanh_c: Tensor,
}

/// Parameter gradients mirroring [`LstmCell`]. Accumulated across time steps.
#[derive(Debug, Clone)]
pub struct LstmGrads {
    pub w_i: Tensor,
    pub w_f: Tensor,
    pub w_o: Tensor,
    pub w_g: Tensor,
    pub u_i: Tensor,
    pub u_f: Tensor,
    pub u_o: Tensor,
    pub u_g: Tensor,
    pub b_i: Tensor,
    pub b_f: Tensor,
    pub b_o: Tensor,
    pub b_g: Tensor,
}

impl LstmGrads {
    pub fn zeros(d: usize, h: usize) -> Result<Self> {
        Ok(LstmGrads {
            w_i: Tensor::zeros(&[h, d])?,
            w_f: Tensor::zeros(&[h, d])?,
            w_o: Tensor::zeros(&[h, d])?,
            w_g: Tensor::zeros(&[h, d])?,
            u_i: Tensor::zeros(&[h, h])?,
            u_f: Tensor::zeros(&[h, h])?,
            u_o: Tensor::zeros(&[h, h])?,
            u_g: Tensor::zeros(&[h, h])?,
            b_i: Tensor::zeros(&[h])?,
            b_f: Tensor::zeros(&[h])?,
            b_o: Tensor::zeros(&[h])?,
            b_g: Tensor::zeros(&[h])?,
        })
    }
}

impl LstmCell {
    /// Zero-initialized cell (useful in tests).
    pub fn zeros(d: usize, h: usize) -> Result<Self> {
        let g = LstmGrads::zeros(d, h)?;
        Ok(LstmCell {
            w_i: g.w_i,
            w_f: g.w_f,
            w_o: g.w_o,
            w_g: g.w_g,
            u_i: g.u_i,
            u_f: g.u_f,
            u_o: g.u_o,
            u_g: g.u_g,
            b_i: g.b_i,
            b_f: g.b_f,
            b_o: g.b_o,
            b_g: g.b_g,
        })
    }

    /// Glorot-initialized cell; forget-gate bias starts at 1.0, all other
    /// biases at zero.
    pub fn init(rng: &mut Rng, d: usize, h: usize) -> Result<Self> {
        let mut cell = LstmCell::zeros(d, h)?;
        cell.w_i = glorot_uniform(rng, &[h, d], d, h);
        cell.w_f = glorot_uniform(rng, &[h, d], d, h);
        cell.w_o = glorot_uniform(rng, &[h, d], d, h);
        cell.w_g = glorot_uniform(rng, &[h, d], d, h);
        cell.u_i = glorot_uniform(rng, &[h, h], h, h);
        cell.u_f = glorot_uniform(rng, &[h, h], h, h);
        cell.u_o = glorot_uniform(rng, &[h, h], h, h);
        cell.u_g = glorot_uniform(rng, &[h, h], h, h);
        cell.b_f = Tensor::from_vec(&[h], vec![1.0; h])?;
        Ok(cell)
    }

    pub fn input_dim(&self) -> usize {
        self.w_i.dims()[1]
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_i.dims()[0]
    }

    pub fn step(
        &self,
        x: &Tensor,
        h_prev: &Tensor,
        c_prev: &Tensor,
    ) -> Result<(Tensor, Tensor, LstmStepCache)> {
        let (d, h) = (self.input_dim(), self.hidden_dim());
        if x.dims() != [d] || h_prev.dims() != [h] || c_prev.dims() != [h] {
            return Err(Error::ShapeMismatch {
                op: "lstm_step",
                left: vec![d, h],
                right: x.dims().to_vec(),
            });
        }
        let gate = |w: &Tensor, u: &Tensor, b: &Tensor| -> Result<Tensor> {
            w.matvec(x)?.add(&u.matvec(h_prev)?)?.add(b)
        };
        let i = gate(&self.w_i, &self.u_i, &self.b_i)?.map_scalar(sigmoid);
        let f = gate(&self.w_f, &self.u_f, &self.b_f)?.map_scalar(sigmoid);
        let o = gate(&self.w_o, &self.u_o, &self.b_o)?.map_scalar(sigmoid);
        let g = gate(&self.w_g, &self.u_g, &self.b_g)?.map_scalar(f64::tanh);
        let c = f.mul(c_prev)?.add(&i.mul(&g)?)?;
        let tanh_c = c.map_scalar(f64::tanh);
        let h_t = o.mul(&tanh_c)?;
        Ok((
            h_t,
            c,
            LstmStepCache {
                x: x.clone(),
                h_prev: h_prev.clone(),
                c_prev: c_prev.clone(),
                i,
                f,
                o,
                g,
                tanh_c,
            },
        ))
    }

    /// Backward through one step. `dh` and `dc` are the gradients flowing
    /// into this step's `h_t` and `c_t`; returns `(dx, dh_prev, dc_prev)`
    /// and accumulates parameter gradients into `grads`.
    pub fn step_backward(
        &self,
        cache: &LstmStepCache,
        dh: &Tensor,
        dc: &Tensor,
        grads: &mut LstmGrads,
    ) -> Result<(Tensor, Tensor, Tensor)> {
        let h = self.hidden_dim();
        if dh.dims() != [h] || dc.dims() != [h] {
            return Err(Error::ShapeMismatch {
                op: "lstm_step_backward",
                left: vec![h],
                right: dh.dims().to_vec(),
            });
        }
        let LstmStepCache {
            x,
            h_prev,
            c_prev,
            i,
            f,
            o,
            g,
            tanh_c,
        } = cache;

        let n = h;
        let mut d_o = vec![0.0; n];
        let mut dc_total = vec![0.0; n];
        for k in 0..n {
            d_o[k] = dh.data()[k] * tanh_c.data()[k];
            dc_total[k] =
                dc.data()[k] + dh.data()[k] * o.data()[k] * (1.0 - tanh_c.data()[k] * tanh_c.data()[k]);
        }
        let mut d_i = vec![0.0; n];
        let mut d_f = vec![0.0; n];
        let mut d_g = vec![0.0; n];
        let mut dc_prev = vec![0.0; n];
        for k in 0..n {
            d_i[k] = dc_total[k] * g.data()[k];
            d_f[k] = dc_total[k] * c_prev.data()[k];
            d_g[k] = dc_total[k] * i.data()[k];
            dc_prev[k] = dc_total[k] * f.data()[k];
        }
        // Pre-activation gradients through each gate's nonlinearity.
        let dz = |d: &[f64], y: &Tensor, is_tanh: bool| -> Tensor {
            let data = d
                .iter()
                .zip(y.data())
                .map(|(&dv, &yv)| {
                    if is_tanh {
                        dv * (1.0 - yv * yv)
                    } else {
                        dv * yv * (1.0 - yv)
                    }
                })
                .collect();
            Tensor::from_vec(&[n], data).unwrap()
        };
        let dzi = dz(&d_i, i, false);
        let dzf = dz(&d_f, f, false);
        let dzo = dz(&d_o, o, false);
        let dzg = dz(&d_g, g, true);

        let mut dx = Tensor::zeros(&[self.input_dim()])?;
        let mut dh_prev = Tensor::zeros(&[n])?;
        let mut apply = |dzv: &Tensor,
                         w: &Tensor,
                         u: &Tensor,
                         gw: &mut Tensor,
                         gu: &mut Tensor,
                         gb: &mut Tensor|
         -> Result<()> {
            add_assign(gw, &outer(dzv, x)?);
            add_assign(gu, &outer(dzv, h_prev)?);
            add_assign(gb, dzv);
            dx = dx.add(&w.matvec_t(dzv)?)?;
            dh_prev = dh_prev.add(&u.matvec_t(dzv)?)?;
            Ok(())
        };
        apply(&dzi, &self.w_i, &self.u_i, &mut grads.w_i, &mut grads.u_i, &mut grads.b_i)?;
        apply(&dzf, &self.w_f, &self.u_f, &mut grads.w_f, &mut grads.u_f, &mut grads.b_f)?;
        apply(&dzo, &self.w_o, &self.u_o, &mut grads.w_o, &mut grads.u_o, &mut grads.b_o)?;
        apply(&dzg, &self.w_g, &self.u_g, &mut grads.w_g, &mut grads.u_g, &mut grads.b_g)?;

        Ok((dx, dh_prev, Tensor::from_vec(&[n], dc_prev)?))
    }
}

fn add_assign(dst: &mut Tensor, src: &Tensor) {
    for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
        *d += s;
    }
}

/// Forward and reverse LSTM scans with per-step concatenation.
#[derive(Debug, Clone)]
pub struct BiLstm {
    pub forward_cell: LstmCell,
    pub backward_cell: LstmCell,
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    fwd_steps: Vec<LstmStepCache>,
    bwd_steps: Vec<LstmStepCache>,
}

#[derive(Debug, Clone)]
pub struct BiLstmGrads {
    pub forward: LstmGrads,
    pub backward: LstmGrads,
}

impl BiLstm {
    pub fn new(forward_cell: LstmCell, backward_cell: LstmCell) -> Result<Self> {
        if forward_cell.input_dim() != backward_cell.input_dim()
            || forward_cell.hidden_dim() != backward_cell.hidden_dim()
        {
            return Err(Error::ShapeMismatch {
                op: "bilstm_new",
                left: vec![forward_cell.input_dim(), forward_cell.hidden_dim()],
                right: vec![backward_cell.input_dim(), backward_cell.hidden_dim()],
            });
        }
        Ok(BiLstm {
            forward_cell,
            backward_cell,
        })
    }

    pub fn init(rng: &mut Rng, d: usize, h: usize) -> Result<Self> {
        Ok(BiLstm {
            forward_cell: LstmCell::init(rng, d, h)?,
            backward_cell: LstmCell::init(rng, d, h)?,
        })
    }

    pub fn hidden_dim(&self) -> usize {
        self.forward_cell.hidden_dim()
    }

    /// `xs: [T, d] -> hs: [T, 2h]`, row `t` = `[fwd_h_t ; bwd_h_t]`.
    pub fn forward(&self, xs: &Tensor) -> Result<(Tensor, BiLstmCache)> {
        if xs.shape().rank() != 2 {
            return Err(Error::InvalidShape(format!(
                "bilstm expects [T, d], got {:?}",
                xs.dims()
            )));
        }
        let (t_len, d) = (xs.dims()[0], xs.dims()[1]);
        if d != self.forward_cell.input_dim() {
            return Err(Error::ShapeMismatch {
                op: "bilstm_forward",
                left: vec![self.forward_cell.input_dim()],
                right: xs.dims().to_vec(),
            });
        }
        let h = self.hidden_dim();
        let mut hs = vec![0.0; t_len * 2 * h];

        let mut fwd_steps = Vec::with_capacity(t_len);
        let mut h_state = Tensor::zeros(&[h])?;
        let mut c_state = Tensor::zeros(&[h])?;
        for t in 0..t_len {
            let x_t = Tensor::from_vec(&[d], xs.row(t).to_vec())?;
            let (h_t, c_t, cache) = self.forward_cell.step(&x_t, &h_state, &c_state)?;
            hs[t * 2 * h..t * 2 * h + h].copy_from_slice(h_t.data());
            fwd_steps.push(cache);
            h_state = h_t;
            c_state = c_t;
        }

        let mut bwd_steps: Vec<Option<LstmStepCache>> = (0..t_len).map(|_| None).collect();
        let mut h_state = Tensor::zeros(&[h])?;
        let mut c_state = Tensor::zeros(&[h])?;
        for t in (0..t_len).rev() {
            let x_t = Tensor::from_vec(&[d], xs.row(t).to_vec())?;
            let (h_t, c_t, cache) = self.backward_cell.step(&x_t, &h_state, &c_state)?;
            hs[t * 2 * h + h..(t + 1) * 2 * h].copy_from_slice(h_t.data());
            bwd_steps[t] = Some(cache);
            h_state = h_t;
            c_state = c_t;
        }

        Ok((
            Tensor::from_vec(&[t_len, 2 * h], hs)?,
            BiLstmCache {
                fwd_steps,
                bwd_steps: bwd_steps.into_iter().map(Option::unwrap).collect(),
            },
        ))
    }

    /// Backward through both scans. `upstream: [T, 2h]`; returns the input
    /// gradient `[T, d]` and accumulated per-cell parameter gradients.
    pub fn backward(&self, cache: &BiLstmCache, upstream: &Tensor) -> Result<(Tensor, BiLstmGrads)> {
        let t_len = cache.fwd_steps.len();
        let h = self.hidden_dim();
        let d = self.forward_cell.input_dim();
        if upstream.dims() != [t_len, 2 * h] {
            return Err(Error::ShapeMismatch {
                op: "bilstm_backward",
                left: vec![t_len, 2 * h],
                right: upstream.dims().to_vec(),
            });
        }
        let mut dxs = Tensor::zeros(&[t_len, d])?;
        let mut fwd_grads = LstmGrads::zeros(d, h)?;
        let mut bwd_grads = LstmGrads::zeros(d, h)?;

        // Forward cell: scan ran left-to-right, so backprop runs right-to-left.
        let mut dh_next = Tensor::zeros(&[h])?;
        let mut dc_next = Tensor::zeros(&[h])?;
        for t in (0..t_len).rev() {
            let mut dh = Tensor::from_vec(&[h], upstream.row(t)[..h].to_vec())?;
            dh = dh.add(&dh_next)?;
            let (dx, dh_prev, dc_prev) =
                self.forward_cell
                    .step_backward(&cache.fwd_steps[t], &dh, &dc_next, &mut fwd_grads)?;
            for (dst, src) in dxs.data_mut()[t * d..(t + 1) * d].iter_mut().zip(dx.data()) {
                *dst += src;
            }
            dh_next = dh_prev;
            dc_next = dc_prev;
        }

        // Backward cell: scan ran right-to-left, so backprop runs left-to-right.
        let mut dh_next = Tensor::zeros(&[h])?;
        let mut dc_next = Tensor::zeros(&[h])?;
        for t in 0..t_len {
            let mut dh = Tensor::from_vec(&[h], upstream.row(t)[h..].to_vec())?;
            dh = dh.add(&dh_next)?;
            let (dx, dh_prev, dc_prev) =
                self.backward_cell
                    .step_backward(&cache.bwd_steps[t], &dh, &dc_next, &mut bwd_grads)?;
            for (dst, src) in dxs.data_mut()[t * d..(t + 1) * d].iter_mut().zip(dx.data()) {
                *dst += src;
            }
            dh_next = dh_prev;
            dc_next = dc_prev;
        }

        Ok((
            dxs,
            BiLstmGrads {
                forward: fwd_grads,
                backward: bwd_grads,
            },
        ))
    }
}
