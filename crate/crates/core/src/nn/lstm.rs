use rand::Rng;

use crate::error::{Error, Result};

use super::{sigmoid, Conv2d, Tensor};

/// Hidden and cell maps, each `[hidden, H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLstmState {
    pub h: Tensor,
    pub c: Tensor,
}

impl ConvLstmState {
    pub fn zeros(hidden: usize, h: usize, w: usize) -> Self {
        ConvLstmState {
            h: Tensor::zeros(&[hidden, h, w]),
            c: Tensor::zeros(&[hidden, h, w]),
        }
    }
}

/// Convolutional LSTM cell.
///
/// A single convolution over the concatenation `[x; h]` produces the four
/// gate pre-activations, stacked as `[i, f, g, o]` blocks of `hidden`
/// channels:
///
/// ```text
/// i = σ(z_i)  f = σ(z_f)  g = tanh(z_g)  o = σ(z_o)
/// c' = f ⊙ c + i ⊙ g
/// h' = o ⊙ tanh(c')
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLstmCell {
    pub gates: Conv2d,
    pub input_channels: usize,
    pub hidden_channels: usize,
}

/// Values kept from a forward step for its backward pass.
#[derive(Clone, Debug)]
pub struct LstmStepCache {
    xh: Tensor,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

/// Gradients returned by [`ConvLstmCell::backward`].
#[derive(Clone, Debug)]
pub struct LstmStepGrads {
    pub x: Tensor,
    pub h_prev: Tensor,
    pub c_prev: Tensor,
    pub kernel: Tensor,
    pub bias: Tensor,
}

impl ConvLstmCell {
    pub fn init<R: Rng>(name: &str, input_channels: usize, hidden_channels: usize, k: usize, rng: &mut R) -> Self {
        ConvLstmCell {
            gates: Conv2d::init(name, input_channels + hidden_channels, 4 * hidden_channels, k, rng),
            input_channels,
            hidden_channels,
        }
    }

    pub fn step(&self, x: &Tensor, state: &ConvLstmState) -> Result<(ConvLstmState, LstmStepCache)> {
        if x.shape().len() != 3 || x.dim(0) != self.input_channels || state.h.shape()[1..] != x.shape()[1..] {
            return Err(Error::ShapeMismatch(format!(
                "ConvLSTM input {:?} / state {:?} (expected {} input channels)",
                x.shape(),
                state.h.shape(),
                self.input_channels
            )));
        }
        let xh = Tensor::concat0(x, &state.h)?;
        let z = self.gates.forward(&xh)?;
        let n = state.c.len();
        let zd = z.data();
        let i: Vec<f64> = zd[..n].iter().map(|&v| sigmoid(v)).collect();
        let f: Vec<f64> = zd[n..2 * n].iter().map(|&v| sigmoid(v)).collect();
        let g: Vec<f64> = zd[2 * n..3 * n].iter().map(|&v| v.tanh()).collect();
        let o: Vec<f64> = zd[3 * n..].iter().map(|&v| sigmoid(v)).collect();
        let c_prev = state.c.data().to_vec();

        let c_new: Vec<f64> = (0..n).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
        let tanh_c: Vec<f64> = c_new.iter().map(|v| v.tanh()).collect();
        let h_new: Vec<f64> = (0..n).map(|k| o[k] * tanh_c[k]).collect();

        let shape = state.c.shape().to_vec();
        let next = ConvLstmState {
            h: Tensor::from_vec(&shape, h_new)?,
            c: Tensor::from_vec(&shape, c_new)?,
        };
        Ok((next, LstmStepCache { xh, i, f, g, o, c_prev, tanh_c }))
    }

    /// Backward through one step given the total gradients reaching `h'`
    /// and `c'`.
    pub fn backward(&self, cache: &LstmStepCache, dh: &Tensor, dc: &Tensor) -> Result<LstmStepGrads> {
        let n = cache.c_prev.len();
        if dh.len() != n || dc.len() != n {
            return Err(Error::ShapeMismatch("ConvLSTM upstream gradient size".into()));
        }
        let (dh, dc) = (dh.data(), dc.data());
        let mut dz = vec![0.0; 4 * n];
        let mut dc_prev = vec![0.0; n];
        for k in 0..n {
            let (i, f, g, o, tc) = (cache.i[k], cache.f[k], cache.g[k], cache.o[k], cache.tanh_c[k]);
            let d_o = dh[k] * tc;
            let dct = dc[k] + dh[k] * o * (1.0 - tc * tc);
            let d_f = dct * cache.c_prev[k];
            let d_i = dct * g;
            let d_g = dct * i;
            dc_prev[k] = dct * f;
            dz[k] = d_i * i * (1.0 - i);
            dz[n + k] = d_f * f * (1.0 - f);
            dz[2 * n + k] = d_g * (1.0 - g * g);
            dz[3 * n + k] = d_o * o * (1.0 - o);
        }
        let mut zshape = cache.xh.shape().to_vec();
        zshape[0] = 4 * self.hidden_channels;
        let dz = Tensor::from_vec(&zshape, dz)?;
        let grads = self.gates.backward(&cache.xh, &dz, true)?;
        let dxh = grads.input.expect("input gradient requested");
        let (dx, dh_prev) = dxh.split0(self.input_channels);
        let mut cshape = zshape;
        cshape[0] = self.hidden_channels;
        Ok(LstmStepGrads {
            x: dx,
            h_prev: dh_prev,
            c_prev: Tensor::from_vec(&cshape, dc_prev)?,
            kernel: grads.kernel,
            bias: grads.bias,
        })
    }
}
