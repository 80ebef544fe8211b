use rand::Rng;

use crate::error::{Error, Result};

use super::{Parameter, Tensor};

fn check_shapes(input: &Tensor, kernel: &Tensor, bias: &Tensor) -> Result<(usize, usize, usize, usize, usize)> {
    if input.shape().len() != 3 || kernel.shape().len() != 4 || bias.shape().len() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "conv2d expects input [C,H,W], kernel [O,C,k,k], bias [O]; got {:?}, {:?}, {:?}",
            input.shape(),
            kernel.shape(),
            bias.shape()
        )));
    }
    let (c_in, h, w) = (input.dim(0), input.dim(1), input.dim(2));
    let (c_out, kc, k, k2) = (kernel.dim(0), kernel.dim(1), kernel.dim(2), kernel.dim(3));
    if kc != c_in || k != k2 || k % 2 == 0 || bias.dim(0) != c_out {
        return Err(Error::ShapeMismatch(format!(
            "conv2d kernel {:?} / bias {:?} incompatible with input {:?} (odd square kernels only)",
            kernel.shape(),
            bias.shape(),
            input.shape()
        )));
    }
    Ok((c_in, c_out, h, w, k))
}

/// Valid output range `[lo, hi)` along one axis for tap offset `d`.
#[inline]
fn span(n: usize, d: isize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (n as isize - d).clamp(0, n as isize) as usize;
    (lo, hi.max(lo))
}

/// Same-padded cross-correlation: `out[o,y,x] = b[o] + Σ k[o,c,i,j] in[c, y+i-p, x+j-p]`
/// with zeros outside the input.
pub fn conv2d(input: &Tensor, kernel: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (c_in, c_out, h, w, k) = check_shapes(input, kernel, bias)?;
    let p = (k / 2) as isize;
    let plane = h * w;
    let mut out = Tensor::zeros(&[c_out, h, w]);
    let x = input.data();
    let kd = kernel.data();
    let od = out.data_mut();
    for o in 0..c_out {
        let out_plane = &mut od[o * plane..(o + 1) * plane];
        out_plane.fill(bias.data()[o]);
        for c in 0..c_in {
            let in_plane = &x[c * plane..(c + 1) * plane];
            for i in 0..k {
                let dy = i as isize - p;
                let (y0, y1) = span(h, dy);
                for j in 0..k {
                    let wv = kd[((o * c_in + c) * k + i) * k + j];
                    if wv == 0.0 {
                        continue;
                    }
                    let dx = j as isize - p;
                    let (x0, x1) = span(w, dx);
                    for y in y0..y1 {
                        let src_row = (y as isize + dy) as usize * w;
                        let src = &in_plane[(src_row as isize + x0 as isize + dx) as usize..][..x1 - x0];
                        let dst = &mut out_plane[y * w + x0..y * w + x1];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += wv * s;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of a convolution with respect to its operands.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2dGrads {
    pub input: Option<Tensor>,
    pub kernel: Tensor,
    pub bias: Tensor,
}

/// Vector-Jacobian product of [`conv2d`] at `input` for upstream `grad_out`.
/// The input gradient is skipped unless `want_input`.
pub fn conv2d_vjp(input: &Tensor, kernel: &Tensor, grad_out: &Tensor, want_input: bool) -> Result<Conv2dGrads> {
    let bias_shape = Tensor::zeros(&[kernel.dim(0)]);
    let (c_in, c_out, h, w, k) = check_shapes(input, kernel, &bias_shape)?;
    if grad_out.shape() != [c_out, h, w] {
        return Err(Error::ShapeMismatch(format!(
            "upstream gradient {:?} does not match conv output [{c_out}, {h}, {w}]",
            grad_out.shape()
        )));
    }
    let p = (k / 2) as isize;
    let plane = h * w;
    let x = input.data();
    let g = grad_out.data();
    let kd = kernel.data();

    let mut gk = Tensor::zeros(kernel.shape());
    let mut gb = Tensor::zeros(&[c_out]);
    let mut gi = want_input.then(|| Tensor::zeros(input.shape()));

    for o in 0..c_out {
        let g_plane = &g[o * plane..(o + 1) * plane];
        gb.data_mut()[o] = g_plane.iter().sum();
        for c in 0..c_in {
            let in_plane = &x[c * plane..(c + 1) * plane];
            for i in 0..k {
                let dy = i as isize - p;
                let (y0, y1) = span(h, dy);
                for j in 0..k {
                    let dx = j as isize - p;
                    let (x0, x1) = span(w, dx);
                    let widx = ((o * c_in + c) * k + i) * k + j;
                    let wv = kd[widx];
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let src_off = ((y as isize + dy) as usize * w) as isize + x0 as isize + dx;
                        let src = &in_plane[src_off as usize..][..x1 - x0];
                        let up = &g_plane[y * w + x0..y * w + x1];
                        acc += up.iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
                        if let Some(gi) = gi.as_mut() {
                            if wv != 0.0 {
                                let dst = &mut gi.data_mut()[c * plane + src_off as usize..][..x1 - x0];
                                for (d, u) in dst.iter_mut().zip(up) {
                                    *d += wv * u;
                                }
                            }
                        }
                    }
                    gk.data_mut()[widx] = acc;
                }
            }
        }
    }
    Ok(Conv2dGrads { input: gi, kernel: gk, bias: gb })
}

/// Convolution layer owning its kernel and bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    pub weight: Parameter,
    pub bias: Parameter,
}

impl Conv2d {
    /// Uniform initialization in `±sqrt(1 / (in_ch * k²))` for kernel and bias.
    pub fn init<R: Rng>(name: &str, in_ch: usize, out_ch: usize, k: usize, rng: &mut R) -> Self {
        let bound = (1.0 / (in_ch * k * k) as f64).sqrt();
        let mut draw = |n: usize| (0..n).map(|_| rng.random_range(-bound..=bound)).collect::<Vec<f64>>();
        let weight = Tensor::from_vec(&[out_ch, in_ch, k, k], draw(out_ch * in_ch * k * k)).unwrap();
        let bias = Tensor::from_vec(&[out_ch], draw(out_ch)).unwrap();
        Conv2d {
            weight: Parameter::new(format!("{name}.weight"), weight),
            bias: Parameter::new(format!("{name}.bias"), bias),
        }
    }

    pub fn zeros(name: &str, in_ch: usize, out_ch: usize, k: usize) -> Self {
        Conv2d {
            weight: Parameter::new(format!("{name}.weight"), Tensor::zeros(&[out_ch, in_ch, k, k])),
            bias: Parameter::new(format!("{name}.bias"), Tensor::zeros(&[out_ch])),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.value.dim(1)
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.dim(0)
    }

    pub fn kernel_size(&self) -> usize {
        self.weight.value.dim(2)
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        conv2d(input, &self.weight.value, &self.bias.value)
    }

    /// Backward pass from the cached forward input.
    pub fn backward(&self, input: &Tensor, grad_out: &Tensor, want_input: bool) -> Result<Conv2dGrads> {
        conv2d_vjp(input, &self.weight.value, grad_out, want_input)
    }
}
