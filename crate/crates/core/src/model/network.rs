use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::catalog::HeatMapSeq;
use crate::error::{Error, Result};
use crate::nn::{weighted_nll, ClassWeights, Conv2d, ConvLstmCell, ConvLstmState, LstmStepCache, Parameter, Tensor};
use crate::prior::{combine_residual, softmax2, PriorLogits};

use super::{ModelConfig, Variant};

/// Heat-map magnitudes are multiplied by this before entering the network.
pub const INPUT_SCALE: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
enum Trunk {
    Stacked { first: Conv2d, second: Conv2d },
    Recurrent { embed: Conv2d, cell: ConvLstmCell },
}

/// A forecasting network with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    config: ModelConfig,
    trunk: Trunk,
    head: Vec<Conv2d>,
    out: Conv2d,
}

enum TrunkCache {
    Stacked { x: Tensor, a1: Tensor },
    Recurrent { days: Vec<Tensor>, embeds: Vec<Tensor>, steps: Vec<LstmStepCache> },
}

/// Activations of one forward pass, consumed by [`Network::backward`].
pub struct ForwardCache {
    trunk: TrunkCache,
    // acts[0] is the trunk output, acts[i + 1] the output of head layer i
    acts: Vec<Tensor>,
    /// Raw head output `[2, H, W]`: the residual `δo` or the plain logits.
    pub output: Tensor,
}

/// Unnormalized loss of one sample with parameter gradients in
/// [`Network::params`] order.
#[derive(Clone, Debug)]
pub struct SampleGrad {
    pub sum: f64,
    pub weight: f64,
    pub grads: Vec<Tensor>,
}

fn scaled(m: &[f32]) -> impl Iterator<Item = f64> + '_ {
    m.iter().map(|&v| v as f64 * INPUT_SCALE)
}

fn tanh_layer(layer: &Conv2d, x: &Tensor) -> Result<Tensor> {
    Ok(layer.forward(x)?.map(f64::tanh))
}

/// `upstream ⊙ (1 - a²)` for a tanh output `a`.
fn tanh_back(upstream: &Tensor, a: &Tensor) -> Tensor {
    let data = upstream.data().iter().zip(a.data()).map(|(g, a)| g * (1.0 - a * a)).collect();
    Tensor::from_vec(a.shape(), data).unwrap()
}

/// The `W` maps ending at day index `t` of `seq`, oldest first.
pub fn window(seq: &HeatMapSeq, t: usize, w: usize) -> Result<Vec<&[f32]>> {
    if t >= seq.days {
        return Err(Error::InsufficientHistory(format!(
            "day index {t} is past the last heat map ({} days)",
            seq.days
        )));
    }
    if t + 1 < w {
        return Err(Error::InsufficientHistory(format!(
            "{} needs {w} days of history, only {} available",
            seq.day(t),
            t + 1
        )));
    }
    Ok((t + 1 - w..=t).map(|d| seq.map(d)).collect())
}

impl Network {
    /// Seeded initialization; the output layer starts at zero.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (e, h, k) = (config.embed_channels, config.hidden_channels, config.kernel_size);
        let trunk = match config.variant {
            Variant::Cnn => Trunk::Stacked {
                first: Conv2d::init("stack", config.window_days, e, k, &mut rng),
                second: Conv2d::init("trunk", e, h, k, &mut rng),
            },
            Variant::CnnLstm => Trunk::Recurrent {
                embed: Conv2d::init("embed", 1, e, k, &mut rng),
                cell: ConvLstmCell::init("lstm", e, h, k, &mut rng),
            },
        };
        let head = (0..config.head_depth)
            .map(|i| Conv2d::init(&format!("head{i}"), h, h, k, &mut rng))
            .collect();
        let out = Conv2d::zeros("out", h, 2, k);
        Ok(Network { config, trunk, head, out })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Parameters in declaration order.
    pub fn params(&self) -> Vec<&Parameter> {
        let mut v = Vec::new();
        match &self.trunk {
            Trunk::Stacked { first, second } => {
                v.extend([&first.weight, &first.bias, &second.weight, &second.bias]);
            }
            Trunk::Recurrent { embed, cell } => {
                v.extend([&embed.weight, &embed.bias, &cell.gates.weight, &cell.gates.bias]);
            }
        }
        for layer in &self.head {
            v.extend([&layer.weight, &layer.bias]);
        }
        v.extend([&self.out.weight, &self.out.bias]);
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut v = Vec::new();
        match &mut self.trunk {
            Trunk::Stacked { first, second } => {
                v.extend([&mut first.weight, &mut first.bias, &mut second.weight, &mut second.bias]);
            }
            Trunk::Recurrent { embed, cell } => {
                v.extend([&mut embed.weight, &mut embed.bias, &mut cell.gates.weight, &mut cell.gates.bias]);
            }
        }
        for layer in &mut self.head {
            v.extend([&mut layer.weight, &mut layer.bias]);
        }
        v.extend([&mut self.out.weight, &mut self.out.bias]);
        v
    }

    pub fn n_params(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params().iter().flat_map(|p| p.value.data().iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.n_params() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} parameters",
                theta.len(),
                self.n_params()
            )));
        }
        let mut at = 0;
        for p in self.params_mut() {
            let n = p.value.len();
            p.value.data_mut().copy_from_slice(&theta[at..at + n]);
            at += n;
        }
        Ok(())
    }

    fn check_window(&self, maps: &[&[f32]], n_rows: usize, n_cols: usize) -> Result<()> {
        if maps.len() != self.config.window_days {
            return Err(Error::ShapeMismatch(format!(
                "window has {} days, model expects {}",
                maps.len(),
                self.config.window_days
            )));
        }
        if let Some(m) = maps.iter().find(|m| m.len() != n_rows * n_cols) {
            return Err(Error::ShapeMismatch(format!(
                "heat map has {} cells, grid is {n_rows}x{n_cols}",
                m.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, maps: &[&[f32]], n_rows: usize, n_cols: usize) -> Result<ForwardCache> {
        self.check_window(maps, n_rows, n_cols)?;
        let (trunk, top) = match &self.trunk {
            Trunk::Stacked { first, second } => {
                let x = Tensor::from_vec(&[maps.len(), n_rows, n_cols], maps.iter().flat_map(|m| scaled(m)).collect())?;
                let a1 = tanh_layer(first, &x)?;
                let a2 = tanh_layer(second, &a1)?;
                (TrunkCache::Stacked { x, a1 }, a2)
            }
            Trunk::Recurrent { embed, cell } => {
                let mut state = ConvLstmState::zeros(self.config.hidden_channels, n_rows, n_cols);
                let mut days = Vec::with_capacity(maps.len());
                let mut embeds = Vec::with_capacity(maps.len());
                let mut steps = Vec::with_capacity(maps.len());
                for m in maps {
                    let d = Tensor::from_vec(&[1, n_rows, n_cols], scaled(m).collect())?;
                    let e = tanh_layer(embed, &d)?;
                    let (next, cache) = cell.step(&e, &state)?;
                    state = next;
                    days.push(d);
                    embeds.push(e);
                    steps.push(cache);
                }
                (TrunkCache::Recurrent { days, embeds, steps }, state.h)
            }
        };
        let mut acts = vec![top];
        for layer in &self.head {
            let a = tanh_layer(layer, acts.last().unwrap())?;
            acts.push(a);
        }
        let output = self.out.forward(acts.last().unwrap())?;
        output.ensure_finite("network output")?;
        Ok(ForwardCache { trunk, acts, output })
    }

    /// Parameter gradients for upstream gradient `d_output` on
    /// [`ForwardCache::output`].
    pub fn backward(&self, cache: &ForwardCache, d_output: &Tensor) -> Result<Vec<Tensor>> {
        let mut head_grads = Vec::with_capacity(2 * self.head.len() + 2);
        let g = self.out.backward(cache.acts.last().unwrap(), d_output, true)?;
        head_grads.push(g.bias);
        head_grads.push(g.kernel);
        let mut d = g.input.unwrap();
        for (i, layer) in self.head.iter().enumerate().rev() {
            let pre = tanh_back(&d, &cache.acts[i + 1]);
            let g = layer.backward(&cache.acts[i], &pre, true)?;
            head_grads.push(g.bias);
            head_grads.push(g.kernel);
            d = g.input.unwrap();
        }

        let mut grads = Vec::with_capacity(4 + head_grads.len());
        match (&self.trunk, &cache.trunk) {
            (Trunk::Stacked { first, second }, TrunkCache::Stacked { x, a1 }) => {
                let g2 = second.backward(a1, &tanh_back(&d, &cache.acts[0]), true)?;
                let g1 = first.backward(x, &tanh_back(&g2.input.unwrap(), a1), false)?;
                grads.extend([g1.kernel, g1.bias, g2.kernel, g2.bias]);
            }
            (Trunk::Recurrent { embed, cell }, TrunkCache::Recurrent { days, embeds, steps }) => {
                let mut d_embed_w = Tensor::zeros(embed.weight.value.shape());
                let mut d_embed_b = Tensor::zeros(embed.bias.value.shape());
                let mut d_gate_w = Tensor::zeros(cell.gates.weight.value.shape());
                let mut d_gate_b = Tensor::zeros(cell.gates.bias.value.shape());
                let mut dh = d;
                let mut dc = Tensor::zeros(dh.shape());
                for t in (0..steps.len()).rev() {
                    let sg = cell.backward(&steps[t], &dh, &dc)?;
                    d_gate_w.add_assign(&sg.kernel);
                    d_gate_b.add_assign(&sg.bias);
                    let ge = embed.backward(&days[t], &tanh_back(&sg.x, &embeds[t]), false)?;
                    d_embed_w.add_assign(&ge.kernel);
                    d_embed_b.add_assign(&ge.bias);
                    dh = sg.h_prev;
                    dc = sg.c_prev;
                }
                grads.extend([d_embed_w, d_embed_b, d_gate_w, d_gate_b]);
            }
            _ => unreachable!("cache built by a different variant"),
        }
        // head grads were collected from the output layer backwards as (bias, kernel)
        grads.extend(head_grads.into_iter().rev());
        Ok(grads)
    }

    fn prior_for<'a>(&self, prior: Option<&'a PriorLogits>, cells: usize) -> Result<Option<&'a PriorLogits>> {
        if !self.config.use_prior_residual {
            return Ok(None);
        }
        match prior {
            None => Err(Error::InvalidArgument("residual model needs prior logits".into())),
            Some(p) if p.cells() != cells => Err(Error::ShapeMismatch(format!(
                "prior has {} cells, grid has {cells}",
                p.cells()
            ))),
            Some(p) => Ok(Some(p)),
        }
    }

    /// Class logits fed to the softmax: `o + δo` in residual mode.
    pub fn logits(&self, cache: &ForwardCache, prior: Option<&PriorLogits>) -> Result<Tensor> {
        let cells = cache.output.len() / 2;
        match self.prior_for(prior, cells)? {
            None => Ok(cache.output.clone()),
            Some(p) => {
                let data = cache.output.data().iter().zip(&p.o).map(|(d, o)| o + d).collect();
                Tensor::from_vec(cache.output.shape(), data)
            }
        }
    }

    /// Event-class probability map for one window.
    pub fn predict(&self, maps: &[&[f32]], n_rows: usize, n_cols: usize, prior: Option<&PriorLogits>) -> Result<Vec<f64>> {
        let cache = self.forward(maps, n_rows, n_cols)?;
        let cells = n_rows * n_cols;
        match self.prior_for(prior, cells)? {
            Some(p) => combine_residual(p, cache.output.data()),
            None => {
                let z = cache.output.data();
                Ok((0..cells).map(|j| softmax2(z[j], z[cells + j])).collect())
            }
        }
    }

    /// Weighted NLL of one window against its labels, with gradients.
    #[allow(clippy::too_many_arguments)]
    pub fn loss_and_grad(
        &self,
        maps: &[&[f32]],
        n_rows: usize,
        n_cols: usize,
        labels: &[u8],
        mask: &[u8],
        prior: Option<&PriorLogits>,
        weights: ClassWeights,
    ) -> Result<SampleGrad> {
        let cache = self.forward(maps, n_rows, n_cols)?;
        let z = self.logits(&cache, prior)?;
        let nll = weighted_nll(&z, labels, mask, weights)?;
        // the residual is additive, so d/dδo equals d/dz
        let grads = self.backward(&cache, &nll.grad)?;
        Ok(SampleGrad { sum: nll.sum, weight: nll.weight, grads })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(variant: Variant) -> ModelConfig {
        ModelConfig {
            variant,
            embed_channels: 2,
            hidden_channels: 3,
            window_days: 4,
            seed: 7,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn parameter_order_and_count() {
        let net = Network::new(small(Variant::CnnLstm)).unwrap();
        let names: Vec<&str> = net.params().iter().map(|p| p.name.as_str()).collect();
        assert_eq!(
            names,
            ["embed.weight", "embed.bias", "lstm.weight", "lstm.bias", "head0.weight", "head0.bias", "out.weight", "out.bias"]
        );
        // embed 2*1*9+2, gates 12*5*9+12, head 3*3*9+3, out 2*3*9+2
        assert_eq!(net.n_params(), 20 + 552 + 84 + 56);
        let cnn = Network::new(small(Variant::Cnn)).unwrap();
        assert_eq!(cnn.params()[0].name, "stack.weight");
        assert_eq!(cnn.params()[0].value.shape(), &[2, 4, 3, 3]);
    }

    #[test]
    fn zero_output_layer_gives_uniform_plain_prediction() {
        let mut cfg = small(Variant::Cnn);
        cfg.use_prior_residual = false;
        let net = Network::new(cfg).unwrap();
        let map = vec![3.0f32; 25];
        let maps = vec![&map[..]; 4];
        let p = net.predict(&maps, 5, 5, None).unwrap();
        assert!(p.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn seeds_change_initialization() {
        let a = Network::new(small(Variant::CnnLstm)).unwrap();
        let mut cfg = small(Variant::CnnLstm);
        cfg.seed = 8;
        let b = Network::new(cfg).unwrap();
        assert_ne!(a.flat_params(), b.flat_params());
        assert_eq!(a, Network::new(small(Variant::CnnLstm)).unwrap());
    }

    #[test]
    fn window_requires_history() {
        let seq = HeatMapSeq::zeros(chrono::NaiveDate::from_ymd_opt(2000, 1, 1).unwrap(), 5, 2, 2);
        assert!(matches!(window(&seq, 2, 4), Err(Error::InsufficientHistory(_))));
        assert_eq!(window(&seq, 3, 4).unwrap().len(), 4);
        assert!(window(&seq, 5, 1).is_err());
    }

    #[test]
    fn residual_mode_requires_prior() {
        let net = Network::new(small(Variant::Cnn)).unwrap();
        let map = vec![0.0f32; 4];
        let maps = vec![&map[..]; 4];
        assert!(net.predict(&maps, 2, 2, None).is_err());
        assert!(net.predict(&maps, 2, 2, Some(&PriorLogits::zeros(3, 3))).is_err());
        assert!(net.predict(&maps[..3], 2, 2, Some(&PriorLogits::zeros(2, 2))).is_err());
    }
}
