use crate::error::{Error, Result};
use crate::nn::Parameter;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        // a zero rate is allowed and freezes the parameters
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::InvalidArgument("Adam betas must lie in [0, 1) and eps > 0".into()));
        }
        Ok(())
    }
}

/// Adam with bias-corrected moments, one moment pair per parameter entry.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    steps: u64,
}

impl Adam {
    /// `lens` are the entry counts of the parameters, in update order.
    pub fn new(config: AdamConfig, lens: impl IntoIterator<Item = usize>) -> Self {
        let m: Vec<Vec<f64>> = lens.into_iter().map(|n| vec![0.0; n]).collect();
        Adam {
            config,
            v: m.clone(),
            m,
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update from the gradients stored in `params`.
    pub fn step(&mut self, params: &mut [&mut Parameter]) {
        assert_eq!(params.len(), self.m.len(), "parameter list changed between steps");
        self.steps += 1;
        let AdamConfig { learning_rate: lr, beta1: b1, beta2: b2, eps } = self.config;
        let bc1 = 1.0 - b1.powi(self.steps as i32);
        let bc2 = 1.0 - b2.powi(self.steps as i32);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let grad = p.grad.data().to_vec();
            for (k, (w, g)) in p.value.data_mut().iter_mut().zip(grad).enumerate() {
                m[k] = b1 * m[k] + (1.0 - b1) * g;
                v[k] = b2 * v[k] + (1.0 - b2) * g * g;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Parameter::new("w", Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap());
        p.grad = Tensor::from_vec(&[3], vec![4.0, -0.01, 0.0]).unwrap();
        let mut params = vec![&mut p];
        let mut opt = Adam::new(AdamConfig::default(), [3]);
        opt.step(&mut params);
        // m_hat = g, v_hat = g², so the step is lr * g / (|g| + eps)
        let w = p.value.data();
        assert!((w[0] - (1.0 - 1e-3 * 4.0 / (4.0 + 1e-8))).abs() < 1e-15);
        assert!((w[1] - (-2.0 + 1e-3 * 0.01 / (0.01 + 1e-8))).abs() < 1e-15);
        assert_eq!(w[2], 0.5);
    }

    #[test]
    fn zero_rate_freezes_parameters() {
        let init = vec![0.3, -0.0, 7.0];
        let mut p = Parameter::new("w", Tensor::from_vec(&[3], init.clone()).unwrap());
        p.grad = Tensor::full(&[3], 2.5);
        let cfg = AdamConfig { learning_rate: 0.0, ..AdamConfig::default() };
        let mut params = vec![&mut p];
        let mut opt = Adam::new(cfg, [3]);
        for _ in 0..5 {
            opt.step(&mut params);
        }
        let bits: Vec<u64> = p.value.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits, init.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn invalid_config() {
        assert!(AdamConfig { learning_rate: -1.0, ..AdamConfig::default() }.validate().is_err());
        assert!(AdamConfig { beta2: 1.0, ..AdamConfig::default() }.validate().is_err());
    }
}
