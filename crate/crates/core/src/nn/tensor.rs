use crate::error::{Error, Result};

/// Row-major `f64` array of up to four dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        debug_assert!(shape.len() <= 4);
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.len() > 4 {
            return Err(Error::ShapeMismatch(format!("at most 4 dims supported, got {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dim(&self, i: usize) -> usize {
        self.shape[i]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Contiguous slab for index `i` along the leading dimension.
    pub fn slab(&self, i: usize) -> &[f64] {
        let n = self.data.len() / self.shape[0];
        &self.data[i * n..(i + 1) * n]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Concatenates along the leading dimension.
    pub fn concat0(a: &Tensor, b: &Tensor) -> Result<Tensor> {
        if a.shape.len() != b.shape.len() || a.shape[1..] != b.shape[1..] {
            return Err(Error::ShapeMismatch(format!(
                "cannot concatenate {:?} and {:?}",
                a.shape, b.shape
            )));
        }
        let mut shape = a.shape.clone();
        shape[0] += b.shape[0];
        let mut data = Vec::with_capacity(a.len() + b.len());
        data.extend_from_slice(&a.data);
        data.extend_from_slice(&b.data);
        Ok(Tensor { shape, data })
    }

    /// Splits along the leading dimension at `at`.
    pub fn split0(&self, at: usize) -> (Tensor, Tensor) {
        let per = self.data.len() / self.shape[0];
        let mut s1 = self.shape.clone();
        let mut s2 = self.shape.clone();
        s1[0] = at;
        s2[0] = self.shape[0] - at;
        (
            Tensor { shape: s1, data: self.data[..at * per].to_vec() },
            Tensor { shape: s2, data: self.data[at * per..].to_vec() },
        )
    }

    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(what.to_string()))
        }
    }
}

/// A trainable tensor with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Parameter {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::from_vec(&[2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::from_vec(&[1, 1, 1, 1, 1], vec![1.0]).is_err());
        assert_eq!(Tensor::from_vec(&[2, 3], vec![0.0; 6]).unwrap().len(), 6);
    }

    #[test]
    fn concat_and_split_are_inverse() {
        let a = Tensor::from_vec(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::from_vec(&[2, 2, 2], (5..13).map(f64::from).collect()).unwrap();
        let ab = Tensor::concat0(&a, &b).unwrap();
        assert_eq!(ab.shape(), &[3, 2, 2]);
        let (a2, b2) = ab.split0(1);
        assert_eq!((a2, b2), (a, b));
    }

    #[test]
    fn non_finite_is_detected() {
        let t = Tensor::from_vec(&[2], vec![1.0, f64::NAN]).unwrap();
        assert!(t.ensure_finite("t").is_err());
    }
}
