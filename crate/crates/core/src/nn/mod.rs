//! Dense tensors and hand-written reverse-mode derivatives.
//!
//! There is no general autodiff graph: each layer exposes a forward pass and
//! a vector-Jacobian product over its cached inputs, and the model chains
//! them explicitly. Every backward pass is checked against central finite
//! differences in the test suite.

mod conv;
mod gradcheck;
mod loss;
mod lstm;
mod tensor;

pub use conv::{conv2d, conv2d_vjp, Conv2d, Conv2dGrads};
pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use loss::{weighted_nll, weighted_softmax_ce, ClassWeights, WeightedNll};
pub use lstm::{ConvLstmCell, ConvLstmState, LstmStepCache, LstmStepGrads};
pub use tensor::{Parameter, Tensor};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
