//! A small value-semantic tensor kernel with tape-based reverse-mode
//! differentiation, sized for desk-scale convolutional models.

mod adam;
mod element;
mod graph;
mod kernels;
mod param;
#[allow(clippy::module_inception)]
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use element::Element;
pub use graph::{Gradients, Graph, Var};
pub(crate) use graph::softmax_row;
pub use kernels::conv_output_len;
pub use param::{ParamStore, Parameter};
pub use tensor::Tensor;
