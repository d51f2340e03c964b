//! Dense layer kit with hand-written backward passes.
//!
//! Every layer keeps its weights in a [`ParamStore`] and writes gradients
//! into a separate [`Grads`] buffer, so forward passes borrow parameters
//! immutably and per-example gradients can be computed on worker threads
//! and summed in a fixed order.

pub mod checkpoint;
pub mod conv;
pub mod gcn;
pub mod gradcheck;
pub mod lstm;
pub mod ops;
pub mod optim;
pub mod param;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use conv::{conv1d, max_pool, max_pool_range, Conv1d};
pub use gcn::{gcn_layer, GcnLayer};
pub use gradcheck::{check_gradients, GradCheckReport};
pub use lstm::{BiLstm, Lstm};
pub use ops::{affine, softmax, Activation, Linear, Mlp};
pub use optim::Adam;
pub use param::{Grads, ParamId, ParamStore};
pub use tensor::Tensor;
