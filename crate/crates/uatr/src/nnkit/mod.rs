//! Tensor kernels with reverse-mode differentiation, the compact residual
//! classifier with attention pooling, losses, Adam, and the learning-rate
//! schedule.

mod adam;
mod checkpoint;
mod graph;
mod loss;
mod model;
mod schedule;
mod tensor;

pub use adam::{adam_step, AdamParams};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use graph::{softmax_row, Graph, NodeId, PROB_FLOOR};
pub use loss::{cross_entropy_value, kl_value, softmax_rows, total_loss};
pub use model::{BoundModel, ForwardPass, LogitBundle, ModelConfig, ModelState, Param};
pub use schedule::lr_schedule;
pub use tensor::Tensor;
