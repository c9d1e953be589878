//! Dense linear algebra, MLPs with analytic gradients, loss, SGD and the
//! learning-rate schedule.

pub mod loss;
pub mod matrix;
pub mod mlp;
pub mod optim;
pub mod schedule;

pub use loss::{bce_logit_grad, bce_loss, bce_loss_weighted, BCE_EPS};
pub use matrix::Matrix;
pub use mlp::{mlp_backward, mlp_backward_acc, mlp_backward_from_preact_acc, mlp_eval, mlp_forward, Activation, Layer, LayerSpec, MlpParams, MlpSpec, Tape};
pub use optim::sgd_step;
pub use schedule::{lr_at_epoch, TrainSchedule};
