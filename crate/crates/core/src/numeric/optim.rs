use super::mlp::MlpParams;
use crate::error::{Error, Result};

/// One SGD step: `v <- momentum * v + g; w <- w - lr * v`.
///
/// `velocity` must have the shape of `params`. Gradients are validated before
/// anything is written, so a non-finite gradient leaves `params` untouched.
pub fn sgd_step(
    name: &str,
    params: &mut MlpParams,
    grads: &MlpParams,
    lr: f64,
    momentum: f64,
    velocity: &mut MlpParams,
) -> Result<()> {
    if params.spec() != grads.spec() || params.spec() != velocity.spec() {
        return Err(Error::Shape(format!("{name}: gradient shape does not match parameters")));
    }
    for (tensor, values) in grads.tensors() {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Training(format!("non-finite gradient in {name}.{tensor}[{i}]")));
        }
    }
    for ((_, w), ((_, g), (_, v))) in params
        .tensors_mut()
        .zip(grads.tensors().zip(velocity.tensors_mut()))
    {
        for ((wi, gi), vi) in w.iter_mut().zip(g).zip(v.iter_mut()) {
            *vi = momentum * *vi + gi;
            *wi -= lr * *vi;
        }
    }
    Ok(())
}
