/// Clamp applied to predictions before taking logarithms.
pub const BCE_EPS: f64 = 1e-7;

/// Binary cross-entropy and its derivative w.r.t. the prediction.
///
/// The prediction is clamped to `[BCE_EPS, 1 - BCE_EPS]`; the gradient is
/// taken at the clamped point.
pub fn bce_loss(prediction: f64, label: bool) -> (f64, f64) {
    bce_loss_weighted(prediction, label, 1.0)
}

/// BCE with the positive term scaled by `positive_weight`.
pub fn bce_loss_weighted(prediction: f64, label: bool, positive_weight: f64) -> (f64, f64) {
    let p = prediction.clamp(BCE_EPS, 1.0 - BCE_EPS);
    if label {
        (-positive_weight * p.ln(), -positive_weight / p)
    } else {
        (-(1.0 - p).ln(), 1.0 / (1.0 - p))
    }
}

/// Derivative of the unclamped weighted BCE w.r.t. the logit `z` of
/// `prediction = sigmoid(z)`: `-w (1 - p)` for positives, `p` for negatives.
///
/// Inside `[BCE_EPS, 1 - BCE_EPS]` this is the chain rule through
/// [`bce_loss_weighted`]; beyond it, it keeps saturated predictions trainable.
pub fn bce_logit_grad(prediction: f64, label: bool, positive_weight: f64) -> f64 {
    if label {
        -positive_weight * (1.0 - prediction)
    } else {
        prediction
    }
}
