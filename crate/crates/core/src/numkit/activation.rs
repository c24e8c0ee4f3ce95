/// Largest f64 strictly below 1.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

/// Logistic function `1/(1+e^{−x})`.
///
/// Saturated tails are clamped to the nearest representable values inside
/// (0, 1) so the open-interval range holds for every finite input.
pub fn sigmoid(x: f64) -> f64 {
    let y = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    y.clamp(f64::MIN_POSITIVE, BELOW_ONE)
}

/// Derivative expressed through the forward output `y = sigmoid(x)`.
pub fn sigmoid_backward(y: f64) -> f64 {
    y * (1.0 - y)
}

pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

pub fn relu_in_place(xs: &mut [f64]) {
    xs.iter_mut().for_each(|v| *v = relu(*v));
}

/// Masks `grad` by the positivity of the forward output.
pub fn relu_backward_in_place(output: &[f64], grad: &mut [f64]) {
    for (g, y) in grad.iter_mut().zip(output) {
        if *y <= 0.0 {
            *g = 0.0;
        }
    }
}
