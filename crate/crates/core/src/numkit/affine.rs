use super::tensor::{FeatureVec, Tensor};
use crate::error::{Error, Result};

/// Gradients of `y = W·x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineGrads {
    pub weights: Tensor,
    pub bias: Vec<f64>,
    pub input: Vec<f64>,
}

fn check(weights: &Tensor, bias: Option<&[f64]>, x_dim: usize) -> Result<()> {
    if weights.shape().len() != 2 {
        return Err(Error::shape(format!(
            "affine weights must be rank 2, got shape {:?}",
            weights.shape()
        )));
    }
    if weights.cols() != x_dim {
        return Err(Error::shape(format!(
            "affine weights have {} columns but input has dim {x_dim}",
            weights.cols()
        )));
    }
    if let Some(b) = bias {
        if b.len() != weights.rows() {
            return Err(Error::shape(format!(
                "bias length {} does not match {} output rows",
                b.len(),
                weights.rows()
            )));
        }
    }
    Ok(())
}

/// `y = W·x + b`.
pub fn affine_map(weights: &Tensor, bias: &[f64], x: &[f64]) -> Result<FeatureVec> {
    FeatureVec::new(affine_raw(weights, Some(bias), x)?)
}

/// Same as [`affine_map`] with an optional bias and no finiteness check.
pub fn affine_raw(weights: &Tensor, bias: Option<&[f64]>, x: &[f64]) -> Result<Vec<f64>> {
    check(weights, bias, x.len())?;
    let cols = weights.cols();
    let w = weights.data();
    let y = (0..weights.rows())
        .map(|r| {
            let row = &w[r * cols..(r + 1) * cols];
            let dot: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
            dot + bias.map_or(0.0, |b| b[r])
        })
        .collect();
    Ok(y)
}

/// dL/dW = dL/dy ⊗ x, dL/db = dL/dy, dL/dx = Wᵀ·dL/dy.
pub fn affine_backward(weights: &Tensor, x: &[f64], grad_y: &[f64]) -> Result<AffineGrads> {
    let mut grads = AffineGrads {
        weights: weights.zeros_like(),
        bias: vec![0.0; weights.rows()],
        input: vec![0.0; x.len()],
    };
    affine_backward_into(
        weights,
        x,
        grad_y,
        grads.weights.data_mut(),
        Some(&mut grads.bias),
        &mut grads.input,
    )?;
    Ok(grads)
}

/// Accumulating variant used by the layers: gradients are added, not assigned.
pub fn affine_backward_into(
    weights: &Tensor,
    x: &[f64],
    grad_y: &[f64],
    grad_w: &mut [f64],
    grad_b: Option<&mut [f64]>,
    grad_x: &mut [f64],
) -> Result<()> {
    check(weights, None, x.len())?;
    let (rows, cols) = (weights.rows(), weights.cols());
    if grad_y.len() != rows || grad_w.len() != rows * cols || grad_x.len() != cols {
        return Err(Error::shape("affine backward buffers do not match weights"));
    }
    let w = weights.data();
    for r in 0..rows {
        let g = grad_y[r];
        if g == 0.0 {
            continue;
        }
        let gw = &mut grad_w[r * cols..(r + 1) * cols];
        for (gw, xv) in gw.iter_mut().zip(x) {
            *gw += g * xv;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (gx, wv) in grad_x.iter_mut().zip(row) {
            *gx += g * wv;
        }
    }
    if let Some(gb) = grad_b {
        for (b, g) in gb.iter_mut().zip(grad_y) {
            *b += g;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::finite_diff::{finite_diff_grad, max_relative_error};

    #[test]
    fn identity_weights_pass_input_through() {
        let w = Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        let y = affine_map(&w, &[0.0, 0.0], &[2.0, -1.0]).unwrap();
        assert_eq!(y.as_slice(), &[2.0, -1.0]);
    }

    #[test]
    fn hand_matrix_multiply() {
        let w = Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let y = affine_map(&w, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(y.as_slice(), &[3.0, 7.0]);
    }

    #[test]
    fn column_mismatch_is_shape_error() {
        let w = Tensor::from_rows(&[&[1.0, 2.0, 3.0]]).unwrap();
        assert!(matches!(affine_map(&w, &[0.0], &[1.0, 1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn backward_matches_central_differences() {
        let w = Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let b = [0.25, -0.5];
        let x = [1.0, 1.0];
        // L = Σ c_r y_r with fixed upstream weights
        let up = [0.7, -1.3];
        let grads = affine_backward(&w, &x, &up).unwrap();

        let loss_w = |p: &[f64]| {
            let wt = Tensor::new(vec![2, 2], p.to_vec()).unwrap();
            let y = affine_raw(&wt, Some(&b), &x).unwrap();
            y.iter().zip(&up).map(|(a, c)| a * c).sum::<f64>()
        };
        let fd_w = finite_diff_grad(loss_w, w.data(), 1e-5).unwrap();
        assert!(max_relative_error(grads.weights.data(), &fd_w) < 1e-6);

        let loss_x = |p: &[f64]| {
            let y = affine_raw(&w, Some(&b), p).unwrap();
            y.iter().zip(&up).map(|(a, c)| a * c).sum::<f64>()
        };
        let fd_x = finite_diff_grad(loss_x, &x, 1e-5).unwrap();
        assert!(max_relative_error(&grads.input, &fd_x) < 1e-6);

        let loss_b = |p: &[f64]| {
            let y = affine_raw(&w, Some(p), &x).unwrap();
            y.iter().zip(&up).map(|(a, c)| a * c).sum::<f64>()
        };
        let fd_b = finite_diff_grad(loss_b, &b, 1e-5).unwrap();
        assert!(max_relative_error(&grads.bias, &fd_b) < 1e-6);
    }
}
