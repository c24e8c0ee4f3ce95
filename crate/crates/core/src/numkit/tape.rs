//! Named parameter traversal and gradient accumulators.
//!
//! Every trainable structure exposes its tensors in a fixed order through
//! [`Parameters`]. Gradients are stored in a second instance of the same
//! structure, so a gradient always has exactly the shape of its parameter.

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub trait Parameters {
    /// Visits every trainable tensor in a fixed order with its dotted name.
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor));

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, t| n += t.len());
        n
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.visit("", &mut |_, t| out.extend_from_slice(t.data()));
        out
    }

    fn load_flat(&mut self, values: &[f64]) -> Result<()> {
        let n = self.param_count();
        if values.len() != n {
            return Err(Error::shape(format!(
                "flat parameter vector has {} entries, expected {n}",
                values.len()
            )));
        }
        let mut offset = 0;
        self.visit_mut("", &mut |_, t| {
            let len = t.len();
            t.data_mut().copy_from_slice(&values[offset..offset + len]);
            offset += len;
        });
        Ok(())
    }

    fn zero_all(&mut self) {
        self.visit_mut("", &mut |_, t| t.fill(0.0));
    }

    fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit("", &mut |n, _| out.push(n.to_string()));
        out
    }
}

/// Joins a prefix and a field name with a dot.
pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Gradient accumulators shaped like the parameters they belong to.
#[derive(Debug, Clone)]
pub struct GradTape<P> {
    grads: P,
}

impl<P: Parameters + Clone> GradTape<P> {
    pub fn new(params: &P) -> Self {
        let mut grads = params.clone();
        grads.zero_all();
        GradTape { grads }
    }

    pub fn clear(&mut self) {
        self.grads.zero_all();
    }

    pub fn grads(&self) -> &P {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut P {
        &mut self.grads
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.grads.flatten()
    }
}

impl Parameters for Tensor {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(prefix, self)
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(prefix, self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone)]
    struct Pair {
        a: Tensor,
        b: Tensor,
    }

    impl Parameters for Pair {
        fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
            f(&join(prefix, "a"), &self.a);
            f(&join(prefix, "b"), &self.b);
        }
        fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
            f(&join(prefix, "a"), &mut self.a);
            f(&join(prefix, "b"), &mut self.b);
        }
    }

    #[test]
    fn tape_matches_shapes_and_clears() {
        let p = Pair {
            a: Tensor::filled(&[2, 3], 1.0),
            b: Tensor::filled(&[4], 2.0),
        };
        let mut tape = GradTape::new(&p);
        assert_eq!(tape.grads().a.shape(), &[2, 3]);
        assert_eq!(tape.grads().b.shape(), &[4]);
        tape.grads_mut().a.fill(3.0);
        tape.clear();
        assert!(tape.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn flatten_roundtrip() {
        let mut p = Pair {
            a: Tensor::zeros(&[2]),
            b: Tensor::zeros(&[1]),
        };
        p.load_flat(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(p.flatten(), vec![1.0, 2.0, 3.0]);
        assert_eq!(p.names(), vec!["a", "b"]);
        assert!(p.load_flat(&[1.0]).is_err());
    }
}
