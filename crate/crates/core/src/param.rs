use crate::tensor::Tensor;

/// A named, ordered collection of trainable tensors.
///
/// Visiting order is fixed per type; the optimizer, checkpoint writer and
/// gradient checker all rely on it.
pub trait ParamSet {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor));

    fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit(&mut |name, _| out.push(name.to_string()));
        out
    }

    fn num_tensors(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, _| n += 1);
        n
    }

    fn num_scalars(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, t| n += t.len());
        n
    }

    fn zero_grads(&mut self) {
        self.visit_mut(&mut |_, t| t.zero_grad());
    }

    /// Copies of every gradient slot in visiting order (zeros where absent).
    fn grads(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        self.visit(&mut |_, t| out.push(t.grad.clone().unwrap_or_else(|| vec![0.0; t.len()])));
        out
    }
}
