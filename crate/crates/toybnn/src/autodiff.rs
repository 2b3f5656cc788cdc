//! A small reverse-mode differentiation tape over dense matrices.
//!
//! Nodes are appended in evaluation order, so a single reverse sweep from
//! the output visits every node after all of its consumers.

use crate::divergence::{
    kl_diag_gaussian, kl_diag_gaussian_grad, renyi_divergence_diag, renyi_divergence_diag_grad,
};
use crate::error::Result;
use crate::tensor::{sigmoid, softmax_rows, softplus, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Softplus(Var),
    Log(Var),
    Square(Var),
    Sum(Var),
    SoftmaxNll { logits: Var, labels: Vec<usize>, probs: Tensor },
    Kl { mu: Var, sigma: Var, prior_mean: f64, prior_std: f64 },
    Renyi { mu: Var, sigma: Var, prior_mean: f64, prior_std: f64, alpha: f64 },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of one scalar output with respect to the graph's inputs.
#[derive(Debug)]
pub struct Gradients(Vec<Option<Tensor>>);

impl Gradients {
    /// Gradient for `v`, zeros if the output does not depend on it.
    pub fn get(&self, v: Var, shape: (usize, usize)) -> Tensor {
        self.0[v.0].clone().unwrap_or_else(|| Tensor::zeros(shape.0, shape.1))
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// Adds a `1 × k` row to every row of an `n × k` matrix.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let v = self.value(a).add_row(self.value(bias));
        self.push(v, Op::AddRow(a, bias))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a).map(|x| k * x);
        self.push(v, Op::Scale(a, k))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).map(softplus);
        self.push(v, Op::Softplus(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::ln);
        self.push(v, Op::Log(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    /// `Σ_rows −log softmax(logits)[label]`.
    pub fn softmax_nll(&mut self, logits: Var, labels: &[usize]) -> Var {
        let z = self.value(logits);
        assert_eq!(z.rows(), labels.len(), "one label per logit row");
        let probs = softmax_rows(z);
        let mut total = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let row = z.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[y];
        }
        self.push(Tensor::scalar(total), Op::SoftmaxNll { logits, labels: labels.to_vec(), probs })
    }

    /// Closed-form `KL(N(μ, σ²) ‖ N(m, s²))` summed over all entries.
    pub fn kl_to_prior(&mut self, mu: Var, sigma: Var, prior_mean: f64, prior_std: f64) -> Result<Var> {
        let n = self.value(mu).len();
        let value = kl_diag_gaussian(
            self.value(mu).data(),
            self.value(sigma).data(),
            &vec![prior_mean; n],
            &vec![prior_std; n],
        )?;
        Ok(self.push(Tensor::scalar(value), Op::Kl { mu, sigma, prior_mean, prior_std }))
    }

    /// Closed-form Rényi α-divergence `D_α(N(μ, σ²) ‖ N(m, s²))`.
    pub fn renyi_to_prior(
        &mut self,
        mu: Var,
        sigma: Var,
        prior_mean: f64,
        prior_std: f64,
        alpha: f64,
    ) -> Result<Var> {
        let n = self.value(mu).len();
        let value = renyi_divergence_diag(
            self.value(mu).data(),
            self.value(sigma).data(),
            &vec![prior_mean; n],
            &vec![prior_std; n],
            alpha,
        )?;
        Ok(self.push(Tensor::scalar(value), Op::Renyi { mu, sigma, prior_mean, prior_std, alpha }))
    }

    /// Reverse sweep from the scalar `output`.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(self.value(output).len(), 1, "backward needs a scalar output");
        let mut grads: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Tensor::scalar(1.0));

        fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => grads[idx] = Some(g),
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(self.value(*b));
                    let gb = self.value(*a).t_matmul(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::AddRow(a, bias) => {
                    acc(&mut grads, *bias, g.sum_rows());
                    acc(&mut grads, *a, g);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, g.map(|x| -x));
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_map(self.value(*b), |x, y| x * y);
                    let gb = g.zip_map(self.value(*a), |x, y| x * y);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Scale(a, k) => acc(&mut grads, *a, g.map(|x| k * x)),
                Op::Tanh(a) => acc(&mut grads, *a, g.zip_map(&node.value, |x, y| x * (1.0 - y * y))),
                Op::Softplus(a) => acc(&mut grads, *a, g.zip_map(self.value(*a), |x, z| x * sigmoid(z))),
                Op::Log(a) => acc(&mut grads, *a, g.zip_map(self.value(*a), |x, z| x / z)),
                Op::Square(a) => acc(&mut grads, *a, g.zip_map(self.value(*a), |x, z| 2.0 * x * z)),
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    acc(&mut grads, *a, Tensor::filled(r, c, g.item()));
                }
                Op::SoftmaxNll { logits, labels, probs } => {
                    let upstream = g.item();
                    let mut d = probs.clone();
                    let cols = d.cols();
                    for (i, &y) in labels.iter().enumerate() {
                        d.data_mut()[i * cols + y] -= 1.0;
                    }
                    d.data_mut().iter_mut().for_each(|x| *x *= upstream);
                    acc(&mut grads, *logits, d);
                }
                Op::Kl { mu, sigma, prior_mean, prior_std } => {
                    let (r, c) = self.value(*mu).shape();
                    let n = r * c;
                    let (dm, ds) = kl_diag_gaussian_grad(
                        self.value(*mu).data(),
                        self.value(*sigma).data(),
                        &vec![*prior_mean; n],
                        &vec![*prior_std; n],
                    );
                    let up = g.item();
                    acc(&mut grads, *mu, Tensor::new(r, c, dm).map(|x| up * x));
                    acc(&mut grads, *sigma, Tensor::new(r, c, ds).map(|x| up * x));
                }
                Op::Renyi { mu, sigma, prior_mean, prior_std, alpha } => {
                    let (r, c) = self.value(*mu).shape();
                    let n = r * c;
                    let (dm, ds) = renyi_divergence_diag_grad(
                        self.value(*mu).data(),
                        self.value(*sigma).data(),
                        &vec![*prior_mean; n],
                        &vec![*prior_std; n],
                        *alpha,
                    );
                    let up = g.item();
                    acc(&mut grads, *mu, Tensor::new(r, c, dm).map(|x| up * x));
                    acc(&mut grads, *sigma, Tensor::new(r, c, ds).map(|x| up * x));
                }
            }
        }
        Gradients(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numeric_grad(f: impl Fn(&Tensor) -> f64, x: &Tensor) -> Tensor {
        let h = 1e-6;
        let mut out = Tensor::zeros(x.rows(), x.cols());
        for k in 0..x.len() {
            let mut up = x.clone();
            let mut dn = x.clone();
            up.data_mut()[k] += h;
            dn.data_mut()[k] -= h;
            out.data_mut()[k] = (f(&up) - f(&dn)) / (2.0 * h);
        }
        out
    }

    fn close(a: &Tensor, b: &Tensor, tol: f64) {
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < tol * (1.0 + y.abs()), "{x} vs {y}");
        }
    }

    #[test]
    fn chain_of_elementwise_ops() {
        let x0 = Tensor::new(2, 2, vec![0.3, -0.7, 1.1, 0.2]);
        let f = |x: &Tensor| {
            let mut g = Graph::new();
            let a = g.input(x.clone());
            let t = g.tanh(a);
            let s = g.softplus(t);
            let q = g.square(s);
            let m = g.mul(q, a);
            let l = g.log(s);
            let d = g.sub(m, l);
            let e = g.scale(d, 1.5);
            let sum = g.sum(e);
            (g, a, sum)
        };
        let (g, a, out) = f(&x0);
        let grad = g.backward(out).get(a, (2, 2));
        let num = numeric_grad(|x| { let (g, _, o) = f(x); g.value(o).item() }, &x0);
        close(&grad, &num, 1e-7);
    }

    #[test]
    fn dense_layer_with_nll() {
        let x = Tensor::new(3, 2, vec![0.5, -1.0, 1.5, 0.2, -0.3, 0.8]);
        let w0 = Tensor::new(2, 3, vec![0.1, -0.2, 0.3, 0.4, 0.0, -0.5]);
        let b0 = Tensor::new(1, 3, vec![0.05, -0.1, 0.2]);
        let labels = [2, 0, 1];
        let run = |w: &Tensor, b: &Tensor| {
            let mut g = Graph::new();
            let xi = g.input(x.clone());
            let wi = g.input(w.clone());
            let bi = g.input(b.clone());
            let z = g.matmul(xi, wi);
            let z = g.add_row(z, bi);
            let loss = g.softmax_nll(z, &labels);
            (g, wi, bi, loss)
        };
        let (g, wi, bi, loss) = run(&w0, &b0);
        let grads = g.backward(loss);
        let nw = numeric_grad(|w| { let (g, _, _, l) = run(w, &b0); g.value(l).item() }, &w0);
        let nb = numeric_grad(|b| { let (g, _, _, l) = run(&w0, b); g.value(l).item() }, &b0);
        close(&grads.get(wi, (2, 3)), &nw, 1e-7);
        close(&grads.get(bi, (1, 3)), &nb, 1e-7);
    }

    #[test]
    fn divergence_nodes() {
        let mu0 = Tensor::new(1, 3, vec![0.2, -0.4, 1.0]);
        let rho0 = Tensor::new(1, 3, vec![-1.0, 0.5, 0.0]);
        for renyi in [false, true] {
            let run = |mu: &Tensor, rho: &Tensor| {
                let mut g = Graph::new();
                let m = g.input(mu.clone());
                let r = g.input(rho.clone());
                let s = g.softplus(r);
                let d = if renyi {
                    g.renyi_to_prior(m, s, 0.0, 1.0, 0.5).unwrap()
                } else {
                    g.kl_to_prior(m, s, 0.0, 1.0).unwrap()
                };
                (g, m, r, d)
            };
            let (g, m, r, d) = run(&mu0, &rho0);
            let grads = g.backward(d);
            let nm = numeric_grad(|mu| { let (g, _, _, d) = run(mu, &rho0); g.value(d).item() }, &mu0);
            let nr = numeric_grad(|rho| { let (g, _, _, d) = run(&mu0, rho); g.value(d).item() }, &rho0);
            close(&grads.get(m, (1, 3)), &nm, 1e-7);
            close(&grads.get(r, (1, 3)), &nr, 1e-7);
        }
    }

    #[test]
    fn unused_inputs_get_zero_gradient() {
        let mut g = Graph::new();
        let a = g.input(Tensor::scalar(2.0));
        let b = g.input(Tensor::new(1, 2, vec![1.0, 1.0]));
        let s = g.square(a);
        let grads = g.backward(s);
        assert_eq!(grads.get(a, (1, 1)).item(), 4.0);
        assert_eq!(grads.get(b, (1, 2)), Tensor::zeros(1, 2));
    }
}
