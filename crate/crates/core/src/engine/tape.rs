use super::kernels::{self, NormCache};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv { x: Var, kernel: Var, bias: Option<Var>, sh: usize, sw: usize },
    InstanceNorm { x: Var, gamma: Var, beta: Var, cache: NormCache },
    Relu(Var),
    Sigmoid(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MeanH(Var),
    ConcatW(Vec<Var>),
    Reshape(Var),
    Transpose(Var),
    SoftmaxRows(Var),
    Linear { x: Var, weight: Var, bias: Var },
    Attention { q: Var, k: Var, v: Var, heads: usize, probs: Vec<f64> },
    Vlad { x: Var, assign: Var, centers: Var },
    L2Rows { x: Var, row_len: usize, norms: Vec<f64> },
    Sum(Var),
    Distance { a: Var, b: Var },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of a forward pass.
///
/// Nodes are appended in evaluation order, so reverse index order is a
/// reverse topological order and [`Tape::backward`] is a single sweep.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node that requires them.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{what}: {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect();
    Tensor::new(a.shape(), data).expect("shapes checked by caller")
}

fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::new(a.shape(), a.data().iter().map(|v| f(*v)).collect()).expect("same shape")
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    /// Records an input. Gradients are reported only for leaves created
    /// with `requires_grad` and for nodes computed from them.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Cross-correlation with circular padding along width and zero padding
    /// along height, "same"-sized before striding.
    pub fn conv2d_circular(&mut self, x: Var, kernel: Var, bias: Option<Var>, sh: usize, sw: usize) -> Result<Var> {
        let out = kernels::conv2d_forward(self.value(x), self.value(kernel), bias.map(|b| self.value(b)), sh, sw)?;
        let mut inputs = vec![x, kernel];
        inputs.extend(bias);
        let rg = self.any_grad(&inputs);
        Ok(self.push(out, Op::Conv { x, kernel, bias, sh, sw }, rg))
    }

    /// Per-channel spatial normalization followed by a learnable scale and shift.
    pub fn instance_norm_affine(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (out, cache) = kernels::instance_norm_forward(self.value(x), self.value(gamma), self.value(beta))?;
        let rg = self.any_grad(&[x, gamma, beta]);
        Ok(self.push(out, Op::InstanceNorm { x, gamma, beta, cache }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = map(self.value(x), |v| v.max(0.0));
        let rg = self.any_grad(&[x]);
        self.push(out, Op::Relu(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = map(self.value(x), |v| 1.0 / (1.0 + (-v).exp()));
        let rg = self.any_grad(&[x]);
        self.push(out, Op::Sigmoid(x), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "add")?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x + y);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "sub")?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x - y);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "mul")?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x * y);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let out = map(self.value(x), |v| v * factor);
        let rg = self.any_grad(&[x]);
        self.push(out, Op::Scale(x, factor), rg)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let out = map(self.value(x), |v| v + c);
        let rg = self.any_grad(&[x]);
        self.push(out, Op::AddScalar(x), rg)
    }

    /// Vertical average pooling `[C, H, W] -> [C, 1, W]`.
    pub fn mean_h(&mut self, x: Var) -> Result<Var> {
        let out = kernels::mean_h_forward(self.value(x))?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::MeanH(x), rg))
    }

    pub fn concat_w(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor> = parts.iter().map(|p| self.value(*p)).collect();
        let out = kernels::concat_w_forward(&values)?;
        let rg = self.any_grad(parts);
        Ok(self.push(out, Op::ConcatW(parts.to_vec()), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).reshape(shape)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::Reshape(x), rg))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let out = kernels::transpose_forward(self.value(x))?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::Transpose(x), rg))
    }

    /// Softmax over the last axis of a `[R, L]` tensor.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let out = kernels::softmax_rows_forward(self.value(x))?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::SoftmaxRows(x), rg))
    }

    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let out = kernels::linear_forward(self.value(x), self.value(weight), self.value(bias))?;
        let rg = self.any_grad(&[x, weight, bias]);
        Ok(self.push(out, Op::Linear { x, weight, bias }, rg))
    }

    /// Attention restricted to each azimuth column: for column `w`,
    /// `softmax(Q(w) K(w)^T / sqrt(d_k)) V(w)` with `d_k = C / heads`.
    pub fn azimuth_attention(&mut self, q: Var, k: Var, v: Var, heads: usize) -> Result<Var> {
        let (out, probs) = kernels::attention_forward(self.value(q), self.value(k), self.value(v), heads)?;
        let rg = self.any_grad(&[q, k, v]);
        Ok(self.push(out, Op::Attention { q, k, v, heads, probs }, rg))
    }

    pub fn vlad_aggregate(&mut self, x: Var, assign: Var, centers: Var) -> Result<Var> {
        let out = kernels::vlad_forward(self.value(x), self.value(assign), self.value(centers))?;
        let rg = self.any_grad(&[x, assign, centers]);
        Ok(self.push(out, Op::Vlad { x, assign, centers }, rg))
    }

    /// L2-normalizes each row of a `[R, L]` tensor. Zero rows stay zero.
    pub fn l2_normalize_rows(&mut self, x: Var) -> Result<Var> {
        let (_, row_len) = self.value(x).dims2()?;
        Ok(self.l2_with_rows(x, row_len))
    }

    /// L2-normalizes a whole tensor. A zero input yields a zero output;
    /// check [`Tape::value`] norms to detect it.
    pub fn l2_normalize(&mut self, x: Var) -> Var {
        let n = self.value(x).numel();
        self.l2_with_rows(x, n)
    }

    fn l2_with_rows(&mut self, x: Var, row_len: usize) -> Var {
        let (out, norms) = kernels::l2_rows_forward(self.value(x), row_len);
        let rg = self.any_grad(&[x]);
        self.push(out, Op::L2Rows { x, row_len, norms }, rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).data().iter().sum());
        let rg = self.any_grad(&[x]);
        self.push(out, Op::Sum(x), rg)
    }

    /// Euclidean distance between two equally shaped tensors.
    pub fn distance(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "distance")?;
        let d = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::scalar(d), Op::Distance { a, b }, rg))
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let Some(node) = self.nodes.get(loss.0) else {
            return Err(Error::Backward(format!(
                "node {} has not been recorded by a forward pass",
                loss.0
            )));
        };
        if node.value.numel() != 1 {
            return Err(Error::Backward(format!(
                "loss must be a scalar, got shape {:?}",
                node.value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(node.value.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                grads[idx] = None;
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(g);
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let mut acc = |var: Var, t: Tensor| {
            if !self.nodes[var.0].requires_grad {
                return;
            }
            match &mut grads[var.0] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::Conv { x, kernel, bias, sh, sw } => {
                let (gx, gk, gb) = kernels::conv2d_backward(val(*x), val(*kernel), *sh, *sw, g)?;
                acc(*x, gx);
                acc(*kernel, gk);
                if let Some(b) = bias {
                    acc(*b, gb);
                }
            }
            Op::InstanceNorm { x, gamma, beta, cache } => {
                let (gx, gg, gb) = kernels::instance_norm_backward(val(*x), val(*gamma), cache, g)?;
                acc(*x, gx);
                acc(*gamma, gg);
                acc(*beta, gb);
            }
            Op::Relu(x) => acc(*x, zip_map(val(*x), g, |v, gv| if v > 0.0 { gv } else { 0.0 })),
            Op::Sigmoid(x) => acc(*x, zip_map(&node.value, g, |s, gv| gv * s * (1.0 - s))),
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, map(g, |v| -v));
            }
            Op::Mul(a, b) => {
                acc(*a, zip_map(g, val(*b), |gv, bv| gv * bv));
                acc(*b, zip_map(g, val(*a), |gv, av| gv * av));
            }
            Op::Scale(x, f) => acc(*x, map(g, |v| v * f)),
            Op::AddScalar(x) => acc(*x, g.clone()),
            Op::MeanH(x) => acc(*x, kernels::mean_h_backward(val(*x).shape(), g)?),
            Op::ConcatW(parts) => {
                let widths: Vec<usize> = parts.iter().map(|p| val(*p).shape()[2]).collect();
                for (p, t) in parts.iter().zip(kernels::concat_w_backward(&widths, g)?) {
                    acc(*p, t);
                }
            }
            Op::Reshape(x) => acc(*x, g.reshape(val(*x).shape())?),
            Op::Transpose(x) => acc(*x, kernels::transpose_forward(g)?),
            Op::SoftmaxRows(x) => acc(*x, kernels::softmax_rows_backward(&node.value, g)?),
            Op::Linear { x, weight, bias } => {
                let (gx, gw, gb) = kernels::linear_backward(val(*x), val(*weight), g)?;
                acc(*x, gx);
                acc(*weight, gw);
                acc(*bias, gb);
            }
            Op::Attention { q, k, v, heads, probs } => {
                let (gq, gk, gv) = kernels::attention_backward(val(*q), val(*k), val(*v), *heads, probs, g)?;
                acc(*q, gq);
                acc(*k, gk);
                acc(*v, gv);
            }
            Op::Vlad { x, assign, centers } => {
                let (gx, ga, gc) = kernels::vlad_backward(val(*x), val(*assign), val(*centers), g)?;
                acc(*x, gx);
                acc(*assign, ga);
                acc(*centers, gc);
            }
            Op::L2Rows { x, row_len, norms } => {
                acc(*x, kernels::l2_rows_backward(&node.value, norms, *row_len, g));
            }
            Op::Sum(x) => acc(*x, Tensor::full(val(*x).shape(), g.item()?)),
            Op::Distance { a, b } => {
                let d = node.value.item()?;
                let gv = g.item()?;
                let (av, bv) = (val(*a), val(*b));
                let scale = if d > 0.0 { gv / d } else { 0.0 };
                acc(*a, zip_map(av, bv, |x, y| (x - y) * scale));
                acc(*b, zip_map(av, bv, |x, y| (y - x) * scale));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, -2.0, 3.0]), true);
        let s = t.sum(x);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn relu_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![-1.0, 2.0]), true);
        let r = t.relu(x);
        assert_eq!(t.value(r).data(), &[0.0, 2.0]);
        let s = t.sum(r);
        assert_eq!(t.backward(s).unwrap().get(x).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn fan_out_accumulates() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![0.5, 4.0]), true);
        let y = t.add(x, x).unwrap();
        let s = t.sum(y);
        assert_eq!(t.backward(s).unwrap().get(x).unwrap().data(), &[2.0, 2.0]);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0]), true);
        let c = t.constant(Tensor::vector(vec![3.0]));
        let y = t.mul(x, c).unwrap();
        let s = t.sum(y);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[3.0]);
        assert!(g.get(c).is_none());
    }

    #[test]
    fn backward_errors() {
        let mut t = Tape::new();
        assert!(matches!(t.backward(Var(0)), Err(Error::Backward(_))));
        let x = t.leaf(Tensor::vector(vec![1.0, 2.0]), true);
        assert!(matches!(t.backward(x), Err(Error::Backward(_))));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::vector(vec![1.0, 2.0]), true);
        let b = t.leaf(Tensor::vector(vec![1.0]), true);
        assert!(matches!(t.add(a, b), Err(Error::Shape(_))));
        assert!(matches!(t.distance(a, b), Err(Error::Shape(_))));
    }
}
