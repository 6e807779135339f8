//! Reverse-mode automatic differentiation over small dense `f64` matrices.
//!
//! A [`Graph`] is an append-only tape. Builder methods evaluate eagerly and
//! record the op; [`Graph::backward`] sweeps the tape in reverse, scattering
//! gradients into every node that (transitively) requires them. The op set is
//! exactly what the decoder blocks and the attention synthesizers need.

use ndarray::{Array2, Axis};

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    /// Broadcast-add a 1 x m row to every row of an n x m matrix.
    AddRow(NodeId, NodeId),
    Relu(NodeId),
    /// Rowwise softmax over positions j <= i; j > i produce exact zeros.
    CausalSoftmax(NodeId),
    /// Rowwise normalization with learned gain/bias (both 1 x m).
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
    },
    Transpose(NodeId),
    /// Horizontally concatenate `reps` copies of the input.
    TileCols(NodeId, usize),
    ConcatCols(Vec<NodeId>),
    SliceCols {
        x: NodeId,
        start: usize,
        len: usize,
    },
    /// Mean over every element, producing a 1 x 1 scalar.
    MeanAll(NodeId),
}

struct Node {
    value: Array2<f64>,
    grad: Option<Array2<f64>>,
    op: Op,
    needs_grad: bool,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Array2<f64>, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Constant input; gradients are not tracked through it.
    pub fn constant(&mut self, value: Array2<f64>) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    /// Trainable leaf; gradients accumulate here.
    pub fn parameter(&mut self, value: Array2<f64>) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.nodes[id.0].value
    }

    /// Gradient of the last backward target w.r.t. this node (zeros if the
    /// node was not reached).
    pub fn grad(&self, id: NodeId) -> Array2<f64> {
        match &self.nodes[id.0].grad {
            Some(g) => g.clone(),
            None => Array2::zeros(self.nodes[id.0].value.raw_dim()),
        }
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ar, ac) = self.value(a).dim();
        let (br, bc) = self.value(b).dim();
        assert_eq!(ac, br, "matmul {ar}x{ac} . {br}x{bc}");
        let v = self.value(a).dot(self.value(b));
        let needs = self.needs(a) || self.needs(b);
        self.push(v, Op::MatMul(a, b), needs)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "add shape");
        let v = self.value(a) + self.value(b);
        let needs = self.needs(a) || self.needs(b);
        self.push(v, Op::Add(a, b), needs)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "sub shape");
        let v = self.value(a) - self.value(b);
        let needs = self.needs(a) || self.needs(b);
        self.push(v, Op::Sub(a, b), needs)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "mul shape");
        let v = self.value(a) * self.value(b);
        let needs = self.needs(a) || self.needs(b);
        self.push(v, Op::Mul(a, b), needs)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a) * c;
        let needs = self.needs(a);
        self.push(v, Op::Scale(a, c), needs)
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let (_, ac) = self.value(a).dim();
        let (rr, rc) = self.value(row).dim();
        assert_eq!((rr, rc), (1, ac), "add_row shape");
        let v = self.value(a) + &self.value(row).row(0);
        let needs = self.needs(a) || self.needs(row);
        self.push(v, Op::AddRow(a, row), needs)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(|x| x.max(0.0));
        let needs = self.needs(a);
        self.push(v, Op::Relu(a), needs)
    }

    pub fn causal_softmax(&mut self, a: NodeId) -> NodeId {
        let x = self.value(a);
        let (n, m) = x.dim();
        assert_eq!(n, m, "causal softmax needs a square score matrix");
        let mut v = Array2::zeros((n, m));
        for i in 0..n {
            let visible = &x.row(i).to_vec()[..=i];
            let max = visible.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for (j, s) in visible.iter().enumerate() {
                let e = (s - max).exp();
                v[[i, j]] = e;
                denom += e;
            }
            for j in 0..=i {
                v[[i, j]] /= denom;
            }
        }
        let needs = self.needs(a);
        self.push(v, Op::CausalSoftmax(a), needs)
    }

    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> NodeId {
        let xv = self.value(x);
        let (n, m) = xv.dim();
        assert_eq!(self.value(gamma).dim(), (1, m), "layer_norm gamma");
        assert_eq!(self.value(beta).dim(), (1, m), "layer_norm beta");
        let mut v = Array2::zeros((n, m));
        for i in 0..n {
            let row = xv.row(i);
            let mean = row.sum() / m as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / m as f64;
            let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for j in 0..m {
                let xhat = (row[j] - mean) * inv_std;
                v[[i, j]] = xhat * self.value(gamma)[[0, j]] + self.value(beta)[[0, j]];
            }
        }
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        self.push(v, Op::LayerNorm { x, gamma, beta }, needs)
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).t().to_owned();
        let needs = self.needs(a);
        self.push(v, Op::Transpose(a), needs)
    }

    pub fn tile_cols(&mut self, a: NodeId, reps: usize) -> NodeId {
        assert!(reps >= 1, "tile_cols reps");
        let x = self.value(a);
        let (n, k) = x.dim();
        let mut v = Array2::zeros((n, k * reps));
        for r in 0..reps {
            v.slice_mut(ndarray::s![.., r * k..(r + 1) * k]).assign(x);
        }
        let needs = self.needs(a);
        self.push(v, Op::TileCols(a, reps), needs)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let n = self.value(parts[0]).nrows();
        let total: usize = parts.iter().map(|p| self.value(*p).ncols()).sum();
        let mut v = Array2::zeros((n, total));
        let mut at = 0;
        for p in parts {
            let x = self.value(*p);
            assert_eq!(x.nrows(), n, "concat_cols row count");
            v.slice_mut(ndarray::s![.., at..at + x.ncols()]).assign(x);
            at += x.ncols();
        }
        let needs = parts.iter().any(|p| self.needs(*p));
        self.push(v, Op::ConcatCols(parts.to_vec()), needs)
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let xv = self.value(x);
        assert!(start + len <= xv.ncols(), "slice_cols range");
        let v = xv.slice(ndarray::s![.., start..start + len]).to_owned();
        let needs = self.needs(x);
        self.push(v, Op::SliceCols { x, start, len }, needs)
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let x = self.value(a);
        let mean = x.sum() / (x.len() as f64);
        let needs = self.needs(a);
        self.push(Array2::from_elem((1, 1), mean), Op::MeanAll(a), needs)
    }

    fn accumulate(&mut self, id: NodeId, delta: &Array2<f64>) {
        if !self.nodes[id.0].needs_grad {
            return;
        }
        match &mut self.nodes[id.0].grad {
            Some(g) => *g += delta,
            None => self.nodes[id.0].grad = Some(delta.clone()),
        }
    }

    /// Backpropagates from a 1 x 1 node, seeding its gradient with 1.
    pub fn backward(&mut self, target: NodeId) {
        assert_eq!(self.value(target).dim(), (1, 1), "backward target must be scalar");
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.nodes[target.0].grad = Some(Array2::ones((1, 1)));

        for idx in (0..=target.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let grad = match &self.nodes[idx].grad {
                Some(g) => g.clone(),
                None => continue,
            };
            match self.nodes[idx].op.clone() {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let da = grad.dot(&self.value(b).t());
                    let db = self.value(a).t().dot(&grad);
                    self.accumulate(a, &da);
                    self.accumulate(b, &db);
                }
                Op::Add(a, b) => {
                    self.accumulate(a, &grad);
                    self.accumulate(b, &grad);
                }
                Op::Sub(a, b) => {
                    self.accumulate(a, &grad);
                    let neg = -&grad;
                    self.accumulate(b, &neg);
                }
                Op::Mul(a, b) => {
                    let da = &grad * self.value(b);
                    let db = &grad * self.value(a);
                    self.accumulate(a, &da);
                    self.accumulate(b, &db);
                }
                Op::Scale(a, c) => {
                    let da = &grad * c;
                    self.accumulate(a, &da);
                }
                Op::AddRow(a, row) => {
                    self.accumulate(a, &grad);
                    let summed = grad.sum_axis(Axis(0)).insert_axis(Axis(0));
                    self.accumulate(row, &summed);
                }
                Op::Relu(a) => {
                    let da = &grad * &self.value(a).mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
                    self.accumulate(a, &da);
                }
                Op::CausalSoftmax(a) => {
                    let y = &self.nodes[idx].value;
                    let (n, _) = y.dim();
                    let mut da = Array2::zeros(y.raw_dim());
                    for i in 0..n {
                        let mut dot = 0.0;
                        for j in 0..=i {
                            dot += grad[[i, j]] * y[[i, j]];
                        }
                        for j in 0..=i {
                            da[[i, j]] = y[[i, j]] * (grad[[i, j]] - dot);
                        }
                    }
                    self.accumulate(a, &da);
                }
                Op::LayerNorm { x, gamma, beta } => {
                    let xv = self.value(x).clone();
                    let gv = self.value(gamma).clone();
                    let (n, m) = xv.dim();
                    let mf = m as f64;
                    let mut dx = Array2::zeros((n, m));
                    let mut dgamma = Array2::zeros((1, m));
                    let mut dbeta = Array2::zeros((1, m));
                    for i in 0..n {
                        let row = xv.row(i);
                        let mean = row.sum() / mf;
                        let var =
                            row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / mf;
                        let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                        let xhat: Vec<f64> = row.iter().map(|x| (x - mean) * inv_std).collect();
                        // dxhat = dy * gamma
                        let dxhat: Vec<f64> =
                            (0..m).map(|j| grad[[i, j]] * gv[[0, j]]).collect();
                        let mean_dxhat = dxhat.iter().sum::<f64>() / mf;
                        let mean_dxhat_xhat =
                            dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / mf;
                        for j in 0..m {
                            dx[[i, j]] =
                                inv_std * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
                            dgamma[[0, j]] += grad[[i, j]] * xhat[j];
                            dbeta[[0, j]] += grad[[i, j]];
                        }
                    }
                    self.accumulate(x, &dx);
                    self.accumulate(gamma, &dgamma);
                    self.accumulate(beta, &dbeta);
                }
                Op::Transpose(a) => {
                    let da = grad.t().to_owned();
                    self.accumulate(a, &da);
                }
                Op::TileCols(a, reps) => {
                    let k = self.value(a).ncols();
                    let mut da = Array2::zeros(self.value(a).raw_dim());
                    for r in 0..reps {
                        da += &grad.slice(ndarray::s![.., r * k..(r + 1) * k]);
                    }
                    self.accumulate(a, &da);
                }
                Op::ConcatCols(parts) => {
                    let mut at = 0;
                    for p in parts {
                        let w = self.value(p).ncols();
                        let dp = grad.slice(ndarray::s![.., at..at + w]).to_owned();
                        self.accumulate(p, &dp);
                        at += w;
                    }
                }
                Op::SliceCols { x, start, len } => {
                    let mut dx = Array2::zeros(self.value(x).raw_dim());
                    dx.slice_mut(ndarray::s![.., start..start + len])
                        .assign(&grad);
                    self.accumulate(x, &dx);
                }
                Op::MeanAll(a) => {
                    let scale = grad[[0, 0]] / (self.value(a).len() as f64);
                    let da = Array2::from_elem(self.value(a).raw_dim(), scale);
                    self.accumulate(a, &da);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Finite-difference oracle: perturbs one leaf coordinate at a time and
    /// compares the analytic gradient of `build`'s scalar output.
    fn check_op(build: impl Fn(&mut Graph, &[NodeId]) -> NodeId, shapes: &[(usize, usize)]) {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let leaves_data: Vec<Array2<f64>> = shapes
            .iter()
            .map(|&(r, c)| {
                Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
            })
            .collect();

        let eval = |data: &[Array2<f64>]| -> (f64, Vec<Array2<f64>>) {
            let mut g = Graph::new();
            let ids: Vec<NodeId> = data.iter().map(|d| g.parameter(d.clone())).collect();
            let out = build(&mut g, &ids);
            let loss = g.mean_all(out);
            g.backward(loss);
            let grads = ids.iter().map(|id| g.grad(*id)).collect();
            (g.value(loss)[[0, 0]], grads)
        };

        let (_, analytic) = eval(&leaves_data);
        let eps = 1e-6;
        for (li, leaf) in leaves_data.iter().enumerate() {
            for idx in 0..leaf.len() {
                let (r, c) = (idx / leaf.ncols(), idx % leaf.ncols());
                let mut plus = leaves_data.clone();
                plus[li][[r, c]] += eps;
                let mut minus = leaves_data.clone();
                minus[li][[r, c]] -= eps;
                let fd = (eval(&plus).0 - eval(&minus).0) / (2.0 * eps);
                let a = analytic[li][[r, c]];
                let denom = a.abs().max(fd.abs()).max(1e-4);
                assert!(
                    (a - fd).abs() / denom < 1e-6,
                    "leaf {li} coord ({r},{c}): analytic {a} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn matmul_gradients_match_finite_differences() {
        check_op(|g, ids| g.matmul(ids[0], ids[1]), &[(3, 4), (4, 2)]);
    }

    #[test]
    fn elementwise_gradients_match_finite_differences() {
        check_op(|g, ids| g.add(ids[0], ids[1]), &[(3, 3), (3, 3)]);
        check_op(|g, ids| g.sub(ids[0], ids[1]), &[(3, 3), (3, 3)]);
        check_op(|g, ids| g.mul(ids[0], ids[1]), &[(3, 3), (3, 3)]);
        check_op(|g, ids| g.scale(ids[0], -2.5), &[(2, 5)]);
        check_op(|g, ids| g.add_row(ids[0], ids[1]), &[(4, 3), (1, 3)]);
        check_op(|g, ids| g.relu(ids[0]), &[(4, 4)]);
        check_op(|g, ids| g.transpose(ids[0]), &[(2, 5)]);
    }

    #[test]
    fn structural_op_gradients_match_finite_differences() {
        check_op(|g, ids| g.tile_cols(ids[0], 3), &[(4, 2)]);
        check_op(|g, ids| g.concat_cols(&[ids[0], ids[1]]), &[(3, 2), (3, 4)]);
        check_op(|g, ids| g.slice_cols(ids[0], 1, 3), &[(3, 6)]);
    }

    #[test]
    fn softmax_and_layernorm_gradients_match_finite_differences() {
        // Compose with mul so the loss weights each softmax entry differently;
        // a plain mean would cancel most of the Jacobian structure.
        check_op(
            |g, ids| {
                let s = g.causal_softmax(ids[0]);
                g.mul(s, ids[1])
            },
            &[(4, 4), (4, 4)],
        );
        check_op(
            |g, ids| {
                let ln = g.layer_norm(ids[0], ids[1], ids[2]);
                g.mul(ln, ids[3])
            },
            &[(4, 5), (1, 5), (1, 5), (4, 5)],
        );
    }

    #[test]
    fn causal_softmax_rows_are_stochastic_and_masked() {
        let mut g = Graph::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = g.constant(Array2::from_shape_fn((6, 6), |_| rng.random_range(-4.0..4.0)));
        let y = g.causal_softmax(x);
        let v = g.value(y);
        for i in 0..6 {
            let visible: f64 = (0..=i).map(|j| v[[i, j]]).sum();
            assert!((visible - 1.0).abs() < 1e-12);
            for j in i + 1..6 {
                assert_eq!(v[[i, j]], 0.0);
            }
        }
    }

    #[test]
    fn softmax_of_known_logits() {
        let mut g = Graph::new();
        let x = g.constant(array![[0.0, 0.0], [1.0, 0.0]]);
        let y = g.causal_softmax(x);
        let v = g.value(y);
        assert_eq!(v[[0, 0]], 1.0);
        assert!((v[[1, 0]] - 0.7310585786300049).abs() < 1e-12);
        assert!((v[[1, 1]] - 0.2689414213699951).abs() < 1e-12);
    }

    #[test]
    fn constants_do_not_collect_gradients() {
        let mut g = Graph::new();
        let c = g.constant(array![[1.0, 2.0]]);
        let p = g.parameter(array![[3.0], [4.0]]);
        let y = g.matmul(c, p);
        let loss = g.mean_all(y);
        g.backward(loss);
        assert_eq!(g.grad(c), Array2::<f64>::zeros((1, 2)));
        assert_eq!(g.grad(p), array![[1.0], [2.0]]);
    }
}
