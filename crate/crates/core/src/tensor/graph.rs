use std::collections::HashMap;

use super::{axpy, dot, ParamId, ParamStore, Result, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    /// `[T, D]` rows gathered from a `[V, D]` table.
    Embedding {
        table: NodeId,
        ids: Vec<usize>,
    },
    /// One row of a 2-D node as a vector.
    Row {
        input: NodeId,
        row: usize,
    },
    /// `out[t, f] = b[f] + Σ_i W[f, i·D..(i+1)·D] · x[t + i]`.
    Conv1d {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        width: usize,
    },
    /// `W x (+ b)` for `W: [M, K]`, `x: [K]`.
    Affine {
        weight: NodeId,
        input: NodeId,
        bias: Option<NodeId>,
    },
    Relu(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Concat(Vec<NodeId>),
    MaxOverTime {
        input: NodeId,
        argmax: Vec<usize>,
    },
    SoftmaxCrossEntropy {
        logits: NodeId,
        gold: usize,
        probs: Vec<f64>,
    },
    Sum(Vec<NodeId>),
}

struct Node {
    op: Op,
    // `None` for parameter nodes, whose value lives in the store.
    value: Option<Tensor>,
}

/// Recording tape over a borrowed parameter store.
///
/// Every builder method evaluates its op eagerly, checks that the result is
/// finite, and appends it to the tape. [`Graph::backward`] then walks the tape
/// in reverse.
pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_nodes: HashMap<ParamId, NodeId>,
}

/// Per-parameter gradients produced by [`Graph::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    /// Parameters the loss does not depend on through the tape.
    pub fn unreached(&self) -> Vec<ParamId> {
        self.grads
            .iter()
            .enumerate()
            .filter(|(_, g)| g.is_none())
            .map(|(i, _)| ParamId(i))
            .collect()
    }

    /// Dense gradients, zero-filled for unreached parameters.
    pub fn into_dense(self, store: &ParamStore) -> Vec<Tensor> {
        self.grads
            .into_iter()
            .zip(store.tensors())
            .map(|(g, p)| g.unwrap_or_else(|| Tensor::zeros(p.shape())))
            .collect()
    }

    pub fn accumulate_into(&self, acc: &mut [Tensor]) {
        for (g, a) in self.grads.iter().zip(acc.iter_mut()) {
            if let Some(g) = g {
                axpy(1.0, g.data(), a.data_mut());
            }
        }
    }
}

fn check_finite(op: &'static str, data: &[f64]) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(TensorError::NonFinite(op))
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
        }
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        let node = &self.nodes[id.0];
        match node.op {
            Op::Param(p) => self.params.get(p),
            _ => node.value.as_ref().expect("computed node has a value"),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor, name: &'static str) -> Result<NodeId> {
        check_finite(name, value.data())?;
        self.nodes.push(Node { op, value: Some(value) });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn input(&mut self, value: Tensor) -> Result<NodeId> {
        self.push(Op::Leaf, value, "input")
    }

    /// Node for a parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(&n) = self.param_nodes.get(&id) {
            return n;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
        });
        let n = NodeId(self.nodes.len() - 1);
        self.param_nodes.insert(id, n);
        n
    }

    pub fn embedding(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        let t = self.value(table);
        if t.shape().len() != 2 {
            return Err(TensorError::InvalidArgument("embedding table must be 2-D".into()));
        }
        if ids.is_empty() {
            return Err(TensorError::InvalidArgument("empty id sequence".into()));
        }
        let (v, d) = (t.rows(), t.row_len());
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            if i >= v {
                return Err(TensorError::IndexOutOfRange {
                    op: "embedding",
                    index: i,
                    bound: v,
                });
            }
            out.extend_from_slice(t.row(i));
        }
        let value = Tensor::new(vec![ids.len(), d], out)?;
        self.push(
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            value,
            "embedding",
        )
    }

    pub fn row(&mut self, input: NodeId, row: usize) -> Result<NodeId> {
        let x = self.value(input);
        if row >= x.rows() {
            return Err(TensorError::IndexOutOfRange {
                op: "row",
                index: row,
                bound: x.rows(),
            });
        }
        let value = Tensor::vector(x.row(row).to_vec())?;
        self.push(Op::Row { input, row }, value, "row")
    }

    pub fn conv1d(&mut self, input: NodeId, weight: NodeId, bias: NodeId, width: usize) -> Result<NodeId> {
        let x = self.value(input);
        let w = self.value(weight);
        let b = self.value(bias);
        let (t_len, d) = (x.rows(), x.row_len());
        let filters = w.rows();
        if w.row_len() != width * d || b.len() != filters {
            return Err(TensorError::ShapeMismatch {
                op: "conv1d",
                lhs: w.shape().to_vec(),
                rhs: x.shape().to_vec(),
            });
        }
        if width == 0 || t_len < width {
            return Err(TensorError::InvalidArgument(format!(
                "sequence length {t_len} shorter than filter width {width}"
            )));
        }
        let positions = t_len - width + 1;
        let mut out = vec![0.0; positions * filters];
        for t in 0..positions {
            let window = &x.data()[t * d..(t + width) * d];
            for f in 0..filters {
                out[t * filters + f] = b.data()[f] + dot(w.row(f), window);
            }
        }
        let value = Tensor::new(vec![positions, filters], out)?;
        self.push(
            Op::Conv1d {
                input,
                weight,
                bias,
                width,
            },
            value,
            "conv1d",
        )
    }

    pub fn affine(&mut self, weight: NodeId, input: NodeId, bias: Option<NodeId>) -> Result<NodeId> {
        let w = self.value(weight);
        let x = self.value(input);
        if w.shape().len() != 2 || w.row_len() != x.len() {
            return Err(TensorError::ShapeMismatch {
                op: "affine",
                lhs: w.shape().to_vec(),
                rhs: x.shape().to_vec(),
            });
        }
        let mut out: Vec<f64> = (0..w.rows()).map(|r| dot(w.row(r), x.data())).collect();
        if let Some(b) = bias {
            let b = self.value(b);
            if b.len() != out.len() {
                return Err(TensorError::ShapeMismatch {
                    op: "affine bias",
                    lhs: w.shape().to_vec(),
                    rhs: b.shape().to_vec(),
                });
            }
            axpy(1.0, b.data(), &mut out);
        }
        let value = Tensor::vector(out)?;
        self.push(Op::Affine { weight, input, bias }, value, "affine")
    }

    fn unary(&mut self, input: NodeId, op: Op, name: &'static str, f: fn(f64) -> f64) -> Result<NodeId> {
        let x = self.value(input);
        let value = Tensor::new(x.shape().to_vec(), x.data().iter().map(|&v| f(v)).collect())?;
        self.push(op, value, name)
    }

    pub fn relu(&mut self, input: NodeId) -> Result<NodeId> {
        self.unary(input, Op::Relu(input), "relu", |v| v.max(0.0))
    }

    pub fn tanh(&mut self, input: NodeId) -> Result<NodeId> {
        self.unary(input, Op::Tanh(input), "tanh", f64::tanh)
    }

    pub fn sigmoid(&mut self, input: NodeId) -> Result<NodeId> {
        self.unary(input, Op::Sigmoid(input), "sigmoid", sigmoid)
    }

    fn binary(&mut self, a: NodeId, b: NodeId, name: &'static str, f: fn(f64, f64) -> f64) -> Result<Tensor> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(TensorError::ShapeMismatch {
                op: name,
                lhs: x.shape().to_vec(),
                rhs: y.shape().to_vec(),
            });
        }
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        Tensor::new(x.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.binary(a, b, "add", |p, q| p + q)?;
        self.push(Op::Add(a, b), v, "add")
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.binary(a, b, "mul", |p, q| p * q)?;
        self.push(Op::Mul(a, b), v, "mul")
    }

    /// Concatenates 1-D nodes.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(TensorError::InvalidArgument("empty concat".into()));
        }
        let mut out = Vec::new();
        for &p in parts {
            out.extend_from_slice(self.value(p).data());
        }
        let value = Tensor::vector(out)?;
        self.push(Op::Concat(parts.to_vec()), value, "concat")
    }

    /// Column-wise maximum of a `[T, F]` node; ties resolve to the first row.
    pub fn max_over_time(&mut self, input: NodeId) -> Result<NodeId> {
        let x = self.value(input);
        let (t_len, f) = (x.rows(), x.row_len());
        let mut argmax = vec![0usize; f];
        let mut out = x.row(0).to_vec();
        for t in 1..t_len {
            for (j, &v) in x.row(t).iter().enumerate() {
                if v > out[j] {
                    out[j] = v;
                    argmax[j] = t;
                }
            }
        }
        let value = Tensor::vector(out)?;
        self.push(Op::MaxOverTime { input, argmax }, value, "max_over_time")
    }

    /// `-log softmax(logits)[gold]`, computed with log-sum-exp.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, gold: usize) -> Result<NodeId> {
        let z = self.value(logits);
        if gold >= z.len() {
            return Err(TensorError::IndexOutOfRange {
                op: "softmax_cross_entropy",
                index: gold,
                bound: z.len(),
            });
        }
        let m = z.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.data().iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        let probs: Vec<f64> = z.data().iter().map(|v| (v - lse).exp()).collect();
        let loss = lse - z.data()[gold];
        self.push(
            Op::SoftmaxCrossEntropy { logits, gold, probs },
            Tensor::scalar(loss),
            "softmax_cross_entropy",
        )
    }

    /// Sum of every element of every part.
    pub fn sum(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let total: f64 = parts.iter().map(|&p| self.value(p).data().iter().sum::<f64>()).sum();
        self.push(Op::Sum(parts.to_vec()), Tensor::scalar(total), "sum")
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(TensorError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Param(_) => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::Embedding { table, ids } => {
                    let d = self.value(*table).row_len();
                    let acc = self.grad_slot(&mut grads, *table);
                    for (t, &i) in ids.iter().enumerate() {
                        axpy(1.0, &g[t * d..(t + 1) * d], &mut acc[i * d..(i + 1) * d]);
                    }
                }
                Op::Row { input, row } => {
                    let d = self.value(*input).row_len();
                    let acc = self.grad_slot(&mut grads, *input);
                    axpy(1.0, &g, &mut acc[row * d..(row + 1) * d]);
                }
                Op::Conv1d {
                    input,
                    weight,
                    bias,
                    width,
                } => {
                    let x = self.value(*input);
                    let w = self.value(*weight);
                    let d = x.row_len();
                    let filters = w.rows();
                    let positions = x.rows() - width + 1;
                    {
                        let gw = self.grad_slot(&mut grads, *weight);
                        for t in 0..positions {
                            let window = &x.data()[t * d..(t + width) * d];
                            for f in 0..filters {
                                let gf = g[t * filters + f];
                                if gf != 0.0 {
                                    axpy(gf, window, &mut gw[f * width * d..(f + 1) * width * d]);
                                }
                            }
                        }
                    }
                    {
                        let gb = self.grad_slot(&mut grads, *bias);
                        for t in 0..positions {
                            axpy(1.0, &g[t * filters..(t + 1) * filters], gb);
                        }
                    }
                    let gx = self.grad_slot(&mut grads, *input);
                    for t in 0..positions {
                        let window = &mut gx[t * d..(t + width) * d];
                        for f in 0..filters {
                            let gf = g[t * filters + f];
                            if gf != 0.0 {
                                axpy(gf, w.row(f), window);
                            }
                        }
                    }
                }
                Op::Affine { weight, input, bias } => {
                    let w = self.value(*weight);
                    let x = self.value(*input);
                    let k = x.len();
                    {
                        let gw = self.grad_slot(&mut grads, *weight);
                        for (r, &gr) in g.iter().enumerate() {
                            if gr != 0.0 {
                                axpy(gr, x.data(), &mut gw[r * k..(r + 1) * k]);
                            }
                        }
                    }
                    {
                        let gx = self.grad_slot(&mut grads, *input);
                        for (r, &gr) in g.iter().enumerate() {
                            if gr != 0.0 {
                                axpy(gr, w.row(r), gx);
                            }
                        }
                    }
                    if let Some(b) = bias {
                        let gb = self.grad_slot(&mut grads, *b);
                        axpy(1.0, &g, gb);
                    }
                }
                Op::Relu(input) => {
                    let x = self.value(*input);
                    let gx = self.grad_slot(&mut grads, *input);
                    for ((gi, &xi), &go) in gx.iter_mut().zip(x.data()).zip(&g) {
                        if xi > 0.0 {
                            *gi += go;
                        }
                    }
                }
                Op::Tanh(input) => {
                    let y = node.value.as_ref().unwrap();
                    let gx = self.grad_slot(&mut grads, *input);
                    for ((gi, &yi), &go) in gx.iter_mut().zip(y.data()).zip(&g) {
                        *gi += go * (1.0 - yi * yi);
                    }
                }
                Op::Sigmoid(input) => {
                    let y = node.value.as_ref().unwrap();
                    let gx = self.grad_slot(&mut grads, *input);
                    for ((gi, &yi), &go) in gx.iter_mut().zip(y.data()).zip(&g) {
                        *gi += go * yi * (1.0 - yi);
                    }
                }
                Op::Add(a, b) => {
                    axpy(1.0, &g, self.grad_slot(&mut grads, *a));
                    axpy(1.0, &g, self.grad_slot(&mut grads, *b));
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    {
                        let ga = self.grad_slot(&mut grads, *a);
                        for ((gi, &bi), &go) in ga.iter_mut().zip(vb.data()).zip(&g) {
                            *gi += go * bi;
                        }
                    }
                    let gb = self.grad_slot(&mut grads, *b);
                    for ((gi, &ai), &go) in gb.iter_mut().zip(va.data()).zip(&g) {
                        *gi += go * ai;
                    }
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.value(p).len();
                        axpy(1.0, &g[offset..offset + n], self.grad_slot(&mut grads, p));
                        offset += n;
                    }
                }
                Op::MaxOverTime { input, argmax } => {
                    let f = argmax.len();
                    let gx = self.grad_slot(&mut grads, *input);
                    for (j, &t) in argmax.iter().enumerate() {
                        gx[t * f + j] += g[j];
                    }
                }
                Op::SoftmaxCrossEntropy { logits, gold, probs } => {
                    let gz = self.grad_slot(&mut grads, *logits);
                    for (i, (gi, &p)) in gz.iter_mut().zip(probs).enumerate() {
                        let target = if i == *gold { 1.0 } else { 0.0 };
                        *gi += g[0] * (p - target);
                    }
                }
                Op::Sum(parts) => {
                    for &p in parts {
                        for gi in self.grad_slot(&mut grads, p).iter_mut() {
                            *gi += g[0];
                        }
                    }
                }
            }
        }

        let mut out: Vec<Option<Tensor>> = (0..self.params.len()).map(|_| None).collect();
        for (&pid, &nid) in &self.param_nodes {
            if let Some(g) = grads[nid.0].take() {
                check_finite("backward", &g)?;
                out[pid.0] = Some(Tensor::new(self.params.get(pid).shape().to_vec(), g)?);
            }
        }
        Ok(Gradients { grads: out })
    }

    fn grad_slot<'g>(&self, grads: &'g mut [Option<Vec<f64>>], id: NodeId) -> &'g mut [f64] {
        let n = self.value(id).len();
        grads[id.0].get_or_insert_with(|| vec![0.0; n])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(shape: &[usize], data: Vec<f64>) -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::new(shape.to_vec(), data).unwrap());
        (s, id)
    }

    #[test]
    fn linear_map_gradient_is_input_per_row() {
        let (store, w) = store_with(&[2, 3], vec![0.1, 0.2, 0.3, -0.4, 0.5, 0.6]);
        let mut g = Graph::new(&store);
        let wn = g.param(w);
        let x = g.input(Tensor::vector(vec![1.0, -2.0, 3.0]).unwrap()).unwrap();
        let y = g.affine(wn, x, None).unwrap();
        let loss = g.sum(&[y]).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap().data(), &[1.0, -2.0, 3.0, 1.0, -2.0, 3.0]);
    }

    #[test]
    fn dead_relu_blocks_gradient() {
        let (store, w) = store_with(&[1], vec![-3.0]);
        let mut g = Graph::new(&store);
        let wn = g.param(w);
        let r = g.relu(wn).unwrap();
        let loss = g.sum(&[r]).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap().data(), &[0.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let (store, w) = store_with(&[2], vec![1.0, 2.0]);
        let mut g = Graph::new(&store);
        let wn = g.param(w);
        assert!(matches!(g.backward(wn), Err(TensorError::NonScalarLoss(_))));
    }

    #[test]
    fn unreached_parameter_is_reported() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::scalar(2.0));
        let b = store.add("b", Tensor::scalar(5.0));
        let mut g = Graph::new(&store);
        let an = g.param(a);
        let loss = g.sum(&[an]).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.unreached(), vec![b]);
        let dense = grads.into_dense(&store);
        assert_eq!(dense[1].data(), &[0.0]);
    }

    #[test]
    fn non_finite_values_raise() {
        let (store, w) = store_with(&[1], vec![1e308]);
        let mut g = Graph::new(&store);
        let wn = g.param(w);
        let two = g.add(wn, wn);
        assert_eq!(two.unwrap_err(), TensorError::NonFinite("add"));
    }

    #[test]
    fn max_over_time_takes_first_tie() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let x = g.input(Tensor::new(vec![3, 1], vec![0.2, 0.9, 0.9]).unwrap()).unwrap();
        let m = g.max_over_time(x).unwrap();
        assert_eq!(g.value(m).data(), &[0.9]);
        match &g.nodes[m.0].op {
            Op::MaxOverTime { argmax, .. } => assert_eq!(argmax, &vec![1]),
            _ => unreachable!(),
        }
    }

    #[test]
    fn cross_entropy_of_uniform_logits() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let z = g.input(Tensor::vector(vec![0.0; 4]).unwrap()).unwrap();
        let l = g.softmax_cross_entropy(z, 2).unwrap();
        assert!((g.value(l).data()[0] - 4f64.ln()).abs() < 1e-15);
    }
}
