use std::collections::HashMap;

use super::tensor::{check_shape, matmul_nn, matmul_nt, matmul_tn};
use super::{EngineError, Tensor};

/// Handle to a node inside a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf { name: String, differentiable: bool },
    Constant(Tensor),
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Transpose(NodeId),
    SoftmaxColumns(NodeId),
    NormalizeRows(NodeId, f64),
    RowMax(NodeId),
    Mean(NodeId),
    Sum(NodeId),
    Log(NodeId),
    Hinge(NodeId),
    Tanh(NodeId),
    ClampMin(NodeId, f64),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf { .. } => "leaf",
            Op::Constant(_) => "constant",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Transpose(_) => "transpose",
            Op::SoftmaxColumns(_) => "softmax_columns",
            Op::NormalizeRows(..) => "normalize_rows",
            Op::RowMax(_) => "row_max",
            Op::Mean(_) => "mean",
            Op::Sum(_) => "sum",
            Op::Log(_) => "log",
            Op::Hinge(_) => "hinge",
            Op::Tanh(_) => "tanh",
            Op::ClampMin(..) => "clamp_min",
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    shape: Vec<usize>,
    tag: Option<String>,
    requires_grad: bool,
}

/// Invocation and multiply-add counts for the nodes sharing a tag.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCost {
    pub invocations: u64,
    pub multiply_adds: u64,
}

/// Tensor bindings for the leaves of a graph, keyed by leaf name.
pub type Bindings = HashMap<String, Tensor>;

/// An append-only computation graph with statically checked shapes.
///
/// Nodes are stored in creation order, so every operand precedes its users
/// and the graph is acyclic by construction.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    leaves: HashMap<String, NodeId>,
    output: Option<NodeId>,
    tag: Option<String>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, node: NodeId) -> &[usize] {
        &self.nodes[node.0].shape
    }

    /// Run `build` with every node it creates labelled `tag`.
    pub fn tagged<R>(&mut self, tag: &str, build: impl FnOnce(&mut Self) -> R) -> R {
        let previous = self.tag.replace(tag.to_string());
        let out = build(self);
        self.tag = previous;
        out
    }

    /// Non-differentiable leaf. Re-declaring an existing name with the same
    /// shape returns the existing node.
    pub fn input(&mut self, name: &str, shape: &[usize]) -> Result<NodeId, EngineError> {
        self.declare_leaf(name, shape, false)
    }

    /// Differentiable leaf; `backward` reports a gradient for it.
    pub fn param(&mut self, name: &str, shape: &[usize]) -> Result<NodeId, EngineError> {
        self.declare_leaf(name, shape, true)
    }

    fn declare_leaf(&mut self, name: &str, shape: &[usize], differentiable: bool) -> Result<NodeId, EngineError> {
        check_shape(shape)?;
        if let Some(&id) = self.leaves.get(name) {
            let node = &self.nodes[id.0];
            let same_kind = matches!(node.op, Op::Leaf { differentiable: d, .. } if d == differentiable);
            if node.shape == shape && same_kind {
                return Ok(id);
            }
            return Err(EngineError::DuplicateLeaf(name.to_string()));
        }
        let id = self.push(
            Op::Leaf { name: name.to_string(), differentiable },
            shape.to_vec(),
            differentiable,
        );
        self.leaves.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        let shape = value.shape().to_vec();
        self.push(Op::Constant(value), shape, false)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, EngineError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(self.mismatch("matmul", format!("{sa:?} x {sb:?}")));
        }
        Ok(self.push_op(Op::MatMul(a, b), vec![sa[0], sb[1]], &[a, b]))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, EngineError> {
        self.elementwise(Op::Add(a, b), "add", a, b)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, EngineError> {
        self.elementwise(Op::Sub(a, b), "sub", a, b)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, EngineError> {
        self.elementwise(Op::Mul(a, b), "mul", a, b)
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let shape = self.shape(a).to_vec();
        self.push_op(Op::Scale(a, factor), shape, &[a])
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId, EngineError> {
        let s = self.matrix_shape("transpose", a)?;
        Ok(self.push_op(Op::Transpose(a), vec![s[1], s[0]], &[a]))
    }

    /// Softmax applied independently to every column.
    pub fn softmax_columns(&mut self, a: NodeId) -> Result<NodeId, EngineError> {
        let s = self.matrix_shape("softmax_columns", a)?;
        Ok(self.push_op(Op::SoftmaxColumns(a), s, &[a]))
    }

    /// Divide every row by its L2 norm plus `eps`.
    pub fn normalize_rows(&mut self, a: NodeId, eps: f64) -> Result<NodeId, EngineError> {
        let s = self.matrix_shape("normalize_rows", a)?;
        Ok(self.push_op(Op::NormalizeRows(a, eps), s, &[a]))
    }

    /// Maximum of every row, as an `rows × 1` column.
    pub fn row_max(&mut self, a: NodeId) -> Result<NodeId, EngineError> {
        let s = self.matrix_shape("row_max", a)?;
        Ok(self.push_op(Op::RowMax(a), vec![s[0], 1], &[a]))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        self.push_op(Op::Mean(a), vec![1], &[a])
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        self.push_op(Op::Sum(a), vec![1], &[a])
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        let shape = self.shape(a).to_vec();
        self.push_op(Op::Log(a), shape, &[a])
    }

    /// `[x]_+ = max(x, 0)` elementwise.
    pub fn hinge(&mut self, a: NodeId) -> NodeId {
        let shape = self.shape(a).to_vec();
        self.push_op(Op::Hinge(a), shape, &[a])
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let shape = self.shape(a).to_vec();
        self.push_op(Op::Tanh(a), shape, &[a])
    }

    /// `max(x, floor)` elementwise.
    pub fn clamp_min(&mut self, a: NodeId, floor: f64) -> NodeId {
        let shape = self.shape(a).to_vec();
        self.push_op(Op::ClampMin(a, floor), shape, &[a])
    }

    /// Sum of any number of same-shaped nodes.
    pub fn add_all(&mut self, terms: &[NodeId]) -> Result<NodeId, EngineError> {
        let (&first, rest) = terms
            .split_first()
            .ok_or_else(|| self.mismatch("add_all", "no terms".into()))?;
        rest.iter().try_fold(first, |acc, &t| self.add(acc, t))
    }

    pub fn set_output(&mut self, node: NodeId) -> Result<(), EngineError> {
        if self.shape(node) != [1] {
            return Err(EngineError::NonScalarOutput {
                node: self.describe(node),
                shape: self.shape(node).to_vec(),
            });
        }
        self.output = Some(node);
        Ok(())
    }

    pub fn output(&self) -> Option<NodeId> {
        self.output
    }

    /// Names of all differentiable leaves, in creation order.
    pub fn param_names(&self) -> Vec<&str> {
        self.nodes
            .iter()
            .filter_map(|n| match &n.op {
                Op::Leaf { name, differentiable: true } => Some(name.as_str()),
                _ => None,
            })
            .collect()
    }

    pub fn leaf(&self, name: &str) -> Option<NodeId> {
        self.leaves.get(name).copied()
    }

    /// Compute every node for the given bindings.
    pub fn forward(&self, bindings: &Bindings) -> Result<Evaluation<'_>, EngineError> {
        let mut values: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        let mut costs: HashMap<String, OpCost> = HashMap::new();
        for (index, node) in self.nodes.iter().enumerate() {
            let value = self.compute(index, node, &values, bindings)?;
            if let Some(tag) = &node.tag {
                let cost = costs.entry(tag.clone()).or_default();
                cost.invocations += 1;
                cost.multiply_adds += self.multiply_adds(node);
            }
            values.push(value);
        }
        Ok(Evaluation { graph: self, values, costs })
    }

    /// Value of the output node.
    pub fn evaluate(&self, bindings: &Bindings) -> Result<Tensor, EngineError> {
        let output = self.output.ok_or(EngineError::NoOutput)?;
        let mut evaluation = self.forward(bindings)?;
        Ok(evaluation.values.swap_remove(output.0))
    }

    /// Gradient of the scalar output with respect to every differentiable leaf.
    pub fn backward(&self, bindings: &Bindings) -> Result<Gradients, EngineError> {
        self.forward(bindings)?.backward()
    }

    fn multiply_adds(&self, node: &Node) -> u64 {
        match node.op {
            Op::MatMul(a, _) => {
                let k = self.nodes[a.0].shape[1];
                (node.shape[0] * k * node.shape[1]) as u64
            }
            _ => 0,
        }
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, requires_grad: bool) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, shape, tag: self.tag.clone(), requires_grad });
        id
    }

    fn push_op(&mut self, op: Op, shape: Vec<usize>, operands: &[NodeId]) -> NodeId {
        let requires_grad = operands.iter().any(|o| self.nodes[o.0].requires_grad);
        self.push(op, shape, requires_grad)
    }

    fn elementwise(&mut self, op: Op, name: &str, a: NodeId, b: NodeId) -> Result<NodeId, EngineError> {
        if self.shape(a) != self.shape(b) {
            let detail = format!("{:?} vs {:?}", self.shape(a), self.shape(b));
            return Err(self.mismatch(name, detail));
        }
        let shape = self.shape(a).to_vec();
        Ok(self.push_op(op, shape, &[a, b]))
    }

    fn matrix_shape(&self, name: &str, a: NodeId) -> Result<Vec<usize>, EngineError> {
        let s = self.shape(a);
        if s.len() != 2 {
            return Err(self.mismatch(name, format!("expected a matrix, operand has shape {s:?}")));
        }
        Ok(s.to_vec())
    }

    fn mismatch(&self, op: &str, detail: String) -> EngineError {
        let tag = self.tag.as_deref().map(|t| format!(" [{t}]")).unwrap_or_default();
        EngineError::ShapeMismatch {
            node: format!("#{} {op}{tag}", self.nodes.len()),
            detail,
        }
    }

    fn describe(&self, node: NodeId) -> String {
        let n = &self.nodes[node.0];
        let mut s = format!("#{} {}", node.0, n.op.name());
        if let Op::Leaf { name, .. } = &n.op {
            s.push_str(&format!(" `{name}`"));
        }
        if let Some(tag) = &n.tag {
            s.push_str(&format!(" [{tag}]"));
        }
        s
    }

    fn compute(&self, index: usize, node: &Node, values: &[Tensor], bindings: &Bindings) -> Result<Tensor, EngineError> {
        let v = |id: NodeId| &values[id.0];
        let shape = node.shape.clone();
        let out = match &node.op {
            Op::Leaf { name, .. } => {
                let bound = bindings
                    .get(name)
                    .ok_or_else(|| EngineError::Unbound { name: name.clone() })?;
                if bound.shape() != node.shape.as_slice() {
                    return Err(EngineError::BindingShape {
                        name: name.clone(),
                        expected: node.shape.clone(),
                        found: bound.shape().to_vec(),
                    });
                }
                bound.clone()
            }
            Op::Constant(t) => t.clone(),
            Op::MatMul(a, b) => {
                let (m, k) = (v(*a).rows(), v(*a).cols());
                let n = v(*b).cols();
                Tensor::from_parts(shape, matmul_nn(v(*a).data(), v(*b).data(), m, k, n))
            }
            Op::Add(a, b) => zip_map(v(*a), v(*b), |x, y| x + y),
            Op::Sub(a, b) => zip_map(v(*a), v(*b), |x, y| x - y),
            Op::Mul(a, b) => zip_map(v(*a), v(*b), |x, y| x * y),
            Op::Scale(a, f) => map(v(*a), |x| x * f),
            Op::Transpose(a) => v(*a).transpose(),
            Op::SoftmaxColumns(a) => softmax_columns(v(*a)),
            Op::NormalizeRows(a, eps) => {
                let x = v(*a);
                let c = x.cols();
                let mut out = x.data().to_vec();
                for row in out.chunks_mut(c) {
                    let den = row.iter().map(|e| e * e).sum::<f64>().sqrt() + eps;
                    row.iter_mut().for_each(|e| *e /= den);
                }
                Tensor::from_parts(shape, out)
            }
            Op::RowMax(a) => {
                let x = v(*a);
                let data = (0..x.rows()).map(|r| x.row(r)[argmax(x.row(r))]).collect();
                Tensor::from_parts(shape, data)
            }
            Op::Mean(a) => {
                let x = v(*a);
                Tensor::scalar(x.data().iter().sum::<f64>() / x.len() as f64)
            }
            Op::Sum(a) => Tensor::scalar(v(*a).data().iter().sum()),
            Op::Log(a) => {
                let x = v(*a);
                if let Some(&bad) = x.data().iter().find(|&&e| !(e > 0.0)) {
                    return Err(EngineError::LogDomain { node: self.describe(NodeId(index)), value: bad });
                }
                map(x, f64::ln)
            }
            Op::Hinge(a) => map(v(*a), |x| x.max(0.0)),
            Op::Tanh(a) => map(v(*a), f64::tanh),
            Op::ClampMin(a, floor) => map(v(*a), |x| x.max(*floor)),
        };
        Ok(out)
    }
}

/// Index of the first maximal entry.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in values.iter().enumerate().skip(1) {
        if x > values[best] {
            best = i;
        }
    }
    best
}

fn map(x: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::from_parts(x.shape().to_vec(), x.data().iter().map(|&e| f(e)).collect())
}

fn zip_map(x: &Tensor, y: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = x.data().iter().zip(y.data()).map(|(&a, &b)| f(a, b)).collect();
    Tensor::from_parts(x.shape().to_vec(), data)
}

fn softmax_columns(x: &Tensor) -> Tensor {
    let (r, c) = (x.rows(), x.cols());
    let src = x.data();
    let mut out = vec![0.0; r * c];
    for j in 0..c {
        let mut peak = f64::NEG_INFINITY;
        for i in 0..r {
            peak = peak.max(src[i * c + j]);
        }
        let mut total = 0.0;
        for i in 0..r {
            let e = (src[i * c + j] - peak).exp();
            out[i * c + j] = e;
            total += e;
        }
        for i in 0..r {
            out[i * c + j] /= total;
        }
    }
    Tensor::from_parts(vec![r, c], out)
}

/// Values of every node from one forward pass.
pub struct Evaluation<'g> {
    graph: &'g Graph,
    values: Vec<Tensor>,
    costs: HashMap<String, OpCost>,
}

impl<'g> Evaluation<'g> {
    pub fn value(&self, node: NodeId) -> &Tensor {
        &self.values[node.0]
    }

    pub fn output(&self) -> Result<&Tensor, EngineError> {
        let out = self.graph.output.ok_or(EngineError::NoOutput)?;
        Ok(&self.values[out.0])
    }

    /// Counted cost of the nodes labelled `tag` during this pass.
    pub fn cost(&self, tag: &str) -> OpCost {
        self.costs.get(tag).copied().unwrap_or_default()
    }

    /// Reverse sweep from the output node.
    pub fn backward(&self) -> Result<Gradients, EngineError> {
        let graph = self.graph;
        let output = graph.output.ok_or(EngineError::NoOutput)?;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; graph.nodes.len()];
        grads[output.0] = Some(vec![1.0]);

        for index in (0..=output.0).rev() {
            let Some(g) = grads[index].take() else { continue };
            let node = &graph.nodes[index];
            if !node.requires_grad {
                continue;
            }
            let val = |id: NodeId| self.values[id.0].data();
            let mut send = |id: NodeId, delta: Vec<f64>| {
                if !graph.nodes[id.0].requires_grad {
                    return;
                }
                match &mut grads[id.0] {
                    Some(acc) => acc.iter_mut().zip(&delta).for_each(|(a, d)| *a += d),
                    slot @ None => *slot = Some(delta),
                }
            };
            match &node.op {
                Op::Leaf { .. } => {
                    grads[index] = Some(g);
                }
                Op::Constant(_) => {}
                Op::MatMul(a, b) => {
                    let (m, k) = (self.values[a.0].rows(), self.values[a.0].cols());
                    let n = self.values[b.0].cols();
                    if graph.nodes[a.0].requires_grad {
                        send(*a, matmul_nt(&g, val(*b), m, n, k));
                    }
                    if graph.nodes[b.0].requires_grad {
                        send(*b, matmul_tn(val(*a), &g, m, k, n));
                    }
                }
                Op::Add(a, b) => {
                    send(*b, g.clone());
                    send(*a, g);
                }
                Op::Sub(a, b) => {
                    send(*b, g.iter().map(|x| -x).collect());
                    send(*a, g);
                }
                Op::Mul(a, b) => {
                    send(*a, g.iter().zip(val(*b)).map(|(x, y)| x * y).collect());
                    send(*b, g.iter().zip(val(*a)).map(|(x, y)| x * y).collect());
                }
                Op::Scale(a, f) => send(*a, g.iter().map(|x| x * f).collect()),
                Op::Transpose(a) => {
                    let t = Tensor::from_parts(node.shape.clone(), g).transpose();
                    send(*a, t.into_data());
                }
                Op::SoftmaxColumns(a) => {
                    let y = self.values[index].data();
                    let (r, c) = (node.shape[0], node.shape[1]);
                    let mut dx = vec![0.0; r * c];
                    for j in 0..c {
                        let s: f64 = (0..r).map(|i| g[i * c + j] * y[i * c + j]).sum();
                        for i in 0..r {
                            dx[i * c + j] = y[i * c + j] * (g[i * c + j] - s);
                        }
                    }
                    send(*a, dx);
                }
                Op::NormalizeRows(a, eps) => {
                    let x = val(*a);
                    let c = node.shape[1];
                    let mut dx = vec![0.0; x.len()];
                    for ((xr, gr), dr) in x.chunks(c).zip(g.chunks(c)).zip(dx.chunks_mut(c)) {
                        let norm = xr.iter().map(|e| e * e).sum::<f64>().sqrt();
                        let den = norm + eps;
                        let gx: f64 = xr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        let coupling = if norm > 0.0 { gx / (den * den * norm) } else { 0.0 };
                        for ((d, &xe), &ge) in dr.iter_mut().zip(xr).zip(gr) {
                            *d = ge / den - xe * coupling;
                        }
                    }
                    send(*a, dx);
                }
                Op::RowMax(a) => {
                    let x = &self.values[a.0];
                    let c = x.cols();
                    let mut dx = vec![0.0; x.len()];
                    for r in 0..x.rows() {
                        dx[r * c + argmax(x.row(r))] = g[r];
                    }
                    send(*a, dx);
                }
                Op::Mean(a) => {
                    let n = self.values[a.0].len();
                    send(*a, vec![g[0] / n as f64; n]);
                }
                Op::Sum(a) => {
                    let n = self.values[a.0].len();
                    send(*a, vec![g[0]; n]);
                }
                Op::Log(a) => send(*a, g.iter().zip(val(*a)).map(|(q, x)| q / x).collect()),
                Op::Hinge(a) => send(
                    *a,
                    g.iter().zip(val(*a)).map(|(&q, &x)| if x > 0.0 { q } else { 0.0 }).collect(),
                ),
                Op::Tanh(a) => {
                    let y = self.values[index].data();
                    send(*a, g.iter().zip(y).map(|(q, t)| q * (1.0 - t * t)).collect());
                }
                Op::ClampMin(a, floor) => send(
                    *a,
                    g.iter().zip(val(*a)).map(|(&q, &x)| if x > *floor { q } else { 0.0 }).collect(),
                ),
            }
        }

        let mut out = HashMap::new();
        for node in &graph.nodes {
            if let Op::Leaf { name, differentiable: true } = &node.op {
                let id = graph.leaves[name];
                let data = grads[id.0].take().unwrap_or_else(|| vec![0.0; node.shape.iter().product()]);
                out.insert(name.clone(), Tensor::from_parts(node.shape.clone(), data));
            }
        }
        Ok(Gradients(out))
    }
}

/// Gradients keyed by differentiable leaf name.
#[derive(Clone, Debug, Default)]
pub struct Gradients(HashMap<String, Tensor>);

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.0.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Largest relative disagreement between `backward` and central differences,
/// `|analytic - numeric| / max(1, |numeric|)`, over every differentiable leaf entry.
pub fn finite_difference_check(graph: &Graph, bindings: &Bindings, step: f64) -> Result<f64, EngineError> {
    assert!(step > 0.0, "finite-difference step must be positive");
    let analytic = graph.backward(bindings)?;
    let mut probe = bindings.clone();
    let mut worst: f64 = 0.0;
    for name in graph.param_names() {
        let grad = analytic.get(name).expect("gradient for every parameter");
        for i in 0..grad.len() {
            let original = bindings[name].data()[i];
            probe.get_mut(name).unwrap().data_mut()[i] = original + step;
            let up = graph.evaluate(&probe)?.item();
            probe.get_mut(name).unwrap().data_mut()[i] = original - step;
            let down = graph.evaluate(&probe)?.item();
            probe.get_mut(name).unwrap().data_mut()[i] = original;
            let numeric = (up - down) / (2.0 * step);
            let err = (grad.data()[i] - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
