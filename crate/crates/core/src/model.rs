//! Shared encoder followed by `K` linear clustering heads.
//!
//! The encoder is a two-layer perceptron (`input → hidden → feature`) with a
//! `tanh` between the layers. Each head maps features to `C` logits and a
//! column-wise softmax turns them into a `C × n` assignment matrix. Inside the
//! graph samples are columns, so a batch is bound transposed (`input_dim × n`).

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::autodiff::{argmax, Bindings, EngineError, Gradients, Graph, NodeId, Tensor};
use crate::rng::Stream;

pub const CHECKPOINT_MAGIC: &str = "divclust-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("invalid model dimensions: {0}")]
    InvalidDims(String),
    #[error("batch has {found} features per sample, model expects {expected}")]
    InputDim { expected: usize, found: usize },
    #[error("batch contains a non-finite value at sample {sample}")]
    NonFiniteInput { sample: usize },
    #[error("checkpoint line {line}: {detail}")]
    Checkpoint { line: usize, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelDims {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub feature_dim: usize,
    /// Number of clustering heads, `K`.
    pub clusterings: usize,
    /// Clusters per head, `C`.
    pub clusters: usize,
}

impl ModelDims {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.feature_dim == 0 {
            return Err(ModelError::InvalidDims(format!("{self:?}")));
        }
        if self.clusterings < 1 || self.clusters < 2 {
            return Err(ModelError::InvalidDims(format!(
                "need K >= 1 and C >= 2, got K={} C={}",
                self.clusterings, self.clusters
            )));
        }
        Ok(())
    }

    /// Parameter names and shapes in checkpoint order.
    pub fn layout(&self) -> Vec<(String, [usize; 2])> {
        let mut out = vec![
            ("encoder.hidden.weight".to_string(), [self.hidden_dim, self.input_dim]),
            ("encoder.hidden.bias".to_string(), [self.hidden_dim, 1]),
            ("encoder.features.weight".to_string(), [self.feature_dim, self.hidden_dim]),
            ("encoder.features.bias".to_string(), [self.feature_dim, 1]),
        ];
        for k in 0..self.clusterings {
            out.push((format!("head{k}.weight"), [self.clusters, self.feature_dim]));
            out.push((format!("head{k}.bias"), [self.clusters, 1]));
        }
        out
    }
}

/// Model weights, keyed by parameter name.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub seed: u64,
    tensors: Vec<(String, Tensor)>,
}

impl ModelParams {
    /// Weights ~ N(0, 1/fan_in), biases zero.
    pub fn init(seed: u64, dims: ModelDims) -> Result<Self, ModelError> {
        dims.validate()?;
        let mut rng = Stream::derived(seed, "model-init", 0);
        let tensors = dims
            .layout()
            .into_iter()
            .map(|(name, [rows, cols])| {
                let t = if name.ends_with(".bias") {
                    Tensor::zeros(&[rows, cols])
                } else {
                    let scale = 1.0 / (cols as f64).sqrt();
                    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| scale * rng.gaussian()).collect())
                };
                (name, t)
            })
            .collect();
        Ok(Self { dims, seed, tensors })
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn bind_into(&self, bindings: &mut Bindings) {
        for (name, t) in &self.tensors {
            bindings.insert(name.clone(), t.clone());
        }
    }

    /// Plain gradient descent: `θ ← θ − lr · ∇θ`.
    pub fn descend(&mut self, grads: &Gradients, learning_rate: f64) {
        for (name, t) in &mut self.tensors {
            if let Some(g) = grads.get(name) {
                t.data_mut().iter_mut().zip(g.data()).for_each(|(w, d)| *w -= learning_rate * d);
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_checkpoint_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_checkpoint_str(&std::fs::read_to_string(path)?)
    }

    /// Text checkpoint: a versioned header, the dimensions, then one
    /// `tensor <name> <rows> <cols>` line per parameter followed by its values.
    pub fn to_checkpoint_string(&self) -> String {
        let d = &self.dims;
        let mut s = format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\nseed {}\n", self.seed);
        let _ = writeln!(
            s,
            "dims {} {} {} {} {}",
            d.input_dim, d.hidden_dim, d.feature_dim, d.clusterings, d.clusters
        );
        for (name, t) in &self.tensors {
            let _ = writeln!(s, "tensor {name} {} {}", t.rows(), t.cols());
            let values: Vec<String> = t.data().iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{}", values.join(" "));
        }
        s.push_str("end\n");
        s
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self, ModelError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut next = |what: &str| {
            lines.next().ok_or(ModelError::Checkpoint { line: 0, detail: format!("truncated before {what}") })
        };
        let bad = |line: usize, detail: &str| ModelError::Checkpoint { line, detail: detail.to_string() };

        let (ln, header) = next("header")?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(CHECKPOINT_MAGIC) {
            return Err(bad(ln, "missing checkpoint header"));
        }
        let version: u32 = parts.next().and_then(|v| v.parse().ok()).ok_or_else(|| bad(ln, "bad version"))?;
        if version != CHECKPOINT_VERSION {
            return Err(bad(ln, &format!("unsupported version {version}")));
        }
        let (ln, seed_line) = next("seed")?;
        let seed = seed_line
            .strip_prefix("seed ")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| bad(ln, "expected `seed <u64>`"))?;
        let (ln, dims_line) = next("dims")?;
        let nums: Vec<usize> = dims_line
            .strip_prefix("dims ")
            .map(|r| r.split_whitespace().filter_map(|v| v.parse().ok()).collect())
            .unwrap_or_default();
        if nums.len() != 5 {
            return Err(bad(ln, "expected `dims <input> <hidden> <feature> <K> <C>`"));
        }
        let dims = ModelDims {
            input_dim: nums[0],
            hidden_dim: nums[1],
            feature_dim: nums[2],
            clusterings: nums[3],
            clusters: nums[4],
        };
        dims.validate()?;

        let mut tensors = Vec::new();
        for (name, [rows, cols]) in dims.layout() {
            let (ln, head) = next(&name)?;
            if head != format!("tensor {name} {rows} {cols}") {
                return Err(bad(ln, &format!("expected `tensor {name} {rows} {cols}`")));
            }
            let (ln, body) = next(&name)?;
            let values = body
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| bad(ln, &e.to_string()))?;
            if values.len() != rows * cols {
                return Err(bad(ln, &format!("expected {} values, found {}", rows * cols, values.len())));
            }
            tensors.push((name, Tensor::matrix(rows, cols, values)));
        }
        let (ln, end) = next("end")?;
        if end != "end" {
            return Err(bad(ln, "expected `end`"));
        }
        Ok(Self { dims, seed, tensors })
    }
}

/// Soft assignments of one clustering over a batch: `C × n`, columns sum to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct AssignmentMatrix {
    pub values: Tensor,
    pub clustering_id: usize,
}

impl AssignmentMatrix {
    pub fn new(values: Tensor, clustering_id: usize) -> Self {
        assert_eq!(values.shape().len(), 2, "assignment matrix must be C x n");
        Self { values, clustering_id }
    }

    pub fn clusters(&self) -> usize {
        self.values.rows()
    }

    pub fn samples(&self) -> usize {
        self.values.cols()
    }

    /// Row `i`: how strongly each sample belongs to cluster `i`.
    pub fn membership(&self, cluster: usize) -> &[f64] {
        self.values.row(cluster)
    }

    pub fn column(&self, sample: usize) -> Vec<f64> {
        (0..self.clusters()).map(|i| self.values.get(i, sample)).collect()
    }

    /// Argmax per sample, ties to the lowest cluster index.
    pub fn hard_labels(&self) -> Vec<usize> {
        (0..self.samples()).map(|j| argmax(&self.column(j))).collect()
    }

    /// Largest assignment probability of each sample.
    pub fn confidences(&self) -> Vec<f64> {
        (0..self.samples())
            .map(|j| self.column(j).into_iter().fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }
}

/// Encoder and heads applied to one `input_dim × n` input node.
pub fn build_heads(graph: &mut Graph, dims: &ModelDims, input: NodeId) -> Result<Vec<NodeId>, EngineError> {
    let width = graph.shape(input)[1];
    let ones = graph.constant(Tensor::filled(&[1, width], 1.0));
    let affine = |g: &mut Graph, prefix: &str, x: NodeId, out: usize, inp: usize| -> Result<NodeId, EngineError> {
        let w = g.param(&format!("{prefix}.weight"), &[out, inp])?;
        let b = g.param(&format!("{prefix}.bias"), &[out, 1])?;
        let wx = g.matmul(w, x)?;
        let bias = g.matmul(b, ones)?;
        g.add(wx, bias)
    };
    let hidden = affine(graph, "encoder.hidden", input, dims.hidden_dim, dims.input_dim)?;
    let hidden = graph.tanh(hidden);
    let features = affine(graph, "encoder.features", hidden, dims.feature_dim, dims.hidden_dim)?;
    (0..dims.clusterings)
        .map(|k| {
            let logits = affine(graph, &format!("head{k}"), features, dims.clusters, dims.feature_dim)?;
            graph.softmax_columns(logits)
        })
        .collect()
}

/// Gather `indices` of an `N × dim` feature table into a `dim × n` graph input.
pub fn batch_columns(features: &Tensor, indices: &[usize]) -> Tensor {
    let dim = features.cols();
    let n = indices.len();
    let mut out = vec![0.0; dim * n];
    for (j, &i) in indices.iter().enumerate() {
        for (d, &v) in features.row(i).iter().enumerate() {
            out[d * n + j] = v;
        }
    }
    Tensor::matrix(dim, n, out)
}

/// Soft assignments of every head for an `n × input_dim` batch.
pub fn forward(params: &ModelParams, batch: &Tensor) -> Result<Vec<AssignmentMatrix>, ModelError> {
    if batch.cols() != params.dims.input_dim {
        return Err(ModelError::InputDim { expected: params.dims.input_dim, found: batch.cols() });
    }
    if let Some(sample) = (0..batch.rows()).find(|&i| !batch.row(i).iter().all(|v| v.is_finite())) {
        return Err(ModelError::NonFiniteInput { sample });
    }
    let mut graph = Graph::new();
    let x = graph.input("x", &[params.dims.input_dim, batch.rows()])?;
    let heads = build_heads(&mut graph, &params.dims, x)?;
    let mut bindings = Bindings::new();
    params.bind_into(&mut bindings);
    bindings.insert("x".into(), batch.transpose());
    let ev = graph.forward(&bindings)?;
    Ok(heads
        .iter()
        .enumerate()
        .map(|(k, &h)| AssignmentMatrix::new(ev.value(h).clone(), k))
        .collect())
}
