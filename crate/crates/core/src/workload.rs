//! Per-step computations: minibatch SGD on a synthetic linear regression task, and
//! distributed mean/variance aggregation.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelState, NodeId, Update};
use crate::rng::{self, Stream};

/// Row-major design matrix with targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    dim: usize,
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Dataset {
    pub fn new(dim: usize) -> Self {
        Dataset {
            dim,
            xs: Vec::new(),
            ys: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, rows: usize) -> Self {
        Dataset {
            dim,
            xs: Vec::with_capacity(dim * rows),
            ys: Vec::with_capacity(rows),
        }
    }

    pub fn push(&mut self, x: &[f64], y: f64) {
        assert_eq!(x.len(), self.dim, "row length must equal dataset dimension");
        self.xs.extend_from_slice(x);
        self.ys.push(y);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn row(&self, i: usize) -> (&[f64], f64) {
        (&self.xs[i * self.dim..(i + 1) * self.dim], self.ys[i])
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.xs.chunks_exact(self.dim.max(1)).zip(self.ys.iter().copied())
    }

    pub fn extend(&mut self, other: &Dataset) {
        assert_eq!(self.dim, other.dim);
        self.xs.extend_from_slice(&other.xs);
        self.ys.extend_from_slice(&other.ys);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SgdSpec {
    pub samples_per_node: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub noise_sigma: f64,
    /// Size of the held-out set the loss curve is measured on.
    pub eval_samples: usize,
    /// Node data is kept in memory when the whole population's data fits in this many
    /// MiB; otherwise each minibatch row is regenerated from its seed.
    pub cache_limit_mb: usize,
}

impl Default for SgdSpec {
    fn default() -> Self {
        SgdSpec {
            samples_per_node: 100,
            batch_size: 16,
            learning_rate: 0.01,
            noise_sigma: 0.1,
            eval_samples: 1000,
            cache_limit_mb: 256,
        }
    }
}

/// Linear regression with standard normal features and Gaussian label noise. Every node
/// holds the same number of i.i.d. samples from the same generator.
#[derive(Clone, Debug)]
pub struct LinearTask {
    dim: usize,
    true_weights: Vec<f64>,
    spec: SgdSpec,
    seed: u64,
}

impl LinearTask {
    pub fn new(dim: usize, spec: SgdSpec, seed: u64) -> Self {
        let mut rng = rng::stream(seed, Stream::TaskWeights, 0);
        let true_weights = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        LinearTask {
            dim,
            true_weights,
            spec,
            seed,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spec(&self) -> &SgdSpec {
        &self.spec
    }

    pub fn true_weights(&self) -> &[f64] {
        &self.true_weights
    }

    fn draw_point<R: Rng>(&self, rng: &mut R, x: &mut [f64]) -> f64 {
        for v in x.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let noise: f64 = rng.sample(StandardNormal);
        dot(x, &self.true_weights) + self.spec.noise_sigma * noise
    }

    /// Writes sample `index` of `node` into `x` and returns its label.
    pub fn data_point(&self, node: NodeId, index: usize, x: &mut [f64]) -> f64 {
        let mut rng = rng::data_point(self.seed, node.0, index as u32);
        self.draw_point(&mut rng, x)
    }

    pub fn local_dataset(&self, node: NodeId) -> Dataset {
        let mut data = Dataset::with_capacity(self.dim, self.spec.samples_per_node);
        let mut x = vec![0.0; self.dim];
        for i in 0..self.spec.samples_per_node {
            let y = self.data_point(node, i, &mut x);
            data.push(&x, y);
        }
        data
    }

    /// Concatenation of the local datasets of `nodes`.
    pub fn pooled_dataset(&self, nodes: impl IntoIterator<Item = NodeId>) -> Dataset {
        let mut pooled = Dataset::new(self.dim);
        for node in nodes {
            pooled.extend(&self.local_dataset(node));
        }
        pooled
    }

    /// Held-out samples from the same generator, disjoint from every node's data.
    pub fn eval_dataset(&self) -> Dataset {
        let mut rng = rng::stream(self.seed, Stream::EvalData, 0);
        let mut data = Dataset::with_capacity(self.dim, self.spec.eval_samples);
        let mut x = vec![0.0; self.dim];
        for _ in 0..self.spec.eval_samples {
            let y = self.draw_point(&mut rng, &mut x);
            data.push(&x, y);
        }
        data
    }

    /// Bytes needed to hold `nodes` local datasets in memory.
    pub fn footprint_bytes(&self, nodes: usize) -> usize {
        nodes * self.spec.samples_per_node * (self.dim + 1) * std::mem::size_of::<f64>()
    }
}

/// A node's training data, either held in memory or regenerated row by row.
#[derive(Clone, Debug)]
pub enum LocalData {
    Stored(Dataset),
    OnDemand { node: NodeId, len: usize },
}

impl LocalData {
    pub fn for_node(task: &LinearTask, node: NodeId, materialize: bool) -> Self {
        if materialize {
            LocalData::Stored(task.local_dataset(node))
        } else {
            LocalData::OnDemand {
                node,
                len: task.spec.samples_per_node,
            }
        }
    }

    pub fn len(&self) -> usize {
        match self {
            LocalData::Stored(d) => d.len(),
            LocalData::OnDemand { len, .. } => *len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One minibatch step on the squared loss: `-lr / b * sum((x.w - y) x)` over a batch of
/// `b` distinct local rows.
pub fn sgd_gradient_step<R: Rng + ?Sized>(
    model: &ModelState,
    task: &LinearTask,
    data: &LocalData,
    node: NodeId,
    step: u64,
    rng: &mut R,
) -> Result<Update> {
    if data.is_empty() {
        return Err(Error::config("sgd.samples_per_node", "node has no local data"));
    }
    let w = model.params();
    if w.len() != task.dim {
        return Err(Error::DimensionMismatch {
            expected: w.len(),
            found: task.dim,
        });
    }
    let batch = task.spec.batch_size.min(data.len());
    let mut grad = vec![0.0; w.len()];
    let mut scratch = match data {
        LocalData::Stored(_) => Vec::new(),
        LocalData::OnDemand { .. } => vec![0.0; w.len()],
    };
    for i in rand::seq::index::sample(rng, data.len(), batch) {
        let (x, y) = match data {
            LocalData::Stored(d) => d.row(i),
            LocalData::OnDemand { node, .. } => {
                let y = task.data_point(*node, i, &mut scratch);
                (scratch.as_slice(), y)
            }
        };
        let residual = dot(x, w) - y;
        for (g, xi) in grad.iter_mut().zip(x) {
            *g += residual * xi;
        }
    }
    let scale = -task.spec.learning_rate / batch as f64;
    for g in &mut grad {
        *g *= scale;
    }
    Ok(Update {
        delta: grad,
        origin_node: node,
        origin_step: step,
    })
}

/// Half mean squared residual of `model` on `data`.
pub fn loss(model: &ModelState, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::config("dataset", "loss of an empty dataset"));
    }
    if data.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: data.dim(),
        });
    }
    let w = model.params();
    let sse: f64 = data
        .rows()
        .map(|(x, y)| {
            let r = dot(x, w) - y;
            r * r
        })
        .sum();
    Ok(0.5 * sse / data.len() as f64)
}

/// Count, mean and sum of squared deviations of a set of values.
#[derive(Copy, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SummaryStat {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl SummaryStat {
    pub fn push(&mut self, value: f64) {
        self.count += 1;
        let delta = value - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (value - self.mean);
    }

    /// Population variance, `m2 / count`; zero when empty.
    pub fn variance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.m2 / self.count as f64
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }
}

impl FromIterator<f64> for SummaryStat {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = SummaryStat::default();
        for v in iter {
            s.push(v);
        }
        s
    }
}

pub fn local_summary(values: &[f64]) -> SummaryStat {
    values.iter().copied().collect()
}

/// Pairwise combination of two summaries (Chan et al.).
pub fn merge_summaries(a: SummaryStat, b: SummaryStat) -> SummaryStat {
    if a.count == 0 {
        return b;
    }
    if b.count == 0 {
        return a;
    }
    let count = a.count + b.count;
    let (na, nb, n) = (a.count as f64, b.count as f64, count as f64);
    let delta = b.mean - a.mean;
    SummaryStat {
        count,
        mean: a.mean + delta * nb / n,
        m2: a.m2 + b.m2 + delta * delta * na * nb / n,
    }
}

/// Balanced binary-tree reduction of many summaries.
pub fn tree_merge(summaries: &[SummaryStat]) -> SummaryStat {
    match summaries {
        [] => SummaryStat::default(),
        [one] => *one,
        _ => {
            let (l, r) = summaries.split_at(summaries.len() / 2);
            merge_summaries(tree_merge(l), tree_merge(r))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AggregationSpec {
    /// Readings observed per step.
    pub batch_size: usize,
    /// Mean of the node means.
    pub global_mean: f64,
    /// Standard deviation of node means around `global_mean`.
    pub node_mean_spread: f64,
    /// Standard deviation of readings around their node's mean.
    pub value_sigma: f64,
}

impl Default for AggregationSpec {
    fn default() -> Self {
        AggregationSpec {
            batch_size: 16,
            global_mean: 0.0,
            node_mean_spread: 1.0,
            value_sigma: 1.0,
        }
    }
}

/// Each node streams readings around its own mean and commits a summary of every batch.
/// The committed delta is the batch's raw moments `[count, sum, sum of squares]` so that
/// the shared model stays additive; the exact pooled summary is merged alongside.
#[derive(Clone, Debug)]
pub struct AggregationTask {
    spec: AggregationSpec,
    seed: u64,
}

impl AggregationTask {
    pub const MODEL_DIM: usize = 3;

    pub fn new(spec: AggregationSpec, seed: u64) -> Self {
        AggregationTask { spec, seed }
    }

    pub fn spec(&self) -> &AggregationSpec {
        &self.spec
    }

    pub fn node_mean(&self, node: NodeId) -> f64 {
        let mut rng = rng::stream(self.seed, Stream::NodeMean, u64::from(node.0));
        let z: f64 = rng.sample(StandardNormal);
        self.spec.global_mean + self.spec.node_mean_spread * z
    }

    pub fn step<R: Rng + ?Sized>(&self, node: NodeId, step: u64, rng: &mut R) -> Result<(Update, SummaryStat)> {
        let dist = Normal::new(self.node_mean(node), self.spec.value_sigma)
            .map_err(|e| Error::config("aggregation.value_sigma", e.to_string()))?;
        let values: Vec<f64> = (0..self.spec.batch_size).map(|_| dist.sample(rng)).collect();
        let sum: f64 = values.iter().sum();
        let sum_sq: f64 = values.iter().map(|v| v * v).sum();
        let update = Update {
            delta: vec![values.len() as f64, sum, sum_sq],
            origin_node: node,
            origin_step: step,
        };
        Ok((update, local_summary(&values)))
    }

    /// Squared error of a pooled mean estimate against the generating mean.
    pub fn loss(&self, summary: &SummaryStat) -> f64 {
        let e = summary.mean - self.spec.global_mean;
        0.5 * e * e
    }
}
