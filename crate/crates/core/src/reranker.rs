//! Sentence-graph scorer.
//!
//! The candidate, previous and next sentences of a window are the three nodes
//! of a fully connected graph (self-loops included). Edge scores come from a
//! small feed-forward network over `[r_i ⊙ r_j; d_i; d_j]`, are softmax
//! normalized per row, and drive `L` graph-convolution layers:
//!
//! ```text
//! h_i^l = ReLU( Σ_j α_ij W^l h_j^{l-1} + b^l ),   h_i^0 = r_i
//! ```
//!
//! The candidate's final vector feeds a sigmoid scoring head.
//!
//! Every forward pass here records what the backward pass needs; the
//! backward passes accumulate into a parameter-shaped gradient buffer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{CandidateWindow, QAInstance, Sentence};
use crate::embeddings::{EmbeddingStore, FrequencyTable};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg::{dot, sigmoid, softmax, softplus, Matrix};
use crate::sinkhorn::{align_sentence, AlignmentResult, SinkhornConfig};

/// Number of graph nodes (cand, prev, next).
pub const NODES: usize = 3;

/// Affine layer `y = W x + b`, `W` stored as `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Matrix::zeros(output, input),
            bias: vec![0.0; output],
        }
    }

    /// Weights uniform in `±1/√fan_in`, zero bias.
    pub fn init(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        Self {
            weight: Matrix::from_fn(output, input, |_, _| rng.random_range(-bound..=bound)),
            bias: vec![0.0; output],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.weight.matvec(x);
        for (yi, bi) in y.iter_mut().zip(&self.bias) {
            *yi += bi;
        }
        y
    }
}

/// Feed-forward network with ReLU hidden layers and a scalar linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Ffn {
    pub layers: Vec<Dense>,
}

/// Activations recorded by [`Ffn::forward_cached`].
#[derive(Debug, Clone)]
pub struct FfnCache {
    /// Input to each layer.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation output of each hidden layer.
    pre: Vec<Vec<f64>>,
}

impl FfnCache {
    fn margin(&self) -> f64 {
        self.pre
            .iter()
            .flatten()
            .fold(f64::INFINITY, |m, z| m.min(z.abs()))
    }
}

impl Ffn {
    /// `input → hidden (ReLU) → 1`
    pub fn init(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Self {
            layers: vec![Dense::init(input, hidden, rng), Dense::init(hidden, 1, rng)],
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            layers: vec![Dense::zeros(input, hidden), Dense::zeros(hidden, 1)],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.layers[0].output_dim()
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        self.forward_cached(x).1
    }

    pub fn forward_cached(&self, x: &[f64]) -> (FfnCache, f64) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len() - 1);
        let mut a = x.to_vec();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&a);
            inputs.push(std::mem::take(&mut a));
            if k == last {
                return (FfnCache { inputs, pre }, z[0]);
            }
            a = z.iter().map(|v| v.max(0.0)).collect();
            pre.push(z);
        }
        unreachable!("ffn has at least one layer")
    }

    /// Smallest |pre-activation| of the hidden ReLUs for input `x`.
    pub fn relu_margin(&self, x: &[f64]) -> f64 {
        self.forward_cached(x).0.margin()
    }

    /// Accumulate parameter gradients for upstream derivative `dout` and
    /// return the derivative with respect to the input.
    pub fn backward(&self, cache: &FfnCache, dout: f64, grad: &mut Ffn) -> Vec<f64> {
        let mut delta = vec![dout];
        for k in (0..self.layers.len()).rev() {
            let g = &mut grad.layers[k];
            g.weight.add_outer(&delta, &cache.inputs[k]);
            for (b, d) in g.bias.iter_mut().zip(&delta) {
                *b += d;
            }
            let mut dx = self.layers[k].weight.matvec_t(&delta);
            if k == 0 {
                return dx;
            }
            for (v, z) in dx.iter_mut().zip(&cache.pre[k - 1]) {
                if *z <= 0.0 {
                    *v = 0.0;
                }
            }
            delta = dx;
        }
        unreachable!("ffn has at least one layer")
    }
}

/// Graph-convolution layers; each weight is `d × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams {
    pub layers: Vec<Dense>,
}

/// Architecture sizes; everything else follows from these.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub dim: usize,
    pub gcn_layers: usize,
    pub dep_hidden: usize,
    pub head_hidden: usize,
    pub disc_hidden: usize,
}

impl ModelShape {
    pub fn new(dim: usize, hidden: usize, gcn_layers: usize) -> Self {
        Self {
            dim,
            gcn_layers,
            dep_hidden: hidden,
            head_hidden: hidden,
            disc_hidden: hidden,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0
            || self.gcn_layers == 0
            || self.dep_hidden == 0
            || self.head_hidden == 0
            || self.disc_hidden == 0
        {
            return Err(Error::Config(format!(
                "all model sizes must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// All trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Edge scorer over `[r_i ⊙ r_j; d_i; d_j]` (input `d + 2`).
    pub dep: Ffn,
    pub gcn: GcnParams,
    /// Candidate scoring head (logit; sigmoid applied outside).
    pub head: Ffn,
    /// Mutual-information discriminator over `[h_i; h_j]` (input `2d`).
    pub disc: Ffn,
}

impl ModelParams {
    pub fn init(shape: ModelShape, rng: &mut impl Rng) -> Self {
        let d = shape.dim;
        let dep = Ffn::init(d + 2, shape.dep_hidden, rng);
        let gcn = GcnParams {
            layers: (0..shape.gcn_layers)
                .map(|_| Dense::init(d, d, rng))
                .collect(),
        };
        let head = Ffn::init(d, shape.head_hidden, rng);
        let disc = Ffn::init(2 * d, shape.disc_hidden, rng);
        Self {
            dep,
            gcn,
            head,
            disc,
        }
    }

    pub fn zeros(shape: ModelShape) -> Self {
        let d = shape.dim;
        Self {
            dep: Ffn::zeros(d + 2, shape.dep_hidden),
            gcn: GcnParams {
                layers: (0..shape.gcn_layers).map(|_| Dense::zeros(d, d)).collect(),
            },
            head: Ffn::zeros(d, shape.head_hidden),
            disc: Ffn::zeros(2 * d, shape.disc_hidden),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.shape())
    }

    pub fn shape(&self) -> ModelShape {
        ModelShape {
            dim: self.head.input_dim(),
            gcn_layers: self.gcn.layers.len(),
            dep_hidden: self.dep.hidden_dim(),
            head_hidden: self.head.hidden_dim(),
            disc_hidden: self.disc.hidden_dim(),
        }
    }

    pub fn dim(&self) -> usize {
        self.head.input_dim()
    }

    /// Parameter tensors in fixed declaration order, with stable names.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        fn ffn<'a>(prefix: &str, f: &'a Ffn, out: &mut Vec<(String, &'a [f64])>) {
            for (k, l) in f.layers.iter().enumerate() {
                out.push((format!("{prefix}.{k}.weight"), l.weight.as_slice()));
                out.push((format!("{prefix}.{k}.bias"), l.bias.as_slice()));
            }
        }
        let mut out = Vec::new();
        ffn("dep", &self.dep, &mut out);
        for (k, l) in self.gcn.layers.iter().enumerate() {
            out.push((format!("gcn.{k}.weight"), l.weight.as_slice()));
            out.push((format!("gcn.{k}.bias"), l.bias.as_slice()));
        }
        ffn("head", &self.head, &mut out);
        ffn("disc", &self.disc, &mut out);
        out
    }

    /// Mutable tensors, same order as [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in self.dep.layers.iter_mut() {
            out.push(l.weight.as_mut_slice());
            out.push(l.bias.as_mut_slice());
        }
        for l in self.gcn.layers.iter_mut() {
            out.push(l.weight.as_mut_slice());
            out.push(l.bias.as_mut_slice());
        }
        for f in [&mut self.head, &mut self.disc] {
            for l in f.layers.iter_mut() {
                out.push(l.weight.as_mut_slice());
                out.push(l.bias.as_mut_slice());
            }
        }
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// `self += other`, tensor by tensor.
    pub fn add_assign(&mut self, other: &ModelParams) {
        for (a, (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

/// Input to the dependency FFN for edge `(i, j)`.
fn edge_features(r_i: &[f64], r_j: &[f64], d_i: f64, d_j: f64) -> Vec<f64> {
    let mut z: Vec<f64> = r_i.iter().zip(r_j).map(|(a, b)| a * b).collect();
    z.push(d_i);
    z.push(d_j);
    z
}

/// Edge score `u_ij = FFN_dep([r_i ⊙ r_j; d_i; d_j])`.
pub fn dependency_score(r_i: &[f64], r_j: &[f64], d_i: f64, d_j: f64, dep: &Ffn) -> Result<f64> {
    if r_i.len() != r_j.len() || r_i.len() + 2 != dep.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "representations of length {} and {} for a dependency network with input {}",
            r_i.len(),
            r_j.len(),
            dep.input_dim()
        )));
    }
    if !(d_i.is_finite() && d_j.is_finite()) || r_i.iter().chain(r_j).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("dependency score input"));
    }
    Ok(dep.forward(&edge_features(r_i, r_j, d_i, d_j)))
}

/// Softmax over one row of edge scores.
pub fn edge_weights(u_row: &[f64; NODES]) -> [f64; NODES] {
    let a = softmax(u_row);
    [a[0], a[1], a[2]]
}

/// Run the GCN over node features `h0` with edge weights `alpha`.
pub fn gcn_forward(
    alpha: &[[f64; NODES]; NODES],
    h0: &[Vec<f64>],
    gcn: &GcnParams,
) -> Result<Vec<Vec<f64>>> {
    if h0.len() != NODES {
        return Err(Error::ShapeMismatch(format!(
            "expected {NODES} nodes, got {}",
            h0.len()
        )));
    }
    for l in &gcn.layers {
        if h0.iter().any(|h| h.len() != l.input_dim()) {
            return Err(Error::ShapeMismatch(
                "node dimension does not match GCN weight".into(),
            ));
        }
    }
    let h: [Vec<f64>; NODES] = [h0[0].clone(), h0[1].clone(), h0[2].clone()];
    Ok(gcn_forward_cached(alpha, h, gcn).0.to_vec())
}

#[derive(Debug, Clone)]
struct GcnLayerCache {
    input: [Vec<f64>; NODES],
    projected: [Vec<f64>; NODES],
    pre: [Vec<f64>; NODES],
}

fn gcn_forward_cached(
    alpha: &[[f64; NODES]; NODES],
    h0: [Vec<f64>; NODES],
    gcn: &GcnParams,
) -> ([Vec<f64>; NODES], Vec<GcnLayerCache>) {
    let mut h = h0;
    let mut caches = Vec::with_capacity(gcn.layers.len());
    for layer in &gcn.layers {
        let projected: [Vec<f64>; NODES] = std::array::from_fn(|j| layer.weight.matvec(&h[j]));
        let pre: [Vec<f64>; NODES] = std::array::from_fn(|i| {
            let mut m = layer.bias.clone();
            for j in 0..NODES {
                for (mk, pk) in m.iter_mut().zip(&projected[j]) {
                    *mk += alpha[i][j] * pk;
                }
            }
            m
        });
        let out: [Vec<f64>; NODES] =
            std::array::from_fn(|i| pre[i].iter().map(|v| v.max(0.0)).collect());
        caches.push(GcnLayerCache {
            input: std::mem::replace(&mut h, out),
            projected,
            pre,
        });
    }
    (h, caches)
}

/// Correctness probability for a candidate representation.
pub fn score_candidate(h1: &[f64], head: &Ffn) -> f64 {
    sigmoid(head.forward(h1))
}

/// Binary cross-entropy of a probability against a label.
pub fn as2_loss(p: f64, label: bool) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::ProbabilityOutOfRange(p));
    }
    Ok(if label { -p.ln() } else { -(1.0 - p).ln() })
}

/// Binary cross-entropy computed from the logit, stable for large |logit|.
pub fn bce_with_logit(logit: f64, label: bool) -> f64 {
    if label {
        softplus(-logit)
    } else {
        softplus(logit)
    }
}

/// Per-node inputs to the graph: pooled representations and transport costs,
/// in node order (cand, prev, next).
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInput {
    pub reps: [Vec<f64>; NODES],
    pub costs: [f64; NODES],
}

/// Everything recorded during one window's forward pass.
#[derive(Debug, Clone)]
pub struct WindowForward {
    pub u: [[f64; NODES]; NODES],
    pub alpha: [[f64; NODES]; NODES],
    /// Final node representations `h_1..h_3`.
    pub h: [Vec<f64>; NODES],
    pub logit: f64,
    pub score: f64,
    dep_caches: Vec<FfnCache>,
    gcn_caches: Vec<GcnLayerCache>,
    head_cache: FfnCache,
}

impl WindowForward {
    /// Smallest |pre-activation| over every ReLU in the pass. Finite
    /// differences are only meaningful while this stays well above the step.
    pub fn relu_margin(&self) -> f64 {
        let gcn = self.gcn_caches.iter().flat_map(|c| c.pre.iter().flatten());
        let ffn = self
            .dep_caches
            .iter()
            .chain([&self.head_cache])
            .map(FfnCache::margin);
        gcn.map(|z| z.abs())
            .chain(ffn)
            .fold(f64::INFINITY, f64::min)
    }
}

impl ModelParams {
    pub fn forward(&self, input: &GraphInput) -> WindowForward {
        let mut u = [[0.0; NODES]; NODES];
        let mut dep_caches = Vec::with_capacity(NODES * NODES);
        for i in 0..NODES {
            for j in 0..NODES {
                let z = edge_features(
                    &input.reps[i],
                    &input.reps[j],
                    input.costs[i],
                    input.costs[j],
                );
                let (cache, out) = self.dep.forward_cached(&z);
                u[i][j] = out;
                dep_caches.push(cache);
            }
        }
        let alpha: [[f64; NODES]; NODES] = std::array::from_fn(|i| edge_weights(&u[i]));
        let (h, gcn_caches) = gcn_forward_cached(&alpha, input.reps.clone(), &self.gcn);
        let (head_cache, logit) = self.head.forward_cached(&h[0]);
        WindowForward {
            u,
            alpha,
            h,
            logit,
            score: sigmoid(logit),
            dep_caches,
            gcn_caches,
            head_cache,
        }
    }

    /// Back-propagate `d_logit` (scoring head) and `d_h` (extra derivatives
    /// on the final node vectors, e.g. from the discriminator) into `grad`.
    /// Node inputs are constants and receive no gradient.
    pub fn backward(
        &self,
        fwd: &WindowForward,
        d_logit: f64,
        mut d_h: [Vec<f64>; NODES],
        grad: &mut ModelParams,
    ) {
        let dim = self.dim();
        for v in d_h.iter_mut() {
            if v.is_empty() {
                *v = vec![0.0; dim];
            }
        }
        if d_logit != 0.0 {
            let dx = self.head.backward(&fwd.head_cache, d_logit, &mut grad.head);
            for (a, b) in d_h[0].iter_mut().zip(&dx) {
                *a += b;
            }
        }

        let mut d_alpha = [[0.0; NODES]; NODES];
        for (l, layer) in self.gcn.layers.iter().enumerate().rev() {
            let cache = &fwd.gcn_caches[l];
            let d_pre: [Vec<f64>; NODES] = std::array::from_fn(|i| {
                d_h[i]
                    .iter()
                    .zip(&cache.pre[i])
                    .map(|(g, z)| if *z > 0.0 { *g } else { 0.0 })
                    .collect()
            });
            let g = &mut grad.gcn.layers[l];
            for dp in &d_pre {
                for (b, v) in g.bias.iter_mut().zip(dp) {
                    *b += v;
                }
            }
            for i in 0..NODES {
                for j in 0..NODES {
                    d_alpha[i][j] += dot(&d_pre[i], &cache.projected[j]);
                }
            }
            let d_proj: [Vec<f64>; NODES] = std::array::from_fn(|j| {
                let mut acc = vec![0.0; d_pre[0].len()];
                for i in 0..NODES {
                    for (a, v) in acc.iter_mut().zip(&d_pre[i]) {
                        *a += fwd.alpha[i][j] * v;
                    }
                }
                acc
            });
            for j in 0..NODES {
                g.weight.add_outer(&d_proj[j], &cache.input[j]);
            }
            if l > 0 {
                d_h = std::array::from_fn(|j| layer.weight.matvec_t(&d_proj[j]));
            }
        }

        for i in 0..NODES {
            let s: f64 = (0..NODES).map(|k| fwd.alpha[i][k] * d_alpha[i][k]).sum();
            for j in 0..NODES {
                let du = fwd.alpha[i][j] * (d_alpha[i][j] - s);
                if du != 0.0 {
                    self.dep
                        .backward(&fwd.dep_caches[i * NODES + j], du, &mut grad.dep);
                }
            }
        }
    }
}

/// A window reduced to graph inputs; alignment is done once up front since
/// transport plans depend on no trainable parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedWindow {
    pub window_id: String,
    pub input: GraphInput,
    /// Labels in node order; `None` for padding or unknown.
    pub labels: [Option<bool>; NODES],
}

impl PreparedWindow {
    pub fn label(&self) -> bool {
        self.labels[0].unwrap_or(false)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedInstance {
    pub question_id: String,
    pub windows: Vec<PreparedWindow>,
}

/// Align the three sentences of a window against the question.
pub fn align_window(
    instance: &QAInstance,
    window: &CandidateWindow,
    store: &EmbeddingStore,
    ft: &FrequencyTable,
    cfg: &SinkhornConfig,
) -> Result<[AlignmentResult; NODES]> {
    let qv = store.question_vectors(&instance.question_id, &instance.question)?;
    align_window_with(
        &instance.question,
        &qv,
        &instance.question_id,
        window,
        store,
        ft,
        cfg,
    )
}

fn align_window_with(
    question: &Sentence,
    question_vectors: &[Vec<f64>],
    instance_id: &str,
    window: &CandidateWindow,
    store: &EmbeddingStore,
    ft: &FrequencyTable,
    cfg: &SinkhornConfig,
) -> Result<[AlignmentResult; NODES]> {
    let sentences = window.sentences()?;
    let mut out = Vec::with_capacity(NODES);
    for s in sentences {
        let sv = store.sentence_vectors(instance_id, &window.id, s)?;
        out.push(align_sentence(question, question_vectors, s, &sv, ft, cfg)?);
    }
    let [a, b, c]: [AlignmentResult; NODES] = out.try_into().expect("three sentences");
    Ok([a, b, c])
}

fn to_prepared(window: &CandidateWindow, al: &[AlignmentResult; NODES]) -> PreparedWindow {
    PreparedWindow {
        window_id: window.id.clone(),
        input: GraphInput {
            reps: std::array::from_fn(|k| al[k].representation.clone()),
            costs: std::array::from_fn(|k| al[k].cost),
        },
        labels: window.labels(),
    }
}

pub fn prepare_instance(
    instance: &QAInstance,
    store: &EmbeddingStore,
    ft: &FrequencyTable,
    cfg: &SinkhornConfig,
) -> Result<PreparedInstance> {
    let qv = store.question_vectors(&instance.question_id, &instance.question)?;
    let windows = instance
        .windows
        .iter()
        .map(|w| {
            let al = align_window_with(
                &instance.question,
                &qv,
                &instance.question_id,
                w,
                store,
                ft,
                cfg,
            )?;
            Ok(to_prepared(w, &al))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PreparedInstance {
        question_id: instance.question_id.clone(),
        windows,
    })
}

/// Align every window of every instance.
pub fn prepare_instances(
    instances: &[QAInstance],
    store: &EmbeddingStore,
    ft: &FrequencyTable,
    cfg: &SinkhornConfig,
    exec: Exec,
) -> Result<Vec<PreparedInstance>> {
    exec.try_map(instances, |inst| prepare_instance(inst, store, ft, cfg))
}

/// Result of scoring one window end to end.
#[derive(Debug, Clone)]
pub struct WindowScore {
    pub score: f64,
    pub h: [Vec<f64>; NODES],
    pub alpha: [[f64; NODES]; NODES],
    pub alignments: [AlignmentResult; NODES],
}

/// Align, build the graph, propagate and score one candidate window.
pub fn score_window(
    instance: &QAInstance,
    window: &CandidateWindow,
    store: &EmbeddingStore,
    ft: &FrequencyTable,
    params: &ModelParams,
    cfg: &SinkhornConfig,
) -> Result<WindowScore> {
    if store.dim() != params.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            found: store.dim(),
        });
    }
    let alignments = align_window(instance, window, store, ft, cfg)?;
    let fwd = params.forward(&to_prepared(window, &alignments).input);
    Ok(WindowScore {
        score: fwd.score,
        h: fwd.h,
        alpha: fwd.alpha,
        alignments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn zero_dep_network_scores_zero() {
        let dep = Ffn::zeros(6, 5);
        assert_eq!(
            dependency_score(&[1.0; 4], &[2.0; 4], 0.3, 0.7, &dep).unwrap(),
            0.0
        );
    }

    #[test]
    fn zero_representation_only_sees_costs() {
        let dep = Ffn::init(5, 7, &mut rng());
        let zero = [0.0; 3];
        let a = dependency_score(&zero, &[1.0, -2.0, 3.0], 0.4, 1.1, &dep).unwrap();
        let b = dependency_score(&zero, &[-5.0, 9.0, 0.5], 0.4, 1.1, &dep).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dependency_score_errors() {
        let dep = Ffn::zeros(4, 3);
        assert!(matches!(
            dependency_score(&[1.0; 2], &[1.0; 3], 0.0, 0.0, &dep),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(matches!(
            dependency_score(&[1.0; 2], &[1.0; 2], f64::NAN, 0.0, &dep),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn edge_weight_examples() {
        assert!(edge_weights(&[0.3, 0.3, 0.3])
            .iter()
            .all(|a| (a - 1.0 / 3.0).abs() < 1e-15));
        let a = edge_weights(&[2f64.ln(), 0.0, 0.0]);
        assert!(
            (a[0] - 0.5).abs() < 1e-15
                && (a[1] - 0.25).abs() < 1e-15
                && (a[2] - 0.25).abs() < 1e-15
        );
        let b = edge_weights(&[2f64.ln() + 100.0, 100.0, 100.0]);
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() < 1e-15);
        }
    }

    fn identity_gcn(d: usize, layers: usize) -> GcnParams {
        GcnParams {
            layers: (0..layers)
                .map(|_| Dense {
                    weight: Matrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { 0.0 }),
                    bias: vec![0.0; d],
                })
                .collect(),
        }
    }

    #[test]
    fn gcn_identity_is_fixed_point() {
        let alpha = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let h0 = vec![vec![0.5, 2.0], vec![0.0, 1.0], vec![3.0, 0.25]];
        assert_eq!(gcn_forward(&alpha, &h0, &identity_gcn(2, 2)).unwrap(), h0);
    }

    #[test]
    fn gcn_saturates_with_large_negative_bias() {
        let mut g = identity_gcn(2, 2);
        for l in &mut g.layers {
            l.bias = vec![-1e6; 2];
        }
        let alpha = [[1.0 / 3.0; 3]; 3];
        let h0 = vec![vec![5.0, 2.0], vec![1.0, 1.0], vec![3.0, 7.0]];
        let out = gcn_forward(&alpha, &h0, &g).unwrap();
        assert!(out.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn gcn_shape_errors() {
        let alpha = [[1.0 / 3.0; 3]; 3];
        assert!(gcn_forward(&alpha, &[vec![1.0; 2], vec![1.0; 2]], &identity_gcn(2, 1)).is_err());
        assert!(gcn_forward(
            &alpha,
            &[vec![1.0; 3], vec![1.0; 3], vec![1.0; 3]],
            &identity_gcn(2, 1)
        )
        .is_err());
    }

    #[test]
    fn head_examples() {
        assert_eq!(score_candidate(&[1.0, 2.0], &Ffn::zeros(2, 3)), 0.5);
        let mut head = Ffn::zeros(2, 3);
        head.layers[1].bias[0] = 20.0;
        let p = score_candidate(&[1.0, 2.0], &head);
        assert!(p < 1.0 && 1.0 - p < 1e-8);
    }

    #[test]
    fn as2_loss_examples() {
        assert!((as2_loss(0.5, true).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((as2_loss(0.5, false).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((as2_loss(0.9, true).unwrap() - 0.105_360_515_657_826_3).abs() < 1e-12);
        assert!(matches!(
            as2_loss(1.0, true),
            Err(Error::ProbabilityOutOfRange(_))
        ));
        assert!(matches!(
            as2_loss(0.0, false),
            Err(Error::ProbabilityOutOfRange(_))
        ));
        let z = 0.37;
        assert!((bce_with_logit(z, true) - as2_loss(sigmoid(z), true).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn tensor_order_is_stable() {
        let p = ModelParams::init(ModelShape::new(3, 4, 2), &mut rng());
        let names: Vec<String> = p.tensors().into_iter().map(|(n, _)| n).collect();
        assert_eq!(
            names,
            [
                "dep.0.weight",
                "dep.0.bias",
                "dep.1.weight",
                "dep.1.bias",
                "gcn.0.weight",
                "gcn.0.bias",
                "gcn.1.weight",
                "gcn.1.bias",
                "head.0.weight",
                "head.0.bias",
                "head.1.weight",
                "head.1.bias",
                "disc.0.weight",
                "disc.0.bias",
                "disc.1.weight",
                "disc.1.bias"
            ]
        );
        let mut q = p.clone();
        assert_eq!(q.tensors_mut().len(), names.len());
        assert_eq!(p.shape(), ModelShape::new(3, 4, 2));
    }

    #[test]
    fn init_is_bounded_and_biases_zero() {
        let p = ModelParams::init(ModelShape::new(4, 10, 2), &mut rng());
        let b = 1.0 / 6f64.sqrt();
        assert!(p.dep.layers[0]
            .weight
            .as_slice()
            .iter()
            .all(|w| w.abs() <= b));
        assert!(p.dep.layers[0].bias.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn alpha_rows_are_stochastic_and_output_nonnegative() {
        let p = ModelParams::init(ModelShape::new(4, 8, 2), &mut rng());
        let input = GraphInput {
            reps: [
                vec![0.3, -1.0, 2.0, 0.1],
                vec![0.0; 4],
                vec![1.5, 0.2, -0.7, 0.9],
            ],
            costs: [0.8, 0.0, 1.7],
        };
        let f = p.forward(&input);
        for row in f.alpha {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|a| *a > 0.0 && *a < 1.0));
        }
        assert!(f.h.iter().flatten().all(|v| *v >= 0.0));
        assert!(f.score > 0.0 && f.score < 1.0);
    }

    #[test]
    fn identical_contexts_commute() {
        let p = ModelParams::init(ModelShape::new(3, 6, 2), &mut rng());
        let ctx = vec![0.4, -0.2, 1.0];
        let input = GraphInput {
            reps: [vec![1.0, 0.5, 0.2], ctx.clone(), ctx],
            costs: [0.5, 0.9, 0.9],
        };
        let mut swapped = input.clone();
        swapped.reps.swap(1, 2);
        swapped.costs.swap(1, 2);
        assert_eq!(p.forward(&input).score, p.forward(&swapped).score);
    }
}
