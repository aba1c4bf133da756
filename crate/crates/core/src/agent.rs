//! Actor-critic placement agent over graph-convolution features.
//!
//! The agent places one virtual node per step. A state is a per-physical-
//! node feature matrix plus a feasibility mask; the policy model runs the
//! convolution trunk, scores each node through an actor head (masked
//! softmax), and estimates the state value through a mean-pooled critic
//! head. Training is asynchronous advantage actor-critic: workers own
//! private environments and model replicas and push per-tensor deltas into
//! a shared store.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Mutex};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::baselines::by_demand_desc;
use crate::embedding::{embed, evict, ActiveEmbeddings, NodePlacer, PlaceError};
use crate::gcn::{
    load_checkpoint, normalized_laplacian, save_checkpoint, GcnGradients, GcnLayer, GcnNetwork,
};
use crate::metrics::{cost, revenue};
use crate::substrate::{NodeId, SubstrateNetwork, Time, Units, VirtualNetwork};
use crate::workload::{
    generate_substrate, generate_vnr_stream, stream_rng, VirtualRequest, WorkloadConfig,
    WorkloadError, STREAM_TRAIN,
};

/// Feature columns per physical node, in order: free CPU, summed free
/// bandwidth of incident links, demand of the virtual node being placed
/// (broadcast), already-placed neighbors of that virtual node hosted here,
/// and the requests's still-unplaced CPU demand (broadcast).
pub const STATE_FEATURES: usize = 5;

/// One decision point: features for every physical node plus the mask of
/// hosts that can take the current virtual node.
#[derive(Debug, Clone, PartialEq)]
pub struct StateEncoding {
    pub features: DMatrix<f64>,
    pub mask: Vec<bool>,
}

/// Encodes the placement state for `current`, one row per physical node.
/// Every feature is scaled into [0, 1] by its range: free CPU and the
/// broadcast demand by the largest node capacity, free bandwidth by the
/// largest incident-capacity sum, neighbor counts by the current node's
/// degree, and remaining demand by the request's total demand. A host is
/// feasible when its free CPU covers the demand and this request does not
/// already use it.
pub fn encode_state(
    net: &SubstrateNetwork,
    vn: &VirtualNetwork,
    placed: &BTreeMap<NodeId, NodeId>,
    current: NodeId,
) -> StateEncoding {
    let demand = vn.node_demand(current).expect("current virtual node exists");
    let n = net.node_count();
    let max_cap = net.nodes().iter().map(|x| x.cpu_capacity).max().unwrap_or(1).max(1) as f64;
    let max_bw_sum = (0..n)
        .map(|p| net.incident_links(p).iter().map(|&l| net.link(l).bw_capacity).sum::<Units>())
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let total_demand = vn.total_cpu_demand().max(1) as f64;
    let unplaced: Units = vn
        .nodes()
        .filter(|v| !placed.contains_key(&v.id))
        .map(|v| v.cpu_demand)
        .sum();
    let neighbors: Vec<NodeId> = vn
        .incident_links(current)
        .into_iter()
        .map(|l| {
            let (u, v) = vn.link_endpoints(l).unwrap();
            if u == current {
                v
            } else {
                u
            }
        })
        .collect();
    let degree = neighbors.len().max(1) as f64;

    let mut features = DMatrix::zeros(n, STATE_FEATURES);
    let mut mask = vec![false; n];
    for p in 0..n {
        let node = net.node(p);
        features[(p, 0)] = node.cpu_free as f64 / max_cap;
        let bw_free: Units = net.incident_links(p).iter().map(|&l| net.link(l).bw_free).sum();
        features[(p, 1)] = bw_free as f64 / max_bw_sum;
        features[(p, 2)] = (demand as f64 / max_cap).min(1.0);
        let placed_here = neighbors
            .iter()
            .filter(|nb| placed.get(nb) == Some(&p))
            .count();
        features[(p, 3)] = placed_here as f64 / degree;
        features[(p, 4)] = unplaced as f64 / total_demand;
        mask[p] = node.cpu_free >= demand && !placed.values().any(|&h| h == p);
    }
    StateEncoding { features, mask }
}

/// Masked softmax: probabilities over feasible entries, exact zeros
/// elsewhere. The caller guarantees at least one feasible entry.
pub fn masked_softmax(logits: &DVector<f64>, mask: &[bool]) -> Vec<f64> {
    assert_eq!(logits.len(), mask.len());
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&z, _)| z)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(max.is_finite(), "at least one feasible action");
    let mut probs = vec![0.0; mask.len()];
    let mut total = 0.0;
    for i in 0..mask.len() {
        if mask[i] {
            let e = (logits[i] - max).exp();
            probs[i] = e;
            total += e;
        }
    }
    for p in &mut probs {
        *p /= total;
    }
    probs
}

/// The policy: a convolution trunk shared by an actor head producing one
/// logit per physical node and a critic head producing a state value from
/// the mean-pooled node embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyModel {
    pub gcn: GcnNetwork,
    pub actor_w: DVector<f64>,
    pub actor_b: f64,
    pub critic_w: DVector<f64>,
    pub critic_b: f64,
}

/// Forward-pass products kept for scoring and the reverse pass.
#[derive(Debug, Clone)]
pub struct PolicyEval {
    pub logits: DVector<f64>,
    pub value: f64,
    trace: crate::gcn::GcnTrace,
}

impl PolicyModel {
    /// Hidden layer widths follow the feature count; heads read the last
    /// width. All parameters draw uniformly from [-s, s] with s the
    /// inverse square root of their fan-in.
    pub fn new(rng: &mut ChaCha8Rng, hidden: &[usize], order: usize) -> Self {
        assert!(!hidden.is_empty(), "at least one hidden width");
        let mut sizes = vec![STATE_FEATURES];
        sizes.extend_from_slice(hidden);
        let gcn = GcnNetwork::new(rng, &sizes, order);
        let h = *hidden.last().unwrap();
        let s = (h as f64).sqrt().recip();
        let actor_w = DVector::from_fn(h, |_, _| rng.random_range(-s..=s));
        let actor_b = rng.random_range(-s..=s);
        let critic_w = DVector::from_fn(h, |_, _| rng.random_range(-s..=s));
        let critic_b = rng.random_range(-s..=s);
        Self { gcn, actor_w, actor_b, critic_w, critic_b }
    }

    pub fn hidden_width(&self) -> usize {
        self.gcn.output_channels()
    }

    pub fn forward(&self, laplacian: &DMatrix<f64>, features: &DMatrix<f64>) -> PolicyEval {
        let trace = self.gcn.forward(laplacian, features);
        let emb = &trace.output;
        let logits = DVector::from_fn(emb.nrows(), |i, _| {
            emb.row(i).transpose().dot(&self.actor_w) + self.actor_b
        });
        let pooled = emb.row_mean().transpose();
        let value = pooled.dot(&self.critic_w) + self.critic_b;
        PolicyEval { logits, value, trace }
    }

    /// Gradients of one step's loss
    ///   -advantage * log pi(action) - entropy_coef * H(pi)
    ///   + critic_coef * (ret - value)^2
    /// with the advantage treated as a constant. Returns gradients aligned
    /// with `tensor_data` order plus the step's log-prob, entropy, value.
    #[allow(clippy::too_many_arguments)]
    pub fn backward_step(
        &self,
        laplacian: &DMatrix<f64>,
        state: &StateEncoding,
        action: NodeId,
        advantage: f64,
        ret: f64,
        entropy_coef: f64,
        critic_coef: f64,
    ) -> (Vec<Vec<f64>>, f64, f64, f64) {
        assert!(state.mask[action], "the taken action was feasible");
        let eval = self.forward(laplacian, &state.features);
        let probs = masked_softmax(&eval.logits, &state.mask);
        let log_p = probs[action].max(f64::MIN_POSITIVE).ln();
        let entropy: f64 = probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.ln())
            .sum();

        // d/dlogit of the actor term is advantage * (pi - onehot); the
        // entropy bonus adds entropy_coef * pi * (ln pi + H). Masked
        // entries never enter the softmax, so their gradient is zero.
        let n = probs.len();
        let mut d_logits = DVector::zeros(n);
        for i in 0..n {
            if !state.mask[i] {
                continue;
            }
            let onehot = if i == action { 1.0 } else { 0.0 };
            let mut g = advantage * (probs[i] - onehot);
            if probs[i] > 0.0 {
                g += entropy_coef * probs[i] * (probs[i].ln() + entropy);
            }
            d_logits[i] = g;
        }
        let d_value = 2.0 * critic_coef * (eval.value - ret);

        let emb = &eval.trace.output;
        let h = emb.ncols();
        let mut d_emb = DMatrix::zeros(n, h);
        let mut d_actor_w = DVector::zeros(h);
        let mut d_actor_b = 0.0;
        for i in 0..n {
            let gi = d_logits[i];
            if gi != 0.0 {
                for c in 0..h {
                    d_emb[(i, c)] += gi * self.actor_w[c];
                    d_actor_w[c] += gi * emb[(i, c)];
                }
                d_actor_b += gi;
            }
        }
        let pooled = emb.row_mean().transpose();
        let d_critic_w = d_value * &pooled;
        let d_critic_b = d_value;
        let per_row = d_value / n as f64;
        for i in 0..n {
            for c in 0..h {
                d_emb[(i, c)] += per_row * self.critic_w[c];
            }
        }

        let gcn_grads: GcnGradients = self.gcn.backward(laplacian, &eval.trace, &d_emb);
        let mut out: Vec<Vec<f64>> = Vec::new();
        for g in &gcn_grads.layers {
            out.push(g.coeffs.clone());
            out.push(g.w.as_slice().to_vec());
            out.push(g.b.as_slice().to_vec());
        }
        out.push(d_actor_w.as_slice().to_vec());
        out.push(vec![d_actor_b]);
        out.push(d_critic_w.as_slice().to_vec());
        out.push(vec![d_critic_b]);
        (out, log_p, entropy, eval.value)
    }

    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = self.gcn.tensor_names();
        names.extend(["actor.w", "actor.b", "critic.w", "critic.b"].map(String::from));
        names
    }

    pub fn tensor_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = self.gcn.tensor_shapes();
        let h = self.hidden_width();
        shapes.extend([(h, 1), (1, 1), (h, 1), (1, 1)]);
        shapes
    }

    pub fn tensor_data(&self) -> Vec<Vec<f64>> {
        let mut data = self.gcn.tensor_data();
        data.push(self.actor_w.as_slice().to_vec());
        data.push(vec![self.actor_b]);
        data.push(self.critic_w.as_slice().to_vec());
        data.push(vec![self.critic_b]);
        data
    }

    pub fn load_tensor_data(&mut self, data: &[Vec<f64>]) {
        let n_gcn = self.gcn.tensor_names().len();
        assert_eq!(data.len(), n_gcn + 4, "one entry per tensor");
        self.gcn.load_tensor_data(&data[..n_gcn]);
        self.actor_w.as_mut_slice().copy_from_slice(&data[n_gcn]);
        self.actor_b = data[n_gcn + 1][0];
        self.critic_w.as_mut_slice().copy_from_slice(&data[n_gcn + 2]);
        self.critic_b = data[n_gcn + 3][0];
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        let tensors: Vec<(String, (usize, usize), Vec<f64>)> = self
            .tensor_names()
            .into_iter()
            .zip(self.tensor_shapes())
            .zip(self.tensor_data())
            .map(|((name, shape), data)| (name, shape, data))
            .collect();
        save_checkpoint(path, &tensors)
    }

    /// Rebuilds a model from a checkpoint, recovering the architecture
    /// from the stored tensor shapes.
    pub fn load(path: &Path) -> io::Result<Self> {
        let tensors = load_checkpoint(path)?;
        let bad = |msg: &str| io::Error::new(io::ErrorKind::InvalidData, msg.to_string());
        if tensors.len() < 7 || (tensors.len() - 4) % 3 != 0 {
            return Err(bad("unexpected tensor count for a policy model"));
        }
        let n_layers = (tensors.len() - 4) / 3;
        let mut layers = Vec::with_capacity(n_layers);
        for i in 0..n_layers {
            let (ref cname, _, ref coeffs) = tensors[3 * i];
            let (ref wname, (rows, cols), ref w) = tensors[3 * i + 1];
            let (ref bname, _, ref b) = tensors[3 * i + 2];
            if cname != &format!("layer{i}.coeffs")
                || wname != &format!("layer{i}.w")
                || bname != &format!("layer{i}.b")
            {
                return Err(bad("tensor names do not form a policy model"));
            }
            layers.push(GcnLayer {
                coeffs: coeffs.clone(),
                w: DMatrix::from_column_slice(rows, cols, w),
                b: DVector::from_column_slice(b),
            });
        }
        let tail: Vec<&str> = tensors[3 * n_layers..].iter().map(|t| t.0.as_str()).collect();
        if tail != ["actor.w", "actor.b", "critic.w", "critic.b"] {
            return Err(bad("tensor names do not form a policy model"));
        }
        let actor_w = DVector::from_column_slice(&tensors[3 * n_layers].2);
        let actor_b = tensors[3 * n_layers + 1].2[0];
        let critic_w = DVector::from_column_slice(&tensors[3 * n_layers + 2].2);
        let critic_b = tensors[3 * n_layers + 3].2[0];
        let model = Self {
            gcn: GcnNetwork { layers },
            actor_w,
            actor_b,
            critic_w,
            critic_b,
        };
        if model.gcn.input_channels() != STATE_FEATURES
            || model.actor_w.len() != model.hidden_width()
            || model.critic_w.len() != model.hidden_width()
        {
            return Err(bad("tensor shapes do not form a policy model"));
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectMode {
    Greedy,
    Sample,
}

/// No physical node can take the current virtual node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoFeasibleAction;

/// Picks a host. Greedy takes the highest-probability feasible node with
/// ties broken toward the lowest id; sampling draws from the masked
/// renormalized distribution.
pub fn select_action(
    model: &PolicyModel,
    laplacian: &DMatrix<f64>,
    state: &StateEncoding,
    mode: SelectMode,
    rng: &mut ChaCha8Rng,
) -> Result<NodeId, NoFeasibleAction> {
    if !state.mask.iter().any(|&m| m) {
        return Err(NoFeasibleAction);
    }
    let eval = model.forward(laplacian, &state.features);
    let probs = masked_softmax(&eval.logits, &state.mask);
    match mode {
        SelectMode::Greedy => {
            let mut best = None;
            for (i, &p) in probs.iter().enumerate() {
                if state.mask[i] && best.is_none_or(|(_, bp)| p > bp) {
                    best = Some((i, p));
                }
            }
            Ok(best.unwrap().0)
        }
        SelectMode::Sample => {
            let draw: f64 = rng.random();
            let mut acc = 0.0;
            let mut last = None;
            for (i, &p) in probs.iter().enumerate() {
                if state.mask[i] {
                    acc += p;
                    last = Some(i);
                    if draw < acc {
                        return Ok(i);
                    }
                }
            }
            // Rounding can leave acc slightly below 1; fall back to the
            // last feasible node.
            Ok(last.unwrap())
        }
    }
}

/// Terminal reward for one finished request: its revenue scaled by its own
/// revenue-to-cost ratio when accepted, zero when rejected. Intermediate
/// placement steps earn zero.
pub fn step_reward(vn: &VirtualNetwork, emb: Option<&crate::embedding::Embedding>) -> f64 {
    match emb {
        None => 0.0,
        Some(e) => {
            let r = revenue(vn) as f64;
            let c = cost(vn, e).expect("accepted embedding maps every link") as f64;
            r * (r / c)
        }
    }
}

/// Runs the policy over the request's virtual nodes (largest demand first,
/// same order as the baseline placers) against a static view of the
/// substrate, returning the complete node map.
pub fn plan_placement(
    model: &PolicyModel,
    laplacian: &DMatrix<f64>,
    net: &SubstrateNetwork,
    vn: &VirtualNetwork,
    mode: SelectMode,
    rng: &mut ChaCha8Rng,
) -> Result<BTreeMap<NodeId, NodeId>, PlaceError> {
    let mut placed = BTreeMap::new();
    for (v, _) in by_demand_desc(vn) {
        let state = encode_state(net, vn, &placed, v);
        let host = select_action(model, laplacian, &state, mode, rng)
            .map_err(|NoFeasibleAction| PlaceError::NoNodeCandidate)?;
        placed.insert(v, host);
    }
    Ok(placed)
}

/// Node placer backed by a trained policy, greedy by default.
pub struct RlPlacer {
    pub model: PolicyModel,
    pub mode: SelectMode,
    rng: ChaCha8Rng,
}

impl RlPlacer {
    pub fn new(model: PolicyModel, mode: SelectMode, seed: u64) -> Self {
        Self { model, mode, rng: stream_rng(seed, crate::workload::STREAM_PLACER) }
    }
}

impl NodePlacer for RlPlacer {
    fn name(&self) -> &str {
        "gcn-actor-critic"
    }

    fn place(
        &mut self,
        net: &SubstrateNetwork,
        vn: &VirtualNetwork,
    ) -> Result<BTreeMap<NodeId, NodeId>, PlaceError> {
        let laplacian = normalized_laplacian(net);
        plan_placement(&self.model, &laplacian, net, vn, self.mode, &mut self.rng)
    }
}

/// Hands a precomputed node map to the embedding pipeline.
struct FixedMapPlacer(BTreeMap<NodeId, NodeId>);

impl NodePlacer for FixedMapPlacer {
    fn name(&self) -> &str {
        "fixed-map"
    }

    fn place(
        &mut self,
        _net: &SubstrateNetwork,
        _vn: &VirtualNetwork,
    ) -> Result<BTreeMap<NodeId, NodeId>, PlaceError> {
        Ok(self.0.clone())
    }
}

/// Training environment: a substrate plus a request stream replayed in
/// arrival order with departures applied between arrivals. Mid-lifetime
/// mutation events are ignored here; the evaluation pipeline handles them.
/// When the stream runs out the environment rewinds to a fresh substrate
/// and replays the same stream.
pub struct TrainEnv {
    pub net: SubstrateNetwork,
    pub laplacian: DMatrix<f64>,
    pub active: ActiveEmbeddings,
    pub vns: BTreeMap<usize, VirtualNetwork>,
    base_net: SubstrateNetwork,
    stream: Vec<VirtualRequest>,
    pos: usize,
    departures: Vec<(Time, usize)>,
    k_paths: usize,
}

impl TrainEnv {
    pub fn new(cfg: &WorkloadConfig, k_paths: usize) -> Result<Self, WorkloadError> {
        let net = generate_substrate(cfg)?;
        let stream = generate_vnr_stream(cfg)?;
        Ok(Self::from_parts(net, stream, k_paths))
    }

    pub fn from_parts(
        net: SubstrateNetwork,
        stream: Vec<VirtualRequest>,
        k_paths: usize,
    ) -> Self {
        let laplacian = normalized_laplacian(&net);
        Self {
            base_net: net.clone(),
            net,
            laplacian,
            active: ActiveEmbeddings::new(),
            vns: BTreeMap::new(),
            stream,
            pos: 0,
            departures: Vec::new(),
            k_paths,
        }
    }

    pub fn k_paths(&self) -> usize {
        self.k_paths
    }

    /// Rewinds to the start of the stream on a fresh substrate.
    pub fn rewind(&mut self) {
        self.net = self.base_net.clone();
        self.active = ActiveEmbeddings::new();
        self.vns.clear();
        self.departures.clear();
        self.pos = 0;
    }

    /// Advances to the next arrival, evicting departures due at or before
    /// it (departures beat arrivals on time ties). Returns the stream
    /// index, or rewinds and retries when the stream is exhausted.
    pub fn next_arrival(&mut self) -> Option<usize> {
        if self.pos == self.stream.len() {
            if self.stream.is_empty() {
                return None;
            }
            self.rewind();
        }
        let idx = self.pos;
        self.pos += 1;
        let now = self.stream[idx].arrival;
        let mut due: Vec<(Time, usize)> = Vec::new();
        self.departures.retain(|&(t, id)| {
            if t <= now {
                due.push((t, id));
                false
            } else {
                true
            }
        });
        due.sort_unstable();
        for (_, id) in due {
            evict(&mut self.net, &mut self.active, id).expect("departure list tracks active ids");
            self.vns.remove(&id);
        }
        Some(idx)
    }

    pub fn request(&self, idx: usize) -> &VirtualRequest {
        &self.stream[idx]
    }

    /// Applies a planned node map through the full admission pipeline and
    /// registers the departure on success. Returns the terminal reward and
    /// whether the request was accepted.
    pub fn admit(&mut self, idx: usize, map: BTreeMap<NodeId, NodeId>) -> (f64, bool) {
        let req = self.stream[idx].clone();
        let outcome = embed(
            &mut self.net,
            &mut self.active,
            req.id,
            &req.vn,
            &mut FixedMapPlacer(map),
            self.k_paths,
        );
        if outcome.accepted {
            let emb = self.active.get(req.id).unwrap();
            let r = step_reward(&req.vn, Some(emb));
            self.vns.insert(req.id, req.vn.clone());
            self.departures.push((req.arrival + req.lifetime, req.id));
            (r, true)
        } else {
            (0.0, false)
        }
    }
}

/// Shared parameter store: one mutex per tensor, so delta application is
/// atomic per tensor and never torn, while distinct tensors update freely
/// in parallel.
pub struct SharedParams {
    tensors: Vec<Mutex<Vec<f64>>>,
}

impl SharedParams {
    pub fn from_model(model: &PolicyModel) -> Self {
        Self { tensors: model.tensor_data().into_iter().map(Mutex::new).collect() }
    }

    pub fn snapshot(&self) -> Vec<Vec<f64>> {
        self.tensors.iter().map(|t| t.lock().unwrap().clone()).collect()
    }

    /// Adds each delta to its tensor under that tensor's lock.
    pub fn apply(&self, deltas: &[Vec<f64>]) {
        assert_eq!(deltas.len(), self.tensors.len());
        for (tensor, delta) in self.tensors.iter().zip(deltas) {
            let mut guard = tensor.lock().unwrap();
            assert_eq!(guard.len(), delta.len());
            for (v, d) in guard.iter_mut().zip(delta) {
                *v += d;
            }
        }
    }
}

/// Per-worker adaptive step-size state (root-mean-square gradient
/// normalization); the shared store receives the already-scaled deltas.
struct RmsProp {
    mean_sq: Vec<Vec<f64>>,
    lr: f64,
    decay: f64,
    eps: f64,
}

impl RmsProp {
    fn new(shapes: &[Vec<f64>], lr: f64) -> Self {
        Self {
            mean_sq: shapes.iter().map(|t| vec![0.0; t.len()]).collect(),
            lr,
            decay: 0.99,
            eps: 1e-8,
        }
    }

    /// Turns raw gradients into descent deltas in place.
    fn deltas(&mut self, grads: &mut [Vec<f64>]) {
        for (g, ms) in grads.iter_mut().zip(&mut self.mean_sq) {
            for (gi, m) in g.iter_mut().zip(ms.iter_mut()) {
                *m = self.decay * *m + (1.0 - self.decay) * *gi * *gi;
                *gi = -self.lr * *gi / (m.sqrt() + self.eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub workers: usize,
    pub epochs: usize,
    /// Requests processed per worker per epoch.
    pub episodes_per_epoch: usize,
    /// Consecutive requests batched into one gradient segment.
    pub segment_vnrs: usize,
    pub lr: f64,
    pub entropy_coef: f64,
    pub critic_coef: f64,
    /// Discount applied across request boundaries; within one request the
    /// discount is 1 (placements share the terminal reward).
    pub cross_discount: f64,
    pub hidden: Vec<usize>,
    pub filter_order: usize,
    pub k_paths: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            workers: 1,
            epochs: 20,
            episodes_per_epoch: 50,
            segment_vnrs: 8,
            lr: 1e-3,
            entropy_coef: 0.01,
            critic_coef: 0.5,
            cross_discount: 0.95,
            hidden: vec![16, 16],
            filter_order: 2,
            k_paths: 1,
            seed: 1,
        }
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub episodes: usize,
    pub mean_reward: f64,
    pub acceptance_rate: f64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
}

pub fn epoch_log_csv(rows: &[EpochLog]) -> String {
    let mut out = String::from("epoch,episodes,mean_reward,acceptance_rate,actor_loss,critic_loss,entropy\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            r.epoch, r.episodes, r.mean_reward, r.acceptance_rate, r.actor_loss, r.critic_loss,
            r.entropy
        ));
    }
    out
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
}

struct EpisodeStat {
    epoch: usize,
    reward: f64,
    accepted: bool,
    actor_loss: f64,
    critic_loss: f64,
    entropy: f64,
    steps: usize,
}

/// One placement decision recorded during a rollout.
struct StepRecord {
    state: StateEncoding,
    action: NodeId,
}

/// Asynchronous advantage actor-critic training. Each worker owns a
/// private environment (worker i shifts the workload seed by i) and a
/// model replica refreshed from the shared store after every segment.
/// With one worker the whole run is deterministic for a fixed seed.
pub fn train_a3c(
    workload: &WorkloadConfig,
    cfg: &TrainConfig,
    init: PolicyModel,
) -> Result<(PolicyModel, Vec<EpochLog>), TrainError> {
    assert!(cfg.workers >= 1, "at least one worker");
    assert!(cfg.segment_vnrs >= 1, "segments hold at least one request");
    workload.validate()?;
    // Fail on an unbuildable workload before spawning anything.
    for w in 0..cfg.workers {
        let mut wl = workload.clone();
        wl.rng_seed = workload.rng_seed.wrapping_add(w as u64);
        TrainEnv::new(&wl, cfg.k_paths)?;
    }

    let shared = SharedParams::from_model(&init);
    let abort = AtomicBool::new(false);
    let diverged: Mutex<Option<String>> = Mutex::new(None);
    let (tx, rx) = mpsc::channel::<EpisodeStat>();

    let logs = std::thread::scope(|scope| {
        for w in 0..cfg.workers {
            let tx = tx.clone();
            let shared = &shared;
            let abort = &abort;
            let diverged = &diverged;
            let init = &init;
            let mut wl = workload.clone();
            wl.rng_seed = workload.rng_seed.wrapping_add(w as u64);
            scope.spawn(move || {
                let mut env = TrainEnv::new(&wl, cfg.k_paths).expect("validated above");
                let mut rng =
                    stream_rng(cfg.seed.wrapping_add((w as u64) << 32), STREAM_TRAIN);
                let mut replica = init.clone();
                replica.load_tensor_data(&shared.snapshot());
                let mut opt = RmsProp::new(&replica.tensor_data(), cfg.lr);
                for epoch in 0..cfg.epochs {
                    let mut done = 0;
                    while done < cfg.episodes_per_epoch {
                        if abort.load(Ordering::Relaxed) {
                            return;
                        }
                        let take = cfg.segment_vnrs.min(cfg.episodes_per_epoch - done);
                        let stats = run_segment(
                            &mut env, &mut replica, &mut opt, shared, cfg, &mut rng, epoch, take,
                        );
                        match stats {
                            Ok(stats) => {
                                if stats.is_empty() {
                                    return;
                                }
                                done += stats.len();
                                for s in stats {
                                    let _ = tx.send(s);
                                }
                            }
                            Err(msg) => {
                                abort.store(true, Ordering::Relaxed);
                                *diverged.lock().unwrap() = Some(msg);
                                return;
                            }
                        }
                    }
                }
            });
        }
        drop(tx);

        // Aggregate worker episodes into per-epoch rows.
        let mut buckets: BTreeMap<usize, Vec<EpisodeStat>> = BTreeMap::new();
        for stat in rx {
            buckets.entry(stat.epoch).or_default().push(stat);
        }
        buckets
            .into_iter()
            .map(|(epoch, stats)| {
                let n = stats.len();
                let steps: usize = stats.iter().map(|s| s.steps).sum::<usize>().max(1);
                EpochLog {
                    epoch,
                    episodes: n,
                    mean_reward: stats.iter().map(|s| s.reward).sum::<f64>() / n as f64,
                    acceptance_rate: stats.iter().filter(|s| s.accepted).count() as f64
                        / n as f64,
                    actor_loss: stats.iter().map(|s| s.actor_loss).sum::<f64>() / steps as f64,
                    critic_loss: stats.iter().map(|s| s.critic_loss).sum::<f64>()
                        / steps as f64,
                    entropy: stats.iter().map(|s| s.entropy).sum::<f64>() / steps as f64,
                }
            })
            .collect::<Vec<EpochLog>>()
    });

    if let Some(msg) = diverged.lock().unwrap().take() {
        return Err(TrainError::Diverged(msg));
    }
    let mut model = init;
    model.load_tensor_data(&shared.snapshot());
    Ok((model, logs))
}

/// Plays `take` consecutive requests, computes one batched gradient with
/// returns discounted across request boundaries, applies it to the shared
/// store, and refreshes the replica.
#[allow(clippy::too_many_arguments)]
fn run_segment(
    env: &mut TrainEnv,
    replica: &mut PolicyModel,
    opt: &mut RmsProp,
    shared: &SharedParams,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    epoch: usize,
    take: usize,
) -> Result<Vec<EpisodeStat>, String> {
    struct Episode {
        steps: Vec<StepRecord>,
        reward: f64,
        accepted: bool,
    }
    let mut episodes: Vec<Episode> = Vec::with_capacity(take);
    for _ in 0..take {
        let Some(idx) = env.next_arrival() else { break };
        let req = env.request(idx);
        let vn = req.vn.clone();
        let mut placed: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        let mut steps = Vec::new();
        let mut dead_end = false;
        for (v, _) in by_demand_desc(&vn) {
            let state = encode_state(&env.net, &vn, &placed, v);
            match select_action(replica, &env.laplacian, &state, SelectMode::Sample, rng) {
                Ok(host) => {
                    placed.insert(v, host);
                    steps.push(StepRecord { state, action: host });
                }
                Err(NoFeasibleAction) => {
                    dead_end = true;
                    break;
                }
            }
        }
        let (reward, accepted) =
            if dead_end { (0.0, false) } else { env.admit(idx, placed) };
        episodes.push(Episode { steps, reward, accepted });
    }
    if episodes.is_empty() {
        return Ok(Vec::new());
    }

    // Returns flow backward across the segment: every placement step of a
    // request shares that request's return, which is its own reward plus
    // the discounted return of the next request.
    let mut returns = vec![0.0; episodes.len()];
    let mut acc = 0.0;
    for (i, ep) in episodes.iter().enumerate().rev() {
        acc = ep.reward + cfg.cross_discount * acc;
        returns[i] = acc;
    }

    let mut grads: Option<Vec<Vec<f64>>> = None;
    let mut stats = Vec::with_capacity(episodes.len());
    let mut total_steps = 0usize;
    for (ep, &ret) in episodes.iter().zip(&returns) {
        let mut stat = EpisodeStat {
            epoch,
            reward: ep.reward,
            accepted: ep.accepted,
            actor_loss: 0.0,
            critic_loss: 0.0,
            entropy: 0.0,
            steps: ep.steps.len(),
        };
        for step in &ep.steps {
            let value = replica.forward(&env.laplacian, &step.state.features).value;
            let advantage = ret - value;
            let (g, log_p, entropy, v) = replica.backward_step(
                &env.laplacian,
                &step.state,
                step.action,
                advantage,
                ret,
                cfg.entropy_coef,
                cfg.critic_coef,
            );
            stat.actor_loss += -advantage * log_p;
            stat.critic_loss += (ret - v) * (ret - v);
            stat.entropy += entropy;
            if !stat.actor_loss.is_finite() || !stat.critic_loss.is_finite() {
                return Err(format!("non-finite loss at epoch {epoch}"));
            }
            match &mut grads {
                None => grads = Some(g),
                Some(acc) => {
                    for (a, b) in acc.iter_mut().zip(&g) {
                        for (x, y) in a.iter_mut().zip(b) {
                            *x += y;
                        }
                    }
                }
            }
            total_steps += 1;
        }
        stats.push(stat);
    }
    if let Some(mut grads) = grads {
        let scale = (total_steps as f64).recip();
        for t in &mut grads {
            for x in t.iter_mut() {
                *x *= scale;
                if !x.is_finite() {
                    return Err(format!("non-finite gradient at epoch {epoch}"));
                }
            }
        }
        opt.deltas(&mut grads);
        shared.apply(&grads);
        replica.load_tensor_data(&shared.snapshot());
    }
    Ok(stats)
}
