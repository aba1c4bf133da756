//! Seeded generation of substrates, request streams, and mutation events.
//!
//! A workload is fully determined by a [`WorkloadConfig`] and its seed: the
//! substrate topology, every request's shape, demands, arrival, lifetime,
//! and its mid-lifetime mutation events. Generation draws from fixed RNG
//! substreams so substrate and stream can be regenerated independently.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use thiserror::Error;

use crate::substrate::{
    content_lines, parse_field, LinkId, NetError, NodeId, SubstrateNetwork, Time, Units,
    VirtualNetwork,
};

/// RNG substream for substrate generation.
pub const STREAM_SUBSTRATE: u64 = 1;
/// RNG substream for the request stream.
pub const STREAM_VNRS: u64 = 2;
/// RNG substream reserved for placement policies (random/sampling placers).
pub const STREAM_PLACER: u64 = 3;
/// RNG substream reserved for training workers.
pub const STREAM_TRAIN: u64 = 4;

/// Seeded generator positioned on one of the named substreams.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WorkloadError {
    /// Requested link count cannot form a connected simple graph.
    #[error("infeasible topology: {0}")]
    InfeasibleTopology(String),
    /// A mutation event does not apply cleanly to the current VN.
    #[error("invalid mutation: {0}")]
    InvalidMutation(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// One mid-lifetime change to a virtual network. Structural kinds rewire the
/// topology; resize kinds change a demand in place.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MutationKind {
    /// New node plus the links attaching it to existing nodes.
    AddNode {
        node: NodeId,
        cpu_demand: Units,
        links: Vec<AttachedLink>,
    },
    /// Removes the node and every incident link.
    RemoveNode { node: NodeId },
    AddLink {
        link: LinkId,
        endpoints: (NodeId, NodeId),
        bw_demand: Units,
    },
    RemoveLink { link: LinkId },
    ResizeNodeCpu { node: NodeId, new_demand: Units },
    ResizeLinkBw { link: LinkId, new_demand: Units },
}

/// A link carried by an [`MutationKind::AddNode`] event: it joins the new
/// node to `other`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttachedLink {
    pub link: LinkId,
    pub other: NodeId,
    pub bw_demand: Units,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MutationEvent {
    pub at: Time,
    pub kind: MutationKind,
}

/// One virtual network request: the topology at arrival, its window in time,
/// and the mutation events that fire while it is embedded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VirtualRequest {
    pub id: usize,
    pub vn: VirtualNetwork,
    pub arrival: Time,
    /// Departure fires at `arrival + lifetime`; always at least 1.
    pub lifetime: Time,
    /// Time-ordered; every `at` lies in `[arrival, arrival + lifetime)`.
    pub events: Vec<MutationEvent>,
}

impl VirtualRequest {
    /// Checks the structural invariants, including that the full event list
    /// applies cleanly in order.
    pub fn validate(&self) -> Result<(), WorkloadError> {
        if self.lifetime == 0 {
            return Err(WorkloadError::InvalidConfig(format!("request {} has zero lifetime", self.id)));
        }
        self.vn
            .validate()
            .map_err(|e| WorkloadError::InvalidMutation(format!("request {}: {e}", self.id)))?;
        let mut at = self.arrival;
        let mut vn = self.vn.clone();
        for e in &self.events {
            if e.at < at || e.at >= self.arrival + self.lifetime {
                return Err(WorkloadError::InvalidMutation(format!(
                    "request {}: event at {} outside [{}, {})",
                    self.id,
                    e.at,
                    self.arrival,
                    self.arrival + self.lifetime
                )));
            }
            at = e.at;
            vn = apply_mutation(&vn, e)?;
        }
        Ok(())
    }
}

/// Generation parameters. All ranges are inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadConfig {
    pub n_substrate_nodes: usize,
    pub n_substrate_links: usize,
    pub cpu_capacity_range: (Units, Units),
    pub bw_capacity_range: (Units, Units),
    pub n_vnrs: usize,
    pub vnodes_range: (usize, usize),
    /// Probability that each virtual node pair is directly linked.
    pub edge_prob: f64,
    pub cpu_demand_range: (Units, Units),
    pub bw_demand_range: (Units, Units),
    pub arrivals_per_100_time_units: f64,
    pub mean_lifetime: f64,
    /// Expected mutation events per request (Poisson).
    pub mutation_rate: f64,
    pub rng_seed: u64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self {
            n_substrate_nodes: 100,
            n_substrate_links: 600,
            cpu_capacity_range: (50, 100),
            bw_capacity_range: (50, 100),
            n_vnrs: 1000,
            vnodes_range: (2, 12),
            edge_prob: 0.5,
            cpu_demand_range: (1, 50),
            bw_demand_range: (1, 50),
            arrivals_per_100_time_units: 5.0,
            mean_lifetime: 500.0,
            mutation_rate: 0.2,
            rng_seed: 1,
        }
    }
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |msg: String| Err(WorkloadError::InvalidConfig(msg));
        if self.n_substrate_nodes == 0 {
            return bad("n_substrate_nodes must be at least 1".into());
        }
        if self.cpu_capacity_range.0 > self.cpu_capacity_range.1 {
            return bad("cpu_capacity_range is empty".into());
        }
        if self.bw_capacity_range.0 > self.bw_capacity_range.1 {
            return bad("bw_capacity_range is empty".into());
        }
        if self.vnodes_range.0 < 2 || self.vnodes_range.0 > self.vnodes_range.1 {
            return bad("vnodes_range must be non-empty with lower bound at least 2".into());
        }
        if self.cpu_demand_range.0 < 1 || self.cpu_demand_range.0 > self.cpu_demand_range.1 {
            return bad("cpu_demand_range must be non-empty and positive".into());
        }
        if self.bw_demand_range.0 < 1 || self.bw_demand_range.0 > self.bw_demand_range.1 {
            return bad("bw_demand_range must be non-empty and positive".into());
        }
        if !(0.0..=1.0).contains(&self.edge_prob) {
            return bad(format!("edge_prob {} outside [0, 1]", self.edge_prob));
        }
        if !(self.arrivals_per_100_time_units > 0.0) {
            return bad("arrivals_per_100_time_units must be positive".into());
        }
        if !(self.mean_lifetime > 0.0) {
            return bad("mean_lifetime must be positive".into());
        }
        if !(self.mutation_rate >= 0.0) {
            return bad("mutation_rate must be non-negative".into());
        }
        Ok(())
    }

    /// Parses the flat `key = value` config format. Missing keys keep their
    /// defaults; unknown keys are errors.
    pub fn parse_text(text: &str) -> Result<Self, WorkloadError> {
        let mut cfg = Self::default();
        for (line, content) in content_lines(text) {
            let (key, value) = content.split_once('=').ok_or_else(|| WorkloadError::Parse {
                line,
                msg: format!("expected key = value, got: {content}"),
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| WorkloadError::Parse { line, msg: format!("bad {what}: {value}") };
            match key {
                "n_substrate_nodes" => cfg.n_substrate_nodes = value.parse().map_err(|_| bad(key))?,
                "n_substrate_links" => cfg.n_substrate_links = value.parse().map_err(|_| bad(key))?,
                "cpu_capacity_range" => cfg.cpu_capacity_range = parse_range(value).ok_or_else(|| bad(key))?,
                "bw_capacity_range" => cfg.bw_capacity_range = parse_range(value).ok_or_else(|| bad(key))?,
                "n_vnrs" => cfg.n_vnrs = value.parse().map_err(|_| bad(key))?,
                "vnodes_range" => {
                    let (lo, hi) = parse_range(value).ok_or_else(|| bad(key))?;
                    cfg.vnodes_range = (lo as usize, hi as usize);
                }
                "edge_prob" => cfg.edge_prob = value.parse().map_err(|_| bad(key))?,
                "cpu_demand_range" => cfg.cpu_demand_range = parse_range(value).ok_or_else(|| bad(key))?,
                "bw_demand_range" => cfg.bw_demand_range = parse_range(value).ok_or_else(|| bad(key))?,
                "arrivals_per_100_time_units" => {
                    cfg.arrivals_per_100_time_units = value.parse().map_err(|_| bad(key))?
                }
                "mean_lifetime" => cfg.mean_lifetime = value.parse().map_err(|_| bad(key))?,
                "mutation_rate" => cfg.mutation_rate = value.parse().map_err(|_| bad(key))?,
                "rng_seed" => cfg.rng_seed = value.parse().map_err(|_| bad(key))?,
                _ => {
                    return Err(WorkloadError::Parse { line, msg: format!("unknown config key: {key}") });
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn write_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "n_substrate_nodes = {}", self.n_substrate_nodes);
        let _ = writeln!(out, "n_substrate_links = {}", self.n_substrate_links);
        let _ = writeln!(out, "cpu_capacity_range = {}..{}", self.cpu_capacity_range.0, self.cpu_capacity_range.1);
        let _ = writeln!(out, "bw_capacity_range = {}..{}", self.bw_capacity_range.0, self.bw_capacity_range.1);
        let _ = writeln!(out, "n_vnrs = {}", self.n_vnrs);
        let _ = writeln!(out, "vnodes_range = {}..{}", self.vnodes_range.0, self.vnodes_range.1);
        let _ = writeln!(out, "edge_prob = {}", self.edge_prob);
        let _ = writeln!(out, "cpu_demand_range = {}..{}", self.cpu_demand_range.0, self.cpu_demand_range.1);
        let _ = writeln!(out, "bw_demand_range = {}..{}", self.bw_demand_range.0, self.bw_demand_range.1);
        let _ = writeln!(out, "arrivals_per_100_time_units = {}", self.arrivals_per_100_time_units);
        let _ = writeln!(out, "mean_lifetime = {}", self.mean_lifetime);
        let _ = writeln!(out, "mutation_rate = {}", self.mutation_rate);
        let _ = writeln!(out, "rng_seed = {}", self.rng_seed);
        out
    }
}

/// Parses an inclusive `lo..hi` range.
fn parse_range(text: &str) -> Option<(Units, Units)> {
    let (lo, hi) = text.split_once("..")?;
    Some((lo.trim().parse().ok()?, hi.trim().parse().ok()?))
}

fn draw_units(rng: &mut ChaCha8Rng, range: (Units, Units)) -> Units {
    rng.random_range(range.0..=range.1)
}

/// Generates a connected substrate with exactly the configured node and link
/// counts: a uniform random spanning tree first, then uniformly chosen extra
/// edges. Capacities are drawn after the topology, in id order.
pub fn generate_substrate(cfg: &WorkloadConfig) -> Result<SubstrateNetwork, WorkloadError> {
    cfg.validate()?;
    let n = cfg.n_substrate_nodes;
    let m = cfg.n_substrate_links;
    let max_links = n * n.saturating_sub(1) / 2;
    if (n > 1 && m < n - 1) || m > max_links {
        return Err(WorkloadError::InfeasibleTopology(format!(
            "{m} links for {n} nodes (need {}..={max_links})",
            n.saturating_sub(1)
        )));
    }
    let mut rng = stream_rng(cfg.rng_seed, STREAM_SUBSTRATE);

    let mut order: Vec<NodeId> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut edges: Vec<(NodeId, NodeId)> = Vec::with_capacity(m);
    let mut taken: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
    for i in 1..n {
        let j = rng.random_range(0..i);
        let (u, v) = (order[i], order[j]);
        let pair = (u.min(v), u.max(v));
        edges.push(pair);
        taken.insert(pair);
    }
    let mut spare: Vec<(NodeId, NodeId)> = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if !taken.contains(&(u, v)) {
                spare.push((u, v));
            }
        }
    }
    spare.shuffle(&mut rng);
    edges.extend(spare.into_iter().take(m - edges.len()));

    let mut net = SubstrateNetwork::new();
    for _ in 0..n {
        net.add_node(draw_units(&mut rng, cfg.cpu_capacity_range));
    }
    for (u, v) in edges {
        let bw = draw_units(&mut rng, cfg.bw_capacity_range);
        net.add_link(u, v, bw).expect("generated edges are simple and distinct");
    }
    debug_assert!(net.is_connected());
    Ok(net)
}

/// Generates the full request stream: Poisson arrivals, exponential
/// lifetimes, per-request random topologies, and pre-drawn mutation events.
pub fn generate_vnr_stream(cfg: &WorkloadConfig) -> Result<Vec<VirtualRequest>, WorkloadError> {
    cfg.validate()?;
    let mut rng = stream_rng(cfg.rng_seed, STREAM_VNRS);
    let inter_arrival = Exp::new(cfg.arrivals_per_100_time_units / 100.0)
        .expect("validated positive rate");
    let lifetime_dist = Exp::new(1.0 / cfg.mean_lifetime).expect("validated positive mean");

    let mut requests = Vec::with_capacity(cfg.n_vnrs);
    let mut clock = 0.0_f64;
    for id in 0..cfg.n_vnrs {
        clock += inter_arrival.sample(&mut rng);
        let arrival = clock.floor() as Time;
        let lifetime = (lifetime_dist.sample(&mut rng).floor() as Time).max(1);
        let vn = generate_virtual_network(cfg, &mut rng);
        let events = generate_events(cfg, &mut rng, &vn, arrival, lifetime);
        let req = VirtualRequest { id, vn, arrival, lifetime, events };
        debug_assert!(req.validate().is_ok());
        requests.push(req);
    }
    Ok(requests)
}

fn generate_virtual_network(cfg: &WorkloadConfig, rng: &mut ChaCha8Rng) -> VirtualNetwork {
    let n = rng.random_range(cfg.vnodes_range.0..=cfg.vnodes_range.1);
    let mut vn = VirtualNetwork::new();
    for id in 0..n {
        let demand = draw_units(rng, cfg.cpu_demand_range);
        vn.insert_node(id, demand).expect("fresh id");
    }
    let mut next_link = 0;
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.random::<f64>() < cfg.edge_prob {
                let bw = draw_units(rng, cfg.bw_demand_range);
                vn.insert_link(next_link, u, v, bw).expect("fresh pair");
                next_link += 1;
            }
        }
    }
    // Independent pair draws can leave components; stitch them together with
    // uniformly chosen cross-component edges until connected.
    while !vn.is_connected() {
        let comp = components(&vn);
        let mut crossing: Vec<(NodeId, NodeId)> = Vec::new();
        for (ci, a) in comp.iter().enumerate() {
            for b in comp.iter().skip(ci + 1) {
                for &u in a {
                    for &v in b {
                        crossing.push((u.min(v), u.max(v)));
                    }
                }
            }
        }
        crossing.sort_unstable();
        let (u, v) = crossing[rng.random_range(0..crossing.len())];
        let bw = draw_units(rng, cfg.bw_demand_range);
        vn.insert_link(vn.next_link_id(), u, v, bw).expect("crossing pair is absent");
    }
    vn
}

fn components(vn: &VirtualNetwork) -> Vec<Vec<NodeId>> {
    let ids: Vec<NodeId> = vn.nodes().map(|n| n.id).collect();
    let mut unseen: BTreeSet<NodeId> = ids.iter().copied().collect();
    let mut out = Vec::new();
    while let Some(&start) = unseen.iter().next() {
        let mut comp = vec![start];
        unseen.remove(&start);
        let mut stack = vec![start];
        while let Some(at) = stack.pop() {
            for l in vn.incident_links(at) {
                let (u, v) = vn.link_endpoints(l).unwrap();
                let next = if u == at { v } else { u };
                if unseen.remove(&next) {
                    comp.push(next);
                    stack.push(next);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Mutation kinds in the fixed order applicability is evaluated in.
#[derive(Clone, Copy, PartialEq, Eq)]
enum KindTag {
    AddNode,
    RemoveNode,
    AddLink,
    RemoveLink,
    ResizeCpu,
    ResizeBw,
}

fn generate_events(
    cfg: &WorkloadConfig,
    rng: &mut ChaCha8Rng,
    vn: &VirtualNetwork,
    arrival: Time,
    lifetime: Time,
) -> Vec<MutationEvent> {
    if cfg.mutation_rate <= 0.0 {
        return Vec::new();
    }
    let count = Poisson::new(cfg.mutation_rate)
        .expect("validated positive rate")
        .sample(rng) as usize;
    let mut times: Vec<Time> = (0..count)
        .map(|_| arrival + rng.random_range(0..lifetime))
        .collect();
    times.sort_unstable();

    let mut scratch = vn.clone();
    let mut events = Vec::with_capacity(count);
    for at in times {
        let kind = draw_mutation(cfg, rng, &scratch);
        let e = MutationEvent { at, kind };
        scratch = apply_mutation(&scratch, &e).expect("drawn mutation applies to its own scratch state");
        events.push(e);
    }
    events
}

/// Draws one mutation valid for `vn`. Applicability is computed without
/// consuming randomness so the draw sequence stays stable.
fn draw_mutation(cfg: &WorkloadConfig, rng: &mut ChaCha8Rng, vn: &VirtualNetwork) -> MutationKind {
    let node_ids: Vec<NodeId> = vn.nodes().map(|n| n.id).collect();
    let link_ids: Vec<LinkId> = vn.links().map(|l| l.id).collect();

    let removable_nodes: Vec<NodeId> = if vn.node_count() >= 3 {
        node_ids
            .iter()
            .copied()
            .filter(|&id| {
                let mut probe = vn.clone();
                probe.remove_node(id).unwrap();
                probe.is_connected()
            })
            .collect()
    } else {
        Vec::new()
    };
    let removable_links: Vec<LinkId> = link_ids
        .iter()
        .copied()
        .filter(|&id| {
            let mut probe = vn.clone();
            probe.remove_link(id).unwrap();
            probe.is_connected()
        })
        .collect();
    let mut absent_pairs: Vec<(NodeId, NodeId)> = Vec::new();
    for (i, &u) in node_ids.iter().enumerate() {
        for &v in node_ids.iter().skip(i + 1) {
            if vn.link_between(u, v).is_none() {
                absent_pairs.push((u, v));
            }
        }
    }

    let mut applicable = vec![KindTag::AddNode, KindTag::ResizeCpu];
    if !removable_nodes.is_empty() {
        applicable.push(KindTag::RemoveNode);
    }
    if !absent_pairs.is_empty() {
        applicable.push(KindTag::AddLink);
    }
    if !removable_links.is_empty() {
        applicable.push(KindTag::RemoveLink);
    }
    if !link_ids.is_empty() {
        applicable.push(KindTag::ResizeBw);
    }

    match applicable[rng.random_range(0..applicable.len())] {
        KindTag::AddNode => {
            let node = vn.next_node_id();
            let cpu_demand = draw_units(rng, cfg.cpu_demand_range);
            let n_attach = rng.random_range(1..=node_ids.len().min(2));
            let mut targets = node_ids.clone();
            targets.shuffle(rng);
            let base = vn.next_link_id();
            let links = targets[..n_attach]
                .iter()
                .enumerate()
                .map(|(k, &other)| AttachedLink {
                    link: base + k,
                    other,
                    bw_demand: draw_units(rng, cfg.bw_demand_range),
                })
                .collect();
            MutationKind::AddNode { node, cpu_demand, links }
        }
        KindTag::RemoveNode => {
            let node = removable_nodes[rng.random_range(0..removable_nodes.len())];
            MutationKind::RemoveNode { node }
        }
        KindTag::AddLink => {
            let endpoints = absent_pairs[rng.random_range(0..absent_pairs.len())];
            MutationKind::AddLink {
                link: vn.next_link_id(),
                endpoints,
                bw_demand: draw_units(rng, cfg.bw_demand_range),
            }
        }
        KindTag::RemoveLink => {
            let link = removable_links[rng.random_range(0..removable_links.len())];
            MutationKind::RemoveLink { link }
        }
        KindTag::ResizeCpu => {
            let node = node_ids[rng.random_range(0..node_ids.len())];
            MutationKind::ResizeNodeCpu { node, new_demand: draw_units(rng, cfg.cpu_demand_range) }
        }
        KindTag::ResizeBw => {
            let link = link_ids[rng.random_range(0..link_ids.len())];
            MutationKind::ResizeLinkBw { link, new_demand: draw_units(rng, cfg.bw_demand_range) }
        }
    }
}

/// Applies one mutation, returning the mutated copy. The input is left
/// untouched; errors mean the event does not fit the current topology.
pub fn apply_mutation(vn: &VirtualNetwork, e: &MutationEvent) -> Result<VirtualNetwork, WorkloadError> {
    let bad = |e: NetError| WorkloadError::InvalidMutation(e.to_string());
    let mut out = vn.clone();
    match &e.kind {
        MutationKind::AddNode { node, cpu_demand, links } => {
            out.insert_node(*node, *cpu_demand).map_err(bad)?;
            if links.is_empty() {
                return Err(WorkloadError::InvalidMutation(
                    "added node must attach with at least one link".into(),
                ));
            }
            for l in links {
                out.insert_link(l.link, *node, l.other, l.bw_demand).map_err(bad)?;
            }
        }
        MutationKind::RemoveNode { node } => {
            out.remove_node(*node).map_err(bad)?;
        }
        MutationKind::AddLink { link, endpoints, bw_demand } => {
            out.insert_link(*link, endpoints.0, endpoints.1, *bw_demand).map_err(bad)?;
        }
        MutationKind::RemoveLink { link } => {
            out.remove_link(*link).map_err(bad)?;
        }
        MutationKind::ResizeNodeCpu { node, new_demand } => {
            out.set_node_demand(*node, *new_demand).map_err(bad)?;
        }
        MutationKind::ResizeLinkBw { link, new_demand } => {
            out.set_link_demand(*link, *new_demand).map_err(bad)?;
        }
    }
    out.validate()
        .map_err(|err| WorkloadError::InvalidMutation(err.to_string()))?;
    Ok(out)
}

/// Serializes a request stream: per request a `VNR` header, the embedded
/// network in the shared text format, then one `EVENT` line per mutation.
pub fn write_stream(requests: &[VirtualRequest]) -> String {
    let mut out = String::new();
    for r in requests {
        let _ = writeln!(out, "VNR {} ARRIVE {} LIFE {}", r.id, r.arrival, r.lifetime);
        out.push_str(&r.vn.write_text());
        for e in &r.events {
            let _ = write!(out, "EVENT {} ", e.at);
            match &e.kind {
                MutationKind::AddNode { node, cpu_demand, links } => {
                    let _ = write!(out, "ADD-NODE {node} {cpu_demand} {}", links.len());
                    for l in links {
                        let _ = write!(out, " {} {} {}", l.link, l.other, l.bw_demand);
                    }
                }
                MutationKind::RemoveNode { node } => {
                    let _ = write!(out, "REMOVE-NODE {node}");
                }
                MutationKind::AddLink { link, endpoints, bw_demand } => {
                    let _ = write!(out, "ADD-LINK {link} {} {} {bw_demand}", endpoints.0, endpoints.1);
                }
                MutationKind::RemoveLink { link } => {
                    let _ = write!(out, "REMOVE-LINK {link}");
                }
                MutationKind::ResizeNodeCpu { node, new_demand } => {
                    let _ = write!(out, "RESIZE-CPU {node} {new_demand}");
                }
                MutationKind::ResizeLinkBw { link, new_demand } => {
                    let _ = write!(out, "RESIZE-BW {link} {new_demand}");
                }
            }
            out.push('\n');
        }
    }
    out
}

/// Parses the stream format written by [`write_stream`].
pub fn parse_stream(text: &str) -> Result<Vec<VirtualRequest>, WorkloadError> {
    let lines: Vec<(usize, String)> = content_lines(text).collect();
    let perr = |line: usize, msg: String| WorkloadError::Parse { line, msg };
    let nerr = |e: NetError| match e {
        NetError::Parse { line, msg } => WorkloadError::Parse { line, msg },
        other => WorkloadError::Parse { line: 0, msg: other.to_string() },
    };
    let mut requests = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let (line_no, header) = &lines[i];
        let toks: Vec<&str> = header.split_whitespace().collect();
        let (id, arrival, lifetime) = match toks.as_slice() {
            ["VNR", id, "ARRIVE", t, "LIFE", d] => (
                parse_field::<usize>(*line_no, id, "vnr id").map_err(nerr)?,
                parse_field::<Time>(*line_no, t, "arrival").map_err(nerr)?,
                parse_field::<Time>(*line_no, d, "lifetime").map_err(nerr)?,
            ),
            _ => {
                return Err(perr(*line_no, format!("expected VNR <i> ARRIVE <t> LIFE <d>, got: {header}")));
            }
        };
        i += 1;

        // The embedded network block: header plus one line per node and link.
        let (net_line, net_header) = lines
            .get(i)
            .ok_or_else(|| perr(0, "missing network block after VNR header".into()))?;
        let htoks: Vec<&str> = net_header.split_whitespace().collect();
        let (n, m) = match htoks.as_slice() {
            ["NODES", n, "LINKS", m] => (
                parse_field::<usize>(*net_line, n, "node count").map_err(nerr)?,
                parse_field::<usize>(*net_line, m, "link count").map_err(nerr)?,
            ),
            _ => return Err(perr(*net_line, format!("expected NODES <n> LINKS <m>, got: {net_header}"))),
        };
        let end = i + 1 + n + m;
        if end > lines.len() {
            return Err(perr(*net_line, "truncated network block".into()));
        }
        let block: String = lines[i..end].iter().map(|(_, l)| format!("{l}\n")).collect();
        let vn = VirtualNetwork::parse_text(&block).map_err(nerr)?;
        i = end;

        let mut events = Vec::new();
        while i < lines.len() && lines[i].1.starts_with("EVENT ") {
            let (line_no, line) = &lines[i];
            events.push(parse_event(*line_no, line)?);
            i += 1;
        }
        requests.push(VirtualRequest { id, vn, arrival, lifetime, events });
    }
    Ok(requests)
}

fn parse_event(line: usize, text: &str) -> Result<MutationEvent, WorkloadError> {
    let nerr = |e: NetError| match e {
        NetError::Parse { line, msg } => WorkloadError::Parse { line, msg },
        other => WorkloadError::Parse { line, msg: other.to_string() },
    };
    let toks: Vec<&str> = text.split_whitespace().collect();
    let perr = || WorkloadError::Parse { line, msg: format!("malformed EVENT line: {text}") };
    if toks.len() < 3 || toks[0] != "EVENT" {
        return Err(perr());
    }
    let at: Time = parse_field(line, toks[1], "event time").map_err(nerr)?;
    let kind = match (toks[2], &toks[3..]) {
        ("ADD-NODE", rest) if rest.len() >= 3 => {
            let node = parse_field(line, rest[0], "node id").map_err(nerr)?;
            let cpu_demand = parse_field(line, rest[1], "cpu demand").map_err(nerr)?;
            let count: usize = parse_field(line, rest[2], "link count").map_err(nerr)?;
            let args = &rest[3..];
            if args.len() != count * 3 {
                return Err(perr());
            }
            let mut links = Vec::with_capacity(count);
            for chunk in args.chunks(3) {
                links.push(AttachedLink {
                    link: parse_field(line, chunk[0], "link id").map_err(nerr)?,
                    other: parse_field(line, chunk[1], "node id").map_err(nerr)?,
                    bw_demand: parse_field(line, chunk[2], "bw demand").map_err(nerr)?,
                });
            }
            MutationKind::AddNode { node, cpu_demand, links }
        }
        ("REMOVE-NODE", [node]) => MutationKind::RemoveNode {
            node: parse_field(line, node, "node id").map_err(nerr)?,
        },
        ("ADD-LINK", [link, u, v, bw]) => MutationKind::AddLink {
            link: parse_field(line, link, "link id").map_err(nerr)?,
            endpoints: (
                parse_field(line, u, "endpoint").map_err(nerr)?,
                parse_field(line, v, "endpoint").map_err(nerr)?,
            ),
            bw_demand: parse_field(line, bw, "bw demand").map_err(nerr)?,
        },
        ("REMOVE-LINK", [link]) => MutationKind::RemoveLink {
            link: parse_field(line, link, "link id").map_err(nerr)?,
        },
        ("RESIZE-CPU", [node, d]) => MutationKind::ResizeNodeCpu {
            node: parse_field(line, node, "node id").map_err(nerr)?,
            new_demand: parse_field(line, d, "cpu demand").map_err(nerr)?,
        },
        ("RESIZE-BW", [link, d]) => MutationKind::ResizeLinkBw {
            link: parse_field(line, link, "link id").map_err(nerr)?,
            new_demand: parse_field(line, d, "bw demand").map_err(nerr)?,
        },
        _ => return Err(perr()),
    };
    Ok(MutationEvent { at, kind })
}
