//! The embedding ledger: admission, link mapping, eviction, mutation deltas.
//!
//! An [`Embedding`] records where one request's virtual nodes and links
//! landed and exactly how much was allocated for each, so releases are exact
//! even after demands have been resized. All mutating operations are
//! all-or-nothing: a rejected request or mutation leaves the substrate
//! ledger and the embedding table byte-identical to before the call.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use thiserror::Error;

use crate::substrate::{LinkId, NodeId, SubstrateNetwork, Units, VirtualNetwork};
use crate::workload::{MutationEvent, MutationKind};

/// Where one virtual node lives and how much CPU it holds there.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeAssignment {
    pub host: NodeId,
    pub cpu: Units,
}

/// One physical path carrying a share of a virtual link's demand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathAssignment {
    /// Physical link ids forming a simple connected walk.
    pub links: Vec<LinkId>,
    pub bw: Units,
}

/// A fully placed request: virtual node -> host assignment and virtual
/// link -> physical paths. Shares of one link's paths sum to its demand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Embedding {
    pub vnr_id: usize,
    pub node_map: BTreeMap<NodeId, NodeAssignment>,
    pub link_map: BTreeMap<LinkId, Vec<PathAssignment>>,
}

impl Embedding {
    /// True when some virtual node of this embedding lives on `host`.
    pub fn uses_host(&self, host: NodeId) -> bool {
        self.node_map.values().any(|a| a.host == host)
    }

    /// Total bandwidth this embedding holds on each physical link.
    pub fn bw_by_link(&self) -> BTreeMap<LinkId, Units> {
        let mut out = BTreeMap::new();
        for paths in self.link_map.values() {
            for p in paths {
                for &l in &p.links {
                    *out.entry(l).or_insert(0) += p.bw;
                }
            }
        }
        out
    }

    /// Debug/regression dump: one `MAP` line per node assignment and per
    /// path, with paths spelled as physical node sequences.
    pub fn dump(&self, net: &SubstrateNetwork) -> String {
        let mut out = String::new();
        for (v, a) in &self.node_map {
            let _ = writeln!(out, "MAP {} NODE {}->{}", self.vnr_id, v, a.host);
        }
        for (l, paths) in &self.link_map {
            for p in paths {
                let seq = net.walk_nodes(&p.links).expect("stored paths are valid walks");
                let seq: Vec<String> = seq.iter().map(|n| n.to_string()).collect();
                let _ = writeln!(
                    out,
                    "MAP {} LINK {} PATH {} BW {}",
                    self.vnr_id,
                    l,
                    seq.join(","),
                    p.bw
                );
            }
        }
        out
    }
}

/// Why a request was turned away.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    /// Node stage failed: no feasible host for some virtual node.
    NoNodeCandidate,
    /// Link stage failed: some virtual link could not be routed.
    NoPath,
    /// Reserved for placers that enforce their own time budget; never
    /// produced by the built-in strategies.
    Timeout,
}

/// Result of an admission attempt. `accepted` iff `embedding` is present.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissionOutcome {
    pub accepted: bool,
    pub embedding: Option<Embedding>,
    pub reject_reason: Option<RejectReason>,
}

impl AdmissionOutcome {
    fn rejected(reason: RejectReason) -> Self {
        Self { accepted: false, embedding: None, reject_reason: Some(reason) }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EmbedError {
    /// Link mapping failed for this virtual link; everything rolled back.
    #[error("no feasible path set for virtual link {virtual_link}")]
    NoPath { virtual_link: LinkId },
    #[error("no active embedding for vnr {vnr_id}")]
    UnknownEmbedding { vnr_id: usize },
    /// A mutation delta could not be applied; the embedding is unchanged.
    #[error("mutation rejected: {reason}")]
    MutationRejected { reason: String },
}

/// Node placement failure: the strategy found no feasible host assignment.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlaceError {
    #[error("no feasible host for some virtual node")]
    NoNodeCandidate,
}

/// A node-placement strategy: picks a host for every virtual node. The link
/// stage is shared by all strategies, so this is the whole surface a
/// placement algorithm has to implement.
pub trait NodePlacer {
    fn name(&self) -> &str;
    /// Returns a total injective virtual-node -> host map, or fails.
    fn place(
        &mut self,
        net: &SubstrateNetwork,
        vn: &VirtualNetwork,
    ) -> Result<BTreeMap<NodeId, NodeId>, PlaceError>;
}

/// The table of embeddings currently holding resources, keyed by vnr id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActiveEmbeddings {
    map: BTreeMap<usize, Embedding>,
}

impl ActiveEmbeddings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, vnr_id: usize) -> bool {
        self.map.contains_key(&vnr_id)
    }

    pub fn get(&self, vnr_id: usize) -> Option<&Embedding> {
        self.map.get(&vnr_id)
    }

    pub fn get_mut(&mut self, vnr_id: usize) -> Option<&mut Embedding> {
        self.map.get_mut(&vnr_id)
    }

    pub fn insert(&mut self, emb: Embedding) {
        self.map.insert(emb.vnr_id, emb);
    }

    pub fn remove(&mut self, vnr_id: usize) -> Option<Embedding> {
        self.map.remove(&vnr_id)
    }

    /// Embeddings in vnr-id order.
    pub fn iter(&self) -> impl Iterator<Item = &Embedding> {
        self.map.values()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// The first constraint an embedding violates, if any.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// A virtual node has no assignment (or a stale one no longer in the VN).
    NodeCoverage { node: NodeId },
    UnknownHost { node: NodeId, host: NodeId },
    /// Two virtual nodes of the same request share a host.
    Injectivity { a: NodeId, b: NodeId, host: NodeId },
    /// CPU demand exceeds what the host had free before this embedding.
    CpuCapacity { node: NodeId, host: NodeId },
    /// Recorded allocation does not match the current demand.
    CpuAllocationMismatch { node: NodeId },
    /// A virtual link has no paths (or a stale entry no longer in the VN).
    LinkCoverage { link: LinkId },
    /// A path does not run between the hosts of the link's endpoints.
    PathEndpoints { link: LinkId },
    /// Path shares do not sum to the link's demand.
    ShareSum { link: LinkId },
    /// A recorded path is not a simple connected walk.
    PathBroken { link: LinkId },
    /// Bandwidth demand exceeds what some physical link had free before
    /// this embedding.
    BwCapacity { link: LinkId, physical: LinkId },
}

/// Verifies one embedding against the current virtual network and ledger:
/// coverage, injectivity, and the capacity inequalities as they stood before
/// this embedding's own allocations. The embedding's recorded allocations
/// are credited back, capped by what is actually outstanding on the ledger,
/// so the check is exact for applied embeddings and conservative for
/// proposed ones.
pub fn check_feasible(
    net: &SubstrateNetwork,
    vn: &VirtualNetwork,
    emb: &Embedding,
) -> Result<(), Violation> {
    for vnode in vn.nodes() {
        if !emb.node_map.contains_key(&vnode.id) {
            return Err(Violation::NodeCoverage { node: vnode.id });
        }
    }
    for (&v, a) in &emb.node_map {
        if vn.node_demand(v).is_none() {
            return Err(Violation::NodeCoverage { node: v });
        }
        if a.host >= net.node_count() {
            return Err(Violation::UnknownHost { node: v, host: a.host });
        }
    }
    let mut seen_hosts: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    for (&v, a) in &emb.node_map {
        if let Some(&prev) = seen_hosts.get(&a.host) {
            return Err(Violation::Injectivity { a: prev, b: v, host: a.host });
        }
        seen_hosts.insert(a.host, v);
    }
    for (&v, a) in &emb.node_map {
        let demand = vn.node_demand(v).unwrap();
        let credit = a.cpu.min(net.cpu_allocated(a.host));
        if demand > net.node(a.host).cpu_free + credit {
            return Err(Violation::CpuCapacity { node: v, host: a.host });
        }
        if a.cpu != demand {
            return Err(Violation::CpuAllocationMismatch { node: v });
        }
    }

    for vlink in vn.links() {
        match emb.link_map.get(&vlink.id) {
            None => return Err(Violation::LinkCoverage { link: vlink.id }),
            Some(paths) if paths.is_empty() => {
                return Err(Violation::LinkCoverage { link: vlink.id });
            }
            _ => {}
        }
    }
    for (&l, paths) in &emb.link_map {
        let Some((u, v)) = vn.link_endpoints(l) else {
            return Err(Violation::LinkCoverage { link: l });
        };
        let hu = emb.node_map[&u].host;
        let hv = emb.node_map[&v].host;
        let mut total = 0;
        for p in paths {
            let seq = net.walk_nodes(&p.links).map_err(|_| Violation::PathBroken { link: l })?;
            if seq.len() < 2 {
                return Err(Violation::PathBroken { link: l });
            }
            let (s, t) = (seq[0], *seq.last().unwrap());
            if (s, t) != (hu, hv) && (s, t) != (hv, hu) {
                return Err(Violation::PathEndpoints { link: l });
            }
            total += p.bw;
        }
        let demand = vn.link_demand(l).unwrap();
        if total != demand {
            return Err(Violation::ShareSum { link: l });
        }
    }
    // Per physical link: the embedding's combined share must fit in
    // what was free before its own allocations.
    let own = emb.bw_by_link();
    for (&l, paths) in &emb.link_map {
        for p in paths {
            for &pl in &p.links {
                let credit = own[&pl].min(net.bw_allocated(pl));
                if p.bw > net.link(pl).bw_free + credit {
                    return Err(Violation::BwCapacity { link: l, physical: pl });
                }
            }
        }
    }
    Ok(())
}

/// Shortest feasible path from `src` to `dst` over links with at least
/// `min_free` bandwidth free, by hop count. Among equal-length paths the
/// lexicographically smallest node sequence wins, which makes routing
/// deterministic. Returns the link sequence.
fn shortest_feasible_path(
    net: &SubstrateNetwork,
    src: NodeId,
    dst: NodeId,
    min_free: Units,
) -> Option<Vec<LinkId>> {
    let feasible = |l: LinkId| net.link(l).bw_free >= min_free;
    let dist_from = |start: NodeId| {
        let mut dist = vec![usize::MAX; net.node_count()];
        dist[start] = 0;
        let mut queue = VecDeque::from([start]);
        while let Some(at) = queue.pop_front() {
            for &l in net.incident_links(at) {
                if !feasible(l) {
                    continue;
                }
                let next = net.other_end(l, at);
                if dist[next] == usize::MAX {
                    dist[next] = dist[at] + 1;
                    queue.push_back(next);
                }
            }
        }
        dist
    };
    let from_src = dist_from(src);
    if from_src[dst] == usize::MAX {
        return None;
    }
    let to_dst = dist_from(dst);

    // Walk greedily: the smallest next node still on some shortest path is
    // always extendable, so the front-to-back greedy choice is globally
    // lexicographically minimal. Shortest paths are simple by construction.
    let mut links = Vec::with_capacity(from_src[dst]);
    let mut at = src;
    while at != dst {
        let next = net
            .incident_links(at)
            .iter()
            .filter(|&&l| feasible(l))
            .map(|&l| net.other_end(l, at))
            .filter(|&v| from_src[v] == from_src[at] + 1 && to_dst[v] + 1 == to_dst[at])
            .min()
            .expect("dst reachable, so a shortest-path successor exists");
        links.push(net.link_between(at, next).unwrap());
        at = next;
    }
    Some(links)
}

/// Routes one virtual link between two hosts and allocates bandwidth for it.
/// A single shortest feasible path is preferred; with a path budget above 1
/// the demand may be split greedily across successive shortest feasible
/// paths. On failure nothing stays allocated.
pub(crate) fn route_and_allocate(
    net: &mut SubstrateNetwork,
    src: NodeId,
    dst: NodeId,
    demand: Units,
    k_paths: usize,
) -> Result<Vec<PathAssignment>, ()> {
    assert_ne!(src, dst, "virtual link endpoints map to distinct hosts");
    if let Some(links) = shortest_feasible_path(net, src, dst, demand) {
        net.allocate_path(&links, demand).expect("path chosen over feasible links");
        return Ok(vec![PathAssignment { links, bw: demand }]);
    }
    if k_paths <= 1 {
        return Err(());
    }
    let mut placed: Vec<PathAssignment> = Vec::new();
    let mut remaining = demand;
    while remaining > 0 && placed.len() < k_paths {
        let Some(links) = shortest_feasible_path(net, src, dst, 1) else {
            break;
        };
        let bottleneck = links.iter().map(|&l| net.link(l).bw_free).min().unwrap();
        let share = bottleneck.min(remaining);
        net.allocate_path(&links, share).expect("share bounded by bottleneck");
        placed.push(PathAssignment { links, bw: share });
        remaining -= share;
    }
    if remaining > 0 {
        for p in &placed {
            net.release_path(&p.links, p.bw).expect("releasing own fresh allocation");
        }
        return Err(());
    }
    Ok(placed)
}

/// Maps every virtual link for a fixed node placement, allocating bandwidth
/// as it goes. All-or-nothing: on failure every path allocated here is
/// released and the error names the virtual link that could not be routed.
///
/// `node_map` must be total and injective.
pub fn map_links(
    net: &mut SubstrateNetwork,
    vn: &VirtualNetwork,
    node_map: &BTreeMap<NodeId, NodeId>,
    k_paths: usize,
) -> Result<BTreeMap<LinkId, Vec<PathAssignment>>, EmbedError> {
    let mut link_map: BTreeMap<LinkId, Vec<PathAssignment>> = BTreeMap::new();
    for vlink in vn.links() {
        let (u, v) = vlink.endpoints;
        let src = *node_map.get(&u).expect("node_map is total");
        let dst = *node_map.get(&v).expect("node_map is total");
        match route_and_allocate(net, src, dst, vlink.bw_demand, k_paths) {
            Ok(paths) => {
                link_map.insert(vlink.id, paths);
            }
            Err(()) => {
                for paths in link_map.values() {
                    for p in paths {
                        net.release_path(&p.links, p.bw).expect("releasing own fresh allocation");
                    }
                }
                return Err(EmbedError::NoPath { virtual_link: vlink.id });
            }
        }
    }
    Ok(link_map)
}

/// Admits one request: node placement by `placer`, then link mapping, with
/// CPU and bandwidth allocated on success. Rejections leave zero footprint.
/// On acceptance the embedding is registered in `active` and a copy is
/// returned in the outcome.
pub fn embed(
    net: &mut SubstrateNetwork,
    active: &mut ActiveEmbeddings,
    vnr_id: usize,
    vn: &VirtualNetwork,
    placer: &mut dyn NodePlacer,
    k_paths: usize,
) -> AdmissionOutcome {
    assert!(!active.contains(vnr_id), "vnr {vnr_id} is already embedded");
    let node_map = match placer.place(net, vn) {
        Ok(m) => m,
        Err(PlaceError::NoNodeCandidate) => {
            return AdmissionOutcome::rejected(RejectReason::NoNodeCandidate);
        }
    };
    if !placement_shape_ok(net, vn, &node_map) {
        log::warn!("placer {} returned a malformed node map; rejecting", placer.name());
        return AdmissionOutcome::rejected(RejectReason::NoNodeCandidate);
    }

    let mut assigned: BTreeMap<NodeId, NodeAssignment> = BTreeMap::new();
    for vnode in vn.nodes() {
        let host = node_map[&vnode.id];
        if net.allocate_node(host, vnode.cpu_demand).is_err() {
            for a in assigned.values() {
                net.release_node(a.host, a.cpu).expect("releasing own fresh allocation");
            }
            return AdmissionOutcome::rejected(RejectReason::NoNodeCandidate);
        }
        assigned.insert(vnode.id, NodeAssignment { host, cpu: vnode.cpu_demand });
    }

    match map_links(net, vn, &node_map, k_paths) {
        Ok(link_map) => {
            let emb = Embedding { vnr_id, node_map: assigned, link_map };
            active.insert(emb.clone());
            AdmissionOutcome { accepted: true, embedding: Some(emb), reject_reason: None }
        }
        Err(_) => {
            for a in assigned.values() {
                net.release_node(a.host, a.cpu).expect("releasing own fresh allocation");
            }
            AdmissionOutcome::rejected(RejectReason::NoPath)
        }
    }
}

fn placement_shape_ok(
    net: &SubstrateNetwork,
    vn: &VirtualNetwork,
    node_map: &BTreeMap<NodeId, NodeId>,
) -> bool {
    if vn.nodes().any(|n| !node_map.contains_key(&n.id)) {
        return false;
    }
    let mut hosts: Vec<NodeId> = node_map.values().copied().collect();
    if hosts.iter().any(|&h| h >= net.node_count()) {
        return false;
    }
    hosts.sort_unstable();
    hosts.windows(2).all(|w| w[0] != w[1])
}

/// Releases everything a request holds and removes it from the table.
/// Returns the final embedding (useful for accounting at departure).
pub fn evict(
    net: &mut SubstrateNetwork,
    active: &mut ActiveEmbeddings,
    vnr_id: usize,
) -> Result<Embedding, EmbedError> {
    let emb = active.remove(vnr_id).ok_or(EmbedError::UnknownEmbedding { vnr_id })?;
    for paths in emb.link_map.values() {
        for p in paths {
            net.release_path(&p.links, p.bw)
                .expect("evict releases exactly what the embedding holds");
        }
    }
    for a in emb.node_map.values() {
        net.release_node(a.host, a.cpu)
            .expect("evict releases exactly what the embedding holds");
    }
    Ok(emb)
}

/// Adjusts an active embedding for one mutation, touching only the affected
/// elements. `vn_after` is the virtual network with the event already
/// applied. On rejection both the ledger and the embedding are restored, the
/// caller keeps the pre-mutation VN, and the request stays embedded as-is.
pub fn re_embed_delta(
    net: &mut SubstrateNetwork,
    active: &mut ActiveEmbeddings,
    vnr_id: usize,
    vn_after: &VirtualNetwork,
    event: &MutationEvent,
    k_paths: usize,
) -> Result<(), EmbedError> {
    if !active.contains(vnr_id) {
        return Err(EmbedError::UnknownEmbedding { vnr_id });
    }
    let net_snapshot = net.clone();
    let emb_snapshot = active.get(vnr_id).unwrap().clone();
    let emb = active.get_mut(vnr_id).unwrap();
    match apply_delta(net, emb, vn_after, &event.kind, k_paths) {
        Ok(()) => Ok(()),
        Err(reason) => {
            *net = net_snapshot;
            *active.get_mut(vnr_id).unwrap() = emb_snapshot;
            Err(EmbedError::MutationRejected { reason })
        }
    }
}

/// The per-kind delta. May bail at any point: the caller restores snapshots.
fn apply_delta(
    net: &mut SubstrateNetwork,
    emb: &mut Embedding,
    vn_after: &VirtualNetwork,
    kind: &MutationKind,
    k_paths: usize,
) -> Result<(), String> {
    match kind {
        MutationKind::AddNode { node, cpu_demand, links } => {
            let host = pick_added_host(net, emb, *cpu_demand)
                .ok_or_else(|| format!("no feasible host for added node {node}"))?;
            net.allocate_node(host, *cpu_demand).expect("host chosen with enough free cpu");
            emb.node_map.insert(*node, NodeAssignment { host, cpu: *cpu_demand });
            for al in links {
                let other = emb.node_map[&al.other].host;
                let paths = route_and_allocate(net, host, other, al.bw_demand, k_paths)
                    .map_err(|()| format!("no feasible path set for added link {}", al.link))?;
                emb.link_map.insert(al.link, paths);
            }
            Ok(())
        }
        MutationKind::RemoveNode { node } => {
            // Incident links are already gone from vn_after; their embedding
            // entries are the stale keys.
            let stale: Vec<LinkId> =
                emb.link_map.keys().copied().filter(|l| !vn_after.has_link(*l)).collect();
            for l in stale {
                release_link_entry(net, emb, l);
            }
            let a = emb
                .node_map
                .remove(node)
                .ok_or_else(|| format!("virtual node {node} is not embedded"))?;
            net.release_node(a.host, a.cpu).expect("releasing recorded allocation");
            Ok(())
        }
        MutationKind::AddLink { link, endpoints, bw_demand } => {
            let src = emb.node_map[&endpoints.0].host;
            let dst = emb.node_map[&endpoints.1].host;
            let paths = route_and_allocate(net, src, dst, *bw_demand, k_paths)
                .map_err(|()| format!("no feasible path set for added link {link}"))?;
            emb.link_map.insert(*link, paths);
            Ok(())
        }
        MutationKind::RemoveLink { link } => {
            if !emb.link_map.contains_key(link) {
                return Err(format!("virtual link {link} is not embedded"));
            }
            release_link_entry(net, emb, *link);
            Ok(())
        }
        MutationKind::ResizeNodeCpu { node, new_demand } => {
            let a = *emb
                .node_map
                .get(node)
                .ok_or_else(|| format!("virtual node {node} is not embedded"))?;
            if *new_demand == a.cpu {
                return Ok(());
            }
            if *new_demand < a.cpu {
                net.release_node(a.host, a.cpu - new_demand).expect("shrink within allocation");
                emb.node_map.get_mut(node).unwrap().cpu = *new_demand;
                return Ok(());
            }
            let grow = new_demand - a.cpu;
            if net.node(a.host).cpu_free >= grow {
                net.allocate_node(a.host, grow).expect("checked free");
                emb.node_map.get_mut(node).unwrap().cpu = *new_demand;
                return Ok(());
            }
            migrate_node(net, emb, vn_after, *node, *new_demand, k_paths)
        }
        MutationKind::ResizeLinkBw { link, new_demand } => {
            let paths = emb
                .link_map
                .get_mut(link)
                .ok_or_else(|| format!("virtual link {link} is not embedded"))?;
            let old: Units = paths.iter().map(|p| p.bw).sum();
            if *new_demand == old {
                return Ok(());
            }
            if *new_demand < old {
                // Shed the excess from the last paths first; at least one
                // path survives because the new demand is positive.
                let mut excess = old - new_demand;
                while excess > 0 {
                    let last = paths.last_mut().expect("shares sum above excess");
                    let cut = last.bw.min(excess);
                    net.release_path(&last.links, cut).expect("shrink within allocation");
                    last.bw -= cut;
                    excess -= cut;
                    if last.bw == 0 {
                        paths.pop();
                    }
                }
                return Ok(());
            }
            let grow = new_demand - old;
            if let [only] = paths.as_mut_slice() {
                if only.links.iter().all(|&l| net.link(l).bw_free >= grow) {
                    net.allocate_path(&only.links.clone(), grow).expect("checked free");
                    only.bw += grow;
                    return Ok(());
                }
            }
            // Migrate the whole link onto a fresh path set at the new demand.
            let (u, v) = vn_after.link_endpoints(*link).expect("link exists after resize");
            let src = emb.node_map[&u].host;
            let dst = emb.node_map[&v].host;
            release_link_entry(net, emb, *link);
            let paths = route_and_allocate(net, src, dst, *new_demand, k_paths)
                .map_err(|()| format!("no feasible path set for resized link {link}"))?;
            emb.link_map.insert(*link, paths);
            Ok(())
        }
    }
}

/// Host for a freshly added virtual node: most CPU free among nodes this
/// embedding does not already use, lowest id on ties (the admission-stage
/// greedy rule, since mutation deltas run without a placer).
fn pick_added_host(net: &SubstrateNetwork, emb: &Embedding, demand: Units) -> Option<NodeId> {
    net.nodes()
        .iter()
        .filter(|n| n.cpu_free >= demand && !emb.uses_host(n.id))
        .max_by(|a, b| a.cpu_free.cmp(&b.cpu_free).then(b.id.cmp(&a.id)))
        .map(|n| n.id)
}

fn release_link_entry(net: &mut SubstrateNetwork, emb: &mut Embedding, link: LinkId) {
    let paths = emb.link_map.remove(&link).expect("caller checked presence");
    for p in &paths {
        net.release_path(&p.links, p.bw).expect("releasing recorded allocation");
    }
}

/// Moves one virtual node to a new host at `new_demand`, re-routing its
/// incident links. Used when an in-place resize does not fit.
fn migrate_node(
    net: &mut SubstrateNetwork,
    emb: &mut Embedding,
    vn_after: &VirtualNetwork,
    node: NodeId,
    new_demand: Units,
    k_paths: usize,
) -> Result<(), String> {
    let old = emb.node_map.remove(&node).expect("caller checked presence");
    net.release_node(old.host, old.cpu).expect("releasing recorded allocation");
    let incident = vn_after.incident_links(node);
    for &l in &incident {
        if emb.link_map.contains_key(&l) {
            release_link_entry(net, emb, l);
        }
    }

    let host = pick_added_host(net, emb, new_demand)
        .ok_or_else(|| format!("no feasible host to migrate virtual node {node}"))?;
    net.allocate_node(host, new_demand).expect("host chosen with enough free cpu");
    emb.node_map.insert(node, NodeAssignment { host, cpu: new_demand });
    for &l in &incident {
        let (u, v) = vn_after.link_endpoints(l).expect("incident link exists");
        let other = if u == node { v } else { u };
        let other_host = emb.node_map[&other].host;
        let demand = vn_after.link_demand(l).unwrap();
        let paths = route_and_allocate(net, host, other_host, demand, k_paths)
            .map_err(|()| format!("no feasible path set for link {l} after migrating node {node}"))?;
        emb.link_map.insert(l, paths);
    }
    Ok(())
}

/// Exact conservation: per node and per link, capacity minus free equals the
/// sum of allocations recorded by the active embeddings.
pub fn conservation_check(
    net: &SubstrateNetwork,
    active: &ActiveEmbeddings,
) -> Result<(), String> {
    let mut cpu = vec![0 as Units; net.node_count()];
    let mut bw = vec![0 as Units; net.link_count()];
    for emb in active.iter() {
        for a in emb.node_map.values() {
            cpu[a.host] += a.cpu;
        }
        for (l, share) in emb.bw_by_link() {
            bw[l] += share;
        }
    }
    for n in net.nodes() {
        if net.cpu_allocated(n.id) != cpu[n.id] {
            return Err(format!(
                "node {}: ledger says {} allocated, embeddings hold {}",
                n.id,
                net.cpu_allocated(n.id),
                cpu[n.id]
            ));
        }
    }
    for l in net.links() {
        if net.bw_allocated(l.id) != bw[l.id] {
            return Err(format!(
                "link {}: ledger says {} allocated, embeddings hold {}",
                l.id,
                net.bw_allocated(l.id),
                bw[l.id]
            ));
        }
    }
    Ok(())
}

/// Runs [`check_feasible`] for every active embedding against its current
/// virtual network. `vns` must hold an entry per active vnr id.
pub fn feasibility_sweep(
    net: &SubstrateNetwork,
    vns: &BTreeMap<usize, VirtualNetwork>,
    active: &ActiveEmbeddings,
) -> Result<(), (usize, Violation)> {
    for emb in active.iter() {
        let vn = vns
            .get(&emb.vnr_id)
            .unwrap_or_else(|| panic!("no virtual network recorded for vnr {}", emb.vnr_id));
        check_feasible(net, vn, emb).map_err(|v| (emb.vnr_id, v))?;
    }
    Ok(())
}
