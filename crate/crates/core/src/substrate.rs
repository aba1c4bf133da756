//! Network graphs and the exact resource ledger.
//!
//! Two graph types live here. [`SubstrateNetwork`] is the physical network:
//! dense node ids, a CPU ledger per node and a bandwidth ledger per link,
//! with allocate/release operations that either apply fully or leave the
//! ledger untouched. [`VirtualNetwork`] is a request topology: sparse ids
//! (mutations punch holes), demands instead of capacities, no ledger.
//!
//! All resource quantities are integer [`Units`] so conservation can be
//! checked exactly rather than within a tolerance.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

/// Node identifier. Substrate ids are dense `0..n`; virtual ids may be
/// sparse after mutations.
pub type NodeId = usize;
/// Link identifier, same conventions as [`NodeId`].
pub type LinkId = usize;
/// Integer resource quantity (CPU units or bandwidth units).
pub type Units = u64;
/// Simulation clock value. Integer; event ties are broken by kind.
pub type Time = u64;

/// Errors from graph construction, ledger operations, and the text formats.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetError {
    /// A CPU allocation asked for more than the node has free.
    #[error("node {node}: requested {requested} cpu units but only {free} free")]
    InsufficientCpu {
        node: NodeId,
        requested: Units,
        free: Units,
    },
    /// A bandwidth allocation asked for more than some path link has free.
    #[error("link {link}: requested {requested} bw units but only {free} free")]
    InsufficientBandwidth {
        link: LinkId,
        requested: Units,
        free: Units,
    },
    /// A release would push free resources above capacity. This is an
    /// accounting bug in the caller, never a recoverable condition.
    #[error("{what} {id}: releasing {amount} units with only {allocated} allocated")]
    OverRelease {
        what: &'static str,
        id: usize,
        amount: Units,
        allocated: Units,
    },
    /// A path argument is not a simple connected walk.
    #[error("path is not a simple connected walk (offending link {link})")]
    BrokenPath { link: LinkId },
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
    #[error("unknown link id {0}")]
    UnknownLink(LinkId),
    /// Self loop, duplicate link, or otherwise malformed topology edit.
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Physical node: total CPU capacity and the part still unallocated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubstrateNode {
    pub id: NodeId,
    pub cpu_capacity: Units,
    pub cpu_free: Units,
}

/// Physical link: undirected, stored with `endpoints.0 < endpoints.1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubstrateLink {
    pub id: LinkId,
    pub endpoints: (NodeId, NodeId),
    pub bw_capacity: Units,
    pub bw_free: Units,
}

/// The physical network plus its resource ledger.
///
/// Topology is fixed after construction (only virtual networks mutate);
/// the ledger moves through `allocate_*` / `release_*`. Every operation is
/// all-or-nothing: on error the ledger is exactly as it was before the call.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SubstrateNetwork {
    nodes: Vec<SubstrateNode>,
    links: Vec<SubstrateLink>,
    /// Incident link ids per node, in link insertion order.
    adjacency: Vec<Vec<LinkId>>,
    /// Normalized endpoint pair -> link id; rejects parallel links.
    by_pair: BTreeMap<(NodeId, NodeId), LinkId>,
}

fn norm_pair(u: NodeId, v: NodeId) -> (NodeId, NodeId) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

impl SubstrateNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a node with the given CPU capacity, fully free. Ids are dense.
    pub fn add_node(&mut self, cpu_capacity: Units) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(SubstrateNode {
            id,
            cpu_capacity,
            cpu_free: cpu_capacity,
        });
        self.adjacency.push(Vec::new());
        id
    }

    /// Adds an undirected link. Self loops and parallel links are rejected.
    pub fn add_link(&mut self, u: NodeId, v: NodeId, bw_capacity: Units) -> Result<LinkId, NetError> {
        if u >= self.nodes.len() {
            return Err(NetError::UnknownNode(u));
        }
        if v >= self.nodes.len() {
            return Err(NetError::UnknownNode(v));
        }
        if u == v {
            return Err(NetError::InvalidTopology(format!("self loop at node {u}")));
        }
        let pair = norm_pair(u, v);
        if self.by_pair.contains_key(&pair) {
            return Err(NetError::InvalidTopology(format!(
                "parallel link between {} and {}",
                pair.0, pair.1
            )));
        }
        let id = self.links.len();
        self.links.push(SubstrateLink {
            id,
            endpoints: pair,
            bw_capacity,
            bw_free: bw_capacity,
        });
        self.adjacency[pair.0].push(id);
        self.adjacency[pair.1].push(id);
        self.by_pair.insert(pair, id);
        Ok(id)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn node(&self, id: NodeId) -> &SubstrateNode {
        &self.nodes[id]
    }

    pub fn link(&self, id: LinkId) -> &SubstrateLink {
        &self.links[id]
    }

    pub fn nodes(&self) -> &[SubstrateNode] {
        &self.nodes
    }

    pub fn links(&self) -> &[SubstrateLink] {
        &self.links
    }

    /// Incident link ids of `node`, in insertion order.
    pub fn incident_links(&self, node: NodeId) -> &[LinkId] {
        &self.adjacency[node]
    }

    pub fn link_between(&self, u: NodeId, v: NodeId) -> Option<LinkId> {
        self.by_pair.get(&norm_pair(u, v)).copied()
    }

    /// The endpoint of `link` that is not `node`.
    pub fn other_end(&self, link: LinkId, node: NodeId) -> NodeId {
        let (a, b) = self.links[link].endpoints;
        if node == a {
            b
        } else {
            a
        }
    }

    /// CPU units currently allocated on `node`.
    pub fn cpu_allocated(&self, node: NodeId) -> Units {
        let n = &self.nodes[node];
        n.cpu_capacity - n.cpu_free
    }

    /// Bandwidth units currently allocated on `link`.
    pub fn bw_allocated(&self, link: LinkId) -> Units {
        let l = &self.links[link];
        l.bw_capacity - l.bw_free
    }

    /// Takes `amount` CPU units from `node`, or fails leaving the ledger
    /// untouched.
    pub fn allocate_node(&mut self, node: NodeId, amount: Units) -> Result<(), NetError> {
        let n = self.nodes.get_mut(node).ok_or(NetError::UnknownNode(node))?;
        if n.cpu_free < amount {
            return Err(NetError::InsufficientCpu {
                node,
                requested: amount,
                free: n.cpu_free,
            });
        }
        n.cpu_free -= amount;
        Ok(())
    }

    /// Returns `amount` CPU units to `node`. Releasing more than is
    /// allocated is an accounting bug and fails without touching the ledger.
    pub fn release_node(&mut self, node: NodeId, amount: Units) -> Result<(), NetError> {
        let allocated = match self.nodes.get(node) {
            Some(n) => n.cpu_capacity - n.cpu_free,
            None => return Err(NetError::UnknownNode(node)),
        };
        if amount > allocated {
            return Err(NetError::OverRelease {
                what: "node",
                id: node,
                amount,
                allocated,
            });
        }
        self.nodes[node].cpu_free += amount;
        Ok(())
    }

    /// Checks that `path` is a simple connected walk and returns its node
    /// sequence (one longer than the path).
    pub fn walk_nodes(&self, path: &[LinkId]) -> Result<Vec<NodeId>, NetError> {
        for &l in path {
            if l >= self.links.len() {
                return Err(NetError::UnknownLink(l));
            }
        }
        match path {
            [] => Ok(Vec::new()),
            [only] => {
                let (a, b) = self.links[*only].endpoints;
                Ok(vec![a, b])
            }
            [first, second, ..] => {
                let (a, b) = self.links[*first].endpoints;
                let (c, d) = self.links[*second].endpoints;
                // The shared endpoint of the first two links orients the walk.
                let (start, mut at) = if b == c || b == d {
                    (a, b)
                } else if a == c || a == d {
                    (b, a)
                } else {
                    return Err(NetError::BrokenPath { link: *second });
                };
                let mut seq = vec![start, at];
                for &l in &path[1..] {
                    let (u, v) = self.links[l].endpoints;
                    let next = if at == u {
                        v
                    } else if at == v {
                        u
                    } else {
                        return Err(NetError::BrokenPath { link: l });
                    };
                    seq.push(next);
                    at = next;
                }
                let mut seen = seq.clone();
                seen.sort_unstable();
                seen.dedup();
                if seen.len() != seq.len() {
                    // Revisiting a node means the walk is not simple.
                    return Err(NetError::BrokenPath { link: *path.last().unwrap() });
                }
                Ok(seq)
            }
        }
    }

    /// Takes `amount` bandwidth units on every link of `path`. The path must
    /// be a simple connected walk; on any failure no link is touched.
    pub fn allocate_path(&mut self, path: &[LinkId], amount: Units) -> Result<(), NetError> {
        self.walk_nodes(path)?;
        for &l in path {
            let link = &self.links[l];
            if link.bw_free < amount {
                return Err(NetError::InsufficientBandwidth {
                    link: l,
                    requested: amount,
                    free: link.bw_free,
                });
            }
        }
        for &l in path {
            self.links[l].bw_free -= amount;
        }
        Ok(())
    }

    /// Returns `amount` bandwidth units on every link of `path`, the inverse
    /// of [`allocate_path`](Self::allocate_path).
    pub fn release_path(&mut self, path: &[LinkId], amount: Units) -> Result<(), NetError> {
        self.walk_nodes(path)?;
        for &l in path {
            let link = &self.links[l];
            let allocated = link.bw_capacity - link.bw_free;
            if amount > allocated {
                return Err(NetError::OverRelease {
                    what: "link",
                    id: l,
                    amount,
                    allocated,
                });
            }
        }
        for &l in path {
            self.links[l].bw_free += amount;
        }
        Ok(())
    }

    /// True when every node can reach every other over the links.
    pub fn is_connected(&self) -> bool {
        if self.nodes.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(at) = stack.pop() {
            for &l in &self.adjacency[at] {
                let next = self.other_end(l, at);
                if !seen[next] {
                    seen[next] = true;
                    count += 1;
                    stack.push(next);
                }
            }
        }
        count == self.nodes.len()
    }

    /// Serializes capacities in the network text format. Ledger state (free
    /// amounts) is not part of the format.
    pub fn write_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "NODES {} LINKS {}", self.nodes.len(), self.links.len());
        for n in &self.nodes {
            let _ = writeln!(out, "NODE {} {}", n.id, n.cpu_capacity);
        }
        for l in &self.links {
            let _ = writeln!(out, "LINK {} {} {}", l.endpoints.0, l.endpoints.1, l.bw_capacity);
        }
        out
    }

    /// Parses the network text format. Node ids must be dense `0..n`; the
    /// parsed ledger starts fully free.
    pub fn parse_text(text: &str) -> Result<Self, NetError> {
        let mut lines = content_lines(text);
        let (line_no, header) = lines
            .next()
            .ok_or_else(|| NetError::Parse { line: 0, msg: "missing NODES header".into() })?;
        let (n, m) = parse_header(line_no, &header)?;
        let mut net = SubstrateNetwork::new();
        let mut caps: BTreeMap<NodeId, Units> = BTreeMap::new();
        for _ in 0..n {
            let (line_no, line) = next_line(&mut lines, "NODE")?;
            let (id, cpu) = parse_node_line(line_no, &line)?;
            if caps.insert(id, cpu).is_some() {
                return Err(NetError::Parse { line: line_no, msg: format!("duplicate node {id}") });
            }
        }
        for id in 0..n {
            let cpu = *caps.get(&id).ok_or_else(|| NetError::Parse {
                line: 0,
                msg: format!("substrate node ids must be dense, missing {id}"),
            })?;
            net.add_node(cpu);
        }
        for _ in 0..m {
            let (line_no, line) = next_line(&mut lines, "LINK")?;
            let (u, v, bw) = parse_link_line(line_no, &line)?;
            net.add_link(u, v, bw)
                .map_err(|e| NetError::Parse { line: line_no, msg: e.to_string() })?;
        }
        if let Some((line_no, extra)) = lines.next() {
            return Err(NetError::Parse { line: line_no, msg: format!("unexpected trailing line: {extra}") });
        }
        Ok(net)
    }
}

/// Virtual node: id plus its CPU demand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VirtualNode {
    pub id: NodeId,
    pub cpu_demand: Units,
}

/// Virtual link: id, endpoint virtual nodes, bandwidth demand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VirtualLink {
    pub id: LinkId,
    pub endpoints: (NodeId, NodeId),
    pub bw_demand: Units,
}

/// A request topology: CPU demands on nodes, bandwidth demands on links.
///
/// Mutations remove and add elements mid-lifetime, so ids are sparse and
/// never reused within a request. All iteration is in id order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VirtualNetwork {
    nodes: BTreeMap<NodeId, Units>,
    links: BTreeMap<LinkId, ((NodeId, NodeId), Units)>,
}

impl VirtualNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a node with an explicit id (generators and parsers choose ids).
    pub fn insert_node(&mut self, id: NodeId, cpu_demand: Units) -> Result<(), NetError> {
        if self.nodes.contains_key(&id) {
            return Err(NetError::InvalidTopology(format!("duplicate virtual node {id}")));
        }
        self.nodes.insert(id, cpu_demand);
        Ok(())
    }

    pub fn insert_link(
        &mut self,
        id: LinkId,
        u: NodeId,
        v: NodeId,
        bw_demand: Units,
    ) -> Result<(), NetError> {
        if self.links.contains_key(&id) {
            return Err(NetError::InvalidTopology(format!("duplicate virtual link {id}")));
        }
        if !self.nodes.contains_key(&u) {
            return Err(NetError::UnknownNode(u));
        }
        if !self.nodes.contains_key(&v) {
            return Err(NetError::UnknownNode(v));
        }
        if u == v {
            return Err(NetError::InvalidTopology(format!("self loop at virtual node {u}")));
        }
        if self.link_between(u, v).is_some() {
            return Err(NetError::InvalidTopology(format!(
                "parallel virtual link between {u} and {v}"
            )));
        }
        self.links.insert(id, (norm_pair(u, v), bw_demand));
        Ok(())
    }

    /// Removes a node and its incident links; returns the removed link ids.
    pub fn remove_node(&mut self, id: NodeId) -> Result<Vec<LinkId>, NetError> {
        if self.nodes.remove(&id).is_none() {
            return Err(NetError::UnknownNode(id));
        }
        let doomed: Vec<LinkId> = self
            .links
            .iter()
            .filter(|(_, ((u, v), _))| *u == id || *v == id)
            .map(|(&l, _)| l)
            .collect();
        for l in &doomed {
            self.links.remove(l);
        }
        Ok(doomed)
    }

    pub fn remove_link(&mut self, id: LinkId) -> Result<(), NetError> {
        self.links.remove(&id).map(|_| ()).ok_or(NetError::UnknownLink(id))
    }

    pub fn set_node_demand(&mut self, id: NodeId, cpu_demand: Units) -> Result<(), NetError> {
        match self.nodes.get_mut(&id) {
            Some(d) => {
                *d = cpu_demand;
                Ok(())
            }
            None => Err(NetError::UnknownNode(id)),
        }
    }

    pub fn set_link_demand(&mut self, id: LinkId, bw_demand: Units) -> Result<(), NetError> {
        match self.links.get_mut(&id) {
            Some((_, d)) => {
                *d = bw_demand;
                Ok(())
            }
            None => Err(NetError::UnknownLink(id)),
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn has_node(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn has_link(&self, id: LinkId) -> bool {
        self.links.contains_key(&id)
    }

    pub fn node_demand(&self, id: NodeId) -> Option<Units> {
        self.nodes.get(&id).copied()
    }

    pub fn link_demand(&self, id: LinkId) -> Option<Units> {
        self.links.get(&id).map(|&(_, d)| d)
    }

    pub fn link_endpoints(&self, id: LinkId) -> Option<(NodeId, NodeId)> {
        self.links.get(&id).map(|&(e, _)| e)
    }

    /// Nodes in id order.
    pub fn nodes(&self) -> impl Iterator<Item = VirtualNode> + '_ {
        self.nodes.iter().map(|(&id, &cpu_demand)| VirtualNode { id, cpu_demand })
    }

    /// Links in id order.
    pub fn links(&self) -> impl Iterator<Item = VirtualLink> + '_ {
        self.links.iter().map(|(&id, &(endpoints, bw_demand))| VirtualLink {
            id,
            endpoints,
            bw_demand,
        })
    }

    pub fn link_between(&self, u: NodeId, v: NodeId) -> Option<LinkId> {
        let pair = norm_pair(u, v);
        self.links.iter().find(|(_, ((a, b), _))| (*a, *b) == pair).map(|(&l, _)| l)
    }

    /// Links incident to `node`, in id order.
    pub fn incident_links(&self, node: NodeId) -> Vec<LinkId> {
        self.links
            .iter()
            .filter(|(_, ((u, v), _))| *u == node || *v == node)
            .map(|(&l, _)| l)
            .collect()
    }

    pub fn next_node_id(&self) -> NodeId {
        self.nodes.keys().next_back().map_or(0, |&m| m + 1)
    }

    pub fn next_link_id(&self) -> LinkId {
        self.links.keys().next_back().map_or(0, |&m| m + 1)
    }

    pub fn total_cpu_demand(&self) -> Units {
        self.nodes.values().sum()
    }

    pub fn total_bw_demand(&self) -> Units {
        self.links.values().map(|&(_, d)| d).sum()
    }

    pub fn is_connected(&self) -> bool {
        let ids: Vec<NodeId> = self.nodes.keys().copied().collect();
        if ids.is_empty() {
            return true;
        }
        let mut seen: BTreeMap<NodeId, bool> = ids.iter().map(|&i| (i, false)).collect();
        let mut stack = vec![ids[0]];
        seen.insert(ids[0], true);
        let mut count = 1;
        while let Some(at) = stack.pop() {
            for ((u, v), _) in self.links.values() {
                let next = if *u == at {
                    *v
                } else if *v == at {
                    *u
                } else {
                    continue;
                };
                if let Some(flag) = seen.get_mut(&next) {
                    if !*flag {
                        *flag = true;
                        count += 1;
                        stack.push(next);
                    }
                }
            }
        }
        count == ids.len()
    }

    /// Structural validity: connected, all demands positive, at least one node.
    pub fn validate(&self) -> Result<(), NetError> {
        if self.nodes.is_empty() {
            return Err(NetError::InvalidTopology("virtual network has no nodes".into()));
        }
        if self.nodes.values().any(|&d| d == 0) {
            return Err(NetError::InvalidTopology("zero cpu demand".into()));
        }
        if self.links.values().any(|&(_, d)| d == 0) {
            return Err(NetError::InvalidTopology("zero bw demand".into()));
        }
        if !self.is_connected() {
            return Err(NetError::InvalidTopology("virtual network is disconnected".into()));
        }
        Ok(())
    }

    /// Serializes in the network text format (ids may be sparse).
    pub fn write_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "NODES {} LINKS {}", self.nodes.len(), self.links.len());
        for (id, cpu) in &self.nodes {
            let _ = writeln!(out, "NODE {id} {cpu}");
        }
        for (id, ((u, v), bw)) in &self.links {
            let _ = writeln!(out, "LINK {u} {v} {bw} ID {id}");
        }
        out
    }

    /// Parses the network text format. Link lines may carry an explicit
    /// `ID <id>` suffix (written for mutated, sparse topologies); without it
    /// links are numbered in file order.
    pub fn parse_text(text: &str) -> Result<Self, NetError> {
        let mut lines = content_lines(text);
        let (line_no, header) = lines
            .next()
            .ok_or_else(|| NetError::Parse { line: 0, msg: "missing NODES header".into() })?;
        let (n, m) = parse_header(line_no, &header)?;
        let mut vn = VirtualNetwork::new();
        for _ in 0..n {
            let (line_no, line) = next_line(&mut lines, "NODE")?;
            let (id, cpu) = parse_node_line(line_no, &line)?;
            vn.insert_node(id, cpu)
                .map_err(|e| NetError::Parse { line: line_no, msg: e.to_string() })?;
        }
        for k in 0..m {
            let (line_no, line) = next_line(&mut lines, "LINK")?;
            let (u, v, bw, id) = parse_virtual_link_line(line_no, &line)?;
            vn.insert_link(id.unwrap_or(k), u, v, bw)
                .map_err(|e| NetError::Parse { line: line_no, msg: e.to_string() })?;
        }
        if let Some((line_no, extra)) = lines.next() {
            return Err(NetError::Parse { line: line_no, msg: format!("unexpected trailing line: {extra}") });
        }
        Ok(vn)
    }
}

/// Iterator over (1-based line number, trimmed content), skipping blanks and
/// `#` comments.
pub(crate) fn content_lines(text: &str) -> impl Iterator<Item = (usize, String)> + '_ {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let stripped = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let trimmed = stripped.trim();
        if trimmed.is_empty() {
            None
        } else {
            Some((i + 1, trimmed.to_string()))
        }
    })
}

fn next_line(
    lines: &mut impl Iterator<Item = (usize, String)>,
    expecting: &str,
) -> Result<(usize, String), NetError> {
    lines.next().ok_or_else(|| NetError::Parse {
        line: 0,
        msg: format!("unexpected end of input, expecting {expecting} line"),
    })
}

pub(crate) fn parse_field<T: std::str::FromStr>(line: usize, tok: &str, what: &str) -> Result<T, NetError> {
    tok.parse().map_err(|_| NetError::Parse { line, msg: format!("bad {what}: {tok}") })
}

fn parse_header(line: usize, text: &str) -> Result<(usize, usize), NetError> {
    let toks: Vec<&str> = text.split_whitespace().collect();
    match toks.as_slice() {
        ["NODES", n, "LINKS", m] => {
            Ok((parse_field(line, n, "node count")?, parse_field(line, m, "link count")?))
        }
        _ => Err(NetError::Parse { line, msg: format!("expected NODES <n> LINKS <m>, got: {text}") }),
    }
}

fn parse_node_line(line: usize, text: &str) -> Result<(NodeId, Units), NetError> {
    let toks: Vec<&str> = text.split_whitespace().collect();
    match toks.as_slice() {
        ["NODE", id, cpu] => Ok((parse_field(line, id, "node id")?, parse_field(line, cpu, "cpu units")?)),
        _ => Err(NetError::Parse { line, msg: format!("expected NODE <id> <cpu>, got: {text}") }),
    }
}

fn parse_link_line(line: usize, text: &str) -> Result<(NodeId, NodeId, Units), NetError> {
    let toks: Vec<&str> = text.split_whitespace().collect();
    match toks.as_slice() {
        ["LINK", u, v, bw] => Ok((
            parse_field(line, u, "endpoint")?,
            parse_field(line, v, "endpoint")?,
            parse_field(line, bw, "bw units")?,
        )),
        _ => Err(NetError::Parse { line, msg: format!("expected LINK <u> <v> <bw>, got: {text}") }),
    }
}

fn parse_virtual_link_line(
    line: usize,
    text: &str,
) -> Result<(NodeId, NodeId, Units, Option<LinkId>), NetError> {
    let toks: Vec<&str> = text.split_whitespace().collect();
    match toks.as_slice() {
        ["LINK", u, v, bw] => Ok((
            parse_field(line, u, "endpoint")?,
            parse_field(line, v, "endpoint")?,
            parse_field(line, bw, "bw units")?,
            None,
        )),
        ["LINK", u, v, bw, "ID", id] => Ok((
            parse_field(line, u, "endpoint")?,
            parse_field(line, v, "endpoint")?,
            parse_field(line, bw, "bw units")?,
            Some(parse_field(line, id, "link id")?),
        )),
        _ => Err(NetError::Parse { line, msg: format!("expected LINK <u> <v> <bw> [ID <id>], got: {text}") }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> SubstrateNetwork {
        let mut net = SubstrateNetwork::new();
        for cpu in [100, 80, 60] {
            net.add_node(cpu);
        }
        net.add_link(0, 1, 50).unwrap();
        net.add_link(1, 2, 40).unwrap();
        net.add_link(0, 2, 30).unwrap();
        net
    }

    #[test]
    fn node_ledger_allocate_release_roundtrip() {
        let mut net = triangle();
        net.allocate_node(0, 60).unwrap();
        assert_eq!(net.node(0).cpu_free, 40);
        assert_eq!(net.cpu_allocated(0), 60);
        net.release_node(0, 60).unwrap();
        assert_eq!(net.node(0).cpu_free, 100);
    }

    #[test]
    fn node_allocation_failure_leaves_ledger_untouched() {
        let mut net = triangle();
        net.allocate_node(2, 10).unwrap();
        let err = net.allocate_node(2, 51).unwrap_err();
        assert_eq!(err, NetError::InsufficientCpu { node: 2, requested: 51, free: 50 });
        assert_eq!(net.node(2).cpu_free, 50);
    }

    #[test]
    fn node_over_release_is_rejected() {
        let mut net = triangle();
        net.allocate_node(1, 5).unwrap();
        let err = net.release_node(1, 6).unwrap_err();
        assert_eq!(err, NetError::OverRelease { what: "node", id: 1, amount: 6, allocated: 5 });
        assert_eq!(net.node(1).cpu_free, 75);
    }

    #[test]
    fn path_allocation_is_atomic() {
        let mut net = triangle();
        // Link 2 has only 30 free; the whole two-link allocation must fail
        // without touching link 0.
        let err = net.allocate_path(&[0, 2], 40).unwrap_err();
        assert_eq!(err, NetError::InsufficientBandwidth { link: 2, requested: 40, free: 30 });
        assert_eq!(net.link(0).bw_free, 50);
        assert_eq!(net.link(2).bw_free, 30);

        net.allocate_path(&[0, 1], 35).unwrap();
        assert_eq!(net.link(0).bw_free, 15);
        assert_eq!(net.link(1).bw_free, 5);
        net.release_path(&[0, 1], 35).unwrap();
        assert_eq!(net.link(0).bw_free, 50);
        assert_eq!(net.link(1).bw_free, 40);
    }

    #[test]
    fn broken_walks_are_rejected() {
        let mut net = SubstrateNetwork::new();
        for _ in 0..5 {
            net.add_node(10);
        }
        let a = net.add_link(0, 1, 10).unwrap();
        let b = net.add_link(2, 3, 10).unwrap();
        let err = net.allocate_path(&[a, b], 1).unwrap_err();
        assert_eq!(err, NetError::BrokenPath { link: b });

        // A walk that revisits a node is not simple.
        let c = net.add_link(1, 2, 10).unwrap();
        let d = net.add_link(0, 2, 10).unwrap();
        let err = net.allocate_path(&[a, c, d], 1).unwrap_err();
        assert!(matches!(err, NetError::BrokenPath { .. }));
    }

    #[test]
    fn single_link_and_empty_paths() {
        let mut net = triangle();
        net.allocate_path(&[1], 40).unwrap();
        assert_eq!(net.link(1).bw_free, 0);
        let err = net.allocate_path(&[1], 1).unwrap_err();
        assert_eq!(err, NetError::InsufficientBandwidth { link: 1, requested: 1, free: 0 });
        // Empty path is a no-op by definition.
        net.allocate_path(&[], 999).unwrap();
    }

    #[test]
    fn walk_orientation_does_not_depend_on_endpoint_order() {
        let mut net = SubstrateNetwork::new();
        for _ in 0..4 {
            net.add_node(1);
        }
        let a = net.add_link(2, 1, 10).unwrap();
        let b = net.add_link(1, 0, 10).unwrap();
        let c = net.add_link(0, 3, 10).unwrap();
        assert_eq!(net.walk_nodes(&[a, b, c]).unwrap(), vec![2, 1, 0, 3]);
        assert_eq!(net.walk_nodes(&[c, b, a]).unwrap(), vec![3, 0, 1, 2]);
    }

    #[test]
    fn parallel_links_and_self_loops_rejected() {
        let mut net = triangle();
        assert!(matches!(net.add_link(1, 0, 9), Err(NetError::InvalidTopology(_))));
        assert!(matches!(net.add_link(2, 2, 9), Err(NetError::InvalidTopology(_))));
        assert!(matches!(net.add_link(0, 7, 9), Err(NetError::UnknownNode(7))));
    }

    #[test]
    fn substrate_text_roundtrip() {
        let net = triangle();
        let text = net.write_text();
        let back = SubstrateNetwork::parse_text(&text).unwrap();
        assert_eq!(net, back);
        // Comments and blank lines are ignored.
        let commented = format!("# capacity snapshot\n\n{text}# trailing\n");
        assert_eq!(SubstrateNetwork::parse_text(&commented).unwrap(), net);
    }

    #[test]
    fn substrate_parse_rejects_sparse_ids() {
        let text = "NODES 2 LINKS 0\nNODE 0 5\nNODE 2 5\n";
        assert!(matches!(SubstrateNetwork::parse_text(text), Err(NetError::Parse { .. })));
    }

    #[test]
    fn virtual_network_mutation_primitives() {
        let mut vn = VirtualNetwork::new();
        for (id, d) in [(0, 10), (1, 15), (2, 20)] {
            vn.insert_node(id, d).unwrap();
        }
        vn.insert_link(0, 0, 1, 10).unwrap();
        vn.insert_link(1, 1, 2, 15).unwrap();
        assert!(vn.validate().is_ok());
        assert_eq!(vn.total_cpu_demand(), 45);
        assert_eq!(vn.total_bw_demand(), 25);

        let removed = vn.remove_node(1).unwrap();
        assert_eq!(removed, vec![0, 1]);
        assert!(!vn.is_connected());
        assert_eq!(vn.next_node_id(), 3);
        vn.insert_link(2, 0, 2, 7).unwrap();
        assert!(vn.validate().is_ok());
        assert_eq!(vn.next_link_id(), 3);
    }

    #[test]
    fn virtual_text_roundtrip_with_sparse_ids() {
        let mut vn = VirtualNetwork::new();
        vn.insert_node(0, 10).unwrap();
        vn.insert_node(3, 20).unwrap();
        vn.insert_link(5, 0, 3, 8).unwrap();
        let text = vn.write_text();
        let back = VirtualNetwork::parse_text(&text).unwrap();
        assert_eq!(vn, back);
    }

    #[test]
    fn virtual_parse_without_explicit_link_ids() {
        let text = "NODES 2 LINKS 1\nNODE 0 4\nNODE 1 6\nLINK 0 1 3\n";
        let vn = VirtualNetwork::parse_text(text).unwrap();
        assert_eq!(vn.link_demand(0), Some(3));
        assert_eq!(vn.link_endpoints(0), Some((0, 1)));
    }
}
