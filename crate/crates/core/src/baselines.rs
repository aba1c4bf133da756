//! Non-learning node-placement strategies used as comparison curves.
//!
//! Every strategy emits only feasible, injective node maps; the link stage
//! is the shared routing in [`crate::embedding`], so strategies differ only
//! in which hosts they pick.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::embedding::{NodePlacer, PlaceError};
use crate::substrate::{NodeId, SubstrateNetwork, Units, VirtualNetwork};
use crate::workload::{stream_rng, STREAM_PLACER};

fn feasible_hosts<'a>(
    net: &'a SubstrateNetwork,
    used: &'a BTreeMap<NodeId, NodeId>,
    demand: Units,
) -> impl Iterator<Item = NodeId> + 'a {
    let taken: Vec<NodeId> = used.values().copied().collect();
    net.nodes()
        .iter()
        .filter(move |n| n.cpu_free >= demand && !taken.contains(&n.id))
        .map(|n| n.id)
}

/// Virtual nodes ordered by demand descending, ties by id. With a single
/// capacity dimension this order makes greedy host assignment complete:
/// if any injective feasible assignment exists, demand-descending greedy
/// finds one.
pub(crate) fn by_demand_desc(vn: &VirtualNetwork) -> Vec<(NodeId, Units)> {
    let mut nodes: Vec<(NodeId, Units)> = vn.nodes().map(|n| (n.id, n.cpu_demand)).collect();
    nodes.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    nodes
}

/// Rank-and-pick baseline: physical nodes sorted once by the product of
/// free CPU and the sum of incident free bandwidth, then each virtual node
/// (largest demand first) takes the highest-ranked feasible host.
///
/// This is a deliberately simplified stand-in for resource-times-topology
/// node ranking, not a random-walk importance measure, hence the
/// "noderank-lite" label in outputs.
pub struct NodeRankPlacer;

impl NodeRankPlacer {
    /// Score in two factors so huge capacities cannot overflow.
    fn rank(net: &SubstrateNetwork, node: NodeId) -> u128 {
        let bw_sum: u128 = net
            .incident_links(node)
            .iter()
            .map(|&l| net.link(l).bw_free as u128)
            .sum();
        net.node(node).cpu_free as u128 * bw_sum
    }
}

impl NodePlacer for NodeRankPlacer {
    fn name(&self) -> &str {
        "noderank-lite"
    }

    fn place(
        &mut self,
        net: &SubstrateNetwork,
        vn: &VirtualNetwork,
    ) -> Result<BTreeMap<NodeId, NodeId>, PlaceError> {
        let mut ranked: Vec<NodeId> = (0..net.node_count()).collect();
        // Highest rank first; lowest id wins ties.
        ranked.sort_by(|&a, &b| Self::rank(net, b).cmp(&Self::rank(net, a)).then(a.cmp(&b)));
        let mut map = BTreeMap::new();
        for (v, demand) in by_demand_desc(vn) {
            let host = ranked
                .iter()
                .copied()
                .find(|&p| net.node(p).cpu_free >= demand && !map.values().any(|&h| h == p))
                .ok_or(PlaceError::NoNodeCandidate)?;
            map.insert(v, host);
        }
        Ok(map)
    }
}

/// Control baseline: each virtual node (largest demand first) takes the
/// feasible host with the most free CPU, ties by lowest id.
pub struct GreedyPlacer;

impl NodePlacer for GreedyPlacer {
    fn name(&self) -> &str {
        "greedy"
    }

    fn place(
        &mut self,
        net: &SubstrateNetwork,
        vn: &VirtualNetwork,
    ) -> Result<BTreeMap<NodeId, NodeId>, PlaceError> {
        let mut map = BTreeMap::new();
        for (v, demand) in by_demand_desc(vn) {
            let host = feasible_hosts(net, &map, demand)
                .max_by(|&a, &b| {
                    net.node(a).cpu_free.cmp(&net.node(b).cpu_free).then(b.cmp(&a))
                })
                .ok_or(PlaceError::NoNodeCandidate)?;
            map.insert(v, host);
        }
        Ok(map)
    }
}

/// Lower-bound control: a uniformly random feasible host per virtual node.
pub struct RandomPlacer {
    rng: ChaCha8Rng,
}

impl RandomPlacer {
    pub fn new(seed: u64) -> Self {
        Self { rng: stream_rng(seed, STREAM_PLACER) }
    }
}

impl NodePlacer for RandomPlacer {
    fn name(&self) -> &str {
        "random"
    }

    fn place(
        &mut self,
        net: &SubstrateNetwork,
        vn: &VirtualNetwork,
    ) -> Result<BTreeMap<NodeId, NodeId>, PlaceError> {
        let mut map = BTreeMap::new();
        for (v, demand) in by_demand_desc(vn) {
            let candidates: Vec<NodeId> = feasible_hosts(net, &map, demand).collect();
            if candidates.is_empty() {
                return Err(PlaceError::NoNodeCandidate);
            }
            map.insert(v, candidates[self.rng.random_range(0..candidates.len())]);
        }
        Ok(map)
    }
}

/// Consolidation-minded baseline: each virtual node takes the feasible host
/// whose free-to-capacity ratio after placement would be smallest, packing
/// load onto already-busy nodes and keeping others fully free.
pub struct FitnessPlacer;

impl NodePlacer for FitnessPlacer {
    fn name(&self) -> &str {
        "fitness-consolidate"
    }

    fn place(
        &mut self,
        net: &SubstrateNetwork,
        vn: &VirtualNetwork,
    ) -> Result<BTreeMap<NodeId, NodeId>, PlaceError> {
        let mut map = BTreeMap::new();
        for (v, demand) in by_demand_desc(vn) {
            let host = feasible_hosts(net, &map, demand)
                .min_by(|&a, &b| {
                    let ratio = |p: NodeId| {
                        let n = net.node(p);
                        (n.cpu_free - demand) as f64 / n.cpu_capacity.max(1) as f64
                    };
                    ratio(a).total_cmp(&ratio(b)).then(a.cmp(&b))
                })
                .ok_or(PlaceError::NoNodeCandidate)?;
            map.insert(v, host);
        }
        Ok(map)
    }
}
