//! Fitness matrix, the scalar packing objective, and consolidation.
//!
//! The fitness machinery scores how much slack the substrate keeps around
//! the currently embedded virtual elements. Lower is tighter packing:
//! consolidation hill-climbs single-virtual-node relocations, never letting
//! the overall fitness value rise, so load drains off lightly used nodes
//! and departures leave whole nodes free.

use std::collections::{BTreeMap, BTreeSet};

use crate::embedding::{route_and_allocate, ActiveEmbeddings, Embedding, NodeAssignment};
use crate::substrate::{LinkId, NodeId, SubstrateNetwork, Units, VirtualNetwork};

/// Identifies one column of the fitness matrix: an embedded virtual node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitnessColumn {
    pub vnr_id: usize,
    pub vnode: NodeId,
    pub host: NodeId,
}

/// Snapshot of the fitness machinery at one instant.
///
/// `f` has one row per physical node and one column per embedded virtual
/// node; a finite entry is the node's remaining CPU, `None` is the
/// infeasible sentinel for exhausted nodes (it never enters any sum — the
/// hosting gate in the alpha definition already excludes non-host rows).
/// `ad` is the symmetric free-bandwidth adjacency with `None` on the
/// diagonal and between unlinked pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct FitnessState {
    pub columns: Vec<FitnessColumn>,
    pub f: Vec<Vec<Option<Units>>>,
    pub ad: Vec<Vec<Option<Units>>>,
    pub alpha: Vec<f64>,
    pub beta: f64,
}

/// The scalar consolidation objective: per embedded virtual node, the worst
/// (smallest) slack ratio among its host and the physical links carrying
/// its incident virtual links, summed over all embedded virtual nodes.
/// Reported alongside the overall fitness it is minimized through.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitnessObjective {
    pub value: f64,
    pub beta: f64,
}

/// Builds the full fitness state from scratch. Always recomputed, never
/// maintained incrementally, so there is a single source of truth.
pub fn build_fitness_matrix(net: &SubstrateNetwork, active: &ActiveEmbeddings) -> FitnessState {
    let columns: Vec<FitnessColumn> = active
        .iter()
        .flat_map(|emb| {
            emb.node_map.iter().map(|(&vnode, a)| FitnessColumn {
                vnr_id: emb.vnr_id,
                vnode,
                host: a.host,
            })
        })
        .collect();

    let f: Vec<Vec<Option<Units>>> = net
        .nodes()
        .iter()
        .map(|n| {
            let entry = (n.cpu_free > 0).then_some(n.cpu_free);
            vec![entry; columns.len()]
        })
        .collect();

    let n = net.node_count();
    let mut ad = vec![vec![None; n]; n];
    for l in net.links() {
        let (u, v) = l.endpoints;
        ad[u][v] = Some(l.bw_free);
        ad[v][u] = Some(l.bw_free);
    }

    let alpha: Vec<f64> = columns.iter().map(|c| host_ratio(net, c.host)).collect();
    let beta = overall_fitness(net, active);
    FitnessState { columns, f, ad, alpha, beta }
}

/// Free-over-capacity CPU ratio of one physical node; 0 when exhausted
/// (the sentinel contributes nothing).
fn host_ratio(net: &SubstrateNetwork, host: NodeId) -> f64 {
    let n = net.node(host);
    if n.cpu_free == 0 || n.cpu_capacity == 0 {
        0.0
    } else {
        n.cpu_free as f64 / n.cpu_capacity as f64
    }
}

/// The fitness value of column `j`: the hosting gate reduces the row sum to
/// the single remaining-over-capacity ratio of the host.
pub fn fitness_value(net: &SubstrateNetwork, state: &FitnessState, j: usize) -> f64 {
    host_ratio(net, state.columns[j].host)
}

/// Physical links used by one virtual link, deduplicated across split paths.
fn used_physical_links(paths: &[crate::embedding::PathAssignment]) -> BTreeSet<LinkId> {
    paths.iter().flat_map(|p| p.links.iter().copied()).collect()
}

/// The overall fitness value: the sum of every embedded virtual node's host
/// slack ratio plus, for each (physical link, virtual link) pair where the
/// physical link carries part of the virtual link, the physical link's
/// free-over-capacity ratio.
pub fn overall_fitness(net: &SubstrateNetwork, active: &ActiveEmbeddings) -> f64 {
    let mut beta = 0.0;
    for emb in active.iter() {
        for a in emb.node_map.values() {
            beta += host_ratio(net, a.host);
        }
        for paths in emb.link_map.values() {
            for pl in used_physical_links(paths) {
                let l = net.link(pl);
                if l.bw_capacity > 0 {
                    beta += l.bw_free as f64 / l.bw_capacity as f64;
                }
            }
        }
    }
    beta
}

/// Evaluates the consolidation objective. Each embedded virtual node
/// contributes the minimum slack ratio over its own placement gates: the
/// host's CPU ratio and the bandwidth ratio of every physical link carrying
/// one of its incident virtual links.
pub fn objective(
    net: &SubstrateNetwork,
    active: &ActiveEmbeddings,
    vns: &BTreeMap<usize, VirtualNetwork>,
) -> FitnessObjective {
    let mut value = 0.0;
    for emb in active.iter() {
        let vn = &vns[&emb.vnr_id];
        for (&vnode, a) in &emb.node_map {
            let mut worst = host_ratio(net, a.host);
            for vl in vn.incident_links(vnode) {
                if let Some(paths) = emb.link_map.get(&vl) {
                    for pl in used_physical_links(paths) {
                        let l = net.link(pl);
                        let ratio = if l.bw_capacity == 0 {
                            0.0
                        } else {
                            l.bw_free as f64 / l.bw_capacity as f64
                        };
                        worst = worst.min(ratio);
                    }
                }
            }
            value += worst;
        }
    }
    FitnessObjective { value, beta: overall_fitness(net, active) }
}

/// What one consolidation call did.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsolidationReport {
    pub moves: usize,
    pub passes: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    /// Overall fitness after each accepted move; never increasing.
    pub beta_trace: Vec<f64>,
}

/// Hill-climbs single-virtual-node relocations (across all active VNRs)
/// accepting any move that does not worsen the overall fitness value and
/// keeps every constraint satisfied, re-routing the moved node's incident
/// links. One pass visits each (virtual node, target host) combination
/// once, so a tie move fires at most once per pair per pass; passes repeat
/// while strict improvements keep coming, which bounds the loop because the
/// fitness value strictly decreases across continuing passes.
pub fn consolidate(
    net: &mut SubstrateNetwork,
    active: &mut ActiveEmbeddings,
    vns: &BTreeMap<usize, VirtualNetwork>,
    k_paths: usize,
) -> ConsolidationReport {
    let beta_start = overall_fitness(net, active);
    let mut beta = beta_start;
    let mut report = ConsolidationReport {
        moves: 0,
        passes: 0,
        beta_start,
        beta_end: beta_start,
        beta_trace: Vec::new(),
    };
    loop {
        report.passes += 1;
        let mut improved = false;
        let combos: Vec<(usize, NodeId)> = active
            .iter()
            .flat_map(|e| e.node_map.keys().map(move |&v| (e.vnr_id, v)))
            .collect();
        for (vnr_id, vnode) in combos {
            for target in 0..net.node_count() {
                let Some(undo) = try_relocate(net, active, vns, vnr_id, vnode, target, k_paths)
                else {
                    continue;
                };
                let after = overall_fitness(net, active);
                if after <= beta {
                    if after < beta {
                        improved = true;
                    }
                    beta = after;
                    report.moves += 1;
                    report.beta_trace.push(after);
                } else {
                    let (net_snap, emb_snap) = undo;
                    *net = net_snap;
                    *active.get_mut(vnr_id).unwrap() = emb_snap;
                }
            }
        }
        if !improved {
            break;
        }
    }
    report.beta_end = beta;
    report
}

/// Attempts to move one virtual node onto `target`, re-routing its incident
/// virtual links. Returns the pre-move snapshots on success so the caller
/// can undo; `None` means the move was infeasible and nothing changed.
fn try_relocate(
    net: &mut SubstrateNetwork,
    active: &mut ActiveEmbeddings,
    vns: &BTreeMap<usize, VirtualNetwork>,
    vnr_id: usize,
    vnode: NodeId,
    target: NodeId,
    k_paths: usize,
) -> Option<(SubstrateNetwork, Embedding)> {
    let vn = &vns[&vnr_id];
    let emb = active.get(vnr_id).expect("relocating an active embedding");
    let current = emb.node_map[&vnode];
    // Injectivity within the VNR forbids targets this request already uses.
    if target == current.host || emb.uses_host(target) {
        return None;
    }
    let demand = vn.node_demand(vnode).expect("embedded node exists in its VN");
    debug_assert_eq!(demand, current.cpu, "ledger allocation tracks current demand");

    let net_snap = net.clone();
    let emb_snap = emb.clone();
    let emb = active.get_mut(vnr_id).unwrap();

    let rollback = |net: &mut SubstrateNetwork, active: &mut ActiveEmbeddings| {
        *net = net_snap.clone();
        *active.get_mut(vnr_id).unwrap() = emb_snap.clone();
    };

    net.release_node(current.host, current.cpu).expect("releasing recorded allocation");
    emb.node_map.remove(&vnode);
    let incident = vn.incident_links(vnode);
    for &l in &incident {
        let paths = emb.link_map.remove(&l).expect("embedded link has paths");
        for p in &paths {
            net.release_path(&p.links, p.bw).expect("releasing recorded allocation");
        }
    }

    if net.node(target).cpu_free < demand {
        rollback(net, active);
        return None;
    }
    net.allocate_node(target, demand).expect("checked free");
    let emb = active.get_mut(vnr_id).unwrap();
    emb.node_map.insert(vnode, NodeAssignment { host: target, cpu: demand });
    for &l in &incident {
        let (u, v) = vn.link_endpoints(l).unwrap();
        let other = if u == vnode { v } else { u };
        let other_host = active.get(vnr_id).unwrap().node_map[&other].host;
        let bw = vn.link_demand(l).unwrap();
        match route_and_allocate(net, target, other_host, bw, k_paths) {
            Ok(paths) => {
                active.get_mut(vnr_id).unwrap().link_map.insert(l, paths);
            }
            Err(()) => {
                rollback(net, active);
                return None;
            }
        }
    }
    Some((net_snap, emb_snap))
}
