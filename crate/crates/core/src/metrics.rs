//! Revenue/cost accounting and the run ledger metric curves replay from.
//!
//! Revenue measures what a request asks for; cost measures what the
//! substrate actually spends hosting it (bandwidth counts once per physical
//! hop). A [`RunLedger`] is the append-only event log of a simulation run;
//! every metric curve is a pure function of the ledger, so replaying a
//! serialized ledger reproduces the curves exactly.

use std::fmt::Write as _;

use thiserror::Error;

use crate::embedding::Embedding;
use crate::substrate::{content_lines, LinkId, Time, Units, VirtualNetwork};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    /// Cost was asked for a virtual link with no recorded paths.
    #[error("virtual link {link} has no path assignment")]
    UnmappedLink { link: LinkId },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("ledger invariant broken: {0}")]
    Invalid(String),
}

/// Revenue of a request: total CPU demand plus total bandwidth demand.
pub fn revenue(vn: &VirtualNetwork) -> Units {
    vn.total_cpu_demand() + vn.total_bw_demand()
}

/// Embedding cost: total CPU demand plus, per virtual link, the bandwidth
/// allocated on every physical link it crosses (a share over h hops counts
/// h times). Cost equals revenue exactly when every path is one hop.
pub fn cost(vn: &VirtualNetwork, emb: &Embedding) -> Result<Units, MetricsError> {
    let mut total = vn.total_cpu_demand();
    for vlink in vn.links() {
        let paths = emb
            .link_map
            .get(&vlink.id)
            .filter(|p| !p.is_empty())
            .ok_or(MetricsError::UnmappedLink { link: vlink.id })?;
        for p in paths {
            total += p.bw * p.links.len() as Units;
        }
    }
    Ok(total)
}

/// One row of the run event log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LedgerEvent {
    Arrived { t: Time, vnr: usize },
    /// Admission succeeded; revenue and cost as embedded at arrival.
    Accepted { t: Time, vnr: usize, revenue: Units, cost: Units },
    Rejected { t: Time, vnr: usize },
    /// A mutation or migration changed what the request contributes from
    /// this instant on. Deltas are signed.
    Adjusted { t: Time, vnr: usize, revenue_delta: i64, cost_delta: i64 },
    Departed { t: Time, vnr: usize },
}

impl LedgerEvent {
    pub fn at(&self) -> Time {
        match *self {
            LedgerEvent::Arrived { t, .. }
            | LedgerEvent::Accepted { t, .. }
            | LedgerEvent::Rejected { t, .. }
            | LedgerEvent::Adjusted { t, .. }
            | LedgerEvent::Departed { t, .. } => t,
        }
    }
}

/// Append-only event log of one run. All metric operations take a horizon
/// `t` and fold the events with timestamp at or below it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunLedger {
    events: Vec<LedgerEvent>,
}

impl RunLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, e: LedgerEvent) {
        debug_assert!(self.events.last().is_none_or(|last| last.at() <= e.at()));
        self.events.push(e);
    }

    pub fn events(&self) -> &[LedgerEvent] {
        &self.events
    }

    fn fold<T: Default>(&self, t: Time, mut f: impl FnMut(&mut T, &LedgerEvent)) -> T {
        let mut acc = T::default();
        for e in self.events.iter().take_while(|e| e.at() <= t) {
            f(&mut acc, e);
        }
        acc
    }

    /// Revenue accrued in (0, t]: acceptances plus signed adjustments.
    pub fn cumulative_revenue(&self, t: Time) -> i64 {
        self.fold(t, |acc: &mut i64, e| match *e {
            LedgerEvent::Accepted { revenue, .. } => *acc += revenue as i64,
            LedgerEvent::Adjusted { revenue_delta, .. } => *acc += revenue_delta,
            _ => {}
        })
    }

    pub fn cumulative_cost(&self, t: Time) -> i64 {
        self.fold(t, |acc: &mut i64, e| match *e {
            LedgerEvent::Accepted { cost, .. } => *acc += cost as i64,
            LedgerEvent::Adjusted { cost_delta, .. } => *acc += cost_delta,
            _ => {}
        })
    }

    pub fn arrived(&self, t: Time) -> usize {
        self.fold(t, |acc: &mut usize, e| {
            if matches!(e, LedgerEvent::Arrived { .. }) {
                *acc += 1;
            }
        })
    }

    pub fn accepted(&self, t: Time) -> usize {
        self.fold(t, |acc: &mut usize, e| {
            if matches!(e, LedgerEvent::Accepted { .. }) {
                *acc += 1;
            }
        })
    }

    /// Requests embedded and not yet departed at time t.
    pub fn active(&self, t: Time) -> usize {
        self.fold(t, |acc: &mut i64, e| match e {
            LedgerEvent::Accepted { .. } => *acc += 1,
            LedgerEvent::Departed { .. } => *acc -= 1,
            _ => {}
        }) as usize
    }

    /// Cumulative revenue divided by elapsed time; absent at t = 0.
    pub fn long_term_average_revenue(&self, t: Time) -> Option<f64> {
        (t > 0).then(|| self.cumulative_revenue(t) as f64 / t as f64)
    }

    /// Cumulative cost divided by elapsed time; absent at t = 0.
    pub fn long_term_average_cost(&self, t: Time) -> Option<f64> {
        (t > 0).then(|| self.cumulative_cost(t) as f64 / t as f64)
    }

    /// Cumulative revenue over cumulative cost; absent while cost is zero.
    pub fn revenue_cost_ratio(&self, t: Time) -> Option<f64> {
        let cost = self.cumulative_cost(t);
        (cost > 0).then(|| self.cumulative_revenue(t) as f64 / cost as f64)
    }

    /// Accepted over arrived; absent before the first arrival.
    pub fn acceptance_rate(&self, t: Time) -> Option<f64> {
        let arr = self.arrived(t);
        (arr > 0).then(|| self.accepted(t) as f64 / arr as f64)
    }

    /// Revenue accrued in the window (t - w, t], divided by w.
    pub fn windowed_revenue(&self, t: Time, window: Time) -> Option<f64> {
        if window == 0 {
            return None;
        }
        let start = t.saturating_sub(window);
        let in_window: i64 = self.cumulative_revenue(t) - self.cumulative_revenue(start);
        Some(in_window as f64 / window as f64)
    }

    /// Checks the ledger invariants: non-decreasing timestamps, acceptances
    /// never outrunning arrivals, and per-request running revenue staying
    /// at or below running cost.
    pub fn validate(&self) -> Result<(), MetricsError> {
        let mut last_t = 0;
        let mut arrived = 0usize;
        let mut accepted = 0usize;
        let mut per_vnr: std::collections::BTreeMap<usize, (i64, i64)> = Default::default();
        for e in &self.events {
            if e.at() < last_t {
                return Err(MetricsError::Invalid(format!("timestamps regress at {e:?}")));
            }
            last_t = e.at();
            match *e {
                LedgerEvent::Arrived { .. } => arrived += 1,
                LedgerEvent::Accepted { vnr, revenue, cost, .. } => {
                    accepted += 1;
                    if accepted > arrived {
                        return Err(MetricsError::Invalid("acceptances outrun arrivals".into()));
                    }
                    per_vnr.insert(vnr, (revenue as i64, cost as i64));
                }
                LedgerEvent::Adjusted { vnr, revenue_delta, cost_delta, .. } => {
                    let entry = per_vnr.entry(vnr).or_insert((0, 0));
                    entry.0 += revenue_delta;
                    entry.1 += cost_delta;
                }
                _ => {}
            }
            if let LedgerEvent::Accepted { vnr, .. } | LedgerEvent::Adjusted { vnr, .. } = *e {
                let (r, c) = per_vnr[&vnr];
                if r > c {
                    return Err(MetricsError::Invalid(format!(
                        "vnr {vnr}: revenue {r} exceeds cost {c}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// One line per event, for record/replay.
    pub fn write_text(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            let _ = match *e {
                LedgerEvent::Arrived { t, vnr } => writeln!(out, "ARRIVED {t} {vnr}"),
                LedgerEvent::Accepted { t, vnr, revenue, cost } => {
                    writeln!(out, "ACCEPTED {t} {vnr} {revenue} {cost}")
                }
                LedgerEvent::Rejected { t, vnr } => writeln!(out, "REJECTED {t} {vnr}"),
                LedgerEvent::Adjusted { t, vnr, revenue_delta, cost_delta } => {
                    writeln!(out, "ADJUSTED {t} {vnr} {revenue_delta} {cost_delta}")
                }
                LedgerEvent::Departed { t, vnr } => writeln!(out, "DEPARTED {t} {vnr}"),
            };
        }
        out
    }

    pub fn parse_text(text: &str) -> Result<Self, MetricsError> {
        let mut ledger = RunLedger::new();
        for (line, content) in content_lines(text) {
            let toks: Vec<&str> = content.split_whitespace().collect();
            let field = |tok: &str| -> Result<i64, MetricsError> {
                tok.parse().map_err(|_| MetricsError::Parse { line, msg: format!("bad number: {tok}") })
            };
            let e = match toks.as_slice() {
                ["ARRIVED", t, vnr] => LedgerEvent::Arrived {
                    t: field(t)? as Time,
                    vnr: field(vnr)? as usize,
                },
                ["ACCEPTED", t, vnr, r, c] => LedgerEvent::Accepted {
                    t: field(t)? as Time,
                    vnr: field(vnr)? as usize,
                    revenue: field(r)? as Units,
                    cost: field(c)? as Units,
                },
                ["REJECTED", t, vnr] => LedgerEvent::Rejected {
                    t: field(t)? as Time,
                    vnr: field(vnr)? as usize,
                },
                ["ADJUSTED", t, vnr, dr, dc] => LedgerEvent::Adjusted {
                    t: field(t)? as Time,
                    vnr: field(vnr)? as usize,
                    revenue_delta: field(dr)?,
                    cost_delta: field(dc)?,
                },
                ["DEPARTED", t, vnr] => LedgerEvent::Departed {
                    t: field(t)? as Time,
                    vnr: field(vnr)? as usize,
                },
                _ => {
                    return Err(MetricsError::Parse { line, msg: format!("unrecognized event: {content}") });
                }
            };
            ledger.events.push(e);
        }
        Ok(ledger)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{NodeAssignment, PathAssignment};
    use std::collections::BTreeMap;

    fn vn_with(nodes: &[(usize, Units)], links: &[(usize, usize, usize, Units)]) -> VirtualNetwork {
        let mut vn = VirtualNetwork::new();
        for &(id, d) in nodes {
            vn.insert_node(id, d).unwrap();
        }
        for &(id, u, v, d) in links {
            vn.insert_link(id, u, v, d).unwrap();
        }
        vn
    }

    #[test]
    fn revenue_sums_demands() {
        // Three nodes 10/15/20 and links 10/15: revenue 70.
        let vn = vn_with(&[(0, 10), (1, 15), (2, 20)], &[(0, 0, 1, 10), (1, 1, 2, 15)]);
        assert_eq!(revenue(&vn), 70);
        assert_eq!(revenue(&VirtualNetwork::new()), 0);
        let single = vn_with(&[(0, 7)], &[]);
        assert_eq!(revenue(&single), 7);
    }

    fn emb_with(paths: &[(usize, &[(usize, Units)])]) -> Embedding {
        // Node assignments are irrelevant to cost; leave a dummy map.
        let mut link_map = BTreeMap::new();
        for &(l, shares) in paths {
            link_map.insert(
                l,
                shares
                    .iter()
                    .map(|&(hops, bw)| PathAssignment { links: vec![0; hops], bw })
                    .collect(),
            );
        }
        Embedding {
            vnr_id: 0,
            node_map: BTreeMap::from([(0, NodeAssignment { host: 0, cpu: 1 })]),
            link_map,
        }
    }

    #[test]
    fn cost_counts_bandwidth_per_hop() {
        let vn = vn_with(&[(0, 10), (1, 15), (2, 20)], &[(0, 0, 1, 10), (1, 1, 2, 15)]);
        // Both links over 1 hop: cost equals revenue.
        let emb = emb_with(&[(0, &[(1, 10)]), (1, &[(1, 15)])]);
        assert_eq!(cost(&vn, &emb).unwrap(), 70);

        // One link demand 5 over 3 hops adds 10 over its 1-hop cost.
        let vn2 = vn_with(&[(0, 1), (1, 1)], &[(0, 0, 1, 5)]);
        let short = emb_with(&[(0, &[(1, 5)])]);
        let long = emb_with(&[(0, &[(3, 5)])]);
        assert_eq!(cost(&vn2, &long).unwrap() - cost(&vn2, &short).unwrap(), 10);

        // Split 6 + 4 over a 2-hop and a 3-hop route: link term 6*2 + 4*3.
        let vn3 = vn_with(&[(0, 1), (1, 1)], &[(0, 0, 1, 10)]);
        let split = emb_with(&[(0, &[(2, 6), (3, 4)])]);
        assert_eq!(cost(&vn3, &split).unwrap(), 2 + 24);

        let missing = emb_with(&[]);
        assert_eq!(cost(&vn3, &missing), Err(MetricsError::UnmappedLink { link: 0 }));
    }

    #[test]
    fn average_revenue_over_time() {
        let mut ledger = RunLedger::new();
        ledger.push(LedgerEvent::Arrived { t: 3, vnr: 0 });
        ledger.push(LedgerEvent::Accepted { t: 3, vnr: 0, revenue: 70, cost: 90 });
        assert_eq!(ledger.long_term_average_revenue(100), Some(0.7));
        assert_eq!(ledger.long_term_average_revenue(0), None);

        let empty = RunLedger::new();
        assert_eq!(empty.long_term_average_revenue(50), Some(0.0));
        assert_eq!(empty.acceptance_rate(50), None);
        assert_eq!(empty.revenue_cost_ratio(50), None);
    }

    #[test]
    fn five_request_trace_matches_hand_sums() {
        // Arrivals at 10,20,30,40,50; two rejections; one departure at 45;
        // one mutation adjustment at 35.
        let mut ledger = RunLedger::new();
        let rows = [
            (10, 0, Some((100, 120))),
            (20, 1, None),
            (30, 2, Some((50, 50))),
            (40, 3, None),
            (50, 4, Some((30, 60))),
        ];
        for (t, vnr, fate) in rows {
            ledger.push(LedgerEvent::Arrived { t, vnr });
            match fate {
                Some((revenue, cost)) => {
                    ledger.push(LedgerEvent::Accepted { t, vnr, revenue, cost })
                }
                None => ledger.push(LedgerEvent::Rejected { t, vnr }),
            }
            if t == 30 {
                ledger.push(LedgerEvent::Adjusted { t: 35, vnr: 0, revenue_delta: -20, cost_delta: -40 });
            }
            if t == 40 {
                ledger.push(LedgerEvent::Departed { t: 45, vnr: 0 });
            }
        }
        ledger.validate().unwrap();
        // Hand sums: revenue 100+50=150, then -20 at 35, +30 at 50 -> 160.
        assert_eq!(ledger.cumulative_revenue(34), 150);
        assert_eq!(ledger.cumulative_revenue(50), 160);
        assert_eq!(ledger.cumulative_cost(50), 120 + 50 - 40 + 60);
        assert_eq!(ledger.acceptance_rate(50), Some(3.0 / 5.0));
        assert_eq!(ledger.revenue_cost_ratio(50), Some(160.0 / 190.0));
        assert_eq!(ledger.active(44), 2);
        assert_eq!(ledger.active(45), 1);
        assert_eq!(ledger.long_term_average_revenue(50), Some(3.2));
        // Window (30, 50]: acceptances at 30 are excluded, 50 included, and
        // the adjustment at 35 counts.
        assert_eq!(ledger.windowed_revenue(50, 20), Some((30.0 - 20.0) / 20.0));
    }

    #[test]
    fn ledger_text_roundtrip_replays_identically() {
        let mut ledger = RunLedger::new();
        ledger.push(LedgerEvent::Arrived { t: 1, vnr: 0 });
        ledger.push(LedgerEvent::Accepted { t: 1, vnr: 0, revenue: 42, cost: 55 });
        ledger.push(LedgerEvent::Adjusted { t: 7, vnr: 0, revenue_delta: 5, cost_delta: 9 });
        ledger.push(LedgerEvent::Departed { t: 12, vnr: 0 });
        let text = ledger.write_text();
        let back = RunLedger::parse_text(&text).unwrap();
        assert_eq!(ledger, back);
        for t in 0..15 {
            assert_eq!(ledger.long_term_average_revenue(t), back.long_term_average_revenue(t));
            assert_eq!(ledger.revenue_cost_ratio(t), back.revenue_cost_ratio(t));
            assert_eq!(ledger.acceptance_rate(t), back.acceptance_rate(t));
            assert_eq!(ledger.active(t), back.active(t));
        }
    }

    #[test]
    fn validate_catches_broken_invariants() {
        let mut ledger = RunLedger::new();
        // Acceptance without arrival.
        ledger.events.push(LedgerEvent::Accepted { t: 1, vnr: 0, revenue: 10, cost: 10 });
        assert!(matches!(ledger.validate(), Err(MetricsError::Invalid(_))));

        // Revenue above cost.
        let mut ledger = RunLedger::new();
        ledger.events.push(LedgerEvent::Arrived { t: 1, vnr: 0 });
        ledger.events.push(LedgerEvent::Accepted { t: 1, vnr: 0, revenue: 10, cost: 9 });
        assert!(matches!(ledger.validate(), Err(MetricsError::Invalid(_))));

        // Regressing timestamps.
        let mut ledger = RunLedger::new();
        ledger.events.push(LedgerEvent::Arrived { t: 5, vnr: 0 });
        ledger.events.push(LedgerEvent::Arrived { t: 4, vnr: 1 });
        assert!(matches!(ledger.validate(), Err(MetricsError::Invalid(_))));
    }
}
