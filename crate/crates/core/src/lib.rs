//! Virtual network embedding laboratory.
//!
//! The crate models a physical (substrate) network that hosts a rolling
//! population of virtual network requests. Each request asks for CPU on its
//! virtual nodes and bandwidth on its virtual links; an embedding maps every
//! virtual node onto a distinct physical node and every virtual link onto one
//! or more physical paths. Requests arrive over time, live for a while, may
//! mutate their topology or demands mid-lifetime, and depart.
//!
//! Module layout, bottom up:
//!
//! * [`substrate`]: graphs and the exact integer resource ledger.
//! * [`workload`]: seeded generators for substrates, request streams, and
//!   mid-lifetime mutation events, plus the text formats for both.
//! * [`embedding`]: the embedding ledger itself: admission, eviction,
//!   mutation deltas, and the feasibility/conservation sweeps.
//! * [`fitness`]: the fitness matrix over active embeddings, the scalar
//!   consolidation objective, and the hill-climbing consolidator.
//! * [`gcn`]: spectral graph convolution (Laplacian, Fourier pair,
//!   polynomial filters) and a small dense network with hand-written
//!   gradients.
//! * [`agent`]: actor-critic placement policy over the substrate, trained
//!   asynchronously by several workers against a shared parameter store.
//! * [`baselines`]: deterministic and random placement strategies used as
//!   comparison points.
//! * [`metrics`]: revenue/cost accounting and the run ledger that metric
//!   curves are replayed from.
//! * [`sim`]: the discrete-event loop tying everything together, plus sweep
//!   and comparison harnesses.

#![forbid(unsafe_code)]

pub mod agent;
pub mod baselines;
pub mod embedding;
pub mod fitness;
pub mod gcn;
pub mod metrics;
pub mod sim;
pub mod substrate;
pub mod workload;

pub use substrate::{LinkId, NodeId, Time, Units};
