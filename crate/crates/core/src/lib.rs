//! Exact optimization of dynamic hypervisor placements in virtualized SDN networks.
//!
//! Hypervisor entities are placed on a physical topology and every virtual control path (VCP) of
//! every tenant vSDN is routed through one of them. When a vSDN arrives the placement is
//! re-optimized lexicographically: average control-plane latency first, then the number of VCPs
//! whose hypervisor location changes, then the number of VCPs whose hypervisor entity changes.
//! A relaxation factor `rho` lets the later stages trade latency for fewer reconfigurations.
//!
//! * [`topo`]: topology parsing, geodesic link latencies, shortest paths
//! * [`scenario`]: seeded vSDN generation
//! * [`placement`]: placements, objectives, reconfiguration counting
//! * [`solver`]: the staged exact solver and an exhaustive oracle
//! * [`harness`]: experiment sweeps, aggregation, CSV export
//! * [`cli`]: the `dhpp` command line

pub mod cli;
pub mod harness;
pub mod placement;
pub mod scenario;
pub mod solver;
pub mod topo;

pub use placement::{ObjectiveValues, Placement, ReconfigReport};
pub use scenario::{Scenario, Vcp, Vsdn};
pub use solver::{SolveError, SolveOutcome, StageBounds};
pub use topo::{Latency, NodeId, Topology};
