//! Exact three-stage solver for dynamic hypervisor placement.
//!
//! 1. minimize the average VCP latency,
//! 2. minimize VCP location changes with latency at most `(1 + rho) * L*`,
//! 3. minimize VCP entity changes, additionally keeping location changes at the stage-2 optimum.
//!
//! Every stage enumerates the k-subsets of nodes that may host entities. For a fixed subset the
//! remaining decisions decompose per VCP, which keeps the search exact at desk scale (tens of nodes,
//! k up to 7, a few hundred VCPs). All latency arithmetic happens on integer nanoseconds, so ties
//! are exact and the budget test is the same comparison the evaluation routines use.
//!
//! Ties are broken totally so results are reproducible:
//!
//! * stage 1: `(total latency, sorted location tuple, serving-node vector)`,
//! * stage 2: `(r_loc, total latency, sorted location tuple, serving-node vector)`,
//! * stage 3: `(r_hv, total latency, r_loc, location vector by entity, serving-node vector)`.
//!
//! In stages 1 and 2 entities are labeled by ascending location. The serving-node vector lists the
//! node serving each VCP in canonical scenario order.
//!
//! [`brute_force_oracle`] enumerates every placement with the same orderings and serves as ground
//! truth on small instances.

mod labeling;
mod oracle;
mod stages;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::placement::{EntityId, ObjectiveValues, Placement, PlacementError};
use crate::scenario::{Scenario, ScenarioError, Vcp};
use crate::topo::{Latency, NodeId, Topology};

pub use oracle::{
    brute_force_oracle, brute_force_stages, oracle_space_size, OracleOutcome, ORACLE_LIMIT,
};
pub use stages::{
    solve_multistage, solve_multistage_grid, solve_stage1, solve_stage2, solve_stage3,
};

#[derive(Debug, Error, PartialEq)]
pub enum SolveError {
    #[error("k = {k} exceeds the number of nodes ({nodes})")]
    InfeasibleK { k: usize, nodes: usize },
    #[error("scenario has no VCPs")]
    EmptyScenario,
    #[error("latency budget {budget_ms} ms is below the optimum")]
    InfeasibleBudget { budget_ms: f64 },
    #[error("invalid relaxation factor {0}")]
    InvalidRho(f64),
    #[error("missing stage-2 optimum in bounds")]
    MissingLocBound,
    #[error("instance too large for exhaustive search: {size} placements (limit {limit})")]
    InstanceTooLarge { size: f64, limit: f64 },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("prior placement: {0}")]
    Prior(#[from] PlacementError),
}

/// Bounds threaded from one stage into the next.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageBounds {
    pub l_star_ms: f64,
    pub rho: f64,
    pub latency_budget_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_loc_star: Option<usize>,
}

impl StageBounds {
    pub fn new(l_star_ms: f64, rho: f64) -> Self {
        Self {
            l_star_ms,
            rho,
            latency_budget_ms: (1.0 + rho) * l_star_ms,
            r_loc_star: None,
        }
    }

    pub fn with_r_loc_star(mut self, r: usize) -> Self {
        self.r_loc_star = Some(r);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub placement: Placement,
    pub objectives: ObjectiveValues,
    pub bounds: StageBounds,
    pub solve_time_ms: f64,
    pub nodes_explored: u64,
}

/// Largest latency sum over `n` VCPs whose average does not exceed `budget_ms`.
///
/// `avg_latency_ms` is monotone in the sum, so the feasible sums form a prefix of the integers and
/// this threshold turns the floating-point budget test into an exact integer comparison.
pub fn latency_threshold(budget_ms: f64, n: usize) -> Option<Latency> {
    use crate::placement::avg_latency_ms;
    if !(budget_ms >= 0.0) || n == 0 {
        return None;
    }
    let approx = budget_ms * n as f64 * 1e6;
    if approx >= u64::MAX as f64 / 2.0 {
        return Some(Latency(u64::MAX / 2));
    }
    let mut t = approx.floor() as u64;
    while t > 0 && avg_latency_ms(Latency(t), n) > budget_ms {
        t -= 1;
    }
    if avg_latency_ms(Latency(t), n) > budget_ms {
        return None;
    }
    while avg_latency_ms(Latency(t + 1), n) <= budget_ms {
        t += 1;
    }
    Some(Latency(t))
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct PriorRef {
    entity: EntityId,
    node: NodeId,
}

/// Pre-processed solver input: VCPs in canonical order and their latency through every node.
pub(crate) struct Instance<'a> {
    topo: &'a Topology,
    scenario: &'a Scenario,
    vcps: Vec<Vcp>,
    n_nodes: usize,
    k: usize,
    /// `lat[v * n_nodes + h]`: latency of VCP `v` through node `h`, in ns.
    lat: Vec<u64>,
    prior: Vec<Option<PriorRef>>,
    prior_locations: Option<Vec<NodeId>>,
}

impl<'a> Instance<'a> {
    pub(crate) fn new(
        t: &'a Topology,
        s: &'a Scenario,
        prior: Option<&Placement>,
    ) -> Result<Self, SolveError> {
        let n_nodes = t.node_count();
        if s.k > n_nodes {
            return Err(SolveError::InfeasibleK {
                k: s.k,
                nodes: n_nodes,
            });
        }
        s.validate(t)?;
        let vcps = s.vcps();
        if vcps.is_empty() {
            return Err(SolveError::EmptyScenario);
        }
        let mut lat = Vec::with_capacity(vcps.len() * n_nodes);
        for v in &vcps {
            for h in 0..n_nodes {
                lat.push(crate::placement::vcp_latency(t, v, h).as_ns());
            }
        }
        let prior_placement = prior;
        let prior = match prior {
            None => vec![None; vcps.len()],
            Some(p) => {
                if p.k() != s.k {
                    return Err(PlacementError::EntityUniverseMismatch(p.k(), s.k).into());
                }
                vcps.iter()
                    .map(|v| match p.entity_of(v) {
                        None => Ok(None),
                        Some(e) => match p.locations.get(e) {
                            Some(&node) if node < n_nodes => Ok(Some(PriorRef { entity: e, node })),
                            _ => Err(PlacementError::UnknownEntity { vcp: *v, entity: e }),
                        },
                    })
                    .collect::<Result<Vec<_>, _>>()?
            }
        };
        Ok(Self {
            topo: t,
            scenario: s,
            vcps,
            n_nodes,
            k: s.k,
            lat,
            prior,
            prior_locations: prior_placement.map(|p| p.locations.clone()),
        })
    }

    #[inline]
    fn lat(&self, v: usize, h: NodeId) -> u64 {
        self.lat[v * self.n_nodes + h]
    }

    fn n_vcps(&self) -> usize {
        self.vcps.len()
    }

    fn threshold(&self, bounds: &StageBounds) -> Result<u64, SolveError> {
        if !(bounds.rho >= 0.0) {
            return Err(SolveError::InvalidRho(bounds.rho));
        }
        latency_threshold(bounds.latency_budget_ms, self.n_vcps())
            .map(|l| l.as_ns())
            .ok_or(SolveError::InfeasibleBudget {
                budget_ms: bounds.latency_budget_ms,
            })
    }

    /// Builds a placement from per-VCP serving nodes and an entity-to-node location vector.
    fn placement(&self, locations: &[NodeId], serving: &[NodeId]) -> Placement {
        let mut entity_at = vec![usize::MAX; self.n_nodes];
        for (e, &node) in locations.iter().enumerate() {
            entity_at[node] = e;
        }
        Placement {
            locations: locations.to_vec(),
            assignment: self
                .vcps
                .iter()
                .zip(serving)
                .map(|(v, &node)| (*v, entity_at[node]))
                .collect(),
        }
    }

    fn outcome(
        &self,
        placement: Placement,
        prior: Option<&Placement>,
        bounds: StageBounds,
        started: Instant,
        nodes_explored: u64,
    ) -> SolveOutcome {
        let objectives = crate::placement::evaluate(self.topo, self.scenario, &placement, prior)
            .expect("solver placements cover every VCP");
        SolveOutcome {
            placement,
            objectives,
            bounds,
            solve_time_ms: started.elapsed().as_secs_f64() * 1e3,
            nodes_explored,
        }
    }
}

/// Per-VCP best node within the current location subset.
pub(crate) struct SubsetView<'s> {
    pub nodes: &'s [NodeId],
    pub in_subset: &'s [bool],
    pub best_lat: &'s [u64],
    pub best_node: &'s [NodeId],
}

/// Visits every k-subset of nodes in lexicographic order. For each subset the callback sees, per
/// VCP, the minimum latency over the subset and the smallest node attaining it.
pub(crate) fn for_each_subset(inst: &Instance<'_>, mut visit: impl FnMut(&SubsetView<'_>)) -> u64 {
    let n = inst.n_vcps();
    let k = inst.k;
    let mut best_lat = vec![vec![u64::MAX; n]; k + 1];
    let mut best_node = vec![vec![usize::MAX; n]; k + 1];
    let mut chosen = Vec::with_capacity(k);
    let mut in_subset = vec![false; inst.n_nodes];
    let mut visited = 0u64;

    fn recurse(
        inst: &Instance<'_>,
        start: NodeId,
        depth: usize,
        chosen: &mut Vec<NodeId>,
        in_subset: &mut [bool],
        best_lat: &mut [Vec<u64>],
        best_node: &mut [Vec<NodeId>],
        visited: &mut u64,
        visit: &mut dyn FnMut(&SubsetView<'_>),
    ) {
        let k = inst.k;
        if depth == k {
            *visited += 1;
            visit(&SubsetView {
                nodes: chosen,
                in_subset,
                best_lat: &best_lat[k],
                best_node: &best_node[k],
            });
            return;
        }
        for h in start..=(inst.n_nodes - (k - depth)) {
            let (lower, upper) = best_lat.split_at_mut(depth + 1);
            let (lower_n, upper_n) = best_node.split_at_mut(depth + 1);
            let (prev_l, prev_n) = (&lower[depth], &lower_n[depth]);
            let (next_l, next_n) = (&mut upper[0], &mut upper_n[0]);
            for v in 0..inst.n_vcps() {
                let l = inst.lat(v, h);
                // nodes are added in ascending order, so strict < keeps the smallest id on ties
                if l < prev_l[v] {
                    next_l[v] = l;
                    next_n[v] = h;
                } else {
                    next_l[v] = prev_l[v];
                    next_n[v] = prev_n[v];
                }
            }
            chosen.push(h);
            in_subset[h] = true;
            recurse(
                inst,
                h + 1,
                depth + 1,
                chosen,
                in_subset,
                best_lat,
                best_node,
                visited,
                visit,
            );
            in_subset[h] = false;
            chosen.pop();
        }
    }

    recurse(
        inst,
        0,
        0,
        &mut chosen,
        &mut in_subset,
        &mut best_lat,
        &mut best_node,
        &mut visited,
        &mut visit,
    );
    visited
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::placement::avg_latency_ms;

    #[test]
    fn threshold_is_exact_boundary() {
        for &(budget, n) in &[
            (2.5, 2usize),
            (7.17, 13),
            (0.0, 3),
            (1.0 / 3.0, 7),
            (100.07, 241),
        ] {
            let t = latency_threshold(budget, n).unwrap();
            assert!(avg_latency_ms(t, n) <= budget);
            assert!(avg_latency_ms(Latency(t.0 + 1), n) > budget);
        }
        assert_eq!(latency_threshold(-1.0, 3), None);
        assert_eq!(latency_threshold(f64::NAN, 3), None);
    }

    #[test]
    fn bounds_budget() {
        let b = StageBounds::new(7.17, 0.0);
        assert_eq!(b.latency_budget_ms, 7.17);
        let b = StageBounds::new(2.0, 0.5).with_r_loc_star(3);
        assert_eq!(b.latency_budget_ms, 3.0);
        assert_eq!(b.r_loc_star, Some(3));
    }
}
