//! Exhaustive reference solver.
//!
//! Enumerates every injective entity-to-node map and every VCP-to-entity assignment, evaluating
//! each placement from the distance matrix directly. It shares nothing with the staged search apart
//! from the objective definitions and the tie-breaking orders.

use std::cmp::Ordering;
use std::time::Instant;

use super::{SolveError, SolveOutcome, StageBounds};
use crate::placement::{avg_latency_ms, evaluate, Placement};
use crate::scenario::{Scenario, Vcp};
use crate::topo::{Latency, NodeId, Topology};

/// Upper bound on the number of placements the oracle will enumerate.
pub const ORACLE_LIMIT: f64 = 1e7;

/// Results of all three stages as found by enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutcome {
    pub stage1: SolveOutcome,
    pub stage2: SolveOutcome,
    pub stage3: SolveOutcome,
}

/// Number of placements: `N! / (N-k)! * k^|VCPs|`.
pub fn oracle_space_size(n_nodes: usize, k: usize, n_vcps: usize) -> f64 {
    let maps: f64 = (0..k).map(|i| (n_nodes - i) as f64).product();
    maps * (k as f64).powi(n_vcps as i32)
}

struct Candidate {
    total: u64,
    r_loc: usize,
    r_hv: usize,
    locvec: Vec<NodeId>,
    sorted: Vec<NodeId>,
    serving: Vec<NodeId>,
    assignment: Vec<usize>,
}

struct Enumerator<'a> {
    topo: &'a Topology,
    vcps: Vec<Vcp>,
    prior: Vec<Option<(usize, NodeId)>>,
    k: usize,
}

impl Enumerator<'_> {
    /// Calls `f` for every placement, location vectors and assignments in lexicographic order.
    fn for_each(&self, mut f: impl FnMut(&Candidate)) {
        let n_nodes = self.topo.node_count();
        let mut locvec = Vec::with_capacity(self.k);
        let mut used = vec![false; n_nodes];
        self.maps(&mut locvec, &mut used, &mut f);
    }

    fn maps(&self, locvec: &mut Vec<NodeId>, used: &mut [bool], f: &mut impl FnMut(&Candidate)) {
        if locvec.len() == self.k {
            self.assignments(locvec, f);
            return;
        }
        for h in 0..used.len() {
            if used[h] {
                continue;
            }
            used[h] = true;
            locvec.push(h);
            self.maps(locvec, used, f);
            locvec.pop();
            used[h] = false;
        }
    }

    fn assignments(&self, locvec: &[NodeId], f: &mut impl FnMut(&Candidate)) {
        let n = self.vcps.len();
        let mut sorted = locvec.to_vec();
        sorted.sort_unstable();
        let mut assignment = vec![0usize; n];
        loop {
            let mut total = 0u64;
            let mut r_loc = 0;
            let mut r_hv = 0;
            let mut serving = Vec::with_capacity(n);
            for (i, vcp) in self.vcps.iter().enumerate() {
                let node = locvec[assignment[i]];
                serving.push(node);
                total += self.topo.dist(vcp.controller, node).as_ns()
                    + self.topo.dist(node, vcp.switch).as_ns();
                if let Some((prior_entity, prior_node)) = self.prior[i] {
                    r_loc += usize::from(prior_node != node);
                    r_hv += usize::from(prior_entity != assignment[i]);
                }
            }
            f(&Candidate {
                total,
                r_loc,
                r_hv,
                locvec: locvec.to_vec(),
                sorted: sorted.clone(),
                serving,
                assignment: assignment.clone(),
            });
            // odometer, last VCP fastest
            let mut i = n;
            loop {
                if i == 0 {
                    return;
                }
                i -= 1;
                assignment[i] += 1;
                if assignment[i] < self.k {
                    break;
                }
                assignment[i] = 0;
            }
        }
    }
}

fn keep_min<K: Ord>(best: &mut Option<(K, Placement)>, key: K, c: &Candidate, vcps: &[Vcp]) {
    let replace = match best {
        None => true,
        Some((bk, _)) => key.cmp(bk) == Ordering::Less,
    };
    if replace {
        let placement = Placement {
            locations: c.locvec.clone(),
            assignment: vcps
                .iter()
                .copied()
                .zip(c.assignment.iter().copied())
                .collect(),
        };
        *best = Some((key, placement));
    }
}

/// Runs all three stages by enumeration.
pub fn brute_force_stages(
    t: &Topology,
    s: &Scenario,
    prior: Option<&Placement>,
    rho: f64,
) -> Result<OracleOutcome, SolveError> {
    let started = Instant::now();
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(SolveError::InvalidRho(rho));
    }
    if s.k > t.node_count() {
        return Err(SolveError::InfeasibleK {
            k: s.k,
            nodes: t.node_count(),
        });
    }
    s.validate(t)?;
    let vcps = s.vcps();
    if vcps.is_empty() {
        return Err(SolveError::EmptyScenario);
    }
    let size = oracle_space_size(t.node_count(), s.k, vcps.len());
    if size > ORACLE_LIMIT {
        return Err(SolveError::InstanceTooLarge {
            size,
            limit: ORACLE_LIMIT,
        });
    }
    let prior_refs = match prior {
        None => vec![None; vcps.len()],
        Some(p) => {
            if p.k() != s.k {
                return Err(
                    crate::placement::PlacementError::EntityUniverseMismatch(p.k(), s.k).into(),
                );
            }
            vcps.iter()
                .map(|v| p.entity_of(v).map(|e| (e, p.locations[e])))
                .collect()
        }
    };
    let en = Enumerator {
        topo: t,
        vcps: vcps.clone(),
        prior: prior_refs,
        k: s.k,
    };
    let n = vcps.len();

    let mut s1: Option<((u64, Vec<NodeId>, Vec<NodeId>, Vec<NodeId>), Placement)> = None;
    en.for_each(|c| {
        let key = (
            c.total,
            c.sorted.clone(),
            c.serving.clone(),
            c.locvec.clone(),
        );
        keep_min(&mut s1, key, c, &vcps);
    });
    let (s1_key, s1_placement) = s1.expect("non-empty placement space");
    let l_star = avg_latency_ms(Latency(s1_key.0), n);
    let bounds = StageBounds::new(l_star, rho);
    let feasible = |total: u64| avg_latency_ms(Latency(total), n) <= bounds.latency_budget_ms;

    let mut s2: Option<(
        (usize, u64, Vec<NodeId>, Vec<NodeId>, Vec<NodeId>),
        Placement,
    )> = None;
    en.for_each(|c| {
        if feasible(c.total) {
            let key = (
                c.r_loc,
                c.total,
                c.sorted.clone(),
                c.serving.clone(),
                c.locvec.clone(),
            );
            keep_min(&mut s2, key, c, &vcps);
        }
    });
    let (s2_key, s2_placement) = s2.expect("the stage-1 optimum is feasible");
    let r_loc_star = s2_key.0;

    let mut s3: Option<((usize, u64, usize, Vec<NodeId>, Vec<NodeId>), Placement)> = None;
    en.for_each(|c| {
        if feasible(c.total) && c.r_loc <= r_loc_star {
            let key = (
                c.r_hv,
                c.total,
                c.r_loc,
                c.locvec.clone(),
                c.serving.clone(),
            );
            keep_min(&mut s3, key, c, &vcps);
        }
    });
    let (_, s3_placement) = s3.expect("the stage-2 optimum is feasible");

    let explored = size as u64;
    let outcome = |placement: Placement, bounds: StageBounds| -> SolveOutcome {
        let objectives =
            evaluate(t, s, &placement, prior).expect("enumerated placements cover every VCP");
        SolveOutcome {
            placement,
            objectives,
            bounds,
            solve_time_ms: started.elapsed().as_secs_f64() * 1e3,
            nodes_explored: explored,
        }
    };
    Ok(OracleOutcome {
        stage1: outcome(s1_placement, StageBounds::new(l_star, 0.0)),
        stage2: outcome(s2_placement, bounds.with_r_loc_star(r_loc_star)),
        stage3: outcome(s3_placement, bounds.with_r_loc_star(r_loc_star)),
    })
}

/// Lexicographic optimum of (latency within budget, r_loc, r_hv) by exhaustive enumeration.
/// Refuses instances with more than [`ORACLE_LIMIT`] placements.
pub fn brute_force_oracle(
    t: &Topology,
    s: &Scenario,
    prior: Option<&Placement>,
    rho: f64,
) -> Result<SolveOutcome, SolveError> {
    brute_force_stages(t, s, prior, rho).map(|o| o.stage3)
}
