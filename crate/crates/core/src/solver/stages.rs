use std::time::Instant;

use super::labeling::{LabelingProblem, LabelingValue};
use super::{for_each_subset, Instance, SolveError, SolveOutcome, StageBounds, SubsetView};
use crate::placement::{avg_latency_ms, Placement};
use crate::scenario::Scenario;
use crate::topo::{Latency, NodeId, Topology};

pub(crate) struct Stage1Result {
    pub locations: Vec<NodeId>,
    pub serving: Vec<NodeId>,
    pub total: u64,
    pub explored: u64,
}

pub(crate) fn stage1(inst: &Instance<'_>) -> Stage1Result {
    let mut best: Option<(u64, Vec<NodeId>, Vec<NodeId>)> = None;
    let explored = for_each_subset(inst, |view| {
        let total: u64 = view.best_lat.iter().sum();
        if best.as_ref().map_or(true, |(t, _, _)| total < *t) {
            best = Some((total, view.nodes.to_vec(), view.best_node.to_vec()));
        }
    });
    let (total, locations, serving) = best.expect("at least one subset exists when k <= N");
    Stage1Result {
        locations,
        serving,
        total,
        explored,
    }
}

/// Minimum number of location changes within one subset, and the least total latency at that count.
struct SubsetLocOptimum {
    r_loc: usize,
    total: u64,
    /// number of prior-located VCPs that keep their node
    kept: usize,
}

/// Per subset: the sum of best latencies, the number of VCPs whose prior node is outside the
/// subset, and prefix sums of the sorted extra latencies of keeping the others on their prior node.
#[derive(Default)]
struct SubsetDeltas {
    sum_b: u64,
    forced: usize,
    ds: Vec<u64>,
    prefix: Vec<u64>,
}

impl SubsetDeltas {
    fn fill(&mut self, inst: &Instance<'_>, view: &SubsetView<'_>) {
        self.sum_b = view.best_lat.iter().sum();
        self.forced = 0;
        self.ds.clear();
        for (v, prior) in inst.prior.iter().enumerate() {
            if let Some(p) = prior {
                if view.in_subset[p.node] {
                    self.ds.push(inst.lat(v, p.node) - view.best_lat[v]);
                } else {
                    self.forced += 1;
                }
            }
        }
        self.ds.sort_unstable();
        self.prefix.clear();
        self.prefix.push(0);
        let mut acc = 0u64;
        for &d in &self.ds {
            acc += d;
            self.prefix.push(acc);
        }
    }

    fn optimum(&self, tmax: u64) -> Option<SubsetLocOptimum> {
        if self.sum_b > tmax {
            return None;
        }
        let slack = tmax - self.sum_b;
        let kept = self.prefix.partition_point(|&p| p <= slack) - 1;
        Some(SubsetLocOptimum {
            r_loc: self.forced + self.ds.len() - kept,
            total: self.sum_b + self.prefix[kept],
            kept,
        })
    }
}

/// Serving nodes of the lexicographically smallest assignment attaining `opt` within the subset.
fn stage2_serving(
    inst: &Instance<'_>,
    view: &SubsetView<'_>,
    opt: &SubsetLocOptimum,
) -> Vec<NodeId> {
    let extra = |v: usize, node: NodeId| inst.lat(v, node) - view.best_lat[v];
    let mut ds: Vec<u64> = inst
        .prior
        .iter()
        .enumerate()
        .filter_map(|(v, p)| {
            p.filter(|p| view.in_subset[p.node])
                .map(|p| extra(v, p.node))
        })
        .collect();
    ds.sort_unstable();
    let threshold = if opt.kept > 0 {
        Some(ds[opt.kept - 1])
    } else {
        None
    };
    let below = threshold.map_or(0, |t| ds.iter().filter(|&&d| d < t).count());
    let mut quota = opt.kept - below;
    let mut tied_left = threshold.map_or(0, |t| ds.iter().filter(|&&d| d == t).count());

    let mut serving = Vec::with_capacity(inst.n_vcps());
    for (v, prior) in inst.prior.iter().enumerate() {
        let best = view.best_node[v];
        let node = match (prior, threshold) {
            (Some(p), Some(t)) if view.in_subset[p.node] => {
                let d = extra(v, p.node);
                if d < t {
                    p.node
                } else if d > t {
                    best
                } else {
                    tied_left -= 1;
                    let keep = quota > 0 && (p.node < best || tied_left < quota);
                    if keep {
                        quota -= 1;
                        p.node
                    } else {
                        best
                    }
                }
            }
            _ => best,
        };
        serving.push(node);
    }
    serving
}

pub(crate) struct Stage2Result {
    pub r_loc: usize,
    pub locations: Vec<NodeId>,
    pub serving: Vec<NodeId>,
    pub explored: u64,
}

/// Stage 2 for several latency thresholds in one pass over the subsets.
pub(crate) fn stage2_grid(inst: &Instance<'_>, tmaxes: &[u64]) -> Vec<Option<Stage2Result>> {
    let mut deltas = SubsetDeltas::default();
    let mut best: Vec<Option<((usize, u64), Vec<NodeId>, Vec<NodeId>)>> = vec![None; tmaxes.len()];
    let explored = for_each_subset(inst, |view| {
        deltas.fill(inst, view);
        for (j, &tmax) in tmaxes.iter().enumerate() {
            let Some(opt) = deltas.optimum(tmax) else {
                continue;
            };
            let key = (opt.r_loc, opt.total);
            if best[j].as_ref().map_or(true, |(k, _, _)| key < *k) {
                best[j] = Some((key, view.nodes.to_vec(), stage2_serving(inst, view, &opt)));
            }
        }
    });
    best.into_iter()
        .map(|b| {
            b.map(|((r_loc, _), locations, serving)| Stage2Result {
                r_loc,
                locations,
                serving,
                explored,
            })
        })
        .collect()
}

pub(crate) struct Stage3Result {
    pub locations: Vec<NodeId>,
    pub serving: Vec<NodeId>,
    pub explored: u64,
}

struct Candidate {
    nodes: Vec<NodeId>,
    best_lat: Vec<u64>,
    best_node: Vec<NodeId>,
    /// indices of the (threshold, cap) pairs this subset is admissible for
    admissible: Vec<usize>,
}

/// Visits entity labelings of `nodes` in lexicographic order of the location vector, skipping
/// prefixes that already force more entity changes than the cap returned by `visit`.
fn labelings(
    nodes: &[NodeId],
    forced: &[Vec<usize>],
    locvec: &mut Vec<NodeId>,
    used: &mut [bool],
    lower: usize,
    mut cap: usize,
    visit: &mut dyn FnMut(&[NodeId]) -> usize,
) -> usize {
    let e = locvec.len();
    if e == nodes.len() {
        return visit(locvec);
    }
    for i in 0..nodes.len() {
        if used[i] || lower + forced[e][i] > cap {
            continue;
        }
        used[i] = true;
        locvec.push(nodes[i]);
        cap = labelings(
            nodes,
            forced,
            locvec,
            used,
            lower + forced[e][i],
            cap,
            visit,
        );
        locvec.pop();
        used[i] = false;
    }
    cap
}

/// Stage 3 for several (latency threshold, location-change cap) pairs. Subsets are enumerated
/// once; the labeling search then runs per pair over its admissible subsets.
pub(crate) fn stage3_grid(
    inst: &Instance<'_>,
    limits: &[(u64, usize)],
) -> Vec<Option<Stage3Result>> {
    let mut deltas = SubsetDeltas::default();
    let mut candidates = Vec::new();
    let enumerated = for_each_subset(inst, |view| {
        deltas.fill(inst, view);
        let admissible: Vec<usize> = limits
            .iter()
            .enumerate()
            .filter(|(_, &(tmax, cap))| deltas.optimum(tmax).is_some_and(|o| o.r_loc <= cap))
            .map(|(j, _)| j)
            .collect();
        if !admissible.is_empty() {
            candidates.push(Candidate {
                nodes: view.nodes.to_vec(),
                best_lat: view.best_lat.to_vec(),
                best_node: view.best_node.to_vec(),
                admissible,
            });
        }
    });
    limits
        .iter()
        .enumerate()
        .map(|(j, &(tmax, cap))| {
            let mut explored = enumerated;
            let admissible = candidates.iter().filter(|c| c.admissible.contains(&j));
            labeling_search(inst, tmax, cap, admissible, &mut explored).map(
                |(locations, serving)| Stage3Result {
                    locations,
                    serving,
                    explored,
                },
            )
        })
        .collect()
}

fn labeling_search<'c>(
    inst: &Instance<'_>,
    tmax: u64,
    r_loc_cap: usize,
    candidates: impl Iterator<Item = &'c Candidate>,
    explored: &mut u64,
) -> Option<(Vec<NodeId>, Vec<NodeId>)> {
    let mut best: Option<(LabelingValue, Vec<NodeId>, Vec<NodeId>)> = None;
    for cand in candidates {
        let problem = LabelingProblem::new(
            inst,
            &cand.nodes,
            &cand.best_lat,
            &cand.best_node,
            tmax,
            r_loc_cap,
        );
        let consider =
            |locvec: &[NodeId], best: &mut Option<(LabelingValue, Vec<NodeId>, Vec<NodeId>)>| {
                let cap = best.as_ref().map_or(usize::MAX, |(val, _, _)| val.r_hv);
                let Some(val) = problem.evaluate(locvec, cap) else {
                    return;
                };
                let better = match best {
                    None => true,
                    Some((bv, bl, _)) => {
                        (val.key() < bv.key()) || (val.key() == bv.key() && locvec < bl.as_slice())
                    }
                };
                if better {
                    let serving = problem.reconstruct(locvec, &val);
                    *best = Some((val, locvec.to_vec(), serving));
                }
            };

        // A labeling that keeps entities where they were gives a tight cap early on.
        consider(&problem.prior_preserving_labeling(), &mut best);
        *explored += 1;

        // forced[e][i]: prior VCPs of entity e that cannot stay with it when it sits on nodes[i]
        let k = cand.nodes.len();
        let mut forced = vec![vec![0usize; k]; k];
        let slack = problem.slack();
        for (v, prior) in inst.prior.iter().enumerate() {
            let Some(p) = prior else { continue };
            if p.entity >= k {
                continue;
            }
            for (i, &h) in cand.nodes.iter().enumerate() {
                if inst.lat(v, h) - cand.best_lat[v] > slack {
                    forced[p.entity][i] += 1;
                }
            }
        }
        let mut locvec = Vec::with_capacity(k);
        let mut used = vec![false; k];
        let cap = best.as_ref().map_or(usize::MAX, |(val, _, _)| val.r_hv);
        labelings(
            &cand.nodes,
            &forced,
            &mut locvec,
            &mut used,
            0,
            cap,
            &mut |locvec| {
                consider(locvec, &mut best);
                *explored += 1;
                best.as_ref().map_or(usize::MAX, |(val, _, _)| val.r_hv)
            },
        );
    }
    best.map(|(_, locations, serving)| (locations, serving))
}

fn infeasible(bounds: &StageBounds) -> SolveError {
    SolveError::InfeasibleBudget {
        budget_ms: bounds.latency_budget_ms,
    }
}

/// Latency-optimal placement. The returned bounds carry `L*` with `rho = 0`.
pub fn solve_stage1(t: &Topology, s: &Scenario) -> Result<SolveOutcome, SolveError> {
    let started = Instant::now();
    let inst = Instance::new(t, s, None)?;
    let res = stage1(&inst);
    let l_star = avg_latency_ms(Latency(res.total), inst.n_vcps());
    let placement = inst.placement(&res.locations, &res.serving);
    Ok(inst.outcome(
        placement,
        None,
        StageBounds::new(l_star, 0.0),
        started,
        res.explored,
    ))
}

/// Fewest location changes against `prior` within the latency budget of `bounds`. The optimum is
/// returned in `bounds.r_loc_star`.
pub fn solve_stage2(
    t: &Topology,
    s: &Scenario,
    prior: &Placement,
    bounds: StageBounds,
) -> Result<SolveOutcome, SolveError> {
    let started = Instant::now();
    let inst = Instance::new(t, s, Some(prior))?;
    let tmax = inst.threshold(&bounds)?;
    let res = stage2_grid(&inst, &[tmax])
        .pop()
        .flatten()
        .ok_or_else(|| infeasible(&bounds))?;
    let placement = inst.placement(&res.locations, &res.serving);
    Ok(inst.outcome(
        placement,
        Some(prior),
        bounds.with_r_loc_star(res.r_loc),
        started,
        res.explored,
    ))
}

/// Fewest entity changes against `prior` within the latency budget and `bounds.r_loc_star`.
pub fn solve_stage3(
    t: &Topology,
    s: &Scenario,
    prior: &Placement,
    bounds: StageBounds,
) -> Result<SolveOutcome, SolveError> {
    let started = Instant::now();
    let inst = Instance::new(t, s, Some(prior))?;
    let tmax = inst.threshold(&bounds)?;
    let r_star = bounds.r_loc_star.ok_or(SolveError::MissingLocBound)?;
    let res = stage3_grid(&inst, &[(tmax, r_star)])
        .pop()
        .flatten()
        .ok_or_else(|| infeasible(&bounds))?;
    let placement = inst.placement(&res.locations, &res.serving);
    Ok(inst.outcome(placement, Some(prior), bounds, started, res.explored))
}

/// Runs all three stages. For `rho = 0` the result is the lexicographic optimum of
/// `(L_avg, r_loc, r_hv)`.
pub fn solve_multistage(
    t: &Topology,
    s: &Scenario,
    prior: &Placement,
    rho: f64,
) -> Result<SolveOutcome, SolveError> {
    let mut out = solve_multistage_grid(t, s, prior, &[rho])?;
    Ok(out.pop().expect("one outcome per rho"))
}

/// [`solve_multistage`] for every value of `rhos`, sharing stage 1 and the subset enumerations.
/// Outcomes are identical to separate calls except for timing and exploration counters; the
/// shared work is split evenly over the rho values in `solve_time_ms`.
pub fn solve_multistage_grid(
    t: &Topology,
    s: &Scenario,
    prior: &Placement,
    rhos: &[f64],
) -> Result<Vec<SolveOutcome>, SolveError> {
    if let Some(&bad) = rhos.iter().find(|r| !(**r >= 0.0) || !r.is_finite()) {
        return Err(SolveError::InvalidRho(bad));
    }
    if rhos.is_empty() {
        return Ok(Vec::new());
    }
    let started = Instant::now();
    let inst = Instance::new(t, s, Some(prior))?;
    let s1 = stage1(&inst);
    let l_star = avg_latency_ms(Latency(s1.total), inst.n_vcps());
    let bounds: Vec<StageBounds> = rhos
        .iter()
        .map(|&rho| StageBounds::new(l_star, rho))
        .collect();
    let tmaxes = bounds
        .iter()
        .map(|b| inst.threshold(b))
        .collect::<Result<Vec<_>, _>>()?;
    let s2 = stage2_grid(&inst, &tmaxes)
        .into_iter()
        .zip(&bounds)
        .map(|(r, b)| r.ok_or_else(|| infeasible(b)))
        .collect::<Result<Vec<_>, _>>()?;
    let limits: Vec<(u64, usize)> = tmaxes.iter().zip(&s2).map(|(&t, r)| (t, r.r_loc)).collect();
    let s3 = stage3_grid(&inst, &limits);
    let shared_ms = started.elapsed().as_secs_f64() * 1e3 / rhos.len() as f64;
    let mut outcomes = Vec::with_capacity(rhos.len());
    for ((res, b), r2) in s3.into_iter().zip(&bounds).zip(&s2) {
        let res = res.ok_or_else(|| infeasible(b))?;
        let placement = inst.placement(&res.locations, &res.serving);
        let mut out = inst.outcome(
            placement,
            Some(prior),
            b.with_r_loc_star(r2.r_loc),
            Instant::now(),
            s1.explored + r2.explored + res.explored,
        );
        out.solve_time_ms = shared_ms;
        outcomes.push(out);
    }
    Ok(outcomes)
}
