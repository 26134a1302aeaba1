//! Stage-3 subproblem: fixed location subset and entity labeling, choose each VCP's serving node.
//!
//! Per VCP every node of the subset falls into one of four classes by (location changed, entity
//! changed). Within a class only the cheapest node matters (smallest id on ties), and a class that
//! is no better than another in all of (loc, hv, extra latency) can be dropped. VCPs left with a
//! single class are fixed; the rest go through an exact dynamic program over
//! (location changes, entity changes) that keeps the least extra latency per state.

use arrayvec::ArrayVec;

use super::Instance;
use crate::topo::NodeId;

const INF: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct LabelingValue {
    pub r_hv: usize,
    pub total: u64,
    pub r_loc: usize,
}

impl LabelingValue {
    pub fn key(&self) -> (usize, u64, usize) {
        (self.r_hv, self.total, self.r_loc)
    }
}

#[derive(Debug, Clone, Copy)]
struct Choice {
    loc: usize,
    hv: usize,
    extra: u64,
    node: NodeId,
}

type Choices = ArrayVec<Choice, 4>;

struct Items {
    serving: Vec<NodeId>,
    /// (VCP index, choices sorted by node)
    contested: Vec<(usize, Choices)>,
    fixed_loc: usize,
    fixed_hv: usize,
    fixed_extra: u64,
}

pub(crate) struct LabelingProblem<'a> {
    inst: &'a Instance<'a>,
    nodes: &'a [NodeId],
    best_lat: &'a [u64],
    best_node: &'a [NodeId],
    sum_best: u64,
    slack: u64,
    loc_cap: usize,
}

impl<'a> LabelingProblem<'a> {
    pub fn new(
        inst: &'a Instance<'a>,
        nodes: &'a [NodeId],
        best_lat: &'a [u64],
        best_node: &'a [NodeId],
        tmax: u64,
        loc_cap: usize,
    ) -> Self {
        let sum_best: u64 = best_lat.iter().sum();
        Self {
            inst,
            nodes,
            best_lat,
            best_node,
            sum_best,
            slack: tmax.saturating_sub(sum_best),
            loc_cap,
        }
    }

    pub fn slack(&self) -> u64 {
        self.slack
    }

    /// Entities keep their prior node when it is in the subset; the others take the remaining
    /// nodes in ascending order.
    pub fn prior_preserving_labeling(&self) -> Vec<NodeId> {
        let k = self.nodes.len();
        let mut locvec = vec![usize::MAX; k];
        let mut used = vec![false; k];
        if let Some(prior) = &self.inst.prior_locations {
            for (e, node) in prior.iter().enumerate().take(k) {
                if let Some(pos) = self.nodes.iter().position(|n| n == node) {
                    if !used[pos] {
                        used[pos] = true;
                        locvec[e] = *node;
                    }
                }
            }
        }
        let mut free = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .map(|(_, &n)| n);
        for slot in locvec.iter_mut().filter(|s| **s == usize::MAX) {
            *slot = free.next().expect("as many nodes as entities");
        }
        locvec
    }

    fn build(&self, locvec: &[NodeId]) -> Items {
        let inst = self.inst;
        let mut entity_at = vec![usize::MAX; inst.n_nodes];
        for (e, &node) in locvec.iter().enumerate() {
            entity_at[node] = e;
        }
        let mut items = Items {
            serving: self.best_node.to_vec(),
            contested: Vec::new(),
            fixed_loc: 0,
            fixed_hv: 0,
            fixed_extra: 0,
        };
        for (v, prior) in inst.prior.iter().enumerate() {
            let Some(p) = prior else { continue };
            let mut class: [Option<Choice>; 4] = [None; 4];
            for &h in self.nodes {
                let loc = usize::from(h != p.node);
                let hv = usize::from(entity_at[h] != p.entity);
                let extra = inst.lat(v, h) - self.best_lat[v];
                let slot = &mut class[loc * 2 + hv];
                if slot.map_or(true, |c| extra < c.extra) {
                    *slot = Some(Choice {
                        loc,
                        hv,
                        extra,
                        node: h,
                    });
                }
            }
            let present: ArrayVec<Choice, 4> = class
                .iter()
                .flatten()
                .copied()
                .filter(|c| c.extra <= self.slack)
                .collect();
            let mut kept: Choices = present
                .iter()
                .filter(|c| {
                    !present.iter().any(|o| {
                        (o.loc, o.hv) != (c.loc, c.hv)
                            && o.loc <= c.loc
                            && o.hv <= c.hv
                            && o.extra <= c.extra
                    })
                })
                .copied()
                .collect();
            debug_assert!(!kept.is_empty(), "the best node always survives");
            if kept.len() == 1 {
                let c = kept[0];
                items.serving[v] = c.node;
                items.fixed_loc += c.loc;
                items.fixed_hv += c.hv;
                items.fixed_extra += c.extra;
            } else {
                kept.sort_unstable_by_key(|c| c.node);
                items.contested.push((v, kept));
            }
        }
        items
    }

    /// Best (r_hv, total latency, r_loc) for this labeling, or `None` when infeasible or when
    /// entity changes would exceed `hv_cap`.
    pub fn evaluate(&self, locvec: &[NodeId], hv_cap: usize) -> Option<LabelingValue> {
        let items = self.build(locvec);
        if items.fixed_loc > self.loc_cap
            || items.fixed_extra > self.slack
            || items.fixed_hv > hv_cap
        {
            return None;
        }
        let min_hv: usize = items
            .contested
            .iter()
            .map(|(_, c)| c.iter().map(|c| c.hv).min().unwrap())
            .sum();
        let min_loc: usize = items
            .contested
            .iter()
            .map(|(_, c)| c.iter().map(|c| c.loc).min().unwrap())
            .sum();
        if items.fixed_hv + min_hv > hv_cap || items.fixed_loc + min_loc > self.loc_cap {
            return None;
        }
        let max_hv: usize = items
            .contested
            .iter()
            .map(|(_, c)| c.iter().map(|c| c.hv).max().unwrap())
            .sum();
        let max_loc: usize = items
            .contested
            .iter()
            .map(|(_, c)| c.iter().map(|c| c.loc).max().unwrap())
            .sum();
        let l_dim = (self.loc_cap - items.fixed_loc).min(max_loc) + 1;
        let h_dim = hv_cap.saturating_sub(items.fixed_hv).min(max_hv) + 1;
        let e_cap = self.slack - items.fixed_extra;

        let mut dp = vec![INF; l_dim * h_dim];
        let mut next = vec![INF; l_dim * h_dim];
        dp[0] = 0;
        for (_, choices) in &items.contested {
            next.fill(INF);
            for l in 0..l_dim {
                for h in 0..h_dim {
                    let cur = dp[l * h_dim + h];
                    if cur == INF {
                        continue;
                    }
                    for c in choices {
                        let (nl, nh, ne) = (l + c.loc, h + c.hv, cur + c.extra);
                        if nl < l_dim && nh < h_dim && ne <= e_cap {
                            let cell = &mut next[nl * h_dim + nh];
                            if ne < *cell {
                                *cell = ne;
                            }
                        }
                    }
                }
            }
            std::mem::swap(&mut dp, &mut next);
        }
        for h in 0..h_dim {
            let mut best: Option<(u64, usize)> = None;
            for l in 0..l_dim {
                let e = dp[l * h_dim + h];
                if e != INF && best.map_or(true, |(be, _)| e < be) {
                    best = Some((e, l));
                }
            }
            if let Some((e, l)) = best {
                return Some(LabelingValue {
                    r_hv: items.fixed_hv + h,
                    total: self.sum_best + items.fixed_extra + e,
                    r_loc: items.fixed_loc + l,
                });
            }
        }
        None
    }

    /// Lexicographically smallest serving-node vector attaining `target` under this labeling.
    pub fn reconstruct(&self, locvec: &[NodeId], target: &LabelingValue) -> Vec<NodeId> {
        let mut items = self.build(locvec);
        let l_dim = target.r_loc - items.fixed_loc + 1;
        let h_dim = target.r_hv - items.fixed_hv + 1;
        let e_cap = target.total - self.sum_best - items.fixed_extra;
        let m = items.contested.len();

        // suffix[i][(l, h)]: least extra latency of items i.. using exactly l and h changes
        let mut suffix = vec![vec![INF; l_dim * h_dim]; m + 1];
        suffix[m][0] = 0;
        for i in (0..m).rev() {
            let (head, tail) = suffix.split_at_mut(i + 1);
            let (cur, after) = (&mut head[i], &tail[0]);
            for l in 0..l_dim {
                for h in 0..h_dim {
                    let mut best = INF;
                    for c in &items.contested[i].1 {
                        if c.loc > l || c.hv > h {
                            continue;
                        }
                        let rest = after[(l - c.loc) * h_dim + (h - c.hv)];
                        if rest != INF && rest + c.extra <= e_cap {
                            best = best.min(rest + c.extra);
                        }
                    }
                    cur[l * h_dim + h] = best;
                }
            }
        }

        let (mut l, mut h, mut e) = (l_dim - 1, h_dim - 1, e_cap);
        debug_assert_eq!(suffix[0][l * h_dim + h], e);
        for i in 0..m {
            let (v, choices) = &items.contested[i];
            let pick = choices
                .iter()
                .find(|c| {
                    c.loc <= l
                        && c.hv <= h
                        && c.extra <= e
                        && suffix[i + 1][(l - c.loc) * h_dim + (h - c.hv)] == e - c.extra
                })
                .copied()
                .expect("target value is attainable");
            items.serving[*v] = pick.node;
            l -= pick.loc;
            h -= pick.hv;
            e -= pick.extra;
        }
        items.serving
    }
}
