//! Hypervisor placements, the latency objective and reconfiguration counting.
//!
//! A [`Placement`] gives every hypervisor entity a distinct substrate node and routes every VCP
//! through exactly one entity. Between a prior and a new placement a VCP can see
//!
//! * no change,
//! * a location change only: same entity, the entity now sits on another node,
//! * an entity change only: another entity on the same node serves it,
//! * both.
//!
//! `r_loc` counts VCPs whose serving node changed, `r_hv` those whose serving entity changed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::scenario::{Scenario, Vcp};
use crate::topo::{Latency, NodeId, Topology};

pub type EntityId = usize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlacementError {
    #[error("scenario has no VCPs")]
    EmptyScenario,
    #[error("placements use different entity sets ({0} vs {1} entities)")]
    EntityUniverseMismatch(usize, usize),
    #[error("{0} is not assigned to any entity")]
    UncoveredVcp(Vcp),
    #[error("{vcp} is assigned to unknown entity {entity}")]
    UnknownEntity { vcp: Vcp, entity: EntityId },
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Placement {
    /// `locations[e]` is the node hosting entity `e`.
    pub locations: Vec<NodeId>,
    pub assignment: BTreeMap<Vcp, EntityId>,
}

impl Placement {
    pub fn k(&self) -> usize {
        self.locations.len()
    }

    pub fn entity_of(&self, vcp: &Vcp) -> Option<EntityId> {
        self.assignment.get(vcp).copied()
    }

    /// Node of the entity serving `vcp`.
    pub fn serving_node(&self, vcp: &Vcp) -> Option<NodeId> {
        self.entity_of(vcp)
            .and_then(|e| self.locations.get(e).copied())
    }

    /// Applies an entity relabeling: old entity `e` becomes `perm[e]`.
    pub fn relabeled(&self, perm: &[EntityId]) -> Placement {
        let mut locations = vec![0; self.locations.len()];
        for (e, &node) in self.locations.iter().enumerate() {
            locations[perm[e]] = node;
        }
        Placement {
            locations,
            assignment: self
                .assignment
                .iter()
                .map(|(v, &e)| (*v, perm[e]))
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("placement serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

#[derive(Serialize, Deserialize)]
struct AssignmentRecord {
    vsdn: u32,
    controller: NodeId,
    switch: NodeId,
    entity: EntityId,
}

#[derive(Serialize, Deserialize)]
struct PlacementRecord {
    locations: BTreeMap<EntityId, NodeId>,
    assignment: Vec<AssignmentRecord>,
}

impl Serialize for Placement {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        PlacementRecord {
            locations: self.locations.iter().copied().enumerate().collect(),
            assignment: self
                .assignment
                .iter()
                .map(|(v, &entity)| AssignmentRecord {
                    vsdn: v.vsdn_id,
                    controller: v.controller,
                    switch: v.switch,
                    entity,
                })
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Placement {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let rec = PlacementRecord::deserialize(deserializer)?;
        let k = rec.locations.len();
        if rec.locations.keys().copied().ne(0..k) {
            return Err(serde::de::Error::custom("entity ids must be 0..k-1"));
        }
        Ok(Placement {
            locations: rec.locations.into_values().collect(),
            assignment: rec
                .assignment
                .into_iter()
                .map(|a| {
                    (
                        Vcp {
                            vsdn_id: a.vsdn,
                            controller: a.controller,
                            switch: a.switch,
                        },
                        a.entity,
                    )
                })
                .collect(),
        })
    }
}

/// Objective values of a placement, measured against a prior placement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValues {
    pub l_avg_ms: f64,
    /// Sum of VCP latencies, the exact quantity behind `l_avg_ms`.
    pub total_latency_ns: u64,
    pub r_loc: usize,
    pub r_hv: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VcpChange {
    pub vcp: Vcp,
    pub loc_changed: bool,
    pub hv_changed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconfigReport {
    pub changes: Vec<VcpChange>,
    pub r_loc: usize,
    pub r_hv: usize,
}

/// Controller -> hypervisor -> switch latency.
#[inline]
pub fn vcp_latency(t: &Topology, vcp: &Vcp, hv_node: NodeId) -> Latency {
    t.dist(vcp.controller, hv_node) + t.dist(hv_node, vcp.switch)
}

/// Average latency in ms for a latency sum over `n` VCPs. Monotone in `total`; every reported
/// `L_avg` goes through this function.
#[inline]
pub fn avg_latency_ms(total: Latency, n: usize) -> f64 {
    total.as_ns() as f64 / (n as f64 * 1e6)
}

pub fn eval_total_latency(
    t: &Topology,
    vcps: &[Vcp],
    pl: &Placement,
) -> Result<Latency, PlacementError> {
    let mut total = Latency::ZERO;
    for vcp in vcps {
        let entity = pl
            .entity_of(vcp)
            .ok_or(PlacementError::UncoveredVcp(*vcp))?;
        let node = *pl
            .locations
            .get(entity)
            .ok_or(PlacementError::UnknownEntity { vcp: *vcp, entity })?;
        total += vcp_latency(t, vcp, node);
    }
    Ok(total)
}

/// Average control-plane latency in milliseconds.
pub fn eval_avg_latency(t: &Topology, s: &Scenario, pl: &Placement) -> Result<f64, PlacementError> {
    let vcps = s.vcps();
    if vcps.is_empty() {
        return Err(PlacementError::EmptyScenario);
    }
    Ok(avg_latency_ms(
        eval_total_latency(t, &vcps, pl)?,
        vcps.len(),
    ))
}

pub fn count_reconfigurations(
    old: &Placement,
    new: &Placement,
    vcps: &[Vcp],
) -> Result<ReconfigReport, PlacementError> {
    if old.k() != new.k() {
        return Err(PlacementError::EntityUniverseMismatch(old.k(), new.k()));
    }
    let lookup = |pl: &Placement, vcp: &Vcp| -> Result<(EntityId, NodeId), PlacementError> {
        let e = pl
            .entity_of(vcp)
            .ok_or(PlacementError::UncoveredVcp(*vcp))?;
        let node = *pl.locations.get(e).ok_or(PlacementError::UnknownEntity {
            vcp: *vcp,
            entity: e,
        })?;
        Ok((e, node))
    };
    let mut changes = Vec::with_capacity(vcps.len());
    for vcp in vcps {
        let (old_e, old_n) = lookup(old, vcp)?;
        let (new_e, new_n) = lookup(new, vcp)?;
        changes.push(VcpChange {
            vcp: *vcp,
            loc_changed: old_n != new_n,
            hv_changed: old_e != new_e,
        });
    }
    let r_loc = changes.iter().filter(|c| c.loc_changed).count();
    let r_hv = changes.iter().filter(|c| c.hv_changed).count();
    Ok(ReconfigReport {
        changes,
        r_loc,
        r_hv,
    })
}

/// VCPs of `s` that already existed in `prior`. Only these can be reconfigured.
pub fn prior_vcps(s: &Scenario, prior: &Placement) -> Vec<Vcp> {
    s.vcps()
        .into_iter()
        .filter(|v| prior.assignment.contains_key(v))
        .collect()
}

/// Evaluates all three objectives of `pl` for scenario `s` against `prior`.
pub fn evaluate(
    t: &Topology,
    s: &Scenario,
    pl: &Placement,
    prior: Option<&Placement>,
) -> Result<ObjectiveValues, PlacementError> {
    let vcps = s.vcps();
    if vcps.is_empty() {
        return Err(PlacementError::EmptyScenario);
    }
    let total = eval_total_latency(t, &vcps, pl)?;
    let (r_loc, r_hv) = match prior {
        Some(prior) => {
            let report = count_reconfigurations(prior, pl, &prior_vcps(s, prior))?;
            (report.r_loc, report.r_hv)
        }
        None => (0, 0),
    };
    Ok(ObjectiveValues {
        l_avg_ms: avg_latency_ms(total, vcps.len()),
        total_latency_ns: total.as_ns(),
        r_loc,
        r_hv,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DuplicateLocation {
        node: NodeId,
        entities: (EntityId, EntityId),
    },
    LocationOutOfRange {
        entity: EntityId,
        node: NodeId,
    },
    UncoveredVcp(Vcp),
    EntityOutOfRange {
        vcp: Vcp,
        entity: EntityId,
    },
    UnknownVcp(Vcp),
    WrongEntityCount {
        expected: usize,
        found: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateLocation { node, entities } => write!(
                f,
                "duplicate location: entities {} and {} both on node {node}",
                entities.0, entities.1
            ),
            Violation::LocationOutOfRange { entity, node } => {
                write!(f, "location out of range: entity {entity} on node {node}")
            }
            Violation::UncoveredVcp(v) => write!(f, "uncovered VCP: {v}"),
            Violation::EntityOutOfRange { vcp, entity } => {
                write!(f, "entity out of range: {vcp} assigned to {entity}")
            }
            Violation::UnknownVcp(v) => write!(f, "unknown VCP: {v}"),
            Violation::WrongEntityCount { expected, found } => {
                write!(f, "wrong entity count: expected {expected}, found {found}")
            }
        }
    }
}

/// Returns every invariant violation of `pl`; an empty list means the placement is valid.
pub fn validate_placement(t: &Topology, s: &Scenario, pl: &Placement) -> Vec<Violation> {
    let mut out = Vec::new();
    if pl.k() != s.k {
        out.push(Violation::WrongEntityCount {
            expected: s.k,
            found: pl.k(),
        });
    }
    let mut seen: BTreeMap<NodeId, EntityId> = BTreeMap::new();
    for (e, &node) in pl.locations.iter().enumerate() {
        if node >= t.node_count() {
            out.push(Violation::LocationOutOfRange { entity: e, node });
        }
        if let Some(&other) = seen.get(&node) {
            out.push(Violation::DuplicateLocation {
                node,
                entities: (other, e),
            });
        } else {
            seen.insert(node, e);
        }
    }
    let vcps: BTreeSet<Vcp> = s.vcps().into_iter().collect();
    for vcp in &vcps {
        match pl.entity_of(vcp) {
            None => out.push(Violation::UncoveredVcp(*vcp)),
            Some(e) if e >= pl.k() => out.push(Violation::EntityOutOfRange {
                vcp: *vcp,
                entity: e,
            }),
            Some(_) => {}
        }
    }
    for vcp in pl.assignment.keys() {
        if !vcps.contains(vcp) {
            out.push(Violation::UnknownVcp(*vcp));
        }
    }
    out
}
