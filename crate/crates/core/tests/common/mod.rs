#![allow(dead_code)]

use dhpp::placement::Placement;
use dhpp::scenario::{Scenario, SizeRange, Vsdn};
use dhpp::topo::Topology;
use rand_core::{RngCore, SeedableRng};
use rand_pcg::Pcg64;

pub struct SmallInstance {
    pub topo: Topology,
    pub scenario: Scenario,
    pub prior: Placement,
    pub rho: f64,
}

pub fn below(rng: &mut Pcg64, n: usize) -> usize {
    (rng.next_u64() % n as u64) as usize
}

/// Random connected graph: a random spanning tree plus extra edges. Link latencies are small
/// integers (in ms) so that ties are common.
pub fn random_connected(rng: &mut Pcg64, n: usize) -> Topology {
    let mut edges = Vec::new();
    for v in 1..n {
        let u = below(rng, v);
        edges.push((u, v, (1 + below(rng, 3)) as f64));
    }
    let extra = below(rng, n + 1);
    for _ in 0..extra {
        let a = below(rng, n);
        let b = below(rng, n);
        if a != b {
            edges.push((a, b, (1 + below(rng, 4)) as f64));
        }
    }
    Topology::from_ms_edges(n, &edges).unwrap()
}

pub fn random_placement(
    rng: &mut Pcg64,
    n_nodes: usize,
    k: usize,
    vcps: &[dhpp::Vcp],
) -> Placement {
    let mut pool: Vec<usize> = (0..n_nodes).collect();
    for i in 0..k {
        let j = i + below(rng, n_nodes - i);
        pool.swap(i, j);
    }
    Placement {
        locations: pool[..k].to_vec(),
        assignment: vcps.iter().map(|v| (*v, below(rng, k))).collect(),
    }
}

/// Instance with at most `max_nodes` nodes, `k <= max_k` and at most `max_vcps` VCPs. The last
/// vSDN is new (absent from the prior) in roughly half of the instances.
pub fn small_instance(
    seed: u64,
    max_nodes: usize,
    max_k: usize,
    max_vcps: usize,
    rhos: &[f64],
) -> SmallInstance {
    let mut rng = Pcg64::seed_from_u64(seed);
    let n = 1 + below(&mut rng, max_nodes);
    let topo = random_connected(&mut rng, n);
    let k = 1 + below(&mut rng, max_k.min(n));
    let total_vcps = 1 + below(&mut rng, max_vcps);
    let mut vsdns = Vec::new();
    let mut left = total_vcps;
    while left > 0 {
        let size = (1 + below(&mut rng, 2)).min(left).min(n);
        let controller = below(&mut rng, n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..size {
            let j = i + below(&mut rng, n - i);
            pool.swap(i, j);
        }
        let mut switches = pool[..size].to_vec();
        switches.sort_unstable();
        vsdns.push(Vsdn {
            id: vsdns.len() as u32,
            controller_node: controller,
            switch_nodes: switches,
        });
        left -= size;
    }
    let scenario = Scenario {
        topology_ref: "random".into(),
        k,
        seed,
        size_range: SizeRange::new(1, n),
        vsdns,
        rng: String::new(),
    };
    let all = scenario.vcps();
    let new_last = below(&mut rng, 2) == 0 && scenario.vsdns.len() > 1;
    let covered: Vec<_> = if new_last {
        let last = scenario.vsdns.last().unwrap().id;
        all.iter().copied().filter(|v| v.vsdn_id != last).collect()
    } else {
        all.clone()
    };
    let prior = random_placement(&mut rng, n, k, &covered);
    let rho = rhos[below(&mut rng, rhos.len())];
    SmallInstance {
        topo,
        scenario,
        prior,
        rho,
    }
}
