mod common;

use std::path::Path;

use dhpp::topo::{link_latency, load_topology, parse_topology, GeoCoord, Latency, Topology};
use proptest::prelude::*;
use rand_core::SeedableRng;
use rand_pcg::Pcg64;

fn att() -> Topology {
    load_topology(Path::new(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/data/AttMpls.graphml"
    )))
    .unwrap()
}

#[test]
fn att_counts_match_source_file() {
    let t = att();
    assert_eq!(t.name(), "AttMpls");
    assert_eq!(t.node_count(), 25);
    // 57 edge elements, one of them a parallel link between nodes 22 and 24
    assert_eq!(t.links().len(), 56);
    assert_eq!(t.node_by_label("NY54"), Some(0));
    assert_eq!(t.node_by_label("LA03"), Some(22));
}

#[test]
fn att_is_connected_with_positive_distances() {
    let t = att();
    for a in 0..t.node_count() {
        assert_eq!(t.dist(a, a), Latency(0));
        for b in 0..t.node_count() {
            if a != b {
                assert!(t.dist(a, b) > Latency(0));
            }
        }
    }
}

#[test]
fn att_link_latency_follows_coordinates() {
    let t = att();
    for l in t.links() {
        let ca = t.nodes()[l.a].coord.unwrap();
        let cb = t.nodes()[l.b].coord.unwrap();
        assert_eq!(l.latency, Latency::from_ms(link_latency(ca, cb)));
    }
}

#[test]
fn reparse_is_deterministic() {
    let a = att();
    let b = att();
    assert_eq!(a.dist_matrix().to_ms_rows(), b.dist_matrix().to_ms_rows());
    assert_eq!(a.summary(), b.summary());
}

#[test]
fn gml_and_graphml_agree() {
    let gml = load_topology(Path::new(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/tests/fixtures/AttMpls.gml"
    )))
    .unwrap();
    let graphml = att();
    assert_eq!(gml.node_count(), graphml.node_count());
    assert_eq!(gml.links(), graphml.links());
    assert_eq!(
        gml.dist_matrix().to_ms_rows(),
        graphml.dist_matrix().to_ms_rows()
    );
}

#[test]
fn toy_two_node_file() {
    let src = br#"graph [
  node [ id 0 label "a" Latitude 0.0 Longitude 0.0 ]
  node [ id 1 label "b" Latitude 0.0 Longitude 1.0 ]
  edge [ source 0 target 1 ]
]"#;
    let t = parse_topology(src).unwrap();
    let s = t.summary();
    assert_eq!((s.nodes, s.links), (2, 1));
    let expected = link_latency(GeoCoord::new(0.0, 0.0), GeoCoord::new(0.0, 1.0));
    assert!((t.dist_ms(0, 1) - expected).abs() < 1e-6);
}

#[test]
fn missing_file_is_an_error() {
    assert!(load_topology(Path::new("/nonexistent/topology.graphml")).is_err());
}

proptest! {
    #[test]
    fn distances_form_a_metric(seed in any::<u64>(), n in 1usize..12) {
        let mut rng = Pcg64::seed_from_u64(seed);
        let t = common::random_connected(&mut rng, n);
        for a in 0..n {
            prop_assert_eq!(t.dist(a, a), Latency(0));
            for b in 0..n {
                prop_assert_eq!(t.dist(a, b), t.dist(b, a));
                for c in 0..n {
                    prop_assert!(t.dist(a, c) <= t.dist(a, b) + t.dist(b, c));
                }
            }
        }
        for l in t.links() {
            prop_assert!(t.dist(l.a, l.b) <= l.latency);
        }
    }
}
