use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dhpp::cli::{SolveReport, TopoInfo};
use dhpp::harness::parse_csv;
use dhpp::placement::Placement;
use dhpp::scenario::{Scenario, SizeRange, Vsdn};
use tempfile::TempDir;

fn att_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/AttMpls.graphml")
}

fn dhpp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dhpp"))
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const TRIANGLE_GML: &str = r#"graph [
  node [ id 0 label "a" ]
  node [ id 1 label "b" ]
  node [ id 2 label "c" ]
  edge [ source 0 target 1 latency 1.0 ]
  edge [ source 1 target 2 latency 2.0 ]
  edge [ source 0 target 2 latency 2.5 ]
]"#;

/// Triangle topology, a two-vSDN scenario with k = 2 and a prior covering the first vSDN.
fn small_instance(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let topo = dir.join("tri.gml");
    fs::write(&topo, TRIANGLE_GML).unwrap();
    let scenario = Scenario {
        topology_ref: "tri".into(),
        k: 2,
        seed: 0,
        size_range: SizeRange::new(1, 2),
        vsdns: vec![
            Vsdn {
                id: 0,
                controller_node: 0,
                switch_nodes: vec![1, 2],
            },
            Vsdn {
                id: 1,
                controller_node: 2,
                switch_nodes: vec![0],
            },
        ],
        rng: String::new(),
    };
    let scen = dir.join("scenario.json");
    fs::write(&scen, scenario.to_json()).unwrap();
    let vcps = scenario.vcps();
    let prior = Placement {
        locations: vec![2, 1],
        assignment: vcps
            .iter()
            .filter(|v| v.vsdn_id == 0)
            .map(|v| (*v, 0))
            .collect(),
    };
    let prior_path = dir.join("prior.json");
    fs::write(&prior_path, prior.to_json()).unwrap();
    (topo, scen, prior_path)
}

#[test]
fn topo_info_toy_file() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("toy.gml");
    fs::write(&path, "graph [ node [ id 0 Latitude 0 Longitude 0 ] node [ id 1 Latitude 0 Longitude 1 ] edge [ source 0 target 1 ] ]").unwrap();
    let o = dhpp(&["topo", "info", "--input", p(&path)]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("nodes: 2, links: 1"), "{}", stdout(&o));
}

#[test]
fn topo_info_json_att() {
    let o = dhpp(&["topo", "info", "--input", p(&att_path()), "--json"]);
    assert_eq!(code(&o), 0);
    let info: TopoInfo = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!((info.nodes, info.links), (25, 56));
    assert!(
        info.min_link_latency_ms <= info.mean_link_latency_ms
            && info.mean_link_latency_ms <= info.max_link_latency_ms
    );
    assert!(info.diameter_ms >= info.max_link_latency_ms);
}

#[test]
fn topo_info_missing_file_exits_2() {
    let o = dhpp(&["topo", "info", "--input", "/nonexistent/x.graphml"]);
    assert_eq!(code(&o), 2);
    assert!(!o.stderr.is_empty());
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&dhpp(&[])), 1);
    assert_eq!(code(&dhpp(&["frobnicate"])), 1);
    assert_eq!(code(&dhpp(&["topo", "info"])), 1);
    assert_eq!(code(&dhpp(&["scenario", "gen", "--k", "x"])), 1);
    assert_eq!(code(&dhpp(&["--help"])), 0);
}

#[test]
fn scenario_gen_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        let o = dhpp(&[
            "scenario",
            "gen",
            "--topology",
            p(&att_path()),
            "--n-vsdns",
            "5",
            "--k",
            "3",
            "--seed",
            "11",
            "-o",
            p(out),
        ]);
        assert_eq!(code(&o), 0);
        assert!(stdout(&o).starts_with("vcps: "));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let s = Scenario::from_json(&fs::read_to_string(&a).unwrap()).unwrap();
    assert_eq!(s.vsdns.len(), 5);
    assert_eq!(
        stdout(&dhpp(&[
            "scenario",
            "gen",
            "--topology",
            p(&att_path()),
            "--n-vsdns",
            "5",
            "--k",
            "3",
            "--seed",
            "11",
            "-o",
            p(&a)
        ])),
        format!("vcps: {}\n", s.vcp_count())
    );
}

#[test]
fn scenario_gen_edge_cases() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("s.json");
    let o = dhpp(&[
        "scenario",
        "gen",
        "--topology",
        p(&att_path()),
        "--n-vsdns",
        "0",
        "--k",
        "3",
        "--seed",
        "1",
        "-o",
        p(&out),
    ]);
    assert_eq!(code(&o), 0);
    assert!(Scenario::from_json(&fs::read_to_string(&out).unwrap())
        .unwrap()
        .vsdns
        .is_empty());

    let o = dhpp(&[
        "scenario",
        "gen",
        "--topology",
        p(&att_path()),
        "--n-vsdns",
        "2",
        "--k",
        "26",
        "--seed",
        "1",
        "-o",
        p(&out),
    ]);
    assert_eq!(code(&o), 1);
    let o = dhpp(&[
        "scenario",
        "gen",
        "--topology",
        p(&att_path()),
        "--n-vsdns",
        "2",
        "--k",
        "3",
        "--seed",
        "1",
        "--size-min",
        "5",
        "--size-max",
        "2",
        "-o",
        p(&out),
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn solve_without_prior_omits_reconfigurations() {
    let dir = TempDir::new().unwrap();
    let (topo, scen, _) = small_instance(dir.path());
    let o = dhpp(&[
        "solve",
        "--topology",
        p(&topo),
        "--scenario",
        p(&scen),
        "--prior",
        "none",
    ]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(value["objectives"].get("r_loc").is_none());
    assert!(value["objectives"].get("r_hv").is_none());
    let report = SolveReport::from_json(&text).unwrap();
    assert_eq!(report.objectives.l_avg_ms, report.l_star_ms);
}

#[test]
fn solve_with_prior_matches_oracle() {
    let dir = TempDir::new().unwrap();
    let (topo, scen, prior) = small_instance(dir.path());
    for rho in ["0", "0.1", "0.5"] {
        let solved = dir.path().join("solved.json");
        let o = dhpp(&[
            "solve",
            "--topology",
            p(&topo),
            "--scenario",
            p(&scen),
            "--prior",
            p(&prior),
            "--rho",
            rho,
            "-o",
            p(&solved),
        ]);
        assert_eq!(code(&o), 0);
        let o = dhpp(&[
            "oracle",
            "--topology",
            p(&topo),
            "--scenario",
            p(&scen),
            "--prior",
            p(&prior),
            "--rho",
            rho,
        ]);
        assert_eq!(code(&o), 0);
        let s = SolveReport::from_json(&fs::read_to_string(&solved).unwrap()).unwrap();
        let b = SolveReport::from_json(&stdout(&o)).unwrap();
        assert_eq!(s.placement, b.placement);
        assert_eq!(s.objectives, b.objectives);
        assert_eq!(s.r_loc_star, b.r_loc_star);
        assert!(s.objectives.r_loc.is_some());
    }
}

#[test]
fn oracle_guard_exits_1() {
    let dir = TempDir::new().unwrap();
    let scen = dir.path().join("big.json");
    let o = dhpp(&[
        "scenario",
        "gen",
        "--topology",
        p(&att_path()),
        "--n-vsdns",
        "10",
        "--k",
        "5",
        "--seed",
        "3",
        "-o",
        p(&scen),
    ]);
    assert_eq!(code(&o), 0);
    let o = dhpp(&[
        "oracle",
        "--topology",
        p(&att_path()),
        "--scenario",
        p(&scen),
        "--prior",
        "none",
        "--rho",
        "0",
    ]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("too large"));
}

#[test]
fn solve_runtime_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let (topo, scen, prior) = small_instance(dir.path());
    let o = dhpp(&[
        "solve",
        "--topology",
        p(&topo),
        "--scenario",
        p(&scen),
        "--prior",
        p(&prior),
        "--rho=-0.5",
    ]);
    assert_eq!(code(&o), 2);
    let o = dhpp(&[
        "solve",
        "--topology",
        p(&topo),
        "--scenario",
        "/nonexistent.json",
        "--prior",
        "none",
    ]);
    assert_eq!(code(&o), 2);
}

fn strip_timing(csv: &str) -> Vec<String> {
    csv.lines()
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            f.remove(10);
            f.join(",")
        })
        .collect()
}

#[test]
fn sweep_writes_rows_and_summary() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("config.json");
    let cfg = serde_json::json!({
        "topology": p(&att_path()),
        "k_values": [3],
        "n_vsdns_values": [5],
        "seeds": [1],
        "rho_grid": [0.0, 0.05, 0.1],
    });
    fs::write(&config, cfg.to_string()).unwrap();
    let mut runs = Vec::new();
    for name in ["out1", "out2"] {
        let out = dir.path().join(name);
        let o = dhpp(&["sweep", "--config", p(&config), "-o", p(&out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(stdout(&o), "rows: 3\n");
        let csv = fs::read_to_string(out.join("rows.csv")).unwrap();
        assert_eq!(parse_csv(csv.as_bytes()).unwrap().len(), 3);
        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["rows"], 3);
        runs.push(csv);
    }
    assert_eq!(strip_timing(&runs[0]), strip_timing(&runs[1]));
}

#[test]
fn sweep_with_only_failures_exits_2() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("config.json");
    let cfg = serde_json::json!({
        "topology": p(&att_path()),
        "k_values": [40],
        "n_vsdns_values": [5],
        "seeds": [1],
        "rho_grid": [0.0],
    });
    fs::write(&config, cfg.to_string()).unwrap();
    let o = dhpp(&[
        "sweep",
        "--config",
        p(&config),
        "-o",
        p(&dir.path().join("out")),
    ]);
    assert_eq!(code(&o), 2);
}
