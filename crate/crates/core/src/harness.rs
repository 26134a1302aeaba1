//! Experiment sweeps over (k, number of vSDNs, seed, rho).
//!
//! A cell embeds `n_vsdns` random vSDNs, takes the latency-optimal placement of that embedding as
//! the incumbent, adds one vSDN and re-optimizes with every relaxation factor of the grid. Rows are
//! exported as CSV and averaged into Pareto-frontier tables.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::PathBuf;

use log::{info, warn};
use ordered_float::OrderedFloat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::placement::Placement;
use crate::scenario::{add_vsdn, generate_scenario, Scenario, ScenarioError, SizeRange, RNG_NAME};
use crate::solver::{solve_multistage, solve_multistage_grid, solve_stage1, SolveError};
use crate::topo::Topology;

/// XOR-ed into a cell seed to derive the seed of the added vSDN.
pub const ADD_SEED_XOR: u64 = 0x9E37_79B9_7F4A_7C15;

/// Exact CSV header of exported rows.
pub const CSV_HEADER: [&str; 12] = [
    "topology_ref",
    "k",
    "n_vsdns_initial",
    "seed",
    "rho",
    "l_star_ms",
    "l_avg_ms",
    "r_loc",
    "r_hv",
    "vcp_count",
    "solve_time_ms",
    "mode",
];

/// Seed of the vSDN added in step `step` (0-based) of a cell.
pub fn add_seed(seed: u64, step: usize) -> u64 {
    (seed ^ ADD_SEED_XOR).wrapping_add(step as u64)
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid sweep config: {0}")]
    InvalidConfig(String),
    #[error("no rows to aggregate")]
    EmptyGroup,
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed row: {0}")]
    MalformedRow(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// One vSDN is added to the initial embedding.
    SingleAdd,
    /// vSDNs are added one after another; each rho follows its own trajectory of placements.
    SequentialAdd,
}

impl SweepMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepMode::SingleAdd => "single_add",
            SweepMode::SequentialAdd => "sequential_add",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "single_add" => Some(SweepMode::SingleAdd),
            "sequential_add" => Some(SweepMode::SequentialAdd),
            _ => None,
        }
    }
}

fn default_k_values() -> Vec<usize> {
    vec![3, 5, 7]
}

fn default_n_vsdns_values() -> Vec<usize> {
    vec![5, 15, 40]
}

fn default_seeds() -> Vec<u64> {
    (1..=30).collect()
}

/// `{0.00, 0.01, ..., 0.10}`
pub fn default_rho_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 100.0).collect()
}

fn default_mode() -> SweepMode {
    SweepMode::SingleAdd
}

fn default_steps() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub topology: PathBuf,
    #[serde(default = "default_k_values")]
    pub k_values: Vec<usize>,
    #[serde(default = "default_n_vsdns_values")]
    pub n_vsdns_values: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_rho_grid")]
    pub rho_grid: Vec<f64>,
    #[serde(default = "default_mode")]
    pub mode: SweepMode,
    /// Defaults to `[2, min(10, N)]`.
    #[serde(default)]
    pub size_range: Option<SizeRange>,
    /// Number of add/solve cycles per rho in `sequential_add` mode.
    #[serde(default = "default_steps")]
    pub steps: usize,
}

impl SweepConfig {
    pub fn new(topology: impl Into<PathBuf>) -> Self {
        Self {
            topology: topology.into(),
            k_values: default_k_values(),
            n_vsdns_values: default_n_vsdns_values(),
            seeds: default_seeds(),
            rho_grid: default_rho_grid(),
            mode: default_mode(),
            size_range: None,
            steps: default_steps(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::InvalidConfig(m.to_string()));
        if self.k_values.is_empty()
            || self.n_vsdns_values.is_empty()
            || self.seeds.is_empty()
            || self.rho_grid.is_empty()
        {
            return bad("k_values, n_vsdns_values, seeds and rho_grid must be non-empty");
        }
        if self.rho_grid.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return bad("rho values must be finite and non-negative");
        }
        if self.rho_grid.windows(2).any(|w| w[0] > w[1]) {
            return bad("rho_grid must be sorted ascending");
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return bad("seeds must be pairwise distinct");
        }
        if self.steps == 0 {
            return bad("steps must be at least 1");
        }
        Ok(())
    }
}

/// One (cell, rho) outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResultRow {
    pub topology_ref: String,
    pub k: usize,
    pub n_vsdns_initial: usize,
    pub seed: u64,
    pub rho: f64,
    pub l_star_ms: f64,
    pub l_avg_ms: f64,
    pub r_loc: usize,
    pub r_hv: usize,
    pub vcp_count: usize,
    pub solve_time_ms: f64,
    pub mode: SweepMode,
}

fn initial_prior(t: &Topology, s: &Scenario) -> Result<Placement, SolveError> {
    if s.vcp_count() == 0 {
        // nothing to serve; every subset ties and the lexicographically first one wins
        return Ok(Placement {
            locations: (0..s.k).collect(),
            assignment: BTreeMap::new(),
        });
    }
    Ok(solve_stage1(t, s)?.placement)
}

/// Runs one (k, n_vsdns, seed) cell over the whole rho grid.
#[allow(clippy::too_many_arguments)]
pub fn run_experiment_cell(
    t: &Topology,
    k: usize,
    n_vsdns: usize,
    seed: u64,
    rho_grid: &[f64],
    mode: SweepMode,
    size_range: Option<SizeRange>,
    steps: usize,
) -> Result<Vec<SweepResultRow>, HarnessError> {
    let initial = generate_scenario(t, n_vsdns, k, seed, size_range)?;
    let prior = initial_prior(t, &initial)?;
    let row = |s: &Scenario, rho: f64, out: &crate::solver::SolveOutcome| SweepResultRow {
        topology_ref: s.topology_ref.clone(),
        k,
        n_vsdns_initial: n_vsdns,
        seed,
        rho,
        l_star_ms: out.bounds.l_star_ms,
        l_avg_ms: out.objectives.l_avg_ms,
        r_loc: out.objectives.r_loc,
        r_hv: out.objectives.r_hv,
        vcp_count: s.vcp_count(),
        solve_time_ms: out.solve_time_ms,
        mode,
    };
    let mut rows = Vec::new();
    match mode {
        SweepMode::SingleAdd => {
            let (after, _) = add_vsdn(t, &initial, add_seed(seed, 0))?;
            let outs = solve_multistage_grid(t, &after, &prior, rho_grid)?;
            for (&rho, out) in rho_grid.iter().zip(&outs) {
                rows.push(row(&after, rho, out));
            }
        }
        SweepMode::SequentialAdd => {
            for &rho in rho_grid {
                let mut current = initial.clone();
                let mut incumbent = prior.clone();
                for step in 0..steps {
                    let (after, _) = add_vsdn(t, &current, add_seed(seed, step))?;
                    let out = solve_multistage(t, &after, &incumbent, rho)?;
                    rows.push(row(&after, rho, &out));
                    incumbent = out.placement;
                    current = after;
                }
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub k: usize,
    pub n_vsdns_initial: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutput {
    pub rows: Vec<SweepResultRow>,
    pub failures: Vec<CellFailure>,
}

/// Runs every cell of the config grid on `jobs` worker threads. Rows come back sorted by
/// (k, n_vsdns_initial, seed, rho); the order does not depend on `jobs`.
pub fn run_sweep(
    config: &SweepConfig,
    t: &Topology,
    jobs: usize,
) -> Result<SweepOutput, HarnessError> {
    config.validate()?;
    let cells: Vec<(usize, usize, u64)> = config
        .k_values
        .iter()
        .flat_map(|&k| {
            config
                .n_vsdns_values
                .iter()
                .flat_map(move |&n| config.seeds.iter().map(move |&seed| (k, n, seed)))
        })
        .collect();
    let total = cells.len();
    let done = std::sync::atomic::AtomicUsize::new(0);
    let run = |&(k, n, seed): &(usize, usize, u64)| {
        let res = run_experiment_cell(
            t,
            k,
            n,
            seed,
            &config.rho_grid,
            config.mode,
            config.size_range,
            config.steps,
        );
        let finished = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
        match &res {
            Ok(_) => info!("cell k={k} n_vsdns={n} seed={seed} done ({finished}/{total})"),
            Err(e) => warn!("cell k={k} n_vsdns={n} seed={seed} failed: {e}"),
        }
        ((k, n, seed), res)
    };
    let results: Vec<_> = if jobs <= 1 {
        cells.iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| HarnessError::InvalidConfig(format!("thread pool: {e}")))?;
        pool.install(|| cells.par_iter().map(run).collect())
    };
    let mut out = SweepOutput::default();
    for ((k, n, seed), res) in results {
        match res {
            Ok(rows) => out.rows.extend(rows),
            Err(e) => out.failures.push(CellFailure {
                k,
                n_vsdns_initial: n,
                seed,
                error: e.to_string(),
            }),
        }
    }
    sort_rows(&mut out.rows);
    Ok(out)
}

/// Stable sort by (k, n_vsdns_initial, seed, rho).
pub fn sort_rows(rows: &mut [SweepResultRow]) {
    rows.sort_by(|a, b| {
        (a.k, a.n_vsdns_initial, a.seed)
            .cmp(&(b.k, b.n_vsdns_initial, b.seed))
            .then(a.rho.total_cmp(&b.rho))
    });
}

/// Mean objectives of one group of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub k: usize,
    /// `None` when averaged over all vSDN counts.
    pub n_vsdns_initial: Option<usize>,
    pub rho: f64,
    pub runs: usize,
    pub mean_l_star_ms: f64,
    pub mean_l_avg_ms: f64,
    pub mean_r_loc: f64,
    pub mean_r_hv: f64,
}

fn aggregate_by<K: Ord>(
    rows: &[SweepResultRow],
    key: impl Fn(&SweepResultRow) -> K,
    build: impl Fn(&K, &[&SweepResultRow]) -> AggregateRow,
) -> Result<Vec<AggregateRow>, HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::EmptyGroup);
    }
    let mut groups: BTreeMap<K, Vec<&SweepResultRow>> = BTreeMap::new();
    for r in rows {
        groups.entry(key(r)).or_default().push(r);
    }
    Ok(groups.iter().map(|(k, g)| build(k, g)).collect())
}

fn means(k: usize, n: Option<usize>, rho: f64, g: &[&SweepResultRow]) -> AggregateRow {
    let c = g.len() as f64;
    AggregateRow {
        k,
        n_vsdns_initial: n,
        rho,
        runs: g.len(),
        mean_l_star_ms: g.iter().map(|r| r.l_star_ms).sum::<f64>() / c,
        mean_l_avg_ms: g.iter().map(|r| r.l_avg_ms).sum::<f64>() / c,
        mean_r_loc: g.iter().map(|r| r.r_loc as f64).sum::<f64>() / c,
        mean_r_hv: g.iter().map(|r| r.r_hv as f64).sum::<f64>() / c,
    }
}

/// Means grouped by (k, n_vsdns_initial, rho), sorted by that key.
pub fn aggregate(rows: &[SweepResultRow]) -> Result<Vec<AggregateRow>, HarnessError> {
    aggregate_by(
        rows,
        |r| (r.k, r.n_vsdns_initial, OrderedFloat(r.rho)),
        |&(k, n, rho), g| means(k, Some(n), rho.0, g),
    )
}

/// Means grouped by (k, rho), pooling all vSDN counts and runs.
pub fn aggregate_by_k(rows: &[SweepResultRow]) -> Result<Vec<AggregateRow>, HarnessError> {
    aggregate_by(
        rows,
        |r| (r.k, OrderedFloat(r.rho)),
        |&(k, rho), g| means(k, None, rho.0, g),
    )
}

/// Formats like C's `%g` with six significant digits.
pub fn format_g6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.5e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..6).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim(mantissa), sign, exp.abs())
    } else {
        let decimals = (5 - exp) as usize;
        trim(&format!("{:.*}", decimals, x))
    }
}

fn row_record(r: &SweepResultRow) -> [String; 12] {
    [
        r.topology_ref.clone(),
        r.k.to_string(),
        r.n_vsdns_initial.to_string(),
        r.seed.to_string(),
        format_g6(r.rho),
        format_g6(r.l_star_ms),
        format_g6(r.l_avg_ms),
        r.r_loc.to_string(),
        r.r_hv.to_string(),
        r.vcp_count.to_string(),
        format_g6(r.solve_time_ms),
        r.mode.as_str().to_string(),
    ]
}

/// Writes rows as RFC 4180 CSV, sorted by (k, n_vsdns_initial, seed, rho).
pub fn export_csv(rows: &[SweepResultRow], sink: impl Write) -> Result<(), HarnessError> {
    let mut sorted = rows.to_vec();
    sort_rows(&mut sorted);
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(sink);
    w.write_record(CSV_HEADER)?;
    for r in &sorted {
        w.write_record(row_record(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_csv(source: impl Read) -> Result<Vec<SweepResultRow>, HarnessError> {
    let mut rdr = csv::Reader::from_reader(source);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(HarnessError::MalformedRow(format!(
            "unexpected header {header:?}"
        )));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let bad = |i: usize| {
            HarnessError::MalformedRow(format!("field {} = '{}'", CSV_HEADER[i], field(i)))
        };
        let int = |i: usize| field(i).parse::<usize>().map_err(|_| bad(i));
        let float = |i: usize| field(i).parse::<f64>().map_err(|_| bad(i));
        rows.push(SweepResultRow {
            topology_ref: field(0).to_string(),
            k: int(1)?,
            n_vsdns_initial: int(2)?,
            seed: field(3).parse().map_err(|_| bad(3))?,
            rho: float(4)?,
            l_star_ms: float(5)?,
            l_avg_ms: float(6)?,
            r_loc: int(7)?,
            r_hv: int(8)?,
            vcp_count: int(9)?,
            solve_time_ms: float(10)?,
            mode: SweepMode::parse(field(11)).ok_or_else(|| bad(11))?,
        });
    }
    Ok(rows)
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSummary {
    pub config: SweepConfig,
    pub rng: String,
    pub add_seed_xor: u64,
    pub rows: usize,
    pub groups: Vec<AggregateRow>,
    pub groups_by_k: Vec<AggregateRow>,
    pub failures: Vec<CellFailure>,
}

impl SweepSummary {
    pub fn new(config: &SweepConfig, out: &SweepOutput) -> Self {
        let (groups, groups_by_k) = if out.rows.is_empty() {
            (Vec::new(), Vec::new())
        } else {
            (
                aggregate(&out.rows).expect("rows non-empty"),
                aggregate_by_k(&out.rows).expect("rows non-empty"),
            )
        };
        Self {
            config: config.clone(),
            rng: RNG_NAME.to_string(),
            add_seed_xor: ADD_SEED_XOR,
            rows: out.rows.len(),
            groups,
            groups_by_k,
            failures: out.failures.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(k: usize, n: usize, seed: u64, rho: f64, r_loc: usize) -> SweepResultRow {
        SweepResultRow {
            topology_ref: "AttMpls".into(),
            k,
            n_vsdns_initial: n,
            seed,
            rho,
            l_star_ms: 7.17,
            l_avg_ms: 7.5,
            r_loc,
            r_hv: r_loc / 2,
            vcp_count: 30,
            solve_time_ms: 12.5,
            mode: SweepMode::SingleAdd,
        }
    }

    #[test]
    fn g6_formatting() {
        assert_eq!(format_g6(0.0), "0");
        assert_eq!(format_g6(0.01), "0.01");
        assert_eq!(format_g6(0.07), "0.07");
        assert_eq!(format_g6(7.16789123), "7.16789");
        assert_eq!(format_g6(1234.5678), "1234.57");
        assert_eq!(format_g6(123456.0), "123456");
        assert_eq!(format_g6(1234567.0), "1.23457e+06");
        assert_eq!(format_g6(0.0000123), "1.23e-05");
        assert_eq!(format_g6(2.0), "2");
        assert_eq!(format_g6(-3.5), "-3.5");
        assert_eq!(format_g6(0.1 + 0.2), "0.3");
    }

    #[test]
    fn empty_export_is_header_only() {
        let mut buf = Vec::new();
        export_csv(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "topology_ref,k,n_vsdns_initial,seed,rho,l_star_ms,l_avg_ms,r_loc,r_hv,vcp_count,solve_time_ms,mode\r\n"
        );
    }

    #[test]
    fn golden_line() {
        let mut r = row(5, 40, 17, 0.01, 3);
        r.l_star_ms = 7.167891234;
        r.l_avg_ms = 7.2345678;
        r.solve_time_ms = 1534.123456;
        r.vcp_count = 251;
        let mut buf = Vec::new();
        export_csv(&[r], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().nth(1).unwrap(),
            "AttMpls,5,40,17,0.01,7.16789,7.23457,3,1,251,1534.12,single_add"
        );
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            row(3, 5, 1, 0.0, 4),
            row(3, 5, 1, 0.05, 2),
            row(5, 15, 2, 0.1, 0),
        ];
        let mut buf = Vec::new();
        export_csv(&rows, &mut buf).unwrap();
        assert_eq!(parse_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn export_sorts_rows() {
        let rows = vec![
            row(5, 5, 1, 0.0, 1),
            row(3, 40, 2, 0.1, 1),
            row(3, 40, 2, 0.0, 1),
            row(3, 5, 9, 0.0, 1),
        ];
        let mut buf = Vec::new();
        export_csv(&rows, &mut buf).unwrap();
        let back = parse_csv(buf.as_slice()).unwrap();
        let keys: Vec<_> = back
            .iter()
            .map(|r| (r.k, r.n_vsdns_initial, r.seed, r.rho))
            .collect();
        assert_eq!(
            keys,
            vec![
                (3, 5, 9, 0.0),
                (3, 40, 2, 0.0),
                (3, 40, 2, 0.1),
                (5, 5, 1, 0.0)
            ]
        );
    }

    #[test]
    fn aggregate_means() {
        let single = aggregate(&[row(5, 5, 1, 0.0, 3)]).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].mean_r_loc, 3.0);
        assert_eq!(single[0].mean_l_avg_ms, 7.5);

        let pair = aggregate(&[row(5, 5, 1, 0.0, 0), row(5, 5, 2, 0.0, 2)]).unwrap();
        assert_eq!(pair[0].mean_r_loc, 1.0);
        assert_eq!(pair[0].runs, 2);

        assert!(matches!(aggregate(&[]), Err(HarnessError::EmptyGroup)));
    }

    #[test]
    fn aggregate_groupings() {
        let rows = vec![
            row(5, 40, 1, 0.01, 2),
            row(5, 5, 1, 0.0, 4),
            row(5, 40, 1, 0.0, 6),
            row(5, 5, 1, 0.01, 0),
        ];
        let g = aggregate(&rows).unwrap();
        let keys: Vec<_> = g.iter().map(|a| (a.k, a.n_vsdns_initial, a.rho)).collect();
        assert_eq!(
            keys,
            vec![
                (5, Some(5), 0.0),
                (5, Some(5), 0.01),
                (5, Some(40), 0.0),
                (5, Some(40), 0.01)
            ]
        );
        let by_k = aggregate_by_k(&rows).unwrap();
        assert_eq!(by_k.len(), 2);
        assert_eq!(by_k[0].mean_r_loc, 5.0);
        assert_eq!(by_k[1].mean_r_loc, 1.0);
    }

    #[test]
    fn config_validation() {
        let mut c = SweepConfig::new("x.graphml");
        assert!(c.validate().is_ok());
        assert_eq!(c.rho_grid.len(), 11);
        assert_eq!(c.seeds.len(), 30);
        c.rho_grid = vec![0.1, 0.0];
        assert!(c.validate().is_err());
        c.rho_grid = vec![0.0];
        c.seeds = vec![1, 1];
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_json_defaults() {
        let c: SweepConfig =
            serde_json::from_str(r#"{"topology": "t.gml", "k_values": [5]}"#).unwrap();
        assert_eq!(c.k_values, vec![5]);
        assert_eq!(c.n_vsdns_values, vec![5, 15, 40]);
        assert_eq!(c.mode, SweepMode::SingleAdd);
    }
}
