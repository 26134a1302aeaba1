//! Physical substrate topologies.
//!
//! A [`Topology`] is an undirected, connected graph whose links carry propagation latencies.
//! Latencies are stored as integer nanoseconds ([`Latency`]) so that path sums, ties and budget
//! comparisons in the solver are exact. The all-pairs shortest-path matrix is computed once at
//! construction time and never changes afterwards.
//!
//! Topologies are usually read from Topology Zoo files (GML or GraphML), where link latencies are
//! derived from the node coordinates with [`link_latency`].

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense node index in `0..N`.
pub type NodeId = usize;

/// Mean earth radius in kilometers.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Signal propagation speed in fiber (2/3 of the speed of light), in km per millisecond.
pub const PROPAGATION_KM_PER_MS: f64 = 200.0;

const NS_PER_MS: f64 = 1e6;

/// A non-negative latency with nanosecond resolution.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Latency(pub u64);

impl Latency {
    pub const ZERO: Latency = Latency(0);

    /// Rounds a millisecond value to the nearest nanosecond. Negative and NaN inputs map to zero.
    pub fn from_ms(ms: f64) -> Self {
        if ms.is_nan() || ms <= 0.0 {
            Latency(0)
        } else {
            Latency((ms * NS_PER_MS).round() as u64)
        }
    }

    pub fn as_ms(self) -> f64 {
        self.0 as f64 / NS_PER_MS
    }

    pub fn as_ns(self) -> u64 {
        self.0
    }
}

impl Add for Latency {
    type Output = Latency;
    fn add(self, rhs: Latency) -> Latency {
        Latency(self.0 + rhs.0)
    }
}

impl AddAssign for Latency {
    fn add_assign(&mut self, rhs: Latency) {
        self.0 += rhs.0;
    }
}

impl Sub for Latency {
    type Output = Latency;
    fn sub(self, rhs: Latency) -> Latency {
        Latency(self.0 - rhs.0)
    }
}

impl std::iter::Sum for Latency {
    fn sum<I: Iterator<Item = Latency>>(iter: I) -> Latency {
        Latency(iter.map(|l| l.0).sum())
    }
}

impl fmt::Display for Latency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6} ms", self.as_ms())
    }
}

/// Geographic position in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoCoord {
    pub latitude: f64,
    pub longitude: f64,
}

impl GeoCoord {
    pub fn new(latitude: f64, longitude: f64) -> Self {
        Self {
            latitude,
            longitude,
        }
    }

    pub fn is_valid(&self) -> bool {
        (-90.0..=90.0).contains(&self.latitude) && (-180.0..=180.0).contains(&self.longitude)
    }
}

/// Great-circle distance in kilometers (haversine formula).
pub fn haversine_km(a: GeoCoord, b: GeoCoord) -> f64 {
    let lat1 = a.latitude.to_radians();
    let lat2 = b.latitude.to_radians();
    let d_lat = (b.latitude - a.latitude).to_radians();
    let d_lon = (b.longitude - a.longitude).to_radians();
    let h = (d_lat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (d_lon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Propagation delay in milliseconds between two geographic positions.
pub fn link_latency(a: GeoCoord, b: GeoCoord) -> f64 {
    haversine_km(a, b) / PROPAGATION_KM_PER_MS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub label: String,
    pub coord: Option<GeoCoord>,
}

/// Undirected link; `a < b` always holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub a: NodeId,
    pub b: NodeId,
    pub latency: Latency,
}

#[derive(Debug, Error, PartialEq)]
pub enum TopoError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("node '{0}' has no coordinates and an incident link has no explicit latency")]
    MissingCoordinates(String),
    #[error("graph is disconnected: no path between node {0} and node {1}")]
    DisconnectedGraph(NodeId, NodeId),
    #[error("io error: {0}")]
    Io(String),
}

/// All-pairs shortest-path latencies, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<Latency>,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: NodeId, j: NodeId) -> Latency {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: NodeId) -> &[Latency] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn to_ms_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| self.row(i).iter().map(|l| l.as_ms()).collect())
            .collect()
    }
}

/// Exact shortest-path latencies between every pair of nodes (Floyd-Warshall on integers).
pub fn all_pairs_latency(n: usize, links: &[Link]) -> Result<DistanceMatrix, TopoError> {
    let mut dist: Vec<Option<u64>> = vec![None; n * n];
    for i in 0..n {
        dist[i * n + i] = Some(0);
    }
    for l in links {
        for (x, y) in [(l.a, l.b), (l.b, l.a)] {
            let cell = &mut dist[x * n + y];
            *cell = Some(cell.map_or(l.latency.0, |c| c.min(l.latency.0)));
        }
    }
    for k in 0..n {
        for i in 0..n {
            let Some(ik) = dist[i * n + k] else { continue };
            for j in 0..n {
                if let Some(kj) = dist[k * n + j] {
                    let via = ik + kj;
                    let cell = &mut dist[i * n + j];
                    if cell.map_or(true, |c| via < c) {
                        *cell = Some(via);
                    }
                }
            }
        }
    }
    let mut data = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            match dist[i * n + j] {
                Some(d) => data.push(Latency(d)),
                None => return Err(TopoError::DisconnectedGraph(i, j)),
            }
        }
    }
    Ok(DistanceMatrix { n, data })
}

/// Immutable physical network.
#[derive(Debug, Clone)]
pub struct Topology {
    name: String,
    nodes: Vec<Node>,
    links: Vec<Link>,
    dist: DistanceMatrix,
}

impl Topology {
    /// Builds a topology from nodes and latency-annotated links. Self-loops are dropped and
    /// parallel links collapse to the minimum latency.
    pub fn from_links(
        name: impl Into<String>,
        nodes: Vec<Node>,
        links: impl IntoIterator<Item = (NodeId, NodeId, Latency)>,
    ) -> Result<Self, TopoError> {
        let n = nodes.len();
        for (i, node) in nodes.iter().enumerate() {
            if node.id != i {
                return Err(TopoError::Parse(format!(
                    "node ids must be dense, found {} at {i}",
                    node.id
                )));
            }
            if let Some(c) = node.coord {
                if !c.is_valid() {
                    return Err(TopoError::Parse(format!(
                        "node '{}' has out-of-range coordinates ({}, {})",
                        node.label, c.latitude, c.longitude
                    )));
                }
            }
        }
        let mut merged: BTreeMap<(NodeId, NodeId), Latency> = BTreeMap::new();
        for (a, b, lat) in links {
            if a >= n || b >= n {
                return Err(TopoError::Parse(format!(
                    "link ({a}, {b}) references an unknown node"
                )));
            }
            if a == b {
                continue;
            }
            let key = (a.min(b), a.max(b));
            merged
                .entry(key)
                .and_modify(|l| *l = (*l).min(lat))
                .or_insert(lat);
        }
        let links: Vec<Link> = merged
            .into_iter()
            .map(|((a, b), latency)| Link { a, b, latency })
            .collect();
        let dist = all_pairs_latency(n, &links)?;
        Ok(Self {
            name: name.into(),
            nodes,
            links,
            dist,
        })
    }

    /// Convenience constructor for unlabeled graphs with link latencies in milliseconds.
    pub fn from_ms_edges(n: usize, edges: &[(NodeId, NodeId, f64)]) -> Result<Self, TopoError> {
        let nodes = (0..n)
            .map(|id| Node {
                id,
                label: format!("n{id}"),
                coord: None,
            })
            .collect();
        Self::from_links(
            "synthetic",
            nodes,
            edges.iter().map(|&(a, b, ms)| (a, b, Latency::from_ms(ms))),
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn dist_matrix(&self) -> &DistanceMatrix {
        &self.dist
    }

    #[inline]
    pub fn dist(&self, a: NodeId, b: NodeId) -> Latency {
        self.dist.get(a, b)
    }

    pub fn dist_ms(&self, a: NodeId, b: NodeId) -> f64 {
        self.dist.get(a, b).as_ms()
    }

    pub fn node_by_label(&self, label: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.label == label)
    }

    pub fn summary(&self) -> TopologySummary {
        let lats: Vec<f64> = self.links.iter().map(|l| l.latency.as_ms()).collect();
        let (min, max, mean) = if lats.is_empty() {
            (0.0, 0.0, 0.0)
        } else {
            (
                lats.iter().copied().fold(f64::INFINITY, f64::min),
                lats.iter().copied().fold(0.0, f64::max),
                lats.iter().sum::<f64>() / lats.len() as f64,
            )
        };
        let diameter = self
            .dist
            .data
            .iter()
            .copied()
            .max()
            .unwrap_or(Latency::ZERO);
        TopologySummary {
            name: self.name.clone(),
            nodes: self.node_count(),
            links: self.links.len(),
            min_link_latency_ms: min,
            max_link_latency_ms: max,
            mean_link_latency_ms: mean,
            diameter_ms: diameter.as_ms(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologySummary {
    pub name: String,
    pub nodes: usize,
    pub links: usize,
    pub min_link_latency_ms: f64,
    pub max_link_latency_ms: f64,
    pub mean_link_latency_ms: f64,
    pub diameter_ms: f64,
}

/// Raw graph as read from a file, before latencies are resolved.
#[derive(Debug, Default)]
struct RawGraph {
    name: Option<String>,
    /// (original id, label, latitude, longitude)
    nodes: Vec<(String, Option<String>, Option<f64>, Option<f64>)>,
    /// (source id, target id, explicit latency in ms)
    edges: Vec<(String, String, Option<f64>)>,
}

/// Parses a Topology Zoo document. GraphML is detected by a leading `<`, anything else is read
/// as GML.
pub fn parse_topology(source: &[u8]) -> Result<Topology, TopoError> {
    let text =
        std::str::from_utf8(source).map_err(|e| TopoError::Parse(format!("invalid utf-8: {e}")))?;
    let raw = if text.trim_start().starts_with('<') {
        parse_graphml(text)?
    } else {
        parse_gml(text)?
    };
    build_topology(raw, "topology")
}

/// Reads and parses a topology file; the file stem becomes the name unless the document has one.
pub fn load_topology(path: &std::path::Path) -> Result<Topology, TopoError> {
    let bytes =
        std::fs::read(path).map_err(|e| TopoError::Io(format!("{}: {e}", path.display())))?;
    let text =
        std::str::from_utf8(&bytes).map_err(|e| TopoError::Parse(format!("invalid utf-8: {e}")))?;
    let raw = if text.trim_start().starts_with('<') {
        parse_graphml(text)?
    } else {
        parse_gml(text)?
    };
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "topology".to_string());
    build_topology(raw, &stem)
}

fn build_topology(raw: RawGraph, default_name: &str) -> Result<Topology, TopoError> {
    let mut index: HashMap<&str, NodeId> = HashMap::new();
    let mut nodes = Vec::with_capacity(raw.nodes.len());
    for (i, (orig, label, lat, lon)) in raw.nodes.iter().enumerate() {
        if index.insert(orig.as_str(), i).is_some() {
            return Err(TopoError::Parse(format!("duplicate node id '{orig}'")));
        }
        let coord = match (lat, lon) {
            (Some(lat), Some(lon)) => Some(GeoCoord::new(*lat, *lon)),
            _ => None,
        };
        nodes.push(Node {
            id: i,
            label: label.clone().unwrap_or_else(|| orig.clone()),
            coord,
        });
    }
    let mut links = Vec::with_capacity(raw.edges.len());
    for (src, dst, explicit) in &raw.edges {
        let a = *index
            .get(src.as_str())
            .ok_or_else(|| TopoError::Parse(format!("edge references unknown node '{src}'")))?;
        let b = *index
            .get(dst.as_str())
            .ok_or_else(|| TopoError::Parse(format!("edge references unknown node '{dst}'")))?;
        let ms = match explicit {
            Some(ms) if ms.is_finite() && *ms >= 0.0 => *ms,
            Some(ms) => {
                return Err(TopoError::Parse(format!(
                    "invalid link latency {ms} on ({src}, {dst})"
                )))
            }
            None => match (nodes[a].coord, nodes[b].coord) {
                (Some(ca), Some(cb)) => link_latency(ca, cb),
                (None, _) => return Err(TopoError::MissingCoordinates(nodes[a].label.clone())),
                (_, None) => return Err(TopoError::MissingCoordinates(nodes[b].label.clone())),
            },
        };
        links.push((a, b, Latency::from_ms(ms)));
    }
    let name = raw.name.unwrap_or_else(|| default_name.to_string());
    Topology::from_links(name, nodes, links)
}

fn parse_number(s: &str, what: &str) -> Result<f64, TopoError> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| TopoError::Parse(format!("invalid {what} value '{s}'")))
}

fn parse_graphml(text: &str) -> Result<RawGraph, TopoError> {
    let doc = roxmltree::Document::parse(text).map_err(|e| TopoError::Parse(e.to_string()))?;
    let root = doc.root_element();
    if !root.has_tag_name("graphml") {
        return Err(TopoError::Parse(format!(
            "expected <graphml>, found <{}>",
            root.tag_name().name()
        )));
    }
    // key id -> attribute name (lowercased)
    let mut keys: HashMap<&str, String> = HashMap::new();
    for key in root.children().filter(|n| n.has_tag_name("key")) {
        if let (Some(id), Some(name)) = (key.attribute("id"), key.attribute("attr.name")) {
            keys.insert(id, name.to_ascii_lowercase());
        }
    }
    let graph = root
        .children()
        .find(|n| n.has_tag_name("graph"))
        .ok_or_else(|| TopoError::Parse("no <graph> element".into()))?;

    let data_of = |node: roxmltree::Node<'_, '_>| -> HashMap<String, String> {
        node.children()
            .filter(|c| c.has_tag_name("data"))
            .filter_map(|c| {
                let key = c.attribute("key")?;
                let name = keys
                    .get(key)
                    .cloned()
                    .unwrap_or_else(|| key.to_ascii_lowercase());
                Some((name, c.text().unwrap_or("").to_string()))
            })
            .collect()
    };

    let mut raw = RawGraph::default();
    let graph_data = data_of(graph);
    raw.name = graph_data
        .get("label")
        .or_else(|| graph_data.get("network"))
        .cloned();
    for child in graph.children().filter(|n| n.is_element()) {
        if child.has_tag_name("node") {
            let id = child
                .attribute("id")
                .ok_or_else(|| TopoError::Parse("node without id".into()))?;
            let data = data_of(child);
            let lat = data
                .get("latitude")
                .map(|v| parse_number(v, "Latitude"))
                .transpose()?;
            let lon = data
                .get("longitude")
                .map(|v| parse_number(v, "Longitude"))
                .transpose()?;
            raw.nodes
                .push((id.to_string(), data.get("label").cloned(), lat, lon));
        } else if child.has_tag_name("edge") {
            let src = child
                .attribute("source")
                .ok_or_else(|| TopoError::Parse("edge without source".into()))?;
            let dst = child
                .attribute("target")
                .ok_or_else(|| TopoError::Parse("edge without target".into()))?;
            let data = data_of(child);
            let lat = data
                .get("latency")
                .map(|v| parse_number(v, "latency"))
                .transpose()?;
            raw.edges.push((src.to_string(), dst.to_string(), lat));
        }
    }
    Ok(raw)
}

#[derive(Debug, Clone, PartialEq)]
enum GmlValue {
    Num(String),
    Str(String),
    List(Vec<(String, GmlValue)>),
}

impl GmlValue {
    fn scalar(&self) -> Option<&str> {
        match self {
            GmlValue::Num(s) | GmlValue::Str(s) => Some(s),
            GmlValue::List(_) => None,
        }
    }
}

struct GmlLexer<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    text: &'a str,
}

#[derive(Debug, PartialEq)]
enum GmlToken {
    Open,
    Close,
    Word(String),
    Str(String),
}

impl<'a> GmlLexer<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            chars: text.char_indices().peekable(),
            text,
        }
    }

    fn next_token(&mut self) -> Result<Option<GmlToken>, TopoError> {
        loop {
            let Some(&(start, c)) = self.chars.peek() else {
                return Ok(None);
            };
            if c.is_whitespace() {
                self.chars.next();
                continue;
            }
            if c == '#' {
                while let Some((_, c)) = self.chars.next() {
                    if c == '\n' {
                        break;
                    }
                }
                continue;
            }
            self.chars.next();
            return match c {
                '[' => Ok(Some(GmlToken::Open)),
                ']' => Ok(Some(GmlToken::Close)),
                '"' => {
                    let mut s = String::new();
                    loop {
                        match self.chars.next() {
                            Some((_, '"')) => break,
                            Some((_, c)) => s.push(c),
                            None => return Err(TopoError::Parse("unterminated string".into())),
                        }
                    }
                    Ok(Some(GmlToken::Str(s)))
                }
                _ => {
                    let mut end = start + c.len_utf8();
                    while let Some(&(i, c)) = self.chars.peek() {
                        if c.is_whitespace() || c == '[' || c == ']' || c == '"' {
                            break;
                        }
                        end = i + c.len_utf8();
                        self.chars.next();
                    }
                    Ok(Some(GmlToken::Word(self.text[start..end].to_string())))
                }
            };
        }
    }
}

fn parse_gml_list(
    lexer: &mut GmlLexer<'_>,
    nested: bool,
) -> Result<Vec<(String, GmlValue)>, TopoError> {
    let mut items = Vec::new();
    loop {
        let key = match lexer.next_token()? {
            None if nested => return Err(TopoError::Parse("unexpected end of GML input".into())),
            None => return Ok(items),
            Some(GmlToken::Close) if nested => return Ok(items),
            Some(GmlToken::Word(w)) => w,
            Some(t) => return Err(TopoError::Parse(format!("expected key, found {t:?}"))),
        };
        let value = match lexer.next_token()? {
            Some(GmlToken::Open) => GmlValue::List(parse_gml_list(lexer, true)?),
            Some(GmlToken::Str(s)) => GmlValue::Str(s),
            Some(GmlToken::Word(w)) => GmlValue::Num(w),
            Some(GmlToken::Close) | None => {
                return Err(TopoError::Parse(format!("key '{key}' has no value")))
            }
        };
        items.push((key, value));
    }
}

fn parse_gml(text: &str) -> Result<RawGraph, TopoError> {
    let mut lexer = GmlLexer::new(text);
    let top = parse_gml_list(&mut lexer, false)?;
    let graph = top
        .iter()
        .find_map(|(k, v)| match v {
            GmlValue::List(items) if k == "graph" => Some(items),
            _ => None,
        })
        .ok_or_else(|| TopoError::Parse("no 'graph [ ... ]' block".into()))?;

    let field = |items: &[(String, GmlValue)], name: &str| -> Option<String> {
        items
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .and_then(|(_, v)| v.scalar().map(str::to_string))
    };

    let mut raw = RawGraph {
        name: field(graph, "label").or_else(|| field(graph, "Network")),
        ..Default::default()
    };
    for (key, value) in graph {
        let GmlValue::List(items) = value else {
            continue;
        };
        match key.as_str() {
            "node" => {
                let id =
                    field(items, "id").ok_or_else(|| TopoError::Parse("node without id".into()))?;
                let lat = field(items, "Latitude")
                    .map(|v| parse_number(&v, "Latitude"))
                    .transpose()?;
                let lon = field(items, "Longitude")
                    .map(|v| parse_number(&v, "Longitude"))
                    .transpose()?;
                raw.nodes.push((id, field(items, "label"), lat, lon));
            }
            "edge" => {
                let src = field(items, "source")
                    .ok_or_else(|| TopoError::Parse("edge without source".into()))?;
                let dst = field(items, "target")
                    .ok_or_else(|| TopoError::Parse("edge without target".into()))?;
                let lat = field(items, "latency")
                    .map(|v| parse_number(&v, "latency"))
                    .transpose()?;
                raw.edges.push((src, dst, lat));
            }
            _ => {}
        }
    }
    Ok(raw)
}
