//! Directed-path indoor environment: positions, one-way flight edges and the
//! recharge stations UAVs may land on.
//!
//! A [`MapGraph`] is immutable once built. All-pairs shortest travel times are
//! computed eagerly with Dijkstra so that the scheduler can query routes in
//! constant time.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use num_rational::Rational64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Travel time reported for pairs with no directed route.
pub const UNREACHABLE: i64 = i64::MAX / 4;

/// Dense index of a position. Indices follow ascending label order, so
/// comparing two `PosId`s compares their labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PosId(pub u32);

impl PosId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Error)]
pub enum MapError {
    #[error("malformed map document: {0}")]
    Parse(String),
    #[error("unknown position `{0}`")]
    UnknownPosition(String),
    #[error("topology error: {0}")]
    Topology(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Position {
    pub id: String,
    pub coords: [f64; 3],
    pub is_recharge_station: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub from: PosId,
    pub to: PosId,
    pub travel_time: i64,
}

/// All-pairs shortest directed travel times in whole seconds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteTable {
    n: usize,
    dist: Vec<i64>,
}

impl RouteTable {
    fn build(n: usize, edges: &[Edge]) -> Self {
        let mut adjacency: Vec<Vec<(usize, i64)>> = vec![Vec::new(); n];
        for e in edges {
            adjacency[e.from.index()].push((e.to.index(), e.travel_time));
        }
        let mut dist = vec![UNREACHABLE; n * n];
        for source in 0..n {
            let row = &mut dist[source * n..(source + 1) * n];
            row[source] = 0;
            let mut heap = BinaryHeap::new();
            heap.push(Reverse((0i64, source)));
            while let Some(Reverse((d, u))) = heap.pop() {
                if d > row[u] {
                    continue;
                }
                for &(v, w) in &adjacency[u] {
                    let nd = d + w;
                    if nd < row[v] {
                        row[v] = nd;
                        heap.push(Reverse((nd, v)));
                    }
                }
            }
        }
        RouteTable { n, dist }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, from: PosId, to: PosId) -> i64 {
        self.dist[from.index() * self.n + to.index()]
    }
}

#[derive(Debug, Clone)]
pub struct MapGraph {
    positions: Vec<Position>,
    index: HashMap<String, PosId>,
    edges: Vec<Edge>,
    scale_factor: Rational64,
    speed: f64,
    bounds: Option<[f64; 3]>,
    routes: RouteTable,
    nearest: Vec<Option<(PosId, i64)>>,
}

impl MapGraph {
    pub fn from_document(doc: &MapDocument) -> Result<Self, MapError> {
        let speed = doc.speed.unwrap_or(1.0);
        if !(speed.is_finite() && speed > 0.0) {
            return Err(MapError::Parse(format!("speed must be positive, got {speed}")));
        }
        let bounds = doc.bounds.as_ref().map(|b| [b.x, b.y, b.z]);

        let mut sorted: Vec<&PositionDoc> = doc.positions.iter().collect();
        sorted.sort_by(|a, b| a.id.cmp(&b.id));
        let mut positions = Vec::with_capacity(sorted.len());
        let mut index = HashMap::with_capacity(sorted.len());
        for (i, p) in sorted.iter().enumerate() {
            if p.id.is_empty() {
                return Err(MapError::Parse("empty position id".into()));
            }
            if index.insert(p.id.clone(), PosId(i as u32)).is_some() {
                return Err(MapError::Parse(format!("duplicate position id `{}`", p.id)));
            }
            let coords = [p.x, p.y, p.z];
            if let Some(b) = bounds {
                let inside = coords.iter().zip(b.iter()).all(|(c, hi)| *c >= 0.0 && c <= hi);
                if !inside {
                    return Err(MapError::Parse(format!(
                        "position `{}` at {:?} lies outside bounds {:?}",
                        p.id, coords, b
                    )));
                }
            }
            positions.push(Position {
                id: p.id.clone(),
                coords,
                is_recharge_station: p.recharge,
            });
        }

        let mut edges = Vec::with_capacity(doc.edges.len());
        let mut seen = HashSet::new();
        for e in &doc.edges {
            let from = *index
                .get(&e.from)
                .ok_or_else(|| MapError::Parse(format!("edge references unknown position `{}`", e.from)))?;
            let to = *index
                .get(&e.to)
                .ok_or_else(|| MapError::Parse(format!("edge references unknown position `{}`", e.to)))?;
            if from == to {
                return Err(MapError::Parse(format!("self-loop edge at `{}`", e.from)));
            }
            if !seen.insert((from, to)) {
                return Err(MapError::Parse(format!("duplicate edge {} -> {}", e.from, e.to)));
            }
            let travel_time = match e.time {
                Some(t) if t >= 1 => t,
                Some(t) => {
                    return Err(MapError::Parse(format!(
                        "edge {} -> {} has non-positive travel time {t}",
                        e.from, e.to
                    )))
                }
                None => derived_travel_time(
                    &positions[from.index()].coords,
                    &positions[to.index()].coords,
                    speed,
                ),
            };
            edges.push(Edge { from, to, travel_time });
        }

        let scale_factor = match &doc.scale {
            Some(s) => s
                .parse::<Rational64>()
                .map_err(|_| MapError::Parse(format!("invalid scale `{s}`")))?,
            None => Rational64::from_integer(1),
        };
        if scale_factor <= Rational64::from_integer(0) {
            return Err(MapError::Parse("scale must be positive".into()));
        }

        Self::assemble(positions, index, edges, scale_factor, speed, bounds)
    }

    fn assemble(
        positions: Vec<Position>,
        index: HashMap<String, PosId>,
        edges: Vec<Edge>,
        scale_factor: Rational64,
        speed: f64,
        bounds: Option<[f64; 3]>,
    ) -> Result<Self, MapError> {
        let routes = RouteTable::build(positions.len(), &edges);
        let stations: Vec<PosId> = positions
            .iter()
            .enumerate()
            .filter(|(_, p)| p.is_recharge_station)
            .map(|(i, _)| PosId(i as u32))
            .collect();
        if stations.is_empty() {
            return Err(MapError::Topology("map declares no recharge station".into()));
        }

        let mut nearest = Vec::with_capacity(positions.len());
        for i in 0..positions.len() {
            let from = PosId(i as u32);
            // stations are in ascending id order, so strict `<` keeps the smaller id on ties
            let mut best: Option<(PosId, i64)> = None;
            for &s in &stations {
                let d = routes.get(from, s);
                if d < UNREACHABLE && best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((s, d));
                }
            }
            nearest.push(best);
        }

        for (i, p) in positions.iter().enumerate() {
            if p.is_recharge_station {
                continue;
            }
            let id = PosId(i as u32);
            if nearest[i].is_none() {
                return Err(MapError::Topology(format!(
                    "position `{}` cannot reach any recharge station",
                    p.id
                )));
            }
            if !stations.iter().any(|&s| routes.get(s, id) < UNREACHABLE) {
                return Err(MapError::Topology(format!(
                    "position `{}` is not reachable from any recharge station",
                    p.id
                )));
            }
        }

        Ok(MapGraph {
            positions,
            index,
            edges,
            scale_factor,
            speed,
            bounds,
            routes,
            nearest,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, MapError> {
        let doc: MapDocument = serde_json::from_str(text).map_err(|e| MapError::Parse(e.to_string()))?;
        Self::from_document(&doc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MapError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The bundled lab-scale map (six locations `a`..`f`, three stations).
    pub fn lab_demo() -> Self {
        Self::from_json(include_str!("../data/lab_map.json")).expect("bundled lab map is valid")
    }

    pub fn to_document(&self) -> MapDocument {
        MapDocument {
            positions: self
                .positions
                .iter()
                .map(|p| PositionDoc {
                    id: p.id.clone(),
                    x: p.coords[0],
                    y: p.coords[1],
                    z: p.coords[2],
                    recharge: p.is_recharge_station,
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeDoc {
                    from: self.label(e.from).to_string(),
                    to: self.label(e.to).to_string(),
                    time: Some(e.travel_time),
                })
                .collect(),
            speed: Some(self.speed),
            bounds: self.bounds.map(|[x, y, z]| BoundsDoc { x, y, z }),
            scale: (self.scale_factor != Rational64::from_integer(1)).then(|| self.scale_factor.to_string()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("map document serializes")
    }

    /// Multiplies coordinates and travel times by `factor`; travel times are
    /// rounded up to whole seconds. Topology is unchanged.
    pub fn scaled(&self, factor: Rational64) -> Result<Self, MapError> {
        if factor <= Rational64::from_integer(0) {
            return Err(MapError::Parse("scale factor must be positive".into()));
        }
        let f = *factor.numer() as f64 / *factor.denom() as f64;
        let positions = self
            .positions
            .iter()
            .map(|p| Position {
                id: p.id.clone(),
                coords: p.coords.map(|c| c * f),
                is_recharge_station: p.is_recharge_station,
            })
            .collect();
        let edges = self
            .edges
            .iter()
            .map(|e| {
                let scaled = Rational64::from_integer(e.travel_time) * factor;
                Edge {
                    travel_time: scaled.ceil().to_integer().max(1),
                    ..*e
                }
            })
            .collect();
        Self::assemble(
            positions,
            self.index.clone(),
            edges,
            self.scale_factor * factor,
            self.speed,
            self.bounds.map(|b| b.map(|c| c * f)),
        )
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn scale_factor(&self) -> Rational64 {
        self.scale_factor
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn routes(&self) -> &RouteTable {
        &self.routes
    }

    pub fn id(&self, label: &str) -> Result<PosId, MapError> {
        self.index
            .get(label)
            .copied()
            .ok_or_else(|| MapError::UnknownPosition(label.to_string()))
    }

    pub fn label(&self, id: PosId) -> &str {
        &self.positions[id.index()].id
    }

    pub fn is_station(&self, id: PosId) -> bool {
        self.positions[id.index()].is_recharge_station
    }

    pub fn stations(&self) -> impl Iterator<Item = PosId> + '_ {
        self.positions
            .iter()
            .enumerate()
            .filter(|(_, p)| p.is_recharge_station)
            .map(|(i, _)| PosId(i as u32))
    }

    /// Positions where tasks may take place.
    pub fn work_positions(&self) -> impl Iterator<Item = PosId> + '_ {
        self.positions
            .iter()
            .enumerate()
            .filter(|(_, p)| !p.is_recharge_station)
            .map(|(i, _)| PosId(i as u32))
    }

    #[inline]
    pub fn travel(&self, from: PosId, to: PosId) -> i64 {
        self.routes.get(from, to)
    }

    pub fn shortest_travel_time(&self, from: &str, to: &str) -> Result<i64, MapError> {
        Ok(self.travel(self.id(from)?, self.id(to)?))
    }

    /// Nearest station by directed travel time; ties go to the smaller id.
    #[inline]
    pub fn nearest_station(&self, from: PosId) -> Option<(PosId, i64)> {
        self.nearest[from.index()]
    }

    /// Battery reserve at `pos`: seconds needed to reach the nearest station.
    #[inline]
    pub fn reserve(&self, pos: PosId) -> i64 {
        self.nearest[pos.index()].map_or(UNREACHABLE, |(_, d)| d)
    }

    pub fn nearest_recharge_station(&self, from: &str) -> Result<(String, i64), MapError> {
        let id = self.id(from)?;
        let (s, d) = self
            .nearest_station(id)
            .ok_or_else(|| MapError::Topology(format!("no station reachable from `{from}`")))?;
        Ok((self.label(s).to_string(), d))
    }
}

impl fmt::Display for PosId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

fn derived_travel_time(a: &[f64; 3], b: &[f64; 3], speed: f64) -> i64 {
    let d = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    // guard against float noise turning an exact integer into the next second
    let t = d / speed;
    let rounded = t.round();
    let secs = if (t - rounded).abs() < 1e-9 { rounded } else { t.ceil() };
    (secs as i64).max(1)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MapDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<String>,
    pub positions: Vec<PositionDoc>,
    pub edges: Vec<EdgeDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BoundsDoc {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PositionDoc {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    #[serde(default)]
    pub recharge: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EdgeDoc {
    pub from: String,
    pub to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<i64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(positions: &[(&str, bool)], edges: &[(&str, &str, i64)]) -> MapDocument {
        MapDocument {
            bounds: None,
            speed: None,
            scale: None,
            positions: positions
                .iter()
                .enumerate()
                .map(|(i, (id, r))| PositionDoc {
                    id: id.to_string(),
                    x: i as f64,
                    y: 0.0,
                    z: 0.0,
                    recharge: *r,
                })
                .collect(),
            edges: edges
                .iter()
                .map(|(a, b, t)| EdgeDoc {
                    from: a.to_string(),
                    to: b.to_string(),
                    time: Some(*t),
                })
                .collect(),
        }
    }

    /// Exhaustive simple-path enumeration, used as an oracle for Dijkstra.
    fn brute_force_shortest(g: &MapGraph, from: PosId, to: PosId) -> i64 {
        fn dfs(g: &MapGraph, at: PosId, to: PosId, visited: &mut Vec<bool>, acc: i64, best: &mut i64) {
            if at == to {
                *best = (*best).min(acc);
                return;
            }
            for e in g.edges().iter().filter(|e| e.from == at) {
                if !visited[e.to.index()] {
                    visited[e.to.index()] = true;
                    dfs(g, e.to, to, visited, acc + e.travel_time, best);
                    visited[e.to.index()] = false;
                }
            }
        }
        let mut visited = vec![false; g.len()];
        visited[from.index()] = true;
        let mut best = UNREACHABLE;
        dfs(g, from, to, &mut visited, 0, &mut best);
        best
    }

    #[test]
    fn demo_map_loads_with_stations() {
        let g = MapGraph::lab_demo();
        assert!(g.stations().count() >= 1);
        assert_eq!(g.len(), 27);
        assert_eq!(g.scale_factor(), Rational64::from_integer(1));
    }

    #[test]
    fn single_station_without_edges_is_valid() {
        let g = MapGraph::from_document(&doc(&[("r1", true)], &[])).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.nearest_recharge_station("r1").unwrap(), ("r1".to_string(), 0));
    }

    #[test]
    fn position_without_route_to_station_is_rejected() {
        let d = doc(&[("a", false), ("r", true)], &[("r", "a", 3)]);
        assert!(matches!(MapGraph::from_document(&d), Err(MapError::Topology(_))));
        let d = doc(&[("a", false), ("r", true)], &[("a", "r", 3)]);
        assert!(matches!(MapGraph::from_document(&d), Err(MapError::Topology(_))));
    }

    #[test]
    fn malformed_documents_are_parse_errors() {
        assert!(matches!(MapGraph::from_json("{not json"), Err(MapError::Parse(_))));
        let d = doc(&[("a", false), ("a", true)], &[]);
        assert!(matches!(MapGraph::from_document(&d), Err(MapError::Parse(_))));
        let d = doc(&[("r", true)], &[("r", "zz", 1)]);
        assert!(matches!(MapGraph::from_document(&d), Err(MapError::Parse(_))));
        let d = doc(&[("r", true), ("a", false)], &[("r", "a", 0), ("a", "r", 1)]);
        assert!(matches!(MapGraph::from_document(&d), Err(MapError::Parse(_))));
    }

    #[test]
    fn shortest_travel_is_directed() {
        let d = doc(
            &[("u", false), ("v", false), ("r", true)],
            &[("u", "v", 7), ("r", "u", 1), ("v", "r", 1)],
        );
        let g = MapGraph::from_document(&d).unwrap();
        assert_eq!(g.shortest_travel_time("u", "u").unwrap(), 0);
        assert_eq!(g.shortest_travel_time("u", "v").unwrap(), 7);
        // v -> r -> u exists here; drop it to observe the sentinel
        let d = doc(&[("u", true), ("v", true)], &[("u", "v", 7)]);
        let g = MapGraph::from_document(&d).unwrap();
        assert_eq!(g.shortest_travel_time("v", "u").unwrap(), UNREACHABLE);
        assert!(matches!(g.shortest_travel_time("v", "nope"), Err(MapError::UnknownPosition(_))));
    }

    #[test]
    fn demo_routes_match_path_enumeration() {
        let g = MapGraph::lab_demo();
        let a2 = g.id("a2").unwrap();
        let c2 = g.id("c2").unwrap();
        let expected = brute_force_shortest(&g, a2, c2);
        assert!(expected < UNREACHABLE);
        assert_eq!(g.travel(a2, c2), expected);
        // a sample of other pairs, including reverse directions
        for (x, y) in [("c2", "a2"), ("f4", "b1"), ("r2", "e1"), ("d3", "r1"), ("b2", "b1")] {
            let (x, y) = (g.id(x).unwrap(), g.id(y).unwrap());
            assert_eq!(g.travel(x, y), brute_force_shortest(&g, x, y));
        }
    }

    #[test]
    fn nearest_station_matches_exhaustive_minimum() {
        let g = MapGraph::lab_demo();
        for label in ["c3", "a1", "f2", "d4"] {
            let from = g.id(label).unwrap();
            let expected = g
                .stations()
                .map(|s| (brute_force_shortest(&g, from, s), s))
                .min()
                .unwrap();
            assert_eq!(g.nearest_station(from), Some((expected.1, expected.0)), "from {label}");
        }
        let r1 = g.id("r1").unwrap();
        assert_eq!(g.nearest_station(r1), Some((r1, 0)));
    }

    #[test]
    fn nearest_station_ties_prefer_smaller_id() {
        let d = doc(
            &[("a", false), ("s2", true), ("s1", true)],
            &[("a", "s1", 4), ("a", "s2", 4), ("s1", "a", 1), ("s2", "a", 1)],
        );
        let g = MapGraph::from_document(&d).unwrap();
        assert_eq!(g.nearest_recharge_station("a").unwrap(), ("s1".to_string(), 4));
    }

    #[test]
    fn scaling_multiplies_weights_and_keeps_station_choice() {
        let d = doc(
            &[("u", false), ("r", true)],
            &[("u", "r", 7), ("r", "u", 3)],
        );
        let g = MapGraph::from_document(&d).unwrap();
        let same = g.scaled(Rational64::from_integer(1)).unwrap();
        assert_eq!(same.routes(), g.routes());
        let big = g.scaled(Rational64::from_integer(8)).unwrap();
        assert_eq!(big.shortest_travel_time("u", "r").unwrap(), 56);
        assert_eq!(big.scale_factor(), Rational64::from_integer(8));

        let lab = MapGraph::lab_demo();
        let ind = lab.scaled(Rational64::from_integer(8)).unwrap();
        for p in lab.work_positions() {
            let (s, d) = lab.nearest_station(p).unwrap();
            let (s8, d8) = ind.nearest_station(p).unwrap();
            assert_eq!(s, s8);
            assert_eq!(d * 8, d8);
        }
    }

    #[test]
    fn fractional_scaling_rounds_up() {
        let d = doc(&[("u", false), ("r", true)], &[("u", "r", 3), ("r", "u", 3)]);
        let g = MapGraph::from_document(&d).unwrap();
        let half = g.scaled(Rational64::new(1, 2)).unwrap();
        assert_eq!(half.shortest_travel_time("u", "r").unwrap(), 2);
    }

    #[test]
    fn document_round_trip_preserves_routes() {
        let g = MapGraph::lab_demo().scaled(Rational64::from_integer(8)).unwrap();
        let again = MapGraph::from_json(&g.to_json()).unwrap();
        assert_eq!(again.routes(), g.routes());
        assert_eq!(again.scale_factor(), g.scale_factor());
    }
}
