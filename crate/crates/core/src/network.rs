//! Networks: a simple graph with one local measure per vertex.
//!
//! Edges are stored as `(u, v)` with `u < v`, sorted lexicographically. Edge
//! `k` owns the two directed arcs `2k` (`u → v`) and `2k + 1` (`v → u`), so
//! the reverse of arc `a` is `a ^ 1`. Each vertex lists its incident edges by
//! ascending neighbor id; that order defines the measure's ground set (the
//! "slots" referred to by table subsets in network files).

use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::Deserialize;

use crate::ext::ExtReal;
use crate::measure::{LocalMeasure, MeasureError, MeasureSpec};

/// Cavity messages, one per directed arc.
pub type Configuration = Vec<ExtReal>;

#[derive(Debug, thiserror::Error)]
pub enum NetworkError {
    #[error("malformed network file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("vertex at position {position} has id {id}; ids must be 0..n-1 in order")]
    VertexId { position: usize, id: usize },
    #[error("edge {edge} is a self-loop at vertex {vertex}")]
    SelfLoop { edge: usize, vertex: usize },
    #[error("edge {edge} repeats the pair ({u}, {v})")]
    ParallelEdge { edge: usize, u: usize, v: usize },
    #[error("edge {edge} references vertex {vertex}, but there are only {n} vertices")]
    UnknownVertex { edge: usize, vertex: usize, n: usize },
    #[error("vertex {vertex} has degree {degree} but its measure expects {expected} incident edges")]
    DegreeMismatch { vertex: usize, degree: usize, expected: usize },
    #[error("vertex {vertex}: subset slot {slot} is outside its {degree} incident edges")]
    SlotOutOfRange { vertex: usize, slot: usize, degree: usize },
    #[error("vertex {vertex}: {source}")]
    Measure { vertex: usize, source: MeasureError },
    #[error("expected {expected} measures, got {got}")]
    MeasureCount { expected: usize, got: usize },
}

#[derive(Debug, Clone)]
pub struct Network {
    edges: Vec<(usize, usize)>,
    measures: Vec<LocalMeasure>,
    /// Per vertex: `(neighbor, edge index)` by ascending neighbor.
    adjacency: Vec<Vec<(usize, usize)>>,
    /// Slot of the arc's head inside the tail's adjacency.
    arc_slot: Vec<usize>,
}

#[derive(Deserialize)]
struct NetworkFile {
    vertices: Vec<VertexEntry>,
    edges: Vec<[usize; 2]>,
}

#[derive(Deserialize)]
struct VertexEntry {
    id: usize,
    measure: MeasureSpec,
}

impl Network {
    /// Builds a network; `measure_for(vertex, degree)` supplies each measure.
    pub fn build<F>(n: usize, edges: &[(usize, usize)], mut measure_for: F) -> Result<Self, NetworkError>
    where
        F: FnMut(usize, usize) -> Result<LocalMeasure, MeasureError>,
    {
        let (edges, adjacency) = normalize(n, edges)?;
        let mut measures = Vec::with_capacity(n);
        for (vertex, adj) in adjacency.iter().enumerate() {
            let m = measure_for(vertex, adj.len()).map_err(|source| NetworkError::Measure { vertex, source })?;
            if m.ground_size() != adj.len() {
                return Err(NetworkError::DegreeMismatch {
                    vertex,
                    degree: adj.len(),
                    expected: m.ground_size(),
                });
            }
            measures.push(m);
        }
        Ok(Self::assemble(edges, measures, adjacency))
    }

    pub fn new(n: usize, edges: &[(usize, usize)], measures: Vec<LocalMeasure>) -> Result<Self, NetworkError> {
        if measures.len() != n {
            return Err(NetworkError::MeasureCount { expected: n, got: measures.len() });
        }
        let mut it = measures.into_iter();
        Self::build(n, edges, |_, _| Ok(it.next().expect("length checked")))
    }

    /// Same capacity-`b` matching constraint at every vertex.
    pub fn bmatching(n: usize, edges: &[(usize, usize)], b: usize) -> Result<Self, NetworkError> {
        Self::build(n, edges, |_, d| LocalMeasure::bmatching(d, b))
    }

    fn assemble(edges: Vec<(usize, usize)>, measures: Vec<LocalMeasure>, adjacency: Vec<Vec<(usize, usize)>>) -> Self {
        let mut arc_slot = vec![0; 2 * edges.len()];
        for (vertex, adj) in adjacency.iter().enumerate() {
            for (slot, &(_, k)) in adj.iter().enumerate() {
                let arc = if edges[k].0 == vertex { 2 * k } else { 2 * k + 1 };
                arc_slot[arc] = slot;
            }
        }
        Self { edges, measures, adjacency, arc_slot }
    }

    pub fn load(text: &str) -> Result<Self, NetworkError> {
        let file: NetworkFile = serde_json::from_str(text)?;
        let n = file.vertices.len();
        for (position, v) in file.vertices.iter().enumerate() {
            if v.id != position {
                return Err(NetworkError::VertexId { position, id: v.id });
            }
        }
        let edges: Vec<(usize, usize)> = file.edges.iter().map(|&[u, v]| (u, v)).collect();
        let (edges, adjacency) = normalize(n, &edges)?;
        let mut measures = Vec::with_capacity(n);
        for (vertex, entry) in file.vertices.iter().enumerate() {
            let degree = adjacency[vertex].len();
            let m = LocalMeasure::from_spec(&entry.measure, degree).map_err(|e| match e {
                MeasureError::FieldLength { got, .. } => NetworkError::DegreeMismatch {
                    vertex,
                    degree,
                    expected: got.saturating_sub(1),
                },
                MeasureError::ElementOutOfRange { element, .. } => {
                    NetworkError::SlotOutOfRange { vertex, slot: element, degree }
                }
                source => NetworkError::Measure { vertex, source },
            })?;
            measures.push(m);
        }
        Ok(Self::assemble(edges, measures, adjacency))
    }

    /// Canonical JSON: vertices ascending, edges lexicographic, floats with 17
    /// significant digits.
    pub fn save(&self) -> String {
        let mut out = String::from("{\"vertices\":[");
        for (i, m) in self.measures.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{{\"id\":{i},\"measure\":");
            write_measure(&mut out, &m.to_spec());
            out.push('}');
        }
        out.push_str("],\"edges\":[");
        for (k, &(u, v)) in self.edges.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            let _ = write!(out, "[{u},{v}]");
        }
        out.push_str("]}");
        out
    }

    pub fn n_vertices(&self) -> usize {
        self.measures.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_arcs(&self) -> usize {
        2 * self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn measure(&self, vertex: usize) -> &LocalMeasure {
        &self.measures[vertex]
    }

    pub fn measures(&self) -> &[LocalMeasure] {
        &self.measures
    }

    pub fn degree(&self, vertex: usize) -> usize {
        self.adjacency[vertex].len()
    }

    /// `(neighbor, edge)` pairs in slot order.
    pub fn incident(&self, vertex: usize) -> &[(usize, usize)] {
        &self.adjacency[vertex]
    }

    pub fn edge_index(&self, u: usize, v: usize) -> Option<usize> {
        let adj = self.adjacency.get(u)?;
        adj.binary_search_by_key(&v, |&(w, _)| w).ok().map(|i| adj[i].1)
    }

    /// Arc `from → to`, if the edge exists.
    pub fn arc(&self, from: usize, to: usize) -> Option<usize> {
        let k = self.edge_index(from, to)?;
        Some(if from < to { 2 * k } else { 2 * k + 1 })
    }

    pub fn reverse(arc: usize) -> usize {
        arc ^ 1
    }

    pub fn tail(&self, arc: usize) -> usize {
        let (u, v) = self.edges[arc / 2];
        if arc % 2 == 0 {
            u
        } else {
            v
        }
    }

    pub fn head(&self, arc: usize) -> usize {
        self.tail(arc ^ 1)
    }

    /// Slot of `head(arc)` in the ground set of `tail(arc)`.
    pub fn arc_slot(&self, arc: usize) -> usize {
        self.arc_slot[arc]
    }

    /// Arc from `vertex` to its neighbor in `slot`.
    pub fn out_arc(&self, vertex: usize, slot: usize) -> usize {
        let k = self.adjacency[vertex][slot].1;
        if self.edges[k].0 == vertex {
            2 * k
        } else {
            2 * k + 1
        }
    }

    /// Arc into `vertex` from its neighbor in `slot`.
    pub fn in_arc(&self, vertex: usize, slot: usize) -> usize {
        self.out_arc(vertex, slot) ^ 1
    }

    fn bfs(&self, root: usize, radius: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.n_vertices()];
        let mut queue = VecDeque::new();
        dist[root] = 0;
        queue.push_back(root);
        while let Some(u) = queue.pop_front() {
            if dist[u] == radius {
                continue;
            }
            for &(w, _) in &self.adjacency[u] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Whether the radius-`radius` ball around `root`, as an induced subgraph,
    /// is acyclic.
    pub fn ball_is_tree(&self, root: usize, radius: usize) -> bool {
        let dist = self.bfs(root, radius);
        let inside = |v: usize| dist[v] != usize::MAX;
        let n_in = dist.iter().filter(|&&d| d != usize::MAX).count();
        let e_in = self.edges.iter().filter(|&&(u, v)| inside(u) && inside(v)).count();
        // the ball is connected, so it is a tree iff it has n - 1 edges
        e_in + 1 == n_in
    }

    /// Vertices within graph distance `radius` of `root`, in BFS order.
    pub fn ball(&self, root: usize, radius: usize) -> Vec<usize> {
        let dist = self.bfs(root, radius);
        let mut ball: Vec<usize> = (0..self.n_vertices()).filter(|&v| dist[v] != usize::MAX).collect();
        ball.sort_by_key(|&v| (dist[v], v));
        ball
    }

    /// Largest eccentricity over all components.
    pub fn diameter(&self) -> usize {
        (0..self.n_vertices())
            .map(|v| self.bfs(v, usize::MAX).into_iter().filter(|&d| d != usize::MAX).max().unwrap_or(0))
            .max()
            .unwrap_or(0)
    }

    /// Acyclic (a forest; every component a tree).
    pub fn is_tree(&self) -> bool {
        let mut seen = vec![false; self.n_vertices()];
        let mut components = 0;
        for s in 0..self.n_vertices() {
            if seen[s] {
                continue;
            }
            components += 1;
            let mut stack = vec![s];
            seen[s] = true;
            while let Some(u) = stack.pop() {
                for &(w, _) in &self.adjacency[u] {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
        }
        self.n_edges() + components == self.n_vertices()
    }

    /// `hist[d]` = number of vertices of degree `d`.
    pub fn degree_histogram(&self) -> Vec<usize> {
        let max = self.adjacency.iter().map(Vec::len).max().unwrap_or(0);
        let mut hist = vec![0; max + 1];
        for adj in &self.adjacency {
            hist[adj.len()] += 1;
        }
        if self.n_vertices() == 0 {
            hist.clear();
        }
        hist
    }

    /// Induced subgraph on `vertices` (relabelled in the given order), with
    /// new measures from `measure_for(old vertex, new degree)`.
    pub fn induced<F>(&self, vertices: &[usize], measure_for: F) -> Result<(Network, Vec<usize>), NetworkError>
    where
        F: FnMut(usize, usize) -> Result<LocalMeasure, MeasureError>,
    {
        let mut index = vec![usize::MAX; self.n_vertices()];
        for (new, &old) in vertices.iter().enumerate() {
            index[old] = new;
        }
        let edges: Vec<(usize, usize)> = self
            .edges
            .iter()
            .filter(|&&(u, v)| index[u] != usize::MAX && index[v] != usize::MAX)
            .map(|&(u, v)| (index[u], index[v]))
            .collect();
        let mut measure_for = measure_for;
        let net = Network::build(vertices.len(), &edges, |new, d| measure_for(vertices[new], d))?;
        Ok((net, vertices.to_vec()))
    }
}

fn normalize(n: usize, raw: &[(usize, usize)]) -> Result<(Vec<(usize, usize)>, Vec<Vec<(usize, usize)>>), NetworkError> {
    let mut edges = Vec::with_capacity(raw.len());
    for (edge, &(u, v)) in raw.iter().enumerate() {
        for vertex in [u, v] {
            if vertex >= n {
                return Err(NetworkError::UnknownVertex { edge, vertex, n });
            }
        }
        if u == v {
            return Err(NetworkError::SelfLoop { edge, vertex: u });
        }
        edges.push((u.min(v), u.max(v), edge));
    }
    edges.sort_unstable();
    for pair in edges.windows(2) {
        if pair[0].0 == pair[1].0 && pair[0].1 == pair[1].1 {
            return Err(NetworkError::ParallelEdge { edge: pair[1].2.max(pair[0].2), u: pair[0].0, v: pair[0].1 });
        }
    }
    let edges: Vec<(usize, usize)> = edges.into_iter().map(|(u, v, _)| (u, v)).collect();
    let mut adjacency = vec![Vec::new(); n];
    for (k, &(u, v)) in edges.iter().enumerate() {
        adjacency[u].push((v, k));
        adjacency[v].push((u, k));
    }
    for adj in &mut adjacency {
        adj.sort_unstable();
    }
    Ok((edges, adjacency))
}

/// 17 significant digits, valid JSON.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_measure(out: &mut String, spec: &MeasureSpec) {
    match spec {
        MeasureSpec::Bmatching { b } => {
            let _ = write!(out, "{{\"type\":\"bmatching\",\"b\":{b}}}");
        }
        MeasureSpec::Exchangeable { coeffs } => {
            out.push_str("{\"type\":\"exchangeable\",\"coeffs\":[");
            let parts: Vec<String> = coeffs.iter().map(|&c| format_float(c)).collect();
            out.push_str(&parts.join(","));
            out.push_str("]}");
        }
        MeasureSpec::Table { entries } => {
            out.push_str("{\"type\":\"table\",\"entries\":[");
            for (i, e) in entries.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let subset: Vec<String> = e.subset.iter().map(usize::to_string).collect();
                let _ = write!(out, "{{\"subset\":[{}],\"weight\":{}}}", subset.join(","), format_float(e.weight));
            }
            out.push_str("]}");
        }
    }
}

/// Small fixtures used across tests and examples.
pub mod fixtures {
    use super::Network;

    pub fn single_edge(b: usize) -> Network {
        Network::bmatching(2, &[(0, 1)], b).expect("valid fixture")
    }

    pub fn path(n: usize, b: usize) -> Network {
        let edges: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
        Network::bmatching(n, &edges, b).expect("valid fixture")
    }

    pub fn triangle(b: usize) -> Network {
        Network::bmatching(3, &[(0, 1), (1, 2), (0, 2)], b).expect("valid fixture")
    }

    /// Star `K_{1,leaves}` with center 0.
    pub fn star(leaves: usize, b: usize) -> Network {
        let edges: Vec<(usize, usize)> = (1..=leaves).map(|i| (0, i)).collect();
        Network::bmatching(leaves + 1, &edges, b).expect("valid fixture")
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    const TRIANGLE: &str = r#"{"vertices":[
        {"id":0,"measure":{"type":"bmatching","b":1}},
        {"id":1,"measure":{"type":"bmatching","b":1}},
        {"id":2,"measure":{"type":"bmatching","b":1}}],
        "edges":[[0,1],[1,2],[2,0]]}"#;

    #[test]
    fn loads_triangle() {
        let net = Network::load(TRIANGLE).unwrap();
        assert_eq!(net.n_vertices(), 3);
        assert_eq!(net.n_arcs(), 6);
        assert_eq!(net.edges(), &[(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn validation_errors() {
        let self_loop = r#"{"vertices":[{"id":0,"measure":{"type":"bmatching","b":1}}],"edges":[[0,0]]}"#;
        assert!(matches!(Network::load(self_loop), Err(NetworkError::SelfLoop { vertex: 0, .. })));
        let bad_slot = r#"{"vertices":[
            {"id":0,"measure":{"type":"table","entries":[{"subset":[],"weight":1},{"subset":[1],"weight":1}]}},
            {"id":1,"measure":{"type":"bmatching","b":1}}],"edges":[[0,1]]}"#;
        assert!(matches!(
            Network::load(bad_slot),
            Err(NetworkError::SlotOutOfRange { vertex: 0, slot: 1, degree: 1 })
        ));
        let parallel = r#"{"vertices":[{"id":0,"measure":{"type":"bmatching","b":1}},
            {"id":1,"measure":{"type":"bmatching","b":1}}],"edges":[[0,1],[1,0]]}"#;
        assert!(matches!(Network::load(parallel), Err(NetworkError::ParallelEdge { .. })));
        let mismatch = r#"{"vertices":[{"id":0,"measure":{"type":"exchangeable","coeffs":[1,1,1]}},
            {"id":1,"measure":{"type":"bmatching","b":1}}],"edges":[[0,1]]}"#;
        assert!(matches!(
            Network::load(mismatch),
            Err(NetworkError::DegreeMismatch { vertex: 0, degree: 1, expected: 2 })
        ));
        let ids = r#"{"vertices":[{"id":1,"measure":{"type":"bmatching","b":1}}],"edges":[]}"#;
        assert!(matches!(Network::load(ids), Err(NetworkError::VertexId { .. })));
        let unknown = r#"{"vertices":[{"id":0,"measure":{"type":"bmatching","b":1}}],"edges":[[0,4]]}"#;
        assert!(matches!(Network::load(unknown), Err(NetworkError::UnknownVertex { vertex: 4, .. })));
        assert!(matches!(Network::load("{"), Err(NetworkError::Json(_))));
    }

    #[test]
    fn arcs_pair_up() {
        let net = triangle(1);
        for a in 0..net.n_arcs() {
            assert_eq!(Network::reverse(Network::reverse(a)), a);
            assert_eq!(net.tail(a), net.head(a ^ 1));
            assert_eq!(net.arc(net.tail(a), net.head(a)), Some(a));
            let slot = net.arc_slot(a);
            assert_eq!(net.out_arc(net.tail(a), slot), a);
            assert_eq!(net.incident(net.tail(a))[slot].0, net.head(a));
        }
    }

    #[test]
    fn round_trip_is_canonical() {
        let text = r#"{"vertices":[
            {"id":0,"measure":{"type":"table","entries":[{"subset":[],"weight":0.1},{"subset":[0,1],"weight":2.5},{"subset":[1],"weight":1}]}},
            {"id":1,"measure":{"type":"exchangeable","coeffs":[1,0.3333333333333333]}},
            {"id":2,"measure":{"type":"bmatching","b":2}}],
            "edges":[[2,0],[0,1]]}"#;
        let net = Network::load(text).unwrap();
        let saved = net.save();
        let again = Network::load(&saved).unwrap();
        assert_eq!(again.save(), saved);
        for v in 0..3 {
            let m = net.degree(v);
            for mask in 0u32..(1 << m) {
                assert_eq!(net.measure(v).weight_of_mask(mask), again.measure(v).weight_of_mask(mask));
            }
        }
    }

    #[test]
    fn ball_examples() {
        assert!(!triangle(1).ball_is_tree(0, 1));
        assert!(path(5, 1).ball_is_tree(2, 2));
        assert!(star(4, 1).ball_is_tree(0, 1));
    }

    #[test]
    fn structure_examples() {
        assert_eq!(path(3, 1).diameter(), 2);
        assert!(!triangle(1).is_tree());
        assert_eq!(single_edge(1).degree_histogram(), vec![0, 2]);
        let two = Network::bmatching(4, &[(0, 1), (2, 3)], 1).unwrap();
        assert_eq!(two.diameter(), 1);
        assert!(two.is_tree());
    }
}
