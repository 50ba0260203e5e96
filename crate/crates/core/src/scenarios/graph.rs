//! Undirected simple graphs: random geometric, Erdos-Renyi, and edge-list
//! files.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// Undirected graph without self-loops, stored as sorted adjacency lists.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    n: usize,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    positions: Option<Vec<[f64; 2]>>,
}

/// What [`Graph::from_edges`] discarded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EdgeCleanup {
    pub self_loops: usize,
    pub duplicates: usize,
}

impl Graph {
    /// Builds a graph from unordered pairs; self-loops and repeated edges
    /// (in either orientation) are dropped and counted.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> (Graph, EdgeCleanup) {
        let mut cleanup = EdgeCleanup::default();
        let mut pairs: Vec<(u32, u32)> = Vec::new();
        for (u, v) in edges {
            assert!(u < n && v < n, "edge ({u}, {v}) outside {n} vertices");
            if u == v {
                cleanup.self_loops += 1;
                continue;
            }
            let (a, b) = if u < v { (u, v) } else { (v, u) };
            pairs.push((a as u32, b as u32));
        }
        pairs.sort_unstable();
        let before = pairs.len();
        pairs.dedup();
        cleanup.duplicates = before - pairs.len();

        let mut degree = vec![0usize; n];
        for &(a, b) in &pairs {
            degree[a as usize] += 1;
            degree[b as usize] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for v in 0..n {
            offsets[v + 1] = offsets[v] + degree[v];
        }
        let mut fill = offsets.clone();
        let mut neighbors = vec![0u32; offsets[n]];
        for &(a, b) in &pairs {
            neighbors[fill[a as usize]] = b;
            fill[a as usize] += 1;
            neighbors[fill[b as usize]] = a;
            fill[b as usize] += 1;
        }
        for v in 0..n {
            neighbors[offsets[v]..offsets[v + 1]].sort_unstable();
        }
        (
            Graph {
                n,
                offsets,
                neighbors,
                positions: None,
            },
            cleanup,
        )
    }

    pub fn with_positions(mut self, positions: Vec<[f64; 2]>) -> Self {
        assert_eq!(positions.len(), self.n);
        self.positions = Some(positions);
        self
    }

    pub fn n_vertices(&self) -> usize {
        self.n
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn positions(&self) -> Option<&[[f64; 2]]> {
        self.positions.as_deref()
    }

    pub fn mean_degree(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            2.0 * self.n_edges() as f64 / self.n as f64
        }
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .map(|&v| v as usize)
                .filter(move |&v| u < v)
                .map(move |v| (u, v))
        })
    }

    /// Symmetry, no self-loops, no repeated neighbors.
    pub fn check_invariants(&self) -> Result<()> {
        for u in 0..self.n {
            let nb = self.neighbors(u);
            if nb.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::param(format!("vertex {u} has repeated neighbors")));
            }
            for &v in nb {
                let v = v as usize;
                if v == u {
                    return Err(Error::param(format!("self-loop at {u}")));
                }
                if self.neighbors(v).binary_search(&(u as u32)).is_err() {
                    return Err(Error::param(format!("edge ({u}, {v}) is not symmetric")));
                }
            }
        }
        Ok(())
    }

    /// `(degree, count)` for every degree that occurs, ascending.
    pub fn degree_histogram(&self) -> Vec<(usize, usize)> {
        let mut hist = BTreeMap::new();
        for v in 0..self.n {
            *hist.entry(self.degree(v)).or_insert(0usize) += 1;
        }
        hist.into_iter().collect()
    }

    /// Writes `u v` lines, one per undirected edge, 0-based.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        for (u, v) in self.edges() {
            writeln!(out, "{u} {v}")?;
        }
        Ok(())
    }
}

/// Connection radius `sqrt(kappa / (pi N))`, giving expected degree ~ kappa.
pub fn rgg_radius(n_units: usize, kappa: f64) -> f64 {
    (kappa / (std::f64::consts::PI * n_units as f64)).sqrt()
}

/// Random geometric graph on i.i.d. uniform points of the unit square.
pub fn gen_rgg(n_units: usize, kappa: f64, rng: &mut StreamRng) -> Result<Graph> {
    if n_units < 2 {
        return Err(Error::param("random geometric graph needs N >= 2"));
    }
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::param("kappa must be positive"));
    }
    let positions: Vec<[f64; 2]> = (0..n_units)
        .map(|_| [rng.random::<f64>(), rng.random::<f64>()])
        .collect();
    Ok(geometric_graph(positions, rgg_radius(n_units, kappa)))
}

/// Connects every pair of points within Euclidean distance `radius`.
pub fn geometric_graph(positions: Vec<[f64; 2]>, radius: f64) -> Graph {
    let n = positions.len();
    // Cells at least `radius` wide, so neighbors lie in adjacent cells.
    let cells = ((1.0 / radius).floor() as usize).clamp(1, (n as f64).sqrt().ceil().max(1.0) as usize);
    let cell_of = |x: f64| ((x * cells as f64) as usize).min(cells - 1);
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); cells * cells];
    for (i, p) in positions.iter().enumerate() {
        buckets[cell_of(p[1]) * cells + cell_of(p[0])].push(i);
    }
    let r2 = radius * radius;
    let mut edges = Vec::new();
    for (i, p) in positions.iter().enumerate() {
        let (cx, cy) = (cell_of(p[0]), cell_of(p[1]));
        for y in cy.saturating_sub(1)..=(cy + 1).min(cells - 1) {
            for x in cx.saturating_sub(1)..=(cx + 1).min(cells - 1) {
                for &j in &buckets[y * cells + x] {
                    if j > i {
                        let q = positions[j];
                        let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
                        if d2 <= r2 {
                            edges.push((i, j));
                        }
                    }
                }
            }
        }
    }
    Graph::from_edges(n, edges).0.with_positions(positions)
}

/// Erdos-Renyi `G(N, p)`, sampled by geometric skipping over vertex pairs.
pub fn gen_er(n_units: usize, p_edge: f64, rng: &mut StreamRng) -> Result<Graph> {
    if n_units < 2 {
        return Err(Error::param("Erdos-Renyi graph needs N >= 2"));
    }
    if !(0.0..=1.0).contains(&p_edge) {
        return Err(Error::param(format!("p_edge = {p_edge} is not a probability")));
    }
    let n = n_units;
    let mut edges = Vec::new();
    if p_edge >= 1.0 {
        for v in 1..n {
            edges.extend((0..v).map(|w| (v, w)));
        }
    } else if p_edge > 0.0 {
        let log_q = (1.0 - p_edge).ln();
        let (mut v, mut w) = (1usize, -1i64);
        while v < n {
            let u: f64 = rng.random();
            w += 1 + ((1.0 - u).ln() / log_q).floor() as i64;
            while w >= v as i64 && v < n {
                w -= v as i64;
                v += 1;
            }
            if v < n {
                edges.push((v, w as usize));
            }
        }
    }
    Ok(Graph::from_edges(n, edges).0)
}

/// Outcome of reading an edge-list file.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeListLoad {
    pub graph: Graph,
    pub one_based: bool,
    pub cleanup: EdgeCleanup,
}

/// Reads whitespace-separated integer pairs, one edge per line. Blank lines
/// and lines starting with `#` or `%` are skipped. Ids are 1-based when the
/// smallest id is at least 1, else 0-based.
pub fn load_edge_list(path: impl AsRef<Path>) -> Result<Graph> {
    Ok(load_edge_list_report(path)?.graph)
}

pub fn load_edge_list_report(path: impl AsRef<Path>) -> Result<EdgeListLoad> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let mut raw: Vec<(u64, u64)> = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') || text.starts_with('%') {
            continue;
        }
        let err = |detail: String| Error::EdgeListParse {
            path: path.to_path_buf(),
            line: idx + 1,
            detail,
        };
        let mut tokens = text.split_whitespace();
        let mut id = || -> Result<u64> {
            let tok = tokens.next().ok_or_else(|| err("expected two vertex ids".into()))?;
            tok.parse::<u64>()
                .map_err(|_| err(format!("`{tok}` is not a non-negative integer")))
        };
        let (u, v) = (id()?, id()?);
        if let Some(extra) = tokens.next() {
            return Err(err(format!("unexpected token `{extra}`")));
        }
        raw.push((u, v));
    }
    let min_id = raw.iter().map(|&(u, v)| u.min(v)).min().unwrap_or(0);
    let one_based = min_id >= 1;
    let shift = u64::from(one_based);
    let n = raw
        .iter()
        .map(|&(u, v)| u.max(v) - shift + 1)
        .max()
        .unwrap_or(0) as usize;
    let (graph, cleanup) = Graph::from_edges(
        n,
        raw.iter()
            .map(|&(u, v)| ((u - shift) as usize, (v - shift) as usize)),
    );
    if cleanup.self_loops > 0 {
        log::warn!(
            "{}: dropped {} self-loop(s)",
            path.display(),
            cleanup.self_loops
        );
    }
    Ok(EdgeListLoad {
        graph,
        one_based,
        cleanup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::spawn_stream;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn path_file() {
        let f = write_tmp("0 1\n1 2");
        let g = load_edge_list(f.path()).unwrap();
        assert_eq!((g.n_vertices(), g.n_edges()), (3, 2));
    }

    #[test]
    fn reversed_duplicate_collapses() {
        let f = write_tmp("0 1\n1 0\n");
        let load = load_edge_list_report(f.path()).unwrap();
        assert_eq!(load.graph.n_edges(), 1);
        assert_eq!(load.cleanup.duplicates, 1);
    }

    #[test]
    fn one_based_ids_and_self_loops() {
        let f = write_tmp("# comment\n1 2\n2 2\n\n3 1\n");
        let load = load_edge_list_report(f.path()).unwrap();
        assert!(load.one_based);
        assert_eq!(load.cleanup.self_loops, 1);
        assert_eq!((load.graph.n_vertices(), load.graph.n_edges()), (3, 2));
        assert_eq!(load.graph.neighbors(0), &[1, 2]);
    }

    #[test]
    fn bad_token_reports_line() {
        let f = write_tmp("0 1\n1 x\n");
        match load_edge_list(f.path()) {
            Err(Error::EdgeListParse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(load_edge_list("/nonexistent/edges.txt"), Err(Error::Io(_))));
    }

    #[test]
    fn export_round_trips() {
        let g = gen_er(40, 0.2, &mut spawn_stream(1, "g")).unwrap();
        let mut buf = Vec::new();
        g.write_edge_list(&mut buf).unwrap();
        let f = write_tmp(std::str::from_utf8(&buf).unwrap());
        let back = load_edge_list(f.path()).unwrap();
        // Trailing isolated vertices are not representable in an edge list.
        assert_eq!(back.n_edges(), g.n_edges());
        assert_eq!(back.edges().collect::<Vec<_>>(), g.edges().collect::<Vec<_>>());
    }

    #[test]
    fn er_extremes() {
        let mut rng = spawn_stream(2, "g");
        assert_eq!(gen_er(10, 0.0, &mut rng).unwrap().n_edges(), 0);
        let full = gen_er(5, 1.0, &mut rng).unwrap();
        assert_eq!(full.n_edges(), 10);
        full.check_invariants().unwrap();
    }

    #[test]
    fn rgg_radius_value() {
        assert!((rgg_radius(2000, 8.0) - 0.035_682_482_323_055_42).abs() < 1e-15);
    }

    #[test]
    fn close_pair_is_connected() {
        let g = geometric_graph(vec![[0.0, 0.0], [0.01, 0.0]], 0.02);
        assert_eq!(g.n_edges(), 1);
        let g = geometric_graph(vec![[0.0, 0.0], [0.03, 0.0]], 0.02);
        assert_eq!(g.n_edges(), 0);
    }

    #[test]
    fn tiny_kappa_is_empty() {
        let g = gen_rgg(500, 1e-12, &mut spawn_stream(3, "g")).unwrap();
        assert_eq!(g.n_edges(), 0);
    }

    #[test]
    fn rgg_matches_brute_force() {
        let g = gen_rgg(300, 8.0, &mut spawn_stream(4, "g")).unwrap();
        let pos = g.positions().unwrap();
        let r = rgg_radius(300, 8.0);
        let mut brute = Vec::new();
        for i in 0..300 {
            for j in i + 1..300 {
                let d2 = (pos[i][0] - pos[j][0]).powi(2) + (pos[i][1] - pos[j][1]).powi(2);
                if d2 <= r * r {
                    brute.push((i, j));
                }
            }
        }
        assert_eq!(g.edges().collect::<Vec<_>>(), brute);
        g.check_invariants().unwrap();
    }

    #[test]
    fn mean_degrees_match_targets() {
        let (mut rgg, mut er) = (0.0, 0.0);
        for seed in 0..20 {
            rgg += gen_rgg(2000, 8.0, &mut spawn_stream(seed, "rgg")).unwrap().mean_degree();
            er += gen_er(2000, 3.0 / 2000.0, &mut spawn_stream(seed, "er")).unwrap().mean_degree();
        }
        // Boundary effects pull the geometric graph a little below kappa.
        assert!((rgg / 20.0 / 8.0 - 1.0).abs() < 0.15, "{}", rgg / 20.0);
        assert!((er / 20.0 / 3.0 - 1.0).abs() < 0.15, "{}", er / 20.0);
    }

    #[test]
    fn histogram_counts_all_vertices() {
        let g = gen_er(200, 0.03, &mut spawn_stream(5, "g")).unwrap();
        let hist = g.degree_histogram();
        assert_eq!(hist.iter().map(|h| h.1).sum::<usize>(), 200);
        let degree_sum: usize = hist.iter().map(|(d, c)| d * c).sum();
        assert_eq!(degree_sum, 2 * g.n_edges());
    }
}
