//! Online Betti numbers of the clique complex as comparisons stream in.
//!
//! Simplices enter in filtration order. `β0` is kept by union-find: an edge
//! joining two components kills one, any other edge opens a loop. Triangles
//! are reduced over GF(2) against earlier triangle columns (standard
//! persistence column reduction on the edge boundary matrix); a triangle
//! whose reduced boundary is nonzero fills a loop, otherwise it only encloses
//! a void.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::ComparisonGraph;
use crate::union_find::UnionFind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Simplex {
    Vertex(usize),
    Edge(usize, usize),
    Triangle([usize; 3]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimplexKind {
    Vertex,
    Edge,
    Triangle,
}

impl SimplexKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Vertex => "vertex",
            Self::Edge => "edge",
            Self::Triangle => "triangle",
        }
    }
}

impl fmt::Display for SimplexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Simplex {
    pub fn kind(&self) -> SimplexKind {
        match self {
            Self::Vertex(_) => SimplexKind::Vertex,
            Self::Edge(..) => SimplexKind::Edge,
            Self::Triangle(_) => SimplexKind::Triangle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyEvent {
    pub seq: u64,
    pub kind: SimplexKind,
    pub beta0: usize,
    pub beta1: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyTimeline {
    pub events: Vec<TopologyEvent>,
}

impl TopologyTimeline {
    /// `(β0, β1)` after every event with `seq <= step`, or `(0, 0)` before
    /// the first event.
    pub fn betti_at(&self, step: u64) -> (usize, usize) {
        let idx = self.events.partition_point(|e| e.seq <= step);
        match idx {
            0 => (0, 0),
            k => (self.events[k - 1].beta0, self.events[k - 1].beta1),
        }
    }

    pub fn last(&self) -> Option<&TopologyEvent> {
        self.events.last()
    }

    /// CSV rows `seq,kind,beta0,beta1` with a header line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "seq,kind,beta0,beta1")?;
        for e in &self.events {
            writeln!(out, "{},{},{},{}", e.seq, e.kind, e.beta0, e.beta1)?;
        }
        Ok(())
    }
}

/// Incremental β0/β1 tracker.
#[derive(Debug, Clone, Default)]
pub struct PersistenceTracker {
    vertices: HashMap<usize, usize>,
    components: UnionFind,
    edges: HashMap<(usize, usize), usize>,
    /// Reduced triangle column owning each pivot edge.
    pivots: HashMap<usize, Vec<usize>>,
    triangles: usize,
    beta1: usize,
    timeline: TopologyTimeline,
}

fn sorted_edge(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Symmetric difference of two sorted index lists.
fn xor_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut x, mut y) = (0, 0);
    while x < a.len() && y < b.len() {
        match a[x].cmp(&b[y]) {
            std::cmp::Ordering::Less => {
                out.push(a[x]);
                x += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[y]);
                y += 1;
            }
            std::cmp::Ordering::Equal => {
                x += 1;
                y += 1;
            }
        }
    }
    out.extend_from_slice(&a[x..]);
    out.extend_from_slice(&b[y..]);
    out
}

impl PersistenceTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// A tracker with vertices `0..n` already entered at seq 0.
    pub fn with_vertices(n: usize) -> Self {
        let mut t = Self::new();
        for v in 0..n {
            t.push(0, Simplex::Vertex(v)).expect("fresh vertices");
        }
        t
    }

    pub fn beta0(&self) -> usize {
        self.components.set_count()
    }

    pub fn beta1(&self) -> usize {
        self.beta1
    }

    pub fn timeline(&self) -> &TopologyTimeline {
        &self.timeline
    }

    pub fn into_timeline(self) -> TopologyTimeline {
        self.timeline
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains_key(&sorted_edge(a, b))
    }

    fn vertex(&self, v: usize) -> Result<usize> {
        self.vertices
            .get(&v)
            .copied()
            .ok_or_else(|| Error::FaceOrder(format!("vertex {v} has not entered")))
    }

    fn edge(&self, a: usize, b: usize) -> Result<usize> {
        self.edges
            .get(&sorted_edge(a, b))
            .copied()
            .ok_or_else(|| Error::FaceOrder(format!("edge ({a}, {b}) has not entered")))
    }

    /// Adds one simplex; its faces must already be present.
    pub fn push(&mut self, seq: u64, simplex: Simplex) -> Result<TopologyEvent> {
        match simplex {
            Simplex::Vertex(v) => {
                if self.vertices.contains_key(&v) {
                    return Err(Error::FaceOrder(format!("vertex {v} entered twice")));
                }
                let id = self.components.push();
                self.vertices.insert(v, id);
            }
            Simplex::Edge(a, b) => {
                if a == b {
                    return Err(Error::FaceOrder(format!("edge ({a}, {b}) is a loop")));
                }
                let (ia, ib) = (self.vertex(a)?, self.vertex(b)?);
                let key = sorted_edge(a, b);
                if self.edges.contains_key(&key) {
                    return Err(Error::FaceOrder(format!("edge ({a}, {b}) entered twice")));
                }
                let id = self.edges.len();
                self.edges.insert(key, id);
                if !self.components.union(ia, ib) {
                    self.beta1 += 1;
                }
            }
            Simplex::Triangle(v) => {
                let mut v = v;
                v.sort_unstable();
                let [a, b, c] = v;
                if a == b || b == c {
                    return Err(Error::FaceOrder(format!("degenerate triangle {v:?}")));
                }
                let mut column = vec![self.edge(a, b)?, self.edge(b, c)?, self.edge(a, c)?];
                column.sort_unstable();
                while let Some(&low) = column.last() {
                    match self.pivots.get(&low) {
                        Some(other) => column = xor_sorted(&column, other),
                        None => break,
                    }
                }
                if let Some(&low) = column.last() {
                    self.pivots.insert(low, column);
                    self.beta1 -= 1;
                }
                self.triangles += 1;
            }
        }
        let event = TopologyEvent {
            seq,
            kind: simplex.kind(),
            beta0: self.beta0(),
            beta1: self.beta1,
        };
        self.timeline.events.push(event);
        Ok(event)
    }
}

/// Runs a tracker over a whole stream of `(seq, simplex)`.
pub fn track<I>(stream: I) -> Result<TopologyTimeline>
where
    I: IntoIterator<Item = (u64, Simplex)>,
{
    let mut tracker = PersistenceTracker::new();
    for (seq, s) in stream {
        tracker.push(seq, s)?;
    }
    Ok(tracker.into_timeline())
}

/// Filtration of a comparison graph: all vertices at seq 0, then each new
/// edge at the seq of its first record followed by the triangles it closes.
pub fn filtration(graph: &ComparisonGraph) -> Vec<(u64, Simplex)> {
    let mut out: Vec<(u64, Simplex)> = (0..graph.n()).map(|v| (0, Simplex::Vertex(v))).collect();
    let mut tri = graph.triangles().iter().peekable();
    for e in graph.edges() {
        out.push((e.created, Simplex::Edge(e.i, e.j)));
        while let Some(t) = tri.next_if(|t| t.created == e.created) {
            out.push((t.created, Simplex::Triangle(t.vertices)));
        }
    }
    out
}

/// `(β0, β1)` of `(V, E, T)` from GF(2) ranks of the boundary matrices.
pub fn betti_oracle(n_vertices: usize, edges: &[(usize, usize)], triangles: &[[usize; 3]]) -> (usize, usize) {
    let edge_index: HashMap<(usize, usize), usize> = edges
        .iter()
        .enumerate()
        .map(|(k, &(a, b))| (sorted_edge(a, b), k))
        .collect();
    let d1: Vec<Vec<usize>> = edges.iter().map(|&(a, b)| vec![a, b]).collect();
    let d2: Vec<Vec<usize>> = triangles
        .iter()
        .map(|t| {
            let mut v = *t;
            v.sort_unstable();
            vec![
                edge_index[&(v[0], v[1])],
                edge_index[&(v[1], v[2])],
                edge_index[&(v[0], v[2])],
            ]
        })
        .collect();
    let rank1 = gf2_rank(n_vertices, &d1);
    let rank2 = gf2_rank(edges.len(), &d2);
    (n_vertices - rank1, edges.len() - rank1 - rank2)
}

/// Rank over GF(2) of a matrix given as columns of nonzero row indices.
fn gf2_rank(rows: usize, columns: &[Vec<usize>]) -> usize {
    let words = rows.div_ceil(64).max(1);
    let mut basis: Vec<Option<Vec<u64>>> = vec![None; rows];
    let mut rank = 0;
    for col in columns {
        let mut bits = vec![0u64; words];
        for &r in col {
            bits[r / 64] ^= 1 << (r % 64);
        }
        while let Some(lead) = (0..rows).find(|&r| bits[r / 64] >> (r % 64) & 1 == 1) {
            match &basis[lead] {
                Some(b) => {
                    for (x, y) in bits.iter_mut().zip(b) {
                        *x ^= y;
                    }
                }
                None => {
                    basis[lead] = Some(bits);
                    rank += 1;
                    break;
                }
            }
        }
    }
    rank
}

/// Ensemble Betti curve at one budget step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BettiPoint {
    pub step: u64,
    pub mean_beta0: f64,
    pub mean_beta1: f64,
    /// Fraction of timelines with `β1 = 0`.
    pub loop_free: f64,
}

/// Mean Betti numbers across timelines at each step of `grid`.
pub fn loop_free_fraction(timelines: &[TopologyTimeline], grid: &[u64]) -> Result<Vec<BettiPoint>> {
    if timelines.is_empty() {
        return Err(Error::EmptyInput("no timelines"));
    }
    let r = timelines.len() as f64;
    Ok(grid
        .iter()
        .map(|&step| {
            let (mut b0, mut b1, mut free) = (0.0, 0.0, 0.0);
            for t in timelines {
                let (x, y) = t.betti_at(step);
                b0 += x as f64;
                b1 += y as f64;
                if y == 0 {
                    free += 1.0;
                }
            }
            BettiPoint {
                step,
                mean_beta0: b0 / r,
                mean_beta1: b1 / r,
                loop_free: free / r,
            }
        })
        .collect())
}
