//! Comparison data model: records, the comparison multigraph with its clique
//! complex, and the chain operators between scores, edge flows and triangles.
//!
//! Every record is one coordinate of the flow space. Records are stored in a
//! canonical orientation (`item_i < item_j`); a record reported as `(j, i)` is
//! flipped on insertion and remembers that it was `reversed`, so the reported
//! value is `-choice`. All operators act on canonical values:
//!
//! ```text
//! coboundary      (D0 x)(a, i, j) = x_i - x_j
//! curl            (D1 y)(i, j, k) = ybar_ij + ybar_jk - ybar_ik     (i < j < k)
//! laplacian       L = D0^T D0,  L_ij = -m_ij,  L_ii = sum_j m_ij
//! ```
//!
//! where `ybar_ij` is the mean of the flow over the `m_ij` records on edge
//! `{i, j}`.

use std::ops::{Add, Deref, DerefMut, Neg, Sub};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::union_find::UnionFind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VoterId(pub u32);

/// Whether choices are restricted to `{+1, -1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueMode {
    #[default]
    Binary,
    /// Real-valued choices, with both orientations of a pair reportable.
    General,
}

impl FromStr for ValueMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(Self::Binary),
            "general" => Ok(Self::General),
            other => Err(Error::UnknownMode(other.to_string())),
        }
    }
}

/// One voter's preference on one ordered pair.
///
/// `choice > 0` means `item_i` is preferred to `item_j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub voter: VoterId,
    pub item_i: usize,
    pub item_j: usize,
    pub choice: f64,
    /// Arrival index, assigned by [`ComparisonGraph::add_comparison`].
    pub seq: u64,
    /// Set when the record was reported as `(item_j, item_i)` and flipped
    /// into canonical orientation.
    pub reversed: bool,
}

impl ComparisonRecord {
    pub fn new(voter: VoterId, item_i: usize, item_j: usize, choice: f64) -> Self {
        Self {
            voter,
            item_i,
            item_j,
            choice,
            seq: 0,
            reversed: false,
        }
    }

    /// Canonical orientation `item_i < item_j`, flipping the choice if needed.
    pub fn canonical(self) -> Self {
        if self.item_i > self.item_j {
            Self {
                item_i: self.item_j,
                item_j: self.item_i,
                choice: -self.choice,
                reversed: !self.reversed,
                ..self
            }
        } else {
            self
        }
    }

    /// The choice in the orientation the voter reported.
    pub fn reported_choice(&self) -> f64 {
        if self.reversed {
            -self.choice
        } else {
            self.choice
        }
    }

    /// The ordered pair as the voter reported it.
    pub fn reported_pair(&self) -> (usize, usize) {
        if self.reversed {
            (self.item_j, self.item_i)
        } else {
            (self.item_i, self.item_j)
        }
    }
}

/// A real value per record coordinate, indexed like [`ComparisonGraph::records`].
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFlow(pub DVector<f64>);

impl EdgeFlow {
    pub fn zeros(m: usize) -> Self {
        Self(DVector::zeros(m))
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Self(DVector::from_vec(values))
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }
}

impl Deref for EdgeFlow {
    type Target = DVector<f64>;

    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

impl DerefMut for EdgeFlow {
    fn deref_mut(&mut self) -> &mut DVector<f64> {
        &mut self.0
    }
}

impl From<DVector<f64>> for EdgeFlow {
    fn from(v: DVector<f64>) -> Self {
        Self(v)
    }
}

impl Add for &EdgeFlow {
    type Output = EdgeFlow;

    fn add(self, rhs: &EdgeFlow) -> EdgeFlow {
        EdgeFlow(&self.0 + &rhs.0)
    }
}

impl Sub for &EdgeFlow {
    type Output = EdgeFlow;

    fn sub(self, rhs: &EdgeFlow) -> EdgeFlow {
        EdgeFlow(&self.0 - &rhs.0)
    }
}

impl Neg for &EdgeFlow {
    type Output = EdgeFlow;

    fn neg(self) -> EdgeFlow {
        EdgeFlow(-&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    /// Seq of the record that first compared this pair.
    pub created: u64,
}

/// A 3-clique `{i, j, k}` with `i < j < k`, oriented `i -> j -> k -> i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triangle {
    pub vertices: [usize; 3],
    /// Seq of the record whose edge completed the clique.
    pub created: u64,
}

/// What changed when a record was added.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Insertion {
    pub seq: u64,
    pub edge: usize,
    pub new_edge: bool,
    /// Indices into [`ComparisonGraph::triangles`] of newly completed cliques.
    pub new_triangles: std::ops::Range<usize>,
}

const NO_EDGE: u32 = u32::MAX;

/// Comparison multigraph over `n` items with its clique complex.
#[derive(Debug, Clone)]
pub struct ComparisonGraph {
    n: usize,
    mode: ValueMode,
    records: Vec<ComparisonRecord>,
    record_edge: Vec<usize>,
    multiplicity: Vec<u32>,
    edge_slot: Vec<u32>,
    edges: Vec<Edge>,
    edge_records: Vec<Vec<usize>>,
    triangles: Vec<Triangle>,
    edge_triangles: Vec<Vec<(usize, f64)>>,
}

impl ComparisonGraph {
    /// An empty graph accepting real-valued choices.
    pub fn new(n: usize) -> Self {
        Self::with_mode(n, ValueMode::General)
    }

    pub fn with_mode(n: usize, mode: ValueMode) -> Self {
        Self {
            n,
            mode,
            records: Vec::new(),
            record_edge: Vec::new(),
            multiplicity: vec![0; n * n],
            edge_slot: vec![NO_EDGE; n * n],
            edges: Vec::new(),
            edge_records: Vec::new(),
            triangles: Vec::new(),
            edge_triangles: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mode(&self) -> ValueMode {
        self.mode
    }

    pub fn records(&self) -> &[ComparisonRecord] {
        &self.records
    }

    pub fn record_count(&self) -> usize {
        self.records.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    /// Edge index of record `k`.
    pub fn record_edge(&self, k: usize) -> usize {
        self.record_edge[k]
    }

    /// Record indices lying on edge `e`.
    pub fn edge_records(&self, e: usize) -> &[usize] {
        &self.edge_records[e]
    }

    /// `(edge index, sign)` for the three edges of each triangle, in the
    /// order `(i,j)`, `(j,k)`, `(i,k)`; the last carries sign `-1`.
    pub fn triangle_edges(&self, t: usize) -> [(usize, f64); 3] {
        let [i, j, k] = self.triangles[t].vertices;
        [
            (self.edge_index(i, j).expect("triangle edge"), 1.0),
            (self.edge_index(j, k).expect("triangle edge"), 1.0),
            (self.edge_index(i, k).expect("triangle edge"), -1.0),
        ]
    }

    /// Triangles containing edge `e` with the orientation sign of `e` in them.
    pub fn edge_triangles(&self, e: usize) -> &[(usize, f64)] {
        &self.edge_triangles[e]
    }

    pub fn multiplicity(&self, i: usize, j: usize) -> u32 {
        self.multiplicity[i * self.n + j]
    }

    pub fn edge_multiplicity(&self, e: usize) -> usize {
        self.edge_records[e].len()
    }

    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.n || j >= self.n {
            return None;
        }
        match self.edge_slot[i * self.n + j] {
            NO_EDGE => None,
            e => Some(e as usize),
        }
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edge_index(i, j).is_some()
    }

    /// Observed choices as a flow in canonical orientation.
    pub fn flow(&self) -> EdgeFlow {
        EdgeFlow(DVector::from_iterator(
            self.records.len(),
            self.records.iter().map(|r| r.choice),
        ))
    }

    /// Appends a record, updating multiplicities, edges and triangles.
    pub fn add_comparison(&mut self, rec: ComparisonRecord) -> Result<Insertion> {
        for index in [rec.item_i, rec.item_j] {
            if index >= self.n {
                return Err(Error::ItemOutOfRange { index, n: self.n });
            }
        }
        if rec.item_i == rec.item_j {
            return Err(Error::SelfComparison(rec.item_i));
        }
        if self.mode == ValueMode::Binary && rec.choice != 1.0 && rec.choice != -1.0 {
            return Err(Error::InvalidChoice(rec.choice));
        }
        let seq = self.records.len() as u64;
        let rec = ComparisonRecord { seq, ..rec.canonical() };
        let (i, j) = (rec.item_i, rec.item_j);
        let n = self.n;

        let triangles_before = self.triangles.len();
        let (edge, new_edge) = match self.edge_index(i, j) {
            Some(e) => (e, false),
            None => {
                let e = self.edges.len();
                self.edges.push(Edge { i, j, created: seq });
                self.edge_records.push(Vec::new());
                self.edge_triangles.push(Vec::new());
                self.edge_slot[i * n + j] = e as u32;
                self.edge_slot[j * n + i] = e as u32;
                self.close_triangles(i, j, seq);
                (e, true)
            }
        };
        self.multiplicity[i * n + j] += 1;
        self.multiplicity[j * n + i] += 1;
        self.edge_records[edge].push(self.records.len());
        self.record_edge.push(edge);
        self.records.push(rec);

        Ok(Insertion {
            seq,
            edge,
            new_edge,
            new_triangles: triangles_before..self.triangles.len(),
        })
    }

    fn close_triangles(&mut self, i: usize, j: usize, seq: u64) {
        let n = self.n;
        let mut fresh: Vec<[usize; 3]> = (0..n)
            .filter(|&k| {
                k != i
                    && k != j
                    && self.edge_slot[i * n + k] != NO_EDGE
                    && self.edge_slot[j * n + k] != NO_EDGE
            })
            .map(|k| {
                let mut v = [i, j, k];
                v.sort_unstable();
                v
            })
            .collect();
        fresh.sort_unstable();
        for v in fresh {
            let t = self.triangles.len();
            self.triangles.push(Triangle { vertices: v, created: seq });
            let [a, b, c] = v;
            self.edge_triangles[self.edge_slot[a * n + b] as usize].push((t, 1.0));
            self.edge_triangles[self.edge_slot[b * n + c] as usize].push((t, 1.0));
            self.edge_triangles[self.edge_slot[a * n + c] as usize].push((t, -1.0));
        }
    }

    fn check_scores(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, actual: x.len() });
        }
        Ok(())
    }

    fn check_flow(&self, y: &EdgeFlow) -> Result<()> {
        if y.len() != self.records.len() {
            return Err(Error::DimensionMismatch {
                expected: self.records.len(),
                actual: y.len(),
            });
        }
        Ok(())
    }

    /// `D0 x`: the difference `x_i - x_j` on every record.
    pub fn coboundary(&self, x: &DVector<f64>) -> Result<EdgeFlow> {
        self.check_scores(x)?;
        Ok(EdgeFlow(DVector::from_iterator(
            self.records.len(),
            self.records.iter().map(|r| x[r.item_i] - x[r.item_j]),
        )))
    }

    /// `D0^T y`: net outgoing flow at every item.
    pub fn coboundary_adjoint(&self, y: &EdgeFlow) -> Result<DVector<f64>> {
        self.check_flow(y)?;
        let mut out = DVector::zeros(self.n);
        for (r, v) in self.records.iter().zip(y.iter()) {
            out[r.item_i] += v;
            out[r.item_j] -= v;
        }
        Ok(out)
    }

    /// Weighted graph Laplacian with record counts as edge weights.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut l = DMatrix::zeros(n, n);
        for e in &self.edges {
            let m = self.multiplicity(e.i, e.j) as f64;
            l[(e.i, e.j)] -= m;
            l[(e.j, e.i)] -= m;
            l[(e.i, e.i)] += m;
            l[(e.j, e.j)] += m;
        }
        l
    }

    /// Per-edge mean of a flow, indexed by edge.
    pub fn edge_means(&self, y: &EdgeFlow) -> Result<DVector<f64>> {
        self.check_flow(y)?;
        Ok(DVector::from_iterator(
            self.edges.len(),
            self.edge_records.iter().map(|recs| {
                recs.iter().map(|&k| y[k]).sum::<f64>() / recs.len() as f64
            }),
        ))
    }

    /// `D1 y`: oriented sum of mean edge flows around each triangle.
    pub fn curl(&self, y: &EdgeFlow) -> Result<DVector<f64>> {
        let means = self.edge_means(y)?;
        Ok(DVector::from_iterator(
            self.triangles.len(),
            (0..self.triangles.len()).map(|t| {
                self.triangle_edges(t)
                    .iter()
                    .map(|&(e, s)| s * means[e])
                    .sum::<f64>()
            }),
        ))
    }

    /// `D1^T z`: each record of edge `e` receives `sum_t sign * z_t / m_e`.
    pub fn curl_adjoint(&self, z: &DVector<f64>) -> Result<EdgeFlow> {
        if z.len() != self.triangles.len() {
            return Err(Error::DimensionMismatch {
                expected: self.triangles.len(),
                actual: z.len(),
            });
        }
        let per_edge: Vec<f64> = (0..self.edges.len())
            .map(|e| {
                self.edge_triangles[e].iter().map(|&(t, s)| s * z[t]).sum::<f64>()
                    / self.edge_multiplicity(e) as f64
            })
            .collect();
        Ok(EdgeFlow(DVector::from_iterator(
            self.records.len(),
            self.record_edge.iter().map(|&e| per_edge[e]),
        )))
    }

    /// Spreads a per-edge value to every record on that edge.
    pub fn broadcast_edges(&self, per_edge: &DVector<f64>) -> Result<EdgeFlow> {
        if per_edge.len() != self.edges.len() {
            return Err(Error::DimensionMismatch {
                expected: self.edges.len(),
                actual: per_edge.len(),
            });
        }
        Ok(EdgeFlow(DVector::from_iterator(
            self.records.len(),
            self.record_edge.iter().map(|&e| per_edge[e]),
        )))
    }

    /// Partition of the items by edge reachability, ordered by smallest member.
    pub fn connected_components(&self) -> Vec<Vec<usize>> {
        let mut uf = UnionFind::new(self.n);
        for e in &self.edges {
            uf.union(e.i, e.j);
        }
        uf.groups()
    }

    pub fn component_count(&self) -> usize {
        let mut uf = UnionFind::new(self.n);
        for e in &self.edges {
            uf.union(e.i, e.j);
        }
        uf.set_count()
    }
}
