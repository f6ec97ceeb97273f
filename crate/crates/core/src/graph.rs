//! Combination matrices over strongly-connected topologies.
//!
//! Weights follow the left-stochastic convention: `a[(l, k)]` is the weight
//! agent `k` assigns to the information received from agent `l`, and every
//! column sums to one. Agents are indexed from 0 internally; the edge-list
//! text format is 1-based.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column sums must match one within this tolerance.
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Largest network for which `|beta_2|` comes from a dense eigen-decomposition.
pub const DENSE_EIGEN_LIMIT: usize = 64;
/// Horizon of the measured Property-1 envelope.
pub const ENVELOPE_HORIZON: usize = 200;
/// Deviations `|[A^m]_{lk} - pi_l|` below this level are treated as rounding noise.
pub const ENVELOPE_NOISE_FLOOR: f64 = 1e-12;
/// Iteration cap of the dense Schur decomposition.
pub const SCHUR_MAX_ITER: usize = 10_000;

/// In-neighborhoods of a directed graph. `neighbors[k]` holds every `l` with
/// an edge `l -> k`, including `k` itself when agent `k` has a self-loop.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adjacency {
    neighbors: Vec<BTreeSet<usize>>,
}

impl Adjacency {
    /// Build from directed 0-based edges `(from, to)`.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::MalformedAdjacency("agent count must be at least 1".into()));
        }
        let mut neighbors = vec![BTreeSet::new(); n];
        for &(from, to) in edges {
            if from >= n || to >= n {
                return Err(Error::MalformedAdjacency(format!("edge {} -> {} outside 1..={n}", from + 1, to + 1)));
            }
            neighbors[to].insert(from);
        }
        if let Some(k) = neighbors.iter().position(|s| s.is_empty()) {
            return Err(Error::MalformedAdjacency(format!("agent {} has an empty neighborhood", k + 1)));
        }
        Ok(Adjacency { neighbors })
    }

    /// Undirected graph from 0-based pairs; every pair is inserted in both
    /// directions and every agent gets a self-loop.
    pub fn undirected_with_self_loops(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut edges: Vec<(usize, usize)> = (0..n).map(|k| (k, k)).collect();
        for &(a, b) in pairs {
            edges.push((a, b));
            edges.push((b, a));
        }
        Self::from_edges(n, &edges)
    }

    /// Parse the edge-list format: a header line `agents N` followed by one
    /// directed edge `l k` (1-based) per line. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut n: Option<usize> = None;
        let mut edges = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parse_err = |message: String| Error::Parse { line: line_no, message };
            if fields[0].eq_ignore_ascii_case("agents") {
                if n.is_some() {
                    return Err(parse_err("duplicate `agents` header".into()));
                }
                let count = fields
                    .get(1)
                    .and_then(|s| s.parse::<usize>().ok())
                    .ok_or_else(|| parse_err("expected `agents N`".into()))?;
                n = Some(count);
                continue;
            }
            let count = n.ok_or_else(|| parse_err("edge before `agents N` header".into()))?;
            if fields.len() != 2 {
                return Err(parse_err(format!("expected `l k`, found `{line}`")));
            }
            let mut ends = [0usize; 2];
            for (slot, field) in ends.iter_mut().zip(&fields) {
                let v: usize = field.parse().map_err(|_| parse_err(format!("bad agent index `{field}`")))?;
                if v == 0 || v > count {
                    return Err(parse_err(format!("agent index {v} outside 1..={count}")));
                }
                *slot = v - 1;
            }
            edges.push((ends[0], ends[1]));
        }
        let n = n.ok_or(Error::Parse { line: 0, message: "missing `agents N` header".into() })?;
        Self::from_edges(n, &edges)
    }

    /// Serialize in the edge-list format accepted by [`Adjacency::parse`].
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("agents {}\n", self.n());
        for (k, nbrs) in self.neighbors.iter().enumerate() {
            for &l in nbrs {
                out.push_str(&format!("{} {}\n", l + 1, k + 1));
            }
        }
        out
    }

    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, k: usize) -> &BTreeSet<usize> {
        &self.neighbors[k]
    }

    pub fn has_self_loop(&self, k: usize) -> bool {
        self.neighbors[k].contains(&k)
    }

    pub fn is_undirected(&self) -> bool {
        self.first_asymmetric_edge().is_none()
    }

    fn first_asymmetric_edge(&self) -> Option<(usize, usize)> {
        for (k, nbrs) in self.neighbors.iter().enumerate() {
            for &l in nbrs {
                if !self.neighbors[l].contains(&k) {
                    return Some((l, k));
                }
            }
        }
        None
    }
}

/// Nonnegative left-stochastic matrix; entry `(l, k)` is the weight from `l` to `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinationMatrix {
    a: DMatrix<f64>,
}

impl CombinationMatrix {
    /// Validate and wrap a square matrix indexed `(source, destination)`.
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() == 0 {
            return Err(Error::InvalidMatrix(format!(
                "expected a non-empty square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        for l in 0..a.nrows() {
            for k in 0..a.ncols() {
                let v = a[(l, k)];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidMatrix(format!("entry ({}, {}) = {v} outside [0, 1]", l + 1, k + 1)));
                }
            }
        }
        for (k, col) in a.column_iter().enumerate() {
            let s: f64 = col.iter().sum();
            if (s - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::InvalidMatrix(format!("column {} sums to {s}", k + 1)));
            }
        }
        Ok(CombinationMatrix { a })
    }

    /// Row-major rows `rows[l][k]`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidMatrix("rows have inconsistent lengths".into()));
        }
        Self::new(DMatrix::from_fn(n, n, |l, k| rows[l][k]))
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn get(&self, l: usize, k: usize) -> f64 {
        self.a[(l, k)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn is_symmetric(&self) -> bool {
        self.a == self.a.transpose()
    }

    pub fn is_doubly_stochastic(&self) -> bool {
        self.a.row_iter().all(|r| (r.sum() - 1.0).abs() <= 1e-10)
    }

    /// `A^T v`, i.e. `out[k] = sum_l a[l][k] v[l]`: one combination step.
    pub fn combine_vector(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n();
        (0..n).map(|k| (0..n).map(|l| self.a[(l, k)] * v[l]).sum()).collect()
    }

    fn support_graph(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        (0..n).map(|l| (0..n).filter(|&k| self.a[(l, k)] > 0.0).collect()).collect()
    }
}

impl fmt::Display for CombinationMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.a.row_iter() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
            writeln!(f, "{}", cells.join(" "))?;
        }
        Ok(())
    }
}

/// Uniform averaging: `a[l][k] = 1/|N_k|` for every `l` in the neighborhood of `k`.
pub fn build_averaging_matrix(adj: &Adjacency) -> Result<CombinationMatrix> {
    let n = adj.n();
    let mut a = DMatrix::zeros(n, n);
    for k in 0..n {
        let nbrs = adj.neighbors(k);
        if nbrs.is_empty() {
            return Err(Error::MalformedAdjacency(format!("agent {} has an empty neighborhood", k + 1)));
        }
        if !adj.has_self_loop(k) {
            return Err(Error::MalformedAdjacency(format!("agent {} lacks a self-loop", k + 1)));
        }
        let w = 1.0 / nbrs.len() as f64;
        for &l in nbrs {
            a[(l, k)] = w;
        }
    }
    CombinationMatrix::new(a)
}

/// Laplacian rule with `gamma = 1/d_max`: off-diagonal neighbors get
/// `1/d_max`, the diagonal takes the remainder `1 - deg_k/d_max`.
pub fn build_laplacian_matrix(adj: &Adjacency) -> Result<CombinationMatrix> {
    if let Some((from, to)) = adj.first_asymmetric_edge() {
        return Err(Error::SymmetryViolation { from: from + 1, to: to + 1 });
    }
    let n = adj.n();
    if let Some(k) = (0..n).find(|&k| !adj.has_self_loop(k)) {
        return Err(Error::MalformedAdjacency(format!("agent {} lacks a self-loop", k + 1)));
    }
    let degree = |k: usize| adj.neighbors(k).iter().filter(|&&l| l != k).count();
    let d_max = (0..n).map(degree).max().unwrap_or(0);
    let mut a = DMatrix::zeros(n, n);
    if d_max == 0 {
        a.fill_with_identity();
        return CombinationMatrix::new(a);
    }
    let w = 1.0 / d_max as f64;
    for k in 0..n {
        for &l in adj.neighbors(k) {
            if l != k {
                a[(l, k)] = w;
            }
        }
        a[(k, k)] = 1.0 - degree(k) as f64 * w;
    }
    CombinationMatrix::new(a)
}

/// Measured envelope `|[A^m]_{lk} - pi_l| <= kappa * beta^m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerronEnvelope {
    pub kappa: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkAnalysis {
    pub pi: Vec<f64>,
    pub beta2_magnitude: f64,
    pub primitive: bool,
    pub envelope: PerronEnvelope,
}

impl NetworkAnalysis {
    pub fn pi_min(&self) -> f64 {
        self.pi.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn pi_max(&self) -> f64 {
        self.pi.iter().copied().fold(0.0, f64::max)
    }
}

/// Check primitivity, then compute the Perron eigenvector, `|beta_2|` and the
/// Property-1 envelope.
pub fn analyze_network(a: &CombinationMatrix) -> Result<NetworkAnalysis> {
    check_primitive(a)?;
    let pi = perron_vector(a)?;
    let beta2_magnitude = if a.n() <= DENSE_EIGEN_LIMIT {
        second_eigen_magnitude_dense(a, &pi)
    } else {
        second_eigen_magnitude_deflated(a, &pi)
    };
    let envelope = fit_envelope(a, &pi, beta2_magnitude);
    Ok(NetworkAnalysis { pi, beta2_magnitude, primitive: true, envelope })
}

fn reachable(adj: &[Vec<usize>], start: usize) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn check_primitive(a: &CombinationMatrix) -> Result<()> {
    let forward = a.support_graph();
    let n = forward.len();
    let mut backward = vec![Vec::new(); n];
    for (u, outs) in forward.iter().enumerate() {
        for &v in outs {
            backward[v].push(u);
        }
    }
    for graph in [&forward, &backward] {
        if let Some(k) = reachable(graph, 0).iter().position(|&r| !r) {
            return Err(Error::Reducible { agent: k + 1 });
        }
    }
    // period = gcd over edges of (level[u] + 1 - level[v]) for BFS levels
    let mut level = vec![usize::MAX; n];
    level[0] = 0;
    let mut queue = VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        for &v in &forward[u] {
            if level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut period = 0usize;
    for (u, outs) in forward.iter().enumerate() {
        for &v in outs {
            let diff = (level[u] as i64 + 1 - level[v] as i64).unsigned_abs() as usize;
            period = gcd(period, diff);
        }
    }
    if period != 1 {
        return Err(Error::Periodic { period });
    }
    Ok(())
}

fn perron_vector(a: &CombinationMatrix) -> Result<Vec<f64>> {
    let n = a.n();
    let mut pi = vec![1.0 / n as f64; n];
    let m = a.matrix();
    for _ in 0..1_000_000 {
        let next = m * DVector::from_column_slice(&pi);
        let s: f64 = next.iter().sum();
        let next: Vec<f64> = next.iter().map(|v| v / s).collect();
        let residual = residual_inf(a, &next);
        pi = next;
        if residual < 1e-12 {
            return Ok(polish(a, pi, residual));
        }
    }
    Err(Error::InvalidMatrix("power iteration for the Perron eigenvector did not converge".into()))
}

// A few extra sweeps take the residual down to rounding level so that the
// envelope fit is not dominated by the eigenvector error.
fn polish(a: &CombinationMatrix, mut pi: Vec<f64>, mut residual: f64) -> Vec<f64> {
    for _ in 0..10_000 {
        let next = a.matrix() * DVector::from_column_slice(&pi);
        let s: f64 = next.iter().sum();
        let next: Vec<f64> = next.iter().map(|v| v / s).collect();
        let r = residual_inf(a, &next);
        if r >= residual {
            break;
        }
        pi = next;
        residual = r;
    }
    pi
}

/// `||A pi - pi||_inf`.
pub fn residual_inf(a: &CombinationMatrix, pi: &[f64]) -> f64 {
    let v = a.matrix() * DVector::from_column_slice(pi);
    v.iter().zip(pi).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn second_eigen_magnitude_dense(a: &CombinationMatrix, pi: &[f64]) -> f64 {
    if a.n() == 1 {
        return 0.0;
    }
    let m = a.matrix().clone();
    let eig: Vec<Complex<f64>> = if a.is_symmetric() {
        m.symmetric_eigenvalues().iter().map(|&v| Complex::new(v, 0.0)).collect()
    } else {
        // the unbounded Schur iteration can stall, so cap it and fall back
        match m.try_schur(f64::EPSILON, SCHUR_MAX_ITER) {
            Some(schur) => schur.complex_eigenvalues().iter().copied().collect(),
            None => return second_eigen_magnitude_deflated(a, pi),
        }
    };
    let mut mags: Vec<(f64, f64)> = eig.iter().map(|z| ((z - 1.0).norm(), z.norm())).collect();
    // drop the eigenvalue closest to the Perron root 1
    let (closest, _) = mags.iter().enumerate().min_by(|x, y| x.1 .0.total_cmp(&y.1 .0)).expect("n >= 2");
    mags.swap_remove(closest);
    mags.iter().map(|m| m.1).fold(0.0, f64::max)
}

fn second_eigen_magnitude_deflated(a: &CombinationMatrix, pi: &[f64]) -> f64 {
    let n = a.n();
    let pi = DVector::from_column_slice(pi);
    let ones = DVector::from_element(n, 1.0);
    let b = a.matrix() - &pi * ones.transpose();
    let mut x = DVector::from_fn(n, |i, _| ((i * 7919 + 13) % 101) as f64 / 101.0 - 0.5);
    x /= x.norm();
    let burn_in = 200;
    let window = 400;
    for _ in 0..burn_in {
        x = &b * &x;
        let norm = x.norm();
        if norm == 0.0 {
            return 0.0;
        }
        x /= norm;
    }
    let mut log_growth = 0.0;
    for _ in 0..window {
        x = &b * &x;
        let norm = x.norm();
        if norm == 0.0 {
            return 0.0;
        }
        log_growth += norm.ln();
        x /= norm;
    }
    (log_growth / window as f64).exp()
}

fn fit_envelope(a: &CombinationMatrix, pi: &[f64], beta2: f64) -> PerronEnvelope {
    let beta = (1.0 + beta2) / 2.0;
    let n = a.n();
    let mut power = DMatrix::<f64>::identity(n, n);
    let mut kappa: f64 = 0.0;
    for m in 0..=ENVELOPE_HORIZON {
        if m > 0 {
            power = a.matrix() * &power;
        }
        let scale = beta.powi(m as i32);
        for l in 0..n {
            for k in 0..n {
                let dev = (power[(l, k)] - pi[l]).abs();
                // deviations at rounding level carry no information about the decay
                if dev > ENVELOPE_NOISE_FLOOR {
                    kappa = kappa.max(dev / scale);
                }
            }
        }
    }
    PerronEnvelope { kappa, beta }
}

/// Column `k` of `A^m` (the identity column when `m = 0`).
pub fn matrix_power_column(a: &CombinationMatrix, m: usize, k: usize) -> Vec<f64> {
    let n = a.n();
    let mut v = vec![0.0; n];
    v[k] = 1.0;
    let mat = a.matrix();
    for _ in 0..m {
        let next = mat * DVector::from_column_slice(&v);
        v = next.iter().copied().collect();
    }
    v
}
