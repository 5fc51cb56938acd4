//! Weighted vertex graphs, the weighted incidence operator and distance matrices.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use petgraph::graph::{NodeIndex, UnGraph};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Edge-weight threshold below which edges are discarded.
pub const DEFAULT_THETA: f64 = 0.1;
/// Mixing weight between the geodesic and the inter-part term.
pub const DEFAULT_ALPHA_D: f64 = 0.5;

/// Weighted undirected graph over the vertices of a mesh. Edges are stored as
/// `(i, j)` with `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexGraph {
    vertex_count: usize,
    edges: Vec<(usize, usize)>,
    weights: Vec<f64>,
}

impl VertexGraph {
    pub fn new(vertex_count: usize, edges: Vec<(usize, usize)>, weights: Vec<f64>) -> Result<Self> {
        if edges.len() != weights.len() {
            return Err(Error::dim("edge weights", edges.len(), weights.len()));
        }
        let mut seen = BTreeSet::new();
        let mut normalized = Vec::with_capacity(edges.len());
        for (&(i, j), &w) in edges.iter().zip(&weights) {
            if i == j {
                return Err(Error::invalid("edges", format!("self edge ({i}, {i})")));
            }
            if i >= vertex_count || j >= vertex_count {
                return Err(Error::invalid(
                    "edges",
                    format!("edge ({i}, {j}) out of range for {vertex_count} vertices"),
                ));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::invalid("weights", format!("edge ({i}, {j}) has weight {w}")));
            }
            let e = (i.min(j), i.max(j));
            if !seen.insert(e) {
                return Err(Error::invalid("edges", format!("duplicate edge ({}, {})", e.0, e.1)));
            }
            normalized.push(e);
        }
        Ok(VertexGraph {
            vertex_count,
            edges: normalized,
            weights,
        })
    }

    /// All weights set to one.
    pub fn unweighted(vertex_count: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let w = vec![1.0; edges.len()];
        Self::new(vertex_count, edges, w)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertex_count];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }
}

/// Unique undirected edges of a triangle mesh, sorted.
pub fn mesh_edges(faces: &[[usize; 3]]) -> Vec<(usize, usize)> {
    let mut set = BTreeSet::new();
    for f in faces {
        for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            if a != b {
                set.insert((a.min(b), a.max(b)));
            }
        }
    }
    set.into_iter().collect()
}

/// Sparse weighted incidence operator `E = I₃ ⊗ E′`. Row `p` of `E′` holds
/// `+√ω` at the smaller endpoint of edge `p` and `−√ω` at the larger one.
#[derive(Debug, Clone)]
pub struct IncidenceOperator {
    vertex_count: usize,
    edges: Vec<(usize, usize)>,
    coeffs: Vec<f64>,
}

impl IncidenceOperator {
    pub fn new(graph: &VertexGraph) -> Self {
        IncidenceOperator {
            vertex_count: graph.vertex_count,
            edges: graph.edges.clone(),
            coeffs: graph.weights.iter().map(|w| w.sqrt()).collect(),
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Number of rows of the full operator, `3|E|`.
    pub fn rows(&self) -> usize {
        3 * self.edges.len()
    }

    pub fn cols(&self) -> usize {
        3 * self.vertex_count
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Frobenius norm of the full operator.
    pub fn frobenius_norm(&self) -> f64 {
        (6.0 * self.coeffs.iter().map(|c| c * c).sum::<f64>()).sqrt()
    }

    /// Copy of the operator multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        IncidenceOperator {
            vertex_count: self.vertex_count,
            edges: self.edges.clone(),
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
        }
    }

    /// `out = E z`.
    pub fn apply_into(&self, z: &[f64], out: &mut [f64]) {
        let n = self.vertex_count;
        let m = self.edges.len();
        debug_assert_eq!(z.len(), 3 * n);
        debug_assert_eq!(out.len(), 3 * m);
        for d in 0..3 {
            let zb = &z[d * n..(d + 1) * n];
            let ob = &mut out[d * m..(d + 1) * m];
            for (p, (&(i, j), &c)) in self.edges.iter().zip(&self.coeffs).enumerate() {
                ob[p] = c * (zb[i] - zb[j]);
            }
        }
    }

    /// `out = Eᵀ v`.
    pub fn apply_transpose_into(&self, v: &[f64], out: &mut [f64]) {
        let n = self.vertex_count;
        let m = self.edges.len();
        debug_assert_eq!(v.len(), 3 * m);
        debug_assert_eq!(out.len(), 3 * n);
        out.iter_mut().for_each(|o| *o = 0.0);
        for d in 0..3 {
            let vb = &v[d * m..(d + 1) * m];
            let ob = &mut out[d * n..(d + 1) * n];
            for (p, (&(i, j), &c)) in self.edges.iter().zip(&self.coeffs).enumerate() {
                ob[i] += c * vb[p];
                ob[j] -= c * vb[p];
            }
        }
    }

    pub fn apply(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.rows());
        self.apply_into(z.as_slice(), out.as_mut_slice());
        out
    }

    pub fn apply_transpose(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.cols());
        self.apply_transpose_into(v.as_slice(), out.as_mut_slice());
        out
    }

    /// `‖E z‖₂` without allocating the image.
    pub fn norm_of_image(&self, z: &[f64]) -> f64 {
        let n = self.vertex_count;
        let mut acc = 0.0;
        for d in 0..3 {
            let zb = &z[d * n..(d + 1) * n];
            for (&(i, j), &c) in self.edges.iter().zip(&self.coeffs) {
                let t = c * (zb[i] - zb[j]);
                acc += t * t;
            }
        }
        acc.sqrt()
    }

    /// Dense `|E| x N` base matrix `E′`.
    pub fn base_dense(&self) -> DMatrix<f64> {
        let mut e = DMatrix::zeros(self.edges.len(), self.vertex_count);
        for (p, (&(i, j), &c)) in self.edges.iter().zip(&self.coeffs).enumerate() {
            e[(p, i)] = c;
            e[(p, j)] = -c;
        }
        e
    }

    /// Dense full operator `I₃ ⊗ E′`.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let base = self.base_dense();
        let (m, n) = base.shape();
        let mut full = DMatrix::zeros(3 * m, 3 * n);
        for d in 0..3 {
            full.view_mut((d * m, d * n), (m, n)).copy_from(&base);
        }
        full
    }
}

/// Euclidean distance matrix between the rows of an `N x 3` shape.
pub fn euclidean_distances(shape: &DMatrix<f64>) -> DMatrix<f64> {
    let n = shape.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            (shape.row(i) - shape.row(j)).norm()
        }
    })
}

/// Euclidean length of each edge on the given shape.
pub fn edge_lengths(shape: &DMatrix<f64>, edges: &[(usize, usize)]) -> Vec<f64> {
    edges
        .iter()
        .map(|&(i, j)| (shape.row(i) - shape.row(j)).norm())
        .collect()
}

/// Average length of the given edges on `shape`.
pub fn mean_neighbor_distance(shape: &DMatrix<f64>, edges: &[(usize, usize)]) -> Result<f64> {
    if edges.is_empty() {
        return Err(Error::invalid("edges", "no edges to average over"));
    }
    Ok(edge_lengths(shape, edges).iter().sum::<f64>() / edges.len() as f64)
}

/// All-pairs shortest-path distances over `edges` with the given lengths.
/// Disconnected pairs are `+∞`. Sources are processed in parallel.
pub fn geodesic_distances(vertex_count: usize, edges: &[(usize, usize)], lengths: &[f64]) -> Result<DMatrix<f64>> {
    if edges.len() != lengths.len() {
        return Err(Error::dim("edge lengths", edges.len(), lengths.len()));
    }
    let mut g = UnGraph::<(), f64>::with_capacity(vertex_count, edges.len());
    for _ in 0..vertex_count {
        g.add_node(());
    }
    for (&(i, j), &l) in edges.iter().zip(lengths) {
        if i >= vertex_count || j >= vertex_count {
            return Err(Error::invalid("edges", format!("edge ({i}, {j}) out of range")));
        }
        if !(l >= 0.0) {
            return Err(Error::invalid("lengths", format!("edge ({i}, {j}) has length {l}")));
        }
        g.add_edge(NodeIndex::new(i), NodeIndex::new(j), l);
    }
    let rows: Vec<Vec<f64>> = (0..vertex_count)
        .into_par_iter()
        .map(|s| {
            let reached = petgraph::algo::dijkstra(&g, NodeIndex::new(s), None, |e| *e.weight());
            let mut row = vec![f64::INFINITY; vertex_count];
            for (node, d) in reached {
                row[node.index()] = d;
            }
            row
        })
        .collect();
    let mut d = DMatrix::from_fn(vertex_count, vertex_count, |i, j| rows[i][j]);
    // Symmetrize against path-sum rounding differences between directions.
    for i in 0..vertex_count {
        d[(i, i)] = 0.0;
        for j in (i + 1)..vertex_count {
            let v = d[(i, j)].min(d[(j, i)]);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    Ok(d)
}

/// `ω = exp(−(d / d̄)²)` for each edge length; edges with `ω < θ` are dropped.
/// An empty result is allowed (the smoothness term then vanishes) but logged.
pub fn gaussian_edge_graph(
    vertex_count: usize,
    edges: &[(usize, usize)],
    lengths: &[f64],
    mean_distance: f64,
    theta: f64,
) -> Result<VertexGraph> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::invalid("theta", format!("{theta} is not in (0, 1)")));
    }
    if !(mean_distance > 0.0) {
        return Err(Error::invalid(
            "mean_distance",
            format!("{mean_distance} is not positive"),
        ));
    }
    if edges.len() != lengths.len() {
        return Err(Error::dim("edge lengths", edges.len(), lengths.len()));
    }
    let mut kept = Vec::new();
    let mut weights = Vec::new();
    for (&e, &l) in edges.iter().zip(lengths) {
        let w = (-(l / mean_distance).powi(2)).exp();
        if w >= theta {
            kept.push(e);
            weights.push(w);
        }
    }
    if kept.is_empty() && !edges.is_empty() {
        log::warn!(
            "all {} edges fell below theta = {theta}; graph term vanishes",
            edges.len()
        );
    }
    VertexGraph::new(vertex_count, kept, weights)
}

/// Edge weights from the mesh topology with an explicit Euclidean distance matrix.
pub fn weights_from_topology(
    d_euc: &DMatrix<f64>,
    edges: &[(usize, usize)],
    theta: f64,
    mean_distance: f64,
) -> Result<VertexGraph> {
    let n = d_euc.nrows();
    let lengths: Vec<f64> = edges
        .iter()
        .map(|&(i, j)| {
            if i < n && j < n {
                Ok(d_euc[(i, j)])
            } else {
                Err(Error::invalid("edges", format!("edge ({i}, {j}) out of range")))
            }
        })
        .collect::<Result<_>>()?;
    gaussian_edge_graph(n, edges, &lengths, mean_distance, theta)
}

/// Topology-weighted graph computed directly from a mean shape, without an
/// `N x N` distance matrix.
pub fn topology_graph(mean_shape: &DMatrix<f64>, edges: &[(usize, usize)], theta: f64) -> Result<VertexGraph> {
    let lengths = edge_lengths(mean_shape, edges);
    let mean_distance = mean_neighbor_distance(mean_shape, edges)?;
    gaussian_edge_graph(mean_shape.nrows(), edges, &lengths, mean_distance, theta)
}

/// A partition of the vertices into parts plus the graph saying which parts
/// interact.
#[derive(Debug, Clone, PartialEq)]
pub struct PartLayout {
    pub parts: Vec<Vec<usize>>,
    pub part_edges: Vec<(usize, usize)>,
}

impl PartLayout {
    /// Part index of every vertex, validating that the parts partition `0..n`.
    pub fn membership(&self, vertex_count: usize) -> Result<Vec<usize>> {
        let mut owner = vec![usize::MAX; vertex_count];
        for (o, part) in self.parts.iter().enumerate() {
            for &v in part {
                if v >= vertex_count {
                    return Err(Error::invalid("parts", format!("vertex {v} out of range")));
                }
                if owner[v] != usize::MAX {
                    return Err(Error::invalid(
                        "parts",
                        format!("vertex {v} belongs to parts {} and {o}", owner[v]),
                    ));
                }
                owner[v] = o;
            }
        }
        if let Some(v) = owner.iter().position(|&o| o == usize::MAX) {
            return Err(Error::invalid("parts", format!("vertex {v} is in no part")));
        }
        for &(a, b) in &self.part_edges {
            if a >= self.parts.len() || b >= self.parts.len() {
                return Err(Error::invalid(
                    "part_edges",
                    format!("part edge ({a}, {b}) out of range"),
                ));
            }
        }
        Ok(owner)
    }

    fn connected(&self, a: usize, b: usize) -> bool {
        self.part_edges
            .iter()
            .any(|&(p, q)| (p == a && q == b) || (p == b && q == a))
    }
}

/// Normalized distance matrices used by [`composite_part_weights`]. Entries
/// without a defined distance (different parts for the geodesic term,
/// non-adjacent parts for the inter-part term) are `+∞`, i.e. zero affinity.
#[derive(Debug, Clone)]
pub struct PartDistances {
    pub geodesic: DMatrix<f64>,
    pub between_parts: DMatrix<f64>,
    pub mean_neighbor: Vec<f64>,
}

pub fn part_distances(
    layout: &PartLayout,
    topology: &[(usize, usize)],
    d_euc: &DMatrix<f64>,
    d_geo: &DMatrix<f64>,
) -> Result<PartDistances> {
    let n = d_euc.nrows();
    if d_geo.shape() != (n, n) {
        return Err(Error::dim("geodesic distance matrix", n, d_geo.nrows()));
    }
    let owner = layout.membership(n)?;
    let parts = &layout.parts;

    let mut sums = vec![0.0; parts.len()];
    let mut counts = vec![0usize; parts.len()];
    for &(i, j) in topology {
        if i >= n || j >= n {
            return Err(Error::invalid("edges", format!("edge ({i}, {j}) out of range")));
        }
        if owner[i] == owner[j] {
            sums[owner[i]] += d_euc[(i, j)];
            counts[owner[i]] += 1;
        }
    }
    let mut mean_neighbor = Vec::with_capacity(parts.len());
    for (o, (&s, &c)) in sums.iter().zip(&counts).enumerate() {
        if c == 0 || !(s > 0.0) {
            return Err(Error::invalid(
                "parts",
                format!("part {o} has no internal edges of positive length"),
            ));
        }
        mean_neighbor.push(s / c as f64);
    }

    let mut geodesic = DMatrix::from_element(n, n, f64::INFINITY);
    for (o, part) in parts.iter().enumerate() {
        for &i in part {
            for &j in part {
                geodesic[(i, j)] = d_geo[(i, j)] / mean_neighbor[o];
            }
        }
    }

    let mut between_parts = DMatrix::from_element(n, n, f64::INFINITY);
    for (o, po) in parts.iter().enumerate() {
        for (q, pq) in parts.iter().enumerate() {
            if !layout.connected(o, q) {
                continue;
            }
            let d_min = po
                .iter()
                .flat_map(|&i| pq.iter().map(move |&j| d_euc[(i, j)]))
                .fold(f64::INFINITY, f64::min);
            let f = 2.0 / (mean_neighbor[o] + mean_neighbor[q]);
            for &i in po {
                for &j in pq {
                    between_parts[(i, j)] = f * (d_euc[(i, j)] - d_min);
                }
            }
        }
    }

    Ok(PartDistances {
        geodesic,
        between_parts,
        mean_neighbor,
    })
}

/// Graph from per-part geodesic and inter-part distances:
/// `ω = α_D exp(−D̃_geo²) + (1 − α_D) exp(−D̃_bs²)`, keeping pairs with `ω ≥ θ`.
pub fn composite_part_weights(
    layout: &PartLayout,
    topology: &[(usize, usize)],
    d_euc: &DMatrix<f64>,
    d_geo: &DMatrix<f64>,
    alpha_d: f64,
    theta: f64,
) -> Result<VertexGraph> {
    if !(0.0..=1.0).contains(&alpha_d) {
        return Err(Error::invalid("alpha_d", format!("{alpha_d} is not in [0, 1]")));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::invalid("theta", format!("{theta} is not in (0, 1)")));
    }
    let dist = part_distances(layout, topology, d_euc, d_geo)?;
    let n = d_euc.nrows();
    let mut edges = Vec::new();
    let mut weights = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let w = alpha_d * (-dist.geodesic[(i, j)].powi(2)).exp()
                + (1.0 - alpha_d) * (-dist.between_parts[(i, j)].powi(2)).exp();
            if w >= theta {
                edges.push((i, j));
                weights.push(w);
            }
        }
    }
    VertexGraph::new(n, edges, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_graph(rng: &mut ChaCha8Rng, n: usize, m: usize) -> VertexGraph {
        let mut all: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
        let mut edges = Vec::new();
        while edges.len() < m {
            let k = rng.random_range(0..all.len());
            edges.push(all.swap_remove(k));
        }
        let w = (0..m).map(|_| rng.random_range(0.1..3.0)).collect();
        VertexGraph::new(n, edges, w).unwrap()
    }

    #[test]
    fn graph_validation() {
        assert!(VertexGraph::unweighted(3, vec![(1, 1)]).is_err());
        assert!(VertexGraph::unweighted(3, vec![(0, 1), (1, 0)]).is_err());
        assert!(VertexGraph::new(3, vec![(0, 1)], vec![0.0]).is_err());
        assert!(VertexGraph::unweighted(3, vec![(0, 3)]).is_err());
        let g = VertexGraph::unweighted(3, vec![(2, 0)]).unwrap();
        assert_eq!(g.edges(), &[(0, 2)]);
    }

    #[test]
    fn two_vertex_incidence() {
        let g = VertexGraph::new(2, vec![(0, 1)], vec![4.0]).unwrap();
        let e = IncidenceOperator::new(&g);
        assert_eq!(e.base_dense(), DMatrix::from_row_slice(1, 2, &[2.0, -2.0]));
        assert_eq!(e.to_dense().shape(), (3, 6));
    }

    #[test]
    fn incidence_rows_and_null_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_graph(&mut rng, 6, 8);
        let e = IncidenceOperator::new(&g);
        let base = e.base_dense();
        for (p, w) in g.weights().iter().enumerate() {
            let row = base.row(p);
            let nz: Vec<f64> = row.iter().cloned().filter(|v| *v != 0.0).collect();
            assert_eq!(nz.len(), 2);
            assert_abs_diff_eq!(nz[0], w.sqrt());
            assert_abs_diff_eq!(nz[1], -w.sqrt());
        }
        assert!((base * DVector::from_element(6, 1.0)).amax() < 1e-15);
        let z = DVector::from_fn(18, |i, _| [1.5, -2.0, 0.25][i / 6]);
        assert!(e.apply(&z).norm() < 1e-14);
    }

    #[test]
    fn incidence_energy_matches_double_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = random_graph(&mut rng, 6, 8);
        let e = IncidenceOperator::new(&g);
        let z: DVector<f64> = DVector::from_fn(18, |_, _| rng.random_range(-1.0..1.0));
        let mut direct = 0.0;
        for d in [0, 6, 12] {
            for (&(i, j), &w) in g.edges().iter().zip(g.weights()) {
                direct += w * (z[d + i] - z[d + j]).powi(2);
            }
        }
        assert_abs_diff_eq!(e.apply(&z).norm_squared(), direct, epsilon = 1e-12);
        assert_abs_diff_eq!(e.norm_of_image(z.as_slice()).powi(2), direct, epsilon = 1e-12);
        let dense = e.to_dense();
        assert_abs_diff_eq!(e.apply(&z), &dense * &z, epsilon = 1e-14);
        let v = DVector::from_fn(24, |_, _| rng.random_range(-1.0..1.0));
        assert_abs_diff_eq!(e.apply_transpose(&v), dense.transpose() * &v, epsilon = 1e-14);
        assert_abs_diff_eq!(e.frobenius_norm(), dense.norm(), epsilon = 1e-12);
    }

    #[test]
    fn path_geodesics() {
        let d = geodesic_distances(3, &[(0, 1), (1, 2)], &[1.0, 1.0]).unwrap();
        assert_eq!(d[(0, 2)], 2.0);
        assert_eq!(d[(2, 0)], 2.0);
        let single = geodesic_distances(1, &[], &[]).unwrap();
        assert_eq!(single[(0, 0)], 0.0);
        let split = geodesic_distances(3, &[(0, 1)], &[1.0]).unwrap();
        assert!(split[(0, 2)].is_infinite());
    }

    #[test]
    fn geodesics_match_floyd_warshall() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = random_graph(&mut rng, 8, 12);
        let lengths: Vec<f64> = (0..12).map(|_| rng.random_range(0.1..2.0)).collect();
        let d = geodesic_distances(8, g.edges(), &lengths).unwrap();
        let mut fw = DMatrix::from_element(8, 8, f64::INFINITY);
        for i in 0..8 {
            fw[(i, i)] = 0.0;
        }
        for (&(i, j), &l) in g.edges().iter().zip(&lengths) {
            fw[(i, j)] = fw[(i, j)].min(l);
            fw[(j, i)] = fw[(j, i)].min(l);
        }
        for k in 0..8 {
            for i in 0..8 {
                for j in 0..8 {
                    let via = fw[(i, k)] + fw[(k, j)];
                    if via < fw[(i, j)] {
                        fw[(i, j)] = via;
                    }
                }
            }
        }
        for i in 0..8 {
            for j in 0..8 {
                if fw[(i, j)].is_infinite() {
                    assert!(d[(i, j)].is_infinite());
                } else {
                    assert_abs_diff_eq!(d[(i, j)], fw[(i, j)], epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn gaussian_weights_and_threshold() {
        let d = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0]);
        let g = weights_from_topology(&d, &[(0, 1)], DEFAULT_THETA, 1.0).unwrap();
        assert_eq!(g.weights(), &[1.0]);

        // exp(−t²) < 0.1 ⇔ t > √(ln 10) ≈ 1.5174; √(−ln 0.05) ≈ 1.7308 lies beyond it.
        let mean = 0.8;
        let t_cut = {
            let (mut lo, mut hi) = (0.0f64, 5.0f64);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if (-(mid * mid)).exp() < 0.1 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        };
        let far = mean * (-(0.05f64).ln()).sqrt();
        assert!(far / mean > t_cut);
        let near = mean * 0.9 * t_cut;
        let g = gaussian_edge_graph(3, &[(0, 1), (1, 2)], &[far, near], mean, DEFAULT_THETA).unwrap();
        assert_eq!(g.edges(), &[(1, 2)]);
        let empty = gaussian_edge_graph(3, &[(0, 1)], &[far], mean, DEFAULT_THETA).unwrap();
        assert_eq!(empty.edge_count(), 0);
    }

    fn three_part_toy() -> (DMatrix<f64>, PartLayout, Vec<(usize, usize)>) {
        // Three squares of 4 vertices, the middle one shifted to x = 3 and the last to x = 9.
        let mut shape = DMatrix::zeros(12, 3);
        for (o, off) in [0.0, 3.0, 9.0].iter().enumerate() {
            for (k, (x, y)) in [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)].iter().enumerate() {
                shape[(4 * o + k, 0)] = off + x;
                shape[(4 * o + k, 1)] = *y;
                shape[(4 * o + k, 2)] = 0.1 * k as f64;
            }
        }
        let mut topo = Vec::new();
        for o in 0..3 {
            for k in 0..4 {
                topo.push((4 * o + k, 4 * o + (k + 1) % 4));
            }
        }
        let layout = PartLayout {
            parts: (0..3).map(|o| (4 * o..4 * o + 4).collect()).collect(),
            part_edges: vec![(0, 1), (1, 2)],
        };
        (shape, layout, topo)
    }

    #[test]
    fn composite_matches_elementwise_formula() {
        let (shape, layout, topo) = three_part_toy();
        let d_euc = euclidean_distances(&shape);
        let lengths = edge_lengths(&shape, &topo);
        let d_geo = geodesic_distances(12, &topo, &lengths).unwrap();
        let g = composite_part_weights(&layout, &topo, &d_euc, &d_geo, 0.5, 0.1).unwrap();

        let part = |v: usize| v / 4;
        let dbar: Vec<f64> = (0..3)
            .map(|o| {
                let es: Vec<_> = topo.iter().filter(|e| part(e.0) == o).collect();
                es.iter().map(|e| d_euc[(e.0, e.1)]).sum::<f64>() / es.len() as f64
            })
            .collect();
        let adjacent = |a: usize, b: usize| matches!((a.min(b), a.max(b)), (0, 1) | (1, 2));
        let mut expected = Vec::new();
        for i in 0..12 {
            for j in (i + 1)..12 {
                let (o, q) = (part(i), part(j));
                let mut w = 0.0;
                if o == q {
                    w += 0.5 * (-(d_geo[(i, j)] / dbar[o]).powi(2)).exp();
                }
                if adjacent(o, q) {
                    let mut dmin = f64::INFINITY;
                    for a in 4 * o..4 * o + 4 {
                        for b in 4 * q..4 * q + 4 {
                            dmin = dmin.min(d_euc[(a, b)]);
                        }
                    }
                    let t = 2.0 / (dbar[o] + dbar[q]) * (d_euc[(i, j)] - dmin);
                    w += 0.5 * (-t * t).exp();
                }
                if w >= 0.1 {
                    expected.push(((i, j), w));
                }
            }
        }
        assert_eq!(g.edge_count(), expected.len());
        for ((e, w), (ee, ew)) in g.edges().iter().zip(g.weights()).zip(&expected) {
            assert_eq!(e, &ee.clone());
            assert_abs_diff_eq!(*w, *ew, epsilon = 1e-12);
        }
        // Parts 0 and 2 are not adjacent: no edges between them.
        assert!(g.edges().iter().all(|&(i, j)| !(part(i) == 0 && part(j) == 2)));
    }

    #[test]
    fn closest_cross_pair_has_zero_distance() {
        let (shape, layout, topo) = three_part_toy();
        let d_euc = euclidean_distances(&shape);
        let d_geo = geodesic_distances(12, &topo, &edge_lengths(&shape, &topo)).unwrap();
        let pd = part_distances(&layout, &topo, &d_euc, &d_geo).unwrap();
        let block = pd.between_parts.view((0, 4), (4, 4));
        assert_eq!(block.min(), 0.0);
        // Nearest pair (1 → 4) and (2 → 7): bs contribution is (1 − α_D)·1.
        let g = composite_part_weights(&layout, &topo, &d_euc, &d_geo, 0.5, 0.1).unwrap();
        let idx = g.edges().iter().position(|&e| e == (1, 4)).unwrap();
        assert_abs_diff_eq!(g.weights()[idx], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn overlapping_parts_rejected() {
        let (shape, mut layout, topo) = three_part_toy();
        layout.parts[1].push(0);
        let d = euclidean_distances(&shape);
        assert!(matches!(
            composite_part_weights(&layout, &topo, &d, &d, 0.5, 0.1),
            Err(Error::Validation { .. })
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #[test]
            fn translation_and_scaling(seed in any::<u64>(), s in 0.1f64..5.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let g = random_graph(&mut rng, 7, 9);
                let e = IncidenceOperator::new(&g);
                let z = DVector::from_fn(21, |_, _| rng.random_range(-1.0..1.0));
                let c = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
                let shifted = DVector::from_fn(21, |i, _| z[i] + c[i / 7]);
                prop_assert!((e.apply(&shifted).norm() - e.apply(&z).norm()).abs() < 1e-12);

                let w2: Vec<f64> = g.weights().iter().map(|w| w * s * s).collect();
                let g2 = VertexGraph::new(7, g.edges().to_vec(), w2).unwrap();
                let e2 = IncidenceOperator::new(&g2);
                prop_assert!((e2.apply(&z).norm() - s * e.apply(&z).norm()).abs() < 1e-12);
            }

            #[test]
            fn euclidean_matrix_properties(seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let shape = DMatrix::from_fn(6, 3, |_, _| rng.random_range(-1.0..1.0));
                let d = euclidean_distances(&shape);
                for i in 0..6 {
                    prop_assert_eq!(d[(i, i)], 0.0);
                    for j in 0..6 {
                        prop_assert_eq!(d[(i, j)], d[(j, i)]);
                        for k in 0..6 {
                            prop_assert!(d[(i, j)] <= d[(i, k)] + d[(k, j)] + 1e-12);
                        }
                    }
                }
            }
        }
    }
}
