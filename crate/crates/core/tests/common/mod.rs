//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use localdeform::graph::VertexGraph;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Dense full incidence matrix `I₃ ⊗ E′` assembled directly from the edge list.
pub fn dense_incidence(graph: &VertexGraph) -> DMatrix<f64> {
    let n = graph.vertex_count();
    let m = graph.edge_count();
    let mut e = DMatrix::zeros(3 * m, 3 * n);
    for d in 0..3 {
        for (p, (&(i, j), &w)) in graph.edges().iter().zip(graph.weights()).enumerate() {
            e[(d * m + p, d * n + i)] = w.sqrt();
            e[(d * m + p, d * n + j)] = -w.sqrt();
        }
    }
    e
}

/// Penalty weights of the factor norm, flattened for the oracle.
#[derive(Clone, Copy, Debug)]
pub struct PhiWeights {
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
    pub graph: f64,
}

pub fn phi_norm_dense(x: &DVector<f64>, w: &PhiWeights, e: &DMatrix<f64>) -> f64 {
    let n = x.len() / 3;
    let l1: f64 = x.iter().map(|v| v.abs()).sum();
    let l2 = x.norm();
    let linf: f64 = (0..n)
        .map(|i| x[i].abs().max(x[i + n].abs()).max(x[i + 2 * n].abs()))
        .sum();
    let g = if e.nrows() > 0 { (e * x).norm() } else { 0.0 };
    w.l1 * l1 + w.l2 * l2 + w.linf * linf + w.graph * g
}

pub fn prox_objective_dense(x: &DVector<f64>, z: &DVector<f64>, scale: f64, w: &PhiWeights, e: &DMatrix<f64>) -> f64 {
    0.5 * (x - z).norm_squared() + scale * phi_norm_dense(x, w, e)
}

/// Minimizes `½‖x − z‖² + scale·‖x‖_Φ` by plain subgradient descent with
/// step `1/(t + 1)`, returning the best iterate seen.
pub fn subgradient_prox(
    z: &DVector<f64>,
    scale: f64,
    w: &PhiWeights,
    e: &DMatrix<f64>,
    iterations: usize,
) -> (DVector<f64>, f64) {
    let n = z.len() / 3;
    let et = e.transpose();
    let mut x = z.clone();
    let mut best = (x.clone(), prox_objective_dense(&x, z, scale, w, e));
    let zero = DVector::zeros(z.len());
    let f0 = prox_objective_dense(&zero, z, scale, w, e);
    if f0 < best.1 {
        best = (zero.clone(), f0);
        x = zero;
    }
    for t in 0..iterations {
        let mut g = &x - z;
        let mut pen = DVector::zeros(z.len());
        for i in 0..x.len() {
            pen[i] += w.l1 * x[i].signum() * (x[i] != 0.0) as u8 as f64;
        }
        let nx = x.norm();
        if nx > 0.0 {
            pen += &x * (w.l2 / nx);
        }
        for i in 0..n {
            let idx = [i, i + n, i + 2 * n];
            let (mut jm, mut vm) = (idx[0], x[idx[0]].abs());
            for &j in &idx[1..] {
                if x[j].abs() > vm {
                    jm = j;
                    vm = x[j].abs();
                }
            }
            if vm > 0.0 {
                pen[jm] += w.linf * x[jm].signum();
            }
        }
        if e.nrows() > 0 {
            let ex = e * &x;
            let ne = ex.norm();
            if ne > 0.0 {
                pen += &et * ex * (w.graph / ne);
            }
        }
        g += pen * scale;
        x -= g * (1.0 / (t as f64 + 1.0));
        let f = prox_objective_dense(&x, z, scale, w, e);
        if f < best.1 {
            best = (x.clone(), f);
        }
    }
    best
}

/// Random connected-ish graph with `n` vertices: a spanning path plus `extra`
/// random chords, weights in `(0.2, 2)`.
pub fn random_graph<R: Rng>(rng: &mut R, n: usize, extra: usize) -> VertexGraph {
    let mut edges: Vec<(usize, usize)> = (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect();
    let mut tries = 0;
    while edges.len() < n.saturating_sub(1) + extra && tries < 1000 {
        tries += 1;
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        let e = (i.min(j), i.max(j));
        if i != j && !edges.contains(&e) {
            edges.push(e);
        }
    }
    let weights = edges.iter().map(|_| rng.random_range(0.2..2.0)).collect();
    VertexGraph::new(n, edges, weights).unwrap()
}
