//! Post-processing of a factorization: unit-deviation coefficient rows,
//! ordering by factor norm, splitting into connected support regions and
//! truncation.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::VertexGraph;

/// Sample standard deviation (divisor `n − 1`), or the population one for a
/// single entry.
fn row_std(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count();
    if n == 0 {
        return 0.0;
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let ss: f64 = values.map(|v| (v - mean).powi(2)).sum();
    (ss / (n.max(2) - 1) as f64).sqrt()
}

/// Scales each coefficient row to unit standard deviation (compensating in the
/// factor) and sorts factors by non-increasing ℓ2 norm. Rows with zero
/// deviation keep scale 1 and go last. Returns the permutation as the list of
/// original indices in output order.
pub fn normalize_and_order(
    factors: &DMatrix<f64>,
    coefficients: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>, Vec<usize>)> {
    let m = factors.ncols();
    if coefficients.nrows() != m {
        return Err(Error::dim("coefficient rows", m, coefficients.nrows()));
    }
    let mut phi = factors.clone();
    let mut a = coefficients.clone();
    let mut degenerate = vec![false; m];
    for j in 0..m {
        let s = row_std(a.row(j).iter().copied());
        if s > 0.0 && s.is_finite() {
            a.row_mut(j).scale_mut(1.0 / s);
            phi.column_mut(j).scale_mut(s);
        } else {
            degenerate[j] = true;
        }
    }
    let norms: Vec<f64> = (0..m).map(|j| phi.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| {
        degenerate[i]
            .cmp(&degenerate[j])
            .then(norms[j].total_cmp(&norms[i]))
            .then(i.cmp(&j))
    });
    let phi = phi.select_columns(&order);
    let a = a.select_rows(&order);
    Ok((phi, a, order))
}

/// Vertex `i` is active in `column` when any of its three coordinates exceeds
/// `threshold` in magnitude.
pub fn active_vertices(column: &[f64], threshold: f64) -> Vec<bool> {
    let n = column.len() / 3;
    (0..n)
        .map(|i| (0..3).any(|d| column[i + d * n].abs() > threshold))
        .collect()
}

/// Connected components of the graph restricted to edges with at least one
/// active endpoint, keeping only components that contain an active vertex.
/// Components are listed by their smallest vertex; members are sorted.
pub fn active_components(graph: &VertexGraph, active: &[bool]) -> Vec<Vec<usize>> {
    let n = graph.vertex_count();
    let mut adjacency = vec![Vec::new(); n];
    for &(i, j) in graph.edges() {
        if active[i] || active[j] {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
    }
    let mut seen = vec![false; n];
    let mut components = Vec::new();
    let mut stack = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut members = Vec::new();
        while let Some(v) = stack.pop() {
            members.push(v);
            for &u in &adjacency[v] {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        if members.iter().any(|&v| active[v]) {
            members.sort_unstable();
            components.push(members);
        }
    }
    components
}

/// Splits every factor into one factor per connected support region; each
/// piece reuses the coefficient row of its parent so the product is unchanged.
pub fn split_factors(
    factors: &DMatrix<f64>,
    coefficients: &DMatrix<f64>,
    graph: &VertexGraph,
    threshold: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = graph.vertex_count();
    if factors.nrows() != 3 * n {
        return Err(Error::dim("factor rows", 3 * n, factors.nrows()));
    }
    if coefficients.nrows() != factors.ncols() {
        return Err(Error::dim("coefficient rows", factors.ncols(), coefficients.nrows()));
    }
    if !(threshold >= 0.0) {
        return Err(Error::invalid("threshold", "must be non-negative"));
    }
    let mut columns = Vec::new();
    let mut rows = Vec::new();
    for m in 0..factors.ncols() {
        let col = factors.column(m);
        let active = active_vertices(col.as_slice(), threshold);
        for component in active_components(graph, &active) {
            let mut piece = nalgebra::DVector::zeros(3 * n);
            for &v in &component {
                for d in 0..3 {
                    piece[v + d * n] = col[v + d * n];
                }
            }
            columns.push(piece);
            rows.push(coefficients.row(m).into_owned());
        }
    }
    let k = coefficients.ncols();
    if columns.is_empty() {
        return Ok((DMatrix::zeros(3 * n, 0), DMatrix::zeros(0, k)));
    }
    Ok((DMatrix::from_columns(&columns), DMatrix::from_rows(&rows)))
}

/// Keeps the first `m` factors.
pub fn truncate(factors: &DMatrix<f64>, coefficients: &DMatrix<f64>, m: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let keep = m.min(factors.ncols());
    (
        factors.columns(0, keep).into_owned(),
        coefficients.rows(0, keep).into_owned(),
    )
}

/// Normalization, splitting, renormalization and truncation to `m` factors.
/// Below-threshold entries are not zeroed, so only splitting with threshold 0
/// is exact.
pub fn postprocess(
    factors: &DMatrix<f64>,
    coefficients: &DMatrix<f64>,
    graph: &VertexGraph,
    m: usize,
    threshold: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (phi, a) = split_factors(factors, coefficients, graph, threshold)?;
    let (phi, a, _) = normalize_and_order(&phi, &a)?;
    Ok(truncate(&phi, &a, m))
}
