//! End-to-end training: vertex graph, factorization (direct or kernelized),
//! post-processing, and the trainer callbacks used by cross-validation and
//! parameter search.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::{GraphConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluate, parameter_search, EvalConfig, ParameterDraw, ScoreReport, SearchResult};
use crate::graph::{
    composite_part_weights, edge_lengths, euclidean_distances, geodesic_distances, mesh_edges, topology_graph,
    IncidenceOperator, PartLayout, VertexGraph,
};
use crate::kernel::{kernelized_covariance, kpca, solve_kernelized, KernelConfig};
use crate::post::postprocess;
use crate::prox::RegularizerWeights;
use crate::shape::{DeformationModel, ShapeSet};
use crate::solver::{solve, SolverTrace};

/// Vertex graph of a shape set: composite part weights when `parts` is
/// given, Gaussian topology weights otherwise.
pub fn build_graph(set: &ShapeSet, config: &GraphConfig, parts: Option<&PartLayout>) -> Result<VertexGraph> {
    let n = set.vertex_count();
    let topology = mesh_edges(set.faces());
    if topology.is_empty() {
        log::warn!("shape set has no faces; the graph term is disabled");
        return VertexGraph::new(n, Vec::new(), Vec::new());
    }
    match parts {
        None => topology_graph(set.mean_shape(), &topology, config.theta),
        Some(layout) => {
            let d_euc = euclidean_distances(set.mean_shape());
            let lengths = edge_lengths(set.mean_shape(), &topology);
            let d_geo = geodesic_distances(n, &topology, &lengths)?;
            composite_part_weights(layout, &topology, &d_euc, &d_geo, config.alpha_d, config.theta)
        }
    }
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: DeformationModel,
    pub trace: SolverTrace,
    pub weights: RegularizerWeights,
}

/// Factorizes `data` (columns of the prepared set, or a subset of them) and
/// post-processes the factors. Returns `(Φ, A, trace, weights)`.
pub fn factorize(
    data: &DMatrix<f64>,
    mean_shape: &DMatrix<f64>,
    graph: &VertexGraph,
    config: &TrainConfig,
    kernelized: bool,
) -> Result<(DMatrix<f64>, DMatrix<f64>, SolverTrace, RegularizerWeights)> {
    config.validate()?;
    let n = graph.vertex_count();
    if data.nrows() != 3 * n {
        return Err(Error::dim("data rows", 3 * n, data.nrows()));
    }
    let e = IncidenceOperator::new(graph);
    let w = config.weights(n, data.ncols(), graph.edge_count(), kernelized);
    let m = config.solver.factors;
    let (phi, a, trace) = if kernelized {
        let d = euclidean_distances(mean_shape);
        let (model, trace) = solve_kernelized(data, &d, &e, &w, &config.solver, &config.kernel)?;
        (model.factors, model.coefficients, trace)
    } else {
        let (f, trace) = solve(data, &e, &w, &config.solver)?;
        (f.factors, f.coefficients, trace)
    };
    let (phi, a) = postprocess(&phi, &a, graph, m, config.split_threshold)?;
    if phi.ncols() < m {
        log::warn!("only {} non-zero factors remain of the {m} requested", phi.ncols());
    }
    Ok((phi, a, trace, w))
}

/// Trains a model on the whole shape set.
pub fn train(set: &ShapeSet, graph: &VertexGraph, config: &TrainConfig, kernelized: bool) -> Result<Trained> {
    let (phi, a, trace, weights) = factorize(set.data(), set.mean_shape(), graph, config, kernelized)?;
    let model = DeformationModel::new(set.mean_vector(), phi, a, set.scale())?;
    Ok(Trained { model, trace, weights })
}

/// Trainer callback for cross-validation: the same pipeline on a subset.
pub fn trainer<'a>(
    set: &'a ShapeSet,
    graph: &'a VertexGraph,
    config: &'a TrainConfig,
    kernelized: bool,
) -> impl Fn(&DMatrix<f64>) -> Result<DMatrix<f64>> + Sync + 'a {
    move |data: &DMatrix<f64>| factorize(data, set.mean_shape(), graph, config, kernelized).map(|(phi, ..)| phi)
}

/// Which model family a parameter search tunes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMethod {
    /// Kernelized sparse factorization with the drawn bandwidth.
    #[default]
    Ours,
    /// Kernel PCA with the drawn bandwidth.
    Kpca,
}

/// kPCA factors of the kernelized covariance of `data`.
pub fn kpca_factors(data: &DMatrix<f64>, mean_shape: &DMatrix<f64>, bandwidth: f64, m: usize) -> Result<DMatrix<f64>> {
    let d = euclidean_distances(mean_shape);
    kpca(&kernelized_covariance(data, &d, bandwidth)?, m)
}

/// Full evaluation of one parameter draw.
pub fn evaluate_draw(
    set: &ShapeSet,
    graph: &VertexGraph,
    config: &TrainConfig,
    eval: &EvalConfig,
    method: SearchMethod,
    draw: &ParameterDraw,
) -> Result<ScoreReport> {
    let mut cfg = config.clone();
    cfg.kernel = KernelConfig {
        bandwidth: draw.bandwidth,
    };
    let m = cfg.solver.factors;
    match method {
        SearchMethod::Ours => {
            let t = trainer(set, graph, &cfg, true);
            let phi = t(set.data())?;
            evaluate(&phi, &t, set, eval)
        }
        SearchMethod::Kpca => {
            let t = |data: &DMatrix<f64>| kpca_factors(data, set.mean_shape(), draw.bandwidth, m);
            let phi = t(set.data())?;
            evaluate(&phi, &t, set, eval)
        }
    }
}

/// Random search over the kernel bandwidth, scoring each draw by the mean of
/// each of the eight measures.
pub fn search(
    set: &ShapeSet,
    graph: &VertexGraph,
    config: &TrainConfig,
    eval: &EvalConfig,
    method: SearchMethod,
    samples: usize,
    seed: u64,
) -> Result<SearchResult> {
    parameter_search(
        |draw| {
            let report = evaluate_draw(set, graph, config, eval, method, draw)?;
            log::info!("bandwidth {:.4}: {:?}", draw.bandwidth, report.means());
            Ok(report.means())
        },
        samples,
        seed,
    )
}
