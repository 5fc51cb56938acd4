//! Kernelized pathway: with only two training shapes the data matrix has
//! rank one, but the kernelized covariance still yields many local factors.

use localdeform::graph::{euclidean_distances, mesh_edges, topology_graph, IncidenceOperator, DEFAULT_THETA};
use localdeform::kernel::{kernelized_covariance, kpca, solve_kernelized, KernelConfig};
use localdeform::prox::RegularizerWeights;
use localdeform::solver::SolverConfig;
use localdeform::synthetic::{generate, BaseMesh, SyntheticSpec};

fn main() -> localdeform::Result<()> {
    let data = generate(&SyntheticSpec {
        mesh: BaseMesh::Grid { width: 10, height: 10 },
        regions: 2,
        radius: 2,
        samples: 2,
        ..Default::default()
    })?;
    let set = &data.set;
    let m = 8;
    let graph = topology_graph(set.mean_shape(), &mesh_edges(set.faces()), DEFAULT_THETA)?;
    let e = IncidenceOperator::new(&graph);
    let d = euclidean_distances(set.mean_shape());
    let kernel = KernelConfig { bandwidth: 0.2 };

    let k = kernelized_covariance(set.data(), &d, kernel.bandwidth)?;
    let baseline = kpca(&k, m)?;
    println!(
        "kPCA: {} factors from a {}×{} kernel",
        baseline.ncols(),
        k.nrows(),
        k.ncols()
    );

    let weights = RegularizerWeights::kernelized_defaults(set.vertex_count(), m, graph.edge_count());
    let cfg = SolverConfig {
        factors: m,
        ..Default::default()
    };
    let (model, trace) = solve_kernelized(set.data(), &d, &e, &weights, &cfg, &kernel)?;
    let residual = (model.factors.transpose() * (&model.factors * &model.coefficients - set.data())).amax();
    println!(
        "sparse kernelized model: {} factors after {} iterations, normal-equation residual {residual:.1e}",
        model.factor_count(),
        trace.iterations()
    );
    Ok(())
}
