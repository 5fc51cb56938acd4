//! Sparse localized factorization of a synthetic shape set, with the
//! objective trace of the block-coordinate descent.

use localdeform::graph::{mesh_edges, topology_graph, IncidenceOperator, DEFAULT_THETA};
use localdeform::prox::RegularizerWeights;
use localdeform::solver::{solve, zero_fraction, SolverConfig};
use localdeform::synthetic::{generate, SyntheticSpec};

fn main() -> localdeform::Result<()> {
    let data = generate(&SyntheticSpec::default())?;
    let set = &data.set;
    let graph = topology_graph(set.mean_shape(), &mesh_edges(set.faces()), DEFAULT_THETA)?;
    let e = IncidenceOperator::new(&graph);
    let m = 8;
    let weights = RegularizerWeights::defaults(set.vertex_count(), set.shape_count(), m, graph.edge_count());
    let cfg = SolverConfig {
        factors: m,
        ..Default::default()
    };
    let (f, trace) = solve(set.data(), &e, &weights, &cfg)?;
    for (t, obj) in trace.objectives.iter().enumerate().step_by(20) {
        println!(
            "iteration {t:>3}  objective {obj:>12.4}  zeros {:.3}",
            trace.sparsity[t]
        );
    }
    println!(
        "stopped after {} iterations (converged: {}), final objective {:.4}",
        trace.iterations(),
        trace.converged,
        trace.final_objective()
    );
    println!(
        "fraction of exact zeros in the factors: {:.3}",
        zero_fraction(&f.factors)
    );
    Ok(())
}
