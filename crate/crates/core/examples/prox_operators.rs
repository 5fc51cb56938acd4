//! Proximal operators: the closed forms and the composite factor-norm prox
//! on a small path graph.

use localdeform::graph::{IncidenceOperator, VertexGraph};
use localdeform::prox::{
    block_soft_threshold, phi_prox_objective, project_l1_ball, prox_phi_norm_traced, soft_threshold, ProxConfig,
    RegularizerWeights,
};
use nalgebra::DVector;

fn main() -> localdeform::Result<()> {
    let y = DVector::from_vec(vec![2.0, -0.3, 0.0]);
    println!("soft threshold      {:?}", soft_threshold(&y, 0.5).as_slice());
    println!("block threshold     {:?}", block_soft_threshold(&y, 1.0).as_slice());
    println!("l1-ball projection  {:?}", project_l1_ball(&y, 1.0)?.as_slice());

    // Five vertices on a path; x, y and z blocks of length 5.
    let graph = VertexGraph::unweighted(5, (0..4).map(|i| (i, i + 1)).collect())?;
    let e = IncidenceOperator::new(&graph);
    let weights = RegularizerWeights {
        lambda: 1.0,
        lambda_a: 1.0,
        lambda_1: 0.3,
        lambda_2: 0.2,
        lambda_inf: 0.1,
        lambda_g: 0.4,
    };
    let z = DVector::from_vec(vec![
        1.0, 0.9, 0.1, -0.05, 0.0, //
        0.5, 0.6, 0.0, 0.0, 0.02, //
        0.0, 0.1, 0.0, 0.0, 0.0,
    ]);
    let (x, trace) = prox_phi_norm_traced(&z, 1.0, &weights, &e, &ProxConfig::default())?;
    println!(
        "factor-norm prox: {} inner iterations (converged: {}), {} exact zeros",
        trace.iterations,
        trace.converged,
        x.iter().filter(|v| **v == 0.0).count()
    );
    println!(
        "proximal objective {:.4} at the prox, {:.4} at the input",
        phi_prox_objective(x.as_slice(), z.as_slice(), 1.0, &weights, &e),
        phi_prox_objective(z.as_slice(), z.as_slice(), 1.0, &weights, &e),
    );
    Ok(())
}
