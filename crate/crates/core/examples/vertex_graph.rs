//! Vertex graphs: Gaussian edge weights from a mesh, the incidence operator,
//! and the composite graph of a shape made of two parts.

use localdeform::graph::{
    composite_part_weights, edge_lengths, euclidean_distances, geodesic_distances, mesh_edges, topology_graph,
    IncidenceOperator, PartLayout, DEFAULT_ALPHA_D, DEFAULT_THETA,
};
use localdeform::synthetic::{base_mesh, BaseMesh};
use nalgebra::DVector;

fn main() -> localdeform::Result<()> {
    let (vertices, faces) = base_mesh(&BaseMesh::Grid { width: 6, height: 6 });
    let topology = mesh_edges(&faces);
    let graph = topology_graph(&vertices, &topology, DEFAULT_THETA)?;
    println!(
        "{} vertices, {} mesh edges, {} graph edges",
        graph.vertex_count(),
        topology.len(),
        graph.edge_count()
    );

    let e = IncidenceOperator::new(&graph);
    let n = graph.vertex_count();
    let ramp = DVector::from_fn(3 * n, |i, _| (i % n) as f64 / n as f64);
    let flat = DVector::from_element(3 * n, 1.0);
    println!(
        "|E z| for a ramp {:.4}, for a constant {:.1e}",
        e.apply(&ramp).norm(),
        e.apply(&flat).norm()
    );

    // Left and right halves as two interacting parts.
    let parts = PartLayout {
        parts: vec![
            (0..n).filter(|v| v % 6 < 3).collect(),
            (0..n).filter(|v| v % 6 >= 3).collect(),
        ],
        part_edges: vec![(0, 1)],
    };
    let d_euc = euclidean_distances(&vertices);
    let d_geo = geodesic_distances(n, &topology, &edge_lengths(&vertices, &topology))?;
    let composite = composite_part_weights(&parts, &topology, &d_euc, &d_geo, DEFAULT_ALPHA_D, DEFAULT_THETA)?;
    let crossing = composite
        .edges()
        .iter()
        .filter(|&&(i, j)| (i % 6 < 3) != (j % 6 < 3))
        .count();
    println!(
        "two-part graph: {} edges, {crossing} between the parts",
        composite.edge_count()
    );
    Ok(())
}
