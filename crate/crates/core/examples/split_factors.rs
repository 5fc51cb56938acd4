//! Post-processing: a factor with two separate supports is split into two
//! local factors, then normalized and ordered.

use localdeform::graph::VertexGraph;
use localdeform::post::{active_components, active_vertices, postprocess};
use nalgebra::DMatrix;

fn main() -> localdeform::Result<()> {
    // A path of 8 vertices; one factor is active at both ends.
    let n = 8;
    let graph = VertexGraph::unweighted(n, (0..n - 1).map(|i| (i, i + 1)).collect())?;
    let mut phi = DMatrix::zeros(3 * n, 2);
    for v in [0, 1, 6, 7] {
        phi[(v, 0)] = 1.0 + v as f64 / 10.0;
    }
    phi[(3 + n, 1)] = 0.5;
    let a = DMatrix::from_row_slice(2, 4, &[1.0, -1.0, 2.0, 0.0, 0.3, 0.1, -0.2, 0.4]);

    let active = active_vertices(phi.column(0).as_slice(), 0.0);
    println!("components of factor 1: {:?}", active_components(&graph, &active));

    let (p, q) = postprocess(&phi, &a, &graph, 3, 0.0)?;
    println!("{} factors after splitting", p.ncols());
    for m in 0..p.ncols() {
        let support: Vec<usize> = (0..n).filter(|&v| p[(v, m)] != 0.0 || p[(v + n, m)] != 0.0).collect();
        println!(
            "  factor {}: norm {:.3}, support {support:?}",
            m + 1,
            p.column(m).norm()
        );
    }
    println!("data term unchanged: {:.1e}", (&p * &q - &phi * &a).norm());
    Ok(())
}
