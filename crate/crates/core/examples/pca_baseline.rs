//! Global PCA as a reference: orthonormal factors with the smallest
//! training reconstruction error, but no local support.

use localdeform::eval::reconstruction_error;
use localdeform::pca::{explained_variance, pca};
use localdeform::post::active_vertices;
use localdeform::synthetic::{generate, SyntheticSpec};

fn main() -> localdeform::Result<()> {
    let set = generate(&SyntheticSpec::default())?.set;
    let phi = pca(set.data(), 4)?;
    let variance = explained_variance(set.data(), &phi);
    let errors = reconstruction_error(&phi, &set)?;
    let mean = errors.iter().map(|e| e.avg).sum::<f64>() / errors.len() as f64;
    println!(
        "explained variance {:?}",
        variance.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>()
    );
    println!("mean reconstruction error {mean:.5}");
    for m in 0..phi.ncols() {
        let active = active_vertices(phi.column(m).as_slice(), 1e-12)
            .iter()
            .filter(|a| **a)
            .count();
        println!("factor {} touches {active} of {} vertices", m + 1, set.vertex_count());
    }
    Ok(())
}
