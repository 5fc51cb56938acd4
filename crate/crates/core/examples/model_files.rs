//! On-disk formats: save a trained model, load it back, and export a shape
//! moved along the first factor as an OBJ mesh.

use localdeform::config::TrainConfig;
use localdeform::io::{load_model, read_obj, save_model, write_obj, ModelInfo, FORMAT_VERSION};
use localdeform::pipeline::{build_graph, train};
use localdeform::shape::devectorize;
use localdeform::synthetic::{generate, BaseMesh, SyntheticSpec};
use nalgebra::DVector;

fn main() -> localdeform::Result<()> {
    let set = generate(&SyntheticSpec {
        mesh: BaseMesh::Icosphere { subdivisions: 2 },
        regions: 2,
        radius: 1,
        samples: 10,
        ..Default::default()
    })?
    .set;
    let mut cfg = TrainConfig::default();
    cfg.solver.factors = 4;
    let graph = build_graph(&set, &cfg.graph, None)?;
    let trained = train(&set, &graph, &cfg, false)?;

    let dir = std::env::temp_dir().join("localdeform-model");
    let info = ModelInfo {
        format_version: FORMAT_VERSION,
        vertex_count: set.vertex_count(),
        shape_count: set.shape_count(),
        factor_count: trained.model.factor_count(),
        scale: set.scale(),
        method: "direct".into(),
        seed: cfg.solver.seed,
        iterations: trained.trace.iterations(),
        final_objective: Some(trained.trace.final_objective()),
        weights: Some(trained.weights),
        bandwidth: None,
    };
    save_model(&dir, &trained.model, &info, set.faces())?;
    let (model, info, faces) = load_model(&dir)?;
    println!(
        "loaded {} factors over {} vertices from {}",
        info.factor_count,
        info.vertex_count,
        dir.display()
    );

    let mut alpha = DVector::zeros(model.factor_count());
    alpha[0] = 3.0;
    let moved = devectorize(&model.deform(&alpha)?)?;
    let obj = dir.join("factor1.obj");
    write_obj(&obj, &moved, &faces)?;
    let (back, _) = read_obj(&obj)?;
    println!(
        "wrote {}, round-trip error {:.1e}",
        obj.display(),
        (back - moved).amax()
    );
    Ok(())
}
