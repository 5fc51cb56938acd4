//! Random search over the kernel bandwidth, picking the draw whose
//! normalized scores have the smallest sum.

use localdeform::config::TrainConfig;
use localdeform::eval::EvalConfig;
use localdeform::pipeline::{build_graph, search, SearchMethod};
use localdeform::synthetic::{generate, BaseMesh, SyntheticSpec};

fn main() -> localdeform::Result<()> {
    let set = generate(&SyntheticSpec {
        mesh: BaseMesh::Grid { width: 10, height: 10 },
        regions: 2,
        radius: 2,
        samples: 12,
        ..Default::default()
    })?
    .set;
    let mut cfg = TrainConfig::default();
    cfg.solver.factors = 4;
    cfg.solver.max_iterations = 50;
    let eval = EvalConfig {
        specificity_samples: 20,
        folds: 3,
        ..Default::default()
    };
    let graph = build_graph(&set, &cfg.graph, None)?;
    for method in [SearchMethod::Kpca, SearchMethod::Ours] {
        let result = search(&set, &graph, &cfg, &eval, method, 4, 1)?;
        print!("{method:?}:\n{}", result.csv());
        println!("best bandwidth {:.4}\n", result.best_draw().bandwidth);
    }
    Ok(())
}
