//! The eight evaluation measures of a trained model: reconstruction,
//! specificity, generalisation and sparse reconstruction, each as average
//! and maximum vertex error in the original units.

use localdeform::config::TrainConfig;
use localdeform::eval::{evaluate, EvalConfig, Summary};
use localdeform::pipeline::{build_graph, train, trainer};
use localdeform::synthetic::{generate, SyntheticSpec};

fn main() -> localdeform::Result<()> {
    let set = generate(&SyntheticSpec {
        samples: 20,
        ..Default::default()
    })?
    .set;
    let mut cfg = TrainConfig::default();
    cfg.solver.factors = 6;
    let graph = build_graph(&set, &cfg.graph, None)?;
    let model = train(&set, &graph, &cfg, false)?.model;

    let eval = EvalConfig {
        specificity_samples: 50,
        ..Default::default()
    };
    // Generalisation and sparse reconstruction retrain on each fold.
    let t = trainer(&set, &graph, &cfg, false);
    let report = evaluate(&model.factors, &t, &set, &eval)?;
    for (name, values) in report.families() {
        let s = Summary::of(&values);
        println!(
            "{name:<20} mean {:.5}  median {:.5}  n={}",
            s.mean,
            s.median,
            values.len()
        );
    }
    Ok(())
}
