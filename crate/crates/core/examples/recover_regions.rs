//! Planted local deformations: generate shapes with known support regions,
//! learn a model, and match every region to its best factor.

use localdeform::config::TrainConfig;
use localdeform::pipeline::{build_graph, train};
use localdeform::synthetic::{generate, match_regions, SyntheticSpec};

fn main() -> localdeform::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let data = generate(&SyntheticSpec {
        seed,
        ..Default::default()
    })?;
    println!(
        "{} shapes of {} vertices, regions centred at {:?}",
        data.set.shape_count(),
        data.set.vertex_count(),
        data.centers
    );
    let cfg = TrainConfig::default();
    let graph = build_graph(&data.set, &cfg.graph, None)?;
    let model = train(&data.set, &graph, &cfg, false)?.model;
    for (r, m) in match_regions(&data.masks, &model.factors).iter().enumerate() {
        match m {
            Some((f, j)) => println!(
                "region {r} ({} vertices): factor {} with Jaccard {j:.2}",
                data.region(r).len(),
                f + 1
            ),
            None => println!("region {r}: no factor overlaps"),
        }
    }
    Ok(())
}
