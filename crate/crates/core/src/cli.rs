//! Command-line front end: `gen`, `train`, `eval`, `search` and `export-mesh`.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nalgebra::DVector;
use serde_json::json;

use crate::config::{self, EvalFile, TrainConfig};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::graph::{PartLayout, VertexGraph};
use crate::io::{self, ModelInfo, ModelPaths, FORMAT_VERSION};
use crate::pipeline::{build_graph, search, train, trainer, SearchMethod};
use crate::shape::{devectorize, ShapeSet};
use crate::synthetic::{generate, match_regions, SyntheticSpec};

#[derive(Debug, Parser)]
#[command(name = "localdeform", version, about = "Learn localized shape deformation models")]
pub struct Cli {
    /// Worker threads for the parallel loops.
    #[arg(long, global = true, env = "LOCALDEFORM_THREADS", default_value_t = 1)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic shape set with planted local deformations.
    Gen {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Learn a model from a data directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Factorize the kernelized covariance instead of the data.
        #[arg(long)]
        kernelized: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compute the eight evaluation measures of a trained model.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Random search over the kernel bandwidth.
    Search {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 10)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Training config used for every draw.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        eval_config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = MethodArg::Ours)]
        method: MethodArg,
        /// Directory for `search.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the mean shape moved along one factor as an OBJ file.
    ExportMesh {
        #[arg(long)]
        model: PathBuf,
        /// 1-based factor index.
        #[arg(long, default_value_t = 1)]
        factor: usize,
        #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
        alpha: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum MethodArg {
    Ours,
    Kpca,
}

/// The data directory: shapes, faces, and optional graph files.
pub struct DataDir {
    pub set: ShapeSet,
    pub edges: Option<PathBuf>,
    pub parts: Option<PartLayout>,
    pub masks: Option<Vec<Vec<bool>>>,
}

impl DataDir {
    pub fn load(dir: &Path) -> Result<Self> {
        let (shapes, faces) = io::read_shapes(dir)?;
        let set = ShapeSet::prepare(shapes)?.with_faces(faces)?;
        let edges = Some(dir.join("edges.csv")).filter(|p| p.exists());
        let parts_file = dir.join("parts.txt");
        let parts = if parts_file.exists() {
            let parts = io::read_parts(&parts_file)?;
            let pe = dir.join("part_edges.csv");
            let part_edges = if pe.exists() {
                let m = io::read_matrix_csv(&pe)?;
                if m.ncols() != 2 {
                    return Err(Error::invalid("part_edges", "expected two columns"));
                }
                m.row_iter().map(|r| (r[0] as usize, r[1] as usize)).collect()
            } else {
                let p = parts.len();
                (0..p).flat_map(|a| (a + 1..p).map(move |b| (a, b))).collect()
            };
            Some(PartLayout { parts, part_edges })
        } else {
            None
        };
        let masks_file = dir.join("masks.csv");
        let masks = if masks_file.exists() {
            Some(io::read_masks_csv(&masks_file)?)
        } else {
            None
        };
        Ok(DataDir {
            set,
            edges,
            parts,
            masks,
        })
    }

    pub fn graph(&self, config: &TrainConfig) -> Result<VertexGraph> {
        match &self.edges {
            Some(p) => io::read_edges_csv(p, self.set.vertex_count()),
            None => build_graph(&self.set, &config.graph, self.parts.as_ref()),
        }
    }
}

fn train_config(path: Option<&Path>) -> Result<TrainConfig> {
    let c: TrainConfig = match path {
        Some(p) => config::load(p)?,
        None => TrainConfig::default(),
    };
    c.validate()?;
    Ok(c)
}

fn eval_config(path: Option<&Path>) -> Result<EvalFile> {
    let c: EvalFile = match path {
        Some(p) => config::load(p)?,
        None => EvalFile::default(),
    };
    c.validate()?;
    Ok(c)
}

/// Runs one parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    if cli.threads == 0 {
        return Err(Error::invalid("threads", "must be at least 1"));
    }
    // A global pool may already exist when called more than once in-process.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    match cli.command {
        Command::Gen { spec, out, seed } => cmd_gen(spec.as_deref(), &out, seed),
        Command::Train {
            data,
            config,
            out,
            kernelized,
            seed,
        } => cmd_train(&data, config.as_deref(), &out, kernelized, seed),
        Command::Eval {
            model,
            data,
            config,
            out,
            seed,
        } => cmd_eval(&model, &data, config.as_deref(), &out, seed),
        Command::Search {
            data,
            samples,
            seed,
            config,
            eval_config,
            method,
            out,
        } => cmd_search(
            &data,
            samples,
            seed,
            config.as_deref(),
            eval_config.as_deref(),
            method,
            out.as_deref(),
        ),
        Command::ExportMesh {
            model,
            factor,
            alpha,
            out,
        } => cmd_export(&model, factor, alpha, &out),
    }
}

fn cmd_gen(spec: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut s: SyntheticSpec = match spec {
        Some(p) => config::load(p)?,
        None => SyntheticSpec::default(),
    };
    if let Some(seed) = seed {
        s.seed = seed;
    }
    let data = generate(&s)?;
    io::write_shapes_csv(&out.join("shapes.csv"), data.set.shapes())?;
    io::write_obj(&out.join("mesh.obj"), data.set.mean_shape(), data.set.faces())?;
    io::write_masks_csv(&out.join("masks.csv"), &data.masks)?;
    let spec_json = serde_json::to_string_pretty(&s).expect("spec serializes");
    io::write_text(&out.join("spec.json"), &(spec_json + "\n"))?;
    println!(
        "{}",
        json!({"vertices": data.set.vertex_count(), "shapes": data.set.shape_count(), "regions": data.masks.len()})
    );
    Ok(())
}

fn cmd_train(data: &Path, config: Option<&Path>, out: &Path, kernelized: bool, seed: Option<u64>) -> Result<()> {
    let mut cfg = train_config(config)?;
    if let Some(seed) = seed {
        cfg.solver.seed = seed;
    }
    let dir = DataDir::load(data)?;
    let graph = dir.graph(&cfg)?;
    let t = train(&dir.set, &graph, &cfg, kernelized)?;
    let info = ModelInfo {
        format_version: FORMAT_VERSION,
        vertex_count: dir.set.vertex_count(),
        shape_count: dir.set.shape_count(),
        factor_count: t.model.factor_count(),
        scale: dir.set.scale(),
        method: if kernelized { "kernelized" } else { "direct" }.into(),
        seed: cfg.solver.seed,
        iterations: t.trace.iterations(),
        final_objective: Some(t.trace.final_objective()),
        weights: Some(t.weights),
        bandwidth: kernelized.then_some(cfg.kernel.bandwidth),
    };
    io::save_model(out, &t.model, &info, dir.set.faces())?;
    let paths = ModelPaths::new(out);
    io::write_text(&paths.trace, &io::format_trace_csv(&t.trace))?;
    io::write_edges_csv(&paths.edges, &graph)?;
    let cfg_json = serde_json::to_string_pretty(&cfg).expect("config serializes");
    io::write_text(&out.join("train_config.json"), &(cfg_json + "\n"))?;
    println!(
        "{}",
        json!({"factors": info.factor_count, "iterations": info.iterations, "objective": info.final_objective})
    );
    Ok(())
}

fn cmd_eval(model_dir: &Path, data: &Path, config: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut ecfg = eval_config(config)?.eval;
    if let Some(seed) = seed {
        ecfg.seed = seed;
    }
    let (model, info, _) = io::load_model(model_dir)?;
    let dir = DataDir::load(data)?;
    if model.vertex_count() != dir.set.vertex_count() {
        return Err(Error::dim(
            "model vertex count",
            dir.set.vertex_count(),
            model.vertex_count(),
        ));
    }
    let saved = model_dir.join("train_config.json");
    let tcfg = if saved.exists() {
        train_config(Some(&saved))?
    } else {
        TrainConfig::default()
    };
    let edges = ModelPaths::new(model_dir).edges;
    let graph = if edges.exists() {
        io::read_edges_csv(&edges, dir.set.vertex_count())?
    } else {
        dir.graph(&tcfg)?
    };
    let kernelized = info.method == "kernelized";
    let t = trainer(&dir.set, &graph, &tcfg, kernelized);
    let report = evaluate(&model.factors, &t, &dir.set, &ecfg)?;
    io::write_text(&out.join("scores.csv"), &report.long_csv())?;
    io::write_text(&out.join("summary.csv"), &report.summary_csv())?;
    if let Some(masks) = &dir.masks {
        let mut s = String::from("region,factor,jaccard\n");
        for (r, m) in match_regions(masks, &model.factors).iter().enumerate() {
            match m {
                Some((f, j)) => s.push_str(&format!("{r},{},{j}\n", f + 1)),
                None => s.push_str(&format!("{r},,0\n")),
            }
        }
        io::write_text(&out.join("recovery.csv"), &s)?;
    }
    let means = report.means();
    let summary: serde_json::Map<String, serde_json::Value> = crate::eval::METRIC_NAMES
        .iter()
        .zip(means)
        .map(|(k, v)| (k.to_string(), json!(v)))
        .collect();
    println!("{}", serde_json::Value::Object(summary));
    Ok(())
}

fn cmd_search(
    data: &Path,
    samples: usize,
    seed: u64,
    config: Option<&Path>,
    eval_path: Option<&Path>,
    method: MethodArg,
    out: Option<&Path>,
) -> Result<()> {
    let cfg = train_config(config)?;
    let ecfg = eval_config(eval_path)?.eval;
    let dir = DataDir::load(data)?;
    let graph = dir.graph(&cfg)?;
    let method = match method {
        MethodArg::Ours => SearchMethod::Ours,
        MethodArg::Kpca => SearchMethod::Kpca,
    };
    let result = search(&dir.set, &graph, &cfg, &ecfg, method, samples, seed)?;
    if let Some(out) = out {
        io::write_text(&out.join("search.csv"), &result.csv())?;
    }
    println!(
        "{}",
        json!({"best_sample": result.best, "bandwidth": result.best_draw().bandwidth, "samples": samples, "seed": seed})
    );
    Ok(())
}

fn cmd_export(model_dir: &Path, factor: usize, alpha: f64, out: &Path) -> Result<()> {
    let (model, _, faces) = io::load_model(model_dir)?;
    let m = model.factor_count();
    if factor == 0 || factor > m {
        return Err(Error::invalid("factor", format!("{factor} is not in 1..={m}")));
    }
    if !alpha.is_finite() {
        return Err(Error::invalid("alpha", "must be finite"));
    }
    let mut weights = DVector::zeros(m);
    weights[factor - 1] = alpha;
    let shape = model.deform(&weights)?;
    io::write_obj(out, &devectorize(&shape)?, &faces)
}

/// Machine-readable one-line description of an error.
pub fn error_line(err: &Error) -> String {
    json!({"error": err.kind(), "message": err.to_string()}).to_string()
}
