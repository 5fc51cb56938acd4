//! Versioned JSON configuration for training and evaluation. Every key is
//! optional and falls back to the documented default; unknown keys are
//! rejected.

use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::graph::{DEFAULT_ALPHA_D, DEFAULT_THETA};
use crate::io::{read_text, FORMAT_VERSION};
use crate::kernel::KernelConfig;
use crate::prox::RegularizerWeights;
use crate::solver::SolverConfig;

/// Explicit regularizer weights; `None` keeps the size-dependent default.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightOverrides {
    pub lambda: Option<f64>,
    pub lambda_a: Option<f64>,
    pub lambda_1: Option<f64>,
    pub lambda_2: Option<f64>,
    pub lambda_inf: Option<f64>,
    pub lambda_g: Option<f64>,
}

impl WeightOverrides {
    pub fn apply(&self, base: RegularizerWeights) -> RegularizerWeights {
        RegularizerWeights {
            lambda: self.lambda.unwrap_or(base.lambda),
            lambda_a: self.lambda_a.unwrap_or(base.lambda_a),
            lambda_1: self.lambda_1.unwrap_or(base.lambda_1),
            lambda_2: self.lambda_2.unwrap_or(base.lambda_2),
            lambda_inf: self.lambda_inf.unwrap_or(base.lambda_inf),
            lambda_g: self.lambda_g.unwrap_or(base.lambda_g),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    /// Edges with weight below this are dropped.
    pub theta: f64,
    /// Mix between the geodesic and inter-part terms for multi-part shapes.
    pub alpha_d: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            theta: DEFAULT_THETA,
            alpha_d: DEFAULT_ALPHA_D,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub version: u32,
    #[serde(flatten)]
    pub solver: SolverConfig,
    pub weights: WeightOverrides,
    pub graph: GraphConfig,
    pub kernel: KernelConfig,
    /// Absolute activity threshold for factor splitting.
    pub split_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            version: FORMAT_VERSION,
            solver: SolverConfig::default(),
            weights: WeightOverrides::default(),
            graph: GraphConfig::default(),
            kernel: KernelConfig::default(),
            split_threshold: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        check_version(self.version)?;
        self.solver.validate()?;
        self.kernel.validate()?;
        if !(self.split_threshold >= 0.0) {
            return Err(Error::invalid("split_threshold", "must be non-negative"));
        }
        if !(self.graph.theta > 0.0 && self.graph.theta < 1.0) {
            return Err(Error::invalid("graph.theta", "must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.graph.alpha_d) {
            return Err(Error::invalid("graph.alpha_d", "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Weights for `N` vertices, `K` shapes and `|E|` edges, with overrides.
    pub fn weights(&self, vertices: usize, shapes: usize, edges: usize, kernelized: bool) -> RegularizerWeights {
        let m = self.solver.factors;
        let base = if kernelized {
            RegularizerWeights::kernelized_defaults(vertices, m, edges)
        } else {
            RegularizerWeights::defaults(vertices, shapes, m, edges)
        };
        self.weights.apply(base)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalFile {
    pub version: u32,
    #[serde(flatten)]
    pub eval: EvalConfig,
}

impl Default for EvalFile {
    fn default() -> Self {
        EvalFile {
            version: FORMAT_VERSION,
            eval: EvalConfig::default(),
        }
    }
}

impl EvalFile {
    pub fn validate(&self) -> Result<()> {
        check_version(self.version)?;
        self.eval.validate()
    }
}

fn check_version(v: u32) -> Result<()> {
    if v != FORMAT_VERSION {
        return Err(Error::invalid(
            "version",
            format!("unsupported config version {v}, expected {FORMAT_VERSION}"),
        ));
    }
    Ok(())
}

/// Parses a JSON config file.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    parse(&read_text(path)?, path)
}

pub fn parse<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    serde_json::from_str(text).map_err(|source| Error::Config {
        path: path.to_path_buf(),
        source,
    })
}
