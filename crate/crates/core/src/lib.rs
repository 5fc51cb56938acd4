pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod graph;
pub mod io;
pub mod kernel;
pub mod pca;
pub mod pipeline;
pub mod post;
pub mod prox;
pub mod shape;
pub mod solver;
pub mod synthetic;

pub use error::{Error, Result};
