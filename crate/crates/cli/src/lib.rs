//! Experiment harness for `diffusion-core`: spec files, parallel trial
//! orchestration, CSV/JSON output and plot-ready series.

pub mod plot;
pub mod runner;
pub mod spec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use plot::emit_plot_data;
pub use runner::{run_experiment, write_experiment, ExperimentOutput};
pub use spec::{builtin, parse_specs, ExperimentSpec};

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit status: 1 for bad input, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            _ => 2,
        }
    }
}

impl From<diffusion_core::ConfigErrors> for Error {
    fn from(e: diffusion_core::ConfigErrors) -> Self {
        Error::Config(e.to_string())
    }
}

/// One line of the result table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub experiment: String,
    pub n: usize,
    pub t: usize,
    pub alpha: usize,
    pub ell: Option<usize>,
    pub fan_out: usize,
    pub protocol: String,
    pub metric: String,
    pub value: f64,
    pub stderr: Option<f64>,
    pub trials: u64,
}

pub const CSV_HEADER: &str = "experiment,n,t,alpha,ell,fan_out,protocol,metric,value,stderr,trials";

pub fn read_rows<R: std::io::Read>(r: R) -> Result<Vec<Row>, Error> {
    let mut rdr = csv::Reader::from_reader(r);
    let rows = rdr.deserialize().collect::<Result<Vec<Row>, _>>()?;
    Ok(rows)
}

/// Worker count from `DIFFUSION_WORKERS`, else the available parallelism.
pub fn default_workers() -> usize {
    std::env::var("DIFFUSION_WORKERS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&w: &usize| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}
