use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use adlab_core::SolverConfig;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: &'static str,
    pub command: String,
    pub scenario_path: String,
    /// SHA-256 of the scenario file contents.
    pub scenario_sha256: String,
    pub t_schedule: Vec<f64>,
    pub solver: SolverConfig,
    pub output_dir: String,
}

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn new(
        command: &str,
        scenario: &Path,
        text: &str,
        t_schedule: Vec<f64>,
        solver: SolverConfig,
        out: &Path,
    ) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            scenario_path: scenario.display().to_string(),
            scenario_sha256: sha256_hex(text),
            t_schedule,
            solver,
            output_dir: out.display().to_string(),
        }
    }
}
