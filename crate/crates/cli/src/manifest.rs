//! Run manifests. The manifest holds everything that determines a command's
//! outputs and is embedded in the command's JSON artifact; wall-clock
//! timings and the thread count go to a separate `timings.json` so that the
//! artifacts themselves stay byte-identical across re-runs.

use std::path::Path;
use std::time::Instant;

use anyhow::Result;
use serde::{Deserialize, Serialize};

use crate::io::{self, write_json};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub file: String,
    pub digest: String,
}

impl InputRecord {
    pub fn new(path: &Path, bytes: &[u8]) -> Self {
        InputRecord {
            file: path
                .file_name()
                .map(|f| f.to_string_lossy().into_owned())
                .unwrap_or_default(),
            digest: io::digest(bytes),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub inputs: Vec<InputRecord>,
    /// Fully resolved configuration, defaults included.
    pub config: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, inputs: Vec<InputRecord>, config: serde_json::Value) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            schema_version: SCHEMA_VERSION,
            command: command.into(),
            seed,
            inputs,
            config,
        }
    }
}

#[derive(Debug, Serialize)]
struct Timings<'a> {
    command: &'a str,
    threads: usize,
    phases: Vec<Phase>,
}

#[derive(Debug, Serialize)]
struct Phase {
    name: String,
    seconds: f64,
}

/// Collects per-phase wall-clock times.
pub struct Stopwatch {
    start: Instant,
    phases: Vec<Phase>,
}

impl Stopwatch {
    pub fn start() -> Self {
        Stopwatch {
            start: Instant::now(),
            phases: Vec::new(),
        }
    }

    pub fn lap(&mut self, name: &str) {
        let now = Instant::now();
        self.phases.push(Phase {
            name: name.into(),
            seconds: (now - self.start).as_secs_f64(),
        });
        self.start = now;
    }

    pub fn write(self, dir: &Path, command: &str) -> Result<()> {
        write_json(
            &dir.join("timings.json"),
            &Timings {
                command,
                threads: rayon::current_num_threads(),
                phases: self.phases,
            },
        )
    }
}
