use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::CliError;

/// Record written next to every command's artifacts. All fields except
/// `timings_ms` depend only on the arguments.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub args: Vec<String>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub version: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub timings_ms: Vec<(String, f64)>,
    #[serde(skip)]
    dir: PathBuf,
    #[serde(skip)]
    clock: Instant,
}

impl Manifest {
    pub fn new(dir: &Path, command: &str, seed: Option<u64>, threads: Option<usize>) -> Result<Manifest, CliError> {
        std::fs::create_dir_all(dir)?;
        Ok(Manifest {
            command: command.to_string(),
            args: std::env::args().skip(1).collect(),
            seed,
            threads,
            version: env!("CARGO_PKG_VERSION").to_string(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings_ms: Vec::new(),
            dir: dir.to_path_buf(),
            clock: Instant::now(),
        })
    }

    /// Record the time since the previous lap under `stage`.
    pub fn lap(&mut self, stage: &str) {
        let ms = self.clock.elapsed().as_secs_f64() * 1e3;
        self.timings_ms.push((stage.to_string(), ms));
        self.clock = Instant::now();
    }

    /// Write `contents` to `name` inside the output directory.
    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents)?;
        self.outputs.push(name.to_string());
        Ok(path)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn note_output(&mut self, name: &str) {
        self.outputs.push(name.to_string());
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.outputs.push("manifest.json".into());
        let text = serde_json::to_string_pretty(&self).map_err(|e| CliError::Usage(e.to_string()))?;
        std::fs::write(self.dir.join("manifest.json"), text)?;
        Ok(())
    }
}
