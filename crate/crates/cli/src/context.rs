//! Shared per-invocation state: resolved output directory, the run manifest,
//! and the JSONL log. Stdout is reserved for data; diagnostics go to the log
//! file and stderr.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use promptmt::error::{Error, Result};
use promptmt::manifest::{digest_file, FileDigest, RunManifest};

use crate::config::ExperimentConfig;

pub struct RunContext {
    pub config: ExperimentConfig,
    pub config_hash: String,
    manifest_path: PathBuf,
    log_path: PathBuf,
}

impl RunContext {
    pub fn new(
        config_path: Option<&Path>,
        output_dir_flag: Option<&Path>,
        manifest_flag: Option<&Path>,
        log_flag: Option<&Path>,
    ) -> Result<Self> {
        let (config, config_hash) = match config_path {
            Some(path) => ExperimentConfig::load(path)?,
            None => (ExperimentConfig::default(), "none".to_string()),
        };
        let output_dir = output_dir_flag
            .map(Path::to_path_buf)
            .or_else(|| config.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&output_dir).map_err(|e| Error::io(&output_dir, e))?;
        let manifest_path = manifest_flag
            .map(Path::to_path_buf)
            .unwrap_or_else(|| output_dir.join("manifest.json"));
        let log_path = log_flag
            .map(Path::to_path_buf)
            .unwrap_or_else(|| output_dir.join("log.jsonl"));
        Ok(RunContext {
            config,
            config_hash,
            manifest_path,
            log_path,
        })
    }

    /// Append one stage entry with digests of the named files.
    pub fn record_stage(
        &self,
        stage: &str,
        inputs: &[&Path],
        outputs: &[&Path],
        note: Option<String>,
    ) -> Result<()> {
        let digest_all = |paths: &[&Path]| -> Result<Vec<FileDigest>> {
            paths.iter().map(digest_file).collect()
        };
        let mut manifest = RunManifest::load_or_new(&self.manifest_path, &self.config_hash)?;
        manifest.append(stage, digest_all(inputs)?, digest_all(outputs)?, note);
        manifest.save(&self.manifest_path)
    }

    pub fn log(&self, stage: &str, level: &str, message: &str) {
        let line = serde_json::json!({
            "ts": std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            "level": level,
            "stage": stage,
            "message": message,
        });
        if let Ok(mut file) = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.log_path)
        {
            let _ = writeln!(file, "{line}");
        }
    }
}

/// Write `data` to `path` when given, otherwise to stdout. A reader closing
/// the pipe early (e.g. `| head`) is not an error.
pub fn emit(path: Option<&Path>, data: &str) -> Result<()> {
    match path {
        Some(path) => {
            std::fs::write(path, format!("{data}\n")).map_err(|e| Error::io(path, e))?;
        }
        None => print_data(data),
    }
    Ok(())
}

pub fn print_data(data: &str) {
    let mut stdout = std::io::stdout().lock();
    if let Err(e) = writeln!(stdout, "{data}") {
        if e.kind() != std::io::ErrorKind::BrokenPipe {
            eprintln!("error writing to stdout: {e}");
        }
    }
}
