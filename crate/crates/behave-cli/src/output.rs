use std::path::{Path, PathBuf};

use behave::config::RunConfig;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

/// SHA-256 of the configuration with the seed cleared, so one scenario keeps
/// its hash across seeds.
pub fn config_hash(cfg: &RunConfig) -> String {
    let mut c = cfg.clone();
    c.seed = 0;
    format!("{:x}", Sha256::digest(c.to_toml_string().as_bytes()))
}

/// `<out>/<first 16 hash digits>-s<seed>`.
pub fn run_dir(out: &Path, cfg: &RunConfig) -> PathBuf {
    out.join(format!("{}-s{}", &config_hash(cfg)[..16], cfg.seed))
}

pub fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Run(format!("{}: {e}", path.display()))
}

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Writes `manifest.json` and the resolved `config.toml`; a failed run also
/// gets a `FAILED` marker listing the errors, and a successful rerun removes
/// a stale one.
pub fn finish(dir: &Path, command: &str, cfg: &RunConfig, outputs: Value, failures: &[String]) -> Result<(), CliError> {
    create_dir(dir)?;
    let manifest = json!({
        "command": command,
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "allocator": cfg.allocator.name(),
        "versions": { "behave": behave::VERSION, "behave-cli": env!("CARGO_PKG_VERSION") },
        "status": if failures.is_empty() { "ok" } else { "failed" },
        "outputs": outputs,
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest is plain JSON");
    write_text(&dir.join("manifest.json"), &(text + "\n"))?;
    write_text(&dir.join("config.toml"), &cfg.to_toml_string())?;
    let marker = dir.join("FAILED");
    if failures.is_empty() {
        if marker.exists() {
            std::fs::remove_file(&marker).map_err(|e| io_err(&marker, e))?;
        }
        Ok(())
    } else {
        write_text(&marker, &(failures.join("\n") + "\n"))?;
        Err(CliError::Run(failures.join("; ")))
    }
}

/// Process peak resident set size in MiB, when the platform reports it.
pub fn peak_memory_mb() -> Option<f64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: f64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb / 1024.0)
}

/// Writes rows of preformatted fields under a header.
pub fn write_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}
