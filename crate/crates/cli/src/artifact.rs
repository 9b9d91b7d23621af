//! Self-describing output: every artifact carries the tool version, the RNG
//! identifier and the resolved configuration.

use std::io::Write;
use std::path::Path;

use bounded_cycles::sampler::RNG_ALGORITHM;
use bounded_cycles::{Error, Result};
use serde::Serialize;
use serde_json::json;

use crate::config::ExperimentConfig;

pub const TOOL: &str = "bcycles";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn json<T: Serialize>(command: &str, config: &ExperimentConfig, results: T) -> Result<String> {
    let doc = json!({
        "tool": TOOL,
        "version": VERSION,
        "rng": RNG_ALGORITHM,
        "command": command,
        "config": config,
        "results": results,
    });
    let mut s = serde_json::to_string_pretty(&doc).map_err(|e| Error::Numerical(format!("serialisation failed: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// CSV with `#` comment lines carrying the metadata, then `extra` comments,
/// then the header and rows.
pub fn csv(command: &str, config: &ExperimentConfig, extra: &[String], header: &str, rows: &[String]) -> Result<String> {
    let config = serde_json::to_string(config).map_err(|e| Error::Numerical(format!("serialisation failed: {e}")))?;
    let mut s = format!("# tool={TOOL} version={VERSION}\n# rng={RNG_ALGORITHM}\n# command={command}\n# config={config}\n");
    for line in extra {
        s.push_str("# ");
        s.push_str(line);
        s.push('\n');
    }
    s.push_str(header);
    s.push('\n');
    for row in rows {
        s.push_str(row);
        s.push('\n');
    }
    Ok(s)
}

/// Writes to `path` through a temporary file in the same directory and a
/// rename, or to stdout when no path is given.
pub fn write(path: Option<&Path>, content: &str) -> Result<()> {
    let io = |e: std::io::Error| Error::Config(format!("cannot write output: {e}"));
    match path {
        None => std::io::stdout().write_all(content.as_bytes()).map_err(io),
        Some(path) => {
            let dir = match path.parent() {
                Some(p) if !p.as_os_str().is_empty() => p,
                _ => Path::new("."),
            };
            let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
            tmp.write_all(content.as_bytes()).map_err(io)?;
            tmp.as_file().sync_all().map_err(io)?;
            tmp.persist(path).map_err(|e| io(e.error))?;
            Ok(())
        }
    }
}
