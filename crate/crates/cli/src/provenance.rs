//! Re-runnable provenance records.
//!
//! Each command writes `provenance_<command>.txt` into the work directory:
//! `#` metadata lines (tool version, config hash, seed, output hashes)
//! followed by the normalized config. The metadata are comments, so the
//! file itself is a valid `--config` for repeating the run.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn provenance_path(dir: &Path, command: &str) -> PathBuf {
    dir.join(format!("provenance_{command}.txt"))
}

pub fn file_digest(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn render(cfg: &RunConfig, command: &str, outputs: &[(String, String)]) -> String {
    let mut out = format!(
        "# tool = quake {TOOL_VERSION}\n# command = {command}\n# config_sha256 = {}\n# seed = {}\n",
        cfg.digest(),
        cfg.seed
    );
    for (name, digest) in outputs {
        out.push_str(&format!("# output {name} sha256 = {digest}\n"));
    }
    out.push_str(&cfg.serialize());
    out
}

pub fn write_provenance(cfg: &RunConfig, command: &str, outputs: &[PathBuf]) -> CliResult<PathBuf> {
    let hashed = outputs
        .iter()
        .map(|p| {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((name, file_digest(p)?))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let path = provenance_path(&cfg.work_dir, command);
    fs::write(&path, render(cfg, command, &hashed)).map_err(CliError::io(&path))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_parses_back_as_the_same_config() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("seed = 17\nepochs = 3").unwrap();
        let text = render(&cfg, "train", &[("model.ckpt".into(), "ab".repeat(32))]);
        assert!(text.contains(&format!("# config_sha256 = {}", cfg.digest())));
        assert!(text.contains("# seed = 17"));
        assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
    }
}
