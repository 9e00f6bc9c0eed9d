//! Key=value config files and flag/file/default precedence.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::CliError;

/// Parsed `key = value` file; `#` starts a comment.
#[derive(Debug, Default, Clone)]
pub struct KvConfig {
    values: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("{}:{}: expected key=value", path.display(), i + 1))
            })?;
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(KvConfig { values })
    }

    /// Flag > config file > default.
    pub fn resolve<T: FromStr + Copy>(
        &self,
        flag: Option<T>,
        key: &str,
        default: T,
    ) -> Result<T, CliError> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.values.get(key) {
            Some(text) => text
                .parse()
                .map_err(|_| CliError::Config(format!("config key {key}: bad value {text:?}"))),
            None => Ok(default),
        }
    }
}

/// A run directory named by timestamp and seed, holding every artifact of
/// one command invocation.
pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    pub fn create(base: &Path, kind: &str, seed: u64) -> Result<Self, CliError> {
        let stamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let path = base.join(format!("{kind}-{stamp}-seed{seed}"));
        std::fs::create_dir_all(&path)
            .map_err(|e| CliError::Config(format!("cannot create {}: {e}", path.display())))?;
        Ok(RunDir { path })
    }

    /// Echoes the effective configuration for provenance.
    pub fn write_config(&self, entries: &[(&str, String)]) -> Result<(), CliError> {
        let mut text = String::new();
        for (key, value) in entries {
            text.push_str(&format!("{key} = {value}\n"));
        }
        std::fs::write(self.path.join("config.txt"), text)
            .map_err(|e| CliError::Config(format!("cannot write config.txt: {e}")))
    }
}
