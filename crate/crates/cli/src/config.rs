//! Defaults from `I3_BROKER_URL` and an optional `./i3.toml` of `key=value` lines.

use std::path::{Path, PathBuf};

pub const CONFIG_FILE: &str = "i3.toml";
pub const BROKER_ENV: &str = "I3_BROKER_URL";
pub const DEFAULT_BROKER_URL: &str = "http://127.0.0.1:8700/";
pub const DEFAULT_STORE_DIR: &str = "i3-store";
pub const DEFAULT_TIMEOUT_MS: u64 = 2_000;

/// Values used when a flag is not given.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Defaults {
    pub broker_url: Option<String>,
    pub timeout_ms: Option<u64>,
    pub store_dir: Option<PathBuf>,
}

impl Defaults {
    /// Reads the config file (if present) and lets the environment override it.
    pub fn load(dir: &Path, env_broker: Option<String>) -> Result<Self, String> {
        let path = dir.join(CONFIG_FILE);
        let mut d = match std::fs::read_to_string(&path) {
            Ok(text) => parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Defaults::default(),
            Err(e) => return Err(format!("{}: {e}", path.display())),
        };
        if let Some(url) = env_broker.filter(|u| !u.is_empty()) {
            d.broker_url = Some(url);
        }
        Ok(d)
    }

    pub fn broker_url(&self) -> &str {
        self.broker_url.as_deref().unwrap_or(DEFAULT_BROKER_URL)
    }

    pub fn timeout_ms(&self) -> u64 {
        self.timeout_ms.unwrap_or(DEFAULT_TIMEOUT_MS)
    }

    pub fn store_dir(&self) -> PathBuf {
        self.store_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from(DEFAULT_STORE_DIR))
    }
}

/// `key = value` per line; `#` starts a comment; values may be double-quoted.
pub fn parse_config(text: &str) -> Result<Defaults, String> {
    let mut d = Defaults::default();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!("line {}: expected key=value", n + 1));
        };
        let value = value.trim();
        let value = value
            .strip_prefix('"')
            .and_then(|v| v.strip_suffix('"'))
            .unwrap_or(value);
        match key.trim() {
            "broker_url" => d.broker_url = Some(value.to_string()),
            "timeout_ms" => {
                d.timeout_ms = Some(
                    value
                        .parse()
                        .map_err(|_| format!("line {}: timeout_ms must be an integer", n + 1))?,
                )
            }
            "store_dir" => d.store_dir = Some(PathBuf::from(value)),
            other => return Err(format!("line {}: unknown key {other:?}", n + 1)),
        }
    }
    Ok(d)
}
