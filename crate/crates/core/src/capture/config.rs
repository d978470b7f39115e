use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CaptureError;

/// Client settings. Loaded from TOML, then overridden by `PL_*` variables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaptureConfig {
    pub queue_size: usize,
    pub diskful: bool,
    pub online: bool,
    pub manager_endpoint: Option<String>,
    pub log_path: Option<PathBuf>,
    pub client_id: String,
}

impl Default for CaptureConfig {
    fn default() -> Self {
        CaptureConfig {
            queue_size: 50,
            diskful: false,
            online: true,
            manager_endpoint: Some("http://127.0.0.1:7878".into()),
            log_path: None,
            client_id: "client".into(),
        }
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool, CaptureError> {
    match v.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(CaptureError::Config(format!("{key}: expected a boolean, got {v:?}"))),
    }
}

impl CaptureConfig {
    pub fn from_toml_str(text: &str) -> Result<CaptureConfig, CaptureError> {
        toml::from_str(text).map_err(|e| CaptureError::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<CaptureConfig, CaptureError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CaptureError::Config(format!("{}: {e}", path.display())))?;
        CaptureConfig::from_toml_str(&text)
    }

    /// Applies `PL_QUEUE_SIZE`, `PL_DISKFUL`, `PL_ONLINE`, `PL_ENDPOINT` and
    /// `PL_LOG_PATH` from the given pairs; other keys are ignored.
    pub fn apply_overrides<I, K, V>(&mut self, vars: I) -> Result<(), CaptureError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        for (k, v) in vars {
            let (k, v) = (k.as_ref(), v.as_ref());
            match k {
                "PL_QUEUE_SIZE" => {
                    self.queue_size = v
                        .trim()
                        .parse()
                        .map_err(|_| CaptureError::Config(format!("PL_QUEUE_SIZE: not an integer: {v:?}")))?
                }
                "PL_DISKFUL" => self.diskful = parse_bool(k, v)?,
                "PL_ONLINE" => self.online = parse_bool(k, v)?,
                "PL_ENDPOINT" => self.manager_endpoint = Some(v.to_string()),
                "PL_LOG_PATH" => self.log_path = Some(PathBuf::from(v)),
                _ => {}
            }
        }
        Ok(())
    }

    pub fn apply_env(&mut self) -> Result<(), CaptureError> {
        self.apply_overrides(std::env::vars())
    }

    pub fn validate(&self) -> Result<(), CaptureError> {
        let fail = |m: &str| Err(CaptureError::Config(m.to_string()));
        if self.queue_size == 0 {
            return fail("queue_size must be at least 1");
        }
        if !self.online && !self.diskful {
            return fail("at least one of online and diskful must be set");
        }
        if self.online && self.manager_endpoint.as_deref().is_none_or(str::is_empty) {
            return fail("online capture needs manager_endpoint");
        }
        if self.diskful && self.log_path.is_none() {
            return fail("diskful capture needs log_path");
        }
        if self.client_id.is_empty() || self.client_id.contains(['/', '\\']) {
            return fail("client_id must be a non-empty file-name-safe string");
        }
        Ok(())
    }

    /// `<log_path>/<client_id>.provlog`
    pub fn provlog_file(&self) -> Option<PathBuf> {
        self.log_path.as_ref().map(|p| p.join(format!("{}.provlog", self.client_id)))
    }

    /// Batches that could not be delivered while diskful.
    pub fn undelivered_file(&self) -> Option<PathBuf> {
        self.log_path.as_ref().map(|p| p.join(format!("{}.undelivered", self.client_id)))
    }
}
