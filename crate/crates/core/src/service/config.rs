use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ServiceError;

pub const ENV_PORT: &str = "SOCEMO_PORT";
pub const ENV_DATA_DIR: &str = "SOCEMO_DATA_DIR";
pub const ENV_GENERATOR_URL: &str = "SOCEMO_GENERATOR_URL";
pub const ENV_CLASSIFIER_URL: &str = "SOCEMO_CLASSIFIER_URL";
pub const ENV_PREDICTOR_URL: &str = "SOCEMO_PREDICTOR_URL";
pub const ENV_ADMIN_TOKEN: &str = "SOCEMO_ADMIN_TOKEN";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendUrls {
    pub generator_url: Option<String>,
    /// Used for step-3 pre-tagging.
    pub classifier_url: Option<String>,
    pub predictor_url: Option<String>,
    pub timeout_ms: Option<u64>,
    pub retries: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub bind: String,
    pub port: u16,
    pub data_dir: PathBuf,
    /// Snapshot the campaign state every this many events; 0 disables.
    pub snapshot_every: u64,
    /// Bearer token required for campaign creation, scores and export.
    pub admin_token: Option<String>,
    pub backends: BackendUrls,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: "127.0.0.1".into(),
            port: 8080,
            data_dir: PathBuf::from("socemo-data"),
            snapshot_every: 100,
            admin_token: None,
            backends: BackendUrls::default(),
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        toml::from_str(text).map_err(|e| ServiceError::InvalidConfig(e.to_string()))
    }

    /// Reads the optional config file, then applies environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, ServiceError> {
        let mut config = match path {
            Some(p) => Self::from_toml(&std::fs::read_to_string(p)?)?,
            None => Self::default(),
        };
        config.apply_env(|k| std::env::var(k).ok())?;
        Ok(config)
    }

    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), ServiceError> {
        if let Some(p) = var(ENV_PORT) {
            self.port = p
                .parse()
                .map_err(|_| ServiceError::InvalidConfig(format!("{ENV_PORT}={p} is not a port")))?;
        }
        if let Some(d) = var(ENV_DATA_DIR) {
            self.data_dir = d.into();
        }
        if let Some(u) = var(ENV_GENERATOR_URL) {
            self.backends.generator_url = Some(u);
        }
        if let Some(u) = var(ENV_CLASSIFIER_URL) {
            self.backends.classifier_url = Some(u);
        }
        if let Some(u) = var(ENV_PREDICTOR_URL) {
            self.backends.predictor_url = Some(u);
        }
        if let Some(t) = var(ENV_ADMIN_TOKEN) {
            self.admin_token = Some(t);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_env() {
        let mut c = ServiceConfig::from_toml(
            "port = 9000\ndata_dir = \"/tmp/x\"\n[backends]\nclassifier_url = \"http://a\"\n",
        )
        .unwrap();
        assert_eq!(c.port, 9000);
        assert_eq!(c.bind, "127.0.0.1");
        c.apply_env(|k| match k {
            ENV_PORT => Some("9100".into()),
            ENV_CLASSIFIER_URL => Some("http://b".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(c.port, 9100);
        assert_eq!(c.data_dir, PathBuf::from("/tmp/x"));
        assert_eq!(c.backends.classifier_url.as_deref(), Some("http://b"));
        assert!(c.apply_env(|k| (k == ENV_PORT).then(|| "nope".into())).is_err());
        assert!(ServiceConfig::from_toml("port = \"x\"").is_err());
    }
}
