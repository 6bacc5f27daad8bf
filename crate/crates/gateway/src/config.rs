//! Gateway configuration file (TOML).

use crate::latency::LatencyProfile;
use crate::policy::SafetyPolicy;
use crate::session::{Role, Slot};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const CONFIG_ENV: &str = "GREENSIM_GATEWAY_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientEntry {
    pub client_id: String,
    pub token: String,
    pub role: Role,
    #[serde(default)]
    pub slot: Option<Slot>,
    /// Name of a latency profile; defaults to the profile named after the role.
    #[serde(default)]
    pub profile: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Listeners {
    pub tcp_listen: Option<String>,
    pub ws_listen: Option<String>,
    /// Static files served beside the WebSocket endpoint.
    pub console_dir: Option<PathBuf>,
}

impl Default for Listeners {
    fn default() -> Self {
        Self {
            tcp_listen: Some("127.0.0.1:7400".into()),
            ws_listen: Some("127.0.0.1:7401".into()),
            console_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub listen: Listeners,
    pub max_internet_sessions: usize,
    /// Period of `/gateway/status` publications.
    pub status_period_ms: u64,
    /// Seed for latency jitter.
    pub jitter_seed: u64,
    pub policy: SafetyPolicy,
    pub profiles: Vec<LatencyProfile>,
    pub clients: Vec<ClientEntry>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            listen: Listeners::default(),
            max_internet_sessions: 1,
            status_period_ms: 1000,
            jitter_seed: 0,
            policy: SafetyPolicy::default(),
            profiles: vec![LatencyProfile::internet(), LatencyProfile::intranet()],
            clients: Vec::new(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing gateway config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid gateway config: {0}")]
    Invalid(String),
}

impl GatewayConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: GatewayConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Uses `GREENSIM_GATEWAY_CONFIG` when set, else `fallback`, else defaults.
    pub fn load_from_env(fallback: Option<&Path>) -> Result<Self, ConfigError> {
        match std::env::var_os(CONFIG_ENV) {
            Some(p) => Self::load(Path::new(&p)),
            None => match fallback {
                Some(p) => Self::load(p),
                None => Ok(Self::default()),
            },
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.policy.validate().map_err(ConfigError::Invalid)?;
        let mut tokens = std::collections::BTreeSet::new();
        let mut ids = std::collections::BTreeSet::new();
        for c in &self.clients {
            if c.token.is_empty() {
                return Err(ConfigError::Invalid(format!("client {} has an empty token", c.client_id)));
            }
            if !tokens.insert(&c.token) {
                return Err(ConfigError::Invalid(format!("duplicate token for client {}", c.client_id)));
            }
            if !ids.insert(&c.client_id) {
                return Err(ConfigError::Invalid(format!("duplicate client_id {}", c.client_id)));
            }
            if let Some(s) = c.slot {
                if s.end_ms < s.start_ms {
                    return Err(ConfigError::Invalid(format!("client {} slot ends before it starts", c.client_id)));
                }
            }
            self.profile_for(c)?;
        }
        Ok(())
    }

    pub fn profile(&self, name: &str) -> Option<&LatencyProfile> {
        self.profiles.iter().find(|p| p.name == name)
    }

    pub fn profile_for(&self, client: &ClientEntry) -> Result<LatencyProfile, ConfigError> {
        let name = client.profile.clone().unwrap_or_else(|| match client.role {
            Role::Internet => "internet".into(),
            Role::Intranet => "intranet".into(),
        });
        if client.role == Role::Intranet && client.profile.is_none() {
            return Ok(self.profile(&name).cloned().unwrap_or_else(LatencyProfile::intranet));
        }
        self.profile(&name)
            .cloned()
            .ok_or_else(|| ConfigError::Invalid(format!("client {} names unknown profile {name}", client.client_id)))
    }

    pub fn client_by_token(&self, token: &str) -> Option<&ClientEntry> {
        self.clients.iter().find(|c| c.token == token)
    }
}
