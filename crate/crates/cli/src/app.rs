//! Application state for the command line: configuration resolution,
//! snapshot load/save, and the wiring between the engine, the
//! authenticator, the responder, and the group table.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use idfabric_core::audit::AuditLog;
use idfabric_core::authn::{AuthPolicy, Authenticator, StatusResponder};
use idfabric_core::clock::Clock;
use idfabric_core::engine::{Engine, EngineConfig};
use idfabric_core::guard::FieldKey;
use idfabric_core::matrix::{default_matrix, load_matrix, ProvisioningMatrix};
use idfabric_core::snapshot::{snapshot_from_json, snapshot_to_json, SnapshotParts};
use idfabric_core::GroupTable;

pub const CONFIG_ENV: &str = "IDFABRIC_CONFIG";

/// Flat configuration file, all keys optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    pub snapshot_path: Option<PathBuf>,
    pub audit_log_path: Option<PathBuf>,
    pub matrix_path: Option<PathBuf>,
    pub max_failed_attempts: Option<u32>,
    pub lockout_duration_secs: Option<u64>,
    pub session_ttl_secs: Option<u64>,
    pub retry_max_attempts: Option<u32>,
    pub deletion_grace_days: Option<u32>,
    /// Key protecting sensitive fields in the snapshot.
    pub snapshot_key: Option<String>,
}

impl CliConfig {
    pub fn resolve(flag: Option<&Path>) -> Result<CliConfig> {
        let path = flag
            .map(PathBuf::from)
            .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
        let config = match path {
            Some(path) => {
                let text = std::fs::read_to_string(&path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", path.display()))?
            }
            None => CliConfig::default(),
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        let snapshot = self.snapshot_path();
        let audit = self.audit_log_path();
        if snapshot == audit {
            bail!("snapshot_path and audit_log_path must differ");
        }
        for (name, value) in [
            ("max_failed_attempts", self.max_failed_attempts.map(u64::from)),
            ("lockout_duration_secs", self.lockout_duration_secs),
            ("session_ttl_secs", self.session_ttl_secs),
            ("retry_max_attempts", self.retry_max_attempts.map(u64::from)),
        ] {
            if value == Some(0) {
                bail!("{name} must be positive");
            }
        }
        Ok(())
    }

    pub fn snapshot_path(&self) -> PathBuf {
        self.snapshot_path.clone().unwrap_or_else(|| PathBuf::from("idfabric-snapshot.json"))
    }

    pub fn audit_log_path(&self) -> PathBuf {
        self.audit_log_path.clone().unwrap_or_else(|| PathBuf::from("idfabric-audit.jsonl"))
    }

    pub fn snapshot_key(&self) -> String {
        self.snapshot_key.clone().unwrap_or_else(|| "idfabric-dev".to_string())
    }

    pub fn auth_policy(&self) -> AuthPolicy {
        let mut policy = AuthPolicy::default();
        if let Some(n) = self.max_failed_attempts {
            policy.max_failed_attempts = n;
        }
        if let Some(n) = self.lockout_duration_secs {
            policy.lockout_duration_secs = n;
        }
        if let Some(n) = self.session_ttl_secs {
            policy.session_ttl_secs = n;
        }
        policy
    }

    pub fn engine_config(&self) -> EngineConfig {
        let mut config = EngineConfig::default();
        if let Some(n) = self.retry_max_attempts {
            config.max_attempts = n;
        }
        if let Some(n) = self.deletion_grace_days {
            config.deletion_grace_days = n;
        }
        config
    }

    fn matrix(&self) -> Result<ProvisioningMatrix> {
        match &self.matrix_path {
            None => Ok(default_matrix()),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading matrix {}", path.display()))?;
                load_matrix(&text).with_context(|| format!("parsing matrix {}", path.display()))
            }
        }
    }
}

/// Live state for one command invocation.
pub struct App {
    pub config: CliConfig,
    pub clock: Clock,
    pub engine: Engine,
    pub authn: Authenticator,
    pub responder: StatusResponder,
    pub groups: GroupTable,
    pub key: FieldKey,
}

impl App {
    /// Load configuration, open the audit log, and restore the snapshot
    /// when one exists.
    pub fn load(config_flag: Option<&Path>, now: Option<DateTime<Utc>>, seed: u64) -> Result<App> {
        let config = CliConfig::resolve(config_flag)?;
        let clock = match now {
            Some(at) => Clock::fixed(at),
            None => Clock::System,
        };
        let key = FieldKey::derive(&config.snapshot_key())
            .map_err(|e| anyhow::anyhow!("snapshot key: {e}"))?;
        let audit = Arc::new(
            AuditLog::open(&config.audit_log_path())
                .map_err(|e| anyhow::anyhow!("audit log: {e}"))?,
        );
        let matrix = config.matrix()?;

        let snapshot_path = config.snapshot_path();
        let (engine, groups, responder, sessions) = if snapshot_path.exists() {
            let text = std::fs::read_to_string(&snapshot_path)
                .with_context(|| format!("reading snapshot {}", snapshot_path.display()))?;
            let restored = snapshot_from_json(&text, &key)
                .map_err(|e| anyhow::anyhow!("snapshot: {e}"))?;
            let engine = Engine::from_parts(
                restored.store,
                restored.pool,
                matrix,
                restored.retries,
                Arc::clone(&audit),
                clock.clone(),
                config.engine_config(),
            );
            (
                engine,
                restored.groups,
                StatusResponder::from_state(restored.revocations),
                restored.sessions,
            )
        } else {
            (
                Engine::new(matrix, Arc::clone(&audit), clock.clone(), config.engine_config()),
                GroupTable::new(),
                StatusResponder::new(),
                Vec::new(),
            )
        };

        // Session tokens derive from the seed and the audit position, so
        // identical command sequences mint identical tokens while
        // distinct commands never collide.
        let salt = format!("{seed}:{}", audit.len());
        let authn = Authenticator::new(config.auth_policy(), clock.clone()).with_token_salt(salt);
        authn.restore_sessions(sessions);

        Ok(App { config, clock, engine, authn, responder, groups, key })
    }

    /// Serialize current state to the snapshot document.
    pub fn snapshot_json(&self) -> Result<String> {
        snapshot_to_json(
            &SnapshotParts {
                store: self.engine.store(),
                pool: self.engine.pool(),
                groups: &self.groups,
                sessions: self.authn.sessions_snapshot(),
                retries: self.engine.retries(),
                revocations: self.responder.state(),
            },
            &self.key,
        )
        .map_err(|e| anyhow::anyhow!("snapshot: {e}"))
    }

    /// Persist the snapshot file.
    pub fn save(&self) -> Result<()> {
        let path = self.config.snapshot_path();
        let json = self.snapshot_json()?;
        std::fs::write(&path, json)
            .with_context(|| format!("writing snapshot {}", path.display()))?;
        Ok(())
    }
}
