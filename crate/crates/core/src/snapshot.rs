//! The snapshot file: one JSON document holding identities, resource
//! state, groups, sessions, the retry queue, and revocation state.
//!
//! Sensitive identity fields are stored under authenticated encryption
//! (see [`crate::guard`]); everything else serializes plainly. With the
//! deterministic field cipher and ordered containers, saving the same
//! state twice produces byte-identical files.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::admin::GroupTable;
use crate::authn::{ResponderState, Session};
use crate::engine::RetryQueue;
use crate::guard::{protect_field, unprotect_field, FieldKey, GuardError, ProtectedField};
use crate::identity::{Identity, PiiValue};
use crate::resources::{ResourceEndpoint, ResourcePool};
use crate::store::IdentityStore;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("malformed snapshot: {0}")]
    Malformed(String),
    #[error(transparent)]
    Guard(#[from] GuardError),
}

/// A PII value as persisted: sensitive values are protected, the rest
/// are plain.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum PersistedPii {
    Plain { value: String },
    Protected { field: ProtectedField },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PersistedIdentity {
    #[serde(flatten)]
    identity: Identity,
    #[serde(default, skip_serializing_if = "std::collections::BTreeMap::is_empty")]
    pii: std::collections::BTreeMap<String, PersistedPii>,
}

/// The whole persisted state.
#[derive(Debug, Serialize, Deserialize)]
struct Snapshot {
    identities: Vec<PersistedIdentity>,
    resources: Vec<ResourceEndpoint>,
    groups: GroupTable,
    sessions: Vec<Session>,
    retry_queue: RetryQueue,
    revocations: ResponderState,
}

/// Borrowed views of everything that goes into a snapshot.
pub struct SnapshotParts<'a> {
    pub store: &'a IdentityStore,
    pub pool: &'a ResourcePool,
    pub groups: &'a GroupTable,
    pub sessions: Vec<Session>,
    pub retries: &'a RetryQueue,
    pub revocations: &'a ResponderState,
}

/// Everything restored from a snapshot.
pub struct RestoredState {
    pub store: IdentityStore,
    pub pool: ResourcePool,
    pub groups: GroupTable,
    pub sessions: Vec<Session>,
    pub retries: RetryQueue,
    pub revocations: ResponderState,
}

/// Serialize state to the snapshot document, protecting sensitive
/// fields under the key.
pub fn snapshot_to_json(parts: &SnapshotParts<'_>, key: &FieldKey) -> Result<String, SnapshotError> {
    let mut identities = Vec::new();
    for identity in parts.store.iter() {
        let mut stripped = identity.clone();
        let pii_fields = std::mem::take(&mut stripped.pii_fields);
        let mut pii = std::collections::BTreeMap::new();
        for (name, value) in pii_fields {
            let persisted = if value.sensitive {
                PersistedPii::Protected { field: protect_field(&name, &value.value, key)? }
            } else {
                PersistedPii::Plain { value: value.value }
            };
            pii.insert(name, persisted);
        }
        identities.push(PersistedIdentity { identity: stripped, pii });
    }

    let snapshot = Snapshot {
        identities,
        resources: parts.pool.iter().cloned().collect(),
        groups: parts.groups.clone(),
        sessions: parts.sessions.clone(),
        retry_queue: parts.retries.clone(),
        revocations: parts.revocations.clone(),
    };
    serde_json::to_string_pretty(&snapshot).map_err(|e| SnapshotError::Malformed(e.to_string()))
}

/// Restore state from a snapshot document, decrypting protected fields
/// with the key. A wrong key fails closed.
pub fn snapshot_from_json(json: &str, key: &FieldKey) -> Result<RestoredState, SnapshotError> {
    let snapshot: Snapshot =
        serde_json::from_str(json).map_err(|e| SnapshotError::Malformed(e.to_string()))?;

    let mut store = IdentityStore::new();
    for persisted in snapshot.identities {
        let mut identity = persisted.identity;
        for (name, value) in persisted.pii {
            let pii = match value {
                PersistedPii::Plain { value } => PiiValue::plain(value),
                PersistedPii::Protected { field } => {
                    PiiValue::sensitive(unprotect_field(&field, key)?)
                }
            };
            identity.pii_fields.insert(name, pii);
        }
        store = {
            let mut s = store;
            s.insert(identity).map_err(|e| SnapshotError::Malformed(e.to_string()))?;
            s
        };
    }

    let mut pool = ResourcePool::standard();
    for endpoint in snapshot.resources {
        let id = endpoint.id();
        *pool.endpoint_mut(id) = endpoint;
    }

    Ok(RestoredState {
        store,
        pool,
        groups: snapshot.groups,
        sessions: snapshot.sessions,
        retries: snapshot.retry_queue,
        revocations: snapshot.revocations,
    })
}
