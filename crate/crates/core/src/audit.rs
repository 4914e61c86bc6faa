//! Append-only audit log and compliance reporting.
//!
//! Auditing is mandatory-before-effect: callers check writability before
//! performing an action and halt if the log is unavailable, so the log is
//! a complete record of everything the engine, the authenticator, and the
//! administrators did. Sequence numbers are gap-free and events are never
//! rewritten.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::admin::GroupTable;
use crate::engine::DriftReport;
use crate::identity::{PersonId, ResourceId};
use crate::matrix::{entitlements_for, ProvisioningMatrix};
use crate::resources::ResourcePool;
use crate::store::IdentityStore;

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("audit log unavailable: {0}")]
    LogUnavailable(String),
}

/// Who performed an action.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Actor {
    System,
    Person(PersonId),
}

impl Actor {
    pub fn as_str(&self) -> &str {
        match self {
            Actor::System => "system",
            Actor::Person(p) => p.as_str(),
        }
    }
}

impl Serialize for Actor {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Actor {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(if s == "system" { Actor::System } else { Actor::Person(PersonId::new(s)) })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditCategory {
    Workflow,
    ResourceMutation,
    AuthAttempt,
    AdminAction,
    Reconciliation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditOutcome {
    Allowed,
    Denied,
    Success,
    Failure,
    Partial,
}

/// One immutable audit record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub seq: u64,
    pub ts: DateTime<Utc>,
    pub actor: Actor,
    pub category: AuditCategory,
    pub action: String,
    pub target: String,
    pub outcome: AuditOutcome,
    #[serde(default)]
    pub detail: serde_json::Map<String, Value>,
}

#[derive(Debug)]
struct LogInner {
    next_seq: u64,
    events: Vec<AuditEvent>,
    sink: Option<(PathBuf, File)>,
    fail_writes: bool,
}

/// The append-only log. Concurrent callers funnel through one serialized
/// writer; readers clone a snapshot.
#[derive(Debug)]
pub struct AuditLog {
    inner: Mutex<LogInner>,
}

impl AuditLog {
    /// A log kept only in memory. Used by tests and embedded runs.
    pub fn in_memory() -> Self {
        AuditLog {
            inner: Mutex::new(LogInner { next_seq: 1, events: Vec::new(), sink: None, fail_writes: false }),
        }
    }

    /// Open (or create) a file-backed log, resuming sequence numbers from
    /// any events already on disk. The file only ever grows.
    pub fn open(path: &Path) -> Result<Self, AuditError> {
        let mut events = Vec::new();
        if path.exists() {
            let file = File::open(path)
                .map_err(|e| AuditError::LogUnavailable(format!("{}: {e}", path.display())))?;
            for line in BufReader::new(file).lines() {
                let line = line.map_err(|e| AuditError::LogUnavailable(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                let event: AuditEvent = serde_json::from_str(&line)
                    .map_err(|e| AuditError::LogUnavailable(format!("corrupt log line: {e}")))?;
                events.push(event);
            }
        }
        let next_seq = events.last().map(|e| e.seq + 1).unwrap_or(1);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| AuditError::LogUnavailable(format!("{}: {e}", path.display())))?;
        Ok(AuditLog {
            inner: Mutex::new(LogInner {
                next_seq,
                events,
                sink: Some((path.to_path_buf(), file)),
                fail_writes: false,
            }),
        })
    }

    /// Fault hook: force subsequent appends to fail, simulating a locked
    /// or unreachable log file.
    pub fn set_fail_writes(&self, fail: bool) {
        self.inner.lock().expect("audit lock").fail_writes = fail;
    }

    /// Mandatory-before-effect check: does the next append stand a chance?
    /// Callers must not perform an action when this fails.
    pub fn ensure_writable(&self) -> Result<(), AuditError> {
        let inner = self.inner.lock().expect("audit lock");
        if inner.fail_writes {
            return Err(AuditError::LogUnavailable("log is locked".to_string()));
        }
        Ok(())
    }

    /// Append one event, assigning the next sequence number. The event is
    /// durable (flushed) before this returns.
    pub fn record(
        &self,
        actor: Actor,
        ts: DateTime<Utc>,
        category: AuditCategory,
        action: &str,
        target: &str,
        outcome: AuditOutcome,
        detail: serde_json::Map<String, Value>,
    ) -> Result<AuditEvent, AuditError> {
        let mut inner = self.inner.lock().expect("audit lock");
        if inner.fail_writes {
            return Err(AuditError::LogUnavailable("log is locked".to_string()));
        }
        let event = AuditEvent {
            seq: inner.next_seq,
            ts,
            actor,
            category,
            action: action.to_string(),
            target: target.to_string(),
            outcome,
            detail,
        };
        if let Some((path, file)) = inner.sink.as_mut() {
            let line = serde_json::to_string(&event)
                .map_err(|e| AuditError::LogUnavailable(e.to_string()))?;
            writeln!(file, "{line}")
                .and_then(|_| file.flush())
                .map_err(|e| AuditError::LogUnavailable(format!("{}: {e}", path.display())))?;
        }
        inner.next_seq += 1;
        inner.events.push(event.clone());
        Ok(event)
    }

    pub fn events(&self) -> Vec<AuditEvent> {
        self.inner.lock().expect("audit lock").events.clone()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("audit lock").events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn count_category(&self, category: AuditCategory) -> usize {
        self.inner
            .lock()
            .expect("audit lock")
            .events
            .iter()
            .filter(|e| e.category == category)
            .count()
    }
}

// ---------------------------------------------------------------------------
// Compliance reporting
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "SCREAMING-KEBAB-CASE")]
pub enum ComplianceRule {
    PciUniqueId,
    FerpaNeedToKnow,
    OrphanAccount,
    MatrixDrift,
    PlaintextPii,
}

impl ComplianceRule {
    pub fn id(self) -> &'static str {
        match self {
            ComplianceRule::PciUniqueId => "PCI-UNIQUE-ID",
            ComplianceRule::FerpaNeedToKnow => "FERPA-NEED-TO-KNOW",
            ComplianceRule::OrphanAccount => "ORPHAN-ACCOUNT",
            ComplianceRule::MatrixDrift => "MATRIX-DRIFT",
            ComplianceRule::PlaintextPii => "PLAINTEXT-PII",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    High,
    Medium,
    Low,
}

/// One compliance finding, citing the evidence that triggered it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ComplianceFinding {
    pub rule: ComplianceRule,
    pub subject: String,
    pub description: String,
    pub severity: Severity,
    pub evidence: Vec<String>,
}

/// Inputs to a compliance report. The report itself is read-only: it
/// mutates neither the store, the resources, nor the log.
pub struct ComplianceInputs<'a> {
    pub store: &'a IdentityStore,
    pub pool: &'a ResourcePool,
    pub matrix: &'a ProvisioningMatrix,
    pub groups: &'a GroupTable,
    /// A fresh drift report (see `engine::compute_drift`).
    pub drift: &'a DriftReport,
    /// The serialized snapshot of current state, scanned for leaked
    /// sensitive values.
    pub snapshot_json: &'a str,
}

/// Evaluate the compliance rules and return every finding.
///
/// - `PCI-UNIQUE-ID`: duplicate registry uids (one id per person).
/// - `FERPA-NEED-TO-KNOW`: group membership on an application the
///   member's role is not even entitled to.
/// - `ORPHAN-ACCOUNT`: accounts whose owner is absent or terminated.
/// - `MATRIX-DRIFT`: entitled-but-missing accounts and state mismatches.
/// - `PLAINTEXT-PII`: sensitive values appearing verbatim in the
///   serialized snapshot.
pub fn report_compliance(inputs: &ComplianceInputs<'_>) -> Vec<ComplianceFinding> {
    let mut findings = Vec::new();

    // PCI-UNIQUE-ID: every registry account must carry a distinct uid.
    let registry = inputs.pool.endpoint(ResourceId::AccessRegistry);
    let mut by_uid: BTreeMap<String, Vec<PersonId>> = BTreeMap::new();
    if let Ok(accounts) = registry.list_accounts() {
        for account in accounts {
            let uid = account
                .attributes
                .get("uid")
                .cloned()
                .unwrap_or_else(|| account.person_id.as_str().to_string());
            by_uid.entry(uid).or_default().push(account.person_id.clone());
        }
    }
    for (uid, owners) in by_uid {
        if owners.len() > 1 {
            findings.push(ComplianceFinding {
                rule: ComplianceRule::PciUniqueId,
                subject: uid.clone(),
                description: format!("registry uid {uid:?} is shared by {} accounts", owners.len()),
                severity: Severity::High,
                evidence: owners.iter().map(|p| format!("access_registry:{p}")).collect(),
            });
        }
    }

    // FERPA-NEED-TO-KNOW: group grants must stay within matrix
    // entitlements.
    for ((application, group_name), group) in inputs.groups.iter() {
        for member in group.members.keys() {
            let Some(identity) = inputs.store.get(member) else {
                continue; // caught as an orphan/account issue elsewhere
            };
            let entitled = entitlements_for(inputs.matrix, identity.role, identity.sub_role)
                .map(|e| e.resources.contains(application))
                .unwrap_or(false);
            if !entitled {
                findings.push(ComplianceFinding {
                    rule: ComplianceRule::FerpaNeedToKnow,
                    subject: member.to_string(),
                    description: format!(
                        "{member} holds group {group_name:?} on {application} without a matrix entitlement"
                    ),
                    severity: Severity::High,
                    evidence: vec![
                        format!("group:{application}/{group_name}"),
                        format!("identity:{member}:{}/{}", identity.role,
                            identity.sub_role.map(|s| s.wire_name()).unwrap_or("none")),
                    ],
                });
            }
        }
    }

    // ORPHAN-ACCOUNT and MATRIX-DRIFT from the fresh drift report.
    for (person, resource) in &inputs.drift.orphaned {
        findings.push(ComplianceFinding {
            rule: ComplianceRule::OrphanAccount,
            subject: format!("{person}@{resource}"),
            description: format!("account for {person} on {resource} has no live owner"),
            severity: Severity::Medium,
            evidence: vec![format!("account:{resource}:{person}")],
        });
    }
    for (person, resource) in &inputs.drift.missing {
        findings.push(ComplianceFinding {
            rule: ComplianceRule::MatrixDrift,
            subject: format!("{person}@{resource}"),
            description: format!("{person} is entitled to {resource} but has no account"),
            severity: Severity::Medium,
            evidence: vec![format!("entitlement:{resource}:{person}")],
        });
    }
    for (person, resource, expected, actual) in &inputs.drift.state_mismatch {
        findings.push(ComplianceFinding {
            rule: ComplianceRule::MatrixDrift,
            subject: format!("{person}@{resource}"),
            description: format!(
                "account for {person} on {resource} is {actual} but should be {expected}"
            ),
            severity: Severity::Medium,
            evidence: vec![format!("account:{resource}:{person}")],
        });
    }

    // PLAINTEXT-PII: no sensitive value may appear verbatim in the
    // serialized snapshot.
    let mut leaked: BTreeSet<(PersonId, String)> = BTreeSet::new();
    for identity in inputs.store.iter() {
        for (name, pii) in &identity.pii_fields {
            if pii.sensitive && !pii.value.is_empty() && inputs.snapshot_json.contains(&pii.value) {
                leaked.insert((identity.person_id.clone(), name.clone()));
            }
        }
    }
    for (person, field) in leaked {
        findings.push(ComplianceFinding {
            rule: ComplianceRule::PlaintextPii,
            subject: format!("{person}:{field}"),
            description: format!("sensitive field {field:?} of {person} appears in the snapshot in plaintext"),
            severity: Severity::High,
            evidence: vec![format!("snapshot-scan:{person}:{field}")],
        });
    }

    findings.sort_by(|a, b| (a.rule, &a.subject).cmp(&(b.rule, &b.subject)));
    findings
}

/// Render findings as a small HTML table for export. All dynamic text is
/// output-encoded.
pub fn findings_to_html(findings: &[ComplianceFinding]) -> String {
    use crate::guard::html_escape;
    let mut out = String::from("<table>\n<tr><th>rule</th><th>subject</th><th>severity</th><th>description</th></tr>\n");
    for f in findings {
        out.push_str(&format!(
            "<tr><td>{}</td><td>{}</td><td>{:?}</td><td>{}</td></tr>\n",
            html_escape(f.rule.id()),
            html_escape(&f.subject),
            f.severity,
            html_escape(&f.description),
        ));
    }
    out.push_str("</table>\n");
    out
}

/// Convenience constructor for event detail maps.
pub fn detail(pairs: &[(&str, Value)]) -> serde_json::Map<String, Value> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

/// Shorthand for a string detail value.
pub fn dv(s: impl Into<String>) -> Value {
    json!(s.into())
}
