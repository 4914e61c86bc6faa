//! Authoritative-source feed ingestion: parse JSON-lines batches pulled
//! from the system of record and derive lifecycle deltas by diffing them
//! against the identity store.
//!
//! Parsing is all-or-nothing — a single malformed line aborts the batch,
//! because a partially applied feed would desynchronize the engine from
//! the authoritative source. Applying the resulting deltas is per-record
//! (the engine tolerates per-identity resource failures).

use std::collections::BTreeSet;
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::identity::{
    sub_role_valid, EventKind, Identity, LifecycleEvent, PersonId, Role, SubRole, WithdrawalReason,
};
use crate::store::IdentityStore;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeedError {
    #[error("malformed line {line}: {cause}")]
    MalformedLine { line: usize, cause: String },
    #[error("person id {0} appears more than once in the batch")]
    DuplicateInBatch(PersonId),
}

/// The lifecycle event kinds a feed line may hint at. Payloads are
/// reconstructed from the record itself: a transfer takes the record's
/// department, and a withdrawal arriving via the feed carries the
/// voluntary reason (the feed format has no reason column; the reason
/// never changes the transition).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventHint {
    Application,
    Matriculation,
    Enrollment,
    Withdrawal,
    Graduation,
    AlumniTransition,
    Hire,
    Transfer,
    LeaveOfAbsence,
    ReturnFromLeave,
    Termination,
}

impl EventHint {
    /// Materialize the hinted event using the record's fields.
    pub fn to_event(self, record: &FeedRecord) -> LifecycleEvent {
        let kind = match self {
            EventHint::Application => EventKind::Application,
            EventHint::Matriculation => EventKind::Matriculation,
            EventHint::Enrollment => EventKind::Enrollment,
            EventHint::Withdrawal => EventKind::Withdrawal(WithdrawalReason::Voluntary),
            EventHint::Graduation => EventKind::Graduation,
            EventHint::AlumniTransition => EventKind::AlumniTransition,
            EventHint::Hire => EventKind::Hire,
            EventHint::Transfer => EventKind::Transfer(record.department.clone()),
            EventHint::LeaveOfAbsence => EventKind::LeaveOfAbsence,
            EventHint::ReturnFromLeave => EventKind::ReturnFromLeave,
            EventHint::Termination => EventKind::Termination,
        };
        LifecycleEvent::new(kind, record.effective_date)
    }
}

/// One record pulled from the authoritative source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedRecord {
    pub person_id: PersonId,
    pub full_name: String,
    pub role: Role,
    pub sub_role: Option<SubRole>,
    pub department: String,
    pub event: Option<EventHint>,
    pub effective_date: NaiveDate,
}

impl FeedRecord {
    pub fn to_identity(&self) -> Identity {
        Identity::new(
            self.person_id.clone(),
            self.full_name.clone(),
            self.role,
            self.sub_role,
            self.department.clone(),
        )
    }
}

/// The action a feed record implies against the store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedDelta {
    /// Person id absent from the store: create the identity and provision.
    Create(FeedRecord),
    /// Known person with a derived lifecycle event.
    Update { person_id: PersonId, event: LifecycleEvent },
    /// Known person, nothing to do.
    NoChange(PersonId),
}

impl FeedDelta {
    pub fn person_id(&self) -> &PersonId {
        match self {
            FeedDelta::Create(record) => &record.person_id,
            FeedDelta::Update { person_id, .. } => person_id,
            FeedDelta::NoChange(person_id) => person_id,
        }
    }
}

impl fmt::Display for FeedDelta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeedDelta::Create(r) => write!(f, "create {}", r.person_id),
            FeedDelta::Update { person_id, event } => {
                write!(f, "update {} ({})", person_id, event.kind)
            }
            FeedDelta::NoChange(p) => write!(f, "no change {p}"),
        }
    }
}

/// Parse a feed batch: UTF-8 JSON-lines, one record per line.
///
/// Keys are exactly `person_id`, `full_name`, `role`, `sub_role`
/// (nullable), `department`, `event` (nullable), and `effective_date`
/// (`YYYY-MM-DD`); enum values are the lowercase names. Blank lines are
/// tolerated. Any malformed line aborts the whole batch.
pub fn parse_feed(bytes: &[u8]) -> Result<Vec<FeedRecord>, FeedError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| FeedError::MalformedLine { line: 0, cause: format!("not UTF-8: {e}") })?;
    let mut records = Vec::new();
    for (index, raw) in text.lines().enumerate() {
        let line = index + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let record: FeedRecord = serde_json::from_str(raw).map_err(|e| {
            let cause = if e.to_string().contains("missing field") {
                // Surface which required key the line lacks.
                e.to_string().split(" at ").next().unwrap_or("malformed").to_string()
            } else {
                e.to_string()
            };
            FeedError::MalformedLine { line, cause }
        })?;
        if record.person_id.is_empty() {
            return Err(FeedError::MalformedLine { line, cause: "missing person_id".to_string() });
        }
        if !sub_role_valid(record.role, record.sub_role) {
            return Err(FeedError::MalformedLine {
                line,
                cause: format!(
                    "invalid role/sub_role pair {}/{}",
                    record.role,
                    record.sub_role.map(|s| s.wire_name()).unwrap_or("null")
                ),
            });
        }
        records.push(record);
    }
    Ok(records)
}

/// Diff a parsed batch against a point-in-time store view.
///
/// Unknown person ids become `Create`; known ids with an explicit event
/// hint become `Update` carrying that event; a changed department with no
/// hint becomes `Update(Transfer)`; otherwise `NoChange`. Identities
/// absent from the batch are left alone — the pull model never infers
/// termination from absence.
///
/// The result is sorted by person id, so it is insensitive to record
/// order. Duplicate person ids within one batch are rejected.
pub fn diff_feed(store: &IdentityStore, records: &[FeedRecord]) -> Result<Vec<FeedDelta>, FeedError> {
    let mut seen: BTreeSet<&PersonId> = BTreeSet::new();
    for record in records {
        if !seen.insert(&record.person_id) {
            return Err(FeedError::DuplicateInBatch(record.person_id.clone()));
        }
    }

    let mut deltas: Vec<FeedDelta> = records
        .iter()
        .map(|record| match store.get(&record.person_id) {
            None => FeedDelta::Create(record.clone()),
            Some(identity) => {
                if let Some(hint) = record.event {
                    FeedDelta::Update {
                        person_id: record.person_id.clone(),
                        event: hint.to_event(record),
                    }
                } else if identity.department != record.department {
                    FeedDelta::Update {
                        person_id: record.person_id.clone(),
                        event: LifecycleEvent::new(
                            EventKind::Transfer(record.department.clone()),
                            record.effective_date,
                        ),
                    }
                } else {
                    FeedDelta::NoChange(record.person_id.clone())
                }
            }
        })
        .collect();
    deltas.sort_by(|a, b| a.person_id().cmp(b.person_id()));
    Ok(deltas)
}
