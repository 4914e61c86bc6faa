//! Domain types and the lifecycle state machine consumed by every other
//! module: people, roles, sub-roles, lifecycle events, and the managed
//! resource identifiers.
//!
//! All types here are immutable values; [`apply_event`] is a pure function
//! returning a fresh [`Identity`] and never mutating its input.

use std::collections::BTreeMap;
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opaque identifier for a person, unique across a store.
///
/// The authoritative source assigns one id per person; uniqueness inside a
/// store is enforced by [`crate::store::IdentityStore`]. Emptiness is a
/// reportable violation rather than a construction panic so that records
/// arriving from the outside world can be inspected before rejection.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PersonId(String);

impl PersonId {
    pub fn new(value: impl Into<String>) -> Self {
        PersonId(value.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for PersonId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PersonId {
    fn from(value: &str) -> Self {
        PersonId::new(value)
    }
}

/// Base role assigned by the authoritative source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Employee,
    Student,
    Faculty,
    Contractor,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Employee, Role::Student, Role::Faculty, Role::Contractor];

    pub fn wire_name(self) -> &'static str {
        match self {
            Role::Employee => "employee",
            Role::Student => "student",
            Role::Faculty => "faculty",
            Role::Contractor => "contractor",
        }
    }

    pub fn from_wire(name: &str) -> Option<Role> {
        Role::ALL.into_iter().find(|r| r.wire_name() == name)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.wire_name())
    }
}

/// Refinement of a base role. Employees split into management and
/// individual contributors; students move through prospect, active,
/// inactive, and alumni. Faculty and contractors carry no sub-role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubRole {
    Management,
    IndividualContributor,
    Prospect,
    Active,
    Inactive,
    Alumni,
}

impl SubRole {
    pub const ALL: [SubRole; 6] = [
        SubRole::Management,
        SubRole::IndividualContributor,
        SubRole::Prospect,
        SubRole::Active,
        SubRole::Inactive,
        SubRole::Alumni,
    ];

    pub fn wire_name(self) -> &'static str {
        match self {
            SubRole::Management => "management",
            SubRole::IndividualContributor => "individual_contributor",
            SubRole::Prospect => "prospect",
            SubRole::Active => "active",
            SubRole::Inactive => "inactive",
            SubRole::Alumni => "alumni",
        }
    }

    pub fn from_wire(name: &str) -> Option<SubRole> {
        SubRole::ALL.into_iter().find(|s| s.wire_name() == name)
    }
}

impl fmt::Display for SubRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.wire_name())
    }
}

/// Whether a (role, sub-role) pair is in the valid domain.
///
/// The sub-role domain is determined by the role: employees carry a
/// management/IC split, students carry a lifecycle stage, and everyone
/// else carries none.
pub fn sub_role_valid(role: Role, sub_role: Option<SubRole>) -> bool {
    match (role, sub_role) {
        (Role::Employee, Some(SubRole::Management | SubRole::IndividualContributor)) => true,
        (
            Role::Student,
            Some(SubRole::Prospect | SubRole::Active | SubRole::Inactive | SubRole::Alumni),
        ) => true,
        (Role::Faculty | Role::Contractor, None) => true,
        _ => false,
    }
}

/// Lifecycle account status of an identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityStatus {
    Active,
    Suspended,
    Terminated,
}

impl fmt::Display for IdentityStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            IdentityStatus::Active => "active",
            IdentityStatus::Suspended => "suspended",
            IdentityStatus::Terminated => "terminated",
        };
        f.write_str(s)
    }
}

/// Why a student withdrew. The reason never changes the transition, only
/// the audit record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WithdrawalReason {
    Academic,
    Financial,
    Voluntary,
}

impl fmt::Display for WithdrawalReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            WithdrawalReason::Academic => "academic",
            WithdrawalReason::Financial => "financial",
            WithdrawalReason::Voluntary => "voluntary",
        };
        f.write_str(s)
    }
}

/// The kind of a lifecycle event, with its payload where one exists.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Application,
    Matriculation,
    Enrollment,
    Withdrawal(WithdrawalReason),
    Graduation,
    AlumniTransition,
    Hire,
    /// Carries the new (non-empty) department.
    Transfer(String),
    LeaveOfAbsence,
    ReturnFromLeave,
    Termination,
}

impl EventKind {
    /// Stable name for wire formats and audit records.
    pub fn wire_name(&self) -> &'static str {
        match self {
            EventKind::Application => "application",
            EventKind::Matriculation => "matriculation",
            EventKind::Enrollment => "enrollment",
            EventKind::Withdrawal(_) => "withdrawal",
            EventKind::Graduation => "graduation",
            EventKind::AlumniTransition => "alumni_transition",
            EventKind::Hire => "hire",
            EventKind::Transfer(_) => "transfer",
            EventKind::LeaveOfAbsence => "leave_of_absence",
            EventKind::ReturnFromLeave => "return_from_leave",
            EventKind::Termination => "termination",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::Withdrawal(reason) => write!(f, "withdrawal({reason})"),
            EventKind::Transfer(dept) => write!(f, "transfer({dept})"),
            other => f.write_str(other.wire_name()),
        }
    }
}

/// A status change driving entitlement recomputation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LifecycleEvent {
    pub kind: EventKind,
    pub effective_date: NaiveDate,
}

impl LifecycleEvent {
    pub fn new(kind: EventKind, effective_date: NaiveDate) -> Self {
        LifecycleEvent { kind, effective_date }
    }

    /// Payload well-formedness: a transfer must name a department.
    /// (A withdrawal always carries a reason by construction.)
    pub fn check_payload(&self) -> Result<(), TransitionError> {
        if let EventKind::Transfer(dept) = &self.kind {
            if dept.trim().is_empty() {
                return Err(TransitionError::InvalidEvent {
                    cause: "transfer requires a non-empty department".to_string(),
                });
            }
        }
        Ok(())
    }
}

/// One attribute value from the authoritative record, flagged when it is
/// personally identifying and must never be persisted in plaintext.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PiiValue {
    pub value: String,
    pub sensitive: bool,
}

impl PiiValue {
    pub fn plain(value: impl Into<String>) -> Self {
        PiiValue { value: value.into(), sensitive: false }
    }

    pub fn sensitive(value: impl Into<String>) -> Self {
        PiiValue { value: value.into(), sensitive: true }
    }
}

/// A person's authoritative record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Identity {
    pub person_id: PersonId,
    pub full_name: String,
    pub role: Role,
    pub sub_role: Option<SubRole>,
    pub department: String,
    pub status: IdentityStatus,
    /// Effective date of the termination event, if the identity is
    /// terminated. Drives the deletion grace period.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminated_on: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub pii_fields: BTreeMap<String, PiiValue>,
}

impl Identity {
    pub fn new(
        person_id: PersonId,
        full_name: impl Into<String>,
        role: Role,
        sub_role: Option<SubRole>,
        department: impl Into<String>,
    ) -> Self {
        Identity {
            person_id,
            full_name: full_name.into(),
            role,
            sub_role,
            department: department.into(),
            status: IdentityStatus::Active,
            terminated_on: None,
            pii_fields: BTreeMap::new(),
        }
    }

    pub fn with_pii(mut self, name: impl Into<String>, value: PiiValue) -> Self {
        self.pii_fields.insert(name.into(), value);
        self
    }
}

/// A failed identity invariant. Violations are data, not errors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    EmptyPersonId,
    InvalidRoleSubRolePair { role: Role, sub_role: Option<SubRole> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyPersonId => f.write_str("empty person id"),
            Violation::InvalidRoleSubRolePair { role, sub_role } => {
                let sub = sub_role.map(|s| s.wire_name()).unwrap_or("none");
                write!(f, "invalid role/sub-role pair {role}/{sub}")
            }
        }
    }
}

/// Returns the empty list iff all identity invariants hold.
pub fn validate_identity(identity: &Identity) -> Vec<Violation> {
    let mut violations = Vec::new();
    if identity.person_id.is_empty() {
        violations.push(Violation::EmptyPersonId);
    }
    if !sub_role_valid(identity.role, identity.sub_role) {
        violations.push(Violation::InvalidRoleSubRolePair {
            role: identity.role,
            sub_role: identity.sub_role,
        });
    }
    violations
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransitionError {
    #[error("undefined transition: {event} not applicable to {role}/{sub_role}/{status}")]
    UndefinedTransition { role: Role, sub_role: String, status: IdentityStatus, event: String },
    #[error("invalid event: {cause}")]
    InvalidEvent { cause: String },
}

fn undefined(identity: &Identity, event: &LifecycleEvent) -> TransitionError {
    TransitionError::UndefinedTransition {
        role: identity.role,
        sub_role: identity.sub_role.map(|s| s.wire_name().to_string()).unwrap_or_else(|| "none".to_string()),
        status: identity.status,
        event: event.kind.wire_name().to_string(),
    }
}

/// Apply a lifecycle event, returning the updated identity.
///
/// Pure and deterministic: the input is untouched and equal inputs yield
/// equal outputs. The transition relation is a function — at most one
/// successor per (role, sub-role, status, event kind).
///
/// Transition table:
///
/// | event              | precondition                         | result                                  |
/// |--------------------|--------------------------------------|-----------------------------------------|
/// | `Application`      | any (re-admits terminated people)    | student/prospect, status active          |
/// | `Hire`             | any (re-hires terminated people)     | employee/individual_contributor, active  |
/// | `Matriculation`    | student/prospect, active             | student/active                           |
/// | `Enrollment`       | student/active, active               | unchanged (re-affirms)                   |
/// | `Withdrawal(_)`    | student/active, not terminated       | student/inactive, status suspended       |
/// | `Graduation`       | student/active, active               | student/alumni                           |
/// | `AlumniTransition` | student/inactive, not terminated     | student/alumni, status active            |
/// | `Transfer(d)`      | not terminated, d non-empty          | department = d                           |
/// | `LeaveOfAbsence`   | status active                        | status suspended                         |
/// | `ReturnFromLeave`  | status suspended                     | status active                            |
/// | `Termination`      | not terminated                       | status terminated                        |
///
/// Terminated identities never regain an active status except through a
/// fresh `Hire` or `Application`.
pub fn apply_event(identity: &Identity, event: &LifecycleEvent) -> Result<Identity, TransitionError> {
    event.check_payload()?;
    let mut next = identity.clone();
    match &event.kind {
        EventKind::Application => {
            next.role = Role::Student;
            next.sub_role = Some(SubRole::Prospect);
            next.status = IdentityStatus::Active;
            next.terminated_on = None;
        }
        EventKind::Hire => {
            next.role = Role::Employee;
            next.sub_role = Some(SubRole::IndividualContributor);
            next.status = IdentityStatus::Active;
            next.terminated_on = None;
        }
        kind => {
            if identity.status == IdentityStatus::Terminated {
                return Err(undefined(identity, event));
            }
            match kind {
                EventKind::Matriculation => {
                    if identity.role != Role::Student
                        || identity.sub_role != Some(SubRole::Prospect)
                        || identity.status != IdentityStatus::Active
                    {
                        return Err(undefined(identity, event));
                    }
                    next.sub_role = Some(SubRole::Active);
                }
                EventKind::Enrollment => {
                    if identity.role != Role::Student
                        || identity.sub_role != Some(SubRole::Active)
                        || identity.status != IdentityStatus::Active
                    {
                        return Err(undefined(identity, event));
                    }
                    // Re-affirms the active stage; nothing changes.
                }
                EventKind::Withdrawal(_) => {
                    if identity.role != Role::Student || identity.sub_role != Some(SubRole::Active) {
                        return Err(undefined(identity, event));
                    }
                    next.sub_role = Some(SubRole::Inactive);
                    next.status = IdentityStatus::Suspended;
                }
                EventKind::Graduation => {
                    if identity.role != Role::Student
                        || identity.sub_role != Some(SubRole::Active)
                        || identity.status != IdentityStatus::Active
                    {
                        return Err(undefined(identity, event));
                    }
                    next.sub_role = Some(SubRole::Alumni);
                }
                EventKind::AlumniTransition => {
                    if identity.role != Role::Student || identity.sub_role != Some(SubRole::Inactive) {
                        return Err(undefined(identity, event));
                    }
                    next.sub_role = Some(SubRole::Alumni);
                    next.status = IdentityStatus::Active;
                }
                EventKind::Transfer(dept) => {
                    next.department = dept.clone();
                }
                EventKind::LeaveOfAbsence => {
                    if identity.status != IdentityStatus::Active {
                        return Err(undefined(identity, event));
                    }
                    next.status = IdentityStatus::Suspended;
                }
                EventKind::ReturnFromLeave => {
                    if identity.status != IdentityStatus::Suspended {
                        return Err(undefined(identity, event));
                    }
                    next.status = IdentityStatus::Active;
                }
                EventKind::Termination => {
                    next.status = IdentityStatus::Terminated;
                    next.terminated_on = Some(event.effective_date);
                }
                EventKind::Application | EventKind::Hire => unreachable!("handled above"),
            }
        }
    }
    debug_assert!(sub_role_valid(next.role, next.sub_role));
    Ok(next)
}

/// Identifiers for the five simulated managed resources.
///
/// `AccessRegistry` is the central authentication registry; `DirectoryMail`
/// is the directory-plus-mailbox service; `UnixHosts` the shell servers;
/// `StudentPortal` and `LearningPlatform` the two application-class
/// resources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResourceId {
    AccessRegistry,
    DirectoryMail,
    UnixHosts,
    StudentPortal,
    LearningPlatform,
}

impl ResourceId {
    pub const ALL: [ResourceId; 5] = [
        ResourceId::AccessRegistry,
        ResourceId::DirectoryMail,
        ResourceId::UnixHosts,
        ResourceId::StudentPortal,
        ResourceId::LearningPlatform,
    ];

    pub fn wire_name(self) -> &'static str {
        match self {
            ResourceId::AccessRegistry => "access_registry",
            ResourceId::DirectoryMail => "directory_mail",
            ResourceId::UnixHosts => "unix_hosts",
            ResourceId::StudentPortal => "student_portal",
            ResourceId::LearningPlatform => "learning_platform",
        }
    }

    pub fn from_wire(name: &str) -> Option<ResourceId> {
        ResourceId::ALL.into_iter().find(|r| r.wire_name() == name)
    }
}

impl fmt::Display for ResourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.wire_name())
    }
}
