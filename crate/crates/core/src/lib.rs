//! idfabric: an identity lifecycle and provisioning engine for an online
//! university.
//!
//! The crate models the full loop of centralized identity management
//! over five simulated managed resources:
//!
//! - [`identity`] — domain types and the lifecycle state machine;
//! - [`feed`] — authoritative-source ingestion and delta derivation;
//! - [`matrix`] — the role/sub-role provisioning matrix and entitlement
//!   computation;
//! - [`resources`] — simulated endpoints with fault injection and the
//!   privileged-connection gate;
//! - [`engine`] — provisioning, update, and de-provisioning workflows,
//!   retries, and desired-state reconciliation;
//! - [`authn`] — certificate and password authentication, revocation,
//!   lockout, and sessions;
//! - [`admin`] — delegated administration under a role × action matrix;
//! - [`guard`] — injection-safe search filters, default-deny object
//!   access, and encrypted-at-rest fields;
//! - [`audit`] — the append-only audit log and compliance reporting;
//! - [`snapshot`] — the persisted state document.

pub mod admin;
pub mod audit;
pub mod authn;
pub mod clock;
pub mod engine;
pub mod feed;
pub mod guard;
pub mod identity;
pub mod matrix;
pub mod resources;
pub mod snapshot;
pub mod store;

pub use admin::{is_permitted, perform_admin_action, AdminAction, AdminRole, AdminVerb, GroupTable};
pub use audit::{
    report_compliance, Actor, AuditCategory, AuditEvent, AuditLog, AuditOutcome, ComplianceFinding,
    ComplianceInputs, ComplianceRule, Severity,
};
pub use authn::{
    hash_password, AuthDenial, AuthFactor, AuthPolicy, AuthResult, Authenticator, CertStatus,
    Certificate, FactorGrant, RevocationList, RevocationReason, Session, StatusResponder,
};
pub use clock::Clock;
pub use engine::{
    compute_drift, ActionStatus, ActionVerb, DriftReport, Engine, EngineConfig, EngineError,
    ResourceAction, RetryQueue, WorkOrder, WorkOrderKind, WorkflowOutcome,
};
pub use feed::{diff_feed, parse_feed, EventHint, FeedDelta, FeedError, FeedRecord};
pub use guard::{
    build_search_filter, check_object_access, escape_filter_value, protect_field, unprotect_field,
    AccessControlList, AccessDecision, FieldKey, Grantee, ObjectHandleMap, ObjectRef,
    ProtectedField, SearchFilter,
};
pub use identity::{
    apply_event, validate_identity, EventKind, Identity, IdentityStatus, LifecycleEvent, PersonId,
    ResourceId, Role, SubRole, Violation, WithdrawalReason,
};
pub use matrix::{
    default_matrix, diff_entitlements, entitlements_for, load_matrix, serialize_matrix,
    EntitlementSet, MatrixError, ProvisioningMatrix,
};
pub use resources::{
    Account, AccountState, Connection, FaultMode, ResourceEndpoint, ResourceError, ResourcePool,
};
pub use snapshot::{snapshot_from_json, snapshot_to_json, RestoredState, SnapshotParts};
pub use store::IdentityStore;
