//! Certificate-based authentication: the production flow backed by a
//! real-time status responder, the non-production flow backed by a
//! registry certificate match, a password factor with lockout, and
//! server-side sessions combined under a multi-factor policy.
//!
//! Public-key mathematics are out of scope: a certificate's `key_token`
//! stands in for the public key and the presented `proof` stands in for
//! proof of private-key possession. The flows, the trust decisions, and
//! the revocation semantics are the point.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::audit::{detail, dv, Actor, AuditCategory, AuditLog, AuditOutcome};
use crate::clock::Clock;
use crate::guard::{build_search_filter, SearchFilter};
use crate::identity::PersonId;
use crate::resources::{AccountState, ResourceEndpoint, ResourceError};

/// An abstract X.509-style certificate. `serial` is unique per issuer;
/// the token fields stand in for the key material.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub serial: u64,
    pub subject_uid: String,
    pub subject_email: String,
    pub issuer: String,
    pub not_before: NaiveDate,
    pub not_after: NaiveDate,
    pub key_token: String,
    pub proof_token: String,
}

impl Certificate {
    /// Expected proof for a given key token. A correct holder presents
    /// exactly this value.
    pub fn expected_proof(key_token: &str) -> String {
        format!("proof:{key_token}")
    }
}

/// Why a certificate was revoked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevocationReason {
    Compromised,
    Expired,
    Unspecified,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RevocationEntry {
    pub serial: u64,
    pub reason: RevocationReason,
    pub revoked_at: DateTime<Utc>,
}

/// One published, immutable revocation list version. Lists are never
/// edited in place; publishing produces a new version.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevocationList {
    pub issuer: String,
    pub version: u32,
    pub issued_at: DateTime<Utc>,
    pub entries: BTreeSet<RevocationEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RevocationError {
    #[error("serial {0} is not known to any issuer")]
    UnknownSerial(u64),
}

/// Answer from the status responder for one (issuer, serial).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CertStatus {
    Good,
    Revoked { reason: RevocationReason, revoked_at: DateTime<Utc> },
    UnknownIssuer,
}

/// Serializable state of a [`StatusResponder`] for the snapshot file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponderState {
    pub known_issuers: BTreeSet<String>,
    /// Serial registrations: which issuer issued which serial.
    pub registered: BTreeMap<u64, String>,
    /// Current list per issuer.
    pub current: BTreeMap<String, RevocationList>,
    /// Every published version, oldest first.
    pub history: Vec<RevocationList>,
}

/// The online status responder. Answers reflect the latest published
/// list the moment it is published — the freshness advantage over
/// periodically distributed lists.
#[derive(Debug, Default)]
pub struct StatusResponder {
    state: ResponderState,
    queries: AtomicU64,
}

impl StatusResponder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_state(state: ResponderState) -> Self {
        StatusResponder { state, queries: AtomicU64::new(0) }
    }

    pub fn state(&self) -> &ResponderState {
        &self.state
    }

    pub fn register_issuer(&mut self, issuer: &str) {
        self.state.known_issuers.insert(issuer.to_string());
    }

    /// Record that an issuer issued a serial; the issuance side of the
    /// certificate lifecycle, required before the serial can be revoked.
    pub fn register_certificate(&mut self, cert: &Certificate) {
        self.register_issuer(&cert.issuer);
        self.state.registered.insert(cert.serial, cert.issuer.clone());
    }

    /// Real-time status query.
    pub fn status(&self, issuer: &str, serial: u64) -> CertStatus {
        self.queries.fetch_add(1, Ordering::SeqCst);
        if !self.state.known_issuers.contains(issuer) {
            return CertStatus::UnknownIssuer;
        }
        if let Some(list) = self.state.current.get(issuer) {
            if let Some(entry) = list.entries.iter().find(|e| e.serial == serial) {
                return CertStatus::Revoked { reason: entry.reason, revoked_at: entry.revoked_at };
            }
        }
        CertStatus::Good
    }

    /// How many status queries this responder has answered. Used by the
    /// step-order tests.
    pub fn query_count(&self) -> u64 {
        self.queries.load(Ordering::SeqCst)
    }

    /// Publish a revocation: a new list version containing the serial.
    /// Queries made after this call see the revocation. Re-publishing an
    /// already-revoked serial is idempotent and produces no new version.
    pub fn publish_revocation(
        &mut self,
        serial: u64,
        reason: RevocationReason,
        clock: &Clock,
    ) -> Result<&RevocationList, RevocationError> {
        let issuer = self
            .state
            .registered
            .get(&serial)
            .cloned()
            .ok_or(RevocationError::UnknownSerial(serial))?;
        let already = self
            .state
            .current
            .get(&issuer)
            .map(|l| l.entries.iter().any(|e| e.serial == serial))
            .unwrap_or(false);
        if !already {
            let previous = self.state.current.get(&issuer);
            let mut entries = previous.map(|l| l.entries.clone()).unwrap_or_default();
            entries.insert(RevocationEntry { serial, reason, revoked_at: clock.now() });
            let list = RevocationList {
                issuer: issuer.clone(),
                version: previous.map(|l| l.version + 1).unwrap_or(1),
                issued_at: clock.now(),
                entries,
            };
            self.state.history.push(list.clone());
            self.state.current.insert(issuer.clone(), list);
        }
        Ok(&self.state.current[&issuer])
    }
}

// ---------------------------------------------------------------------------
// Policy, sessions, denials
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuthFactor {
    Certificate,
    Password,
}

impl std::fmt::Display for AuthFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AuthFactor::Certificate => "certificate",
            AuthFactor::Password => "password",
        })
    }
}

/// Authentication policy: lockout thresholds and the factors a session
/// must satisfy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthPolicy {
    pub max_failed_attempts: u32,
    pub lockout_duration_secs: u64,
    pub required_factors: BTreeSet<AuthFactor>,
    pub session_ttl_secs: u64,
}

impl Default for AuthPolicy {
    fn default() -> Self {
        AuthPolicy {
            max_failed_attempts: 5,
            lockout_duration_secs: 900,
            required_factors: [AuthFactor::Certificate, AuthFactor::Password].into(),
            session_ttl_secs: 3600,
        }
    }
}

impl AuthPolicy {
    /// Per-application factor requirements: PII-bearing surfaces demand
    /// certificate plus password; the learning platform takes password
    /// only.
    pub fn required_factors_for(application: crate::identity::ResourceId) -> BTreeSet<AuthFactor> {
        use crate::identity::ResourceId::*;
        match application {
            LearningPlatform => [AuthFactor::Password].into(),
            _ => [AuthFactor::Certificate, AuthFactor::Password].into(),
        }
    }

    pub fn with_factors(mut self, factors: impl IntoIterator<Item = AuthFactor>) -> Self {
        self.required_factors = factors.into_iter().collect();
        self
    }
}

/// A server-side session record. The client-held copy is advisory:
/// validity is decided solely by comparing against the server table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub person_id: PersonId,
    pub issued_at: DateTime<Utc>,
    pub expires_at: DateTime<Utc>,
    pub factors_satisfied: BTreeSet<AuthFactor>,
}

/// One successfully verified factor for one person.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorGrant {
    pub factor: AuthFactor,
    pub person_id: PersonId,
    /// Serial of the certificate behind a certificate grant.
    pub certificate_serial: Option<u64>,
}

/// Typed denial of an authentication attempt.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuthDenial {
    #[error("certificate serial {serial} revoked ({reason:?})")]
    Revoked { serial: u64, reason: RevocationReason },
    #[error("certificate expired")]
    ExpiredCertificate,
    #[error("certificate not yet valid")]
    NotYetValid,
    #[error("unknown issuer")]
    UnknownIssuer,
    #[error("proof of key possession does not match")]
    ProofMismatch,
    #[error("no active registry account")]
    NoRegistryAccount,
    #[error("presented certificate does not match the stored certificate")]
    CertificateMismatch,
    #[error("registry account is suspended")]
    AccountSuspended,
    #[error("bad credentials")]
    BadCredentials,
    #[error("locked out until {until}")]
    LockedOut { until: DateTime<Utc> },
    #[error("required factor {0} missing or failed")]
    MissingFactor(AuthFactor),
    #[error("factors authenticated different persons")]
    FactorMismatch,
    #[error("session invalid")]
    SessionInvalid,
    #[error("registry unavailable")]
    RegistryUnavailable,
    #[error("audit log unavailable; failing closed")]
    AuditUnavailable,
}

pub type AuthResult = Result<FactorGrant, AuthDenial>;

/// Deterministic salted password hash for registry credentials. This is
/// simulation-grade key stretching: the salt is derived from the uid, so
/// snapshots stay reproducible.
pub fn hash_password(person_id: &PersonId, password: &str) -> String {
    let mut salter = Sha256::new();
    salter.update(b"idfabric-password-salt-v1");
    salter.update(person_id.as_str().as_bytes());
    let salt = salter.finalize();
    let mut hasher = Sha256::new();
    hasher.update(salt);
    hasher.update(password.as_bytes());
    let digest = hasher.finalize();
    format!("s256${}", hex(&digest))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Default)]
struct LockoutState {
    consecutive_failures: u32,
    locked_until: Option<DateTime<Utc>>,
}

/// The authentication service: verifies factors, enforces lockout, and
/// owns the server-side session table. Interior locking makes concurrent
/// attempts safe; counter updates are atomic under the mutex.
#[derive(Debug)]
pub struct Authenticator {
    policy: AuthPolicy,
    clock: Clock,
    sessions: Mutex<BTreeMap<String, Session>>,
    lockouts: Mutex<BTreeMap<PersonId, LockoutState>>,
    token_counter: Mutex<u64>,
    token_salt: String,
}

impl Authenticator {
    pub fn new(policy: AuthPolicy, clock: Clock) -> Self {
        Authenticator {
            policy,
            clock,
            sessions: Mutex::new(BTreeMap::new()),
            lockouts: Mutex::new(BTreeMap::new()),
            token_counter: Mutex::new(0),
            token_salt: "idfabric".to_string(),
        }
    }

    /// Fix the token derivation salt; with a fixed clock this makes
    /// issued session ids fully reproducible.
    pub fn with_token_salt(mut self, salt: impl Into<String>) -> Self {
        self.token_salt = salt.into();
        self
    }

    pub fn policy(&self) -> &AuthPolicy {
        &self.policy
    }

    fn audit_attempt(
        &self,
        audit: &AuditLog,
        action: &str,
        target: &str,
        result: &AuthResult,
    ) -> Result<(), AuthDenial> {
        let (outcome, reason) = match result {
            Ok(_) => (AuditOutcome::Success, "granted".to_string()),
            Err(denial) => (AuditOutcome::Denied, denial.to_string()),
        };
        audit
            .record(
                Actor::System,
                self.clock.now(),
                AuditCategory::AuthAttempt,
                action,
                target,
                outcome,
                detail(&[("reason", dv(reason))]),
            )
            .map(|_| ())
            .map_err(|_| AuthDenial::AuditUnavailable)
    }

    /// Production flow, in step order: accept the presented certificate
    /// (local validity first), query the responder for real-time status,
    /// verify proof of key possession, and on a good status with valid
    /// proof grant the certificate factor. The responder is consulted
    /// exactly once on the happy path and never when local validity
    /// fails.
    pub fn authenticate_production(
        &self,
        cert: &Certificate,
        proof: &str,
        responder: &StatusResponder,
        registry: &ResourceEndpoint,
        audit: &AuditLog,
    ) -> AuthResult {
        let result = self.production_inner(cert, proof, responder, registry);
        self.audit_attempt(audit, "authenticate_production", &cert.subject_uid, &result)?;
        result
    }

    fn production_inner(
        &self,
        cert: &Certificate,
        proof: &str,
        responder: &StatusResponder,
        registry: &ResourceEndpoint,
    ) -> AuthResult {
        let today = self.clock.today();
        if today < cert.not_before {
            return Err(AuthDenial::NotYetValid);
        }
        if today > cert.not_after {
            return Err(AuthDenial::ExpiredCertificate);
        }
        match responder.status(&cert.issuer, cert.serial) {
            CertStatus::UnknownIssuer => return Err(AuthDenial::UnknownIssuer),
            CertStatus::Revoked { reason, .. } => {
                return Err(AuthDenial::Revoked { serial: cert.serial, reason })
            }
            CertStatus::Good => {}
        }
        if proof != cert.proof_token {
            return Err(AuthDenial::ProofMismatch);
        }
        let person = PersonId::new(cert.subject_uid.clone());
        match registry.account(&person) {
            Some(account) if account.state == AccountState::Active => Ok(FactorGrant {
                factor: AuthFactor::Certificate,
                person_id: person,
                certificate_serial: Some(cert.serial),
            }),
            _ => Err(AuthDenial::NoRegistryAccount),
        }
    }

    /// Non-production flow: look the account up by the certificate's
    /// subject attributes (through the injection-safe filter builder),
    /// retrieve the stored certificate, and byte-compare it with the
    /// presented one. No responder is involved.
    pub fn authenticate_nonproduction(
        &self,
        cert: &Certificate,
        proof: &str,
        registry: &ResourceEndpoint,
        audit: &AuditLog,
    ) -> AuthResult {
        let result = self.nonproduction_inner(cert, proof, registry);
        self.audit_attempt(audit, "authenticate_nonproduction", &cert.subject_uid, &result)?;
        result
    }

    fn nonproduction_inner(
        &self,
        cert: &Certificate,
        proof: &str,
        registry: &ResourceEndpoint,
    ) -> AuthResult {
        let filter = SearchFilter::Or(vec![
            build_search_filter("uid", &cert.subject_uid).expect("uid is whitelisted"),
            build_search_filter("email", &cert.subject_email).expect("email is whitelisted"),
        ]);
        let hits = match registry.search(&filter.render()) {
            Ok(hits) => hits,
            Err(ResourceError::ResourceDown) => return Err(AuthDenial::RegistryUnavailable),
            Err(_) => return Err(AuthDenial::NoRegistryAccount),
        };
        let Some(account) = hits.first() else {
            return Err(AuthDenial::NoRegistryAccount);
        };
        if account.state == AccountState::Suspended {
            return Err(AuthDenial::AccountSuspended);
        }
        match &account.stored_certificate {
            Some(stored) if stored == cert => {}
            _ => return Err(AuthDenial::CertificateMismatch),
        }
        if proof != cert.proof_token {
            return Err(AuthDenial::ProofMismatch);
        }
        Ok(FactorGrant {
            factor: AuthFactor::Certificate,
            person_id: account.person_id.clone(),
            certificate_serial: Some(cert.serial),
        })
    }

    /// Password factor with per-identity lockout. Failures increment a
    /// consecutive counter; reaching the policy maximum locks the
    /// identity out for the configured duration, after which the counter
    /// starts fresh. A success resets the counter.
    pub fn authenticate_password(
        &self,
        person_id: &PersonId,
        password: &str,
        registry: &ResourceEndpoint,
        audit: &AuditLog,
    ) -> AuthResult {
        let result = self.password_inner(person_id, password, registry);
        self.audit_attempt(audit, "authenticate_password", person_id.as_str(), &result)?;
        result
    }

    fn password_inner(
        &self,
        person_id: &PersonId,
        password: &str,
        registry: &ResourceEndpoint,
    ) -> AuthResult {
        let now = self.clock.now();
        let mut lockouts = self.lockouts.lock().expect("lockout lock");
        let state = lockouts.entry(person_id.clone()).or_default();
        if let Some(until) = state.locked_until {
            if now < until {
                return Err(AuthDenial::LockedOut { until });
            }
            // Lockout expired: the identity starts with a clean slate.
            state.locked_until = None;
            state.consecutive_failures = 0;
        }

        let account = match registry.account(person_id) {
            Some(account) if account.state == AccountState::Active => account,
            _ => return Err(AuthDenial::NoRegistryAccount),
        };
        let stored = match &account.password_hash {
            Some(hash) => hash,
            None => return Err(AuthDenial::NoRegistryAccount),
        };

        if *stored == hash_password(person_id, password) {
            state.consecutive_failures = 0;
            state.locked_until = None;
            Ok(FactorGrant { factor: AuthFactor::Password, person_id: person_id.clone(), certificate_serial: None })
        } else {
            state.consecutive_failures += 1;
            if state.consecutive_failures >= self.policy.max_failed_attempts {
                state.locked_until =
                    Some(now + chrono::Duration::seconds(self.policy.lockout_duration_secs as i64));
            }
            Err(AuthDenial::BadCredentials)
        }
    }

    /// Combine factor results under the authenticator's own policy.
    pub fn mfa_authenticate(
        &self,
        results: &[(AuthFactor, AuthResult)],
        audit: &AuditLog,
    ) -> Result<Session, AuthDenial> {
        let required = self.policy.required_factors.clone();
        self.mfa_authenticate_with(results, &required, audit)
    }

    /// Combine factor results under an explicit factor requirement — the
    /// per-application policies differ. A session is issued iff every
    /// required factor succeeded for the same person.
    pub fn mfa_authenticate_with(
        &self,
        results: &[(AuthFactor, AuthResult)],
        required_factors: &BTreeSet<AuthFactor>,
        audit: &AuditLog,
    ) -> Result<Session, AuthDenial> {
        let outcome = self.mfa_inner(results, required_factors);
        let target = outcome
            .as_ref()
            .map(|s| s.person_id.to_string())
            .unwrap_or_else(|_| "unknown".to_string());
        let audit_result = match &outcome {
            Ok(session) => Ok(FactorGrant {
                factor: AuthFactor::Certificate,
                person_id: session.person_id.clone(),
                certificate_serial: None,
            }),
            Err(e) => Err(e.clone()),
        };
        self.audit_attempt(audit, "mfa_authenticate", &target, &audit_result)?;
        outcome
    }

    fn mfa_inner(
        &self,
        results: &[(AuthFactor, AuthResult)],
        required_factors: &BTreeSet<AuthFactor>,
    ) -> Result<Session, AuthDenial> {
        for required in required_factors {
            let satisfied = results.iter().any(|(f, r)| f == required && r.is_ok());
            if !satisfied {
                return Err(AuthDenial::MissingFactor(*required));
            }
        }
        let grants: Vec<&FactorGrant> = results.iter().filter_map(|(_, r)| r.as_ref().ok()).collect();
        let Some(first) = grants.first() else {
            // Defensive: an empty required set still needs a person to bind.
            return Err(AuthDenial::FactorMismatch);
        };
        if grants.iter().any(|g| g.person_id != first.person_id) {
            return Err(AuthDenial::FactorMismatch);
        }
        Ok(self.issue_session(
            first.person_id.clone(),
            grants.iter().map(|g| g.factor).collect(),
        ))
    }

    /// Create and register a server-side session.
    pub fn issue_session(&self, person_id: PersonId, factors: BTreeSet<AuthFactor>) -> Session {
        let issued_at = self.clock.now();
        let token = {
            let mut counter = self.token_counter.lock().expect("token lock");
            *counter += 1;
            let mut hasher = Sha256::new();
            hasher.update(self.token_salt.as_bytes());
            hasher.update(counter.to_be_bytes());
            hasher.update(person_id.as_str().as_bytes());
            hasher.update(issued_at.timestamp_nanos_opt().unwrap_or(0).to_be_bytes());
            hex(&hasher.finalize())[..32].to_string()
        };
        let session = Session {
            session_id: token.clone(),
            person_id,
            issued_at,
            expires_at: issued_at + chrono::Duration::seconds(self.policy.session_ttl_secs as i64),
            factors_satisfied: factors,
        };
        self.sessions.lock().expect("session lock").insert(token, session.clone());
        session
    }

    /// Validate a presented session against the server-side table.
    ///
    /// The presented copy must match the server record field for field
    /// and the record must not be expired. Client-side tampering with any
    /// field therefore never yields a valid session.
    pub fn validate_session(&self, presented: &Session) -> Result<Session, AuthDenial> {
        let sessions = self.sessions.lock().expect("session lock");
        let record = sessions.get(&presented.session_id).ok_or(AuthDenial::SessionInvalid)?;
        if record != presented {
            return Err(AuthDenial::SessionInvalid);
        }
        if self.clock.now() >= record.expires_at {
            return Err(AuthDenial::SessionInvalid);
        }
        Ok(record.clone())
    }

    pub fn sessions_snapshot(&self) -> Vec<Session> {
        self.sessions.lock().expect("session lock").values().cloned().collect()
    }

    pub fn restore_sessions(&self, sessions: impl IntoIterator<Item = Session>) {
        let mut table = self.sessions.lock().expect("session lock");
        for session in sessions {
            table.insert(session.session_id.clone(), session);
        }
    }

    /// Consecutive-failure count for a person; diagnostic.
    pub fn failure_count(&self, person_id: &PersonId) -> u32 {
        self.lockouts
            .lock()
            .expect("lockout lock")
            .get(person_id)
            .map(|s| s.consecutive_failures)
            .unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identity::ResourceId;
    use crate::resources::ResourceEndpoint;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn clock() -> Clock {
        Clock::fixed(Utc.with_ymd_and_hms(2026, 6, 1, 12, 0, 0).unwrap())
    }

    fn cert(uid: &str, serial: u64) -> Certificate {
        let key = format!("key-{uid}");
        Certificate {
            serial,
            subject_uid: uid.to_string(),
            subject_email: format!("{uid}@alpha.example"),
            issuer: "alpha-ca".to_string(),
            not_before: NaiveDate::from_ymd_opt(2026, 1, 1).unwrap(),
            not_after: NaiveDate::from_ymd_opt(2027, 1, 1).unwrap(),
            proof_token: Certificate::expected_proof(&key),
            key_token: key,
        }
    }

    fn registry_with(uid: &str, cert: Option<&Certificate>, password: Option<&str>) -> ResourceEndpoint {
        let mut registry = ResourceEndpoint::new(ResourceId::AccessRegistry);
        let person = PersonId::new(uid);
        let attrs: std::collections::BTreeMap<String, String> = [
            ("uid".to_string(), uid.to_string()),
            ("cn".to_string(), format!("User {uid}")),
            ("email".to_string(), format!("{uid}@alpha.example")),
        ]
        .into();
        registry.create_account(&person, &attrs).unwrap();
        registry
            .set_credentials(
                &person,
                cert.cloned(),
                password.map(|p| hash_password(&person, p)),
            )
            .unwrap();
        registry
    }

    fn authenticator() -> Authenticator {
        Authenticator::new(AuthPolicy::default(), clock())
    }

    #[test]
    fn production_happy_path_grants_and_queries_once() {
        let c = cert("jsmith", 7);
        let registry = registry_with("jsmith", None, None);
        let mut responder = StatusResponder::new();
        responder.register_certificate(&c);
        let authn = authenticator();
        let log = AuditLog::in_memory();

        let grant = authn
            .authenticate_production(&c, &c.proof_token, &responder, &registry, &log)
            .unwrap();
        assert_eq!(grant.person_id, PersonId::new("jsmith"));
        assert_eq!(grant.certificate_serial, Some(7));
        assert_eq!(responder.query_count(), 1);
        assert_eq!(log.count_category(AuditCategory::AuthAttempt), 1);
    }

    #[test]
    fn revoked_serial_is_denied() {
        let c = cert("jsmith", 7);
        let registry = registry_with("jsmith", None, None);
        let mut responder = StatusResponder::new();
        responder.register_certificate(&c);
        responder.publish_revocation(7, RevocationReason::Compromised, &clock()).unwrap();
        let authn = authenticator();
        let log = AuditLog::in_memory();

        let denial = authn
            .authenticate_production(&c, &c.proof_token, &responder, &registry, &log)
            .unwrap_err();
        assert_eq!(denial, AuthDenial::Revoked { serial: 7, reason: RevocationReason::Compromised });
    }

    #[test]
    fn expired_certificate_never_reaches_the_responder() {
        let mut c = cert("jsmith", 7);
        c.not_after = NaiveDate::from_ymd_opt(2026, 5, 31).unwrap();
        let registry = registry_with("jsmith", None, None);
        let mut responder = StatusResponder::new();
        responder.register_certificate(&c);
        let authn = authenticator();
        let log = AuditLog::in_memory();

        let denial = authn
            .authenticate_production(&c, &c.proof_token, &responder, &registry, &log)
            .unwrap_err();
        assert_eq!(denial, AuthDenial::ExpiredCertificate);
        assert_eq!(responder.query_count(), 0, "local validity must precede the status request");
    }

    #[test]
    fn not_yet_valid_certificate_never_reaches_the_responder() {
        let mut c = cert("jsmith", 7);
        c.not_before = NaiveDate::from_ymd_opt(2026, 7, 1).unwrap();
        let registry = registry_with("jsmith", None, None);
        let responder = StatusResponder::new();
        let authn = authenticator();
        let log = AuditLog::in_memory();

        let denial = authn
            .authenticate_production(&c, &c.proof_token, &responder, &registry, &log)
            .unwrap_err();
        assert_eq!(denial, AuthDenial::NotYetValid);
        assert_eq!(responder.query_count(), 0);
    }

    #[test]
    fn unknown_issuer_and_proof_mismatch_are_denied_in_order() {
        let c = cert("jsmith", 7);
        let registry = registry_with("jsmith", None, None);
        let responder = StatusResponder::new(); // issuer never registered
        let authn = authenticator();
        let log = AuditLog::in_memory();

        assert_eq!(
            authn.authenticate_production(&c, &c.proof_token, &responder, &registry, &log),
            Err(AuthDenial::UnknownIssuer)
        );

        let mut responder = StatusResponder::new();
        responder.register_certificate(&c);
        assert_eq!(
            authn.authenticate_production(&c, "wrong-proof", &responder, &registry, &log),
            Err(AuthDenial::ProofMismatch)
        );
    }

    #[test]
    fn valid_cert_without_active_registry_account_is_denied() {
        let c = cert("ghost", 9);
        let registry = ResourceEndpoint::new(ResourceId::AccessRegistry);
        let mut responder = StatusResponder::new();
        responder.register_certificate(&c);
        let authn = authenticator();
        let log = AuditLog::in_memory();

        assert_eq!(
            authn.authenticate_production(&c, &c.proof_token, &responder, &registry, &log),
            Err(AuthDenial::NoRegistryAccount)
        );
    }

    #[test]
    fn nonproduction_accepts_exact_match_and_rejects_one_field_difference() {
        let c = cert("jsmith", 7);
        let registry = registry_with("jsmith", Some(&c), None);
        let authn = authenticator();
        let log = AuditLog::in_memory();

        assert!(authn.authenticate_nonproduction(&c, &c.proof_token, &registry, &log).is_ok());

        let mut presented = c.clone();
        presented.subject_email = "evil@alpha.example".to_string();
        assert_eq!(
            authn.authenticate_nonproduction(&presented, &presented.proof_token, &registry, &log),
            Err(AuthDenial::CertificateMismatch)
        );
    }

    #[test]
    fn nonproduction_denies_suspended_accounts_even_with_matching_cert() {
        let c = cert("jsmith", 7);
        let mut registry = registry_with("jsmith", Some(&c), None);
        registry.suspend_account(&PersonId::new("jsmith")).unwrap();
        let authn = authenticator();
        let log = AuditLog::in_memory();

        assert_eq!(
            authn.authenticate_nonproduction(&c, &c.proof_token, &registry, &log),
            Err(AuthDenial::AccountSuspended)
        );
    }

    #[test]
    fn nonproduction_requires_a_registry_account() {
        let c = cert("ghost", 3);
        let registry = ResourceEndpoint::new(ResourceId::AccessRegistry);
        let authn = authenticator();
        let log = AuditLog::in_memory();
        assert_eq!(
            authn.authenticate_nonproduction(&c, &c.proof_token, &registry, &log),
            Err(AuthDenial::NoRegistryAccount)
        );
    }

    #[test]
    fn password_success_resets_the_counter() {
        let registry = registry_with("jsmith", None, Some("hunter2"));
        let authn = authenticator();
        let log = AuditLog::in_memory();
        let person = PersonId::new("jsmith");

        assert!(authn.authenticate_password(&person, "wrong", &registry, &log).is_err());
        assert!(authn.authenticate_password(&person, "wrong", &registry, &log).is_err());
        assert_eq!(authn.failure_count(&person), 2);
        assert!(authn.authenticate_password(&person, "hunter2", &registry, &log).is_ok());
        assert_eq!(authn.failure_count(&person), 0);
    }

    #[test]
    fn lockout_trips_after_exactly_max_failures_and_expires_on_the_clock() {
        let registry = registry_with("jsmith", None, Some("hunter2"));
        let clock = clock();
        let authn = Authenticator::new(AuthPolicy::default(), clock.clone());
        let log = AuditLog::in_memory();
        let person = PersonId::new("jsmith");

        for _ in 0..5 {
            assert_eq!(
                authn.authenticate_password(&person, "wrong", &registry, &log),
                Err(AuthDenial::BadCredentials)
            );
        }
        // Sixth attempt is locked out even with the correct password.
        assert!(matches!(
            authn.authenticate_password(&person, "hunter2", &registry, &log),
            Err(AuthDenial::LockedOut { .. })
        ));

        clock.advance_secs(901);
        assert!(authn.authenticate_password(&person, "hunter2", &registry, &log).is_ok());
    }

    #[test]
    fn mfa_issues_a_session_when_all_required_factors_pass() {
        let authn = authenticator();
        let log = AuditLog::in_memory();
        let person = PersonId::new("jsmith");
        let cert_grant = Ok(FactorGrant {
            factor: AuthFactor::Certificate,
            person_id: person.clone(),
            certificate_serial: Some(1),
        });
        let pw_grant = Ok(FactorGrant {
            factor: AuthFactor::Password,
            person_id: person.clone(),
            certificate_serial: None,
        });

        let session = authn
            .mfa_authenticate(
                &[(AuthFactor::Certificate, cert_grant), (AuthFactor::Password, pw_grant)],
                &log,
            )
            .unwrap();
        assert_eq!(session.person_id, person);
        assert_eq!(
            session.factors_satisfied,
            [AuthFactor::Certificate, AuthFactor::Password].into()
        );
        assert!(authn.validate_session(&session).is_ok());
    }

    #[test]
    fn mfa_reports_the_missing_factor() {
        let authn = authenticator();
        let log = AuditLog::in_memory();
        let person = PersonId::new("jsmith");
        let cert_grant = Ok(FactorGrant {
            factor: AuthFactor::Certificate,
            person_id: person.clone(),
            certificate_serial: Some(1),
        });
        let locked = Err(AuthDenial::LockedOut { until: clock().now() });

        assert_eq!(
            authn.mfa_authenticate(
                &[(AuthFactor::Certificate, cert_grant), (AuthFactor::Password, locked)],
                &log
            ),
            Err(AuthDenial::MissingFactor(AuthFactor::Password))
        );
    }

    #[test]
    fn mfa_rejects_factors_for_different_persons() {
        let authn = authenticator();
        let log = AuditLog::in_memory();
        let a = Ok(FactorGrant {
            factor: AuthFactor::Certificate,
            person_id: PersonId::new("alice"),
            certificate_serial: Some(1),
        });
        let b = Ok(FactorGrant {
            factor: AuthFactor::Password,
            person_id: PersonId::new("bob"),
            certificate_serial: None,
        });
        assert_eq!(
            authn.mfa_authenticate(&[(AuthFactor::Certificate, a), (AuthFactor::Password, b)], &log),
            Err(AuthDenial::FactorMismatch)
        );
    }

    #[test]
    fn publish_before_and_after_flips_the_same_certificate() {
        let c = cert("jsmith", 7);
        let registry = registry_with("jsmith", None, None);
        let mut responder = StatusResponder::new();
        responder.register_certificate(&c);
        let authn = authenticator();
        let log = AuditLog::in_memory();

        assert!(authn
            .authenticate_production(&c, &c.proof_token, &responder, &registry, &log)
            .is_ok());
        responder.publish_revocation(7, RevocationReason::Compromised, &clock()).unwrap();
        assert!(matches!(
            authn.authenticate_production(&c, &c.proof_token, &responder, &registry, &log),
            Err(AuthDenial::Revoked { serial: 7, .. })
        ));
    }

    #[test]
    fn publishing_twice_is_idempotent_with_a_single_entry() {
        let c = cert("jsmith", 7);
        let mut responder = StatusResponder::new();
        responder.register_certificate(&c);
        let v1 = responder.publish_revocation(7, RevocationReason::Compromised, &clock()).unwrap().version;
        let list = responder.publish_revocation(7, RevocationReason::Compromised, &clock()).unwrap();
        assert_eq!(list.version, v1);
        assert_eq!(list.entries.len(), 1);
        assert_eq!(responder.state().history.len(), 1);
    }

    #[test]
    fn unknown_serial_cannot_be_revoked() {
        let mut responder = StatusResponder::new();
        assert_eq!(
            responder.publish_revocation(99, RevocationReason::Unspecified, &clock()),
            Err(RevocationError::UnknownSerial(99))
        );
    }

    #[test]
    fn concurrent_attempts_observe_exactly_max_failures_before_lockout() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        use std::sync::Arc;

        let registry = Arc::new(registry_with("jsmith", None, Some("pw")));
        let authn = Arc::new(authenticator());
        let log = Arc::new(AuditLog::in_memory());
        let bad = Arc::new(AtomicUsize::new(0));
        let locked = Arc::new(AtomicUsize::new(0));

        let mut handles = Vec::new();
        for _ in 0..8 {
            let (registry, authn, log, bad, locked) = (
                Arc::clone(&registry),
                Arc::clone(&authn),
                Arc::clone(&log),
                Arc::clone(&bad),
                Arc::clone(&locked),
            );
            handles.push(std::thread::spawn(move || {
                for _ in 0..3 {
                    match authn.authenticate_password(&PersonId::new("jsmith"), "wrong", &registry, &log)
                    {
                        Err(AuthDenial::BadCredentials) => bad.fetch_add(1, Ordering::SeqCst),
                        Err(AuthDenial::LockedOut { .. }) => locked.fetch_add(1, Ordering::SeqCst),
                        other => panic!("unexpected {other:?}"),
                    };
                }
            }));
        }
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(bad.load(Ordering::SeqCst), 5, "exactly max_failed_attempts failures observed");
        assert_eq!(locked.load(Ordering::SeqCst), 24 - 5);
    }

    #[test]
    fn no_session_is_issued_for_a_revoked_serial() {
        let c = cert("jsmith", 7);
        let registry = registry_with("jsmith", None, None);
        let mut responder = StatusResponder::new();
        responder.register_certificate(&c);
        responder.publish_revocation(7, RevocationReason::Compromised, &clock()).unwrap();
        let authn = authenticator();
        let log = AuditLog::in_memory();

        let result =
            authn.authenticate_production(&c, &c.proof_token, &responder, &registry, &log);
        let session = authn.mfa_authenticate_with(
            &[(AuthFactor::Certificate, result)],
            &[AuthFactor::Certificate].into(),
            &log,
        );
        assert!(session.is_err());
        assert!(authn.sessions_snapshot().is_empty(), "no session may carry a revoked serial");
    }

    #[test]
    fn per_application_factor_requirements() {
        use crate::identity::ResourceId::*;
        assert_eq!(AuthPolicy::required_factors_for(LearningPlatform), [AuthFactor::Password].into());
        assert_eq!(
            AuthPolicy::required_factors_for(StudentPortal),
            [AuthFactor::Certificate, AuthFactor::Password].into()
        );
    }

    #[test]
    fn sessions_expire_on_the_injected_clock() {
        let clock = clock();
        let authn = Authenticator::new(AuthPolicy::default(), clock.clone());
        let session = authn.issue_session(PersonId::new("jsmith"), BTreeSet::new());
        assert!(authn.validate_session(&session).is_ok());
        clock.advance_secs(3601);
        assert_eq!(authn.validate_session(&session), Err(AuthDenial::SessionInvalid));
    }

    proptest! {
        // Tampering with any client-held field of a session never
        // yields a valid session.
        #[test]
        fn tampered_sessions_are_never_valid(
            field in 0usize..4,
            garbage in "[a-z0-9]{1,12}",
            offset in 1i64..100_000,
        ) {
            let authn = authenticator();
            let session = authn.issue_session(PersonId::new("jsmith"), BTreeSet::new());
            let mut tampered = session.clone();
            match field {
                0 => tampered.session_id = garbage.clone(),
                1 => tampered.person_id = PersonId::new(garbage.clone()),
                2 => tampered.expires_at = tampered.expires_at + chrono::Duration::seconds(offset),
                _ => { tampered.factors_satisfied = [AuthFactor::Certificate].into(); }
            }
            if tampered != session {
                prop_assert_eq!(authn.validate_session(&tampered), Err(AuthDenial::SessionInvalid));
            }
        }

        // The count of consecutive failures observed before the first
        // LockedOut result is exactly the policy maximum.
        #[test]
        fn lockout_threshold_is_exact(max in 1u32..8) {
            let registry = registry_with("jsmith", None, Some("pw"));
            let policy = AuthPolicy { max_failed_attempts: max, ..AuthPolicy::default() };
            let authn = Authenticator::new(policy, clock());
            let log = AuditLog::in_memory();
            let person = PersonId::new("jsmith");

            let mut failures = 0u32;
            loop {
                match authn.authenticate_password(&person, "wrong", &registry, &log) {
                    Err(AuthDenial::BadCredentials) => failures += 1,
                    Err(AuthDenial::LockedOut { .. }) => break,
                    other => prop_assert!(false, "unexpected result {:?}", other),
                }
                prop_assert!(failures <= max, "lockout came too late");
            }
            prop_assert_eq!(failures, max);
        }
    }
}
