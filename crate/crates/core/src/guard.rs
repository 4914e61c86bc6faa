//! Input hardening for the registry search path and object access:
//! injection-safe filter construction, default-deny object references,
//! and the encrypted-at-rest contract for sensitive fields.

use std::collections::{BTreeMap, BTreeSet};

use aes_siv::siv::Aes128Siv;
use aes_siv::KeyInit;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::admin::GroupTable;
use crate::authn::{Authenticator, Session};
use crate::identity::{PersonId, ResourceId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GuardError {
    #[error("attribute {0:?} is not searchable")]
    UnknownAttribute(String),
    #[error("field authentication failed (wrong key or tampered ciphertext)")]
    AuthenticationFailure,
    #[error("protection key must be non-empty")]
    EmptyKey,
}

/// Escape a raw value for inclusion in a rendered search filter.
///
/// `*`, `(`, `)`, `\` and NUL become their two-hex-digit escape forms
/// (`\2a`, `\28`, `\29`, `\5c`, `\00`); everything else passes through.
/// Deterministic and injective: distinct inputs never collide, because
/// every backslash in the output was produced by the escaper itself.
pub fn escape_filter_value(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for c in raw.chars() {
        match c {
            '*' => out.push_str(r"\2a"),
            '(' => out.push_str(r"\28"),
            ')' => out.push_str(r"\29"),
            '\\' => out.push_str(r"\5c"),
            '\0' => out.push_str(r"\00"),
            other => out.push(other),
        }
    }
    out
}

/// Escape text for inclusion in HTML report output. Covers the five
/// significant characters; used by the compliance report emitter.
pub fn html_escape(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for c in raw.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#x27;"),
            other => out.push(other),
        }
    }
    out
}

/// Attributes the registry accepts in search filters.
pub const SEARCHABLE_ATTRIBUTES: [&str; 3] = ["uid", "email", "cn"];

/// A structured search filter. Values are held as data and only pass
/// through [`escape_filter_value`] at render time, never by string
/// concatenation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SearchFilter {
    Equals { attribute: String, value: String },
    Presence { attribute: String },
    And(Vec<SearchFilter>),
    Or(Vec<SearchFilter>),
}

impl SearchFilter {
    /// Render to the wire form consumed by the registry's filter
    /// evaluator. The single place where values become filter text.
    pub fn render(&self) -> String {
        match self {
            SearchFilter::Equals { attribute, value } => {
                format!("({}={})", attribute, escape_filter_value(value))
            }
            SearchFilter::Presence { attribute } => format!("({attribute}=*)"),
            SearchFilter::And(children) => {
                let inner: String = children.iter().map(|c| c.render()).collect();
                format!("(&{inner})")
            }
            SearchFilter::Or(children) => {
                let inner: String = children.iter().map(|c| c.render()).collect();
                format!("(|{inner})")
            }
        }
    }
}

/// Build an equality filter for a whitelisted attribute, holding the raw
/// value as data.
pub fn build_search_filter(attribute: &str, raw_value: &str) -> Result<SearchFilter, GuardError> {
    if !SEARCHABLE_ATTRIBUTES.contains(&attribute) {
        return Err(GuardError::UnknownAttribute(attribute.to_string()));
    }
    Ok(SearchFilter::Equals { attribute: attribute.to_string(), value: raw_value.to_string() })
}

// ---------------------------------------------------------------------------
// Default-deny object access
// ---------------------------------------------------------------------------

/// A server-side object reference: a resource and a path on it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObjectRef {
    pub resource: ResourceId,
    pub path: String,
}

impl ObjectRef {
    pub fn new(resource: ResourceId, path: impl Into<String>) -> Self {
        ObjectRef { resource, path: path.into() }
    }
}

/// Who an access-control entry grants: a person directly, or everyone in
/// an application group.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Grantee {
    Person(PersonId),
    Group { application: ResourceId, group: String },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AclEntry {
    pub object: ObjectRef,
    pub grantee: Grantee,
}

/// Explicit grants. Anything not listed is denied.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessControlList {
    entries: BTreeSet<AclEntry>,
}

impl AccessControlList {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn grant(&mut self, object: ObjectRef, grantee: Grantee) {
        self.entries.insert(AclEntry { object, grantee });
    }

    pub fn entries(&self) -> impl Iterator<Item = &AclEntry> {
        self.entries.iter()
    }
}

/// Indirect reference map: opaque handles exposed to clients, resolved
/// server-side. Raw paths, file names, and keys never leave the server.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectHandleMap {
    handles: BTreeMap<String, ObjectRef>,
}

impl ObjectHandleMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register an object and return its opaque handle.
    pub fn register(&mut self, object: ObjectRef) -> String {
        let mut hasher = Sha256::new();
        hasher.update(object.resource.wire_name().as_bytes());
        hasher.update([0u8]);
        hasher.update(object.path.as_bytes());
        let digest = hasher.finalize();
        let handle = format!("obj-{}", hex_prefix(&digest, 12));
        self.handles.insert(handle.clone(), object);
        handle
    }

    pub fn resolve(&self, handle: &str) -> Option<&ObjectRef> {
        self.handles.get(handle)
    }
}

fn hex_prefix(bytes: &[u8], chars: usize) -> String {
    let mut out = String::new();
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
        if out.len() >= chars {
            break;
        }
    }
    out.truncate(chars);
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DenyReason {
    SessionInvalid,
    NoGrant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessDecision {
    Allow,
    Deny(DenyReason),
}

impl AccessDecision {
    pub fn is_allow(&self) -> bool {
        matches!(self, AccessDecision::Allow)
    }
}

/// Decide object access for a presented session.
///
/// Deny unless an explicit entry grants the session's person — directly
/// or through group membership — access to the object. Evaluated per
/// request from current state; nothing is cached. Session validity is
/// decided by the server-side session table alone.
pub fn check_object_access(
    authn: &Authenticator,
    session: &Session,
    object: &ObjectRef,
    acl: &AccessControlList,
    groups: &GroupTable,
) -> AccessDecision {
    if authn.validate_session(session).is_err() {
        return AccessDecision::Deny(DenyReason::SessionInvalid);
    }
    for entry in acl.entries() {
        if &entry.object != object {
            continue;
        }
        match &entry.grantee {
            Grantee::Person(person) if person == &session.person_id => {
                return AccessDecision::Allow;
            }
            Grantee::Group { application, group } => {
                if groups.is_member(*application, group, &session.person_id) {
                    return AccessDecision::Allow;
                }
            }
            _ => {}
        }
    }
    AccessDecision::Deny(DenyReason::NoGrant)
}

// ---------------------------------------------------------------------------
// Encrypted-at-rest fields
// ---------------------------------------------------------------------------

/// Scheme tag for the current protection construction.
pub const PROTECTION_SCHEME: &str = "aes-siv-128";

/// A named field stored under authenticated encryption. The field name is
/// bound into the authentication tag, so ciphertexts cannot be swapped
/// between fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtectedField {
    pub name: String,
    pub scheme: String,
    /// Base64 of the SIV-prefixed ciphertext.
    pub ciphertext: String,
}

/// A symmetric protection key derived from a passphrase.
#[derive(Clone)]
pub struct FieldKey {
    key: [u8; 32],
}

impl FieldKey {
    /// Derive a key from a non-empty passphrase.
    pub fn derive(passphrase: &str) -> Result<Self, GuardError> {
        if passphrase.is_empty() {
            return Err(GuardError::EmptyKey);
        }
        let mut hasher = Sha256::new();
        hasher.update(b"idfabric-field-key-v1");
        hasher.update(passphrase.as_bytes());
        let digest = hasher.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        Ok(FieldKey { key })
    }
}

impl std::fmt::Debug for FieldKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("FieldKey(..)")
    }
}

/// Encrypt a field value under the key. AES-SIV is deterministic for a
/// given (key, name, plaintext), which keeps snapshot files reproducible,
/// and authenticated, so tampering or a wrong key fails closed.
pub fn protect_field(
    name: &str,
    plaintext: &str,
    key: &FieldKey,
) -> Result<ProtectedField, GuardError> {
    let mut cipher = Aes128Siv::new(&key.key.into());
    let ciphertext = cipher
        .encrypt([name.as_bytes()], plaintext.as_bytes())
        .map_err(|_| GuardError::AuthenticationFailure)?;
    debug_assert!(plaintext.is_empty() || ciphertext != plaintext.as_bytes());
    Ok(ProtectedField {
        name: name.to_string(),
        scheme: PROTECTION_SCHEME.to_string(),
        ciphertext: base64::engine::general_purpose::STANDARD.encode(ciphertext),
    })
}

/// Decrypt a protected field. Fails with [`GuardError::AuthenticationFailure`]
/// on a wrong key, a tampered ciphertext, or a mismatched field name.
pub fn unprotect_field(field: &ProtectedField, key: &FieldKey) -> Result<String, GuardError> {
    let ciphertext = base64::engine::general_purpose::STANDARD
        .decode(&field.ciphertext)
        .map_err(|_| GuardError::AuthenticationFailure)?;
    let mut cipher = Aes128Siv::new(&key.key.into());
    let plaintext = cipher
        .decrypt([field.name.as_bytes()], &ciphertext)
        .map_err(|_| GuardError::AuthenticationFailure)?;
    String::from_utf8(plaintext).map_err(|_| GuardError::AuthenticationFailure)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wildcard_becomes_a_literal() {
        assert_eq!(escape_filter_value("*"), r"\2a");
    }

    #[test]
    fn the_password_reveal_payload_is_fully_neutralized() {
        assert_eq!(
            escape_filter_value("admin) (| (password = *))"),
            r"admin\29 \28| \28password = \2a\29\29"
        );
    }

    #[test]
    fn benign_values_pass_through() {
        assert_eq!(escape_filter_value("jsmith"), "jsmith");
    }

    #[test]
    fn backslashes_are_escaped_first_class() {
        assert_eq!(escape_filter_value(r"a\2a"), r"a\5c2a");
    }

    #[test]
    fn build_filter_holds_the_raw_value_as_data() {
        let filter = build_search_filter("uid", "admin) (| (password = *))").unwrap();
        match &filter {
            SearchFilter::Equals { attribute, value } => {
                assert_eq!(attribute, "uid");
                assert_eq!(value, "admin) (| (password = *))");
            }
            other => panic!("unexpected filter {other:?}"),
        }
        assert_eq!(filter.render(), r"(uid=admin\29 \28| \28password = \2a\29\29)");
    }

    #[test]
    fn non_whitelisted_attribute_is_rejected() {
        assert_eq!(
            build_search_filter("telephone", "x").unwrap_err(),
            GuardError::UnknownAttribute("telephone".to_string())
        );
    }

    #[test]
    fn protect_round_trips_and_hides_the_plaintext() {
        let key = FieldKey::derive("passphrase").unwrap();
        let field = protect_field("ssn", "123-45-6789", &key).unwrap();
        assert_eq!(field.scheme, PROTECTION_SCHEME);
        assert!(!field.ciphertext.contains("123-45-6789"));
        assert_eq!(unprotect_field(&field, &key).unwrap(), "123-45-6789");
    }

    #[test]
    fn wrong_key_fails_authentication() {
        let key = FieldKey::derive("right").unwrap();
        let field = protect_field("ssn", "123-45-6789", &key).unwrap();
        let wrong = FieldKey::derive("wrong").unwrap();
        assert_eq!(unprotect_field(&field, &wrong).unwrap_err(), GuardError::AuthenticationFailure);
    }

    #[test]
    fn swapped_field_name_fails_authentication() {
        let key = FieldKey::derive("k").unwrap();
        let mut field = protect_field("ssn", "123-45-6789", &key).unwrap();
        field.name = "phone".to_string();
        assert_eq!(unprotect_field(&field, &key).unwrap_err(), GuardError::AuthenticationFailure);
    }

    #[test]
    fn tampered_ciphertext_fails_authentication() {
        let key = FieldKey::derive("k").unwrap();
        let field = protect_field("ssn", "123-45-6789", &key).unwrap();
        let mut bytes = base64::engine::general_purpose::STANDARD.decode(&field.ciphertext).unwrap();
        bytes[0] ^= 0x01;
        let tampered = ProtectedField {
            ciphertext: base64::engine::general_purpose::STANDARD.encode(bytes),
            ..field
        };
        assert_eq!(unprotect_field(&tampered, &key).unwrap_err(), GuardError::AuthenticationFailure);
    }

    #[test]
    fn empty_passphrase_is_rejected() {
        assert_eq!(FieldKey::derive("").unwrap_err(), GuardError::EmptyKey);
    }

    #[test]
    fn protection_is_deterministic_for_snapshot_stability() {
        let key = FieldKey::derive("k").unwrap();
        let a = protect_field("ssn", "123-45-6789", &key).unwrap();
        let b = protect_field("ssn", "123-45-6789", &key).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn html_escape_covers_the_five_characters() {
        assert_eq!(html_escape(r#"<a href="x">&'"#), "&lt;a href=&quot;x&quot;&gt;&amp;&#x27;");
    }

    #[test]
    fn handles_are_opaque_and_resolvable() {
        let mut map = ObjectHandleMap::new();
        let object = ObjectRef::new(ResourceId::StudentPortal, "/transcripts/S1");
        let handle = map.register(object.clone());
        assert!(!handle.contains("transcripts"));
        assert_eq!(map.resolve(&handle), Some(&object));
        assert_eq!(map.resolve("obj-ffffffffffff"), None);
    }

    mod object_access {
        use super::*;
        use crate::admin::{Group, GroupTable};
        use crate::authn::{AuthPolicy, Authenticator};
        use crate::clock::Clock;
        use crate::identity::PersonId;
        use chrono::{TimeZone, Utc};

        fn setup() -> (Authenticator, Clock) {
            let clock = Clock::fixed(Utc.with_ymd_and_hms(2026, 6, 1, 10, 0, 0).unwrap());
            (Authenticator::new(AuthPolicy::default(), clock.clone()), clock)
        }

        fn transcript(owner: &str) -> ObjectRef {
            ObjectRef::new(ResourceId::StudentPortal, format!("/transcripts/{owner}"))
        }

        #[test]
        fn empty_acl_denies_every_request() {
            let (authn, _clock) = setup();
            let session = authn.issue_session(PersonId::new("S1"), Default::default());
            let decision = check_object_access(
                &authn,
                &session,
                &transcript("S1"),
                &AccessControlList::new(),
                &GroupTable::new(),
            );
            assert_eq!(decision, AccessDecision::Deny(DenyReason::NoGrant));
        }

        #[test]
        fn direct_grant_allows_the_grantee_only() {
            let (authn, _clock) = setup();
            let s1 = authn.issue_session(PersonId::new("S1"), Default::default());
            let s2 = authn.issue_session(PersonId::new("S2"), Default::default());
            let mut acl = AccessControlList::new();
            acl.grant(transcript("S1"), Grantee::Person(PersonId::new("S1")));

            let groups = GroupTable::new();
            assert!(check_object_access(&authn, &s1, &transcript("S1"), &acl, &groups).is_allow());
            assert_eq!(
                check_object_access(&authn, &s2, &transcript("S1"), &acl, &groups),
                AccessDecision::Deny(DenyReason::NoGrant)
            );
        }

        #[test]
        fn group_grant_follows_membership() {
            let (authn, _clock) = setup();
            let session = authn.issue_session(PersonId::new("S1"), Default::default());
            let mut acl = AccessControlList::new();
            acl.grant(
                transcript("S1"),
                Grantee::Group { application: ResourceId::StudentPortal, group: "advisors".into() },
            );

            let mut groups = GroupTable::new();
            assert!(
                !check_object_access(&authn, &session, &transcript("S1"), &acl, &groups).is_allow()
            );
            let mut advisors = Group::default();
            advisors.members.insert(PersonId::new("S1"), "member".to_string());
            groups.put_group_unchecked(ResourceId::StudentPortal, "advisors", advisors);
            assert!(
                check_object_access(&authn, &session, &transcript("S1"), &acl, &groups).is_allow()
            );
        }

        #[test]
        fn expired_session_is_denied_despite_a_matching_entry() {
            let (authn, clock) = setup();
            let session = authn.issue_session(PersonId::new("S1"), Default::default());
            let mut acl = AccessControlList::new();
            acl.grant(transcript("S1"), Grantee::Person(PersonId::new("S1")));
            clock.advance_secs(7200);
            assert_eq!(
                check_object_access(&authn, &session, &transcript("S1"), &acl, &GroupTable::new()),
                AccessDecision::Deny(DenyReason::SessionInvalid)
            );
        }

        proptest! {
            // Default deny over random ACLs: exactly the granted
            // (person, object) pairs pass, nothing else.
            #[test]
            fn random_acls_grant_exactly_their_entries(
                grants in proptest::collection::btree_set((0u8..5, 0u8..5), 0..12),
                queries in proptest::collection::vec((0u8..5, 0u8..5), 0..24),
            ) {
                let (authn, _clock) = setup();
                let mut acl = AccessControlList::new();
                for (person, object) in &grants {
                    acl.grant(
                        transcript(&format!("S{object}")),
                        Grantee::Person(PersonId::new(format!("P{person}"))),
                    );
                }
                let groups = GroupTable::new();
                for (person, object) in queries {
                    let session =
                        authn.issue_session(PersonId::new(format!("P{person}")), Default::default());
                    let decision = check_object_access(
                        &authn,
                        &session,
                        &transcript(&format!("S{object}")),
                        &acl,
                        &groups,
                    );
                    prop_assert_eq!(decision.is_allow(), grants.contains(&(person, object)));
                }
            }
        }
    }

    proptest! {
        // Distinct raw strings never collide after escaping.
        #[test]
        fn escaping_is_injective(a in ".*", b in ".*") {
            if a != b {
                prop_assert_ne!(escape_filter_value(&a), escape_filter_value(&b));
            }
        }

        #[test]
        fn protect_unprotect_round_trips(value in ".*") {
            let key = FieldKey::derive("fuzz").unwrap();
            let field = protect_field("f", &value, &key).unwrap();
            prop_assert_eq!(unprotect_field(&field, &key).unwrap(), value);
        }
    }
}
