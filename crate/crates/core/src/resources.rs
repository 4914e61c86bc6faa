//! Five simulated managed resources behind one uniform administration
//! interface, with fault injection and the privileged-connection gate.
//!
//! Every mutation requires a privileged, channel-secure connection and is
//! idempotent: creating an account that already exists with equal
//! attributes, suspending a suspended account, or deleting an absent one
//! are all no-op successes. The registry endpoint additionally evaluates
//! search filters and stores per-account credentials for the
//! authentication flows.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::authn::Certificate;
use crate::identity::{PersonId, ResourceId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResourceError {
    #[error("resource is down")]
    ResourceDown,
    #[error("mutation over an insecure channel")]
    InsecureChannel,
    #[error("mutation requires a privileged connection")]
    PrivilegeRequired,
    #[error("account exists with different attributes")]
    AttributeConflict,
    #[error("invalid search filter: {0}")]
    InvalidFilter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccountState {
    Active,
    Suspended,
}

impl std::fmt::Display for AccountState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AccountState::Active => "active",
            AccountState::Suspended => "suspended",
        })
    }
}

/// One account on one managed resource. At most one per
/// (person, resource).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Account {
    pub person_id: PersonId,
    pub resource: ResourceId,
    pub state: AccountState,
    pub attributes: BTreeMap<String, String>,
    /// Enrolled certificate, registry accounts only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stored_certificate: Option<Certificate>,
    /// Salted password hash, registry accounts only. Never a plaintext
    /// password-equivalent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub password_hash: Option<String>,
}

/// Fault injection modes for an endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultMode {
    Healthy,
    Down,
    /// The first mutation fails, then every nth after it: with
    /// `fail_every_nth = 2` the 1st and 3rd calls fail and the 2nd and
    /// 4th succeed.
    Intermittent { fail_every_nth: u32 },
}

/// The administration connection into an endpoint. Mutations require both
/// flags; reads only require the endpoint to be up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Connection {
    pub privileged: bool,
    pub channel_secure: bool,
}

impl Default for Connection {
    fn default() -> Self {
        Connection { privileged: true, channel_secure: true }
    }
}

/// Whether a mutation changed anything. Idempotent replays report
/// `Noop`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MutationOutcome {
    Applied,
    Noop,
}

/// A simulated managed resource endpoint.
///
/// The two counters are runtime diagnostics: they are not part of the
/// endpoint's state for equality or persistence (the audit log is the
/// durable record of attempts).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResourceEndpoint {
    id: ResourceId,
    accounts: BTreeMap<PersonId, Account>,
    fault_mode: FaultMode,
    #[serde(skip)]
    intermittent_calls: u64,
    connection: Connection,
    /// Count of mutation attempts that reached this endpoint, successful
    /// or not. Cross-checked against the audit log by the conservation
    /// tests.
    #[serde(skip)]
    mutation_attempts: u64,
}

impl PartialEq for ResourceEndpoint {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.accounts == other.accounts
            && self.fault_mode == other.fault_mode
            && self.connection == other.connection
    }
}

impl Eq for ResourceEndpoint {}

impl ResourceEndpoint {
    pub fn new(id: ResourceId) -> Self {
        ResourceEndpoint {
            id,
            accounts: BTreeMap::new(),
            fault_mode: FaultMode::Healthy,
            intermittent_calls: 0,
            connection: Connection::default(),
            mutation_attempts: 0,
        }
    }

    pub fn id(&self) -> ResourceId {
        self.id
    }

    pub fn fault_mode(&self) -> FaultMode {
        self.fault_mode
    }

    pub fn connection(&self) -> Connection {
        self.connection
    }

    pub fn set_connection(&mut self, connection: Connection) {
        self.connection = connection;
    }

    pub fn mutation_attempts(&self) -> u64 {
        self.mutation_attempts
    }

    /// Switch the fault mode. Intermittent schedules restart from the
    /// injection point.
    pub fn inject_fault(&mut self, mode: FaultMode) {
        self.fault_mode = mode;
        self.intermittent_calls = 0;
    }

    fn mutation_gate(&mut self) -> Result<(), ResourceError> {
        self.mutation_attempts += 1;
        if !self.connection.channel_secure {
            return Err(ResourceError::InsecureChannel);
        }
        if !self.connection.privileged {
            return Err(ResourceError::PrivilegeRequired);
        }
        match self.fault_mode {
            FaultMode::Healthy => Ok(()),
            FaultMode::Down => Err(ResourceError::ResourceDown),
            FaultMode::Intermittent { fail_every_nth } => {
                let index = self.intermittent_calls;
                self.intermittent_calls += 1;
                let n = u64::from(fail_every_nth.max(1));
                if index % n == 0 {
                    Err(ResourceError::ResourceDown)
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Create an account in state `Active`. Repeating the call with equal
    /// attributes is a no-op success; differing attributes report a
    /// conflict for the caller to resolve via `set_attributes`.
    pub fn create_account(
        &mut self,
        person_id: &PersonId,
        attributes: &BTreeMap<String, String>,
    ) -> Result<MutationOutcome, ResourceError> {
        self.mutation_gate()?;
        if let Some(existing) = self.accounts.get(person_id) {
            if &existing.attributes == attributes {
                return Ok(MutationOutcome::Noop);
            }
            return Err(ResourceError::AttributeConflict);
        }
        self.accounts.insert(
            person_id.clone(),
            Account {
                person_id: person_id.clone(),
                resource: self.id,
                state: AccountState::Active,
                attributes: attributes.clone(),
                stored_certificate: None,
                password_hash: None,
            },
        );
        Ok(MutationOutcome::Applied)
    }

    /// Suspend an account. Already-suspended and absent accounts are
    /// no-op successes.
    pub fn suspend_account(&mut self, person_id: &PersonId) -> Result<MutationOutcome, ResourceError> {
        self.mutation_gate()?;
        match self.accounts.get_mut(person_id) {
            Some(account) if account.state == AccountState::Active => {
                account.state = AccountState::Suspended;
                Ok(MutationOutcome::Applied)
            }
            _ => Ok(MutationOutcome::Noop),
        }
    }

    /// Restore a suspended account to active. Already-active and absent
    /// accounts are no-op successes.
    pub fn restore_account(&mut self, person_id: &PersonId) -> Result<MutationOutcome, ResourceError> {
        self.mutation_gate()?;
        match self.accounts.get_mut(person_id) {
            Some(account) if account.state == AccountState::Suspended => {
                account.state = AccountState::Active;
                Ok(MutationOutcome::Applied)
            }
            _ => Ok(MutationOutcome::Noop),
        }
    }

    /// Delete an account. Deleting an absent account is a no-op success.
    pub fn delete_account(&mut self, person_id: &PersonId) -> Result<MutationOutcome, ResourceError> {
        self.mutation_gate()?;
        match self.accounts.remove(person_id) {
            Some(_) => Ok(MutationOutcome::Applied),
            None => Ok(MutationOutcome::Noop),
        }
    }

    /// Merge attributes into an existing account. Setting attributes on
    /// an absent account is a no-op success (reconciliation recreates
    /// missing accounts separately).
    pub fn set_attributes(
        &mut self,
        person_id: &PersonId,
        attributes: &BTreeMap<String, String>,
    ) -> Result<MutationOutcome, ResourceError> {
        self.mutation_gate()?;
        match self.accounts.get_mut(person_id) {
            Some(account) => {
                let before = account.attributes.clone();
                account.attributes.extend(attributes.iter().map(|(k, v)| (k.clone(), v.clone())));
                if account.attributes == before {
                    Ok(MutationOutcome::Noop)
                } else {
                    Ok(MutationOutcome::Applied)
                }
            }
            None => Ok(MutationOutcome::Noop),
        }
    }

    /// Enroll credentials on a registry account: certificate and/or
    /// password hash.
    pub fn set_credentials(
        &mut self,
        person_id: &PersonId,
        certificate: Option<Certificate>,
        password_hash: Option<String>,
    ) -> Result<MutationOutcome, ResourceError> {
        self.mutation_gate()?;
        match self.accounts.get_mut(person_id) {
            Some(account) => {
                if certificate.is_some() {
                    account.stored_certificate = certificate;
                }
                if password_hash.is_some() {
                    account.password_hash = password_hash;
                }
                Ok(MutationOutcome::Applied)
            }
            None => Ok(MutationOutcome::Noop),
        }
    }

    /// Point-in-time snapshot of all accounts. Readable without
    /// privilege, but not when the endpoint is down.
    pub fn list_accounts(&self) -> Result<Vec<Account>, ResourceError> {
        if self.fault_mode == FaultMode::Down {
            return Err(ResourceError::ResourceDown);
        }
        Ok(self.accounts.values().cloned().collect())
    }

    /// Direct table read used by engine planning and the authenticator.
    /// Unaffected by fault modes, which gate the administration surface.
    pub fn account(&self, person_id: &PersonId) -> Option<&Account> {
        self.accounts.get(person_id)
    }

    pub fn account_count(&self) -> usize {
        self.accounts.len()
    }

    /// Evaluate a rendered search filter against the account table.
    /// Escaped characters in filter values match literally; an unescaped
    /// `*` is a wildcard. Fails when the endpoint is down.
    pub fn search(&self, rendered_filter: &str) -> Result<Vec<&Account>, ResourceError> {
        if self.fault_mode == FaultMode::Down {
            return Err(ResourceError::ResourceDown);
        }
        let filter = filter_eval::parse(rendered_filter)
            .map_err(ResourceError::InvalidFilter)?;
        Ok(self.accounts.values().filter(|a| filter_eval::matches(&filter, a)).collect())
    }

    /// Insert a raw account row, bypassing the administration interface.
    /// For drills and compliance-test planting only: not gated, not
    /// counted, not audited.
    pub fn put_account_unchecked(&mut self, account: Account) {
        self.accounts.insert(account.person_id.clone(), account);
    }

    /// Remove a raw account row, bypassing the administration interface.
    pub fn remove_account_unchecked(&mut self, person_id: &PersonId) -> Option<Account> {
        self.accounts.remove(person_id)
    }
}

/// The five standard endpoints keyed by resource id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourcePool {
    endpoints: BTreeMap<ResourceId, ResourceEndpoint>,
}

impl ResourcePool {
    /// All five endpoints, healthy, with privileged secure connections.
    pub fn standard() -> Self {
        let endpoints =
            ResourceId::ALL.into_iter().map(|id| (id, ResourceEndpoint::new(id))).collect();
        ResourcePool { endpoints }
    }

    pub fn endpoint(&self, id: ResourceId) -> &ResourceEndpoint {
        &self.endpoints[&id]
    }

    pub fn endpoint_mut(&mut self, id: ResourceId) -> &mut ResourceEndpoint {
        self.endpoints.get_mut(&id).expect("standard pool has all endpoints")
    }

    pub fn iter(&self) -> impl Iterator<Item = &ResourceEndpoint> {
        self.endpoints.values()
    }

    /// Resources holding an account for the person, in id order.
    pub fn accounts_for(&self, person_id: &PersonId) -> Vec<&Account> {
        self.endpoints.values().filter_map(|e| e.account(person_id)).collect()
    }

    pub fn total_mutation_attempts(&self) -> u64 {
        self.endpoints.values().map(|e| e.mutation_attempts()).sum()
    }
}

impl Default for ResourcePool {
    fn default() -> Self {
        Self::standard()
    }
}

/// Parser and evaluator for the rendered search-filter language:
/// `(attr=value)`, `(attr=*)` presence, and `(&...)` / `(|...)`
/// combinators. This is the server side of the injection guard — values
/// escaped by the builder arrive here as literals.
mod filter_eval {
    use super::Account;

    #[derive(Debug, PartialEq, Eq)]
    pub enum Node {
        And(Vec<Node>),
        Or(Vec<Node>),
        Item { attribute: String, pattern: Vec<Segment> },
    }

    /// A parsed value pattern piece: literal text or a wildcard.
    #[derive(Debug, PartialEq, Eq)]
    pub enum Segment {
        Literal(String),
        Wildcard,
    }

    pub fn parse(input: &str) -> Result<Node, String> {
        let chars: Vec<char> = input.chars().collect();
        let (node, rest) = parse_filter(&chars, 0)?;
        if rest != chars.len() {
            return Err(format!("trailing input at {rest}"));
        }
        Ok(node)
    }

    fn parse_filter(chars: &[char], mut pos: usize) -> Result<(Node, usize), String> {
        if chars.get(pos) != Some(&'(') {
            return Err(format!("expected '(' at {pos}"));
        }
        pos += 1;
        match chars.get(pos) {
            Some('&') | Some('|') => {
                let is_and = chars[pos] == '&';
                pos += 1;
                let mut children = Vec::new();
                while chars.get(pos) == Some(&'(') {
                    let (child, next) = parse_filter(chars, pos)?;
                    children.push(child);
                    pos = next;
                }
                if chars.get(pos) != Some(&')') {
                    return Err(format!("expected ')' at {pos}"));
                }
                pos += 1;
                Ok((if is_and { Node::And(children) } else { Node::Or(children) }, pos))
            }
            _ => {
                let start = pos;
                while pos < chars.len() && chars[pos] != '=' && chars[pos] != ')' {
                    pos += 1;
                }
                if chars.get(pos) != Some(&'=') {
                    return Err(format!("expected '=' after attribute at {start}"));
                }
                let attribute: String = chars[start..pos].iter().collect();
                if attribute.is_empty()
                    || !attribute.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
                {
                    return Err(format!("invalid attribute name {attribute:?}"));
                }
                pos += 1;
                let mut pattern = Vec::new();
                let mut literal = String::new();
                while pos < chars.len() && chars[pos] != ')' {
                    match chars[pos] {
                        '*' => {
                            if !literal.is_empty() {
                                pattern.push(Segment::Literal(std::mem::take(&mut literal)));
                            }
                            pattern.push(Segment::Wildcard);
                            pos += 1;
                        }
                        '\\' => {
                            let hi = chars.get(pos + 1).ok_or("dangling escape")?;
                            let lo = chars.get(pos + 2).ok_or("dangling escape")?;
                            let byte = u8::from_str_radix(&format!("{hi}{lo}"), 16)
                                .map_err(|_| format!("bad escape at {pos}"))?;
                            literal.push(byte as char);
                            pos += 3;
                        }
                        '(' => return Err(format!("unescaped '(' in value at {pos}")),
                        c => {
                            literal.push(c);
                            pos += 1;
                        }
                    }
                }
                if !literal.is_empty() {
                    pattern.push(Segment::Literal(literal));
                }
                if chars.get(pos) != Some(&')') {
                    return Err(format!("expected ')' at {pos}"));
                }
                pos += 1;
                Ok((Node::Item { attribute, pattern }, pos))
            }
        }
    }

    pub fn matches(node: &Node, account: &Account) -> bool {
        match node {
            Node::And(children) => children.iter().all(|c| matches(c, account)),
            Node::Or(children) => children.iter().any(|c| matches(c, account)),
            Node::Item { attribute, pattern } => {
                let value = lookup(account, attribute);
                match value {
                    None => false,
                    Some(value) => pattern_matches(pattern, &value),
                }
            }
        }
    }

    fn lookup(account: &Account, attribute: &str) -> Option<String> {
        if let Some(v) = account.attributes.get(attribute) {
            return Some(v.clone());
        }
        // The registry always knows a uid even when the attribute was
        // never set explicitly.
        if attribute == "uid" {
            return Some(account.person_id.as_str().to_string());
        }
        None
    }

    fn pattern_matches(pattern: &[Segment], value: &str) -> bool {
        // Presence filter: a single bare wildcard.
        if pattern == [Segment::Wildcard] {
            return true;
        }
        if pattern.iter().all(|s| matches!(s, Segment::Literal(_))) {
            let literal: String = pattern
                .iter()
                .map(|s| match s {
                    Segment::Literal(l) => l.as_str(),
                    Segment::Wildcard => unreachable!(),
                })
                .collect();
            return literal == value;
        }
        glob_match(pattern, value)
    }

    fn glob_match(pattern: &[Segment], value: &str) -> bool {
        let mut remaining = value;
        let mut at_start = true;
        let mut iter = pattern.iter().peekable();
        while let Some(segment) = iter.next() {
            match segment {
                Segment::Wildcard => {
                    at_start = false;
                }
                Segment::Literal(lit) => {
                    if at_start {
                        if !remaining.starts_with(lit.as_str()) {
                            return false;
                        }
                        remaining = &remaining[lit.len()..];
                        at_start = false;
                    } else if iter.peek().is_none() {
                        // Final literal after a wildcard: must be a suffix.
                        return remaining.ends_with(lit.as_str());
                    } else {
                        match remaining.find(lit.as_str()) {
                            Some(idx) => remaining = &remaining[idx + lit.len()..],
                            None => return false,
                        }
                    }
                }
            }
        }
        // Pattern ended with a wildcard (or consumed everything exactly).
        matches!(pattern.last(), Some(Segment::Wildcard)) || remaining.is_empty()
    }
}
