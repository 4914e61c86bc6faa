//! Delegated administration of application groups: the role × action
//! permission matrix, scoped per application, and the group table it
//! governs.
//!
//! The decision table is deliberately literal: domain admins manage
//! group structure and delegate, application admins manage membership on
//! their own application only, senior application admins view broadly
//! and create group structure. Anything not explicitly granted is
//! denied.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audit::{detail, dv, Actor, AuditCategory, AuditLog, AuditOutcome};
use crate::authn::{Authenticator, Session};
use crate::clock::Clock;
use crate::identity::{PersonId, ResourceId};
use crate::resources::{AccountState, ResourcePool};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AdminError {
    #[error("permission denied: {0}")]
    PermissionDenied(String),
    #[error("unknown group {0:?}")]
    UnknownGroup(String),
    #[error("{0} has no active account on the application")]
    MemberLacksAccount(PersonId),
    #[error("malformed action: {0}")]
    MalformedAction(String),
    #[error("audit log unavailable; action not performed")]
    AuditUnavailable,
}

/// An administrative role. Application admins are scoped to exactly one
/// application.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdminRole {
    DomainAdmin,
    SeniorAppAdmin,
    AppAdmin(ResourceId),
}

impl std::fmt::Display for AdminRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AdminRole::DomainAdmin => f.write_str("domain_admin"),
            AdminRole::SeniorAppAdmin => f.write_str("senior_app_admin"),
            AdminRole::AppAdmin(app) => write!(f, "app_admin:{app}"),
        }
    }
}

/// The eight administrative verbs of the permission table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdminVerb {
    ManageApplicationGroups,
    AddMember,
    ModifyAccess,
    DeleteMember,
    CreateViewGroups,
    CreateViewSubGroups,
    AssignApplicationAdmin,
    ViewMembers,
}

impl AdminVerb {
    pub const ALL: [AdminVerb; 8] = [
        AdminVerb::ManageApplicationGroups,
        AdminVerb::AddMember,
        AdminVerb::ModifyAccess,
        AdminVerb::DeleteMember,
        AdminVerb::CreateViewGroups,
        AdminVerb::CreateViewSubGroups,
        AdminVerb::AssignApplicationAdmin,
        AdminVerb::ViewMembers,
    ];

    pub fn wire_name(self) -> &'static str {
        match self {
            AdminVerb::ManageApplicationGroups => "manage_application_groups",
            AdminVerb::AddMember => "add_member",
            AdminVerb::ModifyAccess => "modify_access",
            AdminVerb::DeleteMember => "delete_member",
            AdminVerb::CreateViewGroups => "create_view_groups",
            AdminVerb::CreateViewSubGroups => "create_view_sub_groups",
            AdminVerb::AssignApplicationAdmin => "assign_application_admin",
            AdminVerb::ViewMembers => "view_members",
        }
    }

    pub fn from_wire(name: &str) -> Option<AdminVerb> {
        AdminVerb::ALL.into_iter().find(|v| v.wire_name() == name)
    }

    /// Membership verbs carry a member; the others must not.
    pub fn takes_member(self) -> bool {
        matches!(self, AdminVerb::AddMember | AdminVerb::DeleteMember | AdminVerb::ModifyAccess)
    }
}

impl std::fmt::Display for AdminVerb {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.wire_name())
    }
}

/// A concrete administrative action against one application.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdminAction {
    pub verb: AdminVerb,
    pub application: ResourceId,
    pub group: String,
    pub member: Option<PersonId>,
    /// New access level; required by `ModifyAccess`, ignored otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub access_level: Option<String>,
}

impl AdminAction {
    pub fn new(verb: AdminVerb, application: ResourceId, group: impl Into<String>) -> Self {
        AdminAction { verb, application, group: group.into(), member: None, access_level: None }
    }

    pub fn with_member(mut self, member: PersonId) -> Self {
        self.member = Some(member);
        self
    }

    pub fn with_access_level(mut self, level: impl Into<String>) -> Self {
        self.access_level = Some(level.into());
        self
    }

    /// Target well-formedness: a member is present iff the verb takes one.
    pub fn check_shape(&self) -> Result<(), AdminError> {
        if self.verb.takes_member() && self.member.is_none() {
            return Err(AdminError::MalformedAction(format!("{} requires a member", self.verb)));
        }
        if !self.verb.takes_member() && self.member.is_some() {
            return Err(AdminError::MalformedAction(format!("{} takes no member", self.verb)));
        }
        if self.verb == AdminVerb::ModifyAccess && self.access_level.is_none() {
            return Err(AdminError::MalformedAction("modify_access requires an access level".into()));
        }
        Ok(())
    }
}

/// A permission decision plus the rule that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PermissionDecision {
    pub allowed: bool,
    pub rule: String,
}

/// Decide whether `role` may perform `action`.
///
/// Reproduces the delegated-administration table exactly, with
/// application admins additionally restricted to their own application:
///
/// | verb                      | domain admin | senior app admin | app admin (own app) |
/// |---------------------------|--------------|------------------|---------------------|
/// | manage_application_groups | yes          | no               | no                  |
/// | add_member                | no           | no               | yes                 |
/// | modify_access             | no           | no               | yes                 |
/// | delete_member             | no           | no               | yes                 |
/// | create_view_groups        | yes          | yes              | no                  |
/// | create_view_sub_groups    | yes          | yes              | no                  |
/// | assign_application_admin  | yes          | no               | no                  |
/// | view_members              | no           | yes              | yes                 |
///
/// Everything else — including any action by an application admin on a
/// foreign application — is denied by default.
pub fn is_permitted(role: AdminRole, action: &AdminAction) -> PermissionDecision {
    use AdminVerb::*;
    let (allowed, rule) = match role {
        AdminRole::DomainAdmin => {
            let allowed = matches!(
                action.verb,
                ManageApplicationGroups | CreateViewGroups | CreateViewSubGroups | AssignApplicationAdmin
            );
            (allowed, format!("domain_admin row, {}", action.verb))
        }
        AdminRole::SeniorAppAdmin => {
            let allowed = matches!(action.verb, CreateViewGroups | CreateViewSubGroups | ViewMembers);
            (allowed, format!("senior_app_admin row, {}", action.verb))
        }
        AdminRole::AppAdmin(app) => {
            if app != action.application {
                (false, format!("app_admin scoped to {app}, action targets {}", action.application))
            } else {
                let allowed = matches!(action.verb, AddMember | ModifyAccess | DeleteMember | ViewMembers);
                (allowed, format!("app_admin({app}) row, {}", action.verb))
            }
        }
    };
    let rule = if allowed { format!("granted by {rule}") } else { format!("denied: no mark in {rule}") };
    PermissionDecision { allowed, rule }
}

/// One application group: members with access levels, plus one level of
/// sub-groups.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub members: BTreeMap<PersonId, String>,
    pub sub_groups: std::collections::BTreeSet<String>,
}

/// Application groups keyed by (application, group name). Fine-grained
/// application access only; never feeds the provisioning matrix.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroupTable {
    groups: BTreeMap<(ResourceId, String), Group>,
}

/// Wire form of one group row; the table serializes as a list of these.
#[derive(Serialize, Deserialize)]
struct GroupRecord {
    application: ResourceId,
    name: String,
    #[serde(flatten)]
    group: Group,
}

impl Serialize for GroupTable {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let records: Vec<GroupRecord> = self
            .groups
            .iter()
            .map(|((application, name), group)| GroupRecord {
                application: *application,
                name: name.clone(),
                group: group.clone(),
            })
            .collect();
        records.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for GroupTable {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let records = Vec::<GroupRecord>::deserialize(deserializer)?;
        let mut table = GroupTable::new();
        for record in records {
            table.groups.insert((record.application, record.name), record.group);
        }
        Ok(table)
    }
}

impl GroupTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(ResourceId, String), &Group)> {
        self.groups.iter()
    }

    pub fn group(&self, application: ResourceId, name: &str) -> Option<&Group> {
        self.groups.get(&(application, name.to_string()))
    }

    pub fn is_member(&self, application: ResourceId, name: &str, person: &PersonId) -> bool {
        self.group(application, name).map(|g| g.members.contains_key(person)).unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Direct insertion for snapshot restore and test planting.
    pub fn put_group_unchecked(&mut self, application: ResourceId, name: &str, group: Group) {
        self.groups.insert((application, name.to_string()), group);
    }
}

/// Perform an administrative action: validate the session, decide
/// permission, apply the mutation, and audit the outcome. Denied
/// attempts are audited too, with the group table untouched.
pub fn perform_admin_action(
    authn: &Authenticator,
    session: &Session,
    role: AdminRole,
    action: &AdminAction,
    groups: &mut GroupTable,
    pool: &ResourcePool,
    audit: &AuditLog,
    clock: &Clock,
) -> Result<(), AdminError> {
    action.check_shape()?;
    audit.ensure_writable().map_err(|_| AdminError::AuditUnavailable)?;

    let actor = Actor::Person(session.person_id.clone());
    let target = format!("{}:{}", action.application, action.group);
    let record = |outcome: AuditOutcome, note: &str| {
        audit
            .record(
                actor.clone(),
                clock.now(),
                AuditCategory::AdminAction,
                action.verb.wire_name(),
                &target,
                outcome,
                detail(&[("role", dv(role.to_string())), ("note", dv(note))]),
            )
            .map(|_| ())
            .map_err(|_| AdminError::AuditUnavailable)
    };

    if authn.validate_session(session).is_err() {
        record(AuditOutcome::Denied, "invalid session")?;
        return Err(AdminError::PermissionDenied("invalid session".to_string()));
    }

    let decision = is_permitted(role, action);
    if !decision.allowed {
        record(AuditOutcome::Denied, &decision.rule)?;
        return Err(AdminError::PermissionDenied(decision.rule));
    }

    let key = (action.application, action.group.clone());
    let outcome = match action.verb {
        AdminVerb::CreateViewGroups => {
            groups.groups.entry(key).or_default();
            Ok(())
        }
        AdminVerb::CreateViewSubGroups => {
            // Sub-group targets ride in the group field as parent/child.
            match action.group.split_once('/') {
                Some((parent, child)) if !parent.is_empty() && !child.is_empty() => {
                    match groups.groups.get_mut(&(action.application, parent.to_string())) {
                        Some(group) => {
                            group.sub_groups.insert(child.to_string());
                            Ok(())
                        }
                        None => Err(AdminError::UnknownGroup(parent.to_string())),
                    }
                }
                _ => Err(AdminError::MalformedAction(
                    "create_view_sub_groups targets parent/child".to_string(),
                )),
            }
        }
        AdminVerb::ManageApplicationGroups => {
            // Structural management: remove the group outright.
            match groups.groups.remove(&key) {
                Some(_) => Ok(()),
                None => Err(AdminError::UnknownGroup(action.group.clone())),
            }
        }
        AdminVerb::AddMember => {
            let member = action.member.clone().expect("shape checked");
            let has_active_account = pool
                .endpoint(action.application)
                .account(&member)
                .map(|a| a.state == AccountState::Active)
                .unwrap_or(false);
            if !has_active_account {
                Err(AdminError::MemberLacksAccount(member))
            } else {
                match groups.groups.get_mut(&key) {
                    Some(group) => {
                        let level =
                            action.access_level.clone().unwrap_or_else(|| "member".to_string());
                        group.members.insert(member, level);
                        Ok(())
                    }
                    None => Err(AdminError::UnknownGroup(action.group.clone())),
                }
            }
        }
        AdminVerb::ModifyAccess => {
            let member = action.member.clone().expect("shape checked");
            let level = action.access_level.clone().expect("shape checked");
            match groups.groups.get_mut(&key) {
                Some(group) if group.members.contains_key(&member) => {
                    group.members.insert(member, level);
                    Ok(())
                }
                Some(_) => Err(AdminError::MemberLacksAccount(member)),
                None => Err(AdminError::UnknownGroup(action.group.clone())),
            }
        }
        AdminVerb::DeleteMember => {
            let member = action.member.clone().expect("shape checked");
            match groups.groups.get_mut(&key) {
                Some(group) => {
                    group.members.remove(&member);
                    Ok(())
                }
                None => Err(AdminError::UnknownGroup(action.group.clone())),
            }
        }
        AdminVerb::AssignApplicationAdmin => {
            // Role assignment is supplied per invocation in this artifact;
            // the delegation decision itself is what gets audited.
            Ok(())
        }
        AdminVerb::ViewMembers => match groups.groups.get(&key) {
            Some(_) => Ok(()),
            None => Err(AdminError::UnknownGroup(action.group.clone())),
        },
    };

    match &outcome {
        Ok(()) => record(AuditOutcome::Allowed, &decision.rule)?,
        Err(e) => record(AuditOutcome::Failure, &e.to_string())?,
    }
    outcome
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::authn::AuthPolicy;
    use crate::identity::ResourceId::*;
    use chrono::{TimeZone, Utc};

    fn action(verb: AdminVerb, app: ResourceId) -> AdminAction {
        let mut a = AdminAction::new(verb, app, "writing-center");
        if verb.takes_member() {
            a = a.with_member(PersonId::new("S1"));
        }
        if verb == AdminVerb::ModifyAccess {
            a = a.with_access_level("editor");
        }
        a
    }

    #[test]
    fn app_admin_may_add_members_on_its_own_application() {
        let d = is_permitted(AdminRole::AppAdmin(LearningPlatform), &action(AdminVerb::AddMember, LearningPlatform));
        assert!(d.allowed, "{}", d.rule);
    }

    #[test]
    fn domain_admin_may_not_touch_membership() {
        let d = is_permitted(AdminRole::DomainAdmin, &action(AdminVerb::AddMember, LearningPlatform));
        assert!(!d.allowed);
    }

    #[test]
    fn app_admin_is_denied_across_applications() {
        let d = is_permitted(AdminRole::AppAdmin(LearningPlatform), &action(AdminVerb::ViewMembers, StudentPortal));
        assert!(!d.allowed);
        assert!(d.rule.contains("scoped"));
    }

    #[test]
    fn the_full_decision_table_matches() {
        use AdminVerb::*;
        let apps = [LearningPlatform, StudentPortal];
        for app in apps {
            for verb in AdminVerb::ALL {
                let expect_domain = matches!(
                    verb,
                    ManageApplicationGroups | CreateViewGroups | CreateViewSubGroups | AssignApplicationAdmin
                );
                let expect_senior = matches!(verb, CreateViewGroups | CreateViewSubGroups | ViewMembers);
                let expect_own = matches!(verb, AddMember | ModifyAccess | DeleteMember | ViewMembers);

                assert_eq!(is_permitted(AdminRole::DomainAdmin, &action(verb, app)).allowed, expect_domain);
                assert_eq!(is_permitted(AdminRole::SeniorAppAdmin, &action(verb, app)).allowed, expect_senior);
                assert_eq!(is_permitted(AdminRole::AppAdmin(app), &action(verb, app)).allowed, expect_own);
                let foreign = if app == LearningPlatform { StudentPortal } else { LearningPlatform };
                assert!(!is_permitted(AdminRole::AppAdmin(foreign), &action(verb, app)).allowed);
            }
        }
    }

    #[test]
    fn member_shape_is_enforced() {
        let missing = AdminAction::new(AdminVerb::AddMember, LearningPlatform, "g");
        assert!(missing.check_shape().is_err());
        let extra = AdminAction::new(AdminVerb::ViewMembers, LearningPlatform, "g")
            .with_member(PersonId::new("S1"));
        assert!(extra.check_shape().is_err());
    }

    fn harness() -> (Authenticator, Session, GroupTable, ResourcePool, AuditLog, Clock) {
        let clock = Clock::fixed(Utc.with_ymd_and_hms(2026, 6, 1, 9, 0, 0).unwrap());
        let authn = Authenticator::new(AuthPolicy::default(), clock.clone());
        let session = authn.issue_session(PersonId::new("admin1"), Default::default());
        let mut groups = GroupTable::new();
        groups.put_group_unchecked(LearningPlatform, "writing-center", Group::default());
        let mut pool = ResourcePool::standard();
        pool.endpoint_mut(LearningPlatform)
            .create_account(&PersonId::new("S1"), &Default::default())
            .unwrap();
        (authn, session, groups, pool, AuditLog::in_memory(), clock)
    }

    #[test]
    fn permitted_add_member_mutates_and_audits_allowed() {
        let (authn, session, mut groups, pool, audit, clock) = harness();
        perform_admin_action(
            &authn,
            &session,
            AdminRole::AppAdmin(LearningPlatform),
            &action(AdminVerb::AddMember, LearningPlatform),
            &mut groups,
            &pool,
            &audit,
            &clock,
        )
        .unwrap();
        assert!(groups.is_member(LearningPlatform, "writing-center", &PersonId::new("S1")));
        let events = audit.events();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].outcome, AuditOutcome::Allowed);
    }

    #[test]
    fn denied_action_leaves_the_table_unchanged_and_audits_denied() {
        let (authn, session, mut groups, pool, audit, clock) = harness();
        let before = groups.clone();
        let err = perform_admin_action(
            &authn,
            &session,
            AdminRole::DomainAdmin,
            &action(AdminVerb::AddMember, LearningPlatform),
            &mut groups,
            &pool,
            &audit,
            &clock,
        )
        .unwrap_err();
        assert!(matches!(err, AdminError::PermissionDenied(_)));
        assert_eq!(groups, before);
        let events = audit.events();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].outcome, AuditOutcome::Denied);
    }

    #[test]
    fn adding_a_member_without_an_active_account_fails() {
        let (authn, session, mut groups, pool, audit, clock) = harness();
        let orphan_action = AdminAction::new(AdminVerb::AddMember, LearningPlatform, "writing-center")
            .with_member(PersonId::new("nobody"));
        let err = perform_admin_action(
            &authn,
            &session,
            AdminRole::AppAdmin(LearningPlatform),
            &orphan_action,
            &mut groups,
            &pool,
            &audit,
            &clock,
        )
        .unwrap_err();
        assert_eq!(err, AdminError::MemberLacksAccount(PersonId::new("nobody")));
        assert!(!groups.is_member(LearningPlatform, "writing-center", &PersonId::new("nobody")));
    }

    #[test]
    fn expired_session_is_denied_before_the_matrix() {
        let (authn, session, mut groups, pool, audit, clock) = harness();
        clock.advance_secs(7200);
        let err = perform_admin_action(
            &authn,
            &session,
            AdminRole::AppAdmin(LearningPlatform),
            &action(AdminVerb::AddMember, LearningPlatform),
            &mut groups,
            &pool,
            &audit,
            &clock,
        )
        .unwrap_err();
        assert!(matches!(err, AdminError::PermissionDenied(_)));
        assert_eq!(audit.events()[0].outcome, AuditOutcome::Denied);
    }

    #[test]
    fn unknown_group_is_reported() {
        let (authn, session, mut groups, pool, audit, clock) = harness();
        let a = AdminAction::new(AdminVerb::ViewMembers, LearningPlatform, "no-such-group");
        let err = perform_admin_action(
            &authn,
            &session,
            AdminRole::SeniorAppAdmin,
            &a,
            &mut groups,
            &pool,
            &audit,
            &clock,
        )
        .unwrap_err();
        assert_eq!(err, AdminError::UnknownGroup("no-such-group".to_string()));
    }
}
