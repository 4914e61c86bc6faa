//! The provisioning matrix — which resources each role and sub-role is
//! entitled to — and entitlement computation.
//!
//! The shipped default encodes the university's provisioning tables
//! exactly: a base row per role plus refinement rows per (role, sub-role).
//! Effective entitlements are the union of the base row and the sub-role
//! row, with two deliberate overrides: inactive students and prospects
//! get the sub-row only (empty by default), because withdrawn students
//! must lose access and applicants have not been provisioned yet.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::identity::{sub_role_valid, ResourceId, Role, SubRole};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatrixError {
    #[error("unknown resource {0:?}")]
    UnknownResource(String),
    #[error("unknown role {0:?}")]
    UnknownRole(String),
    #[error("duplicate row for {0}")]
    DuplicateRow(String),
    #[error("malformed matrix line {line}: {cause}")]
    MalformedLine { line: usize, cause: String },
    #[error("invalid role/sub-role pair on line {line}")]
    InvalidPair { line: usize },
}

/// Machine form of the provisioning tables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvisioningMatrix {
    base_rows: BTreeMap<Role, BTreeSet<ResourceId>>,
    sub_rows: BTreeMap<(Role, SubRole), BTreeSet<ResourceId>>,
}

/// One contribution to an entitlement computation: the row that matched
/// and the resources it contributed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RuleTrace {
    pub row: String,
    pub contributed: BTreeSet<ResourceId>,
}

/// The resources a (role, sub-role) pair is entitled to, with the trace
/// of the rows that produced them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EntitlementSet {
    pub resources: BTreeSet<ResourceId>,
    pub rule_trace: Vec<RuleTrace>,
}

fn set(resources: &[ResourceId]) -> BTreeSet<ResourceId> {
    resources.iter().copied().collect()
}

/// The shipped default matrix, reproducing the provisioning tables
/// cell for cell.
pub fn default_matrix() -> ProvisioningMatrix {
    use ResourceId::*;
    use Role::*;
    use SubRole::*;

    let mut base_rows = BTreeMap::new();
    base_rows.insert(Employee, set(&[AccessRegistry, DirectoryMail, UnixHosts]));
    base_rows.insert(Student, set(&[AccessRegistry, UnixHosts, LearningPlatform]));
    base_rows.insert(Faculty, set(&[AccessRegistry, UnixHosts, LearningPlatform]));
    base_rows.insert(Contractor, set(&[AccessRegistry, DirectoryMail]));

    let mut sub_rows = BTreeMap::new();
    sub_rows.insert(
        (Employee, Management),
        set(&[AccessRegistry, DirectoryMail, UnixHosts, StudentPortal]),
    );
    sub_rows.insert(
        (Employee, IndividualContributor),
        set(&[AccessRegistry, DirectoryMail, UnixHosts]),
    );
    sub_rows.insert((Student, Active), set(&[StudentPortal, LearningPlatform]));
    sub_rows.insert((Student, Inactive), set(&[]));
    sub_rows.insert((Student, Alumni), set(&[StudentPortal]));
    sub_rows.insert((Student, Prospect), set(&[]));

    ProvisioningMatrix { base_rows, sub_rows }
}

/// The two sub-roles whose effective entitlements are the sub-row alone.
/// Union semantics would hand withdrawn students and unprovisioned
/// applicants the full base row.
fn overridden(role: Role, sub_role: Option<SubRole>) -> bool {
    matches!((role, sub_role), (Role::Student, Some(SubRole::Inactive | SubRole::Prospect)))
}

/// Effective entitlements for a (role, sub-role) pair.
///
/// The general rule is base row united with the sub-role row. Three
/// student stages depart from it:
/// - `Inactive` and `Prospect` yield the sub-row only (empty by
///   default) — withdrawal revokes access and applicants are not yet
///   provisioned;
/// - `Alumni` keeps the sub-row plus the registry needed to sign in,
///   revoking the rest of the base row.
///
/// Missing sub-rows contribute the empty set; a missing base row for the
/// role is an error (a loaded config omitted the role).
pub fn entitlements_for(
    matrix: &ProvisioningMatrix,
    role: Role,
    sub_role: Option<SubRole>,
) -> Result<EntitlementSet, MatrixError> {
    let base = matrix
        .base_rows
        .get(&role)
        .ok_or_else(|| MatrixError::UnknownRole(role.wire_name().to_string()))?;
    let sub = sub_role.and_then(|s| matrix.sub_rows.get(&(role, s)));

    let mut rule_trace = Vec::new();
    let mut resources = BTreeSet::new();

    if overridden(role, sub_role) {
        let contributed = sub.cloned().unwrap_or_default();
        resources.extend(contributed.iter().copied());
        rule_trace.push(RuleTrace {
            row: format!(
                "override:{}/{}",
                role,
                sub_role.expect("override pairs carry a sub-role")
            ),
            contributed,
        });
        return Ok(EntitlementSet { resources, rule_trace });
    }

    if role == Role::Student && sub_role == Some(SubRole::Alumni) {
        let contributed = sub.cloned().unwrap_or_default();
        resources.extend(contributed.iter().copied());
        rule_trace.push(RuleTrace { row: "sub:student/alumni".to_string(), contributed });
        if base.contains(&ResourceId::AccessRegistry) {
            resources.insert(ResourceId::AccessRegistry);
            rule_trace.push(RuleTrace {
                row: "retention:student/alumni".to_string(),
                contributed: set(&[ResourceId::AccessRegistry]),
            });
        }
        return Ok(EntitlementSet { resources, rule_trace });
    }

    resources.extend(base.iter().copied());
    rule_trace.push(RuleTrace { row: format!("base:{role}"), contributed: base.clone() });
    if let (Some(s), Some(sub)) = (sub_role, sub) {
        resources.extend(sub.iter().copied());
        rule_trace.push(RuleTrace { row: format!("sub:{role}/{s}"), contributed: sub.clone() });
    }
    Ok(EntitlementSet { resources, rule_trace })
}

/// Entitlement diff between two states.
///
/// Returns (to_provision, to_deprovision) = (new \ old, old \ new);
/// the two sets are disjoint by construction.
pub fn diff_entitlements(
    old: &BTreeSet<ResourceId>,
    new: &BTreeSet<ResourceId>,
) -> (BTreeSet<ResourceId>, BTreeSet<ResourceId>) {
    let to_provision = new.difference(old).copied().collect();
    let to_deprovision = old.difference(new).copied().collect();
    (to_provision, to_deprovision)
}

#[derive(Debug, Serialize, Deserialize)]
struct MatrixRow {
    role: String,
    sub_role: Option<String>,
    resources: Vec<String>,
}

/// Parse a matrix from its JSON-lines config form: one row object per
/// line with keys `role`, `sub_role` (nullable), and `resources`.
pub fn load_matrix(config: &str) -> Result<ProvisioningMatrix, MatrixError> {
    let mut base_rows: BTreeMap<Role, BTreeSet<ResourceId>> = BTreeMap::new();
    let mut sub_rows: BTreeMap<(Role, SubRole), BTreeSet<ResourceId>> = BTreeMap::new();

    for (index, raw) in config.lines().enumerate() {
        let line = index + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let row: MatrixRow = serde_json::from_str(raw)
            .map_err(|e| MatrixError::MalformedLine { line, cause: e.to_string() })?;
        let role =
            Role::from_wire(&row.role).ok_or_else(|| MatrixError::UnknownRole(row.role.clone()))?;
        let sub_role = match &row.sub_role {
            None => None,
            Some(name) => Some(
                SubRole::from_wire(name).ok_or(MatrixError::MalformedLine {
                    line,
                    cause: format!("unknown sub_role {name:?}"),
                })?,
            ),
        };
        if let Some(sub) = sub_role {
            if !sub_role_valid(role, Some(sub)) {
                return Err(MatrixError::InvalidPair { line });
            }
        }
        let mut resources = BTreeSet::new();
        for name in &row.resources {
            let resource = ResourceId::from_wire(name)
                .ok_or_else(|| MatrixError::UnknownResource(name.clone()))?;
            resources.insert(resource);
        }
        match sub_role {
            None => {
                if base_rows.insert(role, resources).is_some() {
                    return Err(MatrixError::DuplicateRow(role.to_string()));
                }
            }
            Some(sub) => {
                if sub_rows.insert((role, sub), resources).is_some() {
                    return Err(MatrixError::DuplicateRow(format!("{role}/{sub}")));
                }
            }
        }
    }

    Ok(ProvisioningMatrix { base_rows, sub_rows })
}

/// Serialize a matrix into the same JSON-lines form accepted by
/// [`load_matrix`]. Rows are emitted in a stable order.
pub fn serialize_matrix(matrix: &ProvisioningMatrix) -> String {
    let mut out = String::new();
    for (role, resources) in &matrix.base_rows {
        let row = MatrixRow {
            role: role.wire_name().to_string(),
            sub_role: None,
            resources: resources.iter().map(|r| r.wire_name().to_string()).collect(),
        };
        writeln!(out, "{}", serde_json::to_string(&row).expect("matrix row serializes"))
            .expect("write to string");
    }
    for ((role, sub), resources) in &matrix.sub_rows {
        let row = MatrixRow {
            role: role.wire_name().to_string(),
            sub_role: Some(sub.wire_name().to_string()),
            resources: resources.iter().map(|r| r.wire_name().to_string()).collect(),
        };
        writeln!(out, "{}", serde_json::to_string(&row).expect("matrix row serializes"))
            .expect("write to string");
    }
    out
}

impl ProvisioningMatrix {
    pub fn base_row(&self, role: Role) -> Option<&BTreeSet<ResourceId>> {
        self.base_rows.get(&role)
    }

    pub fn sub_row(&self, role: Role, sub: SubRole) -> Option<&BTreeSet<ResourceId>> {
        self.sub_rows.get(&(role, sub))
    }

    /// Add or replace a row; used by tests exploring non-default configs.
    pub fn set_sub_row(&mut self, role: Role, sub: SubRole, resources: BTreeSet<ResourceId>) {
        self.sub_rows.insert((role, sub), resources);
    }

    pub fn set_base_row(&mut self, role: Role, resources: BTreeSet<ResourceId>) {
        self.base_rows.insert(role, resources);
    }
}
