//! Named end-to-end scenario traces. Each scenario drives the engine
//! through a canned event sequence and verifies the resulting account
//! states against the documented end state, failing loudly on any
//! mismatch.

use std::collections::BTreeSet;

use anyhow::{bail, Result};
use chrono::NaiveDate;
use serde_json::{json, Value};

use idfabric_core::engine::Engine;
use idfabric_core::feed::FeedRecord;
use idfabric_core::identity::{
    EventKind, LifecycleEvent, PersonId, ResourceId, Role, SubRole, WithdrawalReason,
};
use idfabric_core::resources::AccountState;

pub const SCENARIOS: [&str; 3] =
    ["student-full-lifecycle", "student-withdrawal", "employee-leave-cycle"];

struct Trace {
    steps: Vec<String>,
}

impl Trace {
    fn new() -> Self {
        Trace { steps: Vec::new() }
    }

    fn step(&mut self, text: impl Into<String>) {
        self.steps.push(text.into());
    }
}

fn active_set(engine: &Engine, person: &PersonId) -> BTreeSet<ResourceId> {
    ResourceId::ALL
        .into_iter()
        .filter(|r| {
            engine.pool().endpoint(*r).account(person).map(|a| a.state) == Some(AccountState::Active)
        })
        .collect()
}

fn suspended_or_absent(engine: &Engine, person: &PersonId, resource: ResourceId) -> bool {
    match engine.pool().endpoint(resource).account(person) {
        None => true,
        Some(account) => account.state == AccountState::Suspended,
    }
}

fn student_record(id: &PersonId, date: NaiveDate) -> FeedRecord {
    FeedRecord {
        person_id: id.clone(),
        full_name: format!("Scenario Student {id}"),
        role: Role::Student,
        sub_role: Some(SubRole::Prospect),
        department: "Admissions".to_string(),
        event: Some(idfabric_core::feed::EventHint::Application),
        effective_date: date,
    }
}

fn apply(engine: &mut Engine, person: &PersonId, kind: EventKind, date: NaiveDate, trace: &mut Trace) -> Result<()> {
    let event = LifecycleEvent::new(kind.clone(), date);
    let order = engine
        .update_workflow(person, &event, None)
        .map_err(|e| anyhow::anyhow!("applying {kind}: {e}"))?;
    trace.step(format!("{kind}: {} resource actions", order.actions.len()));
    Ok(())
}

/// Run a named scenario against the engine. Returns a machine-readable
/// trace; any assertion failure is an error.
pub fn run(engine: &mut Engine, name: &str) -> Result<Value> {
    let date = engine.clock().today();
    match name {
        "student-full-lifecycle" => {
            let id = PersonId::new(format!("scn-student-{}", engine.store().len()));
            let mut trace = Trace::new();
            engine.provision_workflow(&student_record(&id, date))?;
            trace.step(format!("application: created {id} as student/prospect, zero accounts"));
            for kind in [EventKind::Matriculation, EventKind::Enrollment, EventKind::Graduation] {
                apply(engine, &id, kind, date, &mut trace)?;
            }

            let active = active_set(engine, &id);
            let expected: BTreeSet<ResourceId> =
                [ResourceId::AccessRegistry, ResourceId::StudentPortal].into();
            if active != expected {
                bail!("expected exactly registry+portal active, found {active:?}");
            }
            for resource in [ResourceId::UnixHosts, ResourceId::LearningPlatform] {
                if !suspended_or_absent(engine, &id, resource) {
                    bail!("{resource} should be suspended or absent after graduation");
                }
            }
            if !engine.reconcile().is_empty() {
                bail!("scenario left drift behind");
            }
            trace.step("verified: alumni hold exactly registry+portal active".to_string());
            Ok(json!({
                "scenario": name,
                "person_id": id.as_str(),
                "steps": trace.steps,
                "active_resources": active.iter().map(|r| r.wire_name()).collect::<Vec<_>>(),
            }))
        }
        "student-withdrawal" => {
            let id = PersonId::new(format!("scn-student-{}", engine.store().len()));
            let mut trace = Trace::new();
            engine.provision_workflow(&student_record(&id, date))?;
            trace.step(format!("application: created {id} as student/prospect"));
            apply(engine, &id, EventKind::Matriculation, date, &mut trace)?;
            apply(engine, &id, EventKind::Enrollment, date, &mut trace)?;
            apply(engine, &id, EventKind::Withdrawal(WithdrawalReason::Academic), date, &mut trace)?;

            let accounts = engine.pool().accounts_for(&id);
            if accounts.len() != 4 {
                bail!("expected 4 retained accounts, found {}", accounts.len());
            }
            for account in &accounts {
                if account.state != AccountState::Suspended {
                    bail!("{} should be suspended after withdrawal", account.resource);
                }
            }
            if !engine.reconcile().is_empty() {
                bail!("scenario left drift behind");
            }
            trace.step("verified: all accounts suspended, none deleted".to_string());
            Ok(json!({
                "scenario": name,
                "person_id": id.as_str(),
                "steps": trace.steps,
            }))
        }
        "employee-leave-cycle" => {
            let id = PersonId::new(format!("scn-employee-{}", engine.store().len()));
            let mut trace = Trace::new();
            let record = FeedRecord {
                person_id: id.clone(),
                full_name: format!("Scenario Employee {id}"),
                role: Role::Employee,
                sub_role: Some(SubRole::IndividualContributor),
                department: "IT".to_string(),
                event: Some(idfabric_core::feed::EventHint::Hire),
                effective_date: date,
            };
            engine.provision_workflow(&record)?;
            trace.step(format!("hire: created {id} with registry, directory, and hosts accounts"));

            apply(engine, &id, EventKind::LeaveOfAbsence, date, &mut trace)?;
            if !active_set(engine, &id).is_empty() {
                bail!("leave of absence must suspend every account");
            }
            apply(engine, &id, EventKind::ReturnFromLeave, date, &mut trace)?;
            let expected: BTreeSet<ResourceId> = [
                ResourceId::AccessRegistry,
                ResourceId::DirectoryMail,
                ResourceId::UnixHosts,
            ]
            .into();
            if active_set(engine, &id) != expected {
                bail!("return from leave must restore the suspended set");
            }
            apply(engine, &id, EventKind::Transfer("Registrar".to_string()), date, &mut trace)?;
            apply(engine, &id, EventKind::Termination, date, &mut trace)?;
            if !engine.pool().accounts_for(&id).is_empty() {
                bail!("termination must remove every account");
            }
            if !engine.reconcile().is_empty() {
                bail!("scenario left drift behind");
            }
            trace.step("verified: suspend/restore round trip and clean termination".to_string());
            Ok(json!({
                "scenario": name,
                "person_id": id.as_str(),
                "steps": trace.steps,
            }))
        }
        other => bail!("unknown scenario {other:?}; known: {}", SCENARIOS.join(", ")),
    }
}
