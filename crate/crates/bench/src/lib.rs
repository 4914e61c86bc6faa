//! Shared setup helpers for the benchmark suite.

use std::sync::Arc;

use chrono::NaiveDate;

use idfabric_core::audit::AuditLog;
use idfabric_core::clock::Clock;
use idfabric_core::engine::{Engine, EngineConfig};
use idfabric_core::feed::FeedRecord;
use idfabric_core::identity::{PersonId, Role, SubRole};
use idfabric_core::matrix::default_matrix;

pub fn bench_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2026, 9, 1).unwrap()
}

pub fn bench_record(index: usize) -> FeedRecord {
    let (role, sub_role) = match index % 4 {
        0 => (Role::Employee, Some(SubRole::IndividualContributor)),
        1 => (Role::Student, Some(SubRole::Active)),
        2 => (Role::Faculty, None),
        _ => (Role::Contractor, None),
    };
    FeedRecord {
        person_id: PersonId::new(format!("P{index:05}")),
        full_name: format!("Person {index}"),
        role,
        sub_role,
        department: format!("dept-{}", index % 7),
        event: None,
        effective_date: bench_date(),
    }
}

/// An engine pre-populated with `n` provisioned identities.
pub fn populated_engine(n: usize) -> Engine {
    let clock = Clock::fixed_at_date(bench_date());
    let mut engine = Engine::new(
        default_matrix(),
        Arc::new(AuditLog::in_memory()),
        clock,
        EngineConfig::default(),
    );
    for i in 0..n {
        engine.provision_workflow(&bench_record(i)).expect("bench provisioning");
    }
    engine
}
