//! Operator command line for the provisioning engine.
//!
//! Exit codes: 0 success; 1 partial (pending retries, drift or findings
//! reported, authentication denied); 2 usage, configuration, or input
//! parse errors; 3 invariant violations (unknown identities, undefined
//! transitions, permission denials, failed scenario assertions).

mod app;
mod scenarios;

use std::path::PathBuf;

use anyhow::Context;
use chrono::{DateTime, NaiveDate, Utc};
use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use idfabric_core::admin::{perform_admin_action, AdminAction, AdminRole, AdminVerb};
use idfabric_core::audit::{report_compliance, ComplianceInputs};
use idfabric_core::authn::{AuthDenial, AuthFactor, Certificate, RevocationReason};
use idfabric_core::engine::EngineError;
use idfabric_core::feed::parse_feed;
use idfabric_core::identity::{
    EventKind, LifecycleEvent, PersonId, ResourceId, WithdrawalReason,
};
use idfabric_core::resources::FaultMode;

use app::App;

#[derive(Parser)]
#[command(name = "idfabric", version, about = "Identity lifecycle and provisioning engine")]
struct Cli {
    /// Configuration file (JSON); defaults to $IDFABRIC_CONFIG, then
    /// built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Emit one JSON object instead of text.
    #[arg(long, global = true)]
    json: bool,

    /// Seed for token derivation; fixed seeds give reproducible runs.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Freeze the clock at an RFC3339 instant (e.g.
    /// 2026-09-01T08:00:00Z) for reproducible runs.
    #[arg(long, global = true)]
    now: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pull and apply an authoritative feed batch.
    Feed {
        #[command(subcommand)]
        command: FeedCommand,
    },
    /// Compare desired state against the resources; optionally fix drift.
    Reconcile {
        /// Apply corrections after reporting.
        #[arg(long)]
        fix: bool,
    },
    /// Inspect identities.
    Identity {
        #[command(subcommand)]
        command: IdentityCommand,
    },
    /// Apply lifecycle events directly.
    Event {
        #[command(subcommand)]
        command: EventCommand,
    },
    /// Exercise the authentication flows.
    Authn {
        #[command(subcommand)]
        command: AuthnCommand,
    },
    /// Publish a certificate revocation.
    Revoke {
        serial: u64,
        #[arg(long, default_value = "unspecified")]
        reason: String,
    },
    /// Delegated administration.
    Admin {
        #[command(subcommand)]
        command: AdminCommand,
    },
    /// Inject a fault into a managed resource: healthy, down, or
    /// intermittent:<n>.
    Fault { resource: String, mode: String },
    /// Emit reports.
    Report {
        #[command(subcommand)]
        command: ReportCommand,
    },
    /// Run named end-to-end scenarios.
    Scenario {
        #[command(subcommand)]
        command: ScenarioCommand,
    },
}

#[derive(Subcommand)]
enum FeedCommand {
    /// Parse a JSON-lines feed file, diff it against the store, run the
    /// implied workflows, and drain retries once.
    Apply { file: PathBuf },
}

#[derive(Subcommand)]
enum IdentityCommand {
    /// Show one identity.
    Show { person_id: String },
}

#[derive(Subcommand)]
enum EventCommand {
    /// Apply one lifecycle event to one identity.
    Apply {
        person_id: String,
        /// Event kind: application, matriculation, enrollment,
        /// withdrawal, graduation, alumni_transition, hire, transfer,
        /// leave_of_absence, return_from_leave, termination.
        event: String,
        /// Withdrawal reason (academic, financial, voluntary).
        #[arg(long)]
        reason: Option<String>,
        /// Target department for transfers.
        #[arg(long)]
        department: Option<String>,
        /// Effective date (YYYY-MM-DD); defaults to today.
        #[arg(long)]
        date: Option<String>,
    },
}

#[derive(Subcommand)]
enum AuthnCommand {
    /// Run an authentication flow against current state.
    Test {
        #[command(subcommand)]
        command: AuthnTest,
    },
}

#[derive(Subcommand)]
enum AuthnTest {
    /// Production flow: real-time status check, then proof of key
    /// possession. Mints (and enrolls) a certificate for the uid.
    Prod {
        uid: String,
        #[arg(long)]
        serial: Option<u64>,
        /// Present a wrong possession proof.
        #[arg(long)]
        bad_proof: bool,
        /// Mint an already-expired certificate.
        #[arg(long)]
        expired: bool,
        /// Mint a not-yet-valid certificate.
        #[arg(long)]
        not_yet_valid: bool,
        /// Skip issuer registration with the status responder.
        #[arg(long)]
        unknown_issuer: bool,
    },
    /// Non-production flow: registry certificate match, no responder.
    Nonprod {
        uid: String,
        #[arg(long)]
        serial: Option<u64>,
        #[arg(long)]
        bad_proof: bool,
        /// Tamper with one presented-certificate field after enrollment:
        /// serial, email, issuer, or key.
        #[arg(long)]
        tamper: Option<String>,
    },
    /// Password factor with lockout.
    Password {
        uid: String,
        #[arg(long)]
        password: String,
        /// Enroll this password on the registry account first.
        #[arg(long)]
        enroll: Option<String>,
        /// Repeat the attempt this many times.
        #[arg(long, default_value_t = 1)]
        attempts: u32,
    },
}

#[derive(Subcommand)]
enum AdminCommand {
    /// Evaluate the permission matrix for a role and action.
    Check {
        /// domain_admin, senior_app_admin, or app_admin:<application>.
        role: String,
        /// Action verb, e.g. add_member or create_view_groups.
        action: String,
        /// Target application (default learning_platform).
        app: Option<String>,
    },
    /// Perform an administrative action against the group table.
    Do {
        role: String,
        action: String,
        app: String,
        #[arg(long, default_value = "general")]
        group: String,
        #[arg(long)]
        member: Option<String>,
        #[arg(long)]
        level: Option<String>,
    },
}

#[derive(Subcommand)]
enum ReportCommand {
    /// Evaluate the compliance rules and list findings.
    Compliance,
}

#[derive(Subcommand)]
enum ScenarioCommand {
    /// Run a named scenario: student-full-lifecycle, student-withdrawal,
    /// or employee-leave-cycle.
    Run { name: String },
}

struct Outcome {
    value: Value,
    summary: String,
    code: u8,
}

struct CliFailure {
    code: u8,
    message: String,
}

impl From<anyhow::Error> for CliFailure {
    fn from(e: anyhow::Error) -> Self {
        CliFailure { code: 2, message: format!("{e:#}") }
    }
}

fn engine_failure(e: EngineError) -> CliFailure {
    let code = match &e {
        EngineError::Feed(_) | EngineError::Matrix(_) => 2,
        _ => 3,
    };
    CliFailure { code, message: e.to_string() }
}

fn invariant(message: impl Into<String>) -> CliFailure {
    CliFailure { code: 3, message: message.into() }
}

fn usage(message: impl Into<String>) -> CliFailure {
    CliFailure { code: 2, message: message.into() }
}

fn main() {
    let cli = Cli::parse();
    let now = match cli.now.as_deref() {
        None => None,
        Some(text) => match DateTime::parse_from_rfc3339(text) {
            Ok(at) => Some(at.with_timezone(&Utc)),
            Err(e) => {
                eprintln!("error: invalid --now {text:?}: {e}");
                std::process::exit(2);
            }
        },
    };

    let mut app = match App::load(cli.config.as_deref(), now, cli.seed) {
        Ok(app) => app,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    };

    let result = dispatch(&mut app, &cli.command);

    // State persists regardless of command outcome: the audit log has
    // already recorded everything that happened.
    if let Err(e) = app.save() {
        eprintln!("error: {e:#}");
        std::process::exit(2);
    }

    match result {
        Ok(outcome) => {
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&outcome.value).expect("valid json"));
            } else {
                println!("{}", outcome.summary);
            }
            std::process::exit(i32::from(outcome.code));
        }
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            std::process::exit(i32::from(failure.code));
        }
    }
}

fn dispatch(app: &mut App, command: &Command) -> Result<Outcome, CliFailure> {
    match command {
        Command::Feed { command: FeedCommand::Apply { file } } => feed_apply(app, file),
        Command::Reconcile { fix } => reconcile(app, *fix),
        Command::Identity { command: IdentityCommand::Show { person_id } } => {
            identity_show(app, person_id)
        }
        Command::Event {
            command: EventCommand::Apply { person_id, event, reason, department, date },
        } => event_apply(app, person_id, event, reason.as_deref(), department.as_deref(), date.as_deref()),
        Command::Authn { command: AuthnCommand::Test { command } } => authn_test(app, command),
        Command::Revoke { serial, reason } => revoke(app, *serial, reason),
        Command::Admin { command } => admin(app, command),
        Command::Fault { resource, mode } => fault(app, resource, mode),
        Command::Report { command: ReportCommand::Compliance } => compliance(app),
        Command::Scenario { command: ScenarioCommand::Run { name } } => scenario(app, name),
    }
}

fn feed_apply(app: &mut App, file: &PathBuf) -> Result<Outcome, CliFailure> {
    let bytes = std::fs::read(file)
        .with_context(|| format!("reading feed {}", file.display()))
        .map_err(CliFailure::from)?;
    let records = parse_feed(&bytes).map_err(|e| usage(e.to_string()))?;
    let report = app.engine.apply_feed(&records).map_err(engine_failure)?;
    let drained = app.engine.drain_retries();
    let pending = app.engine.retries().pending_len();

    let clean = report.failed.is_empty() && pending == 0;
    let code = if clean { 0 } else { 1 };
    let summary = format!(
        "feed applied: {} created, {} updated, {} unchanged, {} failed; {} retries drained, {} pending",
        report.created,
        report.updated,
        report.unchanged,
        report.failed.len(),
        drained,
        pending
    );
    Ok(Outcome {
        value: json!({
            "created": report.created,
            "updated": report.updated,
            "unchanged": report.unchanged,
            "failed": report.failed.iter().map(|(p, e)| json!({"person_id": p.as_str(), "error": e})).collect::<Vec<_>>(),
            "retries_drained": drained,
            "retries_pending": pending,
            "orders": report.orders,
        }),
        summary,
        code,
    })
}

fn reconcile(app: &mut App, fix: bool) -> Result<Outcome, CliFailure> {
    let report = app.engine.reconcile();
    let mut corrected = 0usize;
    let final_report = if fix && !report.is_empty() {
        let orders = app.engine.apply_corrections(&report).map_err(engine_failure)?;
        corrected = orders.iter().map(|o| o.actions.len()).sum();
        app.engine.reconcile()
    } else {
        report.clone()
    };

    let code = if final_report.is_empty() && !final_report.is_partial() { 0 } else { 1 };
    let summary = format!(
        "drift: {} missing, {} orphaned, {} state mismatches{}{}",
        final_report.missing.len(),
        final_report.orphaned.len(),
        final_report.state_mismatch.len(),
        if fix { format!("; {corrected} corrective actions applied") } else { String::new() },
        if final_report.is_partial() {
            format!("; PARTIAL, unreachable: {:?}", final_report.unreachable)
        } else {
            String::new()
        },
    );
    Ok(Outcome { value: json!({ "drift": final_report, "corrected": corrected }), summary, code })
}

fn identity_show(app: &App, person_id: &str) -> Result<Outcome, CliFailure> {
    let id = PersonId::new(person_id);
    let identity = app
        .engine
        .store()
        .get(&id)
        .cloned()
        .ok_or_else(|| invariant(format!("unknown identity {id}")))?;
    // Sensitive attributes stay need-to-know; the display surface only
    // acknowledges their presence.
    let mut identity = identity;
    for value in identity.pii_fields.values_mut() {
        if value.sensitive {
            value.value = "<protected>".to_string();
        }
    }
    let accounts: Vec<Value> = app
        .engine
        .pool()
        .accounts_for(&id)
        .iter()
        .map(|a| json!({"resource": a.resource.wire_name(), "state": a.state.to_string()}))
        .collect();
    let summary = format!(
        "{}: {} {}{} dept={} status={} accounts={}",
        identity.person_id,
        identity.full_name,
        identity.role,
        identity.sub_role.map(|s| format!("/{s}")).unwrap_or_default(),
        identity.department,
        identity.status,
        accounts.len()
    );
    Ok(Outcome { value: json!({ "identity": identity, "accounts": accounts }), summary, code: 0 })
}

fn parse_event_kind(
    name: &str,
    reason: Option<&str>,
    department: Option<&str>,
) -> Result<EventKind, CliFailure> {
    let kind = match name {
        "application" => EventKind::Application,
        "matriculation" => EventKind::Matriculation,
        "enrollment" => EventKind::Enrollment,
        "withdrawal" => {
            let reason = match reason.unwrap_or("voluntary") {
                "academic" => WithdrawalReason::Academic,
                "financial" => WithdrawalReason::Financial,
                "voluntary" => WithdrawalReason::Voluntary,
                other => return Err(usage(format!("unknown withdrawal reason {other:?}"))),
            };
            EventKind::Withdrawal(reason)
        }
        "graduation" => EventKind::Graduation,
        "alumni_transition" => EventKind::AlumniTransition,
        "hire" => EventKind::Hire,
        "transfer" => {
            let department =
                department.ok_or_else(|| usage("transfer requires --department"))?;
            EventKind::Transfer(department.to_string())
        }
        "leave_of_absence" => EventKind::LeaveOfAbsence,
        "return_from_leave" => EventKind::ReturnFromLeave,
        "termination" => EventKind::Termination,
        other => return Err(usage(format!("unknown event {other:?}"))),
    };
    Ok(kind)
}

fn event_apply(
    app: &mut App,
    person_id: &str,
    event: &str,
    reason: Option<&str>,
    department: Option<&str>,
    date: Option<&str>,
) -> Result<Outcome, CliFailure> {
    let kind = parse_event_kind(event, reason, department)?;
    let effective = match date {
        None => app.clock.today(),
        Some(text) => NaiveDate::parse_from_str(text, "%Y-%m-%d")
            .map_err(|e| usage(format!("invalid --date {text:?}: {e}")))?,
    };
    let lifecycle = LifecycleEvent::new(kind, effective);
    let order = app
        .engine
        .update_workflow(&PersonId::new(person_id), &lifecycle, None)
        .map_err(engine_failure)?;
    let partial = order.outcome() == idfabric_core::engine::WorkflowOutcome::PartialSuccess;
    let summary = format!(
        "applied {} to {person_id}: {} actions{}",
        lifecycle.kind,
        order.actions.len(),
        if partial { " (partial; retries queued)" } else { "" }
    );
    Ok(Outcome { value: json!({ "order": order }), summary, code: if partial { 1 } else { 0 } })
}

/// Mint a deterministic certificate for a uid. The proof token is the
/// expected possession proof; callers present it (or not) explicitly.
fn mint_certificate(
    app: &App,
    uid: &str,
    serial: Option<u64>,
    expired: bool,
    not_yet_valid: bool,
) -> Certificate {
    let today = app.clock.today();
    let serial = serial.unwrap_or_else(|| {
        app.responder.state().registered.keys().max().copied().unwrap_or(0) + 1
    });
    let (not_before, not_after) = if expired {
        (today - chrono::Duration::days(365), today - chrono::Duration::days(1))
    } else if not_yet_valid {
        (today + chrono::Duration::days(1), today + chrono::Duration::days(365))
    } else {
        (today - chrono::Duration::days(1), today + chrono::Duration::days(365))
    };
    let key = format!("key-{uid}-{serial}");
    Certificate {
        serial,
        subject_uid: uid.to_string(),
        subject_email: format!("{uid}@alpha.example"),
        issuer: "alpha-ca".to_string(),
        not_before,
        not_after,
        proof_token: Certificate::expected_proof(&key),
        key_token: key,
    }
}

fn auth_outcome(uid: &str, flow: &str, result: Result<Option<String>, AuthDenial>) -> Outcome {
    match result {
        Ok(session_id) => Outcome {
            summary: format!(
                "{flow} authentication for {uid}: granted{}",
                session_id.as_deref().map(|s| format!(" (session {s})")).unwrap_or_default()
            ),
            value: json!({
                "flow": flow,
                "uid": uid,
                "outcome": "granted",
                "session_id": session_id,
            }),
            code: 0,
        },
        Err(denial) => Outcome {
            summary: format!("{flow} authentication for {uid}: denied ({denial})"),
            value: json!({
                "flow": flow,
                "uid": uid,
                "outcome": "denied",
                "reason": denial.to_string(),
            }),
            code: 1,
        },
    }
}

fn authn_test(app: &mut App, command: &AuthnTest) -> Result<Outcome, CliFailure> {
    match command {
        AuthnTest::Prod { uid, serial, bad_proof, expired, not_yet_valid, unknown_issuer } => {
            let cert = mint_certificate(app, uid, *serial, *expired, *not_yet_valid);
            if !unknown_issuer {
                app.responder.register_certificate(&cert);
            }
            app.engine
                .enroll_credentials(&PersonId::new(uid), Some(cert.clone()), None)
                .map_err(engine_failure)?;
            let proof =
                if *bad_proof { "wrong-proof".to_string() } else { cert.proof_token.clone() };

            let registry = app.engine.pool().endpoint(ResourceId::AccessRegistry);
            let result = app.authn.authenticate_production(
                &cert,
                &proof,
                &app.responder,
                registry,
                app.engine.audit(),
            );
            let result = result.and_then(|grant| {
                // Certificate-only requirement for this test surface.
                app.authn
                    .mfa_authenticate_with(
                        &[(AuthFactor::Certificate, Ok(grant))],
                        &[AuthFactor::Certificate].into(),
                        app.engine.audit(),
                    )
                    .map(|session| Some(session.session_id))
            });
            Ok(auth_outcome(uid, "production", result))
        }
        AuthnTest::Nonprod { uid, serial, bad_proof, tamper } => {
            let cert = mint_certificate(app, uid, *serial, false, false);
            app.engine
                .enroll_credentials(&PersonId::new(uid), Some(cert.clone()), None)
                .map_err(engine_failure)?;

            let mut presented = cert.clone();
            match tamper.as_deref() {
                None => {}
                Some("serial") => presented.serial += 1,
                Some("email") => presented.subject_email = "tampered@alpha.example".to_string(),
                Some("issuer") => presented.issuer = "rogue-ca".to_string(),
                Some("key") => presented.key_token = "key-rogue".to_string(),
                Some(other) => return Err(usage(format!("unknown tamper field {other:?}"))),
            }
            let proof =
                if *bad_proof { "wrong-proof".to_string() } else { presented.proof_token.clone() };
            let registry = app.engine.pool().endpoint(ResourceId::AccessRegistry);
            let result =
                app.authn.authenticate_nonproduction(&presented, &proof, registry, app.engine.audit());
            let result = result.map(|_| None);
            Ok(auth_outcome(uid, "non-production", result))
        }
        AuthnTest::Password { uid, password, enroll, attempts } => {
            let person = PersonId::new(uid);
            if let Some(enroll) = enroll {
                let hash = idfabric_core::hash_password(&person, enroll);
                app.engine
                    .enroll_credentials(&person, None, Some(hash))
                    .map_err(engine_failure)?;
            }
            let registry = app.engine.pool().endpoint(ResourceId::AccessRegistry);
            let mut outcomes = Vec::new();
            let mut last = Err(AuthDenial::BadCredentials);
            for _ in 0..(*attempts).max(1) {
                last = app.authn.authenticate_password(&person, password, registry, app.engine.audit());
                outcomes.push(match &last {
                    Ok(_) => "granted".to_string(),
                    Err(e) => e.to_string(),
                });
            }
            let result = last.and_then(|grant| {
                app.authn
                    .mfa_authenticate_with(
                        &[(AuthFactor::Password, Ok(grant))],
                        &[AuthFactor::Password].into(),
                        app.engine.audit(),
                    )
                    .map(|s| Some(s.session_id))
            });
            let mut outcome = auth_outcome(uid, "password", result);
            outcome.value["attempts"] = json!(outcomes);
            Ok(outcome)
        }
    }
}

fn revoke(app: &mut App, serial: u64, reason: &str) -> Result<Outcome, CliFailure> {
    let reason = match reason {
        "compromised" => RevocationReason::Compromised,
        "expired" => RevocationReason::Expired,
        "unspecified" => RevocationReason::Unspecified,
        other => return Err(usage(format!("unknown revocation reason {other:?}"))),
    };
    let list = app
        .responder
        .publish_revocation(serial, reason, &app.clock)
        .map_err(|e| invariant(e.to_string()))?;
    let summary = format!(
        "revoked serial {serial}: list version {} with {} entries",
        list.version,
        list.entries.len()
    );
    let value = json!({ "serial": serial, "version": list.version, "entries": list.entries.len() });
    Ok(Outcome { value, summary, code: 0 })
}

fn parse_admin_role(role: &str) -> Result<AdminRole, CliFailure> {
    if role == "domain_admin" {
        return Ok(AdminRole::DomainAdmin);
    }
    if role == "senior_app_admin" {
        return Ok(AdminRole::SeniorAppAdmin);
    }
    if let Some(app) = role.strip_prefix("app_admin:") {
        let resource = ResourceId::from_wire(app)
            .ok_or_else(|| usage(format!("unknown application {app:?}")))?;
        return Ok(AdminRole::AppAdmin(resource));
    }
    Err(usage(format!("unknown admin role {role:?}")))
}

fn parse_resource(name: &str) -> Result<ResourceId, CliFailure> {
    ResourceId::from_wire(name).ok_or_else(|| usage(format!("unknown resource {name:?}")))
}

fn admin(app: &mut App, command: &AdminCommand) -> Result<Outcome, CliFailure> {
    match command {
        AdminCommand::Check { role, action, app: application } => {
            let role = parse_admin_role(role)?;
            let verb = AdminVerb::from_wire(action)
                .ok_or_else(|| usage(format!("unknown admin action {action:?}")))?;
            let application = match application {
                Some(name) => parse_resource(name)?,
                None => ResourceId::LearningPlatform,
            };
            let mut admin_action = AdminAction::new(verb, application, "example");
            if verb.takes_member() {
                admin_action = admin_action.with_member(PersonId::new("example-member"));
            }
            if verb == AdminVerb::ModifyAccess {
                admin_action = admin_action.with_access_level("example-level");
            }
            let decision = idfabric_core::admin::is_permitted(role, &admin_action);
            let summary = format!(
                "{role} × {verb} on {application}: {} ({})",
                if decision.allowed { "allowed" } else { "denied" },
                decision.rule
            );
            Ok(Outcome {
                value: json!({ "allowed": decision.allowed, "rule": decision.rule }),
                summary,
                code: 0,
            })
        }
        AdminCommand::Do { role, action, app: application, group, member, level } => {
            let parsed_role = parse_admin_role(role)?;
            let verb = AdminVerb::from_wire(action)
                .ok_or_else(|| usage(format!("unknown admin action {action:?}")))?;
            let application = parse_resource(application)?;
            let mut admin_action = AdminAction::new(verb, application, group.clone());
            if let Some(member) = member {
                admin_action = admin_action.with_member(PersonId::new(member.clone()));
            }
            if let Some(level) = level {
                admin_action = admin_action.with_access_level(level.clone());
            }

            // The operator session stands in for an authenticated admin
            // sign-in; role assignment itself is out-of-band.
            let session = app.authn.issue_session(PersonId::new("operator"), Default::default());
            perform_admin_action(
                &app.authn,
                &session,
                parsed_role,
                &admin_action,
                &mut app.groups,
                app.engine.pool(),
                app.engine.audit(),
                &app.clock,
            )
            .map_err(|e| invariant(e.to_string()))?;
            let summary = format!("{role} performed {verb} on {application}:{group}");
            Ok(Outcome {
                value: json!({ "performed": true, "group_count": app.groups.len() }),
                summary,
                code: 0,
            })
        }
    }
}

fn fault(app: &mut App, resource: &str, mode: &str) -> Result<Outcome, CliFailure> {
    let resource = parse_resource(resource)?;
    let mode = match mode {
        "healthy" => FaultMode::Healthy,
        "down" => FaultMode::Down,
        other => match other.strip_prefix("intermittent:") {
            Some(n) => {
                let n: u32 = n.parse().map_err(|_| usage(format!("bad fault mode {other:?}")))?;
                if n == 0 {
                    return Err(usage("intermittent interval must be positive"));
                }
                FaultMode::Intermittent { fail_every_nth: n }
            }
            None => return Err(usage(format!("unknown fault mode {mode:?}"))),
        },
    };
    app.engine.pool_mut().endpoint_mut(resource).inject_fault(mode);
    Ok(Outcome {
        value: json!({ "resource": resource.wire_name(), "mode": format!("{mode:?}") }),
        summary: format!("fault mode on {resource} set to {mode:?}"),
        code: 0,
    })
}

fn compliance(app: &mut App) -> Result<Outcome, CliFailure> {
    let drift = app.engine.reconcile();
    let snapshot_json = app.snapshot_json().map_err(CliFailure::from)?;
    let findings = report_compliance(&ComplianceInputs {
        store: app.engine.store(),
        pool: app.engine.pool(),
        matrix: app.engine.matrix(),
        groups: &app.groups,
        drift: &drift,
        snapshot_json: &snapshot_json,
    });
    let code = if findings.is_empty() { 0 } else { 1 };
    let mut lines = vec![format!("{} findings", findings.len())];
    for finding in &findings {
        lines.push(format!("  [{}] {} — {}", finding.rule.id(), finding.subject, finding.description));
    }
    Ok(Outcome { value: json!({ "findings": findings }), summary: lines.join("\n"), code })
}

fn scenario(app: &mut App, name: &str) -> Result<Outcome, CliFailure> {
    let value = scenarios::run(&mut app.engine, name).map_err(|e| invariant(format!("{e:#}")))?;
    let summary = format!(
        "scenario {name}: ok\n{}",
        value["steps"]
            .as_array()
            .map(|steps| steps
                .iter()
                .map(|s| format!("  {}", s.as_str().unwrap_or_default()))
                .collect::<Vec<_>>()
                .join("\n"))
            .unwrap_or_default()
    );
    Ok(Outcome { value, summary, code: 0 })
}
