//! Campaign execution: runs fuzz plans and scripted scenarios against the
//! simulator, classifies every session with an oracle and feeds confirmed
//! findings back into the isolation report.

pub mod config;
mod experiment;
mod scenarios;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::knowledge::{pair_key, AttackEntry, IsolationReport};
use crate::model::{Direction, ModelError, Property, ProtocolModel, SemanticRole};
use crate::planner::{mix_seed, FuzzCase, FuzzPlan, PlanError, PlanKind, Provenance, Source};
use crate::sim::{
    run_recording, Action, EventKind, InterceptEntry, InterceptorScript, Party, PartyPhase,
    Recording, SimConfig, SimTrace,
};

pub use config::{parse_action, parse_campaign_config, run_config, CampaignConfig, Level, RunOutput};
pub use experiment::{
    candidate_faults, guidance_trials, probe_command_cases, GuidanceTrial, ProbeTable, TrialOptions,
};
pub use scenarios::{run_scenario, scenario_trace, Scenario};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CampaignError {
    #[error("plan was made for model {plan}, the simulator runs {config}")]
    ConfigMismatch { plan: String, config: String },
    #[error("result was produced for model {result}, report is for {report}")]
    ProvenanceMismatch { result: String, report: String },
    #[error("trace did not reach a terminal state (step cap exceeded)")]
    NonTerminalTrace,
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error(transparent)]
    Config(#[from] ModelError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("{0}")]
    Invalid(String),
}

/// Outcome classes, declared in precedence order: when a trace satisfies
/// several predicates the first one wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Verdict {
    DisconnectDos,
    ImpersonationSuccess,
    KeyExposure,
    IdentityLeakage,
    Desync,
    GracefulReject,
    NoEffect,
}

impl Verdict {
    pub const ALL: [Verdict; 7] = [
        Verdict::DisconnectDos,
        Verdict::ImpersonationSuccess,
        Verdict::KeyExposure,
        Verdict::IdentityLeakage,
        Verdict::Desync,
        Verdict::GracefulReject,
        Verdict::NoEffect,
    ];

    /// True for verdicts that confirm a vulnerability.
    pub fn is_finding(self) -> bool {
        !matches!(self, Verdict::GracefulReject | Verdict::NoEffect)
    }

    pub fn parse(s: &str) -> Option<Verdict> {
        Verdict::ALL.into_iter().find(|v| v.to_string() == s.trim())
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

fn ue_left_idle(trace: &SimTrace) -> bool {
    trace.events.iter().any(|e| {
        matches!(&e.kind, EventKind::StateChange { party: Party::UE, from: PartyPhase::Idle, .. })
    })
}

/// Oracle verdict of a finished session.
///
/// * DisconnectDos: the UE left Idle and ended Disconnected or timed out.
/// * ImpersonationSuccess: an honest party entered a secured phase on a
///   message from the attacker.
/// * KeyExposure: the attacker holds a session key it did not start with,
///   equal to the key of an honest party.
/// * IdentityLeakage: plaintext captured by a `Record` action carries a
///   user identity.
/// * Desync: the live honest parties disagree on the phase.
/// * GracefulReject: an honest party failed or rejected something.
pub fn classify(model: &ProtocolModel, trace: &SimTrace) -> Result<Verdict, CampaignError> {
    if trace.step_cap_exceeded {
        return Err(CampaignError::NonTerminalTrace);
    }
    let ue = trace.phase(Party::UE);
    if ue_left_idle(trace)
        && matches!(ue, PartyPhase::Disconnected | PartyPhase::Failed(crate::sim::FailReason::Timeout))
    {
        return Ok(Verdict::DisconnectDos);
    }
    let impersonated = trace.events.iter().any(|e| {
        matches!(
            &e.kind,
            EventKind::StateChange {
                party,
                to: PartyPhase::NasSecured | PartyPhase::AsSecured,
                cause: Some(Party::Attacker),
                ..
            } if *party != Party::Attacker
        )
    });
    if impersonated {
        return Ok(Verdict::ImpersonationSuccess);
    }
    let exposed = trace.session_keys.iter().any(|k| {
        !trace.attacker_initial.contains(k)
            && trace.attacker_knowledge.get(k).is_some_and(|v| {
                Party::HONEST
                    .iter()
                    .any(|p| trace.terminal.get(p).and_then(|s| s.keys.get(k)) == Some(v))
            })
    });
    if exposed {
        return Ok(Verdict::KeyExposure);
    }
    let leaked = trace.recorded.iter().any(|(_, _, fields)| {
        fields.keys().any(|f| {
            model
                .identifier(f)
                .is_some_and(|d| d.semantic_role == SemanticRole::UserIdentity)
        })
    });
    if leaked {
        return Ok(Verdict::IdentityLeakage);
    }
    let live: BTreeSet<PartyPhase> = Party::HONEST
        .iter()
        .map(|p| trace.phase(*p))
        .filter(|p| !p.is_terminal())
        .collect();
    if live.len() > 1 {
        return Ok(Verdict::Desync);
    }
    let failed = Party::HONEST.iter().any(|p| matches!(trace.phase(*p), PartyPhase::Failed(_)));
    let rejected = trace.notes().any(|(p, t)| p != Party::Attacker && t.starts_with("reject"));
    if failed || rejected {
        return Ok(Verdict::GracefulReject);
    }
    Ok(Verdict::NoEffect)
}

/// Facts worth keeping about a session beyond its verdict.
pub fn observations(trace: &SimTrace) -> Vec<String> {
    let mut out = Vec::new();
    for e in &trace.events {
        match &e.kind {
            EventKind::Note { party: Party::Attacker, text } => {
                if let Some(cmd) = text.strip_prefix("blocked ") {
                    out.push(format!("attacker-received:{cmd}"));
                }
            }
            EventKind::Note { party: Party::UE, text } if text.starts_with("planted:") => {
                out.push(text.clone());
            }
            EventKind::StateChange {
                party: Party::UE,
                to: PartyPhase::AuthDone,
                cause: Some(Party::Attacker),
                ..
            } => out.push("precursor:ue-authenticated-attacker-challenge".into()),
            _ => {}
        }
    }
    for (tag, cmd, _) in &trace.recorded {
        out.push(format!("recorded:{tag}:{cmd}"));
    }
    if trace.step_cap_exceeded {
        out.push("step-cap-exceeded".into());
    }
    out
}

/// Content digest of a trace, used as its reference in results.
pub fn trace_digest(trace: &SimTrace) -> String {
    format!("sha256:{}", hex::encode(&Sha256::digest(trace.to_jsonl().as_bytes())[..8]))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case_id: String,
    pub verdict: Verdict,
    /// Digest of the session trace; [`case_trace`] regenerates it.
    pub trace_ref: String,
    pub seed: u64,
    /// Logical bus steps.
    pub duration: u32,
    #[serde(default)]
    pub observations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FeedbackPair {
    pub identifier: String,
    pub property: Property,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResultKind {
    Bit,
    Command,
    Scenario,
    Session,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub kind: ResultKind,
    pub provenance: Provenance,
    pub results: Vec<CaseResult>,
    pub summary: BTreeMap<Verdict, usize>,
    /// Pairs confirmed by at least one finding.
    pub feedback: BTreeSet<FeedbackPair>,
    /// Pairs exercised only by cases that ended GracefulReject or NoEffect.
    #[serde(default)]
    pub unexercised: BTreeSet<FeedbackPair>,
}

impl CampaignResult {
    pub fn empty(kind: ResultKind, provenance: Provenance) -> Self {
        CampaignResult {
            kind,
            provenance,
            results: Vec::new(),
            summary: Verdict::ALL.iter().map(|v| (*v, 0)).collect(),
            feedback: BTreeSet::new(),
            unexercised: BTreeSet::new(),
        }
    }

    fn push(&mut self, r: CaseResult) {
        *self.summary.entry(r.verdict).or_insert(0) += 1;
        self.results.push(r);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }

    pub fn from_json(s: &str) -> Result<CampaignResult, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// `verdict,count` for every verdict.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("verdict,count\n");
        for v in Verdict::ALL {
            out.push_str(&format!("{v},{}\n", self.summary.get(&v).copied().unwrap_or(0)));
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{:?} campaign, profile {}, model {}\n",
            self.kind, self.provenance.profile, self.provenance.model_id
        );
        for r in &self.results {
            out.push_str(&format!("{:<48} {:<20} steps={:<4}", r.case_id, r.verdict, r.duration));
            if !r.observations.is_empty() {
                out.push_str(&format!(" {}", r.observations.join(", ")));
            }
            out.push('\n');
        }
        for v in Verdict::ALL {
            out.push_str(&format!("{v}: {}\n", self.summary.get(&v).copied().unwrap_or(0)));
        }
        out
    }

    /// Confirmed findings per command, for the planner's feedback term.
    pub fn findings(&self, plan: &FuzzPlan) -> crate::planner::Findings {
        let by_id: BTreeMap<&str, &FuzzCase> = plan.cases.iter().map(|c| (c.case_id(), c)).collect();
        let mut out = crate::planner::Findings::new();
        for r in self.results.iter().filter(|r| r.verdict.is_finding()) {
            if let Some(c) = by_id.get(r.case_id.as_str()) {
                *out.entry(c.command().to_string()).or_insert(0) += 1;
            }
        }
        out
    }
}

/// The (identifier, property) pairs a case exercises.
pub fn case_pairs(model: &ProtocolModel, case: &FuzzCase) -> Vec<FeedbackPair> {
    match case {
        FuzzCase::Bit(c) => vec![FeedbackPair {
            identifier: c.identifier.clone(),
            property: Property::Integrity,
        }],
        FuzzCase::Command(c) => {
            let property = match c.mutation.source {
                Source::Fresh => Property::Authentication,
                Source::Replayed => Property::Accounting,
            };
            model
                .command(&c.mutation.subject)
                .map(|cmd| {
                    cmd.fields
                        .iter()
                        .map(|f| FeedbackPair {
                            identifier: f.clone(),
                            property,
                        })
                        .collect()
                })
                .unwrap_or_default()
        }
    }
}

/// Honest downlink messages of a reference session, by command name, for
/// replayed command-level cases.
pub fn reference_recordings(base: &SimConfig) -> BTreeMap<String, Recording> {
    let model = &base.model;
    let entries = model
        .commands
        .iter()
        .filter(|c| c.direction == Direction::Downlink)
        .map(|c| InterceptEntry::on(Direction::Downlink, &c.name, 0, vec![Action::Record(c.name.clone())]))
        .collect();
    let mut cfg = base.clone();
    cfg.seed = mix_seed(base.seed, "reference-session");
    cfg.interceptor = Some(InterceptorScript { entries });
    cfg.faults.clear();
    cfg.preload.clear();
    run_recording(&cfg).1
}

/// Interceptor script and extra observations for one case.
fn case_script(model: &ProtocolModel, case: &FuzzCase, preload: &BTreeMap<String, Recording>) -> (InterceptorScript, Vec<String>) {
    let mut notes = Vec::new();
    let entry = match case {
        FuzzCase::Bit(c) => {
            let direction = model.command(&c.command).map(|d| d.direction).unwrap_or(Direction::Uplink);
            InterceptEntry::on(
                direction,
                &c.command,
                0,
                vec![Action::InjectModified(BTreeMap::from([(c.identifier.clone(), c.payload)]))],
            )
        }
        FuzzCase::Command(c) => {
            let subject = c.mutation.subject.clone();
            let forge = Action::Forge {
                command: subject.clone(),
                values: BTreeMap::new(),
                sign: true,
            };
            let inject = match c.mutation.source {
                Source::Fresh => forge,
                Source::Replayed if preload.contains_key(&subject) => Action::ReplayRecorded(subject.clone()),
                Source::Replayed => {
                    notes.push(format!("replay-fallback:forged:{subject}"));
                    forge
                }
            };
            use crate::planner::MutationKind::*;
            let actions = match c.mutation.kind {
                Insert => vec![inject, Action::Forward],
                Replace => vec![inject, Action::Block],
                Repeat => vec![Action::Forward, inject],
                Reorder => vec![inject, Action::Delay(2)],
            };
            let mut e = InterceptEntry::on(Direction::Downlink, c.base_command(), 0, actions);
            e.ue_at_least = Some(c.state_precondition);
            e
        }
    };
    (InterceptorScript { entries: vec![entry] }, notes)
}

fn case_config(base: &SimConfig, seed: u64, case: &FuzzCase, preload: &BTreeMap<String, Recording>) -> (SimConfig, Vec<String>) {
    let (script, notes) = case_script(&base.model, case, preload);
    let mut cfg = base.clone();
    cfg.seed = mix_seed(seed, case.case_id());
    cfg.interceptor = Some(script);
    if matches!(case, FuzzCase::Command(_)) {
        cfg.preload = preload.clone();
    }
    (cfg, notes)
}

/// Regenerates the trace of one case of a plan.
pub fn case_trace(plan: &FuzzPlan, case_id: &str, base: &SimConfig) -> Option<SimTrace> {
    let case = plan.cases.iter().find(|c| c.case_id() == case_id)?;
    let preload = match plan.kind {
        PlanKind::Command => reference_recordings(base),
        PlanKind::Bit => BTreeMap::new(),
    };
    let (cfg, _) = case_config(base, base.seed, case, &preload);
    Some(crate::sim::run_session(&cfg))
}

/// Runs `f` over `items` on up to `parallelism` scoped threads, keeping the
/// input order.
pub(crate) fn par_map<T: Sync, R: Send>(items: &[T], parallelism: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if items.is_empty() {
        return Vec::new();
    }
    let workers = parallelism.clamp(1, items.len());
    let chunk = items.len().div_ceil(workers);
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(f).collect::<Vec<R>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("campaign worker panicked"))
            .collect()
    })
}

fn run_case(model: &ProtocolModel, cfg: &SimConfig, mut notes: Vec<String>, case_id: &str) -> (CaseResult, SimTrace) {
    let trace = crate::sim::run_session(cfg);
    let verdict = match classify(model, &trace) {
        Ok(v) => v,
        // A session that never settles counts as a desynchronisation.
        Err(_) => Verdict::Desync,
    };
    let mut obs = observations(&trace);
    obs.append(&mut notes);
    (
        CaseResult {
            case_id: case_id.to_string(),
            verdict,
            trace_ref: trace_digest(&trace),
            seed: cfg.seed,
            duration: trace.steps,
            observations: obs,
        },
        trace,
    )
}

/// Runs every case of the plan in a fresh session. Results are ordered by
/// case id whatever the interleaving.
pub fn execute(plan: &FuzzPlan, base: &SimConfig, parallelism: usize) -> Result<CampaignResult, CampaignError> {
    let model_id = base.model.model_id();
    if plan.provenance.model_id != model_id {
        return Err(CampaignError::ConfigMismatch {
            plan: plan.provenance.model_id.clone(),
            config: model_id,
        });
    }
    let kind = match plan.kind {
        PlanKind::Bit => ResultKind::Bit,
        PlanKind::Command => ResultKind::Command,
    };
    let mut result = CampaignResult::empty(kind, plan.provenance.clone());
    if plan.cases.is_empty() {
        return Ok(result);
    }
    let preload = match plan.kind {
        PlanKind::Command => reference_recordings(base),
        PlanKind::Bit => BTreeMap::new(),
    };
    let mut results = par_map(&plan.cases, parallelism, |case| {
        let (cfg, notes) = case_config(base, base.seed, case, &preload);
        run_case(&base.model, &cfg, notes, case.case_id()).0
    });
    results.sort_by(|a, b| a.case_id.cmp(&b.case_id));

    let verdicts: BTreeMap<&str, Verdict> = results.iter().map(|r| (r.case_id.as_str(), r.verdict)).collect();
    let mut exercised = BTreeSet::new();
    for case in &plan.cases {
        let pairs = case_pairs(&base.model, case);
        if verdicts.get(case.case_id()).is_some_and(|v| v.is_finding()) {
            result.feedback.extend(pairs.iter().cloned());
        }
        exercised.extend(pairs);
    }
    result.unexercised = exercised.difference(&result.feedback).cloned().collect();
    for r in results {
        result.push(r);
    }
    Ok(result)
}

/// Moves confirmed uncertain pairs into the attack region and annotates the
/// report. Nothing is ever moved into the secure region.
pub fn feedback(result: &CampaignResult, report: &IsolationReport) -> Result<IsolationReport, CampaignError> {
    if result.provenance.model_id != report.model_id {
        return Err(CampaignError::ProvenanceMismatch {
            result: result.provenance.model_id.clone(),
            report: report.model_id.clone(),
        });
    }
    let mut out = report.clone();
    let source = format!("campaign over report {}", result.provenance.report_id);
    for pair in &result.feedback {
        let key = pair_key(&pair.identifier, pair.property);
        if let Some(pos) = out
            .uncertain
            .iter()
            .position(|e| e.identifier == pair.identifier && e.property == pair.property)
        {
            let e = out.uncertain.remove(pos);
            out.attack.push(AttackEntry {
                identifier: e.identifier,
                property: e.property,
                phase: e.phase,
                trace: None,
                profile: report.profile.clone(),
            });
            out.annotations
                .entry(key)
                .or_default()
                .push(format!("empirical trace: confirmed by {source}"));
        } else if out.is_attack(&pair.identifier, pair.property) {
            out.annotations
                .entry(key)
                .or_default()
                .push(format!("empirically confirmed by {source}"));
        } else if out.is_secure(&pair.identifier, pair.property) {
            out.annotations
                .entry(key)
                .or_default()
                .push(format!("finding in {source} contradicts the secure verdict"));
        }
    }
    for pair in &result.unexercised {
        if out.is_attack(&pair.identifier, pair.property) || out.is_uncertain(&pair.identifier, pair.property) {
            out.annotations
                .entry(pair_key(&pair.identifier, pair.property))
                .or_default()
                .push("empirically unexercised".to_string());
        }
    }
    for v in out.annotations.values_mut() {
        v.dedup();
    }
    Ok(out)
}
