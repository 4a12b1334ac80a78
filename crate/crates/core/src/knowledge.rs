//! Attacker-knowledge saturation and search-space isolation.
//!
//! The engine computes the least fixed point of seven monotone rules over a
//! finite fact universe (knowledge of identifiers, ability to modify them,
//! to replay commands and to impersonate a party). Facts are discovered in
//! breadth-first rounds, and the first derivation of each fact is kept, so
//! every fact has a shortest-depth trace back to the profile's assumptions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{
    AssumptionProfile, Capability, Direction, Domain, Phase, Property, ProtocolModel, Protection,
    SemanticRole,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KnowledgeError {
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("unknown profile `{0}`")]
    UnknownProfile(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    UE,
    BaseStation,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Fact {
    Knows(String),
    CanModify(String),
    CanReplay(String),
    CanImpersonate(Role),
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fact::Knows(x) => write!(f, "Knows({x})"),
            Fact::CanModify(x) => write!(f, "CanModify({x})"),
            Fact::CanReplay(c) => write!(f, "CanReplay({c})"),
            Fact::CanImpersonate(r) => write!(f, "CanImpersonate({r:?})"),
        }
    }
}

/// Rule identifiers. `Assumed` marks a fact taken from the profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RuleId {
    Assumed,
    R1Eavesdrop,
    R2Derive,
    R3Invert,
    R4Decrypt,
    R5Modify,
    R6Replay,
    R7Impersonate,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Step {
    pub rule: RuleId,
    pub premises: Vec<Fact>,
    pub conclusion: Fact,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackTrace {
    pub goal: Fact,
    pub steps: Vec<Step>,
}

impl AttackTrace {
    /// Numbered plain-text rendering.
    pub fn render(&self) -> String {
        let mut out = format!("goal: {}\n", self.goal);
        for (n, s) in self.steps.iter().enumerate() {
            let prem: Vec<String> = s.premises.iter().map(ToString::to_string).collect();
            let _ = writeln!(
                out,
                "  {}. {:?}: [{}] => {}",
                n + 1,
                s.rule,
                prem.join(", "),
                s.conclusion
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Secure,
    AttackTraceFound(AttackTrace),
    Uncertain(String),
}

/// Which fact breaks a property of an identifier.
pub fn goal_fact(model: &ProtocolModel, identifier: &str, p: Property) -> Option<Fact> {
    let def = model.identifier(identifier)?;
    let owner = model.command(&def.owner_command);
    Some(match p {
        Property::Confidentiality => Fact::Knows(identifier.to_string()),
        Property::Integrity => Fact::CanModify(identifier.to_string()),
        Property::Authentication => {
            if model.protection_of(identifier, p).is_none() {
                Fact::CanModify(identifier.to_string())
            } else {
                let role = match owner.map(|c| c.direction) {
                    Some(Direction::Uplink) => Role::UE,
                    _ => Role::BaseStation,
                };
                Fact::CanImpersonate(role)
            }
        }
        Property::Accounting => Fact::CanReplay(def.owner_command.clone()),
    })
}

/// Session keys grouped by the phase of their owner command: key-material
/// outputs of a derivation that no other derivation consumes.
pub fn session_key_groups(model: &ProtocolModel) -> BTreeMap<Phase, BTreeSet<String>> {
    let consumed: BTreeSet<&str> = model
        .kdfs
        .iter()
        .flat_map(|k| k.inputs.iter().map(String::as_str))
        .collect();
    let mut groups: BTreeMap<Phase, BTreeSet<String>> = BTreeMap::new();
    for k in &model.kdfs {
        let Some(def) = model.identifier(&k.output) else { continue };
        if def.semantic_role != SemanticRole::KeyMaterial || consumed.contains(k.output.as_str()) {
            continue;
        }
        if let Some(phase) = model.phase_of(&k.output) {
            groups.entry(phase).or_default().insert(k.output.clone());
        }
    }
    groups
}

/// Opaque key material that never travels, is not derived, and is not
/// declared secret by construction. Knowledge of such a value is outside
/// what the model can decide.
pub fn external_secrets(model: &ProtocolModel) -> BTreeSet<String> {
    model
        .identifiers
        .iter()
        .filter(|i| {
            i.semantic_role == SemanticRole::KeyMaterial
                && i.domain == Domain::Opaque
                && !i.assumed_secret
                && !model.on_wire(&i.name)
                && model.kdf_for(&i.name).is_none()
        })
        .map(|i| i.name.clone())
        .collect()
}

/// A candidate rule application.
type Firing = (RuleId, Vec<Fact>, Fact);

/// Rule instances precomputed from the model and the profile capabilities.
struct Rules {
    /// R1: identifiers visible in clear on the wire.
    clear: Vec<String>,
    /// R2: (inputs, output).
    derive: Vec<(Vec<String>, String)>,
    /// R3: (output, invertible input).
    invert: Vec<(String, String)>,
    /// R4: (enciphered identifier, its confidentiality protectors).
    decrypt: Vec<(String, Vec<String>)>,
    /// R5: (identifier, integrity protectors).
    modify: Vec<(String, Vec<String>)>,
    /// R6: replayable commands.
    replay: Vec<String>,
    /// R7: session-key groups.
    impersonate: Vec<Vec<String>>,
}

impl Rules {
    fn new(model: &ProtocolModel, profile: &AssumptionProfile) -> Rules {
        let eavesdrop = profile.has(Capability::Eavesdrop);
        let wire: BTreeSet<&str> = model
            .commands
            .iter()
            .flat_map(|c| c.fields.iter().map(String::as_str))
            .collect();
        let mut clear = Vec::new();
        let mut decrypt = Vec::new();
        if eavesdrop {
            for x in &wire {
                match model.protection_of(x, Property::Confidentiality) {
                    Protection::None => clear.push(x.to_string()),
                    Protection::ProtectedBy(s) => {
                        decrypt.push((x.to_string(), s.into_iter().collect()))
                    }
                }
            }
        }
        let derive = model
            .kdfs
            .iter()
            .map(|k| (k.inputs.iter().cloned().collect(), k.output.clone()))
            .collect();
        let invert = model
            .kdfs
            .iter()
            .flat_map(|k| {
                k.invertible_inputs
                    .iter()
                    .map(move |i| (k.output.clone(), i.clone()))
            })
            .collect();
        let modify = if profile.has(Capability::Inject) {
            model
                .identifiers
                .iter()
                .map(|i| {
                    let prot = model
                        .protection_of(&i.name, Property::Integrity)
                        .protectors()
                        .cloned()
                        .collect();
                    (i.name.clone(), prot)
                })
                .collect()
        } else {
            Vec::new()
        };
        let replay = if profile.has(Capability::Replay) {
            model
                .commands
                .iter()
                .filter(|c| {
                    c.fields
                        .iter()
                        .all(|f| model.protection_of(f, Property::Accounting).is_none())
                })
                .map(|c| c.name.clone())
                .collect()
        } else {
            Vec::new()
        };
        let impersonate = if profile.has(Capability::MitmRelay) {
            session_key_groups(model)
                .into_values()
                .map(|g| g.into_iter().collect())
                .collect()
        } else {
            Vec::new()
        };
        Rules {
            clear,
            derive,
            invert,
            decrypt,
            modify,
            replay,
            impersonate,
        }
    }

    /// Every rule application whose premises hold and whose conclusion is new.
    fn firings(&self, known: &BTreeSet<Fact>) -> Vec<Firing> {
        let k = |x: &String| Fact::Knows(x.clone());
        let all_known = |xs: &[String]| xs.iter().all(|x| known.contains(&k(x)));
        let mut out = Vec::new();
        let mut push = |rule, premises: Vec<Fact>, conclusion: Fact| {
            if !known.contains(&conclusion) {
                out.push((rule, premises, conclusion));
            }
        };
        for x in &self.clear {
            push(RuleId::R1Eavesdrop, vec![], k(x));
        }
        for (inputs, output) in &self.derive {
            if all_known(inputs) {
                push(RuleId::R2Derive, inputs.iter().map(k).collect(), k(output));
            }
        }
        for (output, input) in &self.invert {
            if known.contains(&k(output)) {
                push(RuleId::R3Invert, vec![k(output)], k(input));
            }
        }
        for (x, prot) in &self.decrypt {
            if all_known(prot) {
                push(RuleId::R4Decrypt, prot.iter().map(k).collect(), k(x));
            }
        }
        for (x, prot) in &self.modify {
            if all_known(prot) {
                push(
                    RuleId::R5Modify,
                    prot.iter().map(k).collect(),
                    Fact::CanModify(x.clone()),
                );
            }
        }
        for c in &self.replay {
            push(RuleId::R6Replay, vec![], Fact::CanReplay(c.clone()));
        }
        for group in &self.impersonate {
            if all_known(group) {
                for role in [Role::UE, Role::BaseStation] {
                    push(
                        RuleId::R7Impersonate,
                        group.iter().map(k).collect(),
                        Fact::CanImpersonate(role),
                    );
                }
            }
        }
        out
    }
}

/// Result of a saturation run, with the first derivation of every fact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Saturation {
    pub initial: BTreeSet<Fact>,
    pub facts: BTreeSet<Fact>,
    /// fact -> (round, rule, premises)
    derivations: BTreeMap<Fact, (usize, RuleId, Vec<Fact>)>,
    pub rounds: usize,
}

impl Saturation {
    pub fn contains(&self, f: &Fact) -> bool {
        self.facts.contains(f)
    }

    /// Derivation trace for a fact that holds; `None` otherwise.
    pub fn trace(&self, goal: &Fact) -> Option<AttackTrace> {
        if !self.facts.contains(goal) {
            return None;
        }
        if self.initial.contains(goal) {
            return Some(AttackTrace {
                goal: goal.clone(),
                steps: vec![Step {
                    rule: RuleId::Assumed,
                    premises: vec![],
                    conclusion: goal.clone(),
                }],
            });
        }
        let mut needed = BTreeSet::new();
        let mut stack = vec![goal.clone()];
        while let Some(f) = stack.pop() {
            if let Some((_, _, prem)) = self.derivations.get(&f) {
                if needed.insert(f) {
                    stack.extend(prem.iter().cloned());
                }
            }
        }
        let mut steps: Vec<(usize, Step)> = needed
            .into_iter()
            .map(|f| {
                let (round, rule, premises) = self.derivations[&f].clone();
                (
                    round,
                    Step {
                        rule,
                        premises,
                        conclusion: f,
                    },
                )
            })
            .collect();
        steps.sort_by(|a, b| {
            a.0.cmp(&b.0)
                .then_with(|| (a.1.conclusion == *goal).cmp(&(b.1.conclusion == *goal)))
                .then_with(|| a.1.cmp(&b.1))
        });
        Some(AttackTrace {
            goal: goal.clone(),
            steps: steps.into_iter().map(|(_, s)| s).collect(),
        })
    }
}

fn initial_facts(profile: &AssumptionProfile, extra: &BTreeSet<String>) -> BTreeSet<Fact> {
    profile
        .known_identifiers
        .iter()
        .chain(extra)
        .map(|x| Fact::Knows(x.clone()))
        .collect()
}

/// Least fixed point of the rules, discovered in breadth-first rounds.
pub fn saturate(model: &ProtocolModel, profile: &AssumptionProfile) -> Saturation {
    saturate_with(model, profile, &BTreeSet::new())
}

/// As [`saturate`], additionally assuming knowledge of `extra` identifiers.
pub fn saturate_with(
    model: &ProtocolModel,
    profile: &AssumptionProfile,
    extra: &BTreeSet<String>,
) -> Saturation {
    let rules = Rules::new(model, profile);
    let initial = initial_facts(profile, extra);
    let mut facts = initial.clone();
    let mut derivations = BTreeMap::new();
    let mut round = 0;
    loop {
        let mut firings = rules.firings(&facts);
        if firings.is_empty() {
            break;
        }
        round += 1;
        // Among competing derivations of one fact, keep the smallest by rule
        // id and then premise order.
        firings.sort();
        for (rule, premises, conclusion) in firings {
            derivations
                .entry(conclusion)
                .or_insert((round, rule, premises));
        }
        for f in derivations.keys() {
            facts.insert(f.clone());
        }
    }
    Saturation {
        initial,
        facts,
        derivations,
        rounds: round,
    }
}

/// Fixed point reached by applying single rule firings in a shuffled order.
/// Used to check that the result does not depend on rule order.
pub fn saturate_ordered(model: &ProtocolModel, profile: &AssumptionProfile, seed: u64) -> BTreeSet<Fact> {
    let rules = Rules::new(model, profile);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut facts = initial_facts(profile, &BTreeSet::new());
    loop {
        let mut firings = rules.firings(&facts);
        if firings.is_empty() {
            return facts;
        }
        firings.shuffle(&mut rng);
        let take = 1 + (firings.len() / 3);
        for (_, _, c) in firings.into_iter().take(take) {
            facts.insert(c);
        }
    }
}

/// Mechanically checks one step against the rules, given the facts already
/// established (profile assumptions and earlier conclusions).
pub fn check_step(
    model: &ProtocolModel,
    profile: &AssumptionProfile,
    established: &BTreeSet<Fact>,
    step: &Step,
) -> bool {
    if !step.premises.iter().all(|p| established.contains(p)) {
        return false;
    }
    let rules = Rules::new(model, profile);
    if step.rule == RuleId::Assumed {
        return matches!(&step.conclusion, Fact::Knows(x) if profile.known_identifiers.contains(x));
    }
    // The premises alone must license the conclusion.
    let premises: BTreeSet<Fact> = step.premises.iter().cloned().collect();
    rules
        .firings(&premises)
        .into_iter()
        .any(|(r, p, c)| r == step.rule && c == step.conclusion && p == step.premises)
}

/// Replays a trace from the profile's initial facts.
pub fn replay_trace(
    model: &ProtocolModel,
    profile: &AssumptionProfile,
    trace: &AttackTrace,
) -> Result<(), String> {
    let mut established = initial_facts(profile, &BTreeSet::new());
    for (n, step) in trace.steps.iter().enumerate() {
        if !check_step(model, profile, &established, step) {
            return Err(format!("step {} ({:?} => {}) does not follow", n + 1, step.rule, step.conclusion));
        }
        established.insert(step.conclusion.clone());
    }
    match trace.steps.last() {
        Some(s) if s.conclusion == trace.goal => Ok(()),
        _ => Err("trace does not end in its goal".into()),
    }
}

/// Reason attached to uncertain pairs.
pub const UNCERTAIN_LABEL: &str = "opaque-dependency rule";

/// Precomputed saturations for one (model, profile).
pub struct Analyzer<'a> {
    model: &'a ProtocolModel,
    profile: &'a AssumptionProfile,
    base: Saturation,
    externals: BTreeSet<String>,
    granted: BTreeMap<Option<String>, Saturation>,
}

impl<'a> Analyzer<'a> {
    pub fn new(model: &'a ProtocolModel, profile: &'a AssumptionProfile) -> Self {
        Analyzer {
            model,
            profile,
            base: saturate(model, profile),
            externals: external_secrets(model),
            granted: BTreeMap::new(),
        }
    }

    pub fn saturation(&self) -> &Saturation {
        &self.base
    }

    pub fn verdict(&mut self, identifier: &str, p: Property) -> Result<Verdict, KnowledgeError> {
        let goal = goal_fact(self.model, identifier, p)
            .ok_or_else(|| KnowledgeError::UnknownIdentifier(identifier.to_string()))?;
        if let Some(t) = self.base.trace(&goal) {
            return Ok(Verdict::AttackTraceFound(t));
        }
        let key = self
            .externals
            .contains(identifier)
            .then(|| identifier.to_string());
        let mut grant = self.externals.clone();
        if let Some(k) = &key {
            grant.remove(k);
        }
        grant.retain(|x| !self.base.contains(&Fact::Knows(x.clone())));
        if grant.is_empty() {
            return Ok(Verdict::Secure);
        }
        let (model, profile) = (self.model, self.profile);
        let sat = self
            .granted
            .entry(key)
            .or_insert_with(|| saturate_with(model, profile, &grant));
        if sat.contains(&goal) {
            let names: Vec<&str> = grant.iter().map(String::as_str).collect();
            Ok(Verdict::Uncertain(format!(
                "{UNCERTAIN_LABEL}: {goal} follows only if the opaque secret(s) {} were known",
                names.join(", ")
            )))
        } else {
            Ok(Verdict::Secure)
        }
    }
}

pub fn verdict(
    model: &ProtocolModel,
    profile: &AssumptionProfile,
    identifier: &str,
    p: Property,
) -> Result<Verdict, KnowledgeError> {
    Analyzer::new(model, profile).verdict(identifier, p)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairEntry {
    pub identifier: String,
    pub property: Property,
    pub phase: Option<Phase>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackEntry {
    pub identifier: String,
    pub property: Property,
    pub phase: Option<Phase>,
    /// Derivation trace; `None` for pairs confirmed only empirically.
    pub trace: Option<AttackTrace>,
    /// Which profile produced the trace (differs from the report's own
    /// profile name only in merged reports).
    pub profile: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UncertainEntry {
    pub identifier: String,
    pub property: Property,
    pub phase: Option<Phase>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsolationReport {
    pub profile: String,
    pub model_id: String,
    pub secure: Vec<PairEntry>,
    pub attack: Vec<AttackEntry>,
    pub uncertain: Vec<UncertainEntry>,
    /// Free-form notes keyed by `identifier:property`.
    #[serde(default)]
    pub annotations: BTreeMap<String, Vec<String>>,
}

pub fn pair_key(identifier: &str, p: Property) -> String {
    format!("{identifier}:{p}")
}

impl IsolationReport {
    /// Content digest used as plan provenance.
    pub fn report_id(&self) -> String {
        let json = serde_json::to_vec(self).expect("report serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<IsolationReport, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn is_attack(&self, identifier: &str, p: Property) -> bool {
        self.attack.iter().any(|e| e.identifier == identifier && e.property == p)
    }

    pub fn is_uncertain(&self, identifier: &str, p: Property) -> bool {
        self.uncertain.iter().any(|e| e.identifier == identifier && e.property == p)
    }

    pub fn is_secure(&self, identifier: &str, p: Property) -> bool {
        self.secure.iter().any(|e| e.identifier == identifier && e.property == p)
    }

    /// True if any property of the identifier lies outside the secure region.
    pub fn is_target(&self, identifier: &str) -> bool {
        self.attack.iter().any(|e| e.identifier == identifier)
            || self.uncertain.iter().any(|e| e.identifier == identifier)
    }

    pub fn phase_of(&self, identifier: &str) -> Option<Phase> {
        self.secure
            .iter()
            .filter(|e| e.identifier == identifier)
            .map(|e| e.phase)
            .chain(self.attack.iter().filter(|e| e.identifier == identifier).map(|e| e.phase))
            .chain(self.uncertain.iter().filter(|e| e.identifier == identifier).map(|e| e.phase))
            .next()
            .flatten()
    }

    pub fn total_pairs(&self) -> usize {
        self.secure.len() + self.attack.len() + self.uncertain.len()
    }
}

/// Verdict for every (identifier, property) pair under one profile.
pub fn isolate(model: &ProtocolModel, profile: &AssumptionProfile) -> IsolationReport {
    let mut analyzer = Analyzer::new(model, profile);
    let mut report = IsolationReport {
        profile: profile.name.clone(),
        model_id: model.model_id(),
        secure: Vec::new(),
        attack: Vec::new(),
        uncertain: Vec::new(),
        annotations: BTreeMap::new(),
    };
    for def in &model.identifiers {
        let phase = model.phase_of(&def.name);
        for p in Property::ALL {
            match analyzer.verdict(&def.name, p).expect("identifier from model") {
                Verdict::Secure => report.secure.push(PairEntry {
                    identifier: def.name.clone(),
                    property: p,
                    phase,
                }),
                Verdict::AttackTraceFound(t) => report.attack.push(AttackEntry {
                    identifier: def.name.clone(),
                    property: p,
                    phase,
                    trace: Some(t),
                    profile: profile.name.clone(),
                }),
                Verdict::Uncertain(reason) => report.uncertain.push(UncertainEntry {
                    identifier: def.name.clone(),
                    property: p,
                    phase,
                    reason,
                }),
            }
        }
    }
    report
}

/// Looks a profile up by name and isolates under it.
pub fn isolate_named(model: &ProtocolModel, profile: &str) -> Result<IsolationReport, KnowledgeError> {
    let p = model
        .profile(profile)
        .ok_or_else(|| KnowledgeError::UnknownProfile(profile.to_string()))?;
    Ok(isolate(model, p))
}

/// Combines per-profile reports: a pair is under attack if any profile finds
/// a trace, uncertain if none does but some profile is uncertain, and secure
/// otherwise.
pub fn merge_reports(reports: &[IsolationReport]) -> IsolationReport {
    let name = reports
        .iter()
        .map(|r| r.profile.as_str())
        .collect::<Vec<_>>()
        .join("+");
    let mut merged = IsolationReport {
        profile: name,
        model_id: reports.first().map(|r| r.model_id.clone()).unwrap_or_default(),
        secure: Vec::new(),
        attack: Vec::new(),
        uncertain: Vec::new(),
        annotations: BTreeMap::new(),
    };
    let mut pairs: BTreeSet<PairEntry> = BTreeSet::new();
    for r in reports {
        pairs.extend(r.secure.iter().cloned());
        pairs.extend(r.attack.iter().map(|e| PairEntry {
            identifier: e.identifier.clone(),
            property: e.property,
            phase: e.phase,
        }));
        pairs.extend(r.uncertain.iter().map(|e| PairEntry {
            identifier: e.identifier.clone(),
            property: e.property,
            phase: e.phase,
        }));
        for (k, v) in &r.annotations {
            merged.annotations.entry(k.clone()).or_default().extend(v.iter().cloned());
        }
    }
    for pair in pairs {
        let attack: Vec<&AttackEntry> = reports
            .iter()
            .flat_map(|r| r.attack.iter())
            .filter(|e| e.identifier == pair.identifier && e.property == pair.property)
            .collect();
        if !attack.is_empty() {
            merged.attack.extend(attack.into_iter().cloned());
            continue;
        }
        let unc = reports
            .iter()
            .flat_map(|r| r.uncertain.iter())
            .find(|e| e.identifier == pair.identifier && e.property == pair.property);
        match unc {
            Some(u) => merged.uncertain.push(u.clone()),
            None => merged.secure.push(pair),
        }
    }
    merged
}

/// Names of the profiles that stand for the rows of the findings table.
pub const TABLE1_PROFILES: [&str; 4] = ["table1_rrc", "table1_auth", "table1_nas", "table1_as"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Template {
    RrcModification,
    AuthRequestDosReplay,
    NasKeyExposure,
    AsKeyExposure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackModel {
    pub template: Template,
    pub supporting_facts: BTreeSet<Fact>,
    pub traces: Vec<AttackTrace>,
    /// Profile under which the supporting traces were found.
    pub profiles: BTreeSet<String>,
}

/// Instantiates the attack-model templates whose trigger facts all appear
/// among the conclusions of the report's traces.
pub fn synthesize_attack_models(report: &IsolationReport) -> Vec<AttackModel> {
    // conclusion -> (trace, profile) that establishes it
    let mut established: BTreeMap<Fact, Vec<(&AttackTrace, &str)>> = BTreeMap::new();
    for e in &report.attack {
        if let Some(t) = &e.trace {
            for s in &t.steps {
                established
                    .entry(s.conclusion.clone())
                    .or_default()
                    .push((t, e.profile.as_str()));
            }
        }
    }
    let knows = |x: &str| Fact::Knows(x.to_string());
    let mut candidates: Vec<(Template, Vec<Vec<Fact>>)> = Vec::new();
    let rrc_modify: Vec<Vec<Fact>> = established
        .keys()
        .filter_map(|f| match f {
            Fact::CanModify(x) if report.phase_of(x) == Some(Phase::RrcSetup) => Some(vec![f.clone()]),
            _ => None,
        })
        .collect();
    candidates.push((Template::RrcModification, rrc_modify));
    candidates.push((
        Template::AuthRequestDosReplay,
        vec![vec![Fact::CanReplay("AuthenticationRequest".into())]],
    ));
    candidates.push((
        Template::NasKeyExposure,
        vec![vec![knows("K_NASenc"), knows("K_NASint")]],
    ));
    candidates.push((
        Template::AsKeyExposure,
        vec![vec![knows("K_RRCenc"), knows("K_RRCint"), knows("K_UPenc")]],
    ));

    let mut out = Vec::new();
    for (template, alternatives) in candidates {
        let mut supporting = BTreeSet::new();
        let mut traces: Vec<AttackTrace> = Vec::new();
        let mut profiles = BTreeSet::new();
        for facts in alternatives {
            if !facts.iter().all(|f| established.contains_key(f)) {
                continue;
            }
            for f in facts {
                // Prefer a trace whose goal is the trigger fact itself.
                let hits = &established[&f];
                let (t, prof) = hits
                    .iter()
                    .find(|(t, _)| t.goal == f)
                    .copied()
                    .unwrap_or(hits[0]);
                if !traces.contains(t) {
                    traces.push(t.clone());
                }
                profiles.insert(prof.to_string());
                supporting.insert(f);
            }
        }
        if !supporting.is_empty() {
            out.push(AttackModel {
                template,
                supporting_facts: supporting,
                traces,
                profiles,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::nsa_model;

    #[test]
    fn eavesdropper_reads_the_radio_identity_in_one_step() {
        let m = nsa_model();
        let v = verdict(&m, m.profile("default").unwrap(), "UE-Identity", Property::Confidentiality).unwrap();
        match v {
            Verdict::AttackTraceFound(t) => {
                assert_eq!(t.steps.len(), 1);
                assert_eq!(t.steps[0].rule, RuleId::R1Eavesdrop);
            }
            other => panic!("expected a trace, got {other:?}"),
        }
    }

    #[test]
    fn session_key_groups_of_bundled_model() {
        let g = session_key_groups(&nsa_model());
        assert_eq!(g.len(), 2);
        assert_eq!(g[&Phase::NasSecurity].len(), 2);
        assert_eq!(g[&Phase::AsSecurity].len(), 3);
    }
}
