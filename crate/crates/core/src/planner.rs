//! Formal-guided fuzz planning.
//!
//! Bit-level plans give every identifier of a target command three
//! representative payloads (legal and valid, legal but invalid, illegal).
//! Command-level plans mutate the honest downlink sequence. Both only touch
//! commands that carry at least one identifier outside the secure region of
//! an isolation report. The complexity calculator compares the three
//! strategies on exact big integers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigUint;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::depgraph::{build_graph, weighted_score, DependencyGraph, Mode, WeightVector};
use crate::knowledge::IsolationReport;
use crate::model::{max_value, Direction, Domain, ProtocolModel};
use crate::sim::PartyPhase;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("the report has no attack or uncertain pair on any command")]
    EmptyTargetSet,
    #[error("unknown command `{0}`")]
    UnknownCommand(String),
    #[error("report was produced for model {report}, not {model}")]
    ModelMismatch { report: String, model: String },
    #[error("budget must be at least 1")]
    ZeroBudget,
    #[error("malformed plan: {0}")]
    Format(String),
}

/// Seed for one unit of work, reproducible from the global seed and a label.
pub fn mix_seed(seed: u64, label: &str) -> u64 {
    let digest = Sha256::digest(label.as_bytes());
    let mut b = [0u8; 8];
    b.copy_from_slice(&digest[..8]);
    seed ^ u64::from_be_bytes(b)
}

/// u128 values as `0x…` strings.
mod hex_u128 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u128, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{v:#x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u128, D::Error> {
        let s = String::deserialize(d)?;
        u128::from_str_radix(s.trim_start_matches("0x"), 16).map_err(serde::de::Error::custom)
    }
}

// ------------------------------------------------------------------ cases

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LogicalClass {
    LegalValid,
    LegalInvalid,
    IllegalRandom,
}

impl LogicalClass {
    pub const ALL: [LogicalClass; 3] = [
        LogicalClass::LegalValid,
        LogicalClass::LegalInvalid,
        LogicalClass::IllegalRandom,
    ];

    fn tag(self) -> &'static str {
        match self {
            LogicalClass::LegalValid => "valid",
            LogicalClass::LegalInvalid => "invalid",
            LogicalClass::IllegalRandom => "illegal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitLevelCase {
    pub case_id: String,
    pub command: String,
    pub identifier: String,
    pub logical_class: LogicalClass,
    #[serde(with = "hex_u128")]
    pub payload: u128,
    pub seed: u64,
    /// The class has no representative of its own for this identifier and
    /// the payload stands in (see [`bit_payload`]).
    #[serde(default)]
    pub collapsed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MutationKind {
    /// The subject goes on the air just before the base command.
    Insert,
    /// The subject goes on the air instead of the base command.
    Replace,
    /// The subject follows the base command.
    Repeat,
    /// The subject goes first and the base command is held back two steps.
    Reorder,
}

impl MutationKind {
    pub const ALL: [MutationKind; 4] = [
        MutationKind::Insert,
        MutationKind::Replace,
        MutationKind::Repeat,
        MutationKind::Reorder,
    ];
}

/// Where the injected subject comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Source {
    /// Built by the attacker from its knowledge.
    Fresh,
    /// Captured in an earlier honest session.
    Replayed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mutation {
    pub kind: MutationKind,
    pub position: usize,
    pub subject: String,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandLevelCase {
    pub case_id: String,
    pub base_sequence: Vec<String>,
    pub mutation: Mutation,
    /// The mutation fires only once the UE has reached this phase.
    pub state_precondition: PartyPhase,
}

impl CommandLevelCase {
    /// The downlink sequence the UE would see if every command were sent.
    pub fn mutated_sequence(&self) -> Vec<String> {
        let mut s = self.base_sequence.clone();
        let p = self.mutation.position.min(s.len().saturating_sub(1));
        let subject = self.mutation.subject.clone();
        match self.mutation.kind {
            MutationKind::Insert => s.insert(p, subject),
            MutationKind::Replace => s[p] = subject,
            MutationKind::Repeat => s.insert(p + 1, subject),
            MutationKind::Reorder => {
                let base = s.remove(p);
                s.insert(p, subject);
                let to = (p + 3).min(s.len());
                s.insert(to, base);
            }
        }
        s
    }

    pub fn base_command(&self) -> &str {
        &self.base_sequence[self.mutation.position.min(self.base_sequence.len() - 1)]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "level")]
pub enum FuzzCase {
    Bit(BitLevelCase),
    Command(CommandLevelCase),
}

impl FuzzCase {
    pub fn case_id(&self) -> &str {
        match self {
            FuzzCase::Bit(c) => &c.case_id,
            FuzzCase::Command(c) => &c.case_id,
        }
    }

    /// The command the case is about, for the findings history.
    pub fn command(&self) -> &str {
        match self {
            FuzzCase::Bit(c) => &c.command,
            FuzzCase::Command(c) => &c.mutation.subject,
        }
    }

    /// Identifiers whose value or delivery the case changes.
    pub fn perturbed(&self, model: &ProtocolModel) -> BTreeSet<String> {
        match self {
            FuzzCase::Bit(c) => BTreeSet::from([c.identifier.clone()]),
            FuzzCase::Command(c) => {
                // Replace and Reorder drop or delay the base command but leave
                // its fields alone, so only the injected subject counts.
                model
                    .command(&c.mutation.subject)
                    .map(|cmd| cmd.fields.iter().cloned().collect())
                    .unwrap_or_default()
            }
        }
    }
}

// ------------------------------------------------------------------ plans

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanKind {
    Bit,
    Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    UniformRandom,
    PriorityGuided,
}

impl Scheme {
    pub fn parse(s: &str) -> Option<Scheme> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" | "uniformrandom" | "random" => Some(Scheme::UniformRandom),
            "priority" | "priorityguided" | "guided" => Some(Scheme::PriorityGuided),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub report_id: String,
    pub profile: String,
    pub model_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzPlan {
    pub kind: PlanKind,
    pub provenance: Provenance,
    pub seed: u64,
    /// Ordering scheme of a command-level plan.
    pub scheme: Option<Scheme>,
    pub cases: Vec<FuzzCase>,
    pub priority_scores: BTreeMap<String, f64>,
}

#[derive(Serialize, Deserialize)]
struct PlanHeader {
    kind: PlanKind,
    provenance: Provenance,
    seed: u64,
    scheme: Option<Scheme>,
    cases: usize,
}

#[derive(Serialize, Deserialize)]
struct PlanLine {
    priority: f64,
    case: FuzzCase,
}

impl FuzzPlan {
    /// Header line, then one case per line in plan order.
    pub fn to_jsonl(&self) -> String {
        let header = PlanHeader {
            kind: self.kind,
            provenance: self.provenance.clone(),
            seed: self.seed,
            scheme: self.scheme,
            cases: self.cases.len(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for c in &self.cases {
            let line = PlanLine {
                priority: self.priority_scores.get(c.case_id()).copied().unwrap_or(0.0),
                case: c.clone(),
            };
            out.push_str(&serde_json::to_string(&line).expect("case serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<FuzzPlan, PlanError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let head = lines.next().ok_or_else(|| PlanError::Format("empty plan".into()))?;
        let header: PlanHeader =
            serde_json::from_str(head).map_err(|e| PlanError::Format(format!("header: {e}")))?;
        let mut cases = Vec::new();
        let mut priority_scores = BTreeMap::new();
        for (n, l) in lines.enumerate() {
            let line: PlanLine = serde_json::from_str(l)
                .map_err(|e| PlanError::Format(format!("case line {}: {e}", n + 2)))?;
            priority_scores.insert(line.case.case_id().to_string(), line.priority);
            cases.push(line.case);
        }
        if cases.len() != header.cases {
            return Err(PlanError::Format(format!(
                "header announces {} cases, found {}",
                header.cases,
                cases.len()
            )));
        }
        Ok(FuzzPlan {
            kind: header.kind,
            provenance: header.provenance,
            seed: header.seed,
            scheme: header.scheme,
            cases,
            priority_scores,
        })
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    /// Cases whose command is `command`.
    pub fn cases_for<'a>(&'a self, command: &'a str) -> impl Iterator<Item = &'a FuzzCase> + 'a {
        self.cases.iter().filter(move |c| c.command() == command)
    }
}

/// Confirmed findings per command, from earlier campaigns.
pub type Findings = BTreeMap<String, u32>;

#[derive(Debug, Clone, Default)]
pub struct PlanOptions {
    pub seed: u64,
    pub weights: WeightVector,
    pub findings: Findings,
}

impl PlanOptions {
    pub fn seeded(seed: u64) -> Self {
        PlanOptions {
            seed,
            ..Default::default()
        }
    }
}

// ---------------------------------------------------------------- scoring

/// Priority scorer with the weighted security score of each identifier
/// computed once.
pub struct Scorer<'a> {
    model: &'a ProtocolModel,
    graph: DependencyGraph,
    weights: WeightVector,
    cache: BTreeMap<String, f64>,
}

impl<'a> Scorer<'a> {
    pub fn new(model: &'a ProtocolModel, weights: WeightVector) -> Self {
        Scorer {
            model,
            graph: build_graph(model),
            weights,
            cache: BTreeMap::new(),
        }
    }

    pub fn identifier_score(&mut self, name: &str) -> f64 {
        if let Some(s) = self.cache.get(name) {
            return *s;
        }
        let s = self
            .graph
            .security_vector(name, Mode::Frontier)
            .map(|v| weighted_score(v, self.weights))
            .unwrap_or(0.0);
        self.cache.insert(name.to_string(), s);
        s
    }

    /// Weighted security score summed over the perturbed identifiers, plus
    /// one for every confirmed finding on the case's command.
    pub fn score(&mut self, case: &FuzzCase, findings: &Findings) -> f64 {
        let base: f64 = case
            .perturbed(self.model)
            .iter()
            .map(|id| self.identifier_score(id))
            .sum();
        base + f64::from(findings.get(case.command()).copied().unwrap_or(0))
    }
}

pub fn priority_score(model: &ProtocolModel, case: &FuzzCase, findings: &Findings, weights: WeightVector) -> f64 {
    Scorer::new(model, weights).score(case, findings)
}

// -------------------------------------------------------------- bit level

fn provenance(model: &ProtocolModel, report: &IsolationReport) -> Result<Provenance, PlanError> {
    let id = model.model_id();
    if report.model_id != id {
        return Err(PlanError::ModelMismatch {
            report: report.model_id.clone(),
            model: id,
        });
    }
    Ok(Provenance {
        report_id: report.report_id(),
        profile: report.profile.clone(),
        model_id: id,
    })
}

/// Commands carrying at least one identifier outside the secure region, in
/// model order.
pub fn target_commands(model: &ProtocolModel, report: &IsolationReport) -> Vec<String> {
    model
        .commands
        .iter()
        .filter(|c| c.fields.iter().any(|f| report.is_target(f)))
        .map(|c| c.name.clone())
        .collect()
}

/// Smallest pattern of the width outside the domain, if any.
fn smallest_illegal(domain: &Domain, width: u32) -> Option<u128> {
    match domain {
        Domain::Opaque => None,
        Domain::Range { lo, hi } => {
            if *lo > 0 {
                Some(0)
            } else if *hi < max_value(width) {
                Some(hi + 1)
            } else {
                None
            }
        }
        Domain::Enumerated(values) => {
            let legal: BTreeSet<u128> = values.iter().copied().collect();
            (0..=max_value(width).min(u128::from(u16::MAX))).find(|v| !legal.contains(v))
        }
    }
}

/// Payload of one logical class for an identifier, and whether the class
/// collapsed.
///
/// * `LegalValid` is the honest-session value (or the smallest legal one).
/// * `LegalInvalid` is the smallest legal value other than that; with a
///   single legal value it collapses to the valid one.
/// * `IllegalRandom` is drawn uniformly from the complement of the domain by
///   rejection sampling. When every pattern is legal it collapses to a
///   seeded random legal value.
pub fn bit_payload(
    def: &crate::model::IdentifierDef,
    class: LogicalClass,
    rng: &mut ChaCha8Rng,
) -> (u128, bool) {
    let w = def.bit_width;
    let nominal = def.nominal_value();
    let draw = |rng: &mut ChaCha8Rng| rng.gen::<u128>() & max_value(w);
    match class {
        LogicalClass::LegalValid => (nominal, false),
        LogicalClass::LegalInvalid => match def.domain.smallest_legal_other_than(w, nominal) {
            Some(v) => (v, false),
            None => (nominal, true),
        },
        LogicalClass::IllegalRandom => {
            if def.domain.is_total(w) {
                return (draw(rng), true);
            }
            for _ in 0..64 {
                let v = draw(rng);
                if !def.domain.contains(w, v) {
                    return (v, false);
                }
            }
            match smallest_illegal(&def.domain, w) {
                Some(v) => (v, false),
                None => (nominal, true),
            }
        }
    }
}

fn bit_cases_for(model: &ProtocolModel, command: &str, seed: u64, counter: &mut usize) -> Vec<BitLevelCase> {
    let Some(cmd) = model.command(command) else { return Vec::new() };
    let mut out = Vec::new();
    for f in &cmd.fields {
        let Some(def) = model.identifier(f) else { continue };
        for class in LogicalClass::ALL {
            let case_id = format!("b{:04}:{}:{}:{}", *counter, command, f, class.tag());
            *counter += 1;
            let case_seed = mix_seed(seed, &format!("{command}:{f}:{}", class.tag()));
            let mut rng = ChaCha8Rng::seed_from_u64(case_seed);
            let (payload, collapsed) = bit_payload(def, class, &mut rng);
            out.push(BitLevelCase {
                case_id,
                command: command.to_string(),
                identifier: f.clone(),
                logical_class: class,
                payload,
                seed: case_seed,
                collapsed,
            });
        }
    }
    out
}

/// Three cases per identifier of every target command.
pub fn plan_bit_level(model: &ProtocolModel, report: &IsolationReport, opts: &PlanOptions) -> Result<FuzzPlan, PlanError> {
    let prov = provenance(model, report)?;
    let targets = target_commands(model, report);
    if targets.is_empty() {
        return Err(PlanError::EmptyTargetSet);
    }
    let mut counter = 0;
    let cases: Vec<FuzzCase> = targets
        .iter()
        .flat_map(|c| bit_cases_for(model, c, opts.seed, &mut counter))
        .map(FuzzCase::Bit)
        .collect();
    let mut scorer = Scorer::new(model, opts.weights);
    let priority_scores = cases
        .iter()
        .map(|c| (c.case_id().to_string(), scorer.score(c, &opts.findings)))
        .collect();
    Ok(FuzzPlan {
        kind: PlanKind::Bit,
        provenance: prov,
        seed: opts.seed,
        scheme: None,
        cases,
        priority_scores,
    })
}

// ---------------------------------------------------------- command level

/// Every downlink command, in model order.
pub fn downlink_alphabet(model: &ProtocolModel) -> Vec<String> {
    model
        .commands
        .iter()
        .filter(|c| c.direction == Direction::Downlink)
        .map(|c| c.name.clone())
        .collect()
}

/// The honest downlink sequence: the model's `downlink` sequence if it
/// declares one, else the whole alphabet.
pub fn base_sequence(model: &ProtocolModel) -> Vec<String> {
    model
        .sequence("downlink")
        .map(|s| s.base.clone())
        .unwrap_or_else(|| downlink_alphabet(model))
}

/// Full command-level enumeration in canonical order: kind, position,
/// subject, source, UE phase. Subjects with every field in the secure
/// region are skipped.
pub fn enumerate_command_cases(model: &ProtocolModel, report: &IsolationReport) -> Vec<CommandLevelCase> {
    let base = base_sequence(model);
    let subjects: Vec<String> = downlink_alphabet(model)
        .into_iter()
        .filter(|s| {
            model
                .command(s)
                .is_some_and(|c| c.fields.iter().any(|f| report.is_target(f)))
        })
        .collect();
    let mut out = Vec::new();
    let mut n = 0;
    for kind in MutationKind::ALL {
        for position in 0..base.len() {
            for subject in &subjects {
                for source in [Source::Fresh, Source::Replayed] {
                    for phase in PartyPhase::LIVE {
                        out.push(CommandLevelCase {
                            case_id: format!("c{n:05}"),
                            base_sequence: base.clone(),
                            mutation: Mutation {
                                kind,
                                position,
                                subject: subject.clone(),
                                source,
                            },
                            state_precondition: phase,
                        });
                        n += 1;
                    }
                }
            }
        }
    }
    out
}

/// Orders `cases` by `scheme` and keeps the first `budget`.
pub fn order_cases(
    cases: Vec<FuzzCase>,
    scores: &BTreeMap<String, f64>,
    scheme: Scheme,
    seed: u64,
    budget: usize,
) -> Vec<FuzzCase> {
    let mut cases = cases;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    cases.shuffle(&mut rng);
    if scheme == Scheme::PriorityGuided {
        // Repeats of one mutation signature differ only in their state
        // precondition, so each repeat counts for less: the k-th case of a
        // signature is ranked at score / k.
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        let mut keyed: Vec<(f64, FuzzCase)> = cases
            .into_iter()
            .map(|c| {
                let signature = match &c {
                    FuzzCase::Command(cc) => format!("{:?}", cc.mutation),
                    FuzzCase::Bit(b) => b.case_id.clone(),
                };
                let k = seen.entry(signature).or_default();
                *k += 1;
                let score = scores.get(c.case_id()).copied().unwrap_or(0.0);
                (score / *k as f64, c)
            })
            .collect();
        // Stable sort keeps the shuffled order among equal ranks.
        keyed.sort_by(|a, b| b.0.total_cmp(&a.0));
        cases = keyed.into_iter().map(|(_, c)| c).collect();
    }
    cases.truncate(budget);
    cases
}

pub fn plan_command_level(
    model: &ProtocolModel,
    report: &IsolationReport,
    budget: usize,
    scheme: Scheme,
    opts: &PlanOptions,
) -> Result<FuzzPlan, PlanError> {
    if budget == 0 {
        return Err(PlanError::ZeroBudget);
    }
    let prov = provenance(model, report)?;
    let cases: Vec<FuzzCase> = enumerate_command_cases(model, report)
        .into_iter()
        .map(FuzzCase::Command)
        .collect();
    let mut scorer = Scorer::new(model, opts.weights);
    let scores: BTreeMap<String, f64> = cases
        .iter()
        .map(|c| (c.case_id().to_string(), scorer.score(c, &opts.findings)))
        .collect();
    let cases = order_cases(cases, &scores, scheme, opts.seed, budget);
    let priority_scores = cases
        .iter()
        .map(|c| (c.case_id().to_string(), scores[c.case_id()]))
        .collect();
    Ok(FuzzPlan {
        kind: PlanKind::Command,
        provenance: prov,
        seed: opts.seed,
        scheme: Some(scheme),
        cases,
        priority_scores,
    })
}

// ------------------------------------------------------------- complexity

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Strategy {
    BruteForce,
    RuleBased,
    FormalGuided,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::BruteForce, Strategy::RuleBased, Strategy::FormalGuided];

    pub fn parse(s: &str) -> Option<Strategy> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "bruteforce" | "brute" => Some(Strategy::BruteForce),
            "rulebased" | "rule" => Some(Strategy::RuleBased),
            "formalguided" | "formal" | "guided" => Some(Strategy::FormalGuided),
            _ => None,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

fn resolve<'a>(model: &'a ProtocolModel, commands: &[&str]) -> Result<Vec<&'a crate::model::CommandDef>, PlanError> {
    let names: BTreeSet<&str> = commands.iter().copied().collect();
    names
        .into_iter()
        .map(|n| model.command(n).ok_or_else(|| PlanError::UnknownCommand(n.to_string())))
        .collect()
}

/// Number of cases each strategy needs to cover the given commands.
///
/// * BruteForce: every bit pattern of the concatenated commands,
///   `2^(sum of declared lengths)`.
/// * RuleBased: every legal value of each identifier, summed over the
///   identifiers (a fully legal-domain identifier counts `2^width`).
/// * FormalGuided: the bit-level case count, three per identifier.
pub fn complexity(model: &ProtocolModel, commands: &[&str], strategy: Strategy) -> Result<BigUint, PlanError> {
    let cmds = resolve(model, commands)?;
    let fields = || {
        cmds.iter()
            .flat_map(|c| c.fields.iter())
            .filter_map(|f| model.identifier(f))
    };
    Ok(match strategy {
        Strategy::BruteForce => {
            let bits: u64 = cmds.iter().map(|c| u64::from(c.declared_length)).sum();
            BigUint::from(1u32) << bits
        }
        Strategy::RuleBased => fields().map(|d| d.domain.size(d.bit_width)).sum(),
        Strategy::FormalGuided => BigUint::from(3 * fields().count()),
    })
}

/// The rule-based count read as a single product over the identifier
/// widths, `2^(sum of widths)`. Reported alongside the canonical sum form.
pub fn rule_based_literal(model: &ProtocolModel, commands: &[&str]) -> Result<BigUint, PlanError> {
    let cmds = resolve(model, commands)?;
    let bits: u64 = cmds
        .iter()
        .flat_map(|c| c.fields.iter())
        .filter_map(|f| model.identifier(f))
        .map(|d| u64::from(d.bit_width))
        .sum();
    Ok(BigUint::from(1u32) << bits)
}

/// log2 of a big integer, exact for powers of two.
pub fn log2(n: &BigUint) -> f64 {
    let bits = n.bits();
    if bits == 0 {
        return f64::NEG_INFINITY;
    }
    if bits <= 64 {
        let v = n.iter_u64_digits().next().unwrap_or(0);
        return (v as f64).log2();
    }
    let shift = bits - 64;
    let top: BigUint = n >> shift;
    let v = top.iter_u64_digits().next().unwrap_or(0);
    (v as f64).log2() + shift as f64
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComplexityRow {
    pub commands: Vec<String>,
    pub strategy: Strategy,
    pub count: BigUint,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ComplexityReport {
    pub rows: Vec<ComplexityRow>,
}

impl ComplexityReport {
    pub fn compute(model: &ProtocolModel, commands: &[&str], strategies: &[Strategy]) -> Result<Self, PlanError> {
        let names: Vec<String> = resolve(model, commands)?.iter().map(|c| c.name.clone()).collect();
        let rows = strategies
            .iter()
            .map(|s| {
                Ok(ComplexityRow {
                    commands: names.clone(),
                    strategy: *s,
                    count: complexity(model, commands, *s)?,
                })
            })
            .collect::<Result<_, PlanError>>()?;
        Ok(ComplexityReport { rows })
    }

    /// Columns: commands (`;`-joined), strategy, count, log2_count.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("commands,strategy,count,log2_count\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.4}\n",
                r.commands.join(";"),
                r.strategy,
                r.count,
                log2(&r.count)
            ));
        }
        out
    }
}
