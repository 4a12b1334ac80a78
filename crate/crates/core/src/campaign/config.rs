//! Campaign configuration files.
//!
//! Same block grammar as the model file:
//!
//! ```text
//! [campaign]
//! model = bundled          # or a path, relative to the config file
//! profile = table1_rrc
//! level = bit              # bit | command | scenario | session
//! commands = RRCConnectionRequest
//! budget = 100
//! scheme = priority        # priority | uniform
//! fortifications = HashedImsiWithIntegrity
//! seed = 7
//! parallelism = 4
//!
//! [intercept]              # session level only, any number of blocks
//! direction = downlink
//! command = ASSecurityModeCommand
//! occurrence = 0
//! when = NasSecured
//! actions = block; forge ASSecurityModeCommand AS-EEA=0 signed
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::{
    classify, execute, feedback, observations, run_scenario, trace_digest, CampaignError,
    CampaignResult, CaseResult, ResultKind, Scenario,
};
use crate::knowledge::{isolate_named, IsolationReport};
use crate::model::parse::{read_blocks, Block, Entry};
use crate::model::{
    load_model, nsa_model, parse_number, Direction, FortificationKind, FortificationToggle,
    ModelError, ProtocolModel,
};
use crate::planner::{plan_bit_level, plan_command_level, FuzzPlan, PlanKind, PlanOptions, Provenance, Scheme};
use crate::sim::{run_session, Action, InterceptEntry, InterceptorScript, PartyPhase, SimConfig, SimTrace, ValueSource};

const SECTIONS: &[(&str, &[&str])] = &[
    (
        "campaign",
        &[
            "model",
            "profile",
            "level",
            "plan",
            "budget",
            "scheme",
            "fortifications",
            "seed",
            "parallelism",
            "commands",
            "scenario",
        ],
    ),
    ("intercept", &["direction", "command", "occurrence", "when", "actions"]),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Bit,
    Command,
    Scenario,
    Session,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSource {
    Bundled,
    Path(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignConfig {
    pub model: ModelSource,
    pub profile: String,
    pub level: Level,
    /// A previously written plan (JSON Lines); overrides `level`.
    pub plan: Option<PathBuf>,
    pub budget: Option<usize>,
    pub scheme: Scheme,
    pub fortifications: Vec<FortificationToggle>,
    pub seed: u64,
    pub parallelism: usize,
    /// Restricts a bit-level plan to these commands.
    pub commands: Vec<String>,
    /// Scenario names; empty means all of them.
    pub scenarios: Vec<String>,
    pub interceptor: InterceptorScript,
}

fn err(e: &Entry, message: impl Into<String>) -> ModelError {
    ModelError::Parse {
        line: e.line,
        column: e.value_column,
        message: message.into(),
    }
}

fn list(e: &Entry) -> Vec<String> {
    e.value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty() && !s.eq_ignore_ascii_case("none"))
        .map(str::to_string)
        .collect()
}

fn number<T: TryFrom<u128>>(e: &Entry) -> Result<T, ModelError> {
    parse_number(&e.value)
        .and_then(|v| T::try_from(v).ok())
        .ok_or_else(|| err(e, format!("invalid number `{}`", e.value)))
}

fn phase_named(s: &str) -> Option<PartyPhase> {
    PartyPhase::LIVE.into_iter().find(|p| format!("{p:?}").eq_ignore_ascii_case(s.trim()))
}

fn assignment(w: &str) -> Result<(String, &str), String> {
    let (k, v) = w
        .split_once('=')
        .ok_or_else(|| format!("expected field=value, got `{w}`"))?;
    Ok((k.trim().to_string(), v.trim()))
}

/// Parses one action of an `actions` list.
pub fn parse_action(text: &str) -> Result<Action, String> {
    let mut words = text.split_whitespace();
    let head = words.next().ok_or("empty action")?.to_ascii_lowercase();
    let rest: Vec<&str> = words.collect();
    let one = |what: &str| -> Result<String, String> {
        match rest.as_slice() {
            [x] => Ok(x.to_string()),
            _ => Err(format!("`{head}` takes exactly one {what}")),
        }
    };
    match head.as_str() {
        "forward" if rest.is_empty() => Ok(Action::Forward),
        "block" if rest.is_empty() => Ok(Action::Block),
        "record" => Ok(Action::Record(one("tag")?)),
        "replay" => Ok(Action::ReplayRecorded(one("tag")?)),
        "delay" => one("step count")?
            .parse()
            .map(Action::Delay)
            .map_err(|_| "delay needs a step count".to_string()),
        "modify" => {
            if rest.is_empty() {
                return Err("modify needs at least one field=value".into());
            }
            let mut values = BTreeMap::new();
            for w in &rest {
                let (k, v) = assignment(w)?;
                let n = parse_number(v).ok_or_else(|| format!("invalid number `{v}`"))?;
                values.insert(k, n);
            }
            Ok(Action::InjectModified(values))
        }
        "forge" => {
            let (command, tail) = rest.split_first().ok_or("forge needs a command name")?;
            let mut values = BTreeMap::new();
            let mut sign = false;
            for w in tail {
                if w.eq_ignore_ascii_case("signed") {
                    sign = true;
                    continue;
                }
                let (k, v) = assignment(w)?;
                let source = match v.strip_prefix('@') {
                    Some(id) => ValueSource::Copy(id.to_string()),
                    None => ValueSource::Literal(parse_number(v).ok_or_else(|| format!("invalid number `{v}`"))?),
                };
                values.insert(k, source);
            }
            Ok(Action::Forge {
                command: command.to_string(),
                values,
                sign,
            })
        }
        _ => Err(format!("unknown action `{text}`")),
    }
}

fn intercept_entry(b: &Block) -> Result<InterceptEntry, ModelError> {
    let direction = match b.optional("direction") {
        None => None,
        Some(e) => match e.value.to_ascii_lowercase().as_str() {
            "uplink" => Some(Direction::Uplink),
            "downlink" => Some(Direction::Downlink),
            "any" | "*" => None,
            _ => return Err(err(e, "direction must be uplink, downlink or any")),
        },
    };
    let command = b
        .optional("command")
        .map(|e| e.value.clone())
        .filter(|c| c != "*");
    let occurrence = match b.optional("occurrence") {
        Some(e) if e.value != "*" => Some(number::<u32>(e)?),
        _ => None,
    };
    let ue_at_least = match b.optional("when") {
        Some(e) => Some(phase_named(&e.value).ok_or_else(|| err(e, format!("unknown phase `{}`", e.value)))?),
        None => None,
    };
    let e = b.required("actions")?;
    let actions = e
        .value
        .split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|a| parse_action(a).map_err(|m| err(e, m)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(InterceptEntry {
        direction,
        command,
        occurrence,
        ue_at_least,
        actions,
    })
}

pub fn parse_campaign_config(text: &str) -> Result<CampaignConfig, ModelError> {
    let blocks = read_blocks(text, SECTIONS)?;
    let mut campaign = blocks.iter().filter(|b| b.kind == "campaign");
    let c = campaign.next().ok_or(ModelError::Parse {
        line: 1,
        column: 1,
        message: "missing [campaign] section".into(),
    })?;
    if let Some(dup) = campaign.next() {
        return Err(ModelError::Parse {
            line: dup.line,
            column: 1,
            message: "more than one [campaign] section".into(),
        });
    }
    let model = match c.optional("model") {
        None => ModelSource::Bundled,
        Some(e) if e.value.eq_ignore_ascii_case("bundled") => ModelSource::Bundled,
        Some(e) => ModelSource::Path(PathBuf::from(&e.value)),
    };
    let level = match c.optional("level") {
        None => Level::Bit,
        Some(e) => match e.value.to_ascii_lowercase().as_str() {
            "bit" => Level::Bit,
            "command" => Level::Command,
            "scenario" => Level::Scenario,
            "session" => Level::Session,
            _ => return Err(err(e, "level must be bit, command, scenario or session")),
        },
    };
    let scheme = match c.optional("scheme") {
        None => Scheme::PriorityGuided,
        Some(e) => Scheme::parse(&e.value).ok_or_else(|| err(e, "scheme must be priority or uniform"))?,
    };
    let fortifications = match c.optional("fortifications") {
        None => Vec::new(),
        Some(e) => list(e)
            .iter()
            .map(|k| {
                FortificationKind::parse(k)
                    .map(FortificationToggle::new)
                    .ok_or_else(|| err(e, format!("unknown fortification `{k}`")))
            })
            .collect::<Result<_, _>>()?,
    };
    let budget = match c.optional("budget") {
        Some(e) => {
            let n: usize = number(e)?;
            if n == 0 {
                return Err(err(e, "budget must be at least 1"));
            }
            Some(n)
        }
        None => None,
    };
    let parallelism = match c.optional("parallelism") {
        Some(e) => number::<usize>(e)?.max(1),
        None => 1,
    };
    let scenarios = c.optional("scenario").map(list).unwrap_or_default();
    if let Some(e) = c.optional("scenario") {
        for s in &scenarios {
            if s != "all" && Scenario::parse(s).is_none() {
                return Err(err(e, format!("unknown scenario `{s}`")));
            }
        }
    }
    let entries = blocks
        .iter()
        .filter(|b| b.kind == "intercept")
        .map(intercept_entry)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CampaignConfig {
        model,
        profile: c.optional("profile").map(|e| e.value.clone()).unwrap_or_else(|| "default".into()),
        level,
        plan: c.optional("plan").map(|e| PathBuf::from(&e.value)),
        budget,
        scheme,
        fortifications,
        seed: c.optional("seed").map(number).transpose()?.unwrap_or(0),
        parallelism,
        commands: c.optional("commands").map(list).unwrap_or_default(),
        scenarios: scenarios.into_iter().filter(|s| s != "all").collect(),
        interceptor: InterceptorScript { entries },
    })
}

/// Everything a configured run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub result: CampaignResult,
    pub plan: Option<FuzzPlan>,
    /// The isolation report after campaign feedback (plan levels only).
    pub report: Option<IsolationReport>,
    /// The single trace of a session-level run.
    pub trace: Option<SimTrace>,
}

impl CampaignConfig {
    pub fn load_model(&self, base_dir: &Path) -> Result<ProtocolModel, CampaignError> {
        Ok(match &self.model {
            ModelSource::Bundled => nsa_model(),
            ModelSource::Path(p) => load_model(base_dir.join(p))?,
        })
    }

    pub fn sim_config(&self, model: ProtocolModel) -> SimConfig {
        SimConfig::new(model, self.seed)
            .with_profile(&self.profile)
            .with_fortifications(self.fortifications.clone())
    }
}

/// Runs a parsed configuration. Relative paths resolve against `base_dir`.
pub fn run_config(cfg: &CampaignConfig, base_dir: &Path) -> Result<RunOutput, CampaignError> {
    let model = cfg.load_model(base_dir)?;
    if model.profile(&cfg.profile).is_none() {
        return Err(CampaignError::Invalid(format!("unknown profile `{}`", cfg.profile)));
    }
    let sim = cfg.sim_config(model.clone());
    let provenance = Provenance {
        report_id: "-".into(),
        profile: cfg.profile.clone(),
        model_id: model.model_id(),
    };

    let planned = match (&cfg.plan, cfg.level) {
        (Some(path), _) => {
            let p = base_dir.join(path);
            let text = std::fs::read_to_string(&p)
                .map_err(|e| CampaignError::Invalid(format!("cannot read {}: {e}", p.display())))?;
            Some(FuzzPlan::from_jsonl(&text)?)
        }
        (None, Level::Bit) | (None, Level::Command) => {
            let report = isolate_named(&model, &cfg.profile).map_err(|e| CampaignError::Invalid(e.to_string()))?;
            let opts = PlanOptions::seeded(cfg.seed);
            let mut plan = if cfg.level == Level::Bit {
                plan_bit_level(&model, &report, &opts)?
            } else {
                plan_command_level(&model, &report, cfg.budget.unwrap_or(usize::MAX), cfg.scheme, &opts)?
            };
            if plan.kind == PlanKind::Bit {
                if !cfg.commands.is_empty() {
                    plan.cases.retain(|c| cfg.commands.iter().any(|n| n == c.command()));
                }
                if let Some(b) = cfg.budget {
                    plan.cases.truncate(b);
                }
                let keep: Vec<String> = plan.cases.iter().map(|c| c.case_id().to_string()).collect();
                plan.priority_scores.retain(|k, _| keep.contains(k));
            }
            Some(plan)
        }
        _ => None,
    };

    if let Some(plan) = planned {
        let result = execute(&plan, &sim, cfg.parallelism)?;
        let report = isolate_named(&model, &plan.provenance.profile)
            .ok()
            .map(|r| feedback(&result, &r))
            .transpose()?;
        return Ok(RunOutput {
            result,
            plan: Some(plan),
            report,
            trace: None,
        });
    }

    match cfg.level {
        Level::Scenario => {
            let names: Vec<String> = if cfg.scenarios.is_empty() {
                Scenario::ALL.iter().map(|s| s.to_string()).collect()
            } else {
                cfg.scenarios.clone()
            };
            let mut result = CampaignResult::empty(ResultKind::Scenario, provenance);
            // The scenario's own profile applies unless the config names one.
            let mut base = sim.clone();
            if cfg.profile == "default" {
                base.profile = None;
            }
            for n in names {
                result.push(run_scenario(&n, &base)?);
            }
            result.results.sort_by(|a, b| a.case_id.cmp(&b.case_id));
            Ok(RunOutput {
                result,
                plan: None,
                report: None,
                trace: None,
            })
        }
        _ => {
            let sim = sim.with_interceptor(cfg.interceptor.clone());
            let trace = run_session(&sim);
            let mut result = CampaignResult::empty(ResultKind::Session, provenance);
            result.push(CaseResult {
                case_id: "session".into(),
                verdict: classify(&model, &trace)?,
                trace_ref: trace_digest(&trace),
                seed: sim.seed,
                duration: trace.steps,
                observations: observations(&trace),
            });
            Ok(RunOutput {
                result,
                plan: None,
                report: None,
                trace: Some(trace),
            })
        }
    }
}
