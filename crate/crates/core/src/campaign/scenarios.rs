//! Scripted attack scenarios against the NSA attach flow.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{classify, observations, trace_digest, CampaignError, CaseResult};
use crate::model::{Direction, Property};
use crate::planner::mix_seed;
use crate::sim::{
    run_recording, run_session, Action, InterceptEntry, InterceptorScript, Recording,
    SimConfig, SimTrace, ValueSource,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scenario {
    /// Fake RRC reject and release around connection setup.
    RrcRejectReleaseRepeat,
    /// Only the attacker talks to the UE: a captured authentication request
    /// is replayed in place of the network's.
    AuthReplayAttackerOnly,
    /// The session's own authentication request is replayed after NAS
    /// security is up.
    AuthReplaySameCommandRace,
    /// A stale authentication request races the network's fresh one.
    AuthReplayDifferentCommandRace,
    /// Fake base station takes over NAS and AS security setup.
    NasMitmFakeBaseStation,
    /// Replay of the NAS security mode command cuts the UE off.
    NasDosCut,
    /// Fake base station takes over AS security setup.
    AsMitmFakeBaseStation,
    /// Replay of the AS security mode command cuts the UE off.
    AsDosCut,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

fn entry(direction: Direction, command: &str, occurrence: u32, actions: Vec<Action>) -> InterceptEntry {
    InterceptEntry::on(direction, command, occurrence, actions)
}

fn forge(command: &str, sign: bool) -> Action {
    Action::Forge {
        command: command.to_string(),
        values: BTreeMap::new(),
        sign,
    }
}

fn forge_with(command: &str, values: &[(&str, u128)]) -> Action {
    Action::Forge {
        command: command.to_string(),
        values: values
            .iter()
            .map(|(k, v)| (k.to_string(), ValueSource::Literal(*v)))
            .collect(),
        sign: false,
    }
}

const STALE: &str = "stale-auth";

impl Scenario {
    pub const ALL: [Scenario; 8] = [
        Scenario::RrcRejectReleaseRepeat,
        Scenario::AuthReplayAttackerOnly,
        Scenario::AuthReplaySameCommandRace,
        Scenario::AuthReplayDifferentCommandRace,
        Scenario::NasMitmFakeBaseStation,
        Scenario::NasDosCut,
        Scenario::AsMitmFakeBaseStation,
        Scenario::AsDosCut,
    ];

    pub fn parse(s: &str) -> Option<Scenario> {
        Scenario::ALL.into_iter().find(|x| x.to_string() == s.trim())
    }

    /// Assumption profile the scenario is written for.
    pub fn profile(self) -> &'static str {
        use Scenario::*;
        match self {
            RrcRejectReleaseRepeat => "table1_rrc",
            AuthReplayAttackerOnly | AuthReplaySameCommandRace | AuthReplayDifferentCommandRace => "table1_auth",
            NasMitmFakeBaseStation | NasDosCut => "table1_nas",
            AsMitmFakeBaseStation | AsDosCut => "table1_as",
        }
    }

    /// The (identifier, property) pair whose formal verdict the scenario
    /// exercises.
    pub fn concordance(self) -> (&'static str, Property) {
        use Scenario::*;
        match self {
            RrcRejectReleaseRepeat => ("releaseCause", Property::Integrity),
            AuthReplayAttackerOnly | AuthReplaySameCommandRace | AuthReplayDifferentCommandRace => {
                ("RAND", Property::Accounting)
            }
            NasMitmFakeBaseStation => ("K_NASint", Property::Authentication),
            NasDosCut => ("K_NASint", Property::Confidentiality),
            AsMitmFakeBaseStation => ("K_RRCint", Property::Authentication),
            AsDosCut => ("K_RRCint", Property::Confidentiality),
        }
    }

    /// Whether the scenario needs an authentication request captured in an
    /// earlier session.
    fn needs_stale_challenge(self) -> bool {
        matches!(self, Scenario::AuthReplayAttackerOnly | Scenario::AuthReplayDifferentCommandRace)
    }

    pub fn script(self) -> InterceptorScript {
        use Direction::{Downlink as D, Uplink as U};
        use Scenario::*;
        let entries = match self {
            RrcRejectReleaseRepeat => vec![
                entry(
                    D,
                    "RRCConnectionSetup",
                    0,
                    vec![
                        Action::Forward,
                        forge_with("RRCReject", &[("waitTime", 15)]),
                        forge_with("RRCRelease", &[("releaseCause", 2)]),
                    ],
                ),
                entry(D, "AuthenticationRequest", 0, vec![Action::Forward, forge_with("RRCRelease", &[("releaseCause", 2)])]),
            ],
            AuthReplayAttackerOnly => vec![
                entry(D, "AuthenticationRequest", 0, vec![Action::Block, Action::ReplayRecorded(STALE.into())]),
                entry(U, "AuthenticationResponse", 0, vec![Action::Record("auth-response".into()), Action::Block]),
            ],
            AuthReplaySameCommandRace => vec![
                entry(D, "AuthenticationRequest", 0, vec![Action::Record("auth".into())]),
                entry(U, "NASSecurityModeComplete", 0, vec![Action::Forward, Action::ReplayRecorded("auth".into())]),
            ],
            AuthReplayDifferentCommandRace => vec![entry(
                D,
                "AuthenticationRequest",
                0,
                vec![Action::Forward, Action::ReplayRecorded(STALE.into())],
            )],
            NasMitmFakeBaseStation => vec![
                entry(D, "NASSecurityModeCommand", 0, vec![Action::Block, forge("NASSecurityModeCommand", true)]),
                entry(U, "NASSecurityModeComplete", 0, vec![Action::Block, forge("ASSecurityModeCommand", true)]),
                entry(U, "ASSecurityModeComplete", 0, vec![Action::Block]),
            ],
            NasDosCut => vec![
                entry(D, "NASSecurityModeCommand", 0, vec![Action::Record("nas-smc".into())]),
                entry(U, "NASSecurityModeComplete", 0, vec![Action::Forward, Action::ReplayRecorded("nas-smc".into())]),
            ],
            AsMitmFakeBaseStation => vec![
                entry(D, "ASSecurityModeCommand", 0, vec![Action::Block, forge("ASSecurityModeCommand", true)]),
                entry(U, "ASSecurityModeComplete", 0, vec![Action::Block]),
            ],
            AsDosCut => vec![
                entry(D, "ASSecurityModeCommand", 0, vec![Action::Record("as-smc".into())]),
                entry(U, "ASSecurityModeComplete", 0, vec![Action::Forward, Action::ReplayRecorded("as-smc".into())]),
            ],
        };
        InterceptorScript { entries }
    }

    /// Session configuration for the scenario on top of `base`. The profile
    /// of `base` wins when set.
    pub fn config(self, base: &SimConfig) -> SimConfig {
        let mut cfg = base.clone();
        if cfg.profile.is_none() {
            cfg.profile = Some(self.profile().to_string());
        }
        cfg.interceptor = Some(self.script());
        if self.needs_stale_challenge() {
            cfg.preload.insert(STALE.to_string(), stale_challenge(base));
        }
        cfg
    }
}

/// An authentication request captured from an earlier, honest session of
/// the same subscriber.
fn stale_challenge(base: &SimConfig) -> Recording {
    let mut earlier = base.clone();
    earlier.seed = mix_seed(base.seed, "earlier-session");
    earlier.interceptor = Some(InterceptorScript {
        entries: vec![entry(
            Direction::Downlink,
            "AuthenticationRequest",
            0,
            vec![Action::Record(STALE.into())],
        )],
    });
    earlier.preload.clear();
    earlier.faults.clear();
    run_recording(&earlier)
        .1
        .remove(STALE)
        .expect("an honest session carries an authentication request")
}

pub fn scenario_trace(scenario: Scenario, base: &SimConfig) -> SimTrace {
    run_session(&scenario.config(base))
}

/// Runs one scenario and classifies it.
pub fn run_scenario(name: &str, base: &SimConfig) -> Result<CaseResult, CampaignError> {
    let scenario = Scenario::parse(name).ok_or_else(|| CampaignError::UnknownScenario(name.to_string()))?;
    let cfg = scenario.config(base);
    let trace = run_session(&cfg);
    let verdict = classify(&cfg.model, &trace)?;
    Ok(CaseResult {
        case_id: scenario.to_string(),
        verdict,
        trace_ref: trace_digest(&trace),
        seed: cfg.seed,
        duration: trace.steps,
        observations: observations(&trace),
    })
}
