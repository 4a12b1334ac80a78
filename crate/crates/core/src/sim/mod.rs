//! Deterministic simulator of the NSA attach flow.
//!
//! Three honest parties (UE, base station, core network) exchange bit-exact
//! [`WireMessage`]s over a bus that an [`InterceptorScript`] can tamper with.
//! The attacker sees every transmission on the radio link and learns what it
//! can decrypt. A session is driven by a logical clock and is fully
//! determined by its [`SimConfig`].

mod bus;
pub mod codec;
pub mod kdf;
mod parties;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use bus::{run_recording, run_session, Action, InterceptEntry, InterceptorScript, Recording, ValueSource};
pub use codec::{decode, encode, field_span, BitString, CodecError, Meta, Values, WireMessage};
pub use parties::{step, Backhaul, Input, PartyState, StepOutput};

use crate::model::{FortificationToggle, Protection, Property, ProtocolModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Party {
    UE,
    BaseStation,
    CoreNetwork,
    Attacker,
}

impl Party {
    pub const HONEST: [Party; 3] = [Party::UE, Party::BaseStation, Party::CoreNetwork];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FailReason {
    Timeout,
    IntegrityFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PartyPhase {
    Idle,
    RrcRequested,
    RrcComplete,
    AuthPending,
    AuthDone,
    NasSecured,
    AsSecured,
    Disconnected,
    Failed(FailReason),
}

impl PartyPhase {
    /// The live phases, in protocol order.
    pub const LIVE: [PartyPhase; 7] = [
        PartyPhase::Idle,
        PartyPhase::RrcRequested,
        PartyPhase::RrcComplete,
        PartyPhase::AuthPending,
        PartyPhase::AuthDone,
        PartyPhase::NasSecured,
        PartyPhase::AsSecured,
    ];

    /// Position in the attach order; `None` once the party has dropped out.
    pub fn progress(self) -> Option<usize> {
        Self::LIVE.iter().position(|p| *p == self)
    }

    pub fn is_terminal(self) -> bool {
        self.progress().is_none()
    }

    /// True when `self` is live and at least as far along as `other`.
    pub fn reached(self, other: PartyPhase) -> bool {
        match (self.progress(), other.progress()) {
            (Some(a), Some(b)) => a >= b,
            _ => false,
        }
    }
}

/// How a delivered message came to be on the bus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Origin {
    Honest,
    Modified,
    Forged,
    Replayed,
}

impl Origin {
    pub fn is_attacker(self) -> bool {
        self != Origin::Honest
    }
}

/// A fault planted in the UE: receiving `command` from the attacker with the
/// given origin while in `phase` drops the connection.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PlantedFault {
    pub id: String,
    pub command: String,
    pub phase: PartyPhase,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub model: ProtocolModel,
    /// Attacker assumption profile; its known identifiers seed the
    /// attacker's knowledge with their true values.
    pub profile: Option<String>,
    pub interceptor: Option<InterceptorScript>,
    pub fortifications: Vec<FortificationToggle>,
    pub seed: u64,
    pub faults: Vec<PlantedFault>,
    /// When true, planted faults only leave a note and do not disconnect.
    #[serde(default)]
    pub faults_probe_only: bool,
    pub timeout_steps: u32,
    pub step_cap: u32,
    /// Messages available to `ReplayRecorded` before the session starts.
    pub preload: BTreeMap<String, Recording>,
}

impl SimConfig {
    pub fn new(model: ProtocolModel, seed: u64) -> Self {
        SimConfig {
            model,
            profile: None,
            interceptor: None,
            fortifications: Vec::new(),
            seed,
            faults: Vec::new(),
            faults_probe_only: false,
            timeout_steps: 10,
            step_cap: 200,
            preload: BTreeMap::new(),
        }
    }

    pub fn with_profile(mut self, profile: &str) -> Self {
        self.profile = Some(profile.to_string());
        self
    }

    pub fn with_interceptor(mut self, script: InterceptorScript) -> Self {
        self.interceptor = Some(script);
        self
    }

    pub fn with_fortifications(mut self, toggles: Vec<FortificationToggle>) -> Self {
        self.fortifications = toggles;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event")]
pub enum EventKind {
    Message {
        from: Party,
        to: Party,
        origin: Origin,
        command: String,
        bits: String,
    },
    StateChange {
        party: Party,
        from: PartyPhase,
        to: PartyPhase,
        /// Sender of the message that caused the change; `None` for timeouts
        /// and internal signals.
        cause: Option<Party>,
    },
    Note {
        party: Party,
        text: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub timestamp: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Values serialize as hex strings so 128-bit keys survive any JSON reader.
pub mod hex_values {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    pub fn serialize<S: Serializer>(v: &BTreeMap<String, u128>, s: S) -> Result<S::Ok, S::Error> {
        let m: BTreeMap<&String, String> = v.iter().map(|(k, x)| (k, format!("{x:#x}"))).collect();
        m.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, u128>, D::Error> {
        let m = BTreeMap::<String, String>::deserialize(d)?;
        m.into_iter()
            .map(|(k, x)| {
                let t = x.trim_start_matches("0x");
                u128::from_str_radix(t, 16)
                    .map(|v| (k, v))
                    .map_err(serde::de::Error::custom)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartySnapshot {
    pub phase: PartyPhase,
    #[serde(with = "hex_values")]
    pub keys: Values,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimTrace {
    pub seed: u64,
    pub events: Vec<TraceEvent>,
    pub terminal: BTreeMap<Party, PartySnapshot>,
    pub steps: u32,
    pub step_cap_exceeded: bool,
    /// Everything the attacker learned, with true values.
    #[serde(with = "hex_values")]
    pub attacker_knowledge: Values,
    /// Identifiers the attacker knew before the session started.
    pub attacker_initial: BTreeSet<String>,
    /// Plaintext the attacker captured with `Record`, as far as it could
    /// decrypt it: (tag, command, field values).
    pub recorded: Vec<(String, String, BTreeMap<String, String>)>,
    /// Session keys computed by the honest parties.
    pub session_keys: BTreeSet<String>,
}

impl SimTrace {
    pub fn phase(&self, p: Party) -> PartyPhase {
        self.terminal
            .get(&p)
            .map(|s| s.phase)
            .unwrap_or(PartyPhase::Idle)
    }

    pub fn notes(&self) -> impl Iterator<Item = (Party, &str)> {
        self.events.iter().filter_map(|e| match &e.kind {
            EventKind::Note { party, text } => Some((*party, text.as_str())),
            _ => None,
        })
    }

    /// True once every honest party is terminal or quiescent.
    pub fn is_terminal(&self) -> bool {
        !self.step_cap_exceeded
    }

    /// One JSON object per line: a header, the events, and a footer with the
    /// terminal phases and keys.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::json!({
            "type": "header",
            "seed": self.seed,
        })
        .to_string();
        out.push('\n');
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("event serializes"));
            out.push('\n');
        }
        let footer = serde_json::json!({
            "type": "footer",
            "steps": self.steps,
            "step_cap_exceeded": self.step_cap_exceeded,
            "terminal": self.terminal,
        });
        out.push_str(&footer.to_string());
        out.push('\n');
        out
    }
}

/// The command, MAC field and integrity key of each MAC-protected message.
pub const MAC_TABLE: [(&str, &str, &str); 5] = [
    ("NASSecurityModeCommand", "NAS-MAC", "K_NASint"),
    ("NASSecurityModeComplete", "NAS-MAC-UL", "K_NASint"),
    ("ASSecurityModeCommand", "MAC-I", "K_RRCint"),
    ("ASSecurityModeComplete", "MAC-I-UL", "K_RRCint"),
    ("RRCConnectionReconfiguration", "MAC-I-Reconf", "K_RRCint"),
];

pub fn mac_spec(command: &str) -> Option<(&'static str, &'static str)> {
    MAC_TABLE
        .iter()
        .find(|(c, _, _)| *c == command)
        .map(|(_, f, k)| (*f, *k))
}

/// MAC over the plaintext of every other field of the command.
pub fn compute_mac(model: &ProtocolModel, command: &str, values: &Values, key: u128) -> Option<u128> {
    let (field, _) = mac_spec(command)?;
    let cmd = model.command(command)?;
    let width = model.identifier(field)?.bit_width;
    let inputs: Vec<u128> = cmd
        .fields
        .iter()
        .filter(|f| *f != field)
        .map(|f| values.get(f).copied().unwrap_or(0))
        .collect();
    Some(kdf::mac(key, command, &inputs, width))
}

/// Confidentiality protectors of a field, if it is enciphered.
fn cipher_keys(model: &ProtocolModel, field: &str) -> Option<Vec<String>> {
    match model.protection_of(field, Property::Confidentiality) {
        Protection::None => None,
        Protection::ProtectedBy(s) => Some(s.into_iter().collect()),
    }
}

/// Encodes a plaintext message, enciphering every confidential field whose
/// protector values the sender holds. Returns the fields it could not
/// encipher (left in clear).
pub fn seal(
    model: &ProtocolModel,
    command: &str,
    plain: &Values,
    store: &Values,
) -> Result<(WireMessage, Vec<String>), CodecError> {
    let mut wire = plain.clone();
    let mut unsealed = Vec::new();
    for (field, v) in wire.iter_mut() {
        let Some(keys) = cipher_keys(model, field) else { continue };
        let vals: Option<Vec<u128>> = keys.iter().map(|k| kdf::derive(model, store, k)).collect();
        match vals {
            Some(vals) => {
                let w = model.identifier(field).map(|i| i.bit_width).unwrap_or(0);
                *v ^= kdf::keystream(command, field, &vals, w);
            }
            None => unsealed.push(field.clone()),
        }
    }
    Ok((encode(model, command, &wire)?, unsealed))
}

/// Decodes a message and deciphers what `store` allows. Fields that cannot
/// be deciphered are `None`.
pub fn open(
    model: &ProtocolModel,
    msg: &WireMessage,
    store: &Values,
) -> Result<BTreeMap<String, Option<u128>>, CodecError> {
    let wire = decode(model, &msg.bits, &msg.command)?;
    Ok(wire
        .into_iter()
        .map(|(field, v)| {
            let plain = match cipher_keys(model, &field) {
                None => Some(v),
                Some(keys) => keys
                    .iter()
                    .map(|k| kdf::derive(model, store, k))
                    .collect::<Option<Vec<u128>>>()
                    .map(|vals| {
                        let w = model.identifier(&field).map(|i| i.bit_width).unwrap_or(0);
                        v ^ kdf::keystream(&msg.command, &field, &vals, w)
                    }),
            };
            (field, plain)
        })
        .collect())
}

/// Static subscriber and network configuration shared by the honest parties:
/// every declared honest value, the long-term key and the base-station key.
pub fn static_store(model: &ProtocolModel) -> Values {
    let mut store: Values = model
        .identifiers
        .iter()
        .filter_map(|i| i.honest_value.map(|v| (i.name.clone(), v)))
        .collect();
    let imsi = store.get("IMSI").copied().unwrap_or(0);
    store.insert("K".into(), kdf::kdf("subscriber-key", &[imsi]));
    if model.identifier("PubKey_gNB").is_some() {
        store.insert("PubKey_gNB".into(), kdf::kdf("PubKey_gNB", &[]));
    }
    store
}

/// Names whose values the honest parties compute during a session.
pub fn session_key_names(model: &ProtocolModel) -> BTreeSet<String> {
    crate::knowledge::session_key_groups(model)
        .into_values()
        .flatten()
        .collect()
}
