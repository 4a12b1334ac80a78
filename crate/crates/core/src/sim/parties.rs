//! Honest state machines of the UE, the base station and the core network.
//! The transition tables are written out in `docs/transitions.md`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::kdf::{self, derive};
use super::{compute_mac, mac_spec, open, seal, static_store, FailReason, Party, PartyPhase, Values, WireMessage};
use crate::model::ProtocolModel;

/// Signals on the wired link between base station and core network. This
/// link is outside the attacker's reach.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Backhaul {
    /// Establishment cause of the connection request, base station to core.
    Cause(u128),
    /// Base-station key, core to base station.
    KeNb(u128),
    /// Access-stratum security is up, base station to core.
    AsSecured,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Input {
    /// Power-on; only the UE reacts.
    Start,
    Message(WireMessage),
    Timeout,
    Backhaul(Backhaul),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StepOutput {
    pub messages: Vec<WireMessage>,
    pub backhaul: Vec<Backhaul>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct PartyState {
    pub role: Party,
    pub phase: PartyPhase,
    /// Static configuration plus every value learned or chosen so far.
    pub store: Values,
    pub counters: BTreeMap<String, u64>,
    /// Bus steps since this party last received anything.
    pub idle_steps: u32,
    rng: ChaCha8Rng,
}

impl PartyState {
    pub fn new(model: &ProtocolModel, role: Party, seed: u64) -> Self {
        let salt = match role {
            Party::UE => 1,
            Party::BaseStation => 2,
            Party::CoreNetwork => 3,
            Party::Attacker => 4,
        };
        PartyState {
            role,
            phase: PartyPhase::Idle,
            store: static_store(model),
            counters: BTreeMap::new(),
            idle_steps: 0,
            rng: ChaCha8Rng::seed_from_u64(seed ^ (salt << 56)),
        }
    }

    /// Phases in which the party expects a message and will time out.
    pub fn is_waiting(&self) -> bool {
        use PartyPhase::*;
        match self.role {
            Party::UE => matches!(self.phase, RrcRequested | RrcComplete | AuthDone | NasSecured),
            Party::BaseStation => matches!(self.phase, RrcRequested | NasSecured),
            Party::CoreNetwork => matches!(self.phase, AuthPending | AuthDone),
            Party::Attacker => false,
        }
    }

    /// Current value of a key or identifier from this party's point of view.
    pub fn value(&self, model: &ProtocolModel, name: &str) -> Option<u128> {
        derive(model, &self.store, name)
    }
}

/// Plaintext for `command`: overrides first, then the party's own values,
/// then the identifier's nominal value.
fn compose(model: &ProtocolModel, store: &Values, command: &str, overrides: &[(&str, u128)]) -> Values {
    let cmd = model.command(command).expect("command of the bundled flow");
    cmd.fields
        .iter()
        .map(|f| {
            let v = overrides
                .iter()
                .find(|(k, _)| k == f)
                .map(|(_, v)| *v)
                .or_else(|| derive(model, store, f))
                .or_else(|| model.identifier(f).map(|i| i.nominal_value()))
                .unwrap_or(0);
            let w = model.identifier(f).map(|i| i.bit_width).unwrap_or(0);
            (f.clone(), kdf::truncate(v, w))
        })
        .collect()
}

/// Fills in the MAC field with the given key.
fn sign(model: &ProtocolModel, command: &str, values: &mut Values, key: u128) {
    if let Some((field, _)) = mac_spec(command) {
        let m = compute_mac(model, command, values, key).unwrap_or(0);
        values.insert(field.to_string(), m);
    }
}

fn verify(model: &ProtocolModel, command: &str, values: &Values, store: &Values) -> bool {
    let Some((field, key)) = mac_spec(command) else { return true };
    let Some(k) = derive(model, store, key) else { return false };
    compute_mac(model, command, values, k) == values.get(field).copied()
}

fn emit(model: &ProtocolModel, out: &mut StepOutput, role: Party, command: &str, values: &Values, store: &Values) {
    match seal(model, command, values, store) {
        Ok((mut msg, _)) => {
            msg.meta.sender = role;
            out.messages.push(msg);
        }
        Err(e) => out.notes.push(format!("encode {command} failed: {e}")),
    }
}

fn set(p: &mut PartyState, phase: PartyPhase) {
    p.phase = phase;
}

/// Advances one party by one input.
pub fn step(model: &ProtocolModel, p: &mut PartyState, input: Input) -> StepOutput {
    let mut out = StepOutput::default();
    if p.phase.is_terminal() {
        return out;
    }
    match input {
        Input::Timeout => {
            if p.is_waiting() {
                set(p, PartyPhase::Failed(FailReason::Timeout));
            }
        }
        Input::Start => {
            if p.role == Party::UE && p.phase == PartyPhase::Idle {
                let v = compose(model, &p.store, "RRCConnectionRequest", &[]);
                emit(model, &mut out, p.role, "RRCConnectionRequest", &v, &p.store);
                set(p, PartyPhase::RrcRequested);
            }
        }
        Input::Backhaul(b) => match p.role {
            Party::BaseStation => base_station_backhaul(model, p, b, &mut out),
            Party::CoreNetwork => match b {
                Backhaul::Cause(c) => {
                    p.store.insert("establishmentCause".into(), c);
                }
                Backhaul::AsSecured if p.phase == PartyPhase::NasSecured => set(p, PartyPhase::AsSecured),
                _ => {}
            },
            _ => {}
        },
        Input::Message(msg) => {
            let opened = match open(model, &msg, &p.store) {
                Ok(o) => o,
                Err(e) => {
                    out.notes.push(format!("malformed {}: {e}", msg.command));
                    return out;
                }
            };
            let Some(values) = opened.into_iter().map(|(k, v)| v.map(|v| (k, v))).collect::<Option<Values>>()
            else {
                out.notes.push(format!("cannot decipher {}", msg.command));
                return out;
            };
            match p.role {
                Party::UE => ue(model, p, &msg.command, values, &mut out),
                Party::BaseStation => base_station(model, p, &msg.command, values, &mut out),
                Party::CoreNetwork => core_network(model, p, &msg.command, values, &mut out),
                Party::Attacker => {}
            }
        }
    }
    out
}

fn identity_field(model: &ProtocolModel, command: &str) -> Option<String> {
    model.command(command)?.fields.first().cloned()
}

fn ue(model: &ProtocolModel, p: &mut PartyState, command: &str, v: Values, out: &mut StepOutput) {
    use PartyPhase::*;
    let phase = p.phase;
    let post_security = matches!(phase, NasSecured | AsSecured);
    let unexpected = |p: &mut PartyState, out: &mut StepOutput| {
        if post_security {
            out.notes.push(format!("unexpected {command} after security setup"));
            set(p, Disconnected);
        } else {
            out.notes.push(format!("ignored {command} in {phase:?}"));
        }
    };
    match command {
        "RRCConnectionSetup" if phase == RrcRequested => {
            p.store.extend(v);
            let c = compose(model, &p.store, "RRCConnectionSetupComplete", &[]);
            emit(model, out, p.role, "RRCConnectionSetupComplete", &c, &p.store);
            let a = compose(model, &p.store, "AttachRequest", &[]);
            emit(model, out, p.role, "AttachRequest", &a, &p.store);
            set(p, RrcComplete);
        }
        "RRCReject" if phase == RrcRequested => set(p, Disconnected),
        "RRCRelease" if matches!(phase, RrcComplete | AuthDone | NasSecured | AsSecured) => {
            set(p, Disconnected)
        }
        "AuthenticationRequest" if matches!(phase, Idle | RrcComplete | AuthDone) => {
            let k = p.store.get("K").copied().unwrap_or(0);
            let rand = v.get("RAND").copied().unwrap_or(0);
            if v.get("AUTN_HSS").copied() != Some(kdf::autn(k, rand)) {
                out.notes.push("reject: network authentication token mismatch".into());
                return;
            }
            p.store.extend(v);
            let r = compose(model, &p.store, "AuthenticationResponse", &[("RES", kdf::res(k, rand))]);
            emit(model, out, p.role, "AuthenticationResponse", &r, &p.store);
            set(p, AuthDone);
        }
        "IdentityRequest" if matches!(phase, Idle | RrcComplete | AuthDone) => {
            let r = compose(model, &p.store, "IdentityResponse", &[]);
            emit(model, out, p.role, "IdentityResponse", &r, &p.store);
        }
        "AuthenticationReject" | "AttachReject" if matches!(phase, RrcComplete | AuthDone) => {
            set(p, Disconnected)
        }
        "NASSecurityModeCommand" if phase == AuthDone => {
            let mut trial = p.store.clone();
            trial.extend(v.clone());
            let caps_ok = v.get("UE-SecurityCapability") == p.store.get("UE-NetworkCapability");
            if !caps_ok || !verify(model, command, &v, &trial) {
                out.notes.push(format!("integrity check failed on {command}"));
                set(p, Failed(FailReason::IntegrityFailure));
                return;
            }
            p.store = trial;
            let count = *p.counters.entry("NAS-UplinkCount".into()).or_insert(0);
            p.store.insert("NAS-UplinkCount".into(), u128::from(count));
            let key = derive(model, &p.store, "K_NASint").unwrap_or(0);
            let mut c = compose(model, &p.store, "NASSecurityModeComplete", &[]);
            sign(model, "NASSecurityModeComplete", &mut c, key);
            emit(model, out, p.role, "NASSecurityModeComplete", &c, &p.store);
            set(p, NasSecured);
        }
        "ASSecurityModeCommand" if phase == NasSecured => {
            let mut trial = p.store.clone();
            trial.extend(v.clone());
            if !verify(model, command, &v, &trial) {
                out.notes.push(format!("integrity check failed on {command}"));
                set(p, Failed(FailReason::IntegrityFailure));
                return;
            }
            p.store = trial;
            let key = derive(model, &p.store, "K_RRCint").unwrap_or(0);
            let mut c = compose(model, &p.store, "ASSecurityModeComplete", &[]);
            sign(model, "ASSecurityModeComplete", &mut c, key);
            emit(model, out, p.role, "ASSecurityModeComplete", &c, &p.store);
            set(p, AsSecured);
        }
        "RRCConnectionReconfiguration" if phase == AsSecured => {
            if verify(model, command, &v, &p.store) {
                out.notes.push("reconfiguration applied".into());
            } else {
                out.notes.push(format!("integrity check failed on {command}"));
                set(p, Failed(FailReason::IntegrityFailure));
            }
        }
        "UECapabilityEnquiry" if phase == AsSecured => {
            out.notes.push("capability enquiry answered".into());
        }
        _ => unexpected(p, out),
    }
}

fn base_station(model: &ProtocolModel, p: &mut PartyState, command: &str, v: Values, out: &mut StepOutput) {
    use PartyPhase::*;
    match (command, p.phase) {
        ("RRCConnectionRequest", Idle) => {
            let cause = v.get("establishmentCause").copied().unwrap_or(0);
            if cause >= 8 {
                out.notes.push(format!("reject: establishment cause {cause} not supported"));
                let r = compose(model, &p.store, "RRCReject", &[]);
                emit(model, out, p.role, "RRCReject", &r, &p.store);
                return;
            }
            out.backhaul.push(Backhaul::Cause(cause));
            let tid = u128::from(p.rng.gen_range(0u8..4));
            p.store.insert("RRC-TransactionIdentifier".into(), tid);
            let s = compose(model, &p.store, "RRCConnectionSetup", &[]);
            emit(model, out, p.role, "RRCConnectionSetup", &s, &p.store);
            set(p, RrcRequested);
        }
        ("RRCConnectionSetupComplete", RrcRequested) => {
            if v.get("RRC-TransactionIdentifier") == p.store.get("RRC-TransactionIdentifier") {
                set(p, RrcComplete);
            } else {
                out.notes.push("reject: transaction identifier mismatch".into());
                let r = compose(model, &p.store, "RRCRelease", &[("releaseCause", 1)]);
                emit(model, out, p.role, "RRCRelease", &r, &p.store);
                set(p, Idle);
            }
        }
        ("ASSecurityModeComplete", NasSecured) => {
            if !verify(model, command, &v, &p.store) {
                out.notes.push(format!("integrity check failed on {command}"));
                set(p, Failed(FailReason::IntegrityFailure));
                return;
            }
            out.backhaul.push(Backhaul::AsSecured);
            let key = derive(model, &p.store, "K_RRCint").unwrap_or(0);
            let mut r = compose(model, &p.store, "RRCConnectionReconfiguration", &[]);
            sign(model, "RRCConnectionReconfiguration", &mut r, key);
            emit(model, out, p.role, "RRCConnectionReconfiguration", &r, &p.store);
            set(p, AsSecured);
        }
        _ => out.notes.push(format!("ignored {command} in {:?}", p.phase)),
    }
}

fn base_station_backhaul(model: &ProtocolModel, p: &mut PartyState, b: Backhaul, out: &mut StepOutput) {
    if let (Backhaul::KeNb(k), PartyPhase::RrcComplete) = (b, p.phase) {
        p.store.insert("K_eNB".into(), k);
        let key = derive(model, &p.store, "K_RRCint").unwrap_or(0);
        let mut c = compose(model, &p.store, "ASSecurityModeCommand", &[]);
        sign(model, "ASSecurityModeCommand", &mut c, key);
        emit(model, out, p.role, "ASSecurityModeCommand", &c, &p.store);
        set(p, PartyPhase::NasSecured);
    }
}

fn core_network(model: &ProtocolModel, p: &mut PartyState, command: &str, v: Values, out: &mut StepOutput) {
    use PartyPhase::*;
    match (command, p.phase) {
        ("AttachRequest", Idle) => {
            let known = identity_field(model, command)
                .map(|f| v.get(&f).copied() == derive(model, &p.store, &f))
                .unwrap_or(false);
            if !known {
                out.notes.push("reject: unknown subscriber".into());
                let r = compose(model, &p.store, "AttachReject", &[]);
                emit(model, out, p.role, "AttachReject", &r, &p.store);
                return;
            }
            let caps = v.get("UE-NetworkCapability").copied().unwrap_or(0);
            p.store.insert("UE-SecurityCapability".into(), caps);
            if p.store.get("establishmentCause") == Some(&0) {
                // Emergency attach: no authentication, null integrity.
                out.notes.push("emergency attach: null security mode command".into());
                let c = compose(
                    model,
                    &p.store,
                    "NASSecurityModeCommand",
                    &[("KSI_ASME", 7), ("NAS-EEA", 0), ("NAS-EIA", 0), ("NAS-MAC", 0)],
                );
                emit(model, out, p.role, "NASSecurityModeCommand", &c, &p.store);
                set(p, AuthDone);
                return;
            }
            let rand: u128 = p.rng.gen();
            let k = p.store.get("K").copied().unwrap_or(0);
            p.store.insert("RAND".into(), rand);
            p.store.insert("AUTN_HSS".into(), kdf::autn(k, rand));
            let r = compose(model, &p.store, "AuthenticationRequest", &[]);
            emit(model, out, p.role, "AuthenticationRequest", &r, &p.store);
            set(p, AuthPending);
        }
        ("AuthenticationResponse", AuthPending) => {
            let k = p.store.get("K").copied().unwrap_or(0);
            let rand = p.store.get("RAND").copied().unwrap_or(0);
            if v.get("RES").copied() != Some(kdf::res(k, rand)) {
                out.notes.push("reject: authentication response mismatch".into());
                let r = compose(model, &p.store, "AuthenticationReject", &[]);
                emit(model, out, p.role, "AuthenticationReject", &r, &p.store);
                set(p, Idle);
                return;
            }
            let key = derive(model, &p.store, "K_NASint").unwrap_or(0);
            let mut c = compose(model, &p.store, "NASSecurityModeCommand", &[]);
            sign(model, "NASSecurityModeCommand", &mut c, key);
            emit(model, out, p.role, "NASSecurityModeCommand", &c, &p.store);
            set(p, AuthDone);
        }
        ("NASSecurityModeComplete", AuthDone) => {
            let mut trial = p.store.clone();
            if let Some(c) = v.get("NAS-UplinkCount") {
                trial.insert("NAS-UplinkCount".into(), *c);
            }
            if !verify(model, command, &v, &trial) {
                out.notes.push(format!("integrity check failed on {command}"));
                set(p, Failed(FailReason::IntegrityFailure));
                return;
            }
            p.store = trial;
            let kenb = derive(model, &p.store, "K_eNB").unwrap_or(0);
            out.backhaul.push(Backhaul::KeNb(kenb));
            set(p, NasSecured);
        }
        _ => out.notes.push(format!("ignored {command} in {:?}", p.phase)),
    }
}
