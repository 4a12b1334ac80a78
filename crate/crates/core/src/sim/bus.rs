//! Message bus, interceptor and attacker.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::codec::{decode, encode, Values, WireMessage};
use super::kdf::{self, derive};
use super::parties::{step, Backhaul, Input, PartyState};
use super::{
    compute_mac, mac_spec, open, seal, session_key_names, static_store, EventKind, Origin, Party,
    PartyPhase, PartySnapshot, SimConfig, SimTrace, TraceEvent,
};
use crate::model::{apply_fortification, Direction, Layer, ProtocolModel};

/// Where a forged field value comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueSource {
    Literal(u128),
    /// The attacker's current knowledge of an identifier.
    Copy(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Forward,
    Block,
    Record(String),
    ReplayRecorded(String),
    /// Overwrites on-wire field values and forwards the result.
    InjectModified(BTreeMap<String, u128>),
    /// Forwards the message after `n` further bus steps.
    Delay(u32),
    /// Builds a new message. Unlisted fields take the attacker's knowledge
    /// of the identifier, or its nominal value. With `sign`, the MAC field is
    /// computed from the attacker's best derivation of the integrity key.
    Forge {
        command: String,
        values: BTreeMap<String, ValueSource>,
        sign: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterceptEntry {
    /// `None` matches both directions.
    pub direction: Option<Direction>,
    /// `None` matches every command.
    pub command: Option<String>,
    /// Zero-based count of honest transmissions of this command in this
    /// direction; `None` matches all of them.
    pub occurrence: Option<u32>,
    /// Fires only while the UE is live and at least this far along.
    pub ue_at_least: Option<PartyPhase>,
    pub actions: Vec<Action>,
}

impl InterceptEntry {
    pub fn on(direction: Direction, command: &str, occurrence: u32, actions: Vec<Action>) -> Self {
        InterceptEntry {
            direction: Some(direction),
            command: Some(command.to_string()),
            occurrence: Some(occurrence),
            ue_at_least: None,
            actions,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterceptorScript {
    pub entries: Vec<InterceptEntry>,
}

/// A captured message, ready for replay.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recording {
    pub message: WireMessage,
}

struct InFlight {
    msg: WireMessage,
    from: Party,
    to: Party,
    origin: Origin,
    delay: u32,
}

struct Attacker {
    knowledge: Values,
    initial: BTreeSet<String>,
    recorded: Vec<(String, String, BTreeMap<String, String>)>,
    rng: ChaCha8Rng,
}

impl Attacker {
    fn observe(&mut self, model: &ProtocolModel, msg: &WireMessage, names: &BTreeSet<String>) {
        if let Ok(fields) = open(model, msg, &self.knowledge) {
            for (f, v) in fields {
                if let Some(v) = v {
                    self.knowledge.insert(f, v);
                }
            }
        }
        self.close(model, names);
    }

    /// Adds every derivable key to the knowledge.
    fn close(&mut self, model: &ProtocolModel, names: &BTreeSet<String>) {
        loop {
            let mut grew = false;
            for k in &model.kdfs {
                if self.knowledge.contains_key(&k.output) || !names.contains(&k.output) {
                    continue;
                }
                if let Some(v) = derive(model, &self.knowledge, &k.output) {
                    self.knowledge.insert(k.output.clone(), v);
                    grew = true;
                }
            }
            if !grew {
                break;
            }
        }
    }

    fn forge(
        &mut self,
        model: &ProtocolModel,
        command: &str,
        values: &BTreeMap<String, ValueSource>,
        sign: bool,
    ) -> Option<WireMessage> {
        let cmd = model.command(command)?;
        let mut plain = Values::new();
        for f in &cmd.fields {
            let w = model.identifier(f).map(|i| i.bit_width).unwrap_or(0);
            let v = match values.get(f) {
                Some(ValueSource::Literal(v)) => *v,
                Some(ValueSource::Copy(id)) => self.knowledge.get(id).copied().unwrap_or(0),
                None => self
                    .knowledge
                    .get(f)
                    .copied()
                    .or_else(|| model.identifier(f).map(|i| i.nominal_value()))
                    .unwrap_or(0),
            };
            plain.insert(f.clone(), kdf::truncate(v, w));
        }
        if sign {
            if let Some((field, key)) = mac_spec(command) {
                let mut view = self.knowledge.clone();
                view.extend(plain.clone());
                view.remove(key);
                let k = derive(model, &view, key).unwrap_or_else(|| self.rng.gen());
                let m = compute_mac(model, command, &plain, k).unwrap_or(0);
                plain.insert(field.to_string(), m);
            }
        }
        let (mut msg, unsealed) = seal(model, command, &plain, &self.knowledge).ok()?;
        // Fields it cannot encipher go out as noise.
        if !unsealed.is_empty() {
            let mut wire = decode(model, &msg.bits, command).ok()?;
            for f in unsealed {
                let w = model.identifier(&f).map(|i| i.bit_width).unwrap_or(0);
                wire.insert(f, kdf::truncate(self.rng.gen(), w));
            }
            msg = encode(model, command, &wire).ok()?;
        }
        msg.meta.sender = Party::Attacker;
        Some(msg)
    }
}

fn destination(model: &ProtocolModel, command: &str) -> Option<(Direction, Party)> {
    let cmd = model.command(command)?;
    Some(match cmd.direction {
        Direction::Downlink => (Direction::Downlink, Party::UE),
        Direction::Uplink => match cmd.layer {
            Layer::NAS => (Direction::Uplink, Party::CoreNetwork),
            Layer::RRC | Layer::AS => (Direction::Uplink, Party::BaseStation),
        },
    })
}

struct Session<'a> {
    model: &'a ProtocolModel,
    cfg: &'a SimConfig,
    parties: BTreeMap<Party, PartyState>,
    attacker: Attacker,
    key_names: BTreeSet<String>,
    queue: VecDeque<InFlight>,
    clock: u64,
    events: Vec<TraceEvent>,
    occurrences: BTreeMap<(Direction, String), u32>,
    recordings: BTreeMap<String, WireMessage>,
}

impl Session<'_> {
    fn log(&mut self, kind: EventKind) {
        self.clock += 1;
        self.events.push(TraceEvent {
            timestamp: self.clock,
            kind,
        });
    }

    fn note(&mut self, party: Party, text: impl Into<String>) {
        self.log(EventKind::Note {
            party,
            text: text.into(),
        });
    }

    /// Feeds one input to a party and handles everything it emits.
    fn drive(&mut self, who: Party, input: Input, cause: Option<Party>) {
        let before = self.parties[&who].phase;
        let out = {
            let p = self.parties.get_mut(&who).expect("honest party");
            step(self.model, p, input)
        };
        let after = self.parties[&who].phase;
        for n in out.notes {
            self.note(who, n);
        }
        if before != after {
            self.log(EventKind::StateChange {
                party: who,
                from: before,
                to: after,
                cause,
            });
        }
        for mut m in out.messages {
            m.meta.sender = who;
            self.transmit(m, who, Origin::Honest);
        }
        for b in out.backhaul {
            let target = match b {
                Backhaul::KeNb(_) => Party::BaseStation,
                Backhaul::Cause(_) | Backhaul::AsSecured => Party::CoreNetwork,
            };
            self.drive(target, Input::Backhaul(b), None);
        }
    }

    fn enqueue(&mut self, msg: WireMessage, from: Party, origin: Origin, delay: u32) {
        let Some((_, to)) = destination(self.model, &msg.command) else { return };
        self.queue.push_back(InFlight {
            msg,
            from,
            to,
            origin,
            delay,
        });
    }

    /// Puts an honest transmission on the air, through the interceptor.
    fn transmit(&mut self, mut msg: WireMessage, from: Party, origin: Origin) {
        self.clock += 1;
        msg.meta.timestamp = self.clock;
        self.clock -= 1;
        self.attacker.observe(self.model, &msg, &self.key_names);
        let Some((dir, _)) = destination(self.model, &msg.command) else { return };
        let key = (dir, msg.command.clone());
        let occurrence = *self.occurrences.get(&key).unwrap_or(&0);
        self.occurrences.insert(key, occurrence + 1);

        let ue_phase = self.parties[&Party::UE].phase;
        let actions: Vec<Action> = self
            .cfg
            .interceptor
            .iter()
            .flat_map(|s| s.entries.iter())
            .filter(|e| e.direction.is_none_or(|d| d == dir))
            .filter(|e| e.command.as_deref().is_none_or(|c| c == msg.command))
            .filter(|e| e.occurrence.is_none_or(|o| o == occurrence))
            .filter(|e| e.ue_at_least.is_none_or(|g| ue_phase.reached(g)))
            .flat_map(|e| e.actions.iter().cloned())
            .collect();

        let placed = actions.iter().any(|a| {
            matches!(
                a,
                Action::Forward | Action::Block | Action::Delay(_) | Action::InjectModified(_)
            )
        });
        for a in actions {
            match a {
                Action::Forward => self.enqueue(msg.clone(), from, origin, 0),
                Action::Block => self.note(Party::Attacker, format!("blocked {}", msg.command)),
                Action::Delay(n) => self.enqueue(msg.clone(), from, origin, n),
                Action::Record(tag) => {
                    let fields = open(self.model, &msg, &self.attacker.knowledge)
                        .map(|f| {
                            f.into_iter()
                                .filter_map(|(k, v)| v.map(|v| (k, format!("{v:#x}"))))
                                .collect()
                        })
                        .unwrap_or_default();
                    self.attacker.recorded.push((tag.clone(), msg.command.clone(), fields));
                    self.recordings.insert(tag, msg.clone());
                }
                Action::ReplayRecorded(tag) => match self.recordings.get(&tag).cloned() {
                    Some(mut r) => {
                        r.meta.sender = Party::Attacker;
                        self.enqueue(r, Party::Attacker, Origin::Replayed, 0);
                    }
                    None => self.note(Party::Attacker, format!("nothing recorded under `{tag}`")),
                },
                Action::InjectModified(changes) => {
                    let modified = decode(self.model, &msg.bits, &msg.command).and_then(|mut w| {
                        for (f, v) in &changes {
                            w.insert(f.clone(), *v);
                        }
                        encode(self.model, &msg.command, &w)
                    });
                    match modified {
                        Ok(mut m) => {
                            m.meta = msg.meta.clone();
                            m.meta.sender = Party::Attacker;
                            self.enqueue(m, Party::Attacker, Origin::Modified, 0);
                        }
                        Err(e) => {
                            self.note(Party::Attacker, format!("modification rejected: {e}"));
                            self.enqueue(msg.clone(), from, origin, 0);
                        }
                    }
                }
                Action::Forge { command, values, sign } => {
                    match self.attacker.forge(self.model, &command, &values, sign) {
                        Some(m) => self.enqueue(m, Party::Attacker, Origin::Forged, 0),
                        None => self.note(Party::Attacker, format!("cannot forge {command}")),
                    }
                }
            }
        }
        if !placed {
            self.enqueue(msg, from, origin, 0);
        }
    }

    fn deliver(&mut self, f: InFlight) {
        self.log(EventKind::Message {
            from: f.from,
            to: f.to,
            origin: f.origin,
            command: f.msg.command.clone(),
            bits: f.msg.bits.to_hex(),
        });
        if let Some(p) = self.parties.get_mut(&f.to) {
            p.idle_steps = 0;
        }
        if f.to == Party::UE && f.origin.is_attacker() {
            let phase = self.parties[&Party::UE].phase;
            let hit = self
                .cfg
                .faults
                .iter()
                .find(|x| x.command == f.msg.command && x.phase == phase && x.origin == f.origin)
                .cloned();
            if let Some(fault) = hit {
                self.note(Party::UE, format!("planted:{}", fault.id));
                if !self.cfg.faults_probe_only {
                    let ue = self.parties.get_mut(&Party::UE).expect("ue");
                    ue.phase = PartyPhase::Disconnected;
                    self.log(EventKind::StateChange {
                        party: Party::UE,
                        from: phase,
                        to: PartyPhase::Disconnected,
                        cause: Some(Party::Attacker),
                    });
                    return;
                }
            }
        }
        let cause = if f.origin.is_attacker() { Party::Attacker } else { f.from };
        self.drive(f.to, Input::Message(f.msg), Some(cause));
    }

    /// Advances idle counters after a bus step and fires due timeouts.
    fn tick(&mut self, receiver: Option<Party>) {
        let mut due = Vec::new();
        for (who, p) in self.parties.iter_mut() {
            if Some(*who) == receiver {
                continue;
            }
            if p.is_waiting() {
                p.idle_steps += 1;
                if p.idle_steps >= self.cfg.timeout_steps {
                    due.push(*who);
                }
            } else {
                p.idle_steps = 0;
            }
        }
        for who in due {
            self.note(who, "timeout");
            self.drive(who, Input::Timeout, None);
        }
    }
}

/// Runs one session to quiescence or to the step cap.
pub fn run_session(config: &SimConfig) -> SimTrace {
    run_recording(config).0
}

/// Like [`run_session`], also returning every message captured by a
/// `Record` action (and the preloaded ones), by tag.
pub fn run_recording(config: &SimConfig) -> (SimTrace, BTreeMap<String, Recording>) {
    let model = if config.fortifications.is_empty() {
        config.model.clone()
    } else {
        apply_fortification(&config.model, &config.fortifications).unwrap_or_else(|_| config.model.clone())
    };
    let model = &model;
    let truth = static_store(model);
    let mut knowledge = Values::new();
    let mut initial = BTreeSet::new();
    if let Some(profile) = config.profile.as_deref().and_then(|n| model.profile(n)) {
        for name in &profile.known_identifiers {
            if let Some(v) = derive(model, &truth, name) {
                knowledge.insert(name.clone(), v);
                initial.insert(name.clone());
            }
        }
    }
    let key_names = session_key_names(model);
    let mut derivable = key_names.clone();
    derivable.extend(model.kdfs.iter().map(|k| k.output.clone()));
    let parties = Party::HONEST
        .iter()
        .map(|r| (*r, PartyState::new(model, *r, config.seed)))
        .collect();
    let mut s = Session {
        model,
        cfg: config,
        parties,
        attacker: Attacker {
            knowledge,
            initial,
            recorded: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0xA77A_C4E5),
        },
        key_names: derivable,
        queue: VecDeque::new(),
        clock: 0,
        events: Vec::new(),
        occurrences: BTreeMap::new(),
        recordings: config
            .preload
            .iter()
            .map(|(k, r)| (k.clone(), r.message.clone()))
            .collect(),
    };
    s.attacker.close(model, &s.key_names.clone());

    s.drive(Party::UE, Input::Start, None);
    let mut steps = 0u32;
    let mut capped = false;
    loop {
        if steps >= config.step_cap {
            capped = true;
            s.note(Party::Attacker, "step cap exceeded");
            break;
        }
        if let Some(pos) = s.queue.iter().position(|f| f.delay == 0) {
            let f = s.queue.remove(pos).expect("position is valid");
            for other in s.queue.iter_mut() {
                other.delay = other.delay.saturating_sub(1);
            }
            steps += 1;
            let to = f.to;
            s.deliver(f);
            s.tick(Some(to));
        } else if !s.queue.is_empty() {
            for other in s.queue.iter_mut() {
                other.delay = other.delay.saturating_sub(1);
            }
            steps += 1;
            s.tick(None);
        } else if s.parties.values().any(|p| p.is_waiting()) {
            steps += 1;
            s.tick(None);
        } else {
            break;
        }
    }

    let terminal = s
        .parties
        .iter()
        .map(|(who, p)| {
            let keys = key_names
                .iter()
                .filter_map(|k| p.value(model, k).map(|v| (k.clone(), v)))
                .collect();
            (*who, PartySnapshot { phase: p.phase, keys })
        })
        .collect();
    let mut attacker_knowledge = s.attacker.knowledge;
    attacker_knowledge.retain(|k, _| model.identifier(k).is_some());
    let recordings = s
        .recordings
        .into_iter()
        .map(|(k, message)| (k, Recording { message }))
        .collect();
    let trace = SimTrace {
        seed: config.seed,
        events: s.events,
        terminal,
        steps,
        step_cap_exceeded: capped,
        attacker_knowledge,
        attacker_initial: s.attacker.initial,
        recorded: s.attacker.recorded,
        session_keys: key_names,
    };
    (trace, recordings)
}
