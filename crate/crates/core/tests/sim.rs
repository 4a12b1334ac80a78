use std::collections::{BTreeMap, VecDeque};

use fgf_core::model::*;
use fgf_core::sim::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn zeros(m: &ProtocolModel, command: &str) -> Values {
    m.command(command).unwrap().fields.iter().map(|f| (f.clone(), 0)).collect()
}

#[test]
fn all_zero_connection_request_is_45_zero_bits() {
    let m = nsa_model();
    let msg = encode(&m, "RRCConnectionRequest", &zeros(&m, "RRCConnectionRequest")).unwrap();
    assert_eq!(msg.bits.len(), 45);
    assert!((0..45).all(|i| !msg.bits.bit(i)));
    let auth = encode(&m, "AuthenticationRequest", &zeros(&m, "AuthenticationRequest")).unwrap();
    assert_eq!(auth.bits.len(), 259);
}

#[test]
fn overflowing_value_is_rejected() {
    let m = nsa_model();
    let mut v = zeros(&m, "RRCConnectionRequest");
    v.insert("establishmentCause".into(), 16);
    assert_eq!(
        encode(&m, "RRCConnectionRequest", &v).unwrap_err(),
        CodecError::ValueOverflow { field: "establishmentCause".into(), value: 16, width: 4 }
    );
}

#[test]
fn short_input_is_a_length_mismatch() {
    let m = nsa_model();
    let bits = BitString::from_bytes(&[0; 6], 44);
    assert_eq!(
        decode(&m, &bits, "RRCConnectionRequest").unwrap_err(),
        CodecError::LengthMismatch { expected: 45, actual: 44 }
    );
}

#[test]
fn missing_and_unexpected_fields() {
    let m = nsa_model();
    let mut v = zeros(&m, "RRCReject");
    v.insert("bogus".into(), 0);
    assert!(matches!(encode(&m, "RRCReject", &v), Err(CodecError::UnexpectedField { .. })));
    assert_eq!(
        encode(&m, "RRCReject", &Values::new()).unwrap_err(),
        CodecError::MissingField("waitTime".into())
    );
    assert!(matches!(encode(&m, "Nope", &Values::new()), Err(CodecError::UnknownCommand(_))));
}

#[test]
fn all_ones_nas_security_mode_command() {
    let m = nsa_model();
    let bits = BitString::from_bytes(&[0xFF; 14], 107);
    let v = decode(&m, &bits, "NASSecurityModeCommand").unwrap();
    assert_eq!(v["KSI_ASME"], 7);
    assert_eq!(v["UE-SecurityCapability"], (1 << 32) - 1);
    assert_eq!(v["NAS-EEA"], 15);
    assert_eq!(v["NAS-EIA"], 15);
    assert_eq!(v["NAS-MAC"], u128::from(u64::MAX));
}

#[test]
fn codec_round_trips_random_payloads() {
    let m = nsa_model();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for c in &m.commands {
        for _ in 0..10_000 {
            let v: Values = c
                .fields
                .iter()
                .map(|f| (f.clone(), rng.gen::<u128>() & max_value(m.identifier(f).unwrap().bit_width)))
                .collect();
            let msg = encode(&m, &c.name, &v).unwrap();
            assert_eq!(msg.bits.len(), c.declared_length);
            assert_eq!(decode(&m, &msg.bits, &c.name).unwrap(), v);
        }
    }
}

/// Delivers messages between the three honest parties, in order, until
/// `stop` accepts the next message. Returns the parties and that message.
fn drive(
    m: &ProtocolModel,
    seed: u64,
    stop: impl Fn(&WireMessage) -> bool,
) -> (BTreeMap<Party, PartyState>, Option<WireMessage>) {
    let mut parties: BTreeMap<Party, PartyState> =
        Party::HONEST.iter().map(|p| (*p, PartyState::new(m, *p, seed))).collect();
    let mut queue: VecDeque<(Party, Input)> = VecDeque::from([(Party::UE, Input::Start)]);
    while let Some((to, input)) = queue.pop_front() {
        if let Input::Message(msg) = &input {
            if stop(msg) {
                return (parties, Some(msg.clone()));
            }
        }
        let out = step(m, parties.get_mut(&to).unwrap(), input);
        for msg in out.messages {
            let cmd = m.command(&msg.command).unwrap();
            let dest = match (cmd.direction, cmd.layer) {
                (Direction::Downlink, _) => Party::UE,
                (Direction::Uplink, Layer::NAS) => Party::CoreNetwork,
                _ => Party::BaseStation,
            };
            queue.push_back((dest, Input::Message(msg)));
        }
        for b in out.backhaul {
            let dest = match b {
                Backhaul::KeNb(_) => Party::BaseStation,
                _ => Party::CoreNetwork,
            };
            queue.push_front((dest, Input::Backhaul(b)));
        }
    }
    (parties, None)
}

#[test]
fn core_secures_nas_on_a_valid_complete() {
    let m = nsa_model();
    let (mut parties, msg) = drive(&m, 5, |msg| msg.command == "NASSecurityModeComplete");
    let cn = parties.get_mut(&Party::CoreNetwork).unwrap();
    assert_eq!(cn.phase, PartyPhase::AuthDone);
    step(&m, cn, Input::Message(msg.unwrap()));
    assert_eq!(cn.phase, PartyPhase::NasSecured);
}

#[test]
fn idle_ue_answers_an_authentication_request() {
    let m = nsa_model();
    let (_, msg) = drive(&m, 5, |msg| msg.command == "AuthenticationRequest");
    let mut ue = PartyState::new(&m, Party::UE, 99);
    let out = step(&m, &mut ue, Input::Message(msg.unwrap()));
    let sent: Vec<&str> = out.messages.iter().map(|m| m.command.as_str()).collect();
    assert_eq!(sent, ["AuthenticationResponse"]);
}

#[test]
fn corrupted_nas_mac_fails_the_ue() {
    let m = nsa_model();
    let (mut parties, msg) = drive(&m, 5, |msg| msg.command == "NASSecurityModeCommand");
    let mut msg = msg.unwrap();
    let (offset, _) = fgf_core::sim::field_span(&m, "NASSecurityModeCommand", "NAS-MAC").unwrap();
    msg.bits.flip(offset + 3);
    let ue = parties.get_mut(&Party::UE).unwrap();
    assert_eq!(ue.phase, PartyPhase::AuthDone);
    step(&m, ue, Input::Message(msg));
    assert_eq!(ue.phase, PartyPhase::Failed(FailReason::IntegrityFailure));
}

#[test]
fn any_flipped_bit_in_a_protected_message_fails_integrity() {
    let m = nsa_model();
    let (parties, msg) = drive(&m, 8, |msg| msg.command == "ASSecurityModeCommand");
    let msg = msg.unwrap();
    for i in 0..msg.bits.len() {
        let mut ue = parties[&Party::UE].clone();
        let mut bad = msg.clone();
        bad.bits.flip(i);
        step(&m, &mut ue, Input::Message(bad));
        assert_eq!(ue.phase, PartyPhase::Failed(FailReason::IntegrityFailure), "bit {i}");
    }
}

#[test]
fn timeout_only_hits_waiting_parties() {
    let m = nsa_model();
    let mut ue = PartyState::new(&m, Party::UE, 1);
    step(&m, &mut ue, Input::Timeout);
    assert_eq!(ue.phase, PartyPhase::Idle);
    step(&m, &mut ue, Input::Start);
    assert!(ue.is_waiting());
    step(&m, &mut ue, Input::Timeout);
    assert_eq!(ue.phase, PartyPhase::Failed(FailReason::Timeout));
}

#[test]
fn honest_sessions_agree_on_keys() {
    let m = nsa_model();
    let names = session_key_names(&m);
    for seed in 0..100 {
        let t = run_session(&SimConfig::new(m.clone(), seed));
        for p in Party::HONEST {
            assert_eq!(t.phase(p), PartyPhase::AsSecured, "seed {seed} {p:?}");
        }
        let ue = &t.terminal[&Party::UE].keys;
        for k in &names {
            let v = ue.get(k).unwrap_or_else(|| panic!("seed {seed}: UE lacks {k}"));
            let holders = Party::HONEST
                .iter()
                .filter(|p| t.terminal[p].keys.get(k) == Some(v))
                .count();
            assert!(holders >= 2, "seed {seed}: {k} not shared");
        }
        assert!(t.attacker_knowledge.keys().all(|k| !names.contains(k)), "seed {seed}");
    }
}

#[test]
fn sessions_are_deterministic_with_monotone_timestamps() {
    let m = nsa_model();
    let cfg = SimConfig::new(m, 42);
    let a = run_session(&cfg);
    let b = run_session(&cfg);
    assert_eq!(a, b);
    assert_eq!(a.to_jsonl(), b.to_jsonl());
    assert!(a.events.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
}

#[test]
fn blocking_all_downlink_times_the_ue_out() {
    let m = nsa_model();
    let script = InterceptorScript {
        entries: vec![InterceptEntry {
            direction: Some(Direction::Downlink),
            command: None,
            occurrence: None,
            ue_at_least: None,
            actions: vec![Action::Block],
        }],
    };
    let t = run_session(&SimConfig::new(m, 3).with_interceptor(script));
    assert_eq!(t.phase(Party::UE), PartyPhase::Failed(FailReason::Timeout));
    assert!(!t.step_cap_exceeded);
}

#[test]
fn recorded_messages_replay_byte_for_byte() {
    let m = nsa_model();
    let script = InterceptorScript {
        entries: vec![InterceptEntry::on(
            Direction::Downlink,
            "AuthenticationRequest",
            0,
            vec![Action::Record("auth".into())],
        )],
    };
    let (t, rec) = run_recording(&SimConfig::new(m, 11).with_interceptor(script));
    assert_eq!(t.phase(Party::UE), PartyPhase::AsSecured);
    assert_eq!(rec["auth"].message.command, "AuthenticationRequest");
    assert_eq!(rec["auth"].message.bits.len(), 259);
}

#[test]
fn trace_jsonl_lines_parse() {
    let t = run_session(&SimConfig::new(nsa_model(), 1));
    for line in t.to_jsonl().lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }
}
