#![allow(dead_code)]

use std::collections::BTreeSet;

use fgf_core::model::*;
use rand::Rng;

fn identifier(name: &str, width: u32, owner: &str) -> IdentifierDef {
    IdentifierDef {
        name: name.to_string(),
        bit_width: width,
        domain: Domain::Opaque,
        owner_command: owner.to_string(),
        semantic_role: SemanticRole::Config,
        honest_value: None,
        assumed_secret: false,
    }
}

fn profile(name: &str, capabilities: &[Capability]) -> AssumptionProfile {
    AssumptionProfile {
        name: name.to_string(),
        known_identifiers: BTreeSet::new(),
        capabilities: capabilities.iter().copied().collect(),
    }
}

/// `n` downlink commands of three unprotected 8-bit identifiers each.
pub fn family_model(n: usize) -> ProtocolModel {
    let mut m = ProtocolModel {
        identifiers: Vec::new(),
        protections: Vec::new(),
        commands: Vec::new(),
        kdfs: Vec::new(),
        profiles: vec![profile("inject", &[Capability::Eavesdrop, Capability::Inject])],
        sequences: Vec::new(),
    };
    for c in 0..n {
        let cmd = format!("Cmd{c}");
        let fields: Vec<String> = (0..3).map(|k| format!("f{c}_{k}")).collect();
        for f in &fields {
            m.identifiers.push(identifier(f, 8, &cmd));
            m.protections.push(ProtectionEntry::unprotected(f.clone()));
        }
        m.commands.push(CommandDef {
            name: cmd,
            layer: Layer::RRC,
            direction: Direction::Downlink,
            fields,
            phase: Phase::RrcSetup,
            declared_length: 24,
        });
    }
    m
}

/// A random acyclic protection graph over at most `max_ids` identifiers:
/// each identifier may be protected, per property, by a random subset of the
/// identifiers declared before it.
pub fn random_graph_model(rng: &mut impl Rng, max_ids: usize) -> ProtocolModel {
    let n = rng.gen_range(1..=max_ids);
    let names: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
    let mut protections = Vec::new();
    for (i, name) in names.iter().enumerate() {
        let mut e = ProtectionEntry::unprotected(name.clone());
        for p in Property::ALL {
            if i == 0 || rng.gen_bool(0.4) {
                continue;
            }
            let chosen: Vec<&String> = names[..i].iter().filter(|_| rng.gen_bool(0.5)).collect();
            *e.get_mut(p) = Protection::by(chosen);
        }
        protections.push(e);
    }
    ProtocolModel {
        identifiers: names.iter().map(|n| identifier(n, 4, "Msg")).collect(),
        protections,
        commands: vec![CommandDef {
            name: "Msg".into(),
            layer: Layer::NAS,
            direction: Direction::Uplink,
            fields: names.clone(),
            phase: Phase::MutualAuth,
            declared_length: 4 * n as u32,
        }],
        kdfs: Vec::new(),
        profiles: vec![profile("default", &[Capability::Eavesdrop])],
        sequences: Vec::new(),
    }
}
