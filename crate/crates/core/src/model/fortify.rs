//! Fortifications are rewrites of the model, so their effect is re-proved by
//! the knowledge engine and re-tested by the simulator rather than patched
//! into either.

use std::collections::BTreeSet;

use thiserror::Error;

use super::*;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FortificationError {
    #[error("{toggle:?} needs identifier `{name}`, which the model does not declare")]
    UnknownTarget {
        toggle: FortificationKind,
        name: String,
    },
}

const PUBKEY: &str = "PubKey_gNB";

/// Returns a new model with every toggle applied in order.
pub fn apply_fortification(
    model: &ProtocolModel,
    toggles: &[FortificationToggle],
) -> Result<ProtocolModel, FortificationError> {
    let mut m = model.clone();
    for t in toggles {
        match t.kind {
            FortificationKind::IntegrityProtectRrcTransactionId => {
                let target = t
                    .parameters
                    .get("target")
                    .map(String::as_str)
                    .unwrap_or("RRC-TransactionIdentifier");
                let protector = t.parameters.get("protector").map(String::as_str).unwrap_or("MAC-I");
                require(&m, t.kind, target)?;
                require(&m, t.kind, protector)?;
                entry(&mut m, target).integrity = Protection::by([protector]);
            }
            FortificationKind::HashedImsi => hash_identities(&mut m, t, false)?,
            FortificationKind::HashedImsiWithIntegrity => hash_identities(&mut m, t, true)?,
            FortificationKind::AsymmetricEncryptionPreAuth => encrypt_pre_auth(&mut m),
        }
    }
    Ok(m)
}

fn require(m: &ProtocolModel, kind: FortificationKind, name: &str) -> Result<(), FortificationError> {
    if m.identifier(name).is_some() {
        Ok(())
    } else {
        Err(FortificationError::UnknownTarget {
            toggle: kind,
            name: name.to_string(),
        })
    }
}

fn entry<'a>(m: &'a mut ProtocolModel, name: &str) -> &'a mut ProtectionEntry {
    if m.protection(name).is_none() {
        m.protections.push(ProtectionEntry::unprotected(name));
    }
    m.protection_mut(name).expect("entry just ensured")
}

pub fn hash_name(identifier: &str) -> String {
    format!("{identifier}-Hash")
}

/// Replaces the subscriber identity (and every other on-wire user identity)
/// by a one-way hash of it. With `integrity`, the hash is bound to the
/// identity and the remaining plaintext of the authentication and security
/// setup messages is enciphered under it.
fn hash_identities(
    m: &mut ProtocolModel,
    toggle: &FortificationToggle,
    integrity: bool,
) -> Result<(), FortificationError> {
    let root = toggle
        .parameters
        .get("target")
        .cloned()
        .unwrap_or_else(|| "IMSI".to_string());
    require(m, toggle.kind, &root)?;

    let mut targets: BTreeSet<String> = m
        .identifiers
        .iter()
        .filter(|i| i.semantic_role == SemanticRole::UserIdentity && m.on_wire(&i.name))
        .map(|i| i.name.clone())
        .collect();
    targets.insert(root.clone());

    for t in &targets {
        let h = hash_name(t);
        if m.identifier(&h).is_some() {
            continue;
        }
        let def = m.identifier(t).expect("target resolved").clone();
        m.identifiers.push(IdentifierDef {
            name: h.clone(),
            bit_width: def.bit_width,
            domain: Domain::Opaque,
            owner_command: def.owner_command.clone(),
            semantic_role: SemanticRole::Nonce,
            honest_value: None,
            assumed_secret: false,
        });
        m.protections.push(ProtectionEntry::unprotected(&h));
        m.kdfs.push(KdfRule {
            output: h.clone(),
            inputs: BTreeSet::from([t.clone()]),
            invertible_inputs: BTreeSet::new(),
        });
        for c in &mut m.commands {
            for f in &mut c.fields {
                if f == t {
                    *f = h.clone();
                }
            }
        }
        for p in &mut m.profiles {
            if p.known_identifiers.remove(t) {
                p.known_identifiers.insert(h.clone());
            }
        }
    }

    if integrity {
        let hashes: BTreeSet<String> = targets.iter().map(|t| hash_name(t)).collect();
        for h in &hashes {
            entry(m, h).integrity = Protection::by([root.clone()]);
        }
        let covered: BTreeSet<String> = m
            .commands
            .iter()
            .filter(|c| c.phase != Phase::RrcSetup)
            .flat_map(|c| c.fields.iter().cloned())
            .filter(|f| !hashes.contains(f))
            .collect();
        for f in covered {
            let e = entry(m, &f);
            if e.confidentiality.is_none() {
                e.confidentiality = Protection::by([root.clone()]);
            }
        }
    }
    Ok(())
}

/// Enciphers every uplink field sent before mutual authentication completes
/// under the base station's public key.
fn encrypt_pre_auth(m: &mut ProtocolModel) {
    if m.identifier(PUBKEY).is_none() {
        let owner = m
            .commands
            .iter()
            .find(|c| c.direction == Direction::Uplink)
            .or(m.commands.first())
            .map(|c| c.name.clone())
            .unwrap_or_default();
        m.identifiers.push(IdentifierDef {
            name: PUBKEY.to_string(),
            bit_width: 128,
            domain: Domain::Opaque,
            owner_command: owner,
            semantic_role: SemanticRole::KeyMaterial,
            honest_value: None,
            assumed_secret: true,
        });
        m.protections.push(ProtectionEntry::unprotected(PUBKEY));
    }
    let fields: BTreeSet<String> = m
        .commands
        .iter()
        .filter(|c| {
            c.direction == Direction::Uplink
                && matches!(c.phase, Phase::RrcSetup | Phase::MutualAuth)
        })
        .flat_map(|c| c.fields.iter().cloned())
        .collect();
    for f in fields {
        entry(m, &f).confidentiality = Protection::by([PUBKEY]);
    }
    for p in &mut m.profiles {
        p.known_identifiers.remove(PUBKEY);
    }
}
