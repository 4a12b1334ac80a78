//! Abstract key schedule. Every derivation is one SHA-256 over a tag and
//! length-prefixed inputs, truncated to the output width. Only determinism
//! and input sensitivity matter to the simulation.

use sha2::{Digest, Sha256};

use super::codec::Values;
use crate::model::{max_value, ProtocolModel};

pub fn kdf(tag: &str, inputs: &[u128]) -> u128 {
    let mut h = Sha256::new();
    h.update((tag.len() as u32).to_be_bytes());
    h.update(tag.as_bytes());
    for v in inputs {
        h.update(16u32.to_be_bytes());
        h.update(v.to_be_bytes());
    }
    let digest = h.finalize();
    let mut out = [0u8; 16];
    out.copy_from_slice(&digest[..16]);
    u128::from_be_bytes(out)
}

pub fn truncate(v: u128, width: u32) -> u128 {
    v & max_value(width)
}

/// Value of `name` from `store`, deriving it through the model's key
/// derivation rules when it is not stored directly.
pub fn derive(model: &ProtocolModel, store: &Values, name: &str) -> Option<u128> {
    derive_depth(model, store, name, 0)
}

fn derive_depth(model: &ProtocolModel, store: &Values, name: &str, depth: usize) -> Option<u128> {
    if let Some(v) = store.get(name) {
        return Some(*v);
    }
    if depth > model.kdfs.len() {
        return None;
    }
    let rule = model.kdf_for(name)?;
    let width = model.identifier(name)?.bit_width;
    let inputs = rule
        .inputs
        .iter()
        .map(|i| derive_depth(model, store, i, depth + 1))
        .collect::<Option<Vec<u128>>>()?;
    Some(truncate(kdf(name, &inputs), width))
}

/// Network authentication token for a challenge.
pub fn autn(k: u128, rand: u128) -> u128 {
    kdf("AUTN", &[k, rand])
}

/// Expected response to a challenge (64 bits).
pub fn res(k: u128, rand: u128) -> u128 {
    truncate(kdf("RES", &[k, rand]), 64)
}

/// Message authentication code over the non-MAC fields of a command.
pub fn mac(key: u128, command: &str, fields: &[u128], width: u32) -> u128 {
    let mut inputs = Vec::with_capacity(fields.len() + 1);
    inputs.push(key);
    inputs.extend_from_slice(fields);
    truncate(kdf(&format!("MAC:{command}"), &inputs), width)
}

/// Keystream for one enciphered field; `keys` are the protector values in
/// name order.
pub fn keystream(command: &str, field: &str, keys: &[u128], width: u32) -> u128 {
    truncate(kdf(&format!("ENC:{command}:{field}"), keys), width)
}
