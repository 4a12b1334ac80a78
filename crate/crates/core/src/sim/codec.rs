//! Bit-exact message codec. Fields are packed in command order, each
//! most-significant bit first, with no padding between them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Party;
use crate::model::{max_value, ProtocolModel};

/// Field name to unsigned value.
pub type Values = BTreeMap<String, u128>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("unknown command `{0}`")]
    UnknownCommand(String),
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("`{field}` is not a field of {command}")]
    UnexpectedField { command: String, field: String },
    #[error("value {value:#x} does not fit the {width}-bit field `{field}`")]
    ValueOverflow { field: String, value: u128, width: u32 },
    #[error("expected {expected} bits, got {actual}")]
    LengthMismatch { expected: u32, actual: u32 },
}

/// A packed bit pattern of arbitrary length, MSB first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitString {
    len: u32,
    #[serde(with = "hex::serde")]
    bytes: Vec<u8>,
}

impl BitString {
    pub fn new() -> Self {
        BitString { len: 0, bytes: Vec::new() }
    }

    /// Takes `len` bits from the front of `bytes`. Extra trailing bits are
    /// cleared so equal bit patterns compare equal.
    pub fn from_bytes(bytes: &[u8], len: u32) -> Self {
        let need = (len as usize).div_ceil(8);
        let mut b: Vec<u8> = bytes.iter().copied().take(need).collect();
        b.resize(need, 0);
        if !len.is_multiple_of(8) {
            if let Some(last) = b.last_mut() {
                *last &= 0xFFu8 << (8 - len % 8);
            }
        }
        BitString { len, bytes: b }
    }

    pub fn len(&self) -> u32 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn bit(&self, i: u32) -> bool {
        let byte = self.bytes[(i / 8) as usize];
        (byte >> (7 - i % 8)) & 1 == 1
    }

    pub fn push_bit(&mut self, bit: bool) {
        if self.len.is_multiple_of(8) {
            self.bytes.push(0);
        }
        if bit {
            let last = self.bytes.last_mut().expect("byte just ensured");
            *last |= 1 << (7 - self.len % 8);
        }
        self.len += 1;
    }

    pub fn push(&mut self, value: u128, width: u32) {
        for k in (0..width).rev() {
            self.push_bit((value >> k) & 1 == 1);
        }
    }

    pub fn read(&self, offset: u32, width: u32) -> u128 {
        (offset..offset + width).fold(0u128, |acc, i| (acc << 1) | u128::from(self.bit(i)))
    }

    pub fn flip(&mut self, i: u32) {
        self.bytes[(i / 8) as usize] ^= 1 << (7 - i % 8);
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.bytes)
    }
}

impl Default for BitString {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub sender: Party,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireMessage {
    pub command: String,
    pub bits: BitString,
    pub meta: Meta,
}

/// Packs `values` in the field order of `command`.
pub fn encode(model: &ProtocolModel, command: &str, values: &Values) -> Result<WireMessage, CodecError> {
    let cmd = model
        .command(command)
        .ok_or_else(|| CodecError::UnknownCommand(command.to_string()))?;
    if let Some(extra) = values.keys().find(|k| !cmd.fields.contains(k)) {
        return Err(CodecError::UnexpectedField {
            command: command.to_string(),
            field: extra.clone(),
        });
    }
    let mut bits = BitString::new();
    for f in &cmd.fields {
        let width = model.identifier(f).map(|i| i.bit_width).unwrap_or(0);
        let v = *values.get(f).ok_or_else(|| CodecError::MissingField(f.clone()))?;
        if v > max_value(width) {
            return Err(CodecError::ValueOverflow {
                field: f.clone(),
                value: v,
                width,
            });
        }
        bits.push(v, width);
    }
    let sender = match cmd.direction {
        crate::model::Direction::Uplink => Party::UE,
        crate::model::Direction::Downlink => Party::BaseStation,
    };
    Ok(WireMessage {
        command: command.to_string(),
        bits,
        meta: Meta { sender, timestamp: 0 },
    })
}

/// Inverse of [`encode`].
pub fn decode(model: &ProtocolModel, bits: &BitString, command: &str) -> Result<Values, CodecError> {
    let cmd = model
        .command(command)
        .ok_or_else(|| CodecError::UnknownCommand(command.to_string()))?;
    let expected: u32 = model.field_bits(cmd);
    if bits.len() != expected {
        return Err(CodecError::LengthMismatch {
            expected,
            actual: bits.len(),
        });
    }
    let mut out = Values::new();
    let mut offset = 0;
    for f in &cmd.fields {
        let width = model.identifier(f).map(|i| i.bit_width).unwrap_or(0);
        out.insert(f.clone(), bits.read(offset, width));
        offset += width;
    }
    Ok(out)
}

/// Bit offset and width of a field inside a command.
pub fn field_span(model: &ProtocolModel, command: &str, field: &str) -> Option<(u32, u32)> {
    let cmd = model.command(command)?;
    let mut offset = 0;
    for f in &cmd.fields {
        let w = model.identifier(f)?.bit_width;
        if f == field {
            return Some((offset, w));
        }
        offset += w;
    }
    None
}
