//! Declarative protocol-security model.
//!
//! A [`ProtocolModel`] lists the identifiers carried by a protocol, the
//! commands that carry them, which identifiers protect which (per security
//! property), the key-derivation relation and the attacker assumption
//! profiles. Everything downstream (dependency analysis, knowledge
//! saturation, fuzz planning, simulation) reads this structure and nothing
//! else.

mod fortify;
pub(crate) mod parse;
mod validate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use fortify::{apply_fortification, FortificationError};
pub use parse::{parse_model, parse_number, ModelError};
pub use validate::{validate, violations_to_json, Violation, ViolationKind};

/// Text of the bundled 5G NSA authentication model.
pub const NSA_AUTH_MODEL: &str = include_str!("../../models/nsa_auth.model");

/// Parses the bundled NSA model. The bundled text is covered by tests, so a
/// failure here is a build defect rather than a runtime condition.
pub fn nsa_model() -> ProtocolModel {
    parse_model(NSA_AUTH_MODEL).expect("bundled nsa_auth.model parses")
}

/// Reads and parses a model file.
pub fn load_model(path: impl AsRef<Path>) -> Result<ProtocolModel, ModelError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ModelError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_model(&text)
}

/// One of the four security properties tracked per identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Property {
    Confidentiality,
    Integrity,
    Authentication,
    Accounting,
}

impl Property {
    pub const ALL: [Property; 4] = [
        Property::Confidentiality,
        Property::Integrity,
        Property::Authentication,
        Property::Accounting,
    ];

    pub fn short(self) -> &'static str {
        match self {
            Property::Confidentiality => "C",
            Property::Integrity => "I",
            Property::Authentication => "Au",
            Property::Accounting => "Ac",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn parse(s: &str) -> Option<Property> {
        match s.to_ascii_lowercase().as_str() {
            "c" | "confidentiality" => Some(Property::Confidentiality),
            "i" | "integrity" => Some(Property::Integrity),
            "au" | "authentication" => Some(Property::Authentication),
            "ac" | "accounting" => Some(Property::Accounting),
            _ => None,
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

/// Legal values of an identifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    /// Explicit list of legal bit patterns.
    Enumerated(Vec<u128>),
    /// Inclusive unsigned range.
    Range { lo: u128, hi: u128 },
    /// Every bit pattern of the declared width is legal.
    Opaque,
}

/// Largest value representable in `width` bits.
pub fn max_value(width: u32) -> u128 {
    if width >= 128 {
        u128::MAX
    } else {
        (1u128 << width) - 1
    }
}

impl Domain {
    pub fn contains(&self, width: u32, v: u128) -> bool {
        if v > max_value(width) {
            return false;
        }
        match self {
            Domain::Enumerated(values) => values.contains(&v),
            Domain::Range { lo, hi } => *lo <= v && v <= *hi,
            Domain::Opaque => true,
        }
    }

    /// Number of legal values, as an exact integer.
    pub fn size(&self, width: u32) -> BigUint {
        match self {
            Domain::Enumerated(values) => {
                let distinct: BTreeSet<u128> =
                    values.iter().copied().filter(|v| *v <= max_value(width)).collect();
                BigUint::from(distinct.len())
            }
            Domain::Range { lo, hi } => {
                let hi = (*hi).min(max_value(width));
                if hi < *lo {
                    BigUint::from(0u32)
                } else {
                    BigUint::from(hi - lo) + 1u32
                }
            }
            Domain::Opaque => BigUint::from(1u32) << width,
        }
    }

    /// True when every pattern of the width is legal.
    pub fn is_total(&self, width: u32) -> bool {
        self.size(width) == (BigUint::from(1u32) << width)
    }

    pub fn min_legal(&self, width: u32) -> Option<u128> {
        match self {
            Domain::Enumerated(values) => {
                values.iter().copied().filter(|v| *v <= max_value(width)).min()
            }
            Domain::Range { lo, hi } => (*lo <= (*hi).min(max_value(width))).then_some(*lo),
            Domain::Opaque => Some(0),
        }
    }

    /// Smallest legal value different from `v`.
    pub fn smallest_legal_other_than(&self, width: u32, v: u128) -> Option<u128> {
        match self {
            Domain::Enumerated(values) => values
                .iter()
                .copied()
                .filter(|x| *x != v && *x <= max_value(width))
                .min(),
            Domain::Range { lo, hi } => {
                let hi = (*hi).min(max_value(width));
                if *lo > hi {
                    None
                } else if *lo != v {
                    Some(*lo)
                } else if *lo < hi {
                    Some(lo + 1)
                } else {
                    None
                }
            }
            Domain::Opaque => Some(if v == 0 { 1 } else { 0 }).filter(|x| *x <= max_value(width)),
        }
    }
}

/// What an identifier means to the protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SemanticRole {
    UserIdentity,
    Nonce,
    KeyMaterial,
    AlgorithmSelector,
    Mac,
    Config,
    Spare,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentifierDef {
    pub name: String,
    pub bit_width: u32,
    pub domain: Domain,
    pub owner_command: String,
    pub semantic_role: SemanticRole,
    /// Value used by an honest session, when it is a fixed configuration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub honest_value: Option<u128>,
    /// Never attacker-known by construction (e.g. a private key).
    #[serde(default)]
    pub assumed_secret: bool,
}

impl IdentifierDef {
    /// Honest value if declared, otherwise the smallest legal value.
    pub fn nominal_value(&self) -> u128 {
        self.honest_value
            .or_else(|| self.domain.min_legal(self.bit_width))
            .unwrap_or(0)
    }
}

/// Protection of one property of one identifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Protection {
    None,
    ProtectedBy(BTreeSet<String>),
}

impl Protection {
    pub fn protectors(&self) -> impl Iterator<Item = &String> {
        let set = match self {
            Protection::None => None,
            Protection::ProtectedBy(s) => Some(s),
        };
        set.into_iter().flatten()
    }

    pub fn is_none(&self) -> bool {
        matches!(self, Protection::None)
    }

    pub fn by<I, S>(names: I) -> Protection
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = names.into_iter().map(Into::into).collect();
        if set.is_empty() {
            Protection::None
        } else {
            Protection::ProtectedBy(set)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtectionEntry {
    pub identifier: String,
    pub confidentiality: Protection,
    pub integrity: Protection,
    pub authentication: Protection,
    pub accounting: Protection,
}

impl ProtectionEntry {
    pub fn unprotected(identifier: impl Into<String>) -> Self {
        ProtectionEntry {
            identifier: identifier.into(),
            confidentiality: Protection::None,
            integrity: Protection::None,
            authentication: Protection::None,
            accounting: Protection::None,
        }
    }

    pub fn get(&self, p: Property) -> &Protection {
        match p {
            Property::Confidentiality => &self.confidentiality,
            Property::Integrity => &self.integrity,
            Property::Authentication => &self.authentication,
            Property::Accounting => &self.accounting,
        }
    }

    pub fn get_mut(&mut self, p: Property) -> &mut Protection {
        match p {
            Property::Confidentiality => &mut self.confidentiality,
            Property::Integrity => &mut self.integrity,
            Property::Authentication => &mut self.authentication,
            Property::Accounting => &mut self.accounting,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Layer {
    RRC,
    NAS,
    AS,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    Uplink,
    Downlink,
}

/// Procedure phases of the attach flow, in protocol order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    RrcSetup,
    MutualAuth,
    NasSecurity,
    AsSecurity,
}

impl Phase {
    pub const ALL: [Phase; 4] = [
        Phase::RrcSetup,
        Phase::MutualAuth,
        Phase::NasSecurity,
        Phase::AsSecurity,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandDef {
    pub name: String,
    pub layer: Layer,
    pub direction: Direction,
    pub fields: Vec<String>,
    pub phase: Phase,
    /// Declared total length in bits; must equal the sum of field widths.
    pub declared_length: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KdfRule {
    pub output: String,
    pub inputs: BTreeSet<String>,
    pub invertible_inputs: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Capability {
    Eavesdrop,
    Inject,
    Replay,
    MitmRelay,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssumptionProfile {
    pub name: String,
    pub known_identifiers: BTreeSet<String>,
    pub capabilities: BTreeSet<Capability>,
}

impl AssumptionProfile {
    pub fn has(&self, c: Capability) -> bool {
        self.capabilities.contains(&c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FortificationKind {
    IntegrityProtectRrcTransactionId,
    HashedImsi,
    HashedImsiWithIntegrity,
    AsymmetricEncryptionPreAuth,
}

impl FortificationKind {
    pub fn parse(s: &str) -> Option<FortificationKind> {
        match s.trim() {
            "IntegrityProtectRrcTransactionId" => Some(Self::IntegrityProtectRrcTransactionId),
            "HashedImsi" => Some(Self::HashedImsi),
            "HashedImsiWithIntegrity" => Some(Self::HashedImsiWithIntegrity),
            "AsymmetricEncryptionPreAuth" => Some(Self::AsymmetricEncryptionPreAuth),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FortificationToggle {
    pub kind: FortificationKind,
    #[serde(default)]
    pub parameters: BTreeMap<String, String>,
}

impl FortificationToggle {
    pub fn new(kind: FortificationKind) -> Self {
        FortificationToggle {
            kind,
            parameters: BTreeMap::new(),
        }
    }
}

/// A named downlink base sequence for command-level fuzzing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceDef {
    pub name: String,
    pub base: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolModel {
    pub identifiers: Vec<IdentifierDef>,
    pub protections: Vec<ProtectionEntry>,
    pub commands: Vec<CommandDef>,
    pub kdfs: Vec<KdfRule>,
    pub profiles: Vec<AssumptionProfile>,
    #[serde(default)]
    pub sequences: Vec<SequenceDef>,
}

impl ProtocolModel {
    pub fn identifier(&self, name: &str) -> Option<&IdentifierDef> {
        self.identifiers.iter().find(|i| i.name == name)
    }

    pub fn command(&self, name: &str) -> Option<&CommandDef> {
        self.commands.iter().find(|c| c.name == name)
    }

    pub fn protection(&self, name: &str) -> Option<&ProtectionEntry> {
        self.protections.iter().find(|p| p.identifier == name)
    }

    pub fn protection_mut(&mut self, name: &str) -> Option<&mut ProtectionEntry> {
        self.protections.iter_mut().find(|p| p.identifier == name)
    }

    pub fn profile(&self, name: &str) -> Option<&AssumptionProfile> {
        self.profiles.iter().find(|p| p.name == name)
    }

    pub fn sequence(&self, name: &str) -> Option<&SequenceDef> {
        self.sequences.iter().find(|s| s.name == name)
    }

    /// Protection of `p` for `name`; missing entries read as unprotected.
    pub fn protection_of(&self, name: &str, p: Property) -> Protection {
        self.protection(name)
            .map(|e| e.get(p).clone())
            .unwrap_or(Protection::None)
    }

    /// Sum of the field widths of a command.
    pub fn field_bits(&self, command: &CommandDef) -> u32 {
        command
            .fields
            .iter()
            .filter_map(|f| self.identifier(f))
            .map(|i| i.bit_width)
            .sum()
    }

    /// Commands carrying `identifier` as a field, in model order.
    pub fn carriers<'a>(&'a self, identifier: &'a str) -> impl Iterator<Item = &'a CommandDef> + 'a {
        self.commands
            .iter()
            .filter(move |c| c.fields.iter().any(|f| f == identifier))
    }

    pub fn on_wire(&self, identifier: &str) -> bool {
        self.carriers(identifier).next().is_some()
    }

    /// KDF rule producing `identifier`, if any.
    pub fn kdf_for(&self, identifier: &str) -> Option<&KdfRule> {
        self.kdfs.iter().find(|k| k.output == identifier)
    }

    /// Phase of an identifier's owner command.
    pub fn phase_of(&self, identifier: &str) -> Option<Phase> {
        let id = self.identifier(identifier)?;
        self.command(&id.owner_command).map(|c| c.phase)
    }

    /// Stable short digest of the model content; used as a provenance id.
    pub fn model_id(&self) -> String {
        let json = serde_json::to_vec(self).expect("model serializes");
        let digest = Sha256::digest(&json);
        hex::encode(&digest[..8])
    }

    /// Renders the model in the block-structured file format.
    pub fn to_model_text(&self) -> String {
        parse::render_model(self)
    }
}
