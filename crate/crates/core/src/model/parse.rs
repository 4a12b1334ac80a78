//! Reader and writer for the block-structured model file format.
//!
//! ```text
//! # comment
//! [identifier]
//! name = RAND
//! width = 128
//! domain = opaque
//! owner = AuthenticationRequest
//! role = Nonce
//! ```
//!
//! The full grammar lives in `docs/model-format.md`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use super::*;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown name `{name}` referenced from {context}")]
    Reference { name: String, context: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

fn perr(line: usize, column: usize, message: impl Into<String>) -> ModelError {
    ModelError::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// One `key = value` line with its position.
#[derive(Debug, Clone)]
pub(crate) struct Entry {
    pub value: String,
    pub line: usize,
    pub value_column: usize,
}

/// A `[section]` block: its header line and its keys.
#[derive(Debug, Clone)]
pub(crate) struct Block {
    pub kind: String,
    pub line: usize,
    pub entries: BTreeMap<String, Entry>,
}

impl Block {
    pub fn required(&self, key: &str) -> Result<&Entry, ModelError> {
        self.entries.get(key).ok_or_else(|| {
            perr(
                self.line,
                1,
                format!("[{}] block is missing required key `{key}`", self.kind),
            )
        })
    }

    pub fn optional(&self, key: &str) -> Option<&Entry> {
        self.entries.get(key)
    }
}

/// Splits text into blocks. `allowed` maps each section name to its legal keys.
pub(crate) fn read_blocks(
    text: &str,
    allowed: &[(&str, &[&str])],
) -> Result<Vec<Block>, ModelError> {
    let mut blocks: Vec<Block> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let content = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        let indent = content.len() - content.trim_start().len();
        if let Some(rest) = trimmed.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| perr(line_no, indent + 1, "section header missing `]`"))?
                .trim();
            if !allowed.iter().any(|(s, _)| *s == name) {
                return Err(perr(line_no, indent + 2, format!("unknown section `[{name}]`")));
            }
            blocks.push(Block {
                kind: name.to_string(),
                line: line_no,
                entries: BTreeMap::new(),
            });
            continue;
        }
        let eq = content
            .find('=')
            .ok_or_else(|| perr(line_no, indent + 1, "expected `key = value`"))?;
        let key = content[..eq].trim();
        let value_part = &content[eq + 1..];
        let value = value_part.trim();
        let value_column = eq + 2 + (value_part.len() - value_part.trim_start().len());
        let block = blocks
            .last_mut()
            .ok_or_else(|| perr(line_no, indent + 1, "key outside of any section"))?;
        let keys = allowed
            .iter()
            .find(|(s, _)| *s == block.kind)
            .map(|(_, k)| *k)
            .unwrap_or(&[]);
        if key.is_empty() {
            return Err(perr(line_no, indent + 1, "empty key"));
        }
        if !keys.contains(&key) {
            return Err(perr(
                line_no,
                indent + 1,
                format!("unknown key `{key}` in [{}]", block.kind),
            ));
        }
        if block.entries.contains_key(key) {
            return Err(perr(line_no, indent + 1, format!("duplicate key `{key}`")));
        }
        block.entries.insert(
            key.to_string(),
            Entry {
                value: value.to_string(),
                line: line_no,
                value_column,
            },
        );
    }
    Ok(blocks)
}

/// Parses an unsigned literal: decimal, `0x..` or `0b..`, underscores allowed.
pub fn parse_number(s: &str) -> Option<u128> {
    let s: String = s.trim().chars().filter(|c| *c != '_').collect();
    if let Some(h) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        u128::from_str_radix(h, 16).ok()
    } else if let Some(b) = s.strip_prefix("0b").or_else(|| s.strip_prefix("0B")) {
        u128::from_str_radix(b, 2).ok()
    } else {
        s.parse().ok()
    }
}

fn number(e: &Entry) -> Result<u128, ModelError> {
    parse_number(&e.value)
        .ok_or_else(|| perr(e.line, e.value_column, format!("invalid number `{}`", e.value)))
}

/// Comma separated names; `none` or an empty value is the empty list.
pub(crate) fn name_list(e: &Entry) -> Result<Vec<String>, ModelError> {
    let v = e.value.trim();
    if v.is_empty() || v.eq_ignore_ascii_case("none") {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|s| {
            let s = s.trim();
            if s.is_empty() {
                Err(perr(e.line, e.value_column, "empty name in list"))
            } else {
                Ok(s.to_string())
            }
        })
        .collect()
}

fn parse_domain(e: &Entry) -> Result<Domain, ModelError> {
    let v = e.value.trim();
    if v.eq_ignore_ascii_case("opaque") {
        return Ok(Domain::Opaque);
    }
    if let Some(rest) = v.strip_prefix("enum") {
        let values = rest
            .split(',')
            .map(|s| {
                parse_number(s).ok_or_else(|| {
                    perr(e.line, e.value_column, format!("invalid enum value `{}`", s.trim()))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        return Ok(Domain::Enumerated(values));
    }
    if let Some(rest) = v.strip_prefix("range") {
        let (lo, hi) = rest
            .split_once("..")
            .ok_or_else(|| perr(e.line, e.value_column, "range needs `lo..hi`"))?;
        let lo = parse_number(lo)
            .ok_or_else(|| perr(e.line, e.value_column, "invalid range lower bound"))?;
        let hi = parse_number(hi)
            .ok_or_else(|| perr(e.line, e.value_column, "invalid range upper bound"))?;
        return Ok(Domain::Range { lo, hi });
    }
    Err(perr(
        e.line,
        e.value_column,
        format!("unknown domain `{v}` (expected opaque, enum or range)"),
    ))
}

fn parse_role(e: &Entry) -> Result<SemanticRole, ModelError> {
    Ok(match e.value.as_str() {
        "UserIdentity" => SemanticRole::UserIdentity,
        "Nonce" => SemanticRole::Nonce,
        "KeyMaterial" => SemanticRole::KeyMaterial,
        "AlgorithmSelector" => SemanticRole::AlgorithmSelector,
        "Mac" => SemanticRole::Mac,
        "Config" => SemanticRole::Config,
        "Spare" => SemanticRole::Spare,
        other => return Err(perr(e.line, e.value_column, format!("unknown role `{other}`"))),
    })
}

fn parse_layer(e: &Entry) -> Result<Layer, ModelError> {
    Ok(match e.value.as_str() {
        "RRC" => Layer::RRC,
        "NAS" => Layer::NAS,
        "AS" => Layer::AS,
        other => return Err(perr(e.line, e.value_column, format!("unknown layer `{other}`"))),
    })
}

fn parse_direction(e: &Entry) -> Result<Direction, ModelError> {
    Ok(match e.value.as_str() {
        "Uplink" => Direction::Uplink,
        "Downlink" => Direction::Downlink,
        other => {
            return Err(perr(e.line, e.value_column, format!("unknown direction `{other}`")))
        }
    })
}

fn parse_phase(e: &Entry) -> Result<Phase, ModelError> {
    Ok(match e.value.as_str() {
        "RrcSetup" => Phase::RrcSetup,
        "MutualAuth" => Phase::MutualAuth,
        "NasSecurity" => Phase::NasSecurity,
        "AsSecurity" => Phase::AsSecurity,
        other => return Err(perr(e.line, e.value_column, format!("unknown phase `{other}`"))),
    })
}

fn parse_capability(e: &Entry, s: &str) -> Result<Capability, ModelError> {
    Ok(match s {
        "Eavesdrop" => Capability::Eavesdrop,
        "Inject" => Capability::Inject,
        "Replay" => Capability::Replay,
        "MitmRelay" => Capability::MitmRelay,
        other => {
            return Err(perr(e.line, e.value_column, format!("unknown capability `{other}`")))
        }
    })
}

fn parse_protection(e: &Entry) -> Result<Protection, ModelError> {
    Ok(Protection::by(name_list(e)?))
}

const SECTIONS: &[(&str, &[&str])] = &[
    (
        "identifier",
        &["name", "width", "domain", "owner", "role", "honest", "secret"],
    ),
    (
        "command",
        &["name", "layer", "direction", "phase", "fields", "length"],
    ),
    ("protection", &["identifier", "c", "i", "au", "ac"]),
    ("kdf", &["output", "inputs", "invertible"]),
    ("profile", &["name", "known", "capabilities"]),
    ("sequence", &["name", "base"]),
];

/// Parses model text and resolves every cross reference.
///
/// Commands are stable-sorted by phase so that the file may list them in any
/// order. Structural invariants (widths, cycles, duplicates) are left to
/// [`validate`](super::validate); only names that cannot be resolved at all
/// are rejected here.
pub fn parse_model(text: &str) -> Result<ProtocolModel, ModelError> {
    let blocks = read_blocks(text, SECTIONS)?;
    if blocks.is_empty() {
        return Err(perr(1, 1, "model file contains no sections"));
    }

    let mut model = ProtocolModel {
        identifiers: Vec::new(),
        protections: Vec::new(),
        commands: Vec::new(),
        kdfs: Vec::new(),
        profiles: Vec::new(),
        sequences: Vec::new(),
    };

    for b in &blocks {
        match b.kind.as_str() {
            "identifier" => {
                let width = number(b.required("width")?)?;
                let width_entry = b.required("width")?;
                if width == 0 || width > 128 {
                    return Err(perr(
                        width_entry.line,
                        width_entry.value_column,
                        "width must be between 1 and 128",
                    ));
                }
                let secret = match b.optional("secret") {
                    None => false,
                    Some(e) => match e.value.as_str() {
                        "true" | "yes" => true,
                        "false" | "no" => false,
                        _ => return Err(perr(e.line, e.value_column, "expected true or false")),
                    },
                };
                model.identifiers.push(IdentifierDef {
                    name: b.required("name")?.value.clone(),
                    bit_width: width as u32,
                    domain: parse_domain(b.required("domain")?)?,
                    owner_command: b.required("owner")?.value.clone(),
                    semantic_role: parse_role(b.required("role")?)?,
                    honest_value: b.optional("honest").map(number).transpose()?,
                    assumed_secret: secret,
                });
            }
            "command" => {
                let len = b.required("length")?;
                model.commands.push(CommandDef {
                    name: b.required("name")?.value.clone(),
                    layer: parse_layer(b.required("layer")?)?,
                    direction: parse_direction(b.required("direction")?)?,
                    phase: parse_phase(b.required("phase")?)?,
                    fields: name_list(b.required("fields")?)?,
                    declared_length: u32::try_from(number(len)?)
                        .map_err(|_| perr(len.line, len.value_column, "length too large"))?,
                });
            }
            "protection" => {
                model.protections.push(ProtectionEntry {
                    identifier: b.required("identifier")?.value.clone(),
                    confidentiality: parse_protection(b.required("c")?)?,
                    integrity: parse_protection(b.required("i")?)?,
                    authentication: parse_protection(b.required("au")?)?,
                    accounting: parse_protection(b.required("ac")?)?,
                });
            }
            "kdf" => {
                let inputs: BTreeSet<String> =
                    name_list(b.required("inputs")?)?.into_iter().collect();
                let invertible: BTreeSet<String> = match b.optional("invertible") {
                    Some(e) => name_list(e)?.into_iter().collect(),
                    None => BTreeSet::new(),
                };
                model.kdfs.push(KdfRule {
                    output: b.required("output")?.value.clone(),
                    inputs,
                    invertible_inputs: invertible,
                });
            }
            "profile" => {
                let caps_entry = b.required("capabilities")?;
                let capabilities = name_list(caps_entry)?
                    .iter()
                    .map(|c| parse_capability(caps_entry, c))
                    .collect::<Result<BTreeSet<_>, _>>()?;
                model.profiles.push(AssumptionProfile {
                    name: b.required("name")?.value.clone(),
                    known_identifiers: name_list(b.required("known")?)?.into_iter().collect(),
                    capabilities,
                });
            }
            "sequence" => {
                model.sequences.push(SequenceDef {
                    name: b.required("name")?.value.clone(),
                    base: name_list(b.required("base")?)?,
                });
            }
            _ => unreachable!("read_blocks filters section names"),
        }
    }

    model.commands.sort_by_key(|c| c.phase);
    resolve(&model)?;
    Ok(model)
}

fn resolve(model: &ProtocolModel) -> Result<(), ModelError> {
    let ids: BTreeSet<&str> = model.identifiers.iter().map(|i| i.name.as_str()).collect();
    let cmds: BTreeSet<&str> = model.commands.iter().map(|c| c.name.as_str()).collect();
    let need_id = |name: &str, context: String| -> Result<(), ModelError> {
        if ids.contains(name) {
            Ok(())
        } else {
            Err(ModelError::Reference {
                name: name.to_string(),
                context,
            })
        }
    };
    for i in &model.identifiers {
        if !cmds.contains(i.owner_command.as_str()) {
            return Err(ModelError::Reference {
                name: i.owner_command.clone(),
                context: format!("owner of identifier {}", i.name),
            });
        }
    }
    for c in &model.commands {
        for f in &c.fields {
            need_id(f, format!("fields of command {}", c.name))?;
        }
    }
    for p in &model.protections {
        need_id(&p.identifier, "a protection entry".to_string())?;
        for prop in Property::ALL {
            for name in p.get(prop).protectors() {
                need_id(name, format!("{prop} protection of {}", p.identifier))?;
            }
        }
    }
    for k in &model.kdfs {
        need_id(&k.output, "a kdf output".to_string())?;
        for i in k.inputs.iter().chain(&k.invertible_inputs) {
            need_id(i, format!("kdf for {}", k.output))?;
        }
    }
    for p in &model.profiles {
        for k in &p.known_identifiers {
            need_id(k, format!("profile {}", p.name))?;
        }
    }
    for s in &model.sequences {
        for c in &s.base {
            if !cmds.contains(c.as_str()) {
                return Err(ModelError::Reference {
                    name: c.clone(),
                    context: format!("sequence {}", s.name),
                });
            }
        }
    }
    Ok(())
}

fn join<'a>(names: impl IntoIterator<Item = &'a String>) -> String {
    let v: Vec<&str> = names.into_iter().map(String::as_str).collect();
    if v.is_empty() {
        "none".to_string()
    } else {
        v.join(", ")
    }
}

fn render_protection(p: &Protection) -> String {
    join(p.protectors())
}

pub(crate) fn render_model(model: &ProtocolModel) -> String {
    let mut out = String::new();
    for c in &model.commands {
        let _ = writeln!(out, "[command]");
        let _ = writeln!(out, "name = {}", c.name);
        let _ = writeln!(out, "layer = {:?}", c.layer);
        let _ = writeln!(out, "direction = {:?}", c.direction);
        let _ = writeln!(out, "phase = {:?}", c.phase);
        let _ = writeln!(out, "fields = {}", join(&c.fields));
        let _ = writeln!(out, "length = {}\n", c.declared_length);
    }
    for i in &model.identifiers {
        let _ = writeln!(out, "[identifier]");
        let _ = writeln!(out, "name = {}", i.name);
        let _ = writeln!(out, "width = {}", i.bit_width);
        let domain = match &i.domain {
            Domain::Opaque => "opaque".to_string(),
            Domain::Range { lo, hi } => format!("range {lo}..{hi}"),
            Domain::Enumerated(v) => format!(
                "enum {}",
                v.iter().map(|x| format!("{x:#x}")).collect::<Vec<_>>().join(", ")
            ),
        };
        let _ = writeln!(out, "domain = {domain}");
        let _ = writeln!(out, "owner = {}", i.owner_command);
        let _ = writeln!(out, "role = {:?}", i.semantic_role);
        if let Some(h) = i.honest_value {
            let _ = writeln!(out, "honest = {h:#x}");
        }
        if i.assumed_secret {
            let _ = writeln!(out, "secret = true");
        }
        out.push('\n');
    }
    for p in &model.protections {
        let _ = writeln!(out, "[protection]");
        let _ = writeln!(out, "identifier = {}", p.identifier);
        let _ = writeln!(out, "c = {}", render_protection(&p.confidentiality));
        let _ = writeln!(out, "i = {}", render_protection(&p.integrity));
        let _ = writeln!(out, "au = {}", render_protection(&p.authentication));
        let _ = writeln!(out, "ac = {}\n", render_protection(&p.accounting));
    }
    for k in &model.kdfs {
        let _ = writeln!(out, "[kdf]");
        let _ = writeln!(out, "output = {}", k.output);
        let _ = writeln!(out, "inputs = {}", join(&k.inputs));
        let _ = writeln!(out, "invertible = {}\n", join(&k.invertible_inputs));
    }
    for p in &model.profiles {
        let _ = writeln!(out, "[profile]");
        let _ = writeln!(out, "name = {}", p.name);
        let _ = writeln!(out, "known = {}", join(&p.known_identifiers));
        let caps: Vec<String> = p.capabilities.iter().map(|c| format!("{c:?}")).collect();
        let _ = writeln!(out, "capabilities = {}\n", join(&caps));
    }
    for s in &model.sequences {
        let _ = writeln!(out, "[sequence]");
        let _ = writeln!(out, "name = {}", s.name);
        let _ = writeln!(out, "base = {}\n", join(&s.base));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_in_three_bases() {
        assert_eq!(parse_number("42"), Some(42));
        assert_eq!(parse_number("0x2A"), Some(42));
        assert_eq!(parse_number("0b101010"), Some(42));
        assert_eq!(parse_number("1_000"), Some(1000));
        assert_eq!(parse_number("x"), None);
    }

    #[test]
    fn empty_text_is_a_parse_error() {
        assert!(matches!(parse_model(""), Err(ModelError::Parse { .. })));
        assert!(matches!(parse_model("# only a comment\n"), Err(ModelError::Parse { .. })));
    }

    #[test]
    fn unknown_key_reports_position() {
        let err = parse_model("[command]\n  bogus = 1\n").unwrap_err();
        assert_eq!(
            err,
            ModelError::Parse {
                line: 2,
                column: 3,
                message: "unknown key `bogus` in [command]".into()
            }
        );
    }

    #[test]
    fn bundled_model_round_trips_through_text() {
        let m = nsa_model();
        let again = parse_model(&m.to_model_text()).unwrap();
        assert_eq!(m, again);
    }
}
