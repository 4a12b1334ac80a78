use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ViolationKind {
    Cycle,
    Width,
    Domain,
    Duplicate,
    MissingProtection,
    DuplicateProtection,
    Kdf,
    Profile,
    PhaseOrder,
    UnresolvedReference,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Name of the offending element (identifier, command, profile...).
    pub element: String,
    pub message: String,
}

impl Violation {
    fn new(kind: ViolationKind, element: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            kind,
            element: element.into(),
            message: message.into(),
        }
    }
}

pub fn violations_to_json(v: &[Violation]) -> String {
    serde_json::to_string_pretty(v).expect("violations serialize")
}

/// Checks every structural invariant of a model. The result is sorted, so
/// the same model content always yields the same list regardless of the
/// order in which its sections were written.
pub fn validate(model: &ProtocolModel) -> Vec<Violation> {
    let mut out = Vec::new();
    let ids: BTreeSet<&str> = model.identifiers.iter().map(|i| i.name.as_str()).collect();
    let cmds: BTreeSet<&str> = model.commands.iter().map(|c| c.name.as_str()).collect();

    duplicates(model.identifiers.iter().map(|i| i.name.as_str()), "identifier", &mut out);
    duplicates(model.commands.iter().map(|c| c.name.as_str()), "command", &mut out);
    duplicates(model.profiles.iter().map(|p| p.name.as_str()), "profile", &mut out);
    duplicates(model.kdfs.iter().map(|k| k.output.as_str()), "kdf output", &mut out);

    let mut unresolved = |name: &str, context: String| {
        if !ids.contains(name) {
            out.push(Violation::new(
                ViolationKind::UnresolvedReference,
                name,
                format!("`{name}` referenced from {context} is not a declared identifier"),
            ));
        }
    };
    for c in &model.commands {
        for f in &c.fields {
            unresolved(f, format!("command {}", c.name));
        }
    }
    for p in &model.protections {
        for prop in Property::ALL {
            for name in p.get(prop).protectors() {
                unresolved(name, format!("{prop} protection of {}", p.identifier));
            }
        }
    }
    for k in &model.kdfs {
        unresolved(&k.output, "a kdf output".into());
        for i in &k.inputs {
            unresolved(i, format!("kdf for {}", k.output));
        }
    }
    for p in &model.profiles {
        for k in &p.known_identifiers {
            unresolved(k, format!("profile {}", p.name));
        }
    }

    for i in &model.identifiers {
        if !cmds.contains(i.owner_command.as_str()) {
            out.push(Violation::new(
                ViolationKind::UnresolvedReference,
                &i.name,
                format!("owner command `{}` is not declared", i.owner_command),
            ));
        }
        check_domain(i, &mut out);
    }

    for c in &model.commands {
        let sum: u64 = c
            .fields
            .iter()
            .filter_map(|f| model.identifier(f))
            .map(|i| u64::from(i.bit_width))
            .sum();
        if sum != u64::from(c.declared_length) {
            out.push(Violation::new(
                ViolationKind::Width,
                &c.name,
                format!(
                    "field widths sum to {sum} bits but the declared length is {}",
                    c.declared_length
                ),
            ));
        }
    }
    for pair in model.commands.windows(2) {
        if pair[1].phase < pair[0].phase {
            out.push(Violation::new(
                ViolationKind::PhaseOrder,
                &pair[1].name,
                format!(
                    "phase {:?} listed after {} in phase {:?}",
                    pair[1].phase, pair[0].name, pair[0].phase
                ),
            ));
        }
    }

    let mut entry_count: BTreeMap<&str, usize> = BTreeMap::new();
    for p in &model.protections {
        *entry_count.entry(p.identifier.as_str()).or_default() += 1;
    }
    for i in &model.identifiers {
        match entry_count.get(i.name.as_str()).copied().unwrap_or(0) {
            0 => out.push(Violation::new(
                ViolationKind::MissingProtection,
                &i.name,
                "identifier has no protection entry",
            )),
            1 => {}
            n => out.push(Violation::new(
                ViolationKind::DuplicateProtection,
                &i.name,
                format!("identifier has {n} protection entries"),
            )),
        }
    }
    for p in &model.protections {
        if !ids.contains(p.identifier.as_str()) {
            out.push(Violation::new(
                ViolationKind::UnresolvedReference,
                &p.identifier,
                "protection entry for an undeclared identifier",
            ));
        }
    }

    for prop in Property::ALL {
        let mut edges: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for p in &model.protections {
            for q in p.get(prop).protectors() {
                edges.entry(q.as_str()).or_default().insert(p.identifier.as_str());
            }
        }
        for cycle in cycles(&edges) {
            out.push(Violation::new(
                ViolationKind::Cycle,
                cycle[0],
                format!("{prop} protection cycle through {}", cycle.join(", ")),
            ));
        }
    }

    for k in &model.kdfs {
        if k.inputs.contains(&k.output) {
            out.push(Violation::new(ViolationKind::Kdf, &k.output, "kdf output is one of its own inputs"));
        }
        if !k.invertible_inputs.is_subset(&k.inputs) {
            out.push(Violation::new(
                ViolationKind::Kdf,
                &k.output,
                "invertible inputs must be a subset of the inputs",
            ));
        }
    }
    let mut kdf_edges: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for k in &model.kdfs {
        for i in &k.inputs {
            if *i != k.output {
                kdf_edges.entry(i.as_str()).or_default().insert(k.output.as_str());
            }
        }
    }
    for cycle in cycles(&kdf_edges) {
        out.push(Violation::new(
            ViolationKind::Kdf,
            cycle[0],
            format!("key derivation cycle through {}", cycle.join(", ")),
        ));
    }

    for p in &model.profiles {
        if p.capabilities.is_empty() {
            out.push(Violation::new(
                ViolationKind::Profile,
                &p.name,
                "profile grants no capability",
            ));
        }
    }
    for s in &model.sequences {
        for c in &s.base {
            if !cmds.contains(c.as_str()) {
                out.push(Violation::new(
                    ViolationKind::UnresolvedReference,
                    c,
                    format!("sequence {} names an undeclared command", s.name),
                ));
            }
        }
    }

    out.sort();
    out.dedup();
    out
}

fn duplicates<'a>(names: impl Iterator<Item = &'a str>, what: &str, out: &mut Vec<Violation>) {
    let mut seen = BTreeMap::<&str, usize>::new();
    for n in names {
        *seen.entry(n).or_default() += 1;
    }
    for (n, c) in seen {
        if c > 1 {
            out.push(Violation::new(
                ViolationKind::Duplicate,
                n,
                format!("{what} name declared {c} times"),
            ));
        }
    }
}

fn check_domain(i: &IdentifierDef, out: &mut Vec<Violation>) {
    let w = i.bit_width;
    if w == 0 || w > 128 {
        out.push(Violation::new(
            ViolationKind::Domain,
            &i.name,
            format!("bit width {w} outside 1..=128"),
        ));
        return;
    }
    let max = max_value(w);
    match &i.domain {
        Domain::Enumerated(values) => {
            if values.is_empty() {
                out.push(Violation::new(ViolationKind::Domain, &i.name, "empty enumeration"));
            }
            for v in values {
                if *v > max {
                    out.push(Violation::new(
                        ViolationKind::Domain,
                        &i.name,
                        format!("enumerated value {v:#x} does not fit in {w} bits"),
                    ));
                }
            }
        }
        Domain::Range { lo, hi } => {
            if *hi > max {
                out.push(Violation::new(
                    ViolationKind::Domain,
                    &i.name,
                    format!("range upper bound {hi} does not fit in {w} bits"),
                ));
            }
            if lo > hi {
                out.push(Violation::new(ViolationKind::Domain, &i.name, "empty range"));
            }
        }
        Domain::Opaque => {}
    }
    if let Some(h) = i.honest_value {
        if !i.domain.contains(w, h) {
            out.push(Violation::new(
                ViolationKind::Domain,
                &i.name,
                format!("honest value {h:#x} lies outside the legal domain"),
            ));
        }
    }
}

/// Strongly connected groups that contain a cycle (size > 1 or a self loop),
/// each sorted, in sorted order.
fn cycles<'a>(edges: &BTreeMap<&'a str, BTreeSet<&'a str>>) -> Vec<Vec<&'a str>> {
    let nodes: BTreeSet<&str> = edges
        .iter()
        .flat_map(|(k, v)| std::iter::once(*k).chain(v.iter().copied()))
        .collect();
    let reach = |start: &'a str| -> BTreeSet<&'a str> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![start];
        while let Some(n) = stack.pop() {
            for m in edges.get(n).into_iter().flatten() {
                if seen.insert(*m) {
                    stack.push(m);
                }
            }
        }
        seen
    };
    let reachable: BTreeMap<&str, BTreeSet<&str>> = nodes.iter().map(|n| (*n, reach(n))).collect();
    let mut groups: BTreeSet<Vec<&str>> = BTreeSet::new();
    for n in &nodes {
        if !reachable[n].contains(n) {
            continue;
        }
        let group: Vec<&str> = nodes
            .iter()
            .copied()
            .filter(|m| reachable[n].contains(m) && reachable[m].contains(n))
            .collect();
        groups.insert(group);
    }
    groups.into_iter().collect()
}
