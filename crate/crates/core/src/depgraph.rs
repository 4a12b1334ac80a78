//! Dependency graph, security vectors and weighted risk scores.
//!
//! An edge `q -> x` labelled with a property says that `q` protects that
//! property of `x`. Key derivations add `input -> output` edges labelled
//! [`EdgeLabel::Derive`]. Two evaluation modes are provided:
//!
//! * [`Mode::Frontier`] counts the distinct unprotected identifiers an
//!   attacker has to control to break a property, expanding protectors
//!   transitively. This is what reproduces `K_NASenc = [0,5,1,0]`.
//! * [`Mode::Additive`] is the printed recursive algorithm: start from
//!   `[1,1,1,1]` and add each protector's vector masked by the relation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Phase, Property, ProtocolModel};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeLabel {
    C,
    I,
    Au,
    Ac,
    Derive,
}

impl EdgeLabel {
    pub fn of(p: Property) -> EdgeLabel {
        match p {
            Property::Confidentiality => EdgeLabel::C,
            Property::Integrity => EdgeLabel::I,
            Property::Authentication => EdgeLabel::Au,
            Property::Accounting => EdgeLabel::Ac,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    pub command: String,
    pub phase: Option<Phase>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub label: EdgeLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SecurityVector {
    pub c: u64,
    pub i: u64,
    pub au: u64,
    pub ac: u64,
}

impl SecurityVector {
    pub fn to_array(self) -> [u64; 4] {
        [self.c, self.i, self.au, self.ac]
    }

    pub fn from_array(a: [u64; 4]) -> Self {
        SecurityVector {
            c: a[0],
            i: a[1],
            au: a[2],
            ac: a[3],
        }
    }

    pub fn get(&self, p: Property) -> u64 {
        self.to_array()[p.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub c: f64,
    pub i: f64,
    pub au: f64,
    pub ac: f64,
}

impl Default for WeightVector {
    fn default() -> Self {
        WeightVector {
            c: 1.0,
            i: 1.0,
            au: 0.5,
            ac: 0.5,
        }
    }
}

impl WeightVector {
    pub fn new(c: f64, i: f64, au: f64, ac: f64) -> Self {
        WeightVector { c, i, au, ac }
    }

    /// Parses `a,b,c,d`. Rejects negative components and the zero vector.
    pub fn parse(s: &str) -> Option<WeightVector> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().ok())
            .collect::<Option<_>>()?;
        if parts.len() != 4 || parts.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return None;
        }
        if parts.iter().all(|x| *x == 0.0) {
            return None;
        }
        Some(WeightVector::new(parts[0], parts[1], parts[2], parts[3]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Mode {
    #[default]
    Frontier,
    Additive,
}

pub fn weighted_score(v: SecurityVector, w: WeightVector) -> f64 {
    w.c * v.c as f64 + w.i * v.i as f64 + w.au * v.au as f64 + w.ac * v.ac as f64
}

pub fn build_graph(model: &ProtocolModel) -> DependencyGraph {
    let nodes = model
        .identifiers
        .iter()
        .map(|i| Node {
            name: i.name.clone(),
            command: i.owner_command.clone(),
            phase: model.command(&i.owner_command).map(|c| c.phase),
        })
        .collect();
    let mut edges = BTreeSet::new();
    for e in &model.protections {
        for p in Property::ALL {
            for q in e.get(p).protectors() {
                edges.insert(Edge {
                    from: q.clone(),
                    to: e.identifier.clone(),
                    label: EdgeLabel::of(p),
                });
            }
        }
    }
    for k in &model.kdfs {
        for i in &k.inputs {
            edges.insert(Edge {
                from: i.clone(),
                to: k.output.clone(),
                label: EdgeLabel::Derive,
            });
        }
    }
    DependencyGraph {
        nodes,
        edges: edges.into_iter().collect(),
    }
}

impl DependencyGraph {
    pub fn contains(&self, name: &str) -> bool {
        self.nodes.iter().any(|n| n.name == name)
    }

    pub fn node(&self, name: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.name == name)
    }

    fn check(&self, name: &str) -> Result<(), GraphError> {
        if self.contains(name) {
            Ok(())
        } else {
            Err(GraphError::UnknownIdentifier(name.to_string()))
        }
    }

    /// Sources of edges into `name` with the given label, sorted.
    pub fn direct(&self, name: &str, label: EdgeLabel) -> Vec<&str> {
        self.edges
            .iter()
            .filter(|e| e.to == name && e.label == label)
            .map(|e| e.from.as_str())
            .collect()
    }

    /// Direct protectors of `name` for a property.
    pub fn protectors(&self, name: &str, p: Property) -> Vec<&str> {
        self.direct(name, EdgeLabel::of(p))
    }

    /// Leaves reached by expanding `name` through its `p` protectors.
    fn leaves<'a>(
        &'a self,
        name: &'a str,
        p: Property,
        memo: &mut BTreeMap<&'a str, BTreeSet<&'a str>>,
    ) -> BTreeSet<&'a str> {
        if let Some(hit) = memo.get(name) {
            return hit.clone();
        }
        let prot = self.protectors(name, p);
        let out = if prot.is_empty() {
            BTreeSet::from([name])
        } else {
            let mut acc = BTreeSet::new();
            for q in prot {
                acc.extend(self.leaves(q, p, memo));
            }
            acc
        };
        memo.insert(name, out.clone());
        out
    }

    /// The minimal compromising frontier of one property: the unprotected
    /// identifiers that all have to fall for the property to fall. Empty when
    /// the property is unprotected.
    pub fn frontier(&self, name: &str, p: Property) -> Result<BTreeSet<String>, GraphError> {
        self.check(name)?;
        let prot = self.protectors(name, p);
        let mut memo = BTreeMap::new();
        let mut acc = BTreeSet::new();
        for q in prot {
            acc.extend(self.leaves(q, p, &mut memo));
        }
        Ok(acc.into_iter().map(str::to_string).collect())
    }

    /// Additive level of one property: one for the identifier itself plus
    /// the levels of its protectors, following only edges of that property.
    fn additive<'a>(&'a self, name: &'a str, p: Property, memo: &mut BTreeMap<&'a str, u64>) -> u64 {
        if let Some(v) = memo.get(name) {
            return *v;
        }
        let mut v = 1;
        for q in self.protectors(name, p) {
            v += self.additive(q, p, memo);
        }
        memo.insert(name, v);
        v
    }

    pub fn security_vector(&self, name: &str, mode: Mode) -> Result<SecurityVector, GraphError> {
        self.check(name)?;
        match mode {
            Mode::Frontier => {
                let mut a = [0u64; 4];
                for p in Property::ALL {
                    a[p.index()] = self.frontier(name, p)?.len() as u64;
                }
                Ok(SecurityVector::from_array(a))
            }
            Mode::Additive => {
                let mut a = [0u64; 4];
                for p in Property::ALL {
                    a[p.index()] = self.additive(name, p, &mut BTreeMap::new());
                }
                Ok(SecurityVector::from_array(a))
            }
        }
    }

    /// Every identifier with its frontier-mode score, ascending by score and
    /// then by name.
    pub fn rank_identifiers(&self, w: WeightVector) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = self
            .nodes
            .iter()
            .map(|n| {
                let v = self
                    .security_vector(&n.name, Mode::Frontier)
                    .expect("node of this graph");
                (n.name.clone(), weighted_score(v, w))
            })
            .collect();
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        out
    }

    /// Induced subgraph over `name` and all of its ancestors along any label.
    pub fn dependency_subgraph(&self, name: &str) -> Result<DependencyGraph, GraphError> {
        self.check(name)?;
        let mut keep = BTreeSet::from([name.to_string()]);
        let mut stack = vec![name.to_string()];
        while let Some(n) = stack.pop() {
            for e in self.edges.iter().filter(|e| e.to == n) {
                if keep.insert(e.from.clone()) {
                    stack.push(e.from.clone());
                }
            }
        }
        Ok(DependencyGraph {
            nodes: self
                .nodes
                .iter()
                .filter(|n| keep.contains(&n.name))
                .cloned()
                .collect(),
            edges: self
                .edges
                .iter()
                .filter(|e| keep.contains(&e.from) && keep.contains(&e.to))
                .cloned()
                .collect(),
        })
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph dependencies {\n  rankdir=LR;\n");
        for n in &self.nodes {
            let _ = writeln!(
                out,
                "  \"{}\" [label=\"{}\\n{}\"];",
                n.name, n.name, n.command
            );
        }
        for e in &self.edges {
            let style = if e.label == EdgeLabel::Derive { ", style=dashed" } else { "" };
            let _ = writeln!(
                out,
                "  \"{}\" -> \"{}\" [label=\"{:?}\"{style}];",
                e.from, e.to, e.label
            );
        }
        out.push_str("}\n");
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }
}

/// Ranking as JSON: `[{"identifier": .., "score": ..}, ..]`.
pub fn ranking_to_json(ranking: &[(String, f64)]) -> String {
    let rows: Vec<serde_json::Value> = ranking
        .iter()
        .map(|(n, s)| serde_json::json!({ "identifier": n, "score": s }))
        .collect();
    serde_json::to_string_pretty(&rows).expect("ranking serializes")
}

/// Exhaustive reference for the frontier level: the smallest set of
/// unprotected identifiers whose compromise breaks property `p` of `name`,
/// where a protected identifier falls only when all of its protectors fall.
/// Exponential in the number of leaves; meant for small models.
pub fn brute_force_level(graph: &DependencyGraph, name: &str, p: Property) -> u64 {
    if graph.protectors(name, p).is_empty() {
        return 0;
    }
    let leaves: Vec<&str> = graph
        .nodes
        .iter()
        .map(|n| n.name.as_str())
        .filter(|n| graph.protectors(n, p).is_empty())
        .collect();
    assert!(leaves.len() < 24, "brute force is for small graphs");
    let mut best = u64::MAX;
    for mask in 0u32..(1u32 << leaves.len()) {
        let size = u64::from(mask.count_ones());
        if size >= best {
            continue;
        }
        let chosen: BTreeSet<&str> = leaves
            .iter()
            .enumerate()
            .filter(|(k, _)| mask & (1 << k) != 0)
            .map(|(_, n)| *n)
            .collect();
        if falls(graph, name, p, &chosen) {
            best = size;
        }
    }
    best
}

fn falls(graph: &DependencyGraph, name: &str, p: Property, chosen: &BTreeSet<&str>) -> bool {
    let prot = graph.protectors(name, p);
    if prot.is_empty() {
        chosen.contains(name)
    } else {
        prot.iter().all(|q| falls(graph, q, p, chosen))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::nsa_model;

    #[test]
    fn nas_encryption_key_vector() {
        let g = build_graph(&nsa_model());
        let v = g.security_vector("K_NASenc", Mode::Frontier).unwrap();
        assert_eq!(v.to_array(), [0, 5, 1, 0]);
        assert_eq!(weighted_score(v, WeightVector::default()), 5.5);
    }

    #[test]
    fn unknown_identifier_is_an_error() {
        let g = build_graph(&nsa_model());
        assert_eq!(
            g.security_vector("nope", Mode::Frontier),
            Err(GraphError::UnknownIdentifier("nope".into()))
        );
    }
}
