//! Formal-guided protocol fuzzing toolkit.
//!
//! The pipeline runs from a declarative [`model::ProtocolModel`] through
//! dependency analysis ([`depgraph`]), attacker-knowledge saturation and
//! search-space isolation ([`knowledge`]), fuzz planning ([`planner`]) and
//! execution against the bundled NSA attach simulator ([`sim`],
//! [`campaign`]). Campaign findings feed back into the isolation report.

pub mod campaign;
pub mod depgraph;
pub mod knowledge;
pub mod model;
pub mod planner;
pub mod sim;

pub use model::{nsa_model, parse_model, validate, ProtocolModel};
