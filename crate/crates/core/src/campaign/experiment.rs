//! Planted-fault experiment comparing guided and uniform case ordering.
//!
//! Faults are planted in the UE: receiving a given command from the attacker
//! (forged or replayed) in a given phase drops the connection. Every
//! command-level case is run once with all candidate faults in probe mode,
//! where a triggered fault only leaves a note. A case's probe list is the
//! ordered sequence of faults it triggers. For any subset of planted faults
//! the case then finds exactly the first probe that belongs to the subset,
//! because a real fault ends the session on the spot. One probe run thus
//! answers every trial without re-simulating.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{execute, CampaignError};
use crate::depgraph::WeightVector;
use crate::knowledge::IsolationReport;
use crate::model::ProtocolModel;
use crate::planner::{
    downlink_alphabet, mix_seed, plan_command_level, PlanOptions, Scheme, Scorer,
};
use crate::sim::{Origin, PartyPhase, PlantedFault, SimConfig};

/// Every (subject, UE phase, origin) fault on a downlink command with a
/// positive security score, with that score as its weight.
pub fn candidate_faults(model: &ProtocolModel, weights: WeightVector) -> Vec<(PlantedFault, f64)> {
    let mut scorer = Scorer::new(model, weights);
    let mut out = Vec::new();
    for subject in downlink_alphabet(model) {
        let fields = model.command(&subject).map(|c| c.fields.clone()).unwrap_or_default();
        let score: f64 = fields.iter().map(|f| scorer.identifier_score(f)).sum();
        if score <= 0.0 {
            continue;
        }
        for phase in PartyPhase::LIVE {
            for origin in [Origin::Forged, Origin::Replayed] {
                out.push((
                    PlantedFault {
                        id: format!("{subject}@{phase:?}/{origin:?}"),
                        command: subject.clone(),
                        phase,
                        origin,
                    },
                    score,
                ));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeTable {
    /// Fault ids triggered by each case, in trigger order.
    pub probes: BTreeMap<String, Vec<String>>,
    /// Weight of each candidate fault.
    pub weights: BTreeMap<String, f64>,
}

impl ProbeTable {
    /// Faults that at least one case triggers.
    pub fn triggerable(&self) -> BTreeSet<String> {
        self.probes.values().flatten().cloned().collect()
    }
}

/// Runs the full command-level enumeration once with every candidate fault
/// in probe mode.
pub fn probe_command_cases(
    model: &ProtocolModel,
    report: &IsolationReport,
    base: &SimConfig,
    weights: WeightVector,
    parallelism: usize,
) -> Result<ProbeTable, CampaignError> {
    let candidates = candidate_faults(model, weights);
    let plan = plan_command_level(model, report, usize::MAX, Scheme::UniformRandom, &PlanOptions::seeded(base.seed))?;
    let mut cfg = base.clone();
    cfg.faults = candidates.iter().map(|(f, _)| f.clone()).collect();
    cfg.faults_probe_only = true;
    let result = execute(&plan, &cfg, parallelism)?;
    let probes = result
        .results
        .iter()
        .map(|r| {
            let p = r
                .observations
                .iter()
                .filter_map(|o| o.strip_prefix("planted:"))
                .map(str::to_string)
                .collect();
            (r.case_id.clone(), p)
        })
        .collect();
    Ok(ProbeTable {
        probes,
        weights: candidates.into_iter().map(|(f, w)| (f.id, w)).collect(),
    })
}

#[derive(Debug, Clone)]
pub struct TrialOptions {
    pub first_seed: u64,
    pub trials: u64,
    pub faults_per_trial: usize,
    pub weights: WeightVector,
}

impl Default for TrialOptions {
    fn default() -> Self {
        TrialOptions {
            first_seed: 1,
            trials: 20,
            faults_per_trial: 3,
            weights: WeightVector::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuidanceTrial {
    pub seed: u64,
    pub planted: Vec<String>,
    /// Cases executed, in plan order, until every planted fault was hit.
    pub guided_cost: usize,
    pub uniform_cost: usize,
}

impl GuidanceTrial {
    pub fn guided_wins(&self) -> bool {
        self.guided_cost < self.uniform_cost
    }
}

/// Number of cases of `order` needed to hit every fault in `planted`;
/// `order.len() + 1` if some fault is never hit.
fn cost(order: &[String], table: &ProbeTable, planted: &BTreeSet<String>) -> usize {
    let mut found = BTreeSet::new();
    for (i, id) in order.iter().enumerate() {
        let first = table
            .probes
            .get(id)
            .and_then(|p| p.iter().find(|f| planted.contains(*f)));
        if let Some(f) = first {
            found.insert(f.clone());
            if found.len() == planted.len() {
                return i + 1;
            }
        }
    }
    order.len() + 1
}

/// Plants a seeded, score-weighted sample of triggerable faults per trial
/// and counts how many cases each ordering scheme runs before hitting all of
/// them.
pub fn guidance_trials(
    model: &ProtocolModel,
    report: &IsolationReport,
    table: &ProbeTable,
    opts: &TrialOptions,
) -> Result<Vec<GuidanceTrial>, CampaignError> {
    let triggerable = table.triggerable();
    let pool: Vec<(String, f64)> = table
        .weights
        .iter()
        .filter(|(id, _)| triggerable.contains(*id))
        .map(|(id, w)| (id.clone(), *w))
        .collect();
    let mut out = Vec::new();
    for t in 0..opts.trials {
        let seed = opts.first_seed + t;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, "planted-faults"));
        let planted: BTreeSet<String> = pool
            .choose_multiple_weighted(&mut rng, opts.faults_per_trial, |(_, w)| *w)
            .map_err(|e| CampaignError::Invalid(format!("fault sampling: {e}")))?
            .map(|(id, _)| id.clone())
            .collect();
        let plan_opts = PlanOptions {
            seed,
            weights: opts.weights,
            ..Default::default()
        };
        let order = |scheme| -> Result<Vec<String>, CampaignError> {
            Ok(plan_command_level(model, report, usize::MAX, scheme, &plan_opts)?
                .cases
                .iter()
                .map(|c| c.case_id().to_string())
                .collect())
        };
        out.push(GuidanceTrial {
            seed,
            planted: planted.iter().cloned().collect(),
            guided_cost: cost(&order(Scheme::PriorityGuided)?, table, &planted),
            uniform_cost: cost(&order(Scheme::UniformRandom)?, table, &planted),
        });
    }
    Ok(out)
}
