mod common;

use std::collections::BTreeSet;

use fgf_core::depgraph::*;
use fgf_core::model::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn nas_encryption_key_vector_and_score() {
    let g = build_graph(&nsa_model());
    let v = g.security_vector("K_NASenc", Mode::Frontier).unwrap();
    assert_eq!(v.to_array(), [0, 5, 1, 0]);
    assert_eq!(weighted_score(v, WeightVector::default()), 5.5);
}

#[test]
fn rrc_setup_identifiers_are_unprotected() {
    let m = nsa_model();
    let g = build_graph(&m);
    let rrc: Vec<&IdentifierDef> = m
        .identifiers
        .iter()
        .filter(|i| m.phase_of(&i.name) == Some(Phase::RrcSetup))
        .collect();
    assert!(rrc.len() >= 7);
    for i in rrc {
        assert_eq!(g.security_vector(&i.name, Mode::Frontier).unwrap().to_array(), [0; 4], "{}", i.name);
    }
}

#[test]
fn nas_key_dependency_structure() {
    let m = nsa_model();
    let g = build_graph(&m);
    let sub = g.dependency_subgraph("K_NASenc").unwrap();
    let first: BTreeSet<&str> = sub.protectors("K_NASenc", Property::Integrity).into_iter().collect();
    assert_eq!(first, BTreeSet::from(["KSI_ASME", "NAS-EEA", "NAS-EIA"]));

    let second: BTreeSet<&str> = first
        .iter()
        .flat_map(|f| sub.protectors(f, Property::Integrity))
        .collect();
    assert_eq!(
        second,
        BTreeSet::from(["AUTN_HSS", "IMSI", "NAS-MAC", "RAND", "UE-SecurityCapability"])
    );
    let commands: BTreeSet<&str> = second.iter().map(|n| sub.node(n).unwrap().command.as_str()).collect();
    assert_eq!(
        commands,
        BTreeSet::from(["AttachRequest", "AuthenticationRequest", "NASSecurityModeCommand"])
    );
}

#[test]
fn subgraph_keeps_only_ancestors() {
    let g = build_graph(&nsa_model());
    let sub = g.dependency_subgraph("K_NASenc").unwrap();
    assert!(sub.contains("K_NASenc"));
    assert!(!sub.contains("RRC-TransactionIdentifier"));
    assert!(sub.edges.iter().all(|e| sub.contains(&e.from) && sub.contains(&e.to)));
}

#[test]
fn additive_mode_counts_every_path() {
    let g = build_graph(&nsa_model());
    let f = g.security_vector("K_NASenc", Mode::Frontier).unwrap();
    let a = g.security_vector("K_NASenc", Mode::Additive).unwrap();
    for p in Property::ALL {
        assert!(a.get(p) >= f.get(p), "{p:?}");
    }
}

#[test]
fn zero_frontier_level_means_unprotected() {
    let m = nsa_model();
    let g = build_graph(&m);
    for i in &m.identifiers {
        let f = g.security_vector(&i.name, Mode::Frontier).unwrap();
        let a = g.security_vector(&i.name, Mode::Additive).unwrap();
        for p in Property::ALL {
            let unprotected = m.protection_of(&i.name, p).is_none();
            assert_eq!(f.get(p) == 0, unprotected, "{} {p:?}", i.name);
            assert_eq!(a.get(p) == 1, unprotected, "{} {p:?}", i.name);
        }
    }
}

#[test]
fn ranking_is_ascending() {
    let g = build_graph(&nsa_model());
    let r = g.rank_identifiers(WeightVector::default());
    assert_eq!(r.len(), nsa_model().identifiers.len());
    assert!(r.windows(2).all(|w| w[0].1 <= w[1].1));
    assert_eq!(r.last().unwrap().1, r.iter().map(|x| x.1).fold(0.0, f64::max));
    let json: serde_json::Value = serde_json::from_str(&ranking_to_json(&r)).unwrap();
    assert_eq!(json.as_array().unwrap().len(), r.len());
}

#[test]
fn weight_vector_parses() {
    assert_eq!(WeightVector::parse("1,1,0.5,0.5"), Some(WeightVector::default()));
    assert_eq!(WeightVector::parse("1,2,3"), None);
    assert_eq!(WeightVector::parse("a,b,c,d"), None);
}

#[test]
fn dot_output_names_every_edge() {
    let g = build_graph(&nsa_model()).dependency_subgraph("K_NASenc").unwrap();
    let dot = g.to_dot();
    assert!(dot.starts_with("digraph"));
    assert_eq!(dot.matches("->").count(), g.edges.len());
}

#[test]
fn frontier_matches_brute_force_on_generated_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..200 {
        let m = common::random_graph_model(&mut rng, 8);
        assert!(validate(&m).is_empty(), "{:?}", validate(&m));
        let g = build_graph(&m);
        for i in &m.identifiers {
            let v = g.security_vector(&i.name, Mode::Frontier).unwrap();
            for p in Property::ALL {
                assert_eq!(v.get(p), brute_force_level(&g, &i.name, p), "{} {p:?}", i.name);
            }
        }
    }
}

proptest! {
    #[test]
    fn frontier_is_bounded_by_additive(seed in any::<u64>()) {
        let m = common::random_graph_model(&mut ChaCha8Rng::seed_from_u64(seed), 8);
        let g = build_graph(&m);
        for i in &m.identifiers {
            let f = g.security_vector(&i.name, Mode::Frontier).unwrap();
            let a = g.security_vector(&i.name, Mode::Additive).unwrap();
            for p in Property::ALL {
                prop_assert!(f.get(p) <= a.get(p));
            }
        }
    }

    #[test]
    fn protecting_more_never_lowers_the_score(seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let mut m = common::random_graph_model(&mut ChaCha8Rng::seed_from_u64(seed), 8);
        let before = build_graph(&m);
        // Protect one currently unprotected property by the first identifier.
        let n = m.identifiers.len();
        if n < 2 {
            return Ok(());
        }
        let target = 1 + pick.index(n - 1);
        let name = m.identifiers[target].name.clone();
        let p = Property::Integrity;
        if !m.protection_of(&name, p).is_none() {
            return Ok(());
        }
        m.protection_mut(&name).unwrap().integrity = Protection::by(["x0"]);
        let after = build_graph(&m);
        prop_assert!(
            after.security_vector(&name, Mode::Frontier).unwrap().get(p)
                >= before.security_vector(&name, Mode::Frontier).unwrap().get(p)
        );
    }
}
