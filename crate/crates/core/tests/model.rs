use fgf_core::model::*;

#[test]
fn bundled_model_is_clean() {
    let m = nsa_model();
    assert!(validate(&m).is_empty(), "{:?}", validate(&m));
    assert_eq!(m.commands.len(), 18);
    assert_eq!(m.identifiers.len(), m.protections.len());
}

#[test]
fn declared_lengths_match_field_widths() {
    let m = nsa_model();
    for c in &m.commands {
        assert_eq!(m.field_bits(c), c.declared_length, "{}", c.name);
    }
    let lens: Vec<u32> = [
        "RRCConnectionRequest",
        "AuthenticationRequest",
        "NASSecurityModeCommand",
        "ASSecurityModeCommand",
    ]
    .iter()
    .map(|n| m.command(n).unwrap().declared_length)
    .collect();
    assert_eq!(lens, [45, 259, 107, 72]);
}

#[test]
fn text_round_trip_keeps_the_model_id() {
    let m = nsa_model();
    let again = parse_model(&m.to_model_text()).unwrap();
    assert_eq!(m.model_id(), again.model_id());
}

#[test]
fn parse_error_points_at_the_value() {
    let text = "[identifier]\nname = x\nwidth = wide\ndomain = opaque\nowner = C\nrole = Config\n";
    match parse_model(text) {
        Err(ModelError::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn load_model_reports_missing_files() {
    let err = load_model("/definitely/not/here.model").unwrap_err();
    assert!(matches!(err, ModelError::Io { .. }));
}

#[test]
fn width_mismatch_is_reported() {
    let mut m = nsa_model();
    m.commands[0].declared_length += 1;
    let v = validate(&m);
    assert!(v.iter().any(|v| v.kind == ViolationKind::Width && v.element == "RRCConnectionRequest"));
}

#[test]
fn protection_cycle_is_reported() {
    let mut m = nsa_model();
    // NAS-EIA already protects the NAS keys; closing the loop is a cycle.
    m.protection_mut("NAS-EIA").unwrap().integrity = Protection::by(["K_NASint"]);
    let v = validate(&m);
    assert!(v.iter().any(|v| v.kind == ViolationKind::Cycle), "{v:?}");
}

#[test]
fn missing_protection_entry_is_reported() {
    let mut m = nsa_model();
    m.protections.retain(|p| p.identifier != "spare");
    let v = validate(&m);
    assert!(v.iter().any(|v| v.kind == ViolationKind::MissingProtection && v.element == "spare"));
}

#[test]
fn unresolved_field_is_reported() {
    let mut m = nsa_model();
    m.commands[0].fields.push("ghost".into());
    let v = validate(&m);
    assert!(v.iter().any(|v| v.kind == ViolationKind::UnresolvedReference && v.element == "ghost"));
}

#[test]
fn violations_serialize_as_json() {
    let mut m = nsa_model();
    m.commands[0].declared_length = 1;
    let json = violations_to_json(&validate(&m));
    let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert!(parsed.as_array().is_some_and(|a| !a.is_empty()));
}

#[test]
fn domains_count_legal_values() {
    assert_eq!(Domain::Range { lo: 0, hi: 15 }.size(4), 16u32.into());
    assert_eq!(Domain::Enumerated(vec![0]).size(1), 1u32.into());
    assert!(Domain::Opaque.is_total(8));
    assert_eq!(Domain::Enumerated(vec![1, 3]).smallest_legal_other_than(2, 1), Some(3));
}

#[test]
fn integrity_fortification_protects_the_transaction_id() {
    let m = nsa_model();
    let f = apply_fortification(&m, &[FortificationToggle::new(FortificationKind::IntegrityProtectRrcTransactionId)]).unwrap();
    assert!(m.protection_of("RRC-TransactionIdentifier", Property::Integrity).is_none());
    assert_eq!(
        f.protection_of("RRC-TransactionIdentifier", Property::Integrity),
        Protection::by(["MAC-I"])
    );
    assert!(validate(&f).is_empty());
}

#[test]
fn hashed_imsi_fortification_keeps_the_model_valid() {
    let m = nsa_model();
    for kind in [FortificationKind::HashedImsi, FortificationKind::HashedImsiWithIntegrity] {
        let f = apply_fortification(&m, &[FortificationToggle::new(kind)]).unwrap();
        assert!(validate(&f).is_empty(), "{kind:?}: {:?}", validate(&f));
        assert_ne!(f.model_id(), m.model_id());
    }
}

#[test]
fn fortification_with_unknown_target_fails() {
    let mut t = FortificationToggle::new(FortificationKind::IntegrityProtectRrcTransactionId);
    t.parameters.insert("target".into(), "nope".into());
    assert!(matches!(
        apply_fortification(&nsa_model(), &[t]),
        Err(FortificationError::UnknownTarget { .. })
    ));
}
