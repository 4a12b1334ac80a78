use std::path::Path;

use fgf_core::campaign::*;
use fgf_core::campaign::Verdict;
use fgf_core::knowledge::{isolate_named, pair_key, IsolationReport, UncertainEntry, UNCERTAIN_LABEL};
use fgf_core::model::*;
use fgf_core::planner::*;
use fgf_core::sim::*;

fn rrc_request_plan(m: &ProtocolModel, report: &IsolationReport) -> FuzzPlan {
    let mut plan = plan_bit_level(m, report, &PlanOptions::seeded(1)).unwrap();
    plan.cases.retain(|c| c.command() == "RRCConnectionRequest");
    plan
}

fn hardening() -> Vec<FortificationToggle> {
    vec![
        FortificationToggle::new(FortificationKind::HashedImsiWithIntegrity),
        FortificationToggle::new(FortificationKind::IntegrityProtectRrcTransactionId),
    ]
}

#[test]
fn establishment_cause_yields_a_finding() {
    let m = nsa_model();
    let plan = rrc_request_plan(&m, &isolate_named(&m, "table1_rrc").unwrap());
    assert_eq!(plan.len(), 9);
    let r = execute(&plan, &SimConfig::new(m.clone(), 1), 2).unwrap();
    assert_eq!(r.results.len(), 9);
    let cause: Vec<Verdict> = r
        .results
        .iter()
        .filter(|x| x.case_id.contains(":establishmentCause:"))
        .map(|x| x.verdict)
        .collect();
    assert!(cause.iter().any(|v| *v != Verdict::NoEffect), "{cause:?}");
    // The honest value changes nothing.
    assert_eq!(cause[0], Verdict::NoEffect);
}

#[test]
fn empty_plan_gives_a_zeroed_summary() {
    let m = nsa_model();
    let mut plan = rrc_request_plan(&m, &isolate_named(&m, "table1_rrc").unwrap());
    plan.cases.clear();
    let r = execute(&plan, &SimConfig::new(m, 1), 4).unwrap();
    assert!(r.results.is_empty());
    assert_eq!(r.summary.len(), Verdict::ALL.len());
    assert!(r.summary.values().all(|n| *n == 0));
}

#[test]
fn mismatched_plan_and_simulator_models() {
    let m = nsa_model();
    let plan = rrc_request_plan(&m, &isolate_named(&m, "table1_rrc").unwrap());
    let other = apply_fortification(&m, &hardening()).unwrap();
    assert!(matches!(
        execute(&plan, &SimConfig::new(other, 1), 1),
        Err(CampaignError::ConfigMismatch { .. })
    ));
}

#[test]
fn feedback_promotes_confirmed_uncertain_pairs() {
    let m = nsa_model();
    let mut report = isolate_named(&m, "table1_rrc").unwrap();
    let pos = report
        .attack
        .iter()
        .position(|e| e.identifier == "establishmentCause" && e.property == Property::Integrity)
        .expect("establishmentCause integrity is attackable under table1_rrc");
    let e = report.attack.remove(pos);
    report.uncertain.push(UncertainEntry {
        identifier: e.identifier,
        property: e.property,
        phase: e.phase,
        reason: UNCERTAIN_LABEL.into(),
    });
    assert!(report.is_uncertain("establishmentCause", Property::Integrity));

    let plan = rrc_request_plan(&m, &report);
    let result = execute(&plan, &SimConfig::new(m.clone(), 1), 1).unwrap();
    let updated = feedback(&result, &report).unwrap();
    assert!(updated.is_attack("establishmentCause", Property::Integrity));
    assert!(!updated.is_uncertain("establishmentCause", Property::Integrity));
    let notes = &updated.annotations[&pair_key("establishmentCause", Property::Integrity)];
    assert!(notes.iter().any(|n| n.starts_with("empirical trace")));
    // Nothing moves into the secure region.
    assert!(updated.secure.len() <= report.secure.len());
}

#[test]
fn empty_result_leaves_the_report_alone() {
    let m = nsa_model();
    let report = isolate_named(&m, "table1_rrc").unwrap();
    let prov = Provenance {
        report_id: report.report_id(),
        profile: report.profile.clone(),
        model_id: m.model_id(),
    };
    let empty = CampaignResult::empty(ResultKind::Bit, prov);
    assert_eq!(feedback(&empty, &report).unwrap(), report);
}

#[test]
fn feedback_checks_provenance() {
    let m = nsa_model();
    let report = isolate_named(&m, "table1_rrc").unwrap();
    let prov = Provenance {
        report_id: "x".into(),
        profile: "table1_rrc".into(),
        model_id: "not-this-model".into(),
    };
    assert!(matches!(
        feedback(&CampaignResult::empty(ResultKind::Bit, prov), &report),
        Err(CampaignError::ProvenanceMismatch { .. })
    ));
}

#[test]
fn execute_is_independent_of_parallelism() {
    let m = nsa_model();
    let base = SimConfig::new(m.clone(), 77);
    let bit = plan_bit_level(&m, &isolate_named(&m, "table1_rrc").unwrap(), &PlanOptions::seeded(77)).unwrap();
    assert_eq!(execute(&bit, &base, 1).unwrap(), execute(&bit, &base, 8).unwrap());
    let cmd = plan_command_level(
        &m,
        &isolate_named(&m, "identity_disclosure").unwrap(),
        300,
        Scheme::UniformRandom,
        &PlanOptions::seeded(77),
    )
    .unwrap();
    let one = execute(&cmd, &base, 1).unwrap();
    let eight = execute(&cmd, &base, 8).unwrap();
    assert_eq!(one, eight);
    assert_eq!(one.to_json(), eight.to_json());
}

#[test]
fn case_traces_regenerate_from_the_plan() {
    let m = nsa_model();
    let base = SimConfig::new(m.clone(), 5);
    let plan = rrc_request_plan(&m, &isolate_named(&m, "table1_rrc").unwrap());
    let r = execute(&plan, &base, 1).unwrap();
    for res in &r.results {
        let t = case_trace(&plan, &res.case_id, &base).unwrap();
        assert_eq!(trace_digest(&t), res.trace_ref);
    }
}

#[test]
fn result_formats() {
    let m = nsa_model();
    let plan = rrc_request_plan(&m, &isolate_named(&m, "table1_rrc").unwrap());
    let r = execute(&plan, &SimConfig::new(m, 1), 1).unwrap();
    assert_eq!(CampaignResult::from_json(&r.to_json()).unwrap(), r);
    let csv = r.summary_csv();
    assert_eq!(csv.lines().count(), 1 + Verdict::ALL.len());
    let total: usize = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(total, 9);
    assert!(r.to_text().contains("establishmentCause"));
}

#[test]
fn scenarios_match_the_engine() {
    let m = nsa_model();
    let base = SimConfig::new(m.clone(), 7);
    let v = |s: Scenario, b: &SimConfig| run_scenario(&s.to_string(), b).unwrap();

    let rrc = v(Scenario::RrcRejectReleaseRepeat, &base).verdict;
    assert!(matches!(rrc, Verdict::DisconnectDos | Verdict::Desync));
    let auth = v(Scenario::AuthReplayAttackerOnly, &base);
    assert!(auth.observations.iter().any(|o| o == "attacker-received:AuthenticationResponse"));
    for s in [Scenario::NasMitmFakeBaseStation, Scenario::AsMitmFakeBaseStation] {
        assert_eq!(v(s, &base).verdict, Verdict::ImpersonationSuccess, "{s}");
    }
    for s in [Scenario::NasDosCut, Scenario::AsDosCut] {
        assert_eq!(v(s, &base).verdict, Verdict::DisconnectDos, "{s}");
    }

    let toggles = hardening();
    let hardened = apply_fortification(&m, &toggles).unwrap();
    let fbase = base.clone().with_fortifications(toggles);
    for s in [Scenario::NasMitmFakeBaseStation, Scenario::AsMitmFakeBaseStation] {
        let got = v(s, &fbase).verdict;
        assert!(matches!(got, Verdict::GracefulReject | Verdict::NoEffect), "{s}: {got}");
        let (id, prop) = s.concordance();
        assert!(isolate_named(&hardened, s.profile()).unwrap().is_secure(id, prop), "{s}");
    }
}

#[test]
fn unknown_scenario_is_an_error() {
    let base = SimConfig::new(nsa_model(), 1);
    assert_eq!(
        run_scenario("Nope", &base).unwrap_err(),
        CampaignError::UnknownScenario("Nope".into())
    );
}

#[test]
fn actions_parse() {
    assert_eq!(parse_action("block").unwrap(), Action::Block);
    assert_eq!(parse_action("delay 3").unwrap(), Action::Delay(3));
    assert_eq!(parse_action("record t").unwrap(), Action::Record("t".into()));
    match parse_action("forge ASSecurityModeCommand AS-EEA=0 MAC-I=@K_RRCint signed").unwrap() {
        Action::Forge { command, values, sign } => {
            assert_eq!(command, "ASSecurityModeCommand");
            assert_eq!(values["AS-EEA"], ValueSource::Literal(0));
            assert_eq!(values["MAC-I"], ValueSource::Copy("K_RRCint".into()));
            assert!(sign);
        }
        other => panic!("{other:?}"),
    }
    assert!(parse_action("modify").is_err());
    assert!(parse_action("teleport").is_err());
    assert!(parse_action("delay x").is_err());
}

const SESSION_CONFIG: &str = "\
[campaign]
level = session
seed = 4

[intercept]
direction = downlink
command = *
actions = block
";

#[test]
fn session_config_runs() {
    let cfg = parse_campaign_config(SESSION_CONFIG).unwrap();
    assert_eq!(cfg.level, Level::Session);
    assert_eq!(cfg.interceptor.entries.len(), 1);
    let out = run_config(&cfg, Path::new(".")).unwrap();
    let trace = out.trace.unwrap();
    assert_eq!(trace.phase(Party::UE), PartyPhase::Failed(FailReason::Timeout));
    assert_eq!(out.result.results[0].verdict, Verdict::DisconnectDos);
}

#[test]
fn bit_config_runs_with_feedback() {
    let text = "[campaign]\nprofile = table1_rrc\nlevel = bit\ncommands = RRCConnectionRequest\nparallelism = 2\n";
    let out = run_config(&parse_campaign_config(text).unwrap(), Path::new(".")).unwrap();
    assert_eq!(out.result.results.len(), 9);
    assert!(out.report.is_some());
    assert_eq!(out.plan.unwrap().len(), 9);
}

#[test]
fn scenario_config_runs_every_scenario() {
    let text = "[campaign]\nlevel = scenario\nscenario = all\n";
    let out = run_config(&parse_campaign_config(text).unwrap(), Path::new(".")).unwrap();
    assert_eq!(out.result.results.len(), Scenario::ALL.len());
}

#[test]
fn bad_configs_are_rejected_with_positions() {
    let cases = [
        "[campaign]\nlevel = galactic\n",
        "[campaign]\nbudget = 0\n",
        "[campaign]\nfortifications = Moat\n",
        "[campaign]\n[campaign]\n",
        "[intercept]\nactions = block\n",
        "[campaign]\n[intercept]\nactions = fly\n",
        "[campaign]\n[intercept]\nwhen = Sleeping\nactions = block\n",
    ];
    for text in cases {
        assert!(matches!(parse_campaign_config(text), Err(ModelError::Parse { .. })), "{text}");
    }
    let err = parse_campaign_config("[campaign]\nseed = -1\n").unwrap_err();
    assert!(matches!(err, ModelError::Parse { line: 2, .. }));
}

#[test]
fn unknown_profile_fails_at_run_time() {
    let cfg = parse_campaign_config("[campaign]\nprofile = ghost\n").unwrap();
    assert!(matches!(run_config(&cfg, Path::new(".")), Err(CampaignError::Invalid(_))));
}
