use heatbridge::control::{validate_assumptions, ControlCost, HomotopyBase};
use heatbridge::scenarios::{build, lookup, registry, scenario_names, ScenarioParams};
use heatbridge::Error;

#[test]
fn registry_names_are_unique_and_buildable() {
    let names = scenario_names();
    let mut sorted = names.clone();
    sorted.sort();
    sorted.dedup();
    assert_eq!(sorted.len(), names.len());
    for e in registry() {
        let s = build(e.name, &ScenarioParams::default()).unwrap();
        assert_eq!(s.name, e.name);
        assert_eq!(s.control_op.shape(), (16, 18));
        assert!(!e.description.is_empty());
    }
}

#[test]
fn unknown_scenario_lists_the_alternatives() {
    let Err(Error::UnknownScenario { name, available }) = lookup("heat") else {
        panic!("lookup of an unknown name succeeded");
    };
    assert_eq!(name, "heat");
    for n in scenario_names() {
        assert!(available.contains(n));
    }
}

#[test]
fn scenario_structure() {
    let p = ScenarioParams::default();
    let bo = build("boundary_only", &p).unwrap();
    assert!(!bo.b_present());
    assert_eq!(bo.homotopy, HomotopyBase::EPlusIdentity);
    let lq = build("lq_benchmark", &p).unwrap();
    assert!(lq.b_present() && lq.is_linear_quadratic());
    let nl = build("nonlinear_gamma", &p).unwrap();
    assert!(matches!(nl.control_cost, ControlCost::Saturating { .. }));
    assert!(!nl.is_linear_quadratic());
}

#[test]
fn builtin_scenarios_satisfy_their_assumptions() {
    for name in scenario_names() {
        let s = build(name, &ScenarioParams { n_modes: 8, ..ScenarioParams::default() }).unwrap();
        let r = validate_assumptions(&s, 300, 2).unwrap();
        assert!(r.passed, "{name}: {:?}", r.violations);
    }
}

#[test]
fn bad_parameters_are_rejected() {
    let bad = ScenarioParams {
        frac_alpha: 0.4,
        ..ScenarioParams::default()
    };
    assert!(matches!(build("lq_benchmark", &bad), Err(Error::Config(_))));
}
