use mltet::quadrature::{
    builtin_generator_set, builtin_stiffness_rule, check_positivity, exactness_defect, find_rule,
    rule_distance, FinderOptions,
};
use mltet::ElementId;

#[test]
fn builtin_rules_are_exact_and_positive() {
    for id in ElementId::ALL {
        let rule = builtin_stiffness_rule(id);
        let gens = builtin_generator_set(id);
        let d = exactness_defect(&rule, &gens);
        println!("{id}: defect {d:.3e}");
        assert!(d < 1e-14, "{id}: {d:e}");
        assert!(check_positivity(&rule));
        assert!(rule.all_inside(0.0));
    }
}

#[test]
fn finder_recovers_degree_two_rule() {
    let id = ElementId::P2n15;
    let target = builtin_stiffness_rule(id);
    let out = find_rule(
        &target.configuration(),
        &builtin_generator_set(id),
        &FinderOptions { max_trials: 2000, ..Default::default() },
        None,
    )
    .unwrap();
    println!("{:?}", out.stats);
    let found = out.found.expect("a rule");
    let dist = rule_distance(&found.rule, &target);
    println!("trial {} distance {dist:e}", found.trial);
    assert!(dist < 1e-12);
}
