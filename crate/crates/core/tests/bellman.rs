use timeblocks::bellman::{
    apply_bellman, argmin_feedback, brute_force_value, evaluate_feedback, solve_history_dp,
    solve_history_dp_with_policies,
};
use timeblocks::problem::Criterion;
use timeblocks::{Cost, Error, SolveOptions, ValueFunction};
use timeblocks_testkit::{flat_instance, oracle, rng, value_table, FlatConfig};

fn cfg(horizon: usize) -> FlatConfig {
    FlatConfig {
        horizon,
        inf_prob: 0.15,
        ..FlatConfig::default()
    }
}

#[test]
fn history_dp_matches_exhaustive_feedback_search() {
    let opts = SolveOptions::default();
    for seed in 0..40 {
        let mut g = rng(seed);
        let p = flat_instance(&mut g, cfg(1 + seed as usize % 3));
        let v = solve_history_dp(&p, &opts).unwrap();
        for (t, vt) in v.iter().enumerate() {
            for h in p.layout().histories(t) {
                let b = brute_force_value(&p, &h, &opts).unwrap();
                let gap = oracle::gap(vt.value(p.layout().index_of(&h)), b);
                assert!(gap <= 1e-9, "seed {seed} t {t} h {:?}: {gap}", h.entries());
            }
        }
    }
}

#[test]
fn one_step_matches_the_written_out_operator() {
    let opts = SolveOptions::default();
    for seed in 0..30 {
        let mut g = rng(100 + seed);
        let p = flat_instance(&mut g, cfg(3));
        let l = p.layout();
        for t in 0..3 {
            let phi = value_table(&mut g, l.count(t + 1).unwrap(), 0.2);
            let ours = apply_bellman(&p, t, &ValueFunction::history(t + 1, phi.clone()), &opts).unwrap();
            let naive = oracle::naive_bellman(l, p.kernels(), t, &phi);
            assert!(oracle::max_gap(ours.values(), &naive) <= 1e-12);
        }
    }
}

#[test]
fn bellman_operator_is_monotone() {
    let opts = SolveOptions::default();
    for seed in 0..60 {
        let mut g = rng(200 + seed);
        let p = flat_instance(&mut g, cfg(2));
        let l = p.layout();
        for t in 0..2 {
            let phi = value_table(&mut g, l.count(t + 1).unwrap(), 0.1);
            let bump = value_table(&mut g, phi.len(), 0.1);
            let psi: Vec<Cost> = phi.iter().zip(&bump).map(|(&a, &b)| a + b).collect();
            let a = apply_bellman(&p, t, &ValueFunction::history(t + 1, phi), &opts).unwrap();
            let b = apply_bellman(&p, t, &ValueFunction::history(t + 1, psi), &opts).unwrap();
            assert!(a.values().iter().zip(b.values()).all(|(x, y)| x <= y), "seed {seed}");
        }
    }
}

#[test]
fn constant_criterion_is_a_fixed_point_and_shifts_carry_through() {
    let opts = SolveOptions::default();
    for seed in 0..30 {
        let mut g = rng(300 + seed);
        let p = flat_instance(&mut g, FlatConfig { inf_prob: 0.0, ..cfg(3) });
        let n = p.layout().count(3).unwrap();
        let flat = p.with_criterion(Criterion::FullTable(vec![Cost::of(4.5); n])).unwrap();
        for vt in solve_history_dp(&flat, &opts).unwrap() {
            assert!(vt.values().iter().all(|&v| v == Cost::of(4.5)));
        }

        let base = solve_history_dp(&p, &opts).unwrap();
        let Criterion::FullTable(j) = p.criterion() else { unreachable!() };
        let shifted = p
            .with_criterion(Criterion::FullTable(j.iter().map(|&c| c + Cost::of(2.25)).collect()))
            .unwrap();
        for (a, b) in base.iter().zip(solve_history_dp(&shifted, &opts).unwrap()) {
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((x.get() + 2.25 - y.get()).abs() <= 1e-9);
            }
        }
    }
}

#[test]
fn greedy_policy_attains_the_value() {
    let opts = SolveOptions::default();
    for seed in 0..40 {
        let mut g = rng(400 + seed);
        let p = flat_instance(&mut g, cfg(3));
        let v = solve_history_dp(&p, &opts).unwrap();
        let gamma = argmin_feedback(&p, &v).unwrap();
        for h in p.layout().histories(0) {
            let achieved = evaluate_feedback(&p, &h, &gamma).unwrap();
            assert!(oracle::gap(achieved, v[0].value(h.entries()[0])) <= 1e-9, "seed {seed}");
        }
    }
}

#[test]
fn policies_cover_every_stage() {
    let mut g = rng(9);
    let p = flat_instance(&mut g, cfg(3));
    let sol = solve_history_dp_with_policies(&p, &SolveOptions::default()).unwrap();
    assert_eq!(sol.values.len(), 4);
    assert_eq!(sol.policies.len(), 3);
    for (t, tables) in sol.policies.iter().enumerate() {
        assert_eq!(tables[0].controls.len(), p.layout().count(t).unwrap());
    }
}

#[test]
fn budget_overflow_is_an_error_naming_the_stage() {
    let mut g = rng(1);
    let p = flat_instance(&mut g, FlatConfig { max_controls: 3, max_noise: 3, ..cfg(3) });
    let opts = SolveOptions {
        budget: 4,
        ..SolveOptions::default()
    };
    assert!(matches!(
        solve_history_dp(&p, &opts),
        Err(Error::Capacity { stage: Some(_), .. })
    ));
}
