use proptest::prelude::*;
use timeblocks::bellman::{compose_bellman, solve_history_dp};
use timeblocks::reduction::{derive_reduced_kernels, lift, solve_unit_block_dp};
use timeblocks::two_timescale::{intra_block_solve, solve_two_timescale, TwoScaleClock};
use timeblocks::{Error, SolveOptions, ValueFunction};
use timeblocks_testkit::{oracle, rng, two_scale, value_table};

proptest! {
    #[test]
    fn lex_index_and_pair_are_inverse(days in 0usize..6, minutes in 0usize..6) {
        let c = TwoScaleClock::new(days, minutes);
        for t in 0..=c.horizon() {
            let (d, m) = c.lex_pair(t).unwrap();
            prop_assert_eq!(c.lex_index(d, m).unwrap(), t);
        }
        for d in 0..=days {
            for m in 0..=minutes {
                prop_assert_eq!(c.lex_pair(c.lex_index(d, m).unwrap()).unwrap(), (d, m));
            }
        }
        prop_assert_eq!(c.lex_index(days + 1, 0).unwrap(), c.horizon());
        prop_assert!(c.lex_index(days + 1, 1).is_err());
        prop_assert!(c.lex_index(0, minutes + 1).is_err());
    }
}

#[test]
fn day_boundaries_match_the_history_dp() {
    let opts = SolveOptions::default();
    for seed in 0..30 {
        let mut g = rng(seed);
        let (days, minutes) = (seed as usize % 3, (seed as usize / 3) % 3);
        let (tsp, inst) = two_scale(&mut g, days, minutes);
        let red = inst.reduction(&tsp.clock().schedule());
        let sol = solve_two_timescale(&tsp, &red, &inst.final_cost, &opts).unwrap();
        let v = solve_history_dp(tsp.problem(), &opts).unwrap();
        for d in 0..=days + 1 {
            let t = tsp.clock().lex_index(d, 0).unwrap();
            let lifted = lift(tsp.problem().layout(), red.theta(d), t, sol.values[d].values());
            assert!(oracle::max_gap(&lifted, v[t].values()) <= 1e-9, "seed {seed} day {d}");
        }
    }
}

#[test]
fn one_day_of_flat_operators_is_the_slow_operator() {
    let opts = SolveOptions::default();
    for seed in 0..20 {
        let mut g = rng(500 + seed);
        let (tsp, inst) = two_scale(&mut g, 1, 1 + seed as usize % 2);
        let clock = tsp.clock();
        let p = tsp.problem();
        let red = inst.reduction(&clock.schedule());
        let kernels = derive_reduced_kernels(p, &clock.schedule(), &red, &opts).unwrap();
        for d in 0..=clock.days() {
            let (r, t) = (clock.lex_index(d, 0).unwrap(), clock.lex_index(d + 1, 0).unwrap());
            let next = value_table(&mut g, red.state_size(d + 1), 0.15);
            let flat = compose_bellman(p, r, t, &ValueFunction::history(t, lift(p.layout(), red.theta(d + 1), t, &next)), &opts)
                .unwrap();
            let slow: Vec<_> = (0..red.state_size(d))
                .map(|x| intra_block_solve(&tsp, &red, &kernels, d, x, &next, &opts).unwrap().0)
                .collect();
            for h in p.layout().histories(r) {
                let x = red.theta(d).apply(p.layout(), h.entries());
                let gap = oracle::gap(slow[x], flat.value(p.layout().index_of(&h)));
                assert!(gap <= 1e-9, "seed {seed} day {d}");
            }
        }
    }
}

#[test]
fn one_minute_days_are_unit_blocks() {
    let opts = SolveOptions::default();
    for seed in 0..10 {
        let mut g = rng(900 + seed);
        let (tsp, inst) = two_scale(&mut g, 2, 0);
        let red = inst.reduction(&tsp.clock().schedule());
        let a = solve_two_timescale(&tsp, &red, &inst.final_cost, &opts).unwrap();
        let b = solve_unit_block_dp(tsp.problem(), &red, &inst.final_cost, &opts).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!(oracle::max_gap(x.values(), y.values()) <= 1e-9);
        }
    }
}

#[test]
fn day_budget_is_enforced() {
    let mut g = rng(3);
    let (tsp, inst) = two_scale(&mut g, 0, 2);
    let red = inst.reduction(&tsp.clock().schedule());
    let opts = SolveOptions {
        budget: 2,
        ..SolveOptions::default()
    };
    assert!(matches!(
        solve_two_timescale(&tsp, &red, &inst.final_cost, &opts),
        Err(Error::Capacity { .. })
    ));
}
