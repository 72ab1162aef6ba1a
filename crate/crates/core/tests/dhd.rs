#![allow(clippy::needless_range_loop)]

use timeblocks::bellman::{apply_bellman, solve_history_dp};
use timeblocks::dhd::dam::{build_dam_instance, stock_reduction, DamInstance, DamParams, DamVariant};
use timeblocks::dhd::{
    dhd_bellman_apply, embed_dhd, embed_history, solve_dhd, solve_dhd_history, strip_spurious, DhdProblem,
};
use timeblocks::history::HistoryLayout;
use timeblocks::problem::Criterion;
use timeblocks::reduction::{additive_lift, lift, solve_additive_dp};
use timeblocks::{ProblemSpec, SolveOptions, ValueFunction};
use timeblocks_testkit::{dhd_instance, oracle, rng, value_table};

#[test]
fn embedding_reproduces_the_dhd_recursion() {
    let opts = SolveOptions::default();
    for seed in 0..30 {
        let mut g = rng(seed);
        let periods = 1 + seed as usize % 3;
        let dhd = dhd_instance(&mut g, periods, 2, 0.15);
        let direct = solve_dhd_history(&dhd, &opts).unwrap();
        let tsp = embed_dhd(&dhd).unwrap();
        let emb = solve_history_dp(tsp.problem(), &opts).unwrap();
        let (hl, el) = (dhd.layout(), tsp.problem().layout());
        for s in 0..=periods {
            for h in el.histories(2 * s) {
                let head = strip_spurious(h.entries());
                assert_eq!(embed_history(&head), h.entries());
                let gap = oracle::gap(emb[2 * s].value(el.index_of(&h)), direct.values[s].value(hl.index(&head)));
                assert!(gap <= 1e-9, "seed {seed} period {s}");
            }
        }
    }
}

#[test]
fn singleton_tails_collapse_to_the_plain_operator() {
    let opts = SolveOptions::default();
    for seed in 0..20 {
        let mut g = rng(700 + seed);
        let dhd = loop {
            let d = dhd_instance(&mut g, 2, 2, 0.1);
            if (1..=2).all(|s| d.tail_size(s) == 1) {
                break d;
            }
        };
        let heads: Vec<usize> = (0..2).map(|s| dhd.head_size(s)).collect();
        let mut noises = vec![dhd.initial_size()];
        noises.extend((1..=2).map(|s| dhd.noise_size(s)));
        let plain = ProblemSpec::new(
            HistoryLayout::flat(&heads, &noises).unwrap(),
            dhd.spec().kernels().to_vec(),
            dhd.spec().criterion().clone(),
        )
        .unwrap();
        for s in 0..2 {
            let phi = ValueFunction::history(s + 1, value_table(&mut g, plain.layout().count(s + 1).unwrap(), 0.2));
            let a = dhd_bellman_apply(&dhd, s, &phi, &opts).unwrap();
            let b = apply_bellman(&plain, s, &phi, &opts).unwrap();
            assert_eq!(a.value.values(), b.values());
            assert_eq!(a.value.argmin(), b.argmin());
        }
    }
}

fn dam(final_value: Vec<f64>, spill_cost: f64) -> DamParams {
    DamParams {
        capacity: 2.0,
        turbine: vec![0.0, 1.0, 2.0],
        inflows: vec![vec![(0.0, 0.4), (1.0, 0.6)], vec![(0.0, 0.5), (1.0, 0.5)], vec![(0.0, 0.7), (1.0, 0.3)]],
        revenue: vec![vec![0.0, 3.0, 5.0], vec![0.0, 2.0, 3.5], vec![0.0, 4.0, 7.0]],
        final_value,
        spill_cost,
    }
}

#[test]
fn dam_stock_lifts_with_accumulated_revenue() {
    let opts = SolveOptions::default();
    let params = dam(vec![0.0, 1.5, 2.5], 0.0);
    for variant in [DamVariant::MinDynamics, DamVariant::SpillControl] {
        let inst = build_dam_instance(&params, variant).unwrap();
        let p = inst.spec();
        let v = solve_history_dp(&p.tabulated().unwrap(), &opts).unwrap();
        let reduced = solve_additive_dp(p, &opts).unwrap();
        for s in 0..=3 {
            for h in p.layout().histories(s) {
                let lifted = additive_lift(p, h.entries(), reduced.values[s].values()).unwrap();
                assert!(oracle::gap(lifted, v[s].value(p.layout().index_of(&h))) <= 1e-9, "{variant:?} s {s}");
            }
        }
    }
}

#[test]
fn dam_stock_lifts_exactly_for_a_final_value_only() {
    let opts = SolveOptions::default();
    let mut params = dam(vec![0.0, 2.0, 3.0], 0.0);
    params.revenue.clear();
    let red = stock_reduction(&params).unwrap();
    let DamInstance::SpillControl(dhd) = build_dam_instance(&params, DamVariant::SpillControl).unwrap() else {
        unreachable!()
    };
    let Criterion::Additive(add) = dhd.spec().criterion() else { unreachable!() };
    let reduced = solve_dhd(&dhd, &red, &add.final_cost, &opts).unwrap();
    let direct = solve_dhd_history(&DhdProblem::from_spec(dhd.spec().tabulated().unwrap()).unwrap(), &opts).unwrap();
    for s in 0..=3 {
        let lifted = lift(dhd.layout(), red.theta(s), s, reduced.values[s].values());
        assert!(oracle::max_gap(&lifted, direct.values[s].values()) <= 1e-9, "period {s}");
    }
}

#[test]
fn dam_variants_agree_without_spill_cost() {
    let opts = SolveOptions::default();
    for final_value in [vec![0.0, 0.0, 0.0], vec![0.0, 1.0, 2.0], vec![0.0, 3.0, 3.5], vec![1.0, 5.0, 9.0]] {
        let p = dam(final_value, 0.0);
        let a = build_dam_instance(&p, DamVariant::MinDynamics).unwrap().optimal_values(&opts).unwrap();
        let b = build_dam_instance(&p, DamVariant::SpillControl).unwrap().optimal_values(&opts).unwrap();
        assert!(oracle::max_gap(&a, &b) <= 1e-9, "{a:?} vs {b:?}");
    }
}

#[test]
fn spill_cost_never_helps() {
    let opts = SolveOptions::default();
    let free = build_dam_instance(&dam(vec![0.0, 1.0, 2.0], 0.0), DamVariant::SpillControl).unwrap();
    let paid = build_dam_instance(&dam(vec![0.0, 1.0, 2.0], 0.5), DamVariant::SpillControl).unwrap();
    let (a, b) = (free.optimal_values(&opts).unwrap(), paid.optimal_values(&opts).unwrap());
    assert!(a.iter().zip(&b).all(|(x, y)| x <= y));
}
