#![allow(clippy::needless_range_loop)]

use timeblocks::bellman::{compose_bellman, solve_history_dp};
use timeblocks::history::HistoryLayout;
use timeblocks::kernels::StochasticKernel;
use timeblocks::maps::{BlockDynamics, HistoryMap};
use timeblocks::problem::Criterion;
use timeblocks::reduction::{
    derive_reduced_kernels, lift, reduced_block_operator, reduced_criterion, solve_additive_dp,
    solve_reduced_dp, solve_unit_block_dp, BlockSchedule, Counterexample, Reduction,
};
use timeblocks::{Cost, Distribution, Error, ProblemSpec, SolveOptions, ValueFunction};
use timeblocks_testkit::{
    additive_criterion, controlled_markov, oracle, refine, rng, schedule, value_table, Dependence,
    MarkovConfig,
};

#[test]
fn reduced_values_lift_to_history_values() {
    let opts = SolveOptions::default();
    for seed in 0..30 {
        let mut g = rng(seed);
        let horizon = 2 + seed as usize % 5;
        let sched = schedule(&mut g, horizon, 3);
        let inst = controlled_markov(&mut g, &MarkovConfig::new(horizon, Dependence::Block(sched.clone())));
        let red = inst.reduction(&sched);
        let sol = solve_reduced_dp(&inst.problem, &sched, &red, &inst.final_cost, &opts).unwrap();
        let v = solve_history_dp(&inst.problem, &opts).unwrap();
        for (i, &t) in sched.boundaries().iter().enumerate() {
            let lifted = lift(inst.problem.layout(), red.theta(i), t, sol.values[i].values());
            assert!(oracle::max_gap(&lifted, v[t].values()) <= 1e-9, "seed {seed} boundary {t}");
        }
    }
}

#[test]
fn block_operator_intertwines_with_the_flat_operators() {
    let opts = SolveOptions::default();
    for seed in 0..30 {
        let mut g = rng(1000 + seed);
        let horizon = 2 + seed as usize % 4;
        let sched = schedule(&mut g, horizon, 3);
        let inst = controlled_markov(&mut g, &MarkovConfig::new(horizon, Dependence::Block(sched.clone())));
        let p = &inst.problem;
        let red = inst.reduction(&sched);
        let kernels = derive_reduced_kernels(p, &sched, &red, &opts).unwrap();
        for block in 0..sched.block_count() {
            let (r, t) = sched.block(block);
            let phi = value_table(&mut g, red.state_size(block + 1), 0.15);
            let (reduced, _) = reduced_block_operator(p, &sched, &red, &kernels, block, &phi, &opts).unwrap();
            let lifted = lift(p.layout(), red.theta(block + 1), t, &phi);
            let flat = compose_bellman(p, r, t, &ValueFunction::history(t, lifted), &opts).unwrap();
            let pulled = lift(p.layout(), red.theta(block), r, &reduced);
            assert!(oracle::max_gap(&pulled, flat.values()) <= 1e-9, "seed {seed} block {block}");
        }
    }
}

#[test]
fn refining_the_schedule_keeps_boundary_values() {
    let opts = SolveOptions::default();
    for seed in 0..30 {
        let mut g = rng(2000 + seed);
        let horizon = 2 + seed as usize % 5;
        let coarse = schedule(&mut g, horizon, 3);
        let fine = refine(&mut g, &coarse);
        assert!(coarse.is_refined_by(&fine));
        let inst = controlled_markov(&mut g, &MarkovConfig::new(horizon, Dependence::State));
        let a = solve_reduced_dp(&inst.problem, &coarse, &inst.reduction(&coarse), &inst.final_cost, &opts).unwrap();
        let b = solve_reduced_dp(&inst.problem, &fine, &inst.reduction(&fine), &inst.final_cost, &opts).unwrap();
        for (i, t) in coarse.boundaries().iter().enumerate() {
            let j = fine.boundaries().iter().position(|s| s == t).unwrap();
            assert!(oracle::max_gap(a.values[i].values(), b.values[j].values()) <= 1e-9, "seed {seed}");
        }
    }
}

#[test]
fn unit_block_additive_and_general_solvers_agree() {
    let opts = SolveOptions::default();
    for seed in 0..30 {
        let mut g = rng(3000 + seed);
        let horizon = 1 + seed as usize % 4;
        let inst = controlled_markov(&mut g, &MarkovConfig::new(horizon, Dependence::State));
        let unit = BlockSchedule::unit(horizon);
        let red = inst.reduction(&unit);
        let a = solve_unit_block_dp(&inst.problem, &red, &inst.final_cost, &opts).unwrap();
        let b = solve_reduced_dp(&inst.problem, &unit, &red, &inst.final_cost, &opts).unwrap();
        let zero = inst.problem.with_criterion(additive_criterion(&mut g, &inst, 0.0, true)).unwrap();
        let c = solve_additive_dp(&zero, &opts).unwrap();
        for t in 0..=horizon {
            assert!(oracle::max_gap(a.values[t].values(), b.values[t].values()) <= 1e-9);
            assert!(oracle::max_gap(a.values[t].values(), c.values[t].values()) <= 1e-9);
        }
    }
}

#[test]
fn additive_values_lift_with_the_accumulated_cost() {
    let opts = SolveOptions::default();
    for seed in 0..20 {
        let mut g = rng(4000 + seed);
        let horizon = 1 + seed as usize % 3;
        let inst = controlled_markov(&mut g, &MarkovConfig::new(horizon, Dependence::State));
        let p = inst.problem.with_criterion(additive_criterion(&mut g, &inst, 0.1, false)).unwrap();
        let sol = solve_additive_dp(&p, &opts).unwrap();
        let v = solve_history_dp(&p, &opts).unwrap();
        for t in 0..=horizon {
            for h in p.layout().histories(t) {
                let lifted = timeblocks::reduction::additive_lift(&p, h.entries(), sol.values[t].values()).unwrap();
                let direct = v[t].value(p.layout().index_of(&h));
                assert!(oracle::gap(lifted, direct) <= 1e-9, "seed {seed} t {t}");
            }
        }
    }
}

fn w0_dependent() -> ProblemSpec {
    // The law of w_2 depends on w_0, which θ_1 = last uncertainty forgets.
    let layout = HistoryLayout::flat(&[1, 1], &[2, 2, 2]).unwrap();
    let u = Distribution::uniform(2).unwrap();
    let k2 = (0..4)
        .map(|i| Distribution::dirac(2, i / 2).unwrap())
        .collect();
    let kernels = vec![StochasticKernel::white_noise(1, u), StochasticKernel::full_table(2, k2)];
    let n = layout.count(2).unwrap();
    ProblemSpec::new(layout, kernels, Criterion::FullTable(vec![Cost::ZERO; n])).unwrap()
}

#[test]
fn history_dependent_kernel_is_rejected_with_a_witness() {
    let p = w0_dependent();
    let red = Reduction::uniform(2, 2, HistoryMap::LastUncertainty, BlockDynamics::LastUncertainty).unwrap();
    let err = derive_reduced_kernels(&p, &BlockSchedule::unit(2), &red, &SolveOptions::default()).unwrap_err();
    let Error::Incompatible(Counterexample::Kernel { stage, distance, .. }) = err else {
        panic!("unexpected {err:?}");
    };
    assert_eq!(stage, 2);
    assert_eq!(distance, 1.0);
    // The whole history is always a valid state.
    let sched = BlockSchedule::unit(2);
    let canon = Reduction::canonical(p.layout(), &sched).unwrap();
    let j = reduced_criterion(&p, canon.theta(2), canon.state_size(2), &SolveOptions::default()).unwrap();
    assert!(solve_reduced_dp(&p, &sched, &canon, &j, &SolveOptions::default()).is_ok());
}

#[test]
fn non_commuting_dynamics_are_rejected() {
    let p = w0_dependent();
    let red = Reduction::uniform(2, 2, HistoryMap::LastUncertainty, BlockDynamics::Constant).unwrap();
    let err = solve_reduced_dp(&p, &BlockSchedule::unit(2), &red, &[Cost::ZERO; 2], &SolveOptions::default())
        .unwrap_err();
    assert!(matches!(err, Error::Incompatible(Counterexample::Commutation { .. })), "{err:?}");
}

#[test]
fn single_block_matches_the_history_value() {
    let opts = SolveOptions::default();
    let mut g = rng(77);
    let inst = controlled_markov(&mut g, &MarkovConfig::new(3, Dependence::State));
    let p = &inst.problem;
    let sched = BlockSchedule::single(3);
    let red = Reduction::new(
        vec![p.layout().noise_size(0), inst.machine.states[3]],
        vec![HistoryMap::Identity, inst.machine.theta()],
        vec![{
            let m = inst.machine.clone();
            BlockDynamics::custom(move |x, seg| m.run(0, m.init[x], seg))
        }],
    )
    .unwrap();
    let sol = solve_reduced_dp(p, &sched, &red, &inst.final_cost, &opts).unwrap();
    let v = solve_history_dp(p, &opts).unwrap();
    assert!(oracle::max_gap(sol.values[0].values(), v[0].values()) <= 1e-9);
}
