//! Seeded random instances for property and oracle tests.
//!
//! Every generator takes a `StdRng` so a failing case can be replayed from
//! its seed. Costs are drawn from a small integer grid so that ties, and
//! therefore argmin tie-breaking, actually occur.

pub mod oracle;

use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use timeblocks::dhd::DhdProblem;
use timeblocks::history::HistoryLayout;
use timeblocks::kernels::{Feedback, StochasticKernel};
use timeblocks::maps::{BlockDynamics, HistoryMap};
use timeblocks::noise::{NoiseLaw, NoiseProcessSpec};
use timeblocks::problem::{AdditiveCriterion, Criterion, ProblemSpec};
use timeblocks::reduction::{BlockSchedule, Reduction};
use timeblocks::two_timescale::{TwoScaleClock, TwoScaleProblem};
use timeblocks::{Cost, Distribution};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// A row over `n` points; each point is zeroed with probability `zero_prob`
/// but at least one keeps positive mass.
pub fn distribution(rng: &mut StdRng, n: usize, zero_prob: f64) -> Distribution {
    let mut w: Vec<f64> = (0..n)
        .map(|_| if rng.gen_bool(zero_prob) { 0.0 } else { rng.gen_range(1..=8) as f64 })
        .collect();
    if w.iter().all(|&x| x == 0.0) {
        w[rng.gen_range(0..n)] = 1.0;
    }
    let sum: f64 = w.iter().sum();
    Distribution::new(w.into_iter().map(|x| x / sum).collect()).unwrap()
}

/// Integer cost in `0..=9`, or `+∞` with probability `inf_prob`.
pub fn cost(rng: &mut StdRng, inf_prob: f64) -> Cost {
    if rng.gen_bool(inf_prob) {
        Cost::INFINITY
    } else {
        Cost::of(rng.gen_range(0..10) as f64)
    }
}

pub fn costs(rng: &mut StdRng, n: usize, inf_prob: f64) -> Vec<Cost> {
    (0..n).map(|_| cost(rng, inf_prob)).collect()
}

#[derive(Debug, Clone, Copy)]
pub struct FlatConfig {
    pub horizon: usize,
    pub max_controls: usize,
    pub max_noise: usize,
    pub inf_prob: f64,
    pub zero_prob: f64,
}

impl Default for FlatConfig {
    fn default() -> Self {
        FlatConfig {
            horizon: 2,
            max_controls: 2,
            max_noise: 2,
            inf_prob: 0.1,
            zero_prob: 0.2,
        }
    }
}

pub fn sizes(rng: &mut StdRng, n: usize, max: usize) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(1..=max)).collect()
}

/// Full-table kernels on any layout: stage `s` gets one row per `h_{s-1}`.
pub fn full_table_kernels(rng: &mut StdRng, layout: &HistoryLayout, zero_prob: f64) -> Vec<StochasticKernel> {
    (1..=layout.horizon())
        .map(|s| {
            let rows = (0..layout.count(s - 1).unwrap())
                .map(|_| distribution(rng, layout.noise_size(s), zero_prob))
                .collect();
            StochasticKernel::full_table(s, rows)
        })
        .collect()
}

/// Flat instance with arbitrary history-dependent kernels and a criterion
/// tabulated over final histories.
pub fn flat_instance(rng: &mut StdRng, cfg: FlatConfig) -> ProblemSpec {
    let controls = sizes(rng, cfg.horizon, cfg.max_controls);
    let noises = sizes(rng, cfg.horizon + 1, cfg.max_noise);
    let layout = HistoryLayout::flat(&controls, &noises).unwrap();
    let kernels = full_table_kernels(rng, &layout, cfg.zero_prob);
    let criterion = costs(rng, layout.count(cfg.horizon).unwrap(), cfg.inf_prob);
    ProblemSpec::new(layout, kernels, Criterion::FullTable(criterion)).unwrap()
}

/// A feedback with uniformly random controls on stages `from..=to`.
pub fn feedback(rng: &mut StdRng, layout: &HistoryLayout, from: usize, to: usize) -> Feedback {
    let maps = (from..=to)
        .map(|s| {
            (0..layout.count(s).unwrap())
                .map(|_| rng.gen_range(0..layout.control_size(s)))
                .collect()
        })
        .collect();
    Feedback::new(layout, from, maps).unwrap()
}

/// State tables of a controlled Markov construction:
/// `x_0 = init[w_0]`, `x_{t+1} = step[t][(x·|U_t| + u)·|W_{t+1}| + w]`.
#[derive(Debug, Clone)]
pub struct StateMachine {
    pub states: Vec<usize>,
    pub init: Vec<usize>,
    pub step: Vec<Vec<usize>>,
    pub controls: Vec<usize>,
    pub noises: Vec<usize>,
}

impl StateMachine {
    pub fn random(rng: &mut StdRng, controls: &[usize], noises: &[usize], max_states: usize, white: bool) -> Self {
        let horizon = controls.len();
        let mut states = sizes(rng, horizon + 1, max_states);
        let init = if white {
            states[0] = noises[0];
            (0..noises[0]).collect()
        } else {
            (0..noises[0]).map(|_| rng.gen_range(0..states[0])).collect()
        };
        let step = (0..horizon)
            .map(|t| {
                (0..states[t] * controls[t] * noises[t + 1])
                    .map(|_| rng.gen_range(0..states[t + 1]))
                    .collect()
            })
            .collect();
        StateMachine {
            states,
            init,
            step,
            controls: controls.to_vec(),
            noises: noises.to_vec(),
        }
    }

    pub fn next(&self, t: usize, x: usize, u: usize, w: usize) -> usize {
        self.step[t][(x * self.controls[t] + u) * self.noises[t + 1] + w]
    }

    /// `x_t` of a flat history `(w_0, u_0, w_1, …)`.
    pub fn state(&self, entries: &[usize]) -> usize {
        let mut x = self.init[entries[0]];
        for (t, pair) in entries[1..].chunks(2).enumerate() {
            x = self.next(t, x, pair[0], pair[1]);
        }
        x
    }

    /// Runs `seg = (u_r, w_{r+1}, …)` from `x` at stage `r`.
    pub fn run(&self, r: usize, x: usize, seg: &[usize]) -> usize {
        seg.chunks(2)
            .enumerate()
            .fold(x, |x, (k, pair)| self.next(r + k, x, pair[0], pair[1]))
    }

    /// `θ_t(h) = x_t`, as a history map.
    pub fn theta(self: &Arc<Self>) -> HistoryMap {
        let me = Arc::clone(self);
        HistoryMap::custom(move |h| me.state(h))
    }

    /// The reduction at the boundaries of `schedule`.
    pub fn reduction(self: &Arc<Self>, schedule: &BlockSchedule) -> Reduction {
        let b = schedule.boundaries();
        let dynamics = (0..schedule.block_count())
            .map(|i| {
                let (me, r) = (Arc::clone(self), b[i]);
                BlockDynamics::custom(move |x, seg| me.run(r, x, seg))
            })
            .collect();
        Reduction::new(
            b.iter().map(|&t| self.states[t]).collect(),
            vec![self.theta(); b.len()],
            dynamics,
        )
        .unwrap()
    }
}

/// What the kernel rows of a controlled Markov instance may look at.
#[derive(Debug, Clone)]
pub enum Dependence {
    /// `ρ(h_{s-1})` depends on `x_{s-1}` only.
    State,
    /// Depends on the state at the start of the enclosing block and on the
    /// whole in-block segment, so noise is correlated inside blocks.
    Block(BlockSchedule),
    /// The same row for every history.
    White,
}

#[derive(Debug, Clone)]
pub struct MarkovConfig {
    pub horizon: usize,
    pub max_controls: usize,
    pub max_noise: usize,
    pub max_states: usize,
    pub inf_prob: f64,
    pub zero_prob: f64,
    pub dependence: Dependence,
}

impl MarkovConfig {
    pub fn new(horizon: usize, dependence: Dependence) -> Self {
        MarkovConfig {
            horizon,
            max_controls: 2,
            max_noise: 2,
            max_states: 3,
            inf_prob: 0.1,
            zero_prob: 0.2,
            dependence,
        }
    }
}

/// A flat problem whose kernels and criterion factor through a random
/// state machine, so its reductions are compatible by construction.
#[derive(Debug, Clone)]
pub struct MarkovInstance {
    pub problem: ProblemSpec,
    pub machine: Arc<StateMachine>,
    /// `j̃` over `X_T`.
    pub final_cost: Vec<Cost>,
}

impl MarkovInstance {
    pub fn reduction(&self, schedule: &BlockSchedule) -> Reduction {
        self.machine.reduction(schedule)
    }
}

pub fn controlled_markov(rng: &mut StdRng, cfg: &MarkovConfig) -> MarkovInstance {
    let controls = sizes(rng, cfg.horizon, cfg.max_controls);
    let noises = sizes(rng, cfg.horizon + 1, cfg.max_noise);
    let white = matches!(cfg.dependence, Dependence::White);
    let machine = Arc::new(StateMachine::random(rng, &controls, &noises, cfg.max_states, white));
    let layout = HistoryLayout::flat(&controls, &noises).unwrap();
    let kernels = (1..=cfg.horizon)
        .map(|s| match &cfg.dependence {
            Dependence::White => StochasticKernel::white_noise(s, distribution(rng, noises[s], cfg.zero_prob)),
            Dependence::State => {
                let rows = (0..machine.states[s - 1])
                    .map(|_| distribution(rng, noises[s], cfg.zero_prob))
                    .collect();
                StochasticKernel::via_map(s, machine.theta(), rows)
            }
            Dependence::Block(schedule) => {
                let r = *schedule.boundaries().iter().rev().find(|&&b| b < s).unwrap();
                let segs = layout.segment_count(r, s - 1).unwrap();
                let rows = (0..machine.states[r] * segs)
                    .map(|_| distribution(rng, noises[s], cfg.zero_prob))
                    .collect();
                let (me, l) = (Arc::clone(&machine), layout.clone());
                let start = l.stage_len(r);
                let key = HistoryMap::custom(move |h| {
                    me.state(&h[..start]) * segs + l.segment_index(r, &h[start..])
                });
                StochasticKernel::via_map(s, key, rows)
            }
        })
        .collect();
    let final_cost = costs(rng, machine.states[cfg.horizon], cfg.inf_prob);
    let criterion = Criterion::FinalState {
        map: machine.theta(),
        costs: final_cost.clone(),
    };
    let problem = ProblemSpec::new(layout, kernels, criterion).unwrap();
    MarkovInstance {
        problem,
        machine,
        final_cost,
    }
}

/// The additive criterion `Σ_t L_t(x_t, u_t, w_{t+1}) + K(x_T)` over the
/// instance's state machine, with random stage costs.
pub fn additive_criterion(rng: &mut StdRng, inst: &MarkovInstance, inf_prob: f64, zero_stage_costs: bool) -> Criterion {
    let m = &inst.machine;
    let horizon = m.controls.len();
    let stage_costs = (0..horizon)
        .map(|t| {
            let n = m.states[t] * m.controls[t] * m.noises[t + 1];
            if zero_stage_costs {
                vec![Cost::ZERO; n]
            } else {
                costs(rng, n, inf_prob)
            }
        })
        .collect();
    Criterion::Additive(AdditiveCriterion {
        reduction: m.reduction(&BlockSchedule::unit(horizon)),
        stage_costs,
        final_cost: inst.final_cost.clone(),
    })
}

/// A two-time-scale instance whose intra-day noise is correlated and whose
/// kernels factor through the state at the start of each day.
pub fn two_scale(rng: &mut StdRng, days: usize, minutes: usize) -> (TwoScaleProblem, MarkovInstance) {
    let clock = TwoScaleClock::new(days, minutes);
    let cfg = MarkovConfig::new(clock.horizon(), Dependence::Block(clock.schedule()));
    let inst = controlled_markov(rng, &cfg);
    let tsp = TwoScaleProblem::new(clock, inst.problem.clone()).unwrap();
    (tsp, inst)
}

/// Decision-hazard-decision instance over `periods` periods with
/// history-dependent kernels and a tabulated criterion.
pub fn dhd_instance(rng: &mut StdRng, periods: usize, max_size: usize, inf_prob: f64) -> DhdProblem {
    let initial = rng.gen_range(1..=max_size);
    let head = sizes(rng, periods, max_size);
    let noise = sizes(rng, periods, max_size);
    let tail = sizes(rng, periods, max_size);
    let layout = timeblocks::dhd::dhd_layout(initial, &head, &noise, &tail).unwrap();
    let kernels = full_table_kernels(rng, &layout, 0.2);
    let criterion = costs(rng, layout.count(periods).unwrap(), inf_prob);
    DhdProblem::new(initial, &head, &noise, &tail, kernels, Criterion::FullTable(criterion)).unwrap()
}

/// A joint law over noise paths with some zero-probability paths; not white
/// in general.
pub fn joint_noise(rng: &mut StdRng, horizon: usize, max_noise: usize, zero_prob: f64) -> NoiseProcessSpec {
    let sizes = sizes(rng, horizon + 1, max_noise);
    let n = sizes.iter().product();
    let table = distribution(rng, n, zero_prob).probs().to_vec();
    NoiseProcessSpec::new(sizes, NoiseLaw::JointTable(table)).unwrap()
}

/// Random non-negative values, some infinite.
pub fn value_table(rng: &mut StdRng, n: usize, inf_prob: f64) -> Vec<Cost> {
    (0..n)
        .map(|_| {
            if rng.gen_bool(inf_prob) {
                Cost::INFINITY
            } else {
                Cost::of(rng.gen_range(0.0..10.0))
            }
        })
        .collect()
}

/// Boundaries `0 = t_0 < … < t_N = horizon` with block lengths in `1..=max_len`.
pub fn schedule(rng: &mut StdRng, horizon: usize, max_len: usize) -> BlockSchedule {
    let mut b = vec![0];
    while *b.last().unwrap() < horizon {
        let next = b.last().unwrap() + rng.gen_range(1..=max_len);
        b.push(next.min(horizon));
    }
    BlockSchedule::new(b).unwrap()
}

/// A random refinement: each interior stage of each block is added with
/// probability one half.
pub fn refine(rng: &mut StdRng, coarse: &BlockSchedule) -> BlockSchedule {
    let mut b = Vec::new();
    for w in coarse.boundaries().windows(2) {
        b.push(w[0]);
        b.extend((w[0] + 1..w[1]).filter(|_| rng.gen_bool(0.5)));
    }
    b.push(coarse.horizon());
    BlockSchedule::new(b).unwrap()
}

/// Independent days with arbitrary correlation inside each day's block
/// `w_{(d,1)}, …, w_{(d+1,0)}`.
pub fn day_independent_noise(rng: &mut StdRng, days: usize, minutes: usize, max_noise: usize, zero_prob: f64) -> NoiseProcessSpec {
    let block = minutes + 1;
    let sizes = sizes(rng, (days + 1) * block + 1, max_noise);
    let initial = distribution(rng, sizes[0], zero_prob);
    let tables = (0..=days)
        .map(|d| {
            let n = sizes[d * block + 1..(d + 1) * block + 1].iter().product();
            distribution(rng, n, zero_prob).probs().to_vec()
        })
        .collect();
    NoiseProcessSpec::new(
        sizes,
        NoiseLaw::DayIndependent {
            minutes,
            initial,
            days: tables,
        },
    )
    .unwrap()
}

/// Independent stages.
pub fn white_noise(rng: &mut StdRng, horizon: usize, max_noise: usize, zero_prob: f64) -> NoiseProcessSpec {
    let marginals: Vec<Distribution> = sizes(rng, horizon + 1, max_noise)
        .into_iter()
        .map(|n| distribution(rng, n, zero_prob))
        .collect();
    let sizes: Vec<usize> = marginals.iter().map(Distribution::len).collect();
    NoiseProcessSpec::new(sizes, NoiseLaw::WhiteNoise(marginals)).unwrap()
}

/// A problem driven by `noise` whose criterion factors through a random
/// state machine.
pub fn noise_instance(rng: &mut StdRng, noise: &NoiseProcessSpec, max_controls: usize, max_states: usize, inf_prob: f64) -> MarkovInstance {
    let controls = sizes(rng, noise.horizon(), max_controls);
    let machine = Arc::new(StateMachine::random(rng, &controls, noise.sizes(), max_states, false));
    let final_cost = costs(rng, machine.states[noise.horizon()], inf_prob);
    let criterion = Criterion::FinalState {
        map: machine.theta(),
        costs: final_cost.clone(),
    };
    let (problem, _) = timeblocks::noise::problem_from_noise(&controls, noise, criterion).unwrap();
    MarkovInstance {
        problem,
        machine,
        final_cost,
    }
}
