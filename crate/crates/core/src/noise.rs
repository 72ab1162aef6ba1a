//! Problems driven by an exogenous noise process `W_0, …, W_T`.
//!
//! Kernels are the conditional laws of the next noise given the past
//! noises. [`adapted_value_oracle`] searches over control processes adapted
//! to the noise (controls as functions of the noises seen so far), which on
//! these problems has the same value as the search over history feedbacks.
//! The white-noise solvers integrate directly against the marginals.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::bellman::{Domain, SolveOptions, ValueFunction};
use crate::dhd::DhdProblem;
use crate::error::{Error, Result};
use crate::history::{mixed_index, product, HistoryLayout, Odometer};
use crate::kernels::{KernelRepr, StochasticKernel};
use crate::maps::HistoryMap;
use crate::problem::{Criterion, ProblemSpec};
use crate::reduction::{check_factorization, check_state_reduction, BlockSchedule, Reduction};
use crate::space::{Cost, Distribution, NORMALIZATION_TOLERANCE};
use crate::two_timescale::{TwoScaleClock, TwoScaleProblem, TwoScaleSolution, TreePolicy};

/// Joint tables with more paths than this are refused.
pub const DEFAULT_PATH_CAP: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseLaw {
    /// Probability of every path `w_{0:T}`, in lexicographic order.
    JointTable(Vec<f64>),
    /// Independent stages with these marginals (stage 0 included).
    WhiteNoise(Vec<Distribution>),
    /// Independent days: the law of `w_0` and, per day `d`, a joint table
    /// over the block `w_{(d,1)}, …, w_{(d,M)}, w_{(d+1,0)}`.
    DayIndependent {
        minutes: usize,
        initial: Distribution,
        days: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseProcessSpec {
    sizes: Vec<usize>,
    law: NoiseLaw,
}

fn check_table(probs: &[f64], len: usize, what: &str) -> Result<()> {
    if probs.len() != len {
        return Err(Error::InstanceMismatch(format!(
            "{what} needs {len} probabilities, got {}",
            probs.len()
        )));
    }
    let sum: f64 = probs.iter().sum();
    if probs.iter().any(|&p| p.is_nan() || p < 0.0) || (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::Normalization {
            sum,
            tolerance: NORMALIZATION_TOLERANCE,
        });
    }
    Ok(())
}

impl NoiseProcessSpec {
    /// `sizes[t] = |W_t|` for `t = 0..=T`.
    pub fn new(sizes: Vec<usize>, law: NoiseLaw) -> Result<Self> {
        Self::with_path_cap(sizes, law, DEFAULT_PATH_CAP)
    }

    pub fn with_path_cap(sizes: Vec<usize>, law: NoiseLaw, cap: usize) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::InstanceMismatch("noise spaces need at least one element".into()));
        }
        match &law {
            NoiseLaw::JointTable(probs) => {
                let paths = product(&sizes).filter(|&n| n <= cap).ok_or(Error::Capacity {
                    what: "joint noise table",
                    stage: None,
                    needed: sizes.iter().map(|&s| s as u128).product(),
                    limit: cap as u128,
                })?;
                check_table(probs, paths, "joint noise table")?;
            }
            NoiseLaw::WhiteNoise(marginals) => {
                if marginals.len() != sizes.len()
                    || marginals.iter().zip(&sizes).any(|(d, &s)| d.len() != s)
                {
                    return Err(Error::InstanceMismatch(
                        "one marginal per stage, sized like its space".into(),
                    ));
                }
            }
            NoiseLaw::DayIndependent {
                minutes,
                initial,
                days,
            } => {
                let block = minutes + 1;
                if days.is_empty() || sizes.len() != days.len() * block + 1 || initial.len() != sizes[0] {
                    return Err(Error::InstanceMismatch(format!(
                        "{} days of {block} noises need {} noise spaces",
                        days.len(),
                        days.len() * block + 1
                    )));
                }
                for (d, table) in days.iter().enumerate() {
                    let len = product(&sizes[d * block + 1..(d + 1) * block + 1]).unwrap_or(usize::MAX);
                    if len > cap {
                        return Err(Error::Capacity {
                            what: "day noise table",
                            stage: Some(d * block + 1),
                            needed: len as u128,
                            limit: cap as u128,
                        });
                    }
                    check_table(table, len, &format!("day {d} noise table"))?;
                }
            }
        }
        Ok(NoiseProcessSpec { sizes, law })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn law(&self) -> &NoiseLaw {
        &self.law
    }

    pub fn horizon(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn is_white(&self) -> bool {
        matches!(self.law, NoiseLaw::WhiteNoise(_))
    }

    /// `P(W_{0:k} = noise)` for a prefix of any length `k + 1`.
    pub fn prefix_mass(&self, noise: &[usize]) -> f64 {
        match &self.law {
            NoiseLaw::WhiteNoise(m) => noise.iter().zip(m).map(|(&w, d)| d.prob(w)).product(),
            NoiseLaw::JointTable(probs) => table_prefix_mass(probs, &self.sizes, noise),
            NoiseLaw::DayIndependent {
                minutes,
                initial,
                days,
            } => {
                let block = minutes + 1;
                let mut mass = match noise.first() {
                    Some(&w) => initial.prob(w),
                    None => return 1.0,
                };
                for (d, table) in days.iter().enumerate() {
                    let lo = d * block + 1;
                    if noise.len() <= lo {
                        break;
                    }
                    let hi = noise.len().min(lo + block);
                    mass *= table_prefix_mass(table, &self.sizes[lo..lo + block], &noise[lo..hi]);
                }
                mass
            }
        }
    }
}

/// A conditional row taken uniform because its conditioning path has
/// probability zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZeroMassRow {
    pub stage: usize,
    /// The conditioning noises (`w_0, …, w_{s-1}`, or the current day's
    /// block for day-independent laws).
    pub noise: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct NoiseKernels {
    pub kernels: Vec<StochasticKernel>,
    pub zero_mass: Vec<ZeroMassRow>,
}

/// Mass of a prefix of a mixed-radix table over `sizes`.
fn table_prefix_mass(table: &[f64], sizes: &[usize], prefix: &[usize]) -> f64 {
    let rest = product(&sizes[prefix.len()..]).unwrap_or(0);
    let start = mixed_index(sizes, prefix) * rest;
    table[start..start + rest].iter().sum()
}

/// Rows `P(W_s | window)` for every conditioning window over `sizes[..len-1]`
/// (the last entry is `|W_s|`), by division of prefix masses.
fn conditional_rows(
    s: usize,
    sizes: &[usize],
    mass: impl Fn(&[usize]) -> f64,
    zero_mass: &mut Vec<ZeroMassRow>,
) -> Result<Vec<Distribution>> {
    let (&width, window_sizes) = sizes.split_last().expect("stage space");
    let mut rows = Vec::new();
    for mut window in Odometer::new(window_sizes) {
        let base = mass(&window);
        if base <= 0.0 {
            zero_mass.push(ZeroMassRow { stage: s, noise: window });
            rows.push(Distribution::uniform(width)?);
            continue;
        }
        let probs = (0..width)
            .map(|w| {
                window.push(w);
                let m = mass(&window);
                window.pop();
                m / base
            })
            .collect();
        rows.push(Distribution::new(probs)?);
    }
    Ok(rows)
}

/// Kernels whose rows depend on the history through its noises only.
///
/// Day-independent laws condition on the current day's block alone, so the
/// flagged conditioning paths of those are block-local.
pub fn kernels_from_noise_process(spec: &NoiseProcessSpec) -> Result<NoiseKernels> {
    let mut zero_mass = Vec::new();
    let mut kernels = Vec::with_capacity(spec.horizon());
    for s in 1..=spec.horizon() {
        let kernel = match &spec.law {
            NoiseLaw::WhiteNoise(m) => StochasticKernel::white_noise(s, m[s].clone()),
            NoiseLaw::JointTable(_) => StochasticKernel::via_map(
                s,
                HistoryMap::NoiseWindow { from: 0 },
                conditional_rows(s, &spec.sizes[..=s], |w| spec.prefix_mass(w), &mut zero_mass)?,
            ),
            NoiseLaw::DayIndependent { minutes, days, .. } => {
                let block = minutes + 1;
                let d = (s - 1) / block;
                let start = d * block + 1;
                let day_sizes = &spec.sizes[start..start + block];
                let rows = conditional_rows(
                    s,
                    &spec.sizes[start..=s],
                    |w| table_prefix_mass(&days[d], day_sizes, w),
                    &mut zero_mass,
                )?;
                StochasticKernel::via_map(s, HistoryMap::NoiseWindow { from: start }, rows)
            }
        };
        kernels.push(kernel);
    }
    Ok(NoiseKernels { kernels, zero_mass })
}

/// A flat problem with the kernels of a noise process.
pub fn problem_from_noise(
    controls: &[usize],
    spec: &NoiseProcessSpec,
    criterion: Criterion,
) -> Result<(ProblemSpec, Vec<ZeroMassRow>)> {
    let NoiseKernels { kernels, zero_mass } = kernels_from_noise_process(spec)?;
    let problem = ProblemSpec::flat(controls, spec.sizes(), kernels, criterion)?;
    Ok((problem, zero_mass))
}

/// What the controls of [`adapted_value_oracle`] may depend on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Visibility {
    /// `u_s = λ_s(w_{t+1:s})`.
    PastNoise,
    /// `u_s = λ_s(w_{t+1:s}, u_{t:s-1})`.
    PastNoiseAndControls,
    /// `u_s = λ_s(w_{t+1:T})`: sees the future.
    Clairvoyant,
}

/// `min_λ E[j | h_t]` over control processes `u_s = λ_s(·)` for `s = t..T`,
/// by enumerating every `λ`; path probabilities come from the kernel rows.
pub fn adapted_value_oracle(
    problem: &ProblemSpec,
    h_t: &[usize],
    visibility: Visibility,
    opts: &SolveOptions,
) -> Result<Cost> {
    let layout = problem.layout();
    if !layout.is_flat() || h_t.len().is_multiple_of(2) || h_t.len() > layout.stage_len(layout.horizon()) {
        return Err(Error::InstanceMismatch("adapted oracle needs a flat history".into()));
    }
    let t = (h_t.len() - 1) / 2;
    let horizon = layout.horizon();
    let noise_sizes: Vec<usize> = (t + 1..=horizon).map(|s| layout.noise_size(s)).collect();
    let control_sizes: Vec<usize> = (t..horizon).map(|s| layout.control_size(s)).collect();

    // Argument count of λ_s, then one digit per argument value.
    let arity: Vec<usize> = (t..horizon)
        .map(|s| {
            let k = s - t;
            match visibility {
                Visibility::PastNoise => noise_sizes[..k].iter().product(),
                Visibility::PastNoiseAndControls => {
                    noise_sizes[..k].iter().product::<usize>() * control_sizes[..k].iter().product::<usize>()
                }
                Visibility::Clairvoyant => noise_sizes.iter().product(),
            }
        })
        .collect();
    let mut needed: u128 = 1;
    let mut digits = Vec::new();
    let mut offsets = Vec::new();
    for (k, &n) in arity.iter().enumerate() {
        offsets.push(digits.len());
        for _ in 0..n {
            digits.push(control_sizes[k]);
            needed = needed.saturating_mul(control_sizes[k] as u128);
        }
    }
    if needed > opts.enumeration_cap {
        return Err(Error::Capacity {
            what: "adapted control enumeration",
            stage: Some(t),
            needed,
            limit: opts.enumeration_cap,
        });
    }

    // Noise paths with their conditional probabilities given h_t, in
    // lexicographic order. Kernel rows do not look at controls, so the
    // path law is computed once with all controls at 0.
    let mut paths = Vec::new();
    for path in Odometer::new(&noise_sizes) {
        let mut h = h_t.to_vec();
        let mut p = 1.0;
        for (k, &w) in path.iter().enumerate() {
            p *= problem.kernel(t + k + 1).row(layout, &h)?.prob(w);
            if p == 0.0 {
                break;
            }
            h.push(0);
            h.push(w);
        }
        if p > 0.0 {
            paths.push((path, p));
        }
    }

    let mut best = Cost::INFINITY;
    let mut h = Vec::with_capacity(layout.stage_len(horizon));
    for lambda in Odometer::new(&digits) {
        let mut total = 0.0;
        let mut infinite = false;
        for (path, p) in &paths {
            h.clear();
            h.extend_from_slice(h_t);
            for k in 0..control_sizes.len() {
                let arg = match visibility {
                    Visibility::PastNoise => mixed_index(&noise_sizes[..k], &path[..k]),
                    Visibility::PastNoiseAndControls => {
                        let us: Vec<usize> = (0..k).map(|j| h[h_t.len() + 2 * j]).collect();
                        mixed_index(&noise_sizes[..k], &path[..k]) * control_sizes[..k].iter().product::<usize>()
                            + mixed_index(&control_sizes[..k], &us)
                    }
                    Visibility::Clairvoyant => mixed_index(&noise_sizes, path),
                };
                h.push(lambda[offsets[k] + arg]);
                h.push(path[k]);
            }
            let j = problem.cost(&h)?;
            if j.is_infinite() {
                infinite = true;
                break;
            }
            total += p * j.get();
        }
        let value = if infinite { Cost::INFINITY } else { Cost::new(total.max(0.0))? };
        best = best.min(value);
    }
    Ok(best)
}

/// What the white-noise recursions minimize.
#[derive(Debug, Clone, Copy)]
pub enum CostMode<'a> {
    /// `K(x_T)` only.
    FinalCost(&'a [Cost]),
    /// The problem's additive criterion, whose reduction must be the one given.
    Additive,
}

fn white_marginals(problem: &ProblemSpec) -> Result<Vec<&Distribution>> {
    problem
        .kernels()
        .iter()
        .map(|k| match k.repr() {
            KernelRepr::WhiteNoise(d) => Ok(d),
            _ => Err(Error::Representation("white-noise recursion needs white-noise kernels")),
        })
        .collect()
}

/// States reachable from `θ_0(H_0)` through the dynamics, stage by stage.
fn reachable(layout: &HistoryLayout, reduction: &Reduction) -> Vec<Vec<bool>> {
    let mut reached = vec![vec![false; reduction.state_size(0)]];
    for w0 in 0..layout.noise_size(0) {
        let x = reduction.theta(0).apply(layout, &[w0]);
        reached[0][x] = true;
    }
    for t in 0..layout.horizon() {
        let mut next = vec![false; reduction.state_size(t + 1)];
        for x in (0..reached[t].len()).filter(|&x| reached[t][x]) {
            for step in Odometer::new(layout.step_radices(t)) {
                let y = reduction.dynamics(t).apply(layout, t, x, &step);
                if let Some(slot) = next.get_mut(y) {
                    *slot = true;
                }
            }
        }
        reached.push(next);
    }
    reached
}

struct Setup<'a> {
    marginals: Vec<&'a Distribution>,
    reached: Vec<Vec<bool>>,
    stage_costs: Option<&'a [Vec<Cost>]>,
    terminal: Vec<Cost>,
}

fn setup<'a>(
    problem: &'a ProblemSpec,
    reduction: &Reduction,
    mode: CostMode<'_>,
    opts: &SolveOptions,
) -> Result<Setup<'a>> {
    let layout = problem.layout();
    let marginals = white_marginals(problem)?;
    let schedule = BlockSchedule::unit(problem.horizon());
    check_state_reduction(problem, &schedule, reduction, opts)?;
    let (stage_costs, terminal) = match mode {
        CostMode::FinalCost(k) => {
            if k.len() != reduction.state_size(problem.horizon()) {
                return Err(Error::InstanceMismatch("final cost sized like X_T".into()));
            }
            if opts.check_factorization.unwrap_or(problem.horizon() <= 8)
                && !matches!(problem.criterion(), Criterion::Additive(_))
            {
                check_factorization(problem, reduction.theta(problem.horizon()), k, opts)?;
            }
            (None, k.to_vec())
        }
        CostMode::Additive => {
            let Criterion::Additive(add) = problem.criterion() else {
                return Err(Error::Representation("additive mode needs an additive criterion"));
            };
            if add.reduction.state_sizes() != reduction.state_sizes() {
                return Err(Error::InstanceMismatch(
                    "the reduction differs from the criterion's".into(),
                ));
            }
            (Some(add.stage_costs.as_slice()), add.final_cost.clone())
        }
    };
    Ok(Setup {
        marginals,
        reached: reachable(layout, reduction),
        stage_costs,
        terminal,
    })
}

/// `Ṽ_t(x) = min_u Σ_w p_{t+1}(w) [L_t(x, u, w) + Ṽ_{t+1}(f_t(x, u, w))]` on a
/// flat layout with white-noise kernels (`L = 0` in final-cost mode).
pub fn solve_white_noise_dp(
    problem: &ProblemSpec,
    reduction: &Reduction,
    mode: CostMode<'_>,
    opts: &SolveOptions,
) -> Result<Vec<ValueFunction>> {
    let layout = problem.layout();
    if !layout.is_flat() {
        return Err(Error::Representation("flat layout expected"));
    }
    let su = setup(problem, reduction, mode, opts)?;
    let mut values = vec![ValueFunction::reduced(problem.horizon(), su.terminal.clone())];
    for t in (0..problem.horizon()).rev() {
        let next = values.last().unwrap().values().to_vec();
        let f = reduction.dynamics(t);
        let p = su.marginals[t];
        let (nu, nw) = (layout.control_size(t), layout.noise_size(t + 1));
        let mut v = Vec::new();
        let mut arg = Vec::new();
        for x in 0..reduction.state_size(t) {
            if !su.reached[t][x] {
                v.push(Cost::INFINITY);
                arg.push(0);
                continue;
            }
            let mut best = (Cost::INFINITY, 0);
            for u in 0..nu {
                let mut acc = Cost::ZERO;
                let mut sum = 0.0;
                for w in 0..nw {
                    if p.prob(w) == 0.0 {
                        continue;
                    }
                    let l = su.stage_costs.map_or(Cost::ZERO, |c| c[t][(x * nu + u) * nw + w]);
                    let c = l + next[f.apply(layout, t, x, &[u, w])];
                    if c.is_infinite() {
                        acc = Cost::INFINITY;
                        break;
                    }
                    sum += p.prob(w) * c.get();
                }
                if !acc.is_infinite() {
                    acc = Cost::new(sum)?;
                }
                if u == 0 || acc < best.0 {
                    best = (acc, u);
                }
            }
            v.push(best.0);
            arg.push(best.1);
        }
        values.push(ValueFunction::new(t, Domain::ReducedState, v, Some(arg)));
    }
    values.reverse();
    Ok(values)
}

/// `Ṽ_s(x) = min_{u♯} Σ_w p_{s+1}(w) min_{u♭} [L + Ṽ_{s+1}(f_s(x, u♯, w, u♭))]`
/// for a decision-hazard-decision problem with white-noise kernels.
pub fn solve_white_noise_dhd(
    problem: &DhdProblem,
    reduction: &Reduction,
    mode: CostMode<'_>,
    opts: &SolveOptions,
) -> Result<Vec<ValueFunction>> {
    let spec = problem.spec();
    let layout = spec.layout();
    let su = setup(spec, reduction, mode, opts)?;
    let mut values = vec![ValueFunction::reduced(spec.horizon(), su.terminal.clone())];
    for s in (0..spec.horizon()).rev() {
        let next = values.last().unwrap().values().to_vec();
        let f = reduction.dynamics(s);
        let p = su.marginals[s];
        let (nh, nw, nt) = (problem.head_size(s), problem.noise_size(s + 1), problem.tail_size(s + 1));
        let mut v = Vec::new();
        let mut arg = Vec::new();
        for x in 0..reduction.state_size(s) {
            if !su.reached[s][x] {
                v.push(Cost::INFINITY);
                arg.push(0);
                continue;
            }
            let mut best = (Cost::INFINITY, 0);
            for uh in 0..nh {
                let mut sum = 0.0;
                let mut infinite = false;
                for w in 0..nw {
                    if p.prob(w) == 0.0 {
                        continue;
                    }
                    let inner = (0..nt)
                        .map(|ut| {
                            let l = su
                                .stage_costs
                                .map_or(Cost::ZERO, |c| c[s][((x * nh + uh) * nw + w) * nt + ut]);
                            l + next[f.apply(layout, s, x, &[uh, w, ut])]
                        })
                        .min()
                        .unwrap_or(Cost::INFINITY);
                    if inner.is_infinite() {
                        infinite = true;
                        break;
                    }
                    sum += p.prob(w) * inner.get();
                }
                let c = if infinite { Cost::INFINITY } else { Cost::new(sum)? };
                if uh == 0 || c < best.0 {
                    best = (c, uh);
                }
            }
            v.push(best.0);
            arg.push(best.1);
        }
        values.push(ValueFunction::new(s, Domain::ReducedState, v, Some(arg)));
    }
    values.reverse();
    Ok(values)
}

/// Per-day joint tables of a noise process whose days are independent;
/// `Err(Independence { day })` names the first day that is not.
pub fn day_tables(spec: &NoiseProcessSpec, clock: TwoScaleClock) -> Result<Vec<Vec<f64>>> {
    let block = clock.minutes() + 1;
    if spec.horizon() != clock.horizon() {
        return Err(Error::InstanceMismatch("noise horizon differs from the clock".into()));
    }
    if let NoiseLaw::DayIndependent { days, minutes, .. } = &spec.law {
        if *minutes != clock.minutes() {
            return Err(Error::InstanceMismatch("noise days differ from the clock".into()));
        }
        return Ok(days.clone());
    }
    let mut tables = Vec::with_capacity(clock.days() + 1);
    for d in 0..=clock.days() {
        let lo = d * block + 1;
        let past_sizes = &spec.sizes[..lo];
        let day_sizes = &spec.sizes[lo..lo + block];
        let mut day = vec![0.0; product(day_sizes).unwrap_or(0)];
        for past in Odometer::new(past_sizes) {
            for (i, w) in Odometer::new(day_sizes).enumerate() {
                let mut full = past.clone();
                full.extend_from_slice(&w);
                day[i] += spec.prefix_mass(&full);
            }
        }
        for past in Odometer::new(past_sizes) {
            let base = spec.prefix_mass(&past);
            for (i, w) in Odometer::new(day_sizes).enumerate() {
                let mut full = past.clone();
                full.extend_from_slice(&w);
                if (spec.prefix_mass(&full) - base * day[i]).abs() > NORMALIZATION_TOLERANCE {
                    return Err(Error::Independence { day: d });
                }
            }
        }
        tables.push(day);
    }
    Ok(tables)
}

/// Slow-scale recursion for a noise process with independent days:
/// `Ṽ_d(x) = min over day-`d` controls adapted to the day's noise of
/// E[Ṽ_{d+1}(f_d(x, segment))]`, with the day's law read from its joint
/// table rather than from kernels.
pub fn solve_white_noise_2ts(
    problem: &TwoScaleProblem,
    noise: &NoiseProcessSpec,
    reduction: &Reduction,
    reduced_criterion: &[Cost],
    opts: &SolveOptions,
) -> Result<TwoScaleSolution> {
    let clock = problem.clock();
    let spec = problem.problem();
    let layout = spec.layout();
    if noise.sizes() != (0..=spec.horizon()).map(|t| layout.noise_size(t)).collect::<Vec<_>>() {
        return Err(Error::InstanceMismatch("noise spaces differ from the problem's".into()));
    }
    let tables = day_tables(noise, clock)?;
    let schedule = clock.schedule();
    check_state_reduction(spec, &schedule, reduction, opts)?;
    if opts.check_factorization.unwrap_or(spec.horizon() <= 8) {
        check_factorization(spec, reduction.theta(clock.days() + 1), reduced_criterion, opts)?;
    }
    // Reached states, forward through every day segment.
    let mut reached = vec![vec![false; reduction.state_size(0)]];
    for w0 in 0..layout.noise_size(0) {
        reached[0][reduction.theta(0).apply(layout, &[w0])] = true;
    }
    for d in 0..=clock.days() {
        let (r, t) = schedule.block(d);
        let mut next = vec![false; reduction.state_size(d + 1)];
        for x in (0..reached[d].len()).filter(|&x| reached[d][x]) {
            for seg in Odometer::new(&layout.radices()[layout.stage_len(r)..layout.stage_len(t)]) {
                if let Some(slot) = next.get_mut(reduction.dynamics(d).apply(layout, r, x, &seg)) {
                    *slot = true;
                }
            }
        }
        reached.push(next);
    }

    let mut values = vec![ValueFunction::reduced(clock.horizon(), reduced_criterion.to_vec())];
    let mut policies = Vec::new();
    for d in (0..=clock.days()).rev() {
        let next = values.last().unwrap().values().to_vec();
        let (r, _) = schedule.block(d);
        let day = DayProblem {
            layout,
            r,
            minutes: clock.minutes(),
            sizes: &noise.sizes()[r + 1..r + clock.minutes() + 2],
            table: &tables[d],
            f: reduction,
            d,
            next: &next,
        };
        let mut v = Vec::new();
        let mut pol = Vec::new();
        for (x, &live) in reached[d].iter().enumerate() {
            if !live {
                v.push(Cost::INFINITY);
                pol.push(TreePolicy::default());
                continue;
            }
            let mut policy = TreePolicy::default();
            let mut seg = Vec::new();
            let mut noise_seen = Vec::new();
            v.push(day.value(x, &mut seg, &mut noise_seen, 1.0, &mut policy)?);
            pol.push(policy);
        }
        let argmin = pol.iter().map(|p| p.control(&[]).unwrap_or(0)).collect();
        values.push(ValueFunction::new(r, Domain::ReducedState, v, Some(argmin)));
        policies.push(pol);
    }
    values.reverse();
    policies.reverse();
    let kernels = crate::reduction::ReducedKernels { blocks: Vec::new() };
    Ok(TwoScaleSolution {
        values,
        policies,
        kernels,
    })
}

struct DayProblem<'a> {
    layout: &'a HistoryLayout,
    r: usize,
    minutes: usize,
    sizes: &'a [usize],
    table: &'a [f64],
    f: &'a Reduction,
    d: usize,
    next: &'a [Cost],
}

impl DayProblem<'_> {
    fn mass(&self, seen: &[usize]) -> f64 {
        table_prefix_mass(self.table, self.sizes, seen)
    }

    /// Conditional value after the partial segment `seg` whose noises
    /// `seen` have probability `mass > 0`.
    fn value(
        &self,
        x: usize,
        seg: &mut Vec<usize>,
        seen: &mut Vec<usize>,
        mass: f64,
        policy: &mut TreePolicy,
    ) -> Result<Cost> {
        if seen.len() == self.minutes + 1 {
            let y = self.f.dynamics(self.d).apply(self.layout, self.r, x, seg);
            return self.next.get(y).copied().ok_or_else(|| {
                Error::InstanceMismatch(format!("dynamics left the state space ({y})"))
            });
        }
        let s = self.r + seen.len();
        let mut best = (Cost::INFINITY, 0);
        for u in 0..self.layout.control_size(s) {
            seg.push(u);
            let mut sum = 0.0;
            let mut infinite = false;
            for w in 0..self.sizes[seen.len()] {
                seen.push(w);
                let m = self.mass(seen);
                if m > 0.0 {
                    seg.push(w);
                    let c = self.value(x, seg, seen, m, policy)?;
                    seg.pop();
                    if c.is_infinite() {
                        infinite = true;
                    } else {
                        sum += m / mass * c.get();
                    }
                }
                seen.pop();
            }
            seg.pop();
            let c = if infinite { Cost::INFINITY } else { Cost::new(sum.max(0.0))? };
            if u == 0 || c < best.0 {
                best = (c, u);
            }
        }
        policy.decisions.push((seg.clone(), best.1));
        Ok(best.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfectly_correlated_pair() {
        let spec = NoiseProcessSpec::new(vec![2, 2], NoiseLaw::JointTable(vec![0.4, 0.0, 0.0, 0.6])).unwrap();
        let k = kernels_from_noise_process(&spec).unwrap();
        let layout = HistoryLayout::flat(&[1], &[2, 2]).unwrap();
        assert_eq!(k.kernels[0].row(&layout, &[0]).unwrap().probs(), &[1.0, 0.0]);
        assert_eq!(k.kernels[0].row(&layout, &[1]).unwrap().probs(), &[0.0, 1.0]);
        assert!(k.zero_mass.is_empty());
    }

    #[test]
    fn impossible_path_gets_uniform_row_and_flag() {
        let spec = NoiseProcessSpec::new(vec![2, 2], NoiseLaw::JointTable(vec![0.5, 0.5, 0.0, 0.0])).unwrap();
        let k = kernels_from_noise_process(&spec).unwrap();
        let layout = HistoryLayout::flat(&[1], &[2, 2]).unwrap();
        assert_eq!(k.kernels[0].row(&layout, &[1]).unwrap().probs(), &[0.5, 0.5]);
        assert_eq!(k.zero_mass, vec![ZeroMassRow { stage: 1, noise: vec![1] }]);
    }

    #[test]
    fn joint_table_must_normalize() {
        let err = NoiseProcessSpec::new(vec![2], NoiseLaw::JointTable(vec![0.5, 0.4])).unwrap_err();
        assert!(matches!(err, Error::Normalization { .. }));
    }

    #[test]
    fn dependent_days_are_detected() {
        // w_0 uniform, w_1 = w_0: day 0 block is correlated with w_0.
        let spec = NoiseProcessSpec::new(vec![2, 2], NoiseLaw::JointTable(vec![0.5, 0.0, 0.0, 0.5])).unwrap();
        assert_eq!(day_tables(&spec, TwoScaleClock::new(0, 0)), Err(Error::Independence { day: 0 }));
    }
}
