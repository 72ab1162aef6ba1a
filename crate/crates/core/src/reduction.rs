//! State reduction across time blocks.
//!
//! A [`Reduction`] compresses the history at the boundaries `t_0 < … < t_N`
//! of a [`BlockSchedule`] into states `x = θ_{t_i}(h)`, with block dynamics
//! `f` that update the state from the segment of history played inside the
//! block. Nothing is taken on trust: [`check_state_reduction`] verifies that
//! `θ` and `f` commute on every history, and [`derive_reduced_kernels`]
//! verifies that every kernel row only depends on the reduced state and the
//! in-block segment. The block dynamic program then runs on states.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::bellman::{backup, gather, Backup, ControlTable, Domain, SolveOptions, ValueFunction};
use crate::error::{Error, Result};
use crate::history::{mixed_decode, EntryKind, HistoryLayout};
use crate::maps::{BlockDynamics, HistoryMap};
use crate::par;
use crate::problem::{Criterion, ProblemSpec};
use crate::space::{Cost, Distribution};

/// Rows whose total-variation distance is at most this are treated as equal.
pub const ROW_TOLERANCE: f64 = 1e-9;

/// Reduction boundaries `0 = t_0 < t_1 < … < t_N = T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockSchedule {
    boundaries: Vec<usize>,
}

impl BlockSchedule {
    pub fn new(boundaries: Vec<usize>) -> Result<Self> {
        let ok = boundaries.first() == Some(&0)
            && boundaries.len() >= 2
            && boundaries.windows(2).all(|w| w[0] < w[1]);
        if !ok {
            return Err(Error::InstanceMismatch(format!(
                "schedule {boundaries:?} must start at 0 and increase strictly"
            )));
        }
        Ok(BlockSchedule { boundaries })
    }

    /// `{0, 1, …, T}`.
    pub fn unit(horizon: usize) -> Self {
        BlockSchedule {
            boundaries: (0..=horizon).collect(),
        }
    }

    /// `{0, T}`.
    pub fn single(horizon: usize) -> Self {
        BlockSchedule {
            boundaries: vec![0, horizon],
        }
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn horizon(&self) -> usize {
        *self.boundaries.last().unwrap()
    }

    pub fn block_count(&self) -> usize {
        self.boundaries.len() - 1
    }

    /// `(t_i, t_{i+1})`.
    pub fn block(&self, i: usize) -> (usize, usize) {
        (self.boundaries[i], self.boundaries[i + 1])
    }

    /// True when every boundary of `self` is a boundary of `finer`.
    pub fn is_refined_by(&self, finer: &BlockSchedule) -> bool {
        self.horizon() == finer.horizon()
            && self.boundaries.iter().all(|b| finer.boundaries.contains(b))
    }
}

/// Boundary maps `θ_{t_i}`, state counts `|X_{t_i}|` and block dynamics.
#[derive(Debug, Clone)]
pub struct Reduction {
    state_sizes: Vec<usize>,
    theta: Vec<HistoryMap>,
    dynamics: Vec<BlockDynamics>,
}

impl Reduction {
    /// One map and one state count per boundary, one dynamics per block.
    pub fn new(
        state_sizes: Vec<usize>,
        theta: Vec<HistoryMap>,
        dynamics: Vec<BlockDynamics>,
    ) -> Result<Self> {
        if state_sizes.contains(&0) {
            return Err(Error::InstanceMismatch("state spaces need at least one element".into()));
        }
        Ok(Reduction {
            state_sizes,
            theta,
            dynamics,
        })
    }

    /// The identity reduction `θ = index of the history`, `f` = concatenation.
    pub fn canonical(layout: &HistoryLayout, schedule: &BlockSchedule) -> Result<Self> {
        let state_sizes = schedule
            .boundaries()
            .iter()
            .map(|&t| {
                layout.count(t).ok_or(Error::Capacity {
                    what: "history count",
                    stage: Some(t),
                    needed: u128::MAX,
                    limit: usize::MAX as u128,
                })
            })
            .collect::<Result<_>>()?;
        Self::new(
            state_sizes,
            vec![HistoryMap::Identity; schedule.boundaries().len()],
            vec![BlockDynamics::Concatenate; schedule.block_count()],
        )
    }

    /// The same map and dynamics at every stage `0..=T`.
    pub fn uniform(horizon: usize, states: usize, theta: HistoryMap, f: BlockDynamics) -> Result<Self> {
        Self::new(vec![states; horizon + 1], vec![theta; horizon + 1], vec![f; horizon])
    }

    pub fn state_size(&self, i: usize) -> usize {
        self.state_sizes[i]
    }

    pub fn state_sizes(&self) -> &[usize] {
        &self.state_sizes
    }

    pub fn theta(&self, i: usize) -> &HistoryMap {
        &self.theta[i]
    }

    pub fn thetas(&self) -> &[HistoryMap] {
        &self.theta
    }

    pub fn dynamics(&self, i: usize) -> &BlockDynamics {
        &self.dynamics[i]
    }

    pub fn all_dynamics(&self) -> &[BlockDynamics] {
        &self.dynamics
    }

    pub(crate) fn validate_shape(&self, schedule: &BlockSchedule) -> Result<()> {
        let boundaries = schedule.boundaries().len();
        if self.state_sizes.len() != boundaries || self.theta.len() != boundaries {
            return Err(Error::IncompleteReduction {
                block: self.theta.len().min(self.state_sizes.len()).min(boundaries - 1),
            });
        }
        if self.dynamics.len() != schedule.block_count() {
            return Err(Error::IncompleteReduction {
                block: self.dynamics.len().min(schedule.block_count()),
            });
        }
        Ok(())
    }
}

/// Why a reduction is not a compatible state reduction.
#[derive(Debug, Clone, PartialEq)]
pub enum Counterexample {
    /// `θ_t(h_r, seg) != f(θ_r(h_r), seg)`.
    Commutation {
        block: usize,
        history: Vec<usize>,
        segment: Vec<usize>,
        direct: usize,
        via_dynamics: usize,
    },
    /// A map or dynamics produced a state outside the declared space.
    OutOfRange {
        stage: usize,
        history: Vec<usize>,
        state: usize,
        size: usize,
    },
    /// Two histories with the same reduced key but different kernel rows.
    Kernel {
        stage: usize,
        first: Vec<usize>,
        second: Vec<usize>,
        distance: f64,
    },
}

impl fmt::Display for Counterexample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Counterexample::Commutation {
                block,
                history,
                segment,
                direct,
                via_dynamics,
            } => write!(
                f,
                "block {block}: history {history:?} followed by {segment:?} maps to state {direct}, the dynamics give {via_dynamics}"
            ),
            Counterexample::OutOfRange {
                stage,
                history,
                state,
                size,
            } => write!(
                f,
                "stage {stage}: history {history:?} maps to state {state} outside a space of size {size}"
            ),
            Counterexample::Kernel {
                stage,
                first,
                second,
                distance,
            } => write!(
                f,
                "stage {stage}: histories {first:?} and {second:?} share a reduced key but their rows differ by {distance:e} in total variation"
            ),
        }
    }
}

fn enumeration_guard(layout: &HistoryLayout, t: usize, opts: &SolveOptions) -> Result<usize> {
    match layout.count(t) {
        Some(n) if (n as u128) <= opts.enumeration_cap => Ok(n),
        n => Err(Error::Capacity {
            what: "history enumeration",
            stage: Some(t),
            needed: n.map_or(u128::MAX, |n| n as u128),
            limit: opts.enumeration_cap,
        }),
    }
}

fn incompatible(cx: Counterexample) -> Error {
    Error::Incompatible(cx)
}

/// Checks `θ_{t_{i+1}}(h, seg) = f_i(θ_{t_i}(h), seg)` on every history and
/// that every state lies in its declared space. The first failure in
/// (block, lexicographic) order is returned as [`Error::Incompatible`].
pub fn check_state_reduction(
    problem: &ProblemSpec,
    schedule: &BlockSchedule,
    reduction: &Reduction,
    opts: &SolveOptions,
) -> Result<()> {
    let layout = problem.layout();
    if schedule.horizon() != problem.horizon() {
        return Err(Error::InstanceMismatch(format!(
            "schedule ends at {} but the horizon is {}",
            schedule.horizon(),
            problem.horizon()
        )));
    }
    reduction.validate_shape(schedule)?;
    enumeration_guard(layout, 0, opts)?;
    for h in layout.histories(0) {
        let x = reduction.theta(0).apply(layout, h.entries());
        if x >= reduction.state_size(0) {
            return Err(incompatible(Counterexample::OutOfRange {
                stage: 0,
                history: h.into_entries(),
                state: x,
                size: reduction.state_size(0),
            }));
        }
    }
    for i in 0..schedule.block_count() {
        let (r, t) = schedule.block(i);
        enumeration_guard(layout, t, opts)?;
        let cut = layout.stage_len(r);
        for h in layout.histories(t) {
            let e = h.entries();
            let x = reduction.theta(i).apply(layout, &e[..cut]);
            let direct = reduction.theta(i + 1).apply(layout, e);
            let via = reduction.dynamics(i).apply(layout, r, x, &e[cut..]);
            if direct != via {
                return Err(incompatible(Counterexample::Commutation {
                    block: i,
                    history: e[..cut].to_vec(),
                    segment: e[cut..].to_vec(),
                    direct,
                    via_dynamics: via,
                }));
            }
            if direct >= reduction.state_size(i + 1) {
                return Err(incompatible(Counterexample::OutOfRange {
                    stage: t,
                    history: e.to_vec(),
                    state: direct,
                    size: reduction.state_size(i + 1),
                }));
            }
        }
    }
    Ok(())
}

/// `ρ̃_{s-1:s}` for one in-block stage: `rows[x * prefixes + seg]`, where
/// `seg` ranges over segments `h_{t_i+1:s-1}`. States outside the image of
/// `θ_{t_i}` have no row.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedKernel {
    pub stage: usize,
    pub prefixes: usize,
    pub rows: Vec<Option<Distribution>>,
}

impl ReducedKernel {
    pub fn row(&self, x: usize, prefix: usize) -> Option<&Distribution> {
        self.rows.get(x * self.prefixes + prefix)?.as_ref()
    }
}

/// Reduced kernels for every block of a schedule: `blocks[i][s - t_i - 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedKernels {
    pub blocks: Vec<Vec<ReducedKernel>>,
}

impl ReducedKernels {
    /// Whether `x` is reached by `θ_{t_i}`.
    pub fn reached(&self, block: usize, x: usize) -> bool {
        self.blocks[block][0].row(x, 0).is_some()
    }
}

/// Groups histories by `(θ_{t_i}(h_{t_i}), h_{t_i+1:s-1})` and emits the
/// shared kernel row of each group, or the first pair of histories whose
/// rows differ by more than [`ROW_TOLERANCE`].
pub fn derive_reduced_kernels(
    problem: &ProblemSpec,
    schedule: &BlockSchedule,
    reduction: &Reduction,
    opts: &SolveOptions,
) -> Result<ReducedKernels> {
    let layout = problem.layout();
    reduction.validate_shape(schedule)?;
    let mut blocks = Vec::with_capacity(schedule.block_count());
    for i in 0..schedule.block_count() {
        let (r, t) = schedule.block(i);
        let cut = layout.stage_len(r);
        let states = reduction.state_size(i);
        let mut block = Vec::with_capacity(t - r);
        for s in r + 1..=t {
            enumeration_guard(layout, s - 1, opts)?;
            let prefixes = layout.segment_count(r, s - 1).unwrap_or(usize::MAX);
            let slots = states.checked_mul(prefixes).filter(|&n| n <= opts.budget).ok_or(
                Error::Capacity {
                    what: "reduced kernel table",
                    stage: Some(s),
                    needed: states as u128 * prefixes as u128,
                    limit: opts.budget as u128,
                },
            )?;
            let mut rows: Vec<Option<Distribution>> = vec![None; slots];
            let mut witness = vec![usize::MAX; slots];
            let kernel = problem.kernel(s);
            for (hi, h) in layout.histories(s - 1).enumerate() {
                let e = h.entries();
                let x = reduction.theta(i).apply(layout, &e[..cut]);
                if x >= states {
                    return Err(incompatible(Counterexample::OutOfRange {
                        stage: r,
                        history: e[..cut].to_vec(),
                        state: x,
                        size: states,
                    }));
                }
                let key = x * prefixes + layout.segment_index(r, &e[cut..]);
                let row = kernel.row(layout, e)?;
                match &rows[key] {
                    None => {
                        rows[key] = Some(row.clone());
                        witness[key] = hi;
                    }
                    Some(prev) => {
                        let distance = prev.total_variation(row);
                        if distance > ROW_TOLERANCE {
                            return Err(incompatible(Counterexample::Kernel {
                                stage: s,
                                first: layout.decode(s - 1, witness[key]).into_entries(),
                                second: e.to_vec(),
                                distance,
                            }));
                        }
                    }
                }
            }
            block.push(ReducedKernel {
                stage: s,
                prefixes,
                rows,
            });
        }
        blocks.push(block);
    }
    Ok(ReducedKernels { blocks })
}

/// `j̃` on `X_T` read off the criterion: the common cost of the final
/// histories mapped to each state, `+∞` on states nothing maps to.
pub fn reduced_criterion(
    problem: &ProblemSpec,
    theta: &HistoryMap,
    states: usize,
    opts: &SolveOptions,
) -> Result<Vec<Cost>> {
    let layout = problem.layout();
    let horizon = problem.horizon();
    enumeration_guard(layout, horizon, opts)?;
    let mut out: Vec<Option<(Cost, Vec<usize>)>> = vec![None; states];
    for h in layout.histories(horizon) {
        let x = theta.apply(layout, h.entries());
        if x >= states {
            return Err(incompatible(Counterexample::OutOfRange {
                stage: horizon,
                history: h.into_entries(),
                state: x,
                size: states,
            }));
        }
        let j = problem.cost(h.entries())?;
        match &out[x] {
            None => out[x] = Some((j, h.into_entries())),
            Some((prev, first)) if prev.distance(j) > ROW_TOLERANCE => {
                return Err(Error::Factorization {
                    first: first.clone(),
                    second: Some(h.into_entries()),
                });
            }
            Some(_) => {}
        }
    }
    Ok(out
        .into_iter()
        .map(|o| o.map_or(Cost::INFINITY, |(c, _)| c))
        .collect())
}

/// Verifies `j = j̃ ∘ θ_T` on every final history.
pub fn check_factorization(
    problem: &ProblemSpec,
    theta: &HistoryMap,
    reduced: &[Cost],
    opts: &SolveOptions,
) -> Result<()> {
    let layout = problem.layout();
    let horizon = problem.horizon();
    enumeration_guard(layout, horizon, opts)?;
    let mut first: Vec<Option<(Cost, usize)>> = vec![None; reduced.len()];
    for (hi, h) in layout.histories(horizon).enumerate() {
        let x = theta.apply(layout, h.entries());
        let jt = *reduced.get(x).ok_or_else(|| {
            Error::InstanceMismatch(format!("reduced criterion has no state {x}"))
        })?;
        let j = problem.cost(h.entries())?;
        if let Some((prev, pi)) = first[x] {
            if prev.distance(j) > ROW_TOLERANCE {
                return Err(Error::Factorization {
                    first: layout.decode(horizon, pi).into_entries(),
                    second: Some(h.into_entries()),
                });
            }
        } else {
            first[x] = Some((j, hi));
        }
        if jt.distance(j) > ROW_TOLERANCE {
            return Err(Error::Factorization {
                first: h.into_entries(),
                second: None,
            });
        }
    }
    Ok(())
}

/// `B̃_{t_{i+1}:t_i}`: the nested min/expectation over the segments of
/// block `i`, evaluated backwards over in-block depth, for every state of
/// `X_{t_i}`. Unreached states get `+∞`.
pub fn reduced_block_operator(
    problem: &ProblemSpec,
    schedule: &BlockSchedule,
    reduction: &Reduction,
    kernels: &ReducedKernels,
    block: usize,
    phi: &[Cost],
    opts: &SolveOptions,
) -> Result<(Vec<Cost>, Vec<ControlTable>)> {
    let layout = problem.layout();
    let (r, t) = schedule.block(block);
    let (a, b) = (layout.stage_len(r), layout.stage_len(t));
    let radices = &layout.radices()[a..b];
    let kinds = &layout.kinds()[a..b];
    let starts: Vec<usize> = (r..t).map(|s| layout.stage_len(s) - a).collect();
    let states = reduction.state_size(block);
    let segments = layout.segment_count(r, t).unwrap_or(usize::MAX);
    if states.saturating_mul(segments) > opts.budget {
        return Err(Error::Capacity {
            what: "block segment tables",
            stage: Some(r),
            needed: states as u128 * segments as u128,
            limit: opts.budget as u128,
        });
    }
    if phi.len() != reduction.state_size(block + 1) {
        return Err(Error::InstanceMismatch(format!(
            "next value table has {} entries for {} states",
            phi.len(),
            reduction.state_size(block + 1)
        )));
    }
    let ks = &kernels.blocks[block];
    let f = reduction.dynamics(block);
    let backups = par::map(states, opts.parallel, |x| {
        if !kernels.reached(block, x) {
            return Ok(unreached(radices, kinds));
        }
        backup(
            radices,
            kinds,
            &starts,
            |j, p| {
                ks[j].row(x, p).ok_or_else(|| {
                    Error::InstanceMismatch(format!("no reduced row for state {x}, stage {}", ks[j].stage))
                })
            },
            |seg| {
                let y = f.apply(layout, r, x, &mixed_decode(radices, seg));
                phi.get(y).copied().ok_or_else(|| {
                    Error::InstanceMismatch(format!("dynamics left the state space ({y})"))
                })
            },
            true,
        )
    })?;
    Ok(gather(backups, radices))
}

/// Backup of a state nothing maps to: `+∞`, every control 0.
fn unreached(radices: &[usize], kinds: &[EntryKind]) -> Backup {
    let mut argmins = Vec::new();
    let mut width = 1usize;
    for (k, (&r, kind)) in radices.iter().zip(kinds).enumerate() {
        if *kind == EntryKind::Control {
            argmins.push((k, vec![0; width]));
        }
        width *= r;
    }
    Backup {
        value: Cost::INFINITY,
        argmins,
    }
}

/// Output of the block dynamic program.
#[derive(Debug, Clone)]
pub struct ReducedSolution {
    pub schedule: BlockSchedule,
    /// `values[i] = Ṽ_{t_i}` over `X_{t_i}`.
    pub values: Vec<ValueFunction>,
    /// `policies[i]`: control tables of block `i`, keyed by state.
    pub policies: Vec<Vec<ControlTable>>,
    pub kernels: ReducedKernels,
}

impl ReducedSolution {
    /// `Ṽ_{t_i} ∘ θ_{t_i}` tabulated over `H_{t_i}`.
    pub fn lift(&self, problem: &ProblemSpec, reduction: &Reduction, i: usize) -> Vec<Cost> {
        lift(problem.layout(), reduction.theta(i), self.schedule.boundaries()[i], self.values[i].values())
    }
}

/// `φ̃ ∘ θ` over `H_t`.
pub fn lift(layout: &HistoryLayout, theta: &HistoryMap, t: usize, values: &[Cost]) -> Vec<Cost> {
    layout
        .histories(t)
        .map(|h| values[theta.apply(layout, h.entries())])
        .collect()
}

fn wants_factorization(problem: &ProblemSpec, opts: &SolveOptions) -> bool {
    opts.check_factorization.unwrap_or(problem.horizon() <= 8)
}

/// Checks the reduction, derives the reduced kernels and, when asked,
/// that `j = j̃ ∘ θ_T`.
pub fn prepare(
    problem: &ProblemSpec,
    schedule: &BlockSchedule,
    reduction: &Reduction,
    reduced_criterion: &[Cost],
    opts: &SolveOptions,
) -> Result<ReducedKernels> {
    check_state_reduction(problem, schedule, reduction, opts)?;
    let kernels = derive_reduced_kernels(problem, schedule, reduction, opts)?;
    let last = schedule.block_count();
    if reduced_criterion.len() != reduction.state_size(last) {
        return Err(Error::InstanceMismatch(format!(
            "reduced criterion has {} entries for {} final states",
            reduced_criterion.len(),
            reduction.state_size(last)
        )));
    }
    if wants_factorization(problem, opts) && !matches!(problem.criterion(), Criterion::Additive(_)) {
        check_factorization(problem, reduction.theta(last), reduced_criterion, opts)?;
    }
    Ok(kernels)
}

/// `Ṽ_{t_N} = j̃`, `Ṽ_{t_i} = B̃_{t_{i+1}:t_i} Ṽ_{t_{i+1}}`.
pub fn solve_reduced_dp(
    problem: &ProblemSpec,
    schedule: &BlockSchedule,
    reduction: &Reduction,
    reduced_criterion: &[Cost],
    opts: &SolveOptions,
) -> Result<ReducedSolution> {
    let kernels = prepare(problem, schedule, reduction, reduced_criterion, opts)?;
    let n = schedule.block_count();
    let mut values = vec![ValueFunction::reduced(schedule.horizon(), reduced_criterion.to_vec())];
    let mut policies = Vec::with_capacity(n);
    for i in (0..n).rev() {
        let next = values.last().unwrap().values();
        let (v, tables) =
            reduced_block_operator(problem, schedule, reduction, &kernels, i, next, opts)?;
        let argmin = tables.iter().find(|tb| tb.depth == 0).map(|tb| tb.controls.clone());
        values.push(ValueFunction::new(
            schedule.boundaries()[i],
            Domain::ReducedState,
            v,
            argmin,
        ));
        policies.push(tables);
    }
    values.reverse();
    policies.reverse();
    Ok(ReducedSolution {
        schedule: schedule.clone(),
        values,
        policies,
        kernels,
    })
}

/// Classical state-space recursion on a flat layout with a reduction at
/// every stage: `Ṽ_t(x) = min_u Σ_w ρ̃_t(x)(w) Ṽ_{t+1}(f_t(x, u, w))`.
pub fn solve_unit_block_dp(
    problem: &ProblemSpec,
    reduction: &Reduction,
    reduced_criterion: &[Cost],
    opts: &SolveOptions,
) -> Result<ReducedSolution> {
    let layout = problem.layout();
    if !layout.is_flat() {
        return Err(Error::Representation("unit-block recursion needs a flat layout"));
    }
    let horizon = problem.horizon();
    let schedule = BlockSchedule::unit(horizon);
    let kernels = prepare(problem, &schedule, reduction, reduced_criterion, opts)?;
    let mut values = vec![ValueFunction::reduced(horizon, reduced_criterion.to_vec())];
    let mut policies = Vec::with_capacity(horizon);
    for t in (0..horizon).rev() {
        let next = values.last().unwrap().values().to_vec();
        let f = reduction.dynamics(t);
        let kernel = &kernels.blocks[t][0];
        let (nu, nw) = (layout.control_size(t), layout.noise_size(t + 1));
        let mut v = Vec::with_capacity(reduction.state_size(t));
        let mut arg = Vec::with_capacity(reduction.state_size(t));
        for x in 0..reduction.state_size(t) {
            let Some(row) = kernel.row(x, 0) else {
                v.push(Cost::INFINITY);
                arg.push(0);
                continue;
            };
            let mut best = (Cost::INFINITY, 0);
            for u in 0..nu {
                let mut acc = 0.0;
                for w in 0..nw {
                    let p = row.prob(w);
                    if p == 0.0 {
                        continue;
                    }
                    let y = f.apply(layout, t, x, &[u, w]);
                    acc += p * next.get(y).copied().unwrap_or(Cost::INFINITY).get();
                }
                let c = Cost::new(acc).unwrap_or(Cost::INFINITY);
                if u == 0 || c < best.0 {
                    best = (c, u);
                }
            }
            v.push(best.0);
            arg.push(best.1);
        }
        policies.push(vec![ControlTable {
            depth: 0,
            width: 1,
            controls: arg.clone(),
        }]);
        values.push(ValueFunction::new(t, Domain::ReducedState, v, Some(arg)));
    }
    values.reverse();
    policies.reverse();
    Ok(ReducedSolution {
        schedule,
        values,
        policies,
        kernels,
    })
}

/// `V̂_T = K`, `V̂_t(x) = min_u Σ_w ρ̃_t(x)(w) [L_t(x, u, w) + V̂_{t+1}(f_t(x, u, w))]`
/// for an additive criterion (steps of any layout, e.g. head/noise/tail).
pub fn solve_additive_dp(problem: &ProblemSpec, opts: &SolveOptions) -> Result<ReducedSolution> {
    let Criterion::Additive(add) = problem.criterion() else {
        return Err(Error::Representation("additive recursion needs an additive criterion"));
    };
    let layout = problem.layout();
    let horizon = problem.horizon();
    let schedule = BlockSchedule::unit(horizon);
    let reduction = &add.reduction;
    let kernels = prepare(problem, &schedule, reduction, &add.final_cost, opts)?;
    let mut values = vec![ValueFunction::reduced(horizon, add.final_cost.clone())];
    let mut policies = Vec::with_capacity(horizon);
    for t in (0..horizon).rev() {
        let next = values.last().unwrap().values();
        let (a, b) = (layout.stage_len(t), layout.stage_len(t + 1));
        let radices = &layout.radices()[a..b];
        let kinds = &layout.kinds()[a..b];
        let width = layout.step_count(t);
        let f = reduction.dynamics(t);
        let kernel = &kernels.blocks[t][0];
        let costs = &add.stage_costs[t];
        let backups = par::map(reduction.state_size(t), opts.parallel, |x| {
            let Some(row) = kernel.row(x, 0) else {
                return Ok(unreached(radices, kinds));
            };
            backup(
                radices,
                kinds,
                &[0],
                |_, _| Ok(row),
                |step| {
                    let y = f.apply(layout, t, x, &mixed_decode(radices, step));
                    let after = next.get(y).copied().ok_or_else(|| {
                        Error::InstanceMismatch(format!("dynamics left the state space ({y})"))
                    })?;
                    Ok(costs[x * width + step] + after)
                },
                true,
            )
        })?;
        let (v, tables) = gather(backups, radices);
        let argmin = tables.iter().find(|tb| tb.depth == 0).map(|tb| tb.controls.clone());
        values.push(ValueFunction::new(t, Domain::ReducedState, v, argmin));
        policies.push(tables);
    }
    values.reverse();
    policies.reverse();
    Ok(ReducedSolution {
        schedule,
        values,
        policies,
        kernels,
    })
}

/// `Σ_{s<t} L_s(x_s, step_s) + V̂_t(θ_t(h_t))` for a history `h_t`: the
/// value the history DP assigns to `h_t` under an additive criterion.
pub fn additive_lift(problem: &ProblemSpec, entries: &[usize], vhat: &[Cost]) -> Result<Cost> {
    let Criterion::Additive(add) = problem.criterion() else {
        return Err(Error::Representation("additive lifting needs an additive criterion"));
    };
    let layout = problem.layout();
    let t = (0..=layout.horizon())
        .find(|&t| layout.stage_len(t) == entries.len())
        .ok_or_else(|| Error::InstanceMismatch("not a history".into()))?;
    let mut x = add.reduction.theta(0).apply(layout, &entries[..1]);
    let mut total = Cost::ZERO;
    for s in 0..t {
        let step = &entries[layout.stage_len(s)..layout.stage_len(s + 1)];
        total = total + add.stage_costs[s][x * layout.step_count(s) + layout.segment_index(s, step)];
        x = add.reduction.dynamics(s).apply(layout, s, x, step);
    }
    Ok(total + vhat[x])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::StochasticKernel;

    fn markov_instance() -> ProblemSpec {
        let rows = vec![
            Distribution::new(vec![0.7, 0.3]).unwrap(),
            Distribution::new(vec![0.2, 0.8]).unwrap(),
        ];
        let kernels = (1..=3).map(|s| StochasticKernel::markov1(s, rows.clone())).collect();
        ProblemSpec::flat(
            &[2, 2, 2],
            &[2, 2, 2, 2],
            kernels,
            Criterion::FinalState {
                map: HistoryMap::LastUncertainty,
                costs: vec![Cost::of(1.0), Cost::of(4.0)],
            },
        )
        .unwrap()
    }

    #[test]
    fn canonical_reduction_is_ok() {
        let p = markov_instance();
        let s = BlockSchedule::new(vec![0, 1, 3]).unwrap();
        let red = Reduction::canonical(p.layout(), &s).unwrap();
        check_state_reduction(&p, &s, &red, &SolveOptions::default()).unwrap();
    }

    #[test]
    fn constant_theta_breaks_commutation() {
        let p = markov_instance();
        let s = BlockSchedule::new(vec![0, 1]).unwrap();
        let p = ProblemSpec::flat(&[2], &[2, 2], vec![p.kernel(1).clone()], Criterion::FullTable(vec![Cost::ZERO; 8])).unwrap();
        let red = Reduction::new(vec![2, 1], vec![HistoryMap::Identity, HistoryMap::Constant], vec![BlockDynamics::custom(|x, _| x)]).unwrap();
        let err = check_state_reduction(&p, &s, &red, &SolveOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Incompatible(Counterexample::Commutation { .. })), "{err}");
    }

    #[test]
    fn markov_rows_group_under_last_uncertainty() {
        let p = markov_instance();
        let s = BlockSchedule::unit(3);
        let red = Reduction::uniform(3, 2, HistoryMap::LastUncertainty, BlockDynamics::LastUncertainty).unwrap();
        let k = derive_reduced_kernels(&p, &s, &red, &SolveOptions::default()).unwrap();
        assert_eq!(k.blocks[1][0].row(1, 0).unwrap().probs(), &[0.2, 0.8]);
        let bad = Reduction::uniform(3, 1, HistoryMap::Constant, BlockDynamics::Constant).unwrap();
        let err = derive_reduced_kernels(&p, &s, &bad, &SolveOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Incompatible(Counterexample::Kernel { stage: 1, .. })));
    }

    #[test]
    fn factorization_reports_a_pair() {
        let p = markov_instance();
        let err = reduced_criterion(&p, &HistoryMap::Constant, 1, &SolveOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Factorization { second: Some(_), .. }));
        let jt = reduced_criterion(&p, &HistoryMap::LastUncertainty, 3, &SolveOptions::default()).unwrap();
        assert_eq!(jt, vec![Cost::of(1.0), Cost::of(4.0), Cost::INFINITY]);
    }
}
