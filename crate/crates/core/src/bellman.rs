//! Bellman operators over history spaces, the history dynamic program, and
//! exhaustive search over history feedbacks.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::history::{EntryKind, History, HistoryLayout};
use crate::kernels::{feedback_law, Feedback};
use crate::par;
use crate::problem::ProblemSpec;
use crate::space::{expect_with, Cost, Distribution};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    History,
    ReducedState,
}

/// A value function `V_t` over `H_t` (or over reduced states `X_t`), with
/// the minimizing first control of each element when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    stage: usize,
    domain: Domain,
    values: Vec<Cost>,
    argmin: Option<Vec<usize>>,
}

impl ValueFunction {
    pub fn new(stage: usize, domain: Domain, values: Vec<Cost>, argmin: Option<Vec<usize>>) -> Self {
        ValueFunction {
            stage,
            domain,
            values,
            argmin,
        }
    }

    pub fn history(stage: usize, values: Vec<Cost>) -> Self {
        Self::new(stage, Domain::History, values, None)
    }

    pub fn reduced(stage: usize, values: Vec<Cost>) -> Self {
        Self::new(stage, Domain::ReducedState, values, None)
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn values(&self) -> &[Cost] {
        &self.values
    }

    pub fn value(&self, i: usize) -> Cost {
        self.values[i]
    }

    pub fn argmin(&self) -> Option<&[usize]> {
        self.argmin.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest `|a - b|` over both tables, `∞ - ∞` counting as 0.
    pub fn max_distance(&self, other: &ValueFunction) -> f64 {
        if self.values.len() != other.values.len() {
            return f64::INFINITY;
        }
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.distance(*b))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Largest total number of value-table entries a solver may allocate.
    pub budget: usize,
    /// Largest number of candidates an exhaustive search may visit.
    pub enumeration_cap: u128,
    /// Use the rayon pool (needs the `parallel` feature).
    pub parallel: bool,
    /// Check that the criterion factors through the final reduction map;
    /// `None` checks whenever the horizon is at most 8.
    pub check_factorization: Option<bool>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            budget: 1_000_000,
            enumeration_cap: 10_000_000,
            parallel: false,
            check_factorization: None,
        }
    }
}

/// Minimizing controls for one control entry of a step or block.
///
/// `controls[key * width + prefix]` is the choice after the partial segment
/// `prefix` (lexicographic position among partial segments of that depth).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlTable {
    pub depth: usize,
    pub width: usize,
    pub controls: Vec<usize>,
}

pub(crate) struct Backup {
    pub value: Cost,
    pub argmins: Vec<(usize, Vec<usize>)>,
}

/// Backward pass over the entries of one block for a single starting key:
/// controls are minimized (smallest index wins ties), uncertainties are
/// integrated against `row(step, prefix)` where `prefix` is the position of
/// the block entries before that step, and leaves cost `terminal(segment)`.
pub(crate) fn backup<'a>(
    radices: &[usize],
    kinds: &[EntryKind],
    step_starts: &[usize],
    row: impl Fn(usize, usize) -> Result<&'a Distribution>,
    terminal: impl Fn(usize) -> Result<Cost>,
    record: bool,
) -> Result<Backup> {
    let len = radices.len();
    let mut counts = vec![1usize; len + 1];
    for k in 0..len {
        counts[k + 1] = counts[k] * radices[k];
    }
    let mut next: Vec<Cost> = (0..counts[len]).map(terminal).collect::<Result<_>>()?;
    let mut argmins = Vec::new();
    let mut step = step_starts.len();
    for k in (0..len).rev() {
        while step > 0 && step_starts[step - 1] > k {
            step -= 1;
        }
        let j = step - 1;
        let r = radices[k];
        let cur = match kinds[k] {
            EntryKind::Control => {
                let mut cur = Vec::with_capacity(counts[k]);
                let mut arg = Vec::with_capacity(if record { counts[k] } else { 0 });
                for p in 0..counts[k] {
                    let children = &next[p * r..(p + 1) * r];
                    let mut best = 0;
                    for c in 1..r {
                        if children[c] < children[best] {
                            best = c;
                        }
                    }
                    cur.push(children[best]);
                    if record {
                        arg.push(best);
                    }
                }
                if record {
                    argmins.push((k, arg));
                }
                cur
            }
            EntryKind::Uncertainty => {
                let div = counts[k] / counts[step_starts[j]];
                let mut cur = Vec::with_capacity(counts[k]);
                for p in 0..counts[k] {
                    let d = row(j, p / div)?;
                    if d.len() != r {
                        return Err(Error::InstanceMismatch(format!(
                            "row of length {} for a space of size {r}",
                            d.len()
                        )));
                    }
                    cur.push(expect_with(d, |w| next[p * r + w]));
                }
                cur
            }
        };
        next = cur;
    }
    argmins.reverse();
    Ok(Backup {
        value: next[0],
        argmins,
    })
}

/// Collects per-key backups into value and control tables.
pub(crate) fn gather(
    backups: Vec<Backup>,
    radices: &[usize],
) -> (Vec<Cost>, Vec<ControlTable>) {
    let mut values = Vec::with_capacity(backups.len());
    let mut tables: Vec<ControlTable> = Vec::new();
    for (key, b) in backups.into_iter().enumerate() {
        values.push(b.value);
        if key == 0 {
            tables = b
                .argmins
                .iter()
                .map(|(depth, _)| ControlTable {
                    depth: *depth,
                    width: radices[..*depth].iter().product(),
                    controls: Vec::new(),
                })
                .collect();
        }
        for (table, (_, arg)) in tables.iter_mut().zip(b.argmins) {
            table.controls.extend(arg);
        }
    }
    (values, tables)
}

fn check_budget(layout: &HistoryLayout, t: usize, budget: usize) -> Result<usize> {
    match layout.count(t) {
        Some(n) if n <= budget => Ok(n),
        n => Err(Error::Capacity {
            what: "history value table",
            stage: Some(t),
            needed: n.map_or(u128::MAX, |n| n as u128),
            limit: budget as u128,
        }),
    }
}

/// One Bellman step over `H_t`, returning values and the control tables of
/// every control entry of the step.
pub(crate) fn bellman_step(
    problem: &ProblemSpec,
    t: usize,
    next: &[Cost],
    opts: &SolveOptions,
) -> Result<(Vec<Cost>, Vec<ControlTable>)> {
    let layout = problem.layout();
    let n = check_budget(layout, t, opts.budget)?;
    let width = layout.step_count(t);
    if next.len() != n * width {
        return Err(Error::InstanceMismatch(format!(
            "value table of stage {} has {} entries, expected {}",
            t + 1,
            next.len(),
            n * width
        )));
    }
    let (a, b) = (layout.stage_len(t), layout.stage_len(t + 1));
    let radices = &layout.radices()[a..b];
    let kinds = &layout.kinds()[a..b];
    let kernel = problem.kernel(t + 1);
    let backups = par::map(n, opts.parallel, |i| {
        let h = layout.decode(t, i);
        let d = kernel.row(layout, h.entries())?;
        backup(radices, kinds, &[0], |_, _| Ok(d), |s| Ok(next[i * width + s]), true)
    })?;
    Ok(gather(backups, radices))
}

/// `B_{t+1:t}`: `V(h_t) = min_u Σ_w ρ(h_t)(w) φ(h_t, u, w)`.
///
/// On layouts whose steps hold several controls (decision-hazard-decision)
/// each control is minimized at its place in the step; the recorded argmin
/// is the first control of the step.
pub fn apply_bellman(
    problem: &ProblemSpec,
    t: usize,
    phi: &ValueFunction,
    opts: &SolveOptions,
) -> Result<ValueFunction> {
    if t >= problem.horizon() || phi.stage != t + 1 || phi.domain != Domain::History {
        return Err(Error::InstanceMismatch(format!(
            "cannot apply the stage-{} operator to a stage-{} {:?} value function",
            t + 1,
            phi.stage,
            phi.domain
        )));
    }
    let (values, tables) = bellman_step(problem, t, &phi.values, opts)?;
    let argmin = tables.into_iter().find(|tb| tb.depth == 0).map(|tb| tb.controls);
    Ok(ValueFunction::new(t, Domain::History, values, argmin))
}

/// `B_{t:r} = B_{r+1:r} ∘ … ∘ B_{t:t-1}`.
pub fn compose_bellman(
    problem: &ProblemSpec,
    r: usize,
    t: usize,
    phi: &ValueFunction,
    opts: &SolveOptions,
) -> Result<ValueFunction> {
    if r > t {
        return Err(Error::InvalidRange { from: r, to: t });
    }
    if phi.stage != t {
        return Err(Error::InstanceMismatch(format!(
            "expected a stage-{t} value function, got stage {}",
            phi.stage
        )));
    }
    let mut v = phi.clone();
    for s in (r..t).rev() {
        v = apply_bellman(problem, s, &v, opts)?;
    }
    Ok(v)
}

/// Value functions and every recorded control table of the history DP.
#[derive(Debug, Clone)]
pub struct HistorySolution {
    /// `values[t] = V_t`.
    pub values: Vec<ValueFunction>,
    /// `policies[t]`: one table per control entry of step `t`.
    pub policies: Vec<Vec<ControlTable>>,
}

pub fn solve_history_dp_with_policies(
    problem: &ProblemSpec,
    opts: &SolveOptions,
) -> Result<HistorySolution> {
    let layout = problem.layout();
    let horizon = problem.horizon();
    let mut total = 0usize;
    for t in (0..=horizon).rev() {
        let n = check_budget(layout, t, opts.budget)?;
        total = total.saturating_add(n);
        if total > opts.budget {
            return Err(Error::Capacity {
                what: "history value tables",
                stage: Some(t),
                needed: total as u128,
                limit: opts.budget as u128,
            });
        }
    }
    let mut values = vec![ValueFunction::history(horizon, problem.criterion_table()?)];
    let mut policies = Vec::with_capacity(horizon);
    for t in (0..horizon).rev() {
        let (v, tables) = bellman_step(problem, t, &values.last().unwrap().values, opts)?;
        let argmin = tables.iter().find(|tb| tb.depth == 0).map(|tb| tb.controls.clone());
        values.push(ValueFunction::new(t, Domain::History, v, argmin));
        policies.push(tables);
    }
    values.reverse();
    policies.reverse();
    Ok(HistorySolution { values, policies })
}

/// `V_T = j`, `V_t = B_{t+1:t} V_{t+1}`; `result[t] = V_t`.
pub fn solve_history_dp(problem: &ProblemSpec, opts: &SolveOptions) -> Result<Vec<ValueFunction>> {
    Ok(solve_history_dp_with_policies(problem, opts)?.values)
}

/// The greedy feedback read off the argmin tables, over stages `0..T`.
pub fn argmin_feedback(problem: &ProblemSpec, values: &[ValueFunction]) -> Result<Feedback> {
    let maps = values[..problem.horizon()]
        .iter()
        .map(|v| {
            v.argmin()
                .map(<[usize]>::to_vec)
                .ok_or(Error::Representation("value function without argmin table"))
        })
        .collect::<Result<_>>()?;
    Feedback::new(problem.layout(), 0, maps)
}

/// `∫ j dρ^γ_{t:T}(h_t, ·)`.
pub fn evaluate_feedback(problem: &ProblemSpec, h_t: &History, gamma: &Feedback) -> Result<Cost> {
    let layout = problem.layout();
    if h_t.stage() == problem.horizon() {
        return problem.cost(h_t.entries());
    }
    let law = feedback_law(layout, problem.kernels(), gamma, h_t, problem.horizon())?;
    let mut total = 0.0;
    for (i, p) in law.atoms {
        let j = problem.cost(layout.decode(problem.horizon(), i).entries())?;
        if j.is_infinite() {
            return Ok(Cost::INFINITY);
        }
        total += p * j.get();
    }
    Cost::new(total.max(0.0))
}

/// Number of feedbacks on the tree of histories that can follow a stage-`t`
/// history: `N_T = 1`, `N_s = |U_s| · N_{s+1}^{|W_{s+1}|}`, saturating.
pub fn feedback_tree_count(layout: &HistoryLayout, t: usize) -> u128 {
    let mut n: u128 = 1;
    for s in (t..layout.horizon()).rev() {
        let mut pow: u128 = 1;
        for _ in 0..layout.noise_size(s + 1) {
            pow = pow.saturating_mul(n);
        }
        n = pow.saturating_mul(layout.control_size(s) as u128);
    }
    n
}

/// `min_γ ∫ j dρ^γ_{t:T}(h_t, ·)` by trying every feedback.
///
/// Two feedbacks that agree on every history reachable from `h_t` have the
/// same cost, so the search runs over assignments of controls to that
/// reachable tree; each candidate is extended by control 0 elsewhere and
/// evaluated as an ordinary feedback.
pub fn brute_force_value(
    problem: &ProblemSpec,
    h_t: &History,
    opts: &SolveOptions,
) -> Result<Cost> {
    let layout = problem.layout();
    if !layout.is_flat() {
        return Err(Error::Representation("exhaustive feedback search needs a flat layout"));
    }
    let t = h_t.stage();
    let horizon = problem.horizon();
    if t == horizon {
        return problem.cost(h_t.entries());
    }
    let needed = feedback_tree_count(layout, t);
    if needed > opts.enumeration_cap {
        return Err(Error::Capacity {
            what: "feedback enumeration",
            stage: Some(t),
            needed,
            limit: opts.enumeration_cap,
        });
    }
    let maps = (t..horizon)
        .map(|s| vec![0; layout.count(s).unwrap_or(0)])
        .collect();
    let mut gamma = Feedback::new(layout, t, maps)?;
    let mut frontier = vec![h_t.entries().to_vec()];
    let mut best = Cost::INFINITY;
    enumerate(problem, &mut frontier, &mut gamma, &mut |g| {
        best = best.min(evaluate_feedback(problem, h_t, g)?);
        Ok(())
    })?;
    Ok(best)
}

fn enumerate(
    problem: &ProblemSpec,
    frontier: &mut Vec<Vec<usize>>,
    gamma: &mut Feedback,
    visit: &mut dyn FnMut(&Feedback) -> Result<()>,
) -> Result<()> {
    let Some(mut h) = frontier.pop() else {
        return visit(gamma);
    };
    let layout = problem.layout();
    let s = (h.len() - 1) / 2;
    if s == problem.horizon() {
        enumerate(problem, frontier, gamma, visit)?;
    } else {
        let idx = layout.index(&h);
        let width = layout.noise_size(s + 1);
        let from = gamma.from_stage();
        for u in 0..layout.control_size(s) {
            gamma.set(s - from, idx, u);
            h.push(u);
            for w in 0..width {
                h.push(w);
                frontier.push(h.clone());
                h.pop();
            }
            h.pop();
            enumerate(problem, frontier, gamma, visit)?;
            frontier.truncate(frontier.len() - width);
        }
    }
    frontier.push(h);
    Ok(())
}
