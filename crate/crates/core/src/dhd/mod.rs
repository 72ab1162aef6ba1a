//! Decision-hazard-decision problems.
//!
//! Each period `s -> s+1` plays a head control `u♯_s`, then the noise
//! `w♭_{s+1}`, then a tail control `u♭_{s+1}`. Head histories
//! `h♯_s = (w♯_0, u♯_0, w♭_1, u♭_1, …, u♭_s)` are stored with the step
//! `(u♯, w♭, u♭)` flattened into the entries, so the generic history and
//! reduction machinery applies unchanged.

pub mod dam;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::bellman::{
    bellman_step, solve_history_dp_with_policies, ControlTable, Domain, SolveOptions,
    ValueFunction,
};
use crate::error::{Error, Result};
use crate::history::{EntryKind, HistoryLayout};
use crate::kernels::StochasticKernel;
use crate::problem::{Criterion, ProblemSpec};
use crate::reduction::{solve_additive_dp, solve_reduced_dp, BlockSchedule, ReducedSolution, Reduction};
use crate::space::{Cost, Distribution};
use crate::two_timescale::{TwoScaleClock, TwoScaleProblem};

/// A decision-hazard-decision instance over periods `0..S`.
#[derive(Debug, Clone)]
pub struct DhdProblem {
    spec: ProblemSpec,
}

/// `H♯` layout: `head[s] = |U♯_s|`, `noise[s] = |W♭_{s+1}|`, `tail[s] = |U♭_{s+1}|`.
pub fn dhd_layout(initial: usize, head: &[usize], noise: &[usize], tail: &[usize]) -> Result<HistoryLayout> {
    if head.len() != noise.len() || head.len() != tail.len() {
        return Err(Error::InstanceMismatch(format!(
            "{} head, {} noise and {} tail spaces",
            head.len(),
            noise.len(),
            tail.len()
        )));
    }
    let steps = (0..head.len())
        .map(|s| {
            vec![
                (EntryKind::Control, head[s]),
                (EntryKind::Uncertainty, noise[s]),
                (EntryKind::Control, tail[s]),
            ]
        })
        .collect();
    HistoryLayout::from_steps(initial, steps)
}

impl DhdProblem {
    /// `kernels[s]` is the law of `w♭_{s+1}` given `h♯_s`; the criterion is over `H♯_S`.
    pub fn new(
        initial: usize,
        head: &[usize],
        noise: &[usize],
        tail: &[usize],
        kernels: Vec<StochasticKernel>,
        criterion: Criterion,
    ) -> Result<Self> {
        let layout = dhd_layout(initial, head, noise, tail)?;
        Self::from_spec(ProblemSpec::new(layout, kernels, criterion)?)
    }

    pub fn from_spec(spec: ProblemSpec) -> Result<Self> {
        let layout = spec.layout();
        let shaped = (0..layout.horizon()).all(|s| {
            layout.stage_len(s + 1) - layout.stage_len(s) == 3
                && layout.noise_position(s + 1) == layout.stage_len(s) + 1
        });
        if !shaped {
            return Err(Error::InstanceMismatch(
                "decision-hazard-decision steps are (head, noise, tail)".into(),
            ));
        }
        Ok(DhdProblem { spec })
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn horizon(&self) -> usize {
        self.spec.horizon()
    }

    pub fn layout(&self) -> &HistoryLayout {
        self.spec.layout()
    }

    /// `|U♯_s|`, `s in 0..S`.
    pub fn head_size(&self, s: usize) -> usize {
        self.layout().step_radices(s)[0]
    }

    /// `|W♭_s|`, `s in 1..=S`.
    pub fn noise_size(&self, s: usize) -> usize {
        self.layout().noise_size(s)
    }

    /// `|U♭_s|`, `s in 1..=S`.
    pub fn tail_size(&self, s: usize) -> usize {
        self.layout().step_radices(s - 1)[2]
    }

    pub fn initial_size(&self) -> usize {
        self.layout().noise_size(0)
    }

    pub fn with_criterion(&self, criterion: Criterion) -> Result<Self> {
        Ok(DhdProblem {
            spec: self.spec.with_criterion(criterion)?,
        })
    }
}

/// Output of one DHD Bellman step.
#[derive(Debug, Clone)]
pub struct DhdStep {
    /// Values over `H♯_s`, with the head argmin.
    pub value: ValueFunction,
    /// Tail argmin at `((h♯_s, u♯) , w♭)`: index `(h * |U♯| + u♯) * |W♭| + w♭`.
    pub tail: Vec<usize>,
}

fn split_tables(tables: Vec<ControlTable>) -> (Option<Vec<usize>>, Vec<usize>) {
    let mut head = None;
    let mut tail = Vec::new();
    for tb in tables {
        if tb.depth == 0 {
            head = Some(tb.controls);
        } else {
            tail = tb.controls;
        }
    }
    (head, tail)
}

/// `V(h♯_s) = min_{u♯} Σ_{w♭} ρ(h♯_s)(w♭) min_{u♭} φ(h♯_s, u♯, w♭, u♭)`.
pub fn dhd_bellman_apply(
    problem: &DhdProblem,
    s: usize,
    phi: &ValueFunction,
    opts: &SolveOptions,
) -> Result<DhdStep> {
    if s >= problem.horizon() || phi.stage() != s + 1 || phi.domain() != Domain::History {
        return Err(Error::InstanceMismatch(format!(
            "cannot apply the period-{s} operator to a stage-{} value function",
            phi.stage()
        )));
    }
    let (values, tables) = bellman_step(&problem.spec, s, phi.values(), opts)?;
    let (head, tail) = split_tables(tables);
    Ok(DhdStep {
        value: ValueFunction::new(s, Domain::History, values, head),
        tail,
    })
}

#[derive(Debug, Clone)]
pub struct DhdSolution {
    /// `values[s] = V_s` over `H♯_s`.
    pub values: Vec<ValueFunction>,
    /// `tail[s]`: tail argmins of period `s`, indexed as in [`DhdStep::tail`].
    pub tail: Vec<Vec<usize>>,
}

/// The unreduced recursion over head histories.
pub fn solve_dhd_history(problem: &DhdProblem, opts: &SolveOptions) -> Result<DhdSolution> {
    let sol = solve_history_dp_with_policies(&problem.spec, opts)?;
    let tail = sol.policies.into_iter().map(|t| split_tables(t).1).collect();
    Ok(DhdSolution {
        values: sol.values,
        tail,
    })
}

/// `Ṽ_S = j̃`, `Ṽ_s(x) = min_{u♯} Σ_w ρ̃(x)(w) min_{u♭} Ṽ_{s+1}(f_s(x, u♯, w, u♭))`,
/// after checking the per-period reduction and its compatibility. Policies
/// hold the head table (depth 0) and the tail table (depth 2) of each period.
pub fn solve_dhd(
    problem: &DhdProblem,
    reduction: &Reduction,
    reduced_criterion: &[Cost],
    opts: &SolveOptions,
) -> Result<ReducedSolution> {
    let schedule = BlockSchedule::unit(problem.horizon());
    solve_reduced_dp(&problem.spec, &schedule, reduction, reduced_criterion, opts)
}

/// Additive variant: `L_s(x, u♯, w, u♭)` inside the expectation.
pub fn solve_dhd_additive(problem: &DhdProblem, opts: &SolveOptions) -> Result<ReducedSolution> {
    solve_additive_dp(&problem.spec, opts)
}

/// Removes the spurious singleton noises `w_{(d+1,0)}` from a history of
/// the embedded problem; works on any prefix.
pub fn strip_spurious(flat: &[usize]) -> Vec<usize> {
    flat.iter()
        .enumerate()
        .filter(|(i, _)| *i == 0 || i % 4 != 0)
        .map(|(_, &e)| e)
        .collect()
}

/// Inverse of [`strip_spurious`] on complete head histories.
pub fn embed_history(head: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(head.len() + head.len() / 3);
    out.push(head[0]);
    for step in head[1..].chunks(3) {
        out.extend_from_slice(step);
        if step.len() == 3 {
            out.push(0);
        }
    }
    out
}

/// The two-time-scale instance with one day per period and `M = 1`:
/// minute 0 plays the head control after a singleton noise (the initial
/// noise on day 0), minute 1 draws `w♭` and plays the tail control. The
/// kernels of the singleton noises are Dirac, the others and the criterion
/// are those of the head history obtained by stripping the singletons.
pub fn embed_dhd(problem: &DhdProblem) -> Result<TwoScaleProblem> {
    let periods = problem.horizon();
    if periods == 0 {
        return Err(Error::InstanceMismatch("nothing to embed over zero periods".into()));
    }
    let clock = TwoScaleClock::new(periods - 1, 1);
    let mut controls = Vec::with_capacity(2 * periods);
    let mut noises = vec![problem.initial_size()];
    for s in 0..periods {
        controls.push(problem.head_size(s));
        controls.push(problem.tail_size(s + 1));
        noises.push(problem.noise_size(s + 1));
        noises.push(1);
    }
    let flat = HistoryLayout::flat(&controls, &noises)?;
    let head_layout = problem.layout();
    let mut kernels = Vec::with_capacity(2 * periods);
    for s in 0..periods {
        let kernel = problem.spec.kernel(s + 1);
        let rows = flat
            .histories(2 * s)
            .map(|h| kernel.row(head_layout, &strip_spurious(h.entries())).cloned())
            .collect::<Result<_>>()?;
        kernels.push(StochasticKernel::full_table(2 * s + 1, rows));
        kernels.push(StochasticKernel::white_noise(2 * s + 2, Distribution::dirac(1, 0)?));
    }
    let costs = flat
        .histories(2 * periods)
        .map(|h| problem.spec.cost(&strip_spurious(h.entries())))
        .collect::<Result<_>>()?;
    let spec = ProblemSpec::new(flat, kernels, Criterion::FullTable(costs))?;
    TwoScaleProblem::new(clock, spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strip_and_embed_are_inverse() {
        let head = vec![1, 0, 1, 1, 1, 0, 0];
        let flat = embed_history(&head);
        assert_eq!(flat, vec![1, 0, 1, 1, 0, 1, 0, 0, 0]);
        assert_eq!(strip_spurious(&flat), head);
    }

    #[test]
    fn worked_eight_leaf_step() {
        // φ over (u♯, w♭, u♭) in lexicographic order
        let phi: Vec<Cost> = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0].map(Cost::of).to_vec();
        let p = DhdProblem::new(
            1,
            &[2],
            &[2],
            &[2],
            vec![StochasticKernel::white_noise(1, Distribution::uniform(2).unwrap())],
            Criterion::FullTable(phi.clone()),
        )
        .unwrap();
        let step = dhd_bellman_apply(&p, 0, &ValueFunction::history(1, phi), &SolveOptions::default()).unwrap();
        // u♯ = 0: (min(3,1) + min(4,1)) / 2 = 1; u♯ = 1: (5 + 2) / 2 = 3.5
        assert_eq!(step.value.values(), &[Cost::of(1.0)]);
        assert_eq!(step.value.argmin(), Some(&[0][..]));
        assert_eq!(step.tail, vec![1, 1, 0, 0]);
    }

    #[test]
    fn single_period_embedding_has_three_stages() {
        let p = DhdProblem::new(
            2,
            &[2],
            &[2],
            &[1],
            vec![StochasticKernel::white_noise(1, Distribution::uniform(2).unwrap())],
            Criterion::FullTable(vec![Cost::ZERO; 8]),
        )
        .unwrap();
        let e = embed_dhd(&p).unwrap();
        assert_eq!(e.problem().horizon(), 2);
        assert_eq!(e.problem().layout().noise_size(2), 1);
        assert!(e.problem().kernel(2).is_white_noise());
    }
}
