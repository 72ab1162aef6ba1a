//! Day/minute problems.
//!
//! Time points are `(d, m)` with `d in 0..=D`, `m in 0..=M`, plus the final
//! point `(D+1, 0)`, numbered lexicographically `d (M+1) + m`. Reductions
//! live at day starts only; each day is solved as an explicit scenario tree
//! grown from the reduced kernels, so noise may be arbitrarily correlated
//! within a day.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::bellman::{Domain, SolveOptions, ValueFunction};
use crate::error::{Error, Result};
use crate::par;
use crate::problem::ProblemSpec;
use crate::reduction::{prepare, BlockSchedule, ReducedKernels, Reduction};
use crate::space::Cost;
use crate::StochasticKernel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TwoScaleClock {
    days: usize,
    minutes: usize,
}

impl TwoScaleClock {
    /// Days `0..=days`, minutes `0..=minutes` within each day.
    pub fn new(days: usize, minutes: usize) -> Self {
        TwoScaleClock { days, minutes }
    }

    /// `D`, the last day.
    pub fn days(&self) -> usize {
        self.days
    }

    /// `M`, the last minute of a day.
    pub fn minutes(&self) -> usize {
        self.minutes
    }

    /// Flat stage of `(D+1, 0)`: `(D+1)(M+1)`.
    pub fn horizon(&self) -> usize {
        (self.days + 1) * (self.minutes + 1)
    }

    pub fn contains(&self, d: usize, m: usize) -> bool {
        (d <= self.days && m <= self.minutes) || (d == self.days + 1 && m == 0)
    }

    pub fn lex_index(&self, d: usize, m: usize) -> Result<usize> {
        if !self.contains(d, m) {
            return Err(Error::Domain { day: d, minute: m });
        }
        Ok(d * (self.minutes + 1) + m)
    }

    pub fn lex_pair(&self, t: usize) -> Result<(usize, usize)> {
        if t > self.horizon() {
            return Err(Error::InstanceMismatch(format!(
                "stage {t} is past the horizon {}",
                self.horizon()
            )));
        }
        Ok((t / (self.minutes + 1), t % (self.minutes + 1)))
    }

    /// Day starts `{(d, 0) : d = 0..=D+1}`.
    pub fn schedule(&self) -> BlockSchedule {
        let step = self.minutes + 1;
        BlockSchedule::new((0..=self.days + 1).map(|d| d * step).collect())
            .expect("day starts increase")
    }
}

/// A flat problem over the horizon of a clock.
#[derive(Debug, Clone)]
pub struct TwoScaleProblem {
    clock: TwoScaleClock,
    problem: ProblemSpec,
}

impl TwoScaleProblem {
    pub fn new(clock: TwoScaleClock, problem: ProblemSpec) -> Result<Self> {
        if !problem.layout().is_flat() || problem.horizon() != clock.horizon() {
            return Err(Error::InstanceMismatch(format!(
                "a clock with D = {}, M = {} needs a flat problem of horizon {}",
                clock.days,
                clock.minutes,
                clock.horizon()
            )));
        }
        Ok(TwoScaleProblem { clock, problem })
    }

    pub fn clock(&self) -> TwoScaleClock {
        self.clock
    }

    pub fn problem(&self) -> &ProblemSpec {
        &self.problem
    }

    /// The kernel of `w_{(d,m)}`, `m in 1..=M`.
    pub fn within_day_kernel(&self, d: usize, m: usize) -> Result<&StochasticKernel> {
        if m == 0 || d > self.clock.days {
            return Err(Error::Domain { day: d, minute: m });
        }
        Ok(self.problem.kernel(self.clock.lex_index(d, m)?))
    }

    /// The kernel of `w_{(d+1,0)}` given the history up to `(d, M)`.
    pub fn across_day_kernel(&self, d: usize) -> Result<&StochasticKernel> {
        if d > self.clock.days {
            return Err(Error::Domain { day: d, minute: 0 });
        }
        Ok(self.problem.kernel(self.clock.lex_index(d + 1, 0)?))
    }
}

/// Control chosen at each decision node of a day's scenario tree, keyed by
/// the partial segment (controls and noises since the start of the day).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TreePolicy {
    pub decisions: Vec<(Vec<usize>, usize)>,
}

impl TreePolicy {
    pub fn control(&self, prefix: &[usize]) -> Option<usize> {
        self.decisions
            .iter()
            .find(|(p, _)| p.as_slice() == prefix)
            .map(|(_, u)| *u)
    }
}

enum NodeKind {
    Pending,
    Decision(Vec<usize>),
    Chance(Vec<(f64, usize)>),
    Leaf(Cost),
}

struct Node {
    prefix: Vec<usize>,
    kind: NodeKind,
}

/// Value of day `d` started in state `x`: the scenario tree over the day's
/// controls and positive-probability noises is expanded node by node from
/// the reduced kernels, leaves cost `next_value(f_d(x, segment))`, and the
/// tree is solved backwards. A state no history reaches has value `+∞`.
pub fn intra_block_solve(
    problem: &TwoScaleProblem,
    reduction: &Reduction,
    kernels: &ReducedKernels,
    d: usize,
    x: usize,
    next_value: &[Cost],
    opts: &SolveOptions,
) -> Result<(Cost, TreePolicy)> {
    let clock = problem.clock;
    let spec = &problem.problem;
    let layout = spec.layout();
    let r = clock.lex_index(d, 0)?;
    let t = r + clock.minutes + 1;
    let f = reduction.dynamics(d);
    let day = kernels
        .blocks
        .get(d)
        .ok_or_else(|| Error::InstanceMismatch(format!("no reduced kernels for day {d}")))?;
    if !kernels.reached(d, x) {
        return Ok((Cost::INFINITY, TreePolicy::default()));
    }

    let mut nodes = vec![Node {
        prefix: Vec::new(),
        kind: NodeKind::Pending,
    }];
    let mut i = 0;
    while i < nodes.len() {
        if nodes.len() > opts.budget {
            return Err(Error::Capacity {
                what: "scenario tree",
                stage: Some(r),
                needed: nodes.len() as u128,
                limit: opts.budget as u128,
            });
        }
        if matches!(nodes[i].kind, NodeKind::Leaf(_)) {
            i += 1;
            continue;
        }
        let prefix = nodes[i].prefix.clone();
        let s = r + prefix.len() / 2;
        let kind = if prefix.len() % 2 == 0 {
            let children = (0..layout.control_size(s))
                .map(|u| {
                    let mut p = prefix.clone();
                    p.push(u);
                    nodes.push(Node {
                        prefix: p,
                        kind: NodeKind::Pending,
                    });
                    nodes.len() - 1
                })
                .collect();
            NodeKind::Decision(children)
        } else {
            let seen = &prefix[..prefix.len() - 1];
            let key = layout.segment_index(r, seen);
            let row = day[s - r].row(x, key).ok_or_else(|| {
                Error::InstanceMismatch(format!("no reduced row for state {x} at stage {}", s + 1))
            })?;
            let mut children = Vec::new();
            for (w, &p) in row.probs().iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let mut seg = prefix.clone();
                seg.push(w);
                let kind = if s + 1 == t {
                    let y = f.apply(layout, r, x, &seg);
                    NodeKind::Leaf(next_value.get(y).copied().ok_or_else(|| {
                        Error::InstanceMismatch(format!("dynamics left the state space ({y})"))
                    })?)
                } else {
                    NodeKind::Pending
                };
                nodes.push(Node { prefix: seg, kind });
                children.push((p, nodes.len() - 1));
            }
            NodeKind::Chance(children)
        };
        nodes[i].kind = kind;
        i += 1;
    }

    let mut value = vec![Cost::ZERO; nodes.len()];
    let mut policy = TreePolicy::default();
    for i in (0..nodes.len()).rev() {
        value[i] = match &nodes[i].kind {
            NodeKind::Pending => unreachable!("every node is expanded"),
            NodeKind::Leaf(c) => *c,
            NodeKind::Chance(children) => {
                let mut acc = 0.0;
                let mut inf = false;
                for &(p, c) in children {
                    if value[c].is_infinite() {
                        inf = true;
                    } else {
                        acc += p * value[c].get();
                    }
                }
                if inf {
                    Cost::INFINITY
                } else {
                    Cost::new(acc.max(0.0))?
                }
            }
            NodeKind::Decision(children) => {
                let mut best = 0;
                for (u, &c) in children.iter().enumerate() {
                    if value[c] < value[children[best]] {
                        best = u;
                    }
                }
                policy.decisions.push((nodes[i].prefix.clone(), best));
                value[children[best]]
            }
        };
    }
    policy.decisions.reverse();
    Ok((value[0], policy))
}

#[derive(Debug, Clone)]
pub struct TwoScaleSolution {
    /// `values[d] = Ṽ_d` over `X_d`, `d = 0..=D+1`.
    pub values: Vec<ValueFunction>,
    /// `policies[d][x]`; empty for states nothing maps to.
    pub policies: Vec<Vec<TreePolicy>>,
    pub kernels: ReducedKernels,
}

/// `Ṽ_{D+1} = j̃`, `Ṽ_d(x) =` the day-`d` scenario-tree problem from `x`.
pub fn solve_two_timescale(
    problem: &TwoScaleProblem,
    reduction: &Reduction,
    reduced_criterion: &[Cost],
    opts: &SolveOptions,
) -> Result<TwoScaleSolution> {
    let clock = problem.clock;
    let schedule = clock.schedule();
    let kernels = prepare(&problem.problem, &schedule, reduction, reduced_criterion, opts)?;
    let mut values = vec![ValueFunction::reduced(clock.horizon(), reduced_criterion.to_vec())];
    let mut policies = Vec::new();
    for d in (0..=clock.days).rev() {
        let next = values.last().unwrap().values();
        let solved = par::map(reduction.state_size(d), opts.parallel, |x| {
            intra_block_solve(problem, reduction, &kernels, d, x, next, opts)
        })?;
        let argmin = solved
            .iter()
            .map(|(_, p)| p.control(&[]).unwrap_or(0))
            .collect();
        let (v, p): (Vec<_>, Vec<_>) = solved.into_iter().unzip();
        values.push(ValueFunction::new(
            schedule.boundaries()[d],
            Domain::ReducedState,
            v,
            Some(argmin),
        ));
        policies.push(p);
    }
    values.reverse();
    policies.reverse();
    Ok(TwoScaleSolution {
        values,
        policies,
        kernels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lex_examples() {
        let c = TwoScaleClock::new(2, 2);
        assert_eq!(c.lex_index(0, 0), Ok(0));
        assert_eq!(c.lex_index(1, 0), Ok(3));
        assert_eq!(c.lex_index(3, 0), Ok(9));
        assert_eq!(c.horizon(), 9);
        assert_eq!(c.lex_index(3, 1), Err(Error::Domain { day: 3, minute: 1 }));
        assert_eq!(c.lex_index(0, 3), Err(Error::Domain { day: 0, minute: 3 }));
        for t in 0..=c.horizon() {
            let (d, m) = c.lex_pair(t).unwrap();
            assert_eq!(c.lex_index(d, m), Ok(t));
        }
        assert_eq!(c.schedule().boundaries(), &[0, 3, 6, 9]);
    }
}
