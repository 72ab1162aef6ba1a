//! Declarative problem instances: spaces, kernels and criterion.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::history::HistoryLayout;
use crate::kernels::StochasticKernel;
use crate::maps::HistoryMap;
use crate::reduction::{BlockSchedule, Reduction};
use crate::space::Cost;

/// `j(h_T) = Σ_t L_t(x_t, step_t) + K(x_T)` where `x_t = θ_t(h_t)` is given
/// by a per-stage reduction.
///
/// `stage_costs[t]` is indexed by `x * |steps of t| + step position`; in a
/// flat layout that is `(x * |U_t| + u) * |W_{t+1}| + w`.
#[derive(Debug, Clone)]
pub struct AdditiveCriterion {
    pub reduction: Reduction,
    pub stage_costs: Vec<Vec<Cost>>,
    pub final_cost: Vec<Cost>,
}

#[derive(Debug, Clone)]
pub enum Criterion {
    /// One cost per final history, in lexicographic order.
    FullTable(Vec<Cost>),
    /// `j(h_T) = costs[map(h_T)]`.
    FinalState { map: HistoryMap, costs: Vec<Cost> },
    Additive(AdditiveCriterion),
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    layout: HistoryLayout,
    kernels: Vec<StochasticKernel>,
    criterion: Criterion,
}

impl ProblemSpec {
    /// `kernels[s - 1]` must be the kernel of stage `s`, for `s = 1..=T`.
    pub fn new(
        layout: HistoryLayout,
        kernels: Vec<StochasticKernel>,
        criterion: Criterion,
    ) -> Result<Self> {
        let horizon = layout.horizon();
        if kernels.len() != horizon {
            let missing = (1..=horizon)
                .find(|&s| kernels.get(s - 1).map(|k| k.stage()) != Some(s))
                .unwrap_or(horizon + 1);
            return Err(Error::InstanceMismatch(format!(
                "kernel coverage gap at stage {missing}"
            )));
        }
        for (i, k) in kernels.iter().enumerate() {
            if k.stage() != i + 1 {
                return Err(Error::InstanceMismatch(format!(
                    "kernel coverage gap at stage {}",
                    i + 1
                )));
            }
            k.validate(&layout)?;
        }
        match &criterion {
            Criterion::FullTable(costs) => {
                let need = layout.count(horizon).unwrap_or(usize::MAX);
                if costs.len() != need {
                    return Err(Error::InstanceMismatch(format!(
                        "criterion table needs {need} entries, got {}",
                        costs.len()
                    )));
                }
            }
            Criterion::FinalState { .. } => {}
            Criterion::Additive(add) => {
                let schedule = BlockSchedule::unit(horizon);
                add.reduction.validate_shape(&schedule)?;
                for t in 0..horizon {
                    let need = add.reduction.state_size(t) * layout.step_count(t);
                    if add.stage_costs.get(t).map(Vec::len) != Some(need) {
                        return Err(Error::InstanceMismatch(format!(
                            "stage cost {t} needs {need} entries"
                        )));
                    }
                }
                if add.stage_costs.len() != horizon
                    || add.final_cost.len() != add.reduction.state_size(horizon)
                {
                    return Err(Error::InstanceMismatch(
                        "additive criterion has the wrong number of stage or final costs".into(),
                    ));
                }
            }
        }
        Ok(ProblemSpec {
            layout,
            kernels,
            criterion,
        })
    }

    pub fn flat(
        controls: &[usize],
        uncertainties: &[usize],
        kernels: Vec<StochasticKernel>,
        criterion: Criterion,
    ) -> Result<Self> {
        Self::new(HistoryLayout::flat(controls, uncertainties)?, kernels, criterion)
    }

    pub fn horizon(&self) -> usize {
        self.layout.horizon()
    }

    pub fn layout(&self) -> &HistoryLayout {
        &self.layout
    }

    pub fn kernels(&self) -> &[StochasticKernel] {
        &self.kernels
    }

    /// The kernel of stage `s` (the law of `w_s`).
    pub fn kernel(&self, s: usize) -> &StochasticKernel {
        &self.kernels[s - 1]
    }

    pub fn criterion(&self) -> &Criterion {
        &self.criterion
    }

    pub fn with_criterion(&self, criterion: Criterion) -> Result<Self> {
        Self::new(self.layout.clone(), self.kernels.clone(), criterion)
    }

    pub fn with_kernels(&self, kernels: Vec<StochasticKernel>) -> Result<Self> {
        Self::new(self.layout.clone(), kernels, self.criterion.clone())
    }

    /// `j(h_T)` for the entries of a final history.
    pub fn cost(&self, entries: &[usize]) -> Result<Cost> {
        let lookup = |table: &[Cost], i: usize| {
            table.get(i).copied().ok_or_else(|| {
                Error::InstanceMismatch(format!("criterion has no entry {i} (history {entries:?})"))
            })
        };
        match &self.criterion {
            Criterion::FullTable(costs) => lookup(costs, self.layout.index(entries)),
            Criterion::FinalState { map, costs } => lookup(costs, map.apply(&self.layout, entries)),
            Criterion::Additive(add) => {
                let red = &add.reduction;
                let mut x = red.theta(0).apply(&self.layout, &entries[..1]);
                let mut total = Cost::ZERO;
                for t in 0..self.horizon() {
                    let (a, b) = (self.layout.stage_len(t), self.layout.stage_len(t + 1));
                    let step = &entries[a..b];
                    let i = x * self.layout.step_count(t) + self.layout.segment_index(t, step);
                    total = total + lookup(&add.stage_costs[t], i)?;
                    x = red.dynamics(t).apply(&self.layout, t, x, step);
                }
                Ok(total + lookup(&add.final_cost, x)?)
            }
        }
    }

    /// `j` tabulated over `H_T`.
    pub fn criterion_table(&self) -> Result<Vec<Cost>> {
        if let Criterion::FullTable(costs) = &self.criterion {
            return Ok(costs.clone());
        }
        self.layout
            .histories(self.horizon())
            .map(|h| self.cost(h.entries()))
            .collect()
    }

    /// Same instance with the criterion stored as an explicit table.
    pub fn tabulated(&self) -> Result<Self> {
        self.with_criterion(Criterion::FullTable(self.criterion_table()?))
    }
}
