//! A hydro dam on an integer volume grid.
//!
//! Each period the operator turbines `q` (revenue), the inflow `a` arrives,
//! and the stock moves to `min(x♯, x - q + a)` (`min_dynamics`, the excess
//! spills by itself), or a spill `r` is chosen after seeing the inflow with
//! `0 <= x - q + a - r <= x♯` (`spill_control`, a decision-hazard-decision
//! problem). Turbining more than the stock, or an infeasible spill, sends
//! the dam to an absorbing state whose final cost is `+∞`.
//!
//! Costs are kept nonnegative by charging revenue shortfall
//! `max_q revenue(q) - revenue(q)` per period and `max final_value -
//! final_value(x)` at the end. With a final value that does not decrease
//! with the stock and no spill cost, both variants have the same value.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::DhdProblem;
use crate::bellman::SolveOptions;
use crate::error::{Error, Result};
use crate::kernels::StochasticKernel;
use crate::maps::{BlockDynamics, DamStock, HistoryMap};
use crate::problem::{AdditiveCriterion, Criterion, ProblemSpec};
use crate::reduction::{solve_additive_dp, Reduction};
use crate::space::{Cost, Distribution};

#[derive(Debug, Clone, PartialEq)]
pub struct DamParams {
    /// `x♯`, in volume units.
    pub capacity: f64,
    /// Turbinable volumes; control `i` turbines `turbine[i]`.
    pub turbine: Vec<f64>,
    /// Per period, `(volume, probability)` pairs of the inflow.
    pub inflows: Vec<Vec<(f64, f64)>>,
    /// Per period, revenue of each turbine control. Empty means no revenue.
    pub revenue: Vec<Vec<f64>>,
    /// Value of each final stock `0..=x♯`. Empty means zero.
    pub final_value: Vec<f64>,
    /// Cost per unit of chosen spill (`spill_control` only).
    pub spill_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DamVariant {
    MinDynamics,
    SpillControl,
}

#[derive(Debug, Clone)]
pub enum DamInstance {
    MinDynamics(ProblemSpec),
    SpillControl(DhdProblem),
}

impl DamInstance {
    pub fn spec(&self) -> &ProblemSpec {
        match self {
            DamInstance::MinDynamics(p) => p,
            DamInstance::SpillControl(d) => d.spec(),
        }
    }

    /// Optimal expected cost for every initial stock `0..=x♯` (and `+∞`
    /// for the absorbing state).
    pub fn optimal_values(&self, opts: &SolveOptions) -> Result<Vec<Cost>> {
        Ok(solve_additive_dp(self.spec(), opts)?.values[0].values().to_vec())
    }
}

fn on_grid(name: &str, v: f64) -> Result<usize> {
    if v.is_finite() && v >= 0.0 && v < u32::MAX as f64 && v == (v as u64) as f64 {
        Ok(v as usize)
    } else {
        Err(Error::Grid(format!(
            "{name} = {v} is not a nonnegative whole number of volume units"
        )))
    }
}

fn finite(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Grid(format!("{name} = {v} is not finite")))
    }
}

struct Checked {
    dam: DamStock,
    inflows: Vec<Distribution>,
    shortfall: Vec<Vec<Cost>>,
    final_cost: Vec<Cost>,
    spill_cost: f64,
}

fn check(p: &DamParams) -> Result<Checked> {
    let capacity = on_grid("capacity", p.capacity)?;
    if p.turbine.is_empty() || p.inflows.is_empty() {
        return Err(Error::InstanceMismatch(
            "a dam needs turbine levels and at least one period".into(),
        ));
    }
    let turbine = p
        .turbine
        .iter()
        .map(|&q| on_grid("turbine volume", q))
        .collect::<Result<Vec<_>>>()?;
    let mut inflows = Vec::with_capacity(p.inflows.len());
    for (s, law) in p.inflows.iter().enumerate() {
        let mut probs = Vec::new();
        for &(a, prob) in law {
            let a = on_grid(&format!("inflow of period {s}"), a)?;
            if probs.len() <= a {
                probs.resize(a + 1, 0.0);
            }
            probs[a] += prob;
        }
        inflows.push(Distribution::new(probs)?);
    }
    let periods = inflows.len();
    let shortfall = (0..periods)
        .map(|s| {
            let revenue = match p.revenue.get(s) {
                Some(r) if !r.is_empty() => r.clone(),
                _ => vec![0.0; turbine.len()],
            };
            if revenue.len() != turbine.len() {
                return Err(Error::InstanceMismatch(format!(
                    "period {s} has {} revenues for {} turbine levels",
                    revenue.len(),
                    turbine.len()
                )));
            }
            let best = revenue.iter().try_fold(f64::NEG_INFINITY, |m, &r| {
                finite("revenue", r).map(|r| m.max(r))
            })?;
            revenue.iter().map(|&r| Cost::new(best - r)).collect()
        })
        .collect::<Result<Vec<_>>>()?;
    let values = if p.final_value.is_empty() {
        vec![0.0; capacity + 1]
    } else {
        p.final_value.clone()
    };
    if values.len() != capacity + 1 {
        return Err(Error::InstanceMismatch(format!(
            "final value needs {} entries, got {}",
            capacity + 1,
            values.len()
        )));
    }
    let best = values
        .iter()
        .try_fold(f64::NEG_INFINITY, |m, &v| finite("final value", v).map(|v| m.max(v)))?;
    let mut final_cost = values
        .iter()
        .map(|&v| Cost::new(best - v))
        .collect::<Result<Vec<_>>>()?;
    final_cost.push(Cost::INFINITY);
    let spill_cost = finite("spill cost", p.spill_cost)?;
    if spill_cost < 0.0 {
        return Err(Error::InvalidCost(spill_cost));
    }
    Ok(Checked {
        dam: DamStock { capacity, turbine },
        inflows,
        shortfall,
        final_cost,
        spill_cost,
    })
}

/// The stock reduction: `θ` = current stock (or the absorbing state) and
/// the matching dynamics, for either variant.
pub fn stock_reduction(params: &DamParams) -> Result<Reduction> {
    let c = check(params)?;
    Reduction::uniform(
        c.inflows.len(),
        c.dam.state_count(),
        HistoryMap::DamStock(c.dam.clone()),
        BlockDynamics::DamStock(c.dam),
    )
}

pub fn build_dam_instance(params: &DamParams, variant: DamVariant) -> Result<DamInstance> {
    let c = check(params)?;
    let periods = c.inflows.len();
    let states = c.dam.state_count();
    let nq = c.dam.turbine.len();
    let reduction = Reduction::uniform(
        periods,
        states,
        HistoryMap::DamStock(c.dam.clone()),
        BlockDynamics::DamStock(c.dam.clone()),
    )?;
    let kernels: Vec<_> = c
        .inflows
        .iter()
        .enumerate()
        .map(|(s, d)| StochasticKernel::white_noise(s + 1, d.clone()))
        .collect();
    let feasible = |x: usize| x < c.dam.infeasible();
    match variant {
        DamVariant::MinDynamics => {
            let stage_costs = (0..periods)
                .map(|s| {
                    let nw = c.inflows[s].len();
                    let mut costs = Vec::with_capacity(states * nq * nw);
                    for x in 0..states {
                        for q in 0..nq {
                            let l = if feasible(x) { c.shortfall[s][q] } else { Cost::ZERO };
                            costs.extend(core::iter::repeat_n(l, nw));
                        }
                    }
                    costs
                })
                .collect();
            let criterion = Criterion::Additive(AdditiveCriterion {
                reduction,
                stage_costs,
                final_cost: c.final_cost,
            });
            let controls = vec![nq; periods];
            let mut noises = vec![c.dam.capacity + 1];
            noises.extend(c.inflows.iter().map(Distribution::len));
            Ok(DamInstance::MinDynamics(ProblemSpec::flat(
                &controls, &noises, kernels, criterion,
            )?))
        }
        DamVariant::SpillControl => {
            let max_inflow = c.inflows.iter().map(Distribution::len).max().unwrap_or(1) - 1;
            let nr = c.dam.capacity + max_inflow + 1;
            let stage_costs = (0..periods)
                .map(|s| {
                    let nw = c.inflows[s].len();
                    let mut costs = Vec::with_capacity(states * nq * nw * nr);
                    for x in 0..states {
                        for q in 0..nq {
                            for _ in 0..nw {
                                for r in 0..nr {
                                    costs.push(if feasible(x) {
                                        c.shortfall[s][q] + Cost::new(c.spill_cost * r as f64)?
                                    } else {
                                        Cost::ZERO
                                    });
                                }
                            }
                        }
                    }
                    Ok(costs)
                })
                .collect::<Result<Vec<_>>>()?;
            let criterion = Criterion::Additive(AdditiveCriterion {
                reduction,
                stage_costs,
                final_cost: c.final_cost,
            });
            let noises: Vec<usize> = c.inflows.iter().map(Distribution::len).collect();
            Ok(DamInstance::SpillControl(DhdProblem::new(
                c.dam.capacity + 1,
                &vec![nq; periods],
                &noises,
                &vec![nr; periods],
                kernels,
                criterion,
            )?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> DamParams {
        DamParams {
            capacity: 2.0,
            turbine: vec![0.0, 1.0, 2.0],
            inflows: vec![vec![(0.0, 0.5), (1.0, 0.5)]; 3],
            revenue: vec![vec![0.0, 3.0, 5.0], vec![0.0, 1.0, 2.0], vec![0.0, 4.0, 6.0]],
            final_value: vec![0.0, 1.0, 2.0],
            spill_cost: 0.0,
        }
    }

    #[test]
    fn off_grid_parameters_are_rejected() {
        let mut p = params();
        p.capacity = 2.5;
        assert!(matches!(build_dam_instance(&p, DamVariant::MinDynamics), Err(Error::Grid(_))));
        let mut p = params();
        p.inflows[1][1].0 = 0.3;
        assert!(matches!(build_dam_instance(&p, DamVariant::SpillControl), Err(Error::Grid(_))));
    }

    #[test]
    fn empty_dam_with_no_inflow_idles() {
        let p = DamParams {
            capacity: 1.0,
            turbine: vec![0.0, 1.0],
            inflows: vec![vec![(0.0, 1.0)]],
            revenue: vec![vec![0.0, 7.0]],
            final_value: vec![],
            spill_cost: 0.0,
        };
        for variant in [DamVariant::MinDynamics, DamVariant::SpillControl] {
            let v = build_dam_instance(&p, variant).unwrap().optimal_values(&SolveOptions::default()).unwrap();
            assert_eq!(v[0], Cost::of(7.0), "{variant:?}");
            assert_eq!(v[1], Cost::ZERO, "{variant:?}");
        }
    }

    #[test]
    fn variants_agree_without_spill_cost() {
        let opts = SolveOptions::default();
        let a = build_dam_instance(&params(), DamVariant::MinDynamics).unwrap().optimal_values(&opts).unwrap();
        let b = build_dam_instance(&params(), DamVariant::SpillControl).unwrap().optimal_values(&opts).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(x.distance(*y) <= 1e-9, "{a:?} vs {b:?}");
        }
    }
}
