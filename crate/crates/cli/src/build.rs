//! From a parsed file to solver inputs, and back.

use timeblocks::dhd::DhdProblem;
use timeblocks::history::HistoryLayout;
use timeblocks::kernels::{KernelRepr as CoreRepr, StochasticKernel};
use timeblocks::maps::{BlockDynamics, DamStock, HistoryMap};
use timeblocks::noise::{kernels_from_noise_process, NoiseLaw, NoiseProcessSpec, ZeroMassRow};
use timeblocks::problem::{AdditiveCriterion, Criterion};
use timeblocks::reduction::{BlockSchedule, Reduction};
use timeblocks::two_timescale::{TwoScaleClock, TwoScaleProblem};
use timeblocks::{Cost, Distribution, Error, ProblemSpec};

use crate::file::*;
use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Flat,
    TwoScale,
    Dhd,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Flat => "flat",
            Family::TwoScale => "two_scale",
            Family::Dhd => "dhd",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub family: Family,
    pub problem: ProblemSpec,
    pub two_scale: Option<TwoScaleProblem>,
    pub dhd: Option<DhdProblem>,
    pub noise: Option<NoiseProcessSpec>,
    pub zero_mass: Vec<ZeroMassRow>,
    pub schedule: Option<BlockSchedule>,
    pub reduction: Option<Reduction>,
    pub reduced_criterion: Option<Vec<Cost>>,
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn costs(v: &[CostValue]) -> Result<Vec<Cost>, Failure> {
    v.iter().map(|c| Cost::new(c.0).map_err(Failure::from)).collect()
}

fn dist(row: &[f64]) -> Result<Distribution, Failure> {
    Ok(Distribution::new(row.to_vec())?)
}

fn rows(rows: &[Vec<f64>]) -> Result<Vec<Distribution>, Failure> {
    rows.iter().map(|r| dist(r)).collect()
}

fn map(spec: &MapSpec) -> HistoryMap {
    match spec {
        MapSpec::Identity => HistoryMap::Identity,
        MapSpec::Constant => HistoryMap::Constant,
        MapSpec::LastUncertainty => HistoryMap::LastUncertainty,
        MapSpec::RunningSum { cap } => HistoryMap::RunningSum { cap: *cap },
        MapSpec::NoiseWindow { from } => HistoryMap::NoiseWindow { from: *from },
        MapSpec::DamStock { capacity, turbine } => HistoryMap::DamStock(DamStock {
            capacity: *capacity,
            turbine: turbine.clone(),
        }),
        MapSpec::Table(t) => HistoryMap::Table(t.clone()),
    }
}

fn dynamics(spec: &DynamicsSpec) -> BlockDynamics {
    match spec {
        DynamicsSpec::Concatenate => BlockDynamics::Concatenate,
        DynamicsSpec::Constant => BlockDynamics::Constant,
        DynamicsSpec::LastUncertainty => BlockDynamics::LastUncertainty,
        DynamicsSpec::RunningSum { cap } => BlockDynamics::RunningSum { cap: *cap },
        DynamicsSpec::DamStock { capacity, turbine } => BlockDynamics::DamStock(DamStock {
            capacity: *capacity,
            turbine: turbine.clone(),
        }),
        DynamicsSpec::Table(t) => BlockDynamics::Table(t.clone()),
    }
}

fn noise(section: &NoiseSection) -> Result<NoiseProcessSpec, Failure> {
    let law = match &section.law {
        NoiseLawSpec::JointTable(t) => NoiseLaw::JointTable(t.clone()),
        NoiseLawSpec::WhiteNoise(m) => NoiseLaw::WhiteNoise(rows(m)?),
        NoiseLawSpec::DayIndependent { minutes, initial, days } => NoiseLaw::DayIndependent {
            minutes: *minutes,
            initial: dist(initial)?,
            days: days.clone(),
        },
    };
    Ok(NoiseProcessSpec::new(section.sizes.clone(), law)?)
}

pub fn build(file: &ProblemFile) -> Result<Instance, Failure> {
    if file.version != FORMAT_VERSION {
        return Err(invalid(format!(
            "unsupported format version {} (expected {FORMAT_VERSION})",
            file.version
        )));
    }
    let family = match (&file.spaces, &file.dhd, &file.two_scale) {
        (Some(_), None, None) => Family::Flat,
        (Some(_), None, Some(_)) => Family::TwoScale,
        (None, Some(_), None) => Family::Dhd,
        _ => {
            return Err(invalid(
                "exactly one problem family: `spaces` (flat), `spaces` + `two_scale`, or `dhd`",
            ))
        }
    };
    let layout = match (&file.spaces, &file.dhd) {
        (Some(s), _) => HistoryLayout::flat(&s.controls, &s.uncertainties)?,
        (_, Some(d)) => timeblocks::dhd::dhd_layout(d.initial, &d.head, &d.noise, &d.tail)?,
        _ => unreachable!(),
    };
    let horizon = layout.horizon();

    let (kernels, noise_spec, zero_mass) = match (&file.kernels, &file.noise_process) {
        (Some(ks), None) => {
            let kernels = ks
                .iter()
                .map(|k| {
                    Ok(match &k.repr {
                        KernelRepr::FullTable(r) => StochasticKernel::full_table(k.stage, rows(r)?),
                        KernelRepr::WhiteNoise(r) => StochasticKernel::white_noise(k.stage, dist(r)?),
                        KernelRepr::Markov1(r) => StochasticKernel::markov1(k.stage, rows(r)?),
                        KernelRepr::ReducedViaMap { key, rows: r } => {
                            StochasticKernel::via_map(k.stage, map(key), rows(r)?)
                        }
                    })
                })
                .collect::<Result<Vec<_>, Failure>>()?;
            (kernels, None, Vec::new())
        }
        (None, Some(section)) => {
            let spec = noise(section)?;
            let sizes: Vec<usize> = (0..=horizon).map(|t| layout.noise_size(t)).collect();
            if spec.sizes() != sizes {
                return Err(invalid(format!(
                    "noise_process sizes {:?} differ from the uncertainty spaces {sizes:?}",
                    spec.sizes()
                )));
            }
            if family == Family::Dhd && !spec.is_white() {
                return Err(invalid("decision-hazard-decision files accept white_noise laws only"));
            }
            let derived = kernels_from_noise_process(&spec)?;
            (derived.kernels, Some(spec), derived.zero_mass)
        }
        _ => return Err(invalid("exactly one of `kernels` and `noise_process` is required")),
    };

    let schedule = match (&file.schedule, family, &file.two_scale) {
        (Some(b), _, _) => Some(BlockSchedule::new(b.clone())?),
        (None, Family::TwoScale, Some(c)) => Some(TwoScaleClock::new(c.days, c.minutes).schedule()),
        (None, _, _) if file.reduction.is_some() => Some(BlockSchedule::unit(horizon)),
        _ => None,
    };
    let reduction = match &file.reduction {
        Some(r) => {
            let red = Reduction::new(
                r.states.clone(),
                r.theta.iter().map(map).collect(),
                r.dynamics.iter().map(dynamics).collect(),
            )?;
            let sched = schedule.as_ref().expect("reductions come with a schedule");
            if r.states.len() != sched.boundaries().len() || r.theta.len() != r.states.len() || r.dynamics.len() != sched.block_count() {
                return Err(invalid(format!(
                    "reduction needs {} states and maps and {} dynamics for schedule {:?}",
                    sched.boundaries().len(),
                    sched.block_count(),
                    sched.boundaries()
                )));
            }
            Some(red)
        }
        None => None,
    };
    let reduced_criterion = match file.reduction.as_ref().and_then(|r| r.reduced_criterion.as_ref()) {
        Some(c) => Some(costs(c)?),
        None => None,
    };

    let criterion = match &file.criterion {
        CriterionSection::FullTable(c) => Criterion::FullTable(costs(c)?),
        CriterionSection::FinalState { map: m, costs: c } => Criterion::FinalState {
            map: map(m),
            costs: costs(c)?,
        },
        CriterionSection::Additive { stage_costs, final_cost } => {
            let red = reduction
                .clone()
                .ok_or_else(|| invalid("an additive criterion needs a `reduction` section"))?;
            if schedule.as_ref().map(|s| s.boundaries().len()) != Some(horizon + 1) {
                return Err(invalid("an additive criterion needs a reduction at every stage"));
            }
            Criterion::Additive(AdditiveCriterion {
                reduction: red,
                stage_costs: stage_costs.iter().map(|c| costs(c)).collect::<Result<_, _>>()?,
                final_cost: costs(final_cost)?,
            })
        }
    };

    let problem = ProblemSpec::new(layout, kernels, criterion)?;
    let (two_scale, dhd) = match family {
        Family::Flat => (None, None),
        Family::TwoScale => {
            let c = file.two_scale.unwrap();
            (Some(TwoScaleProblem::new(TwoScaleClock::new(c.days, c.minutes), problem.clone())?), None)
        }
        Family::Dhd => (None, Some(DhdProblem::from_spec(problem.clone())?)),
    };
    Ok(Instance {
        family,
        problem,
        two_scale,
        dhd,
        noise: noise_spec,
        zero_mass,
        schedule,
        reduction,
        reduced_criterion,
    })
}

fn cost_values(c: &[Cost]) -> Vec<CostValue> {
    c.iter().map(|c| CostValue(c.get())).collect()
}

fn map_spec(m: &HistoryMap) -> Result<MapSpec, Failure> {
    Ok(match m {
        HistoryMap::Identity => MapSpec::Identity,
        HistoryMap::Constant => MapSpec::Constant,
        HistoryMap::LastUncertainty => MapSpec::LastUncertainty,
        HistoryMap::RunningSum { cap } => MapSpec::RunningSum { cap: *cap },
        HistoryMap::NoiseWindow { from } => MapSpec::NoiseWindow { from: *from },
        HistoryMap::DamStock(d) => MapSpec::DamStock {
            capacity: d.capacity,
            turbine: d.turbine.clone(),
        },
        HistoryMap::Table(t) => MapSpec::Table(t.clone()),
        HistoryMap::Custom(_) => return Err(invalid("custom maps cannot be written to a file")),
    })
}

fn dynamics_spec(f: &BlockDynamics) -> Result<DynamicsSpec, Failure> {
    Ok(match f {
        BlockDynamics::Concatenate => DynamicsSpec::Concatenate,
        BlockDynamics::Constant => DynamicsSpec::Constant,
        BlockDynamics::LastUncertainty => DynamicsSpec::LastUncertainty,
        BlockDynamics::RunningSum { cap } => DynamicsSpec::RunningSum { cap: *cap },
        BlockDynamics::DamStock(d) => DynamicsSpec::DamStock {
            capacity: d.capacity,
            turbine: d.turbine.clone(),
        },
        BlockDynamics::Table(t) => DynamicsSpec::Table(t.clone()),
        BlockDynamics::Custom(_) => return Err(invalid("custom dynamics cannot be written to a file")),
    })
}

fn reduction_section(r: &Reduction, reduced: Option<&[Cost]>) -> Result<ReductionSection, Failure> {
    Ok(ReductionSection {
        states: r.state_sizes().to_vec(),
        theta: r.thetas().iter().map(map_spec).collect::<Result<_, _>>()?,
        dynamics: r.all_dynamics().iter().map(dynamics_spec).collect::<Result<_, _>>()?,
        reduced_criterion: reduced.map(cost_values),
    })
}

/// Writes a problem back out. Flat and decision-hazard-decision layouts are
/// supported; a two-scale clock is added by the caller.
pub fn export(
    problem: &ProblemSpec,
    dhd: Option<&DhdProblem>,
    reduction: Option<(&Reduction, Option<&[Cost]>)>,
) -> Result<ProblemFile, Failure> {
    let layout = problem.layout();
    let horizon = layout.horizon();
    let (spaces, dhd_spaces) = match dhd {
        Some(d) => (
            None,
            Some(DhdSpaces {
                initial: d.initial_size(),
                head: (0..horizon).map(|s| d.head_size(s)).collect(),
                noise: (1..=horizon).map(|s| d.noise_size(s)).collect(),
                tail: (1..=horizon).map(|s| d.tail_size(s)).collect(),
            }),
        ),
        None => (
            Some(Spaces {
                controls: (0..horizon).map(|t| layout.control_size(t)).collect(),
                uncertainties: (0..=horizon).map(|t| layout.noise_size(t)).collect(),
            }),
            None,
        ),
    };
    let probs = |rows: &[Distribution]| rows.iter().map(|d| d.probs().to_vec()).collect::<Vec<_>>();
    let kernels = problem
        .kernels()
        .iter()
        .map(|k| {
            let repr = match k.repr() {
                CoreRepr::FullTable(r) => KernelRepr::FullTable(probs(r)),
                CoreRepr::WhiteNoise(d) => KernelRepr::WhiteNoise(d.probs().to_vec()),
                CoreRepr::Markov1(r) => KernelRepr::Markov1(probs(r)),
                CoreRepr::ReducedViaMap { key, rows } => KernelRepr::ReducedViaMap {
                    key: map_spec(key)?,
                    rows: probs(rows),
                },
            };
            Ok(KernelEntry { stage: k.stage(), repr })
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let (criterion, additive_reduction) = match problem.criterion() {
        Criterion::FullTable(c) => (CriterionSection::FullTable(cost_values(c)), None),
        Criterion::FinalState { map, costs } => (
            CriterionSection::FinalState {
                map: map_spec(map)?,
                costs: cost_values(costs),
            },
            None,
        ),
        Criterion::Additive(a) => (
            CriterionSection::Additive {
                stage_costs: a.stage_costs.iter().map(|c| cost_values(c)).collect(),
                final_cost: cost_values(&a.final_cost),
            },
            Some(&a.reduction),
        ),
    };
    let reduction = match (reduction, additive_reduction) {
        (Some((r, j)), _) => Some(reduction_section(r, j)?),
        (None, Some(r)) => Some(reduction_section(r, None)?),
        (None, None) => None,
    };
    Ok(ProblemFile {
        version: FORMAT_VERSION,
        spaces,
        dhd: dhd_spaces,
        two_scale: None,
        kernels: Some(kernels),
        noise_process: None,
        criterion,
        schedule: None,
        reduction,
    })
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Capacity { .. } => Failure::Capacity(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}
