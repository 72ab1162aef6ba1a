//! Command dispatch.

use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use serde_json::json;
use sha2::{Digest, Sha256};
use timeblocks::bellman::{brute_force_value, feedback_tree_count, solve_history_dp, solve_history_dp_with_policies};
use timeblocks::dhd::{embed_dhd, solve_dhd, solve_dhd_additive, solve_dhd_history, strip_spurious};
use timeblocks::history::History;
use timeblocks::kernels::KernelRepr;
use timeblocks::noise::{adapted_value_oracle, Visibility};
use timeblocks::problem::Criterion;
use timeblocks::reduction::{
    additive_lift, check_factorization, check_state_reduction, derive_reduced_kernels, reduced_criterion,
    solve_additive_dp, solve_reduced_dp, BlockSchedule, Reduction,
};
use timeblocks::two_timescale::solve_two_timescale;
use timeblocks::{Cost, Error, ProblemSpec, SolveOptions, ValueFunction};

use crate::build::{build, Family, Instance};
use crate::file::{parse_str, to_canonical, ProblemFile};
use crate::report::{delta, policy, table, Check, Report};
use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    SolveHistory,
    SolveReduced,
    #[value(name = "solve-2ts")]
    Solve2ts,
    SolveDhd,
    CheckReduction,
    Oracle,
    Report,
    /// Writes the problem file of a dam parameter file.
    BuildDam,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SolveHistory => "solve-history",
            Command::SolveReduced => "solve-reduced",
            Command::Solve2ts => "solve-2ts",
            Command::SolveDhd => "solve-dhd",
            Command::CheckReduction => "check-reduction",
            Command::Oracle => "oracle",
            Command::Report => "report",
            Command::BuildDam => "build-dam",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub full: bool,
    pub tolerance: f64,
    pub seed: Option<u64>,
    pub timing: bool,
    pub solve: SolveOptions,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            full: false,
            tolerance: 1e-9,
            seed: None,
            timing: false,
            solve: SolveOptions::default(),
        }
    }
}

/// Histories checked per stage by `oracle --seed`.
pub const ORACLE_SAMPLE: usize = 64;

pub fn digest(file: &ProblemFile) -> String {
    format!("sha256:{:x}", Sha256::digest(to_canonical(file).as_bytes()))
}

pub fn run(text: &str, command: Command, opts: &RunOptions) -> Result<Report, Failure> {
    let start = Instant::now();
    let file = parse_str(text).map_err(|e| Failure::Usage(e.to_string()))?;
    let inst = build(&file)?;
    let mut report = Report {
        command: command.name().into(),
        digest: digest(&file),
        family: inst.family.name(),
        horizon: inst.problem.horizon(),
        status: "pass",
        values: Vec::new(),
        policies: Vec::new(),
        verification: Vec::new(),
        counterexample: None,
        diagnostics: inst
            .zero_mass
            .iter()
            .map(|z| format!("uniform row at stage {} after zero-probability noise {:?}", z.stage, z.noise))
            .collect(),
        instance: None,
        wall_time_ms: None,
    };
    let outcome = match command {
        Command::SolveHistory => solve_history(&inst, opts, &mut report),
        Command::SolveReduced => solve_reduced(&inst, opts, &mut report),
        Command::Solve2ts => solve_2ts(&inst, opts, &mut report),
        Command::SolveDhd => solve_dhd_cmd(&inst, opts, &mut report),
        Command::CheckReduction => check_reduction(&inst, opts, &mut report),
        Command::Oracle => oracle(&inst, opts, &mut report),
        Command::Report => describe(&inst, &mut report),
        Command::BuildDam => Err(Failure::Usage("build-dam takes a dam parameter file".into())),
    };
    match outcome {
        Ok(()) => {}
        Err(Failure::Verification(why)) => {
            report.fail();
            report.counterexample = Some(why);
        }
        Err(other) => return Err(other),
    }
    if opts.timing {
        report.wall_time_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    }
    Ok(report)
}

/// Incompatibility and factorization failures are findings about the
/// instance, reported with their witness; other errors abort.
fn finding(e: Error) -> Failure {
    match e {
        Error::Incompatible(_) | Error::Factorization { .. } | Error::Independence { .. } => {
            Failure::Verification(e.to_string())
        }
        other => other.into(),
    }
}

fn need<'a, T>(v: Option<&'a T>, what: &str, command: &str) -> Result<&'a T, Failure> {
    v.ok_or_else(|| Failure::Usage(format!("{command} needs {what}")))
}

fn push_values(report: &mut Report, domain: &'static str, stages: &[usize], values: &[ValueFunction], full: bool) {
    for (&t, v) in stages.iter().zip(values) {
        report.values.push(table(t, domain, v.values(), full));
    }
}

fn solve_history(inst: &Instance, opts: &RunOptions, report: &mut Report) -> Result<(), Failure> {
    let sol = solve_history_dp_with_policies(&inst.problem, &opts.solve)?;
    let stages: Vec<usize> = (0..=inst.problem.horizon()).collect();
    push_values(report, "history", &stages, &sol.values, opts.full);
    for (t, tables) in sol.policies.iter().enumerate() {
        for tb in tables {
            report.policies.push(policy(t, tb.depth, &tb.controls, opts.full));
        }
    }
    Ok(())
}

fn final_reduced(inst: &Instance, schedule: &BlockSchedule, red: &Reduction, opts: &RunOptions) -> Result<Vec<Cost>, Failure> {
    if let Criterion::Additive(a) = inst.problem.criterion() {
        return Ok(a.final_cost.clone());
    }
    match &inst.reduced_criterion {
        Some(j) => Ok(j.clone()),
        None => {
            let last = schedule.block_count();
            reduced_criterion(&inst.problem, red.theta(last), red.state_size(last), &opts.solve).map_err(finding)
        }
    }
}

/// Compares lifted reduced values with the history DP at every boundary,
/// when the history DP fits in the budget.
fn lifting_check(
    inst: &Instance,
    schedule: &BlockSchedule,
    red: &Reduction,
    values: &[ValueFunction],
    opts: &RunOptions,
    report: &mut Report,
) -> Result<(), Failure> {
    let problem = &inst.problem;
    let tabulated;
    let direct_problem = if matches!(problem.criterion(), Criterion::Additive(_)) {
        tabulated = problem.tabulated();
        match &tabulated {
            Ok(p) => p,
            Err(Error::Capacity { .. }) => {
                report.diagnostics.push("lifting check skipped: history tables exceed the budget".into());
                return Ok(());
            }
            Err(e) => return Err(e.clone().into()),
        }
    } else {
        problem
    };
    let v = match solve_history_dp(direct_problem, &opts.solve) {
        Ok(v) => v,
        Err(Error::Capacity { .. }) => {
            report.diagnostics.push("lifting check skipped: history tables exceed the budget".into());
            return Ok(());
        }
        Err(e) => return Err(e.into()),
    };
    let layout = problem.layout();
    let additive = matches!(problem.criterion(), Criterion::Additive(_));
    let (mut worst, mut cases) = (0.0f64, 0);
    for (i, &t) in schedule.boundaries().iter().enumerate() {
        for (k, h) in layout.histories(t).enumerate() {
            let lifted = if additive {
                additive_lift(problem, h.entries(), values[i].values())?
            } else {
                values[i].value(red.theta(i).apply(layout, h.entries()))
            };
            worst = worst.max(delta(lifted, v[t].value(k)));
            cases += 1;
        }
    }
    report.check(Check::new("lifting", cases, worst, opts.tolerance));
    Ok(())
}

fn reduced_parts<'a>(inst: &'a Instance, command: &str) -> Result<(&'a BlockSchedule, &'a Reduction), Failure> {
    Ok((
        need(inst.schedule.as_ref(), "a schedule", command)?,
        need(inst.reduction.as_ref(), "a `reduction` section", command)?,
    ))
}

fn solve_reduced(inst: &Instance, opts: &RunOptions, report: &mut Report) -> Result<(), Failure> {
    if inst.family == Family::Dhd {
        return Err(Failure::Usage("solve-reduced works on flat layouts; use solve-dhd".into()));
    }
    let (schedule, red) = reduced_parts(inst, "solve-reduced")?;
    let sol = if matches!(inst.problem.criterion(), Criterion::Additive(_)) {
        solve_additive_dp(&inst.problem, &opts.solve).map_err(finding)?
    } else {
        let j = final_reduced(inst, schedule, red, opts)?;
        solve_reduced_dp(&inst.problem, schedule, red, &j, &opts.solve).map_err(finding)?
    };
    push_values(report, "reduced_state", schedule.boundaries(), &sol.values, opts.full);
    for (i, tables) in sol.policies.iter().enumerate() {
        if let Some(tb) = tables.iter().find(|tb| tb.depth == 0) {
            report.policies.push(policy(schedule.boundaries()[i], 0, &tb.controls, opts.full));
        }
    }
    lifting_check(inst, schedule, red, &sol.values, opts, report)
}

fn solve_2ts(inst: &Instance, opts: &RunOptions, report: &mut Report) -> Result<(), Failure> {
    let tsp = need(inst.two_scale.as_ref(), "a `two_scale` clock", "solve-2ts")?;
    let (schedule, red) = reduced_parts(inst, "solve-2ts")?;
    if schedule != &tsp.clock().schedule() {
        return Err(Failure::Usage("solve-2ts reduces at day starts only".into()));
    }
    let j = final_reduced(inst, schedule, red, opts)?;
    let sol = solve_two_timescale(tsp, red, &j, &opts.solve).map_err(finding)?;
    push_values(report, "reduced_state", schedule.boundaries(), &sol.values, opts.full);
    for (d, v) in sol.values.iter().enumerate().take(tsp.clock().days() + 1) {
        if let Some(a) = v.argmin() {
            report.policies.push(policy(schedule.boundaries()[d], 0, a, opts.full));
        }
    }
    lifting_check(inst, schedule, red, &sol.values, opts, report)
}

fn solve_dhd_cmd(inst: &Instance, opts: &RunOptions, report: &mut Report) -> Result<(), Failure> {
    let dhd = need(inst.dhd.as_ref(), "a `dhd` section", "solve-dhd")?;
    let stages: Vec<usize> = (0..=dhd.horizon()).collect();
    match &inst.reduction {
        None => {
            let sol = solve_dhd_history(dhd, &opts.solve)?;
            push_values(report, "history", &stages, &sol.values, opts.full);
            for (s, v) in sol.values.iter().enumerate().take(dhd.horizon()) {
                report.policies.push(policy(s, 0, v.argmin().unwrap_or(&[]), opts.full));
                report.policies.push(policy(s, 2, &sol.tail[s], opts.full));
            }
        }
        Some(red) => {
            let schedule = BlockSchedule::unit(dhd.horizon());
            let sol = if matches!(inst.problem.criterion(), Criterion::Additive(_)) {
                solve_dhd_additive(dhd, &opts.solve).map_err(finding)?
            } else {
                let j = final_reduced(inst, &schedule, red, opts)?;
                solve_dhd(dhd, red, &j, &opts.solve).map_err(finding)?
            };
            push_values(report, "reduced_state", &stages, &sol.values, opts.full);
            for (s, tables) in sol.policies.iter().enumerate() {
                for tb in tables {
                    report.policies.push(policy(s, tb.depth, &tb.controls, opts.full));
                }
            }
            lifting_check(inst, &schedule, red, &sol.values, opts, report)?;
        }
    }
    Ok(())
}

fn check_reduction(inst: &Instance, opts: &RunOptions, report: &mut Report) -> Result<(), Failure> {
    let (schedule, red) = reduced_parts(inst, "check-reduction")?;
    let p = &inst.problem;
    check_state_reduction(p, schedule, red, &opts.solve).map_err(finding)?;
    report.check(Check::new("dynamics_commute", schedule.block_count(), 0.0, 0.0));
    let kernels = derive_reduced_kernels(p, schedule, red, &opts.solve).map_err(finding)?;
    let rows: usize = kernels.blocks.iter().flatten().map(|k| k.rows.iter().flatten().count()).sum();
    report.check(Check::new("kernels_factor", rows, 0.0, 0.0));
    if !matches!(p.criterion(), Criterion::Additive(_)) {
        let j = final_reduced(inst, schedule, red, opts)?;
        let last = schedule.block_count();
        check_factorization(p, red.theta(last), &j, &opts.solve).map_err(finding)?;
        report.check(Check::new("criterion_factors", j.len(), 0.0, 0.0));
    }
    Ok(())
}

fn histories_to_check(p: &ProblemSpec, t: usize, seed: Option<u64>) -> Vec<History> {
    let layout = p.layout();
    let n = layout.count(t).unwrap_or(usize::MAX);
    match seed {
        Some(seed) if n > ORACLE_SAMPLE => {
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed ^ t as u64);
            let mut picks = sample(&mut rng, n, ORACLE_SAMPLE).into_vec();
            picks.sort_unstable();
            picks.into_iter().map(|i| layout.decode(t, i)).collect()
        }
        _ => layout.histories(t).collect(),
    }
}

fn oracle(inst: &Instance, opts: &RunOptions, report: &mut Report) -> Result<(), Failure> {
    if let Some(dhd) = &inst.dhd {
        let tsp = embed_dhd(dhd)?;
        let emb = solve_history_dp(tsp.problem(), &opts.solve)?;
        let direct = solve_dhd_history(dhd, &opts.solve)?;
        let el = tsp.problem().layout();
        let (mut worst, mut cases) = (0.0f64, 0);
        for s in 0..=dhd.horizon() {
            for (k, h) in el.histories(2 * s).enumerate() {
                let head = strip_spurious(h.entries());
                worst = worst.max(delta(emb[2 * s].value(k), direct.values[s].value(dhd.layout().index(&head))));
                cases += 1;
            }
        }
        report.check(Check::new("embedding", cases, worst, opts.tolerance));
        return brute_force_check(tsp.problem(), &emb, opts, report, "brute_force_embedded");
    }
    let v = solve_history_dp(&inst.problem, &opts.solve)?;
    brute_force_check(&inst.problem, &v, opts, report, "brute_force")?;
    if inst.noise.is_some() {
        let (mut worst, mut cases) = (0.0f64, 0);
        for (t, vt) in v.iter().enumerate() {
            for h in histories_to_check(&inst.problem, t, opts.seed) {
                let a = adapted_value_oracle(&inst.problem, h.entries(), Visibility::PastNoise, &opts.solve)?;
                worst = worst.max(delta(a, vt.value(inst.problem.layout().index_of(&h))));
                cases += 1;
            }
        }
        report.check(Check::new("adapted_controls", cases, worst, opts.tolerance));
    }
    Ok(())
}

fn brute_force_check(
    p: &ProblemSpec,
    v: &[ValueFunction],
    opts: &RunOptions,
    report: &mut Report,
    name: &str,
) -> Result<(), Failure> {
    let needed = feedback_tree_count(p.layout(), 0);
    if needed > opts.solve.enumeration_cap {
        return Err(Error::Capacity {
            what: "feedback enumeration",
            stage: Some(0),
            needed,
            limit: opts.solve.enumeration_cap,
        }
        .into());
    }
    let (mut worst, mut cases) = (0.0f64, 0);
    for (t, vt) in v.iter().enumerate() {
        for h in histories_to_check(p, t, opts.seed) {
            let b = brute_force_value(p, &h, &opts.solve)?;
            worst = worst.max(delta(b, vt.value(p.layout().index_of(&h))));
            cases += 1;
        }
    }
    report.check(Check::new(name, cases, worst, opts.tolerance));
    Ok(())
}

fn describe(inst: &Instance, report: &mut Report) -> Result<(), Failure> {
    let p = &inst.problem;
    let layout = p.layout();
    let kernels: Vec<_> = p
        .kernels()
        .iter()
        .map(|k| {
            let repr = match k.repr() {
                KernelRepr::FullTable(r) => format!("full_table ({} rows)", r.len()),
                KernelRepr::WhiteNoise(_) => "white_noise".to_string(),
                KernelRepr::Markov1(r) => format!("markov1 ({} rows)", r.len()),
                KernelRepr::ReducedViaMap { key, rows } => {
                    format!("reduced_via_map {} ({} rows)", key.name(), rows.len())
                }
            };
            json!({"stage": k.stage(), "repr": repr})
        })
        .collect();
    let criterion = match p.criterion() {
        Criterion::FullTable(_) => "full_table",
        Criterion::FinalState { .. } => "final_state",
        Criterion::Additive(_) => "additive",
    };
    report.instance = Some(json!({
        "histories": (0..=p.horizon()).map(|t| layout.count(t)).collect::<Vec<_>>(),
        "entry_sizes": layout.radices(),
        "kernels": kernels,
        "criterion": criterion,
        "schedule": inst.schedule.as_ref().map(|s| s.boundaries().to_vec()),
        "reduced_states": inst.reduction.as_ref().map(|r| r.state_sizes().to_vec()),
        "noise_process": inst.noise.is_some(),
    }));
    Ok(())
}
