//! One function per subcommand. Each writes its tables into the output
//! directory and returns how the run ended.

use std::path::{Path, PathBuf};

use hele_shaw_core::dynamics::{evolve, FlowSign, Termination, Trajectory};
use hele_shaw_core::moments::{area_moment, conservation_report, moments_exact, moments_quadrature, Resolution};
use hele_shaw_core::perturbation::{
    co_evolve, compare_trajectories, suction_survival, truncation_cascade, uniform_schedule, PerturbationError,
    PerturbationSpec,
};
use hele_shaw_core::rescaling::{decay_fit, first_starlike};
use hele_shaw_core::series::CoefficientSeries;
use hele_shaw_core::Complex64;
use serde::Serialize;

use crate::config::{Experiment, RunConfig, Schedule};
use crate::error::{exit, CliError};
use crate::output::{ensure_dir, num, out_path, write_json, Table};

/// How a run that produced output ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Success,
    /// Stopped early by blow-up, exhaustion or loss of univalence.
    Stopped,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Success => exit::SUCCESS,
            Status::Stopped => exit::STOPPED,
        }
    }
}

fn pairs(f: &CoefficientSeries) -> Vec<[f64; 2]> {
    f.coeffs().iter().map(|c| [c.re, c.im]).collect()
}

fn status_of(term: &Termination) -> Result<Status, CliError> {
    match term {
        Termination::Completed => Ok(Status::Success),
        t if t.is_failure() => Err(CliError::Numerical(format!("integration stopped: {t:?}"))),
        _ => Ok(Status::Stopped),
    }
}

fn describe(term: &Termination) -> String {
    match term {
        Termination::Completed => "completed".to_string(),
        Termination::Blowup(b) => b.to_string(),
        Termination::Exhausted { t, m0 } => format!("fluid exhausted at t = {t} (M0 = {m0})"),
        Termination::UnivalenceLost { t, .. } => format!("boundary lost univalence at t = {t}"),
        Termination::StepUnderflow { t, h, cause } => format!("step underflow at t = {t}, h = {h}: {cause}"),
        Termination::MaxSteps { t } => format!("step budget exhausted at t = {t}"),
    }
}

fn run_evolve(cfg: &RunConfig) -> Result<(CoefficientSeries, FlowSign, Trajectory), CliError> {
    let f0 = cfg.initial_map()?;
    let sign = cfg.flow_sign()?;
    let tr = evolve(&f0, sign, cfg.t_end, &cfg.evolve_options())?;
    Ok((f0, sign, tr))
}

fn moment_columns(k: usize) -> Vec<String> {
    let mut h = vec!["M0".to_string()];
    for j in 1..=k {
        h.push(format!("M{j}_re"));
        h.push(format!("M{j}_im"));
    }
    h
}

fn push_complex(row: &mut Vec<String>, values: &[Complex64]) {
    for v in values {
        row.push(num(v.re));
        row.push(num(v.im));
    }
}

/// `t, a1_re, a1_im, …, M0, M1_re, M1_im, …, min_fprime, pg_residual, step_size`.
pub fn trajectory_table(tr: &Trajectory, k: usize) -> Table {
    let n = tr.states.iter().map(|s| s.coeffs().len()).max().unwrap_or(1);
    let mut header = vec!["t".to_string()];
    for i in 1..=n {
        header.push(format!("a{i}_re"));
        header.push(format!("a{i}_im"));
    }
    header.extend(moment_columns(k));
    header.extend(["min_fprime", "pg_residual", "step_size"].map(String::from));
    let mut table = Table::new(header);
    for ((t, s), d) in tr.times.iter().zip(&tr.states).zip(&tr.diagnostics) {
        let mut row = vec![num(*t)];
        push_complex(&mut row, &s.padded(n));
        let m = moments_exact(s, k);
        row.push(num(m.m0()));
        push_complex(&mut row, &m.values[1..]);
        row.extend([num(d.min_fprime), num(d.pg_residual), num(d.step_size)]);
        table.push(row);
    }
    table
}

#[derive(Serialize)]
struct Residuals {
    max_degree_residual: f64,
    max_pg_residual: f64,
    min_fprime: f64,
    max_gauge_drift: f64,
}

#[derive(Serialize)]
struct Conservation {
    order: usize,
    max_area_delta: f64,
    max_deltas: Vec<f64>,
    n0: Option<usize>,
}

#[derive(Serialize)]
struct EvolveSummary<'a> {
    experiment: Experiment,
    sign: FlowSign,
    t_end: f64,
    final_time: f64,
    final_state: Vec<[f64; 2]>,
    termination: &'a Termination,
    conservation: Conservation,
    residuals: Residuals,
    accepted_steps: usize,
    rejected_steps: usize,
}

fn evolve_summary<'a>(cfg: &RunConfig, experiment: Experiment, tr: &'a Trajectory) -> Result<EvolveSummary<'a>, CliError> {
    let rep = conservation_report(tr, cfg.moment_order).map_err(|e| CliError::Numerical(e.to_string()))?;
    Ok(EvolveSummary {
        experiment,
        sign: tr.sign,
        t_end: cfg.t_end,
        final_time: tr.final_time(),
        final_state: pairs(tr.final_state()),
        termination: &tr.termination,
        conservation: Conservation {
            order: rep.order,
            max_area_delta: rep.max_area_delta,
            max_deltas: rep.max_deltas,
            n0: rep.n0,
        },
        residuals: Residuals {
            max_degree_residual: tr.stats.max_degree_residual,
            max_pg_residual: tr.stats.max_pg_residual,
            min_fprime: tr.stats.min_fprime,
            max_gauge_drift: tr.stats.max_gauge_drift,
        },
        accepted_steps: tr.stats.accepted,
        rejected_steps: tr.stats.rejected,
    })
}

fn announce(path: &Path) {
    println!("wrote {}", path.display());
}

pub fn cmd_evolve(cfg: &RunConfig) -> Result<Status, CliError> {
    cfg.check_experiment(Experiment::Evolve)?;
    let (_, _, tr) = run_evolve(cfg)?;
    ensure_dir(&cfg.out_dir)?;
    let csv = out_path(&cfg.out_dir, "trajectory.csv");
    trajectory_table(&tr, cfg.moment_order).write(&csv)?;
    let json = out_path(&cfg.out_dir, "summary.json");
    write_json(&json, &evolve_summary(cfg, Experiment::Evolve, &tr)?)?;
    announce(&csv);
    announce(&json);
    println!("{} at t = {}", describe(&tr.termination), tr.final_time());
    status_of(&tr.termination)
}

#[derive(Serialize)]
struct QuadratureCheck {
    seed: u64,
    t: f64,
    max_gap: f64,
}

#[derive(Serialize)]
struct MomentsSummary<'a> {
    #[serde(flatten)]
    run: EvolveSummary<'a>,
    quadrature_check: QuadratureCheck,
}

pub fn cmd_moments(cfg: &RunConfig) -> Result<Status, CliError> {
    cfg.check_experiment(Experiment::Moments)?;
    let (_, _, tr) = run_evolve(cfg)?;
    let k = cfg.moment_order;
    let rep = conservation_report(&tr, k).map_err(|e| CliError::Numerical(e.to_string()))?;
    let mut header = vec!["t".to_string()];
    header.extend(moment_columns(k));
    header.push("dM0".to_string());
    header.extend((1..=k).map(|j| format!("dM{j}")));
    let mut table = Table::new(header);
    for r in &rep.rows {
        let mut row = vec![num(r.t), num(r.values[0].re)];
        push_complex(&mut row, &r.values[1..]);
        row.push(num(r.area_delta));
        row.extend(r.deltas.iter().map(|d| num(*d)));
        table.push(row);
    }

    let last = tr.final_state();
    let exact = moments_exact(last, k);
    let quad = moments_quadrature(last, k, Resolution::default(), cfg.seed)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let max_gap = (0..=k).map(|j| (exact.get(j) - quad.get(j)).norm()).fold(0.0, f64::max);

    ensure_dir(&cfg.out_dir)?;
    let csv = out_path(&cfg.out_dir, "moments.csv");
    table.write(&csv)?;
    let json = out_path(&cfg.out_dir, "summary.json");
    write_json(
        &json,
        &MomentsSummary {
            run: evolve_summary(cfg, Experiment::Moments, &tr)?,
            quadrature_check: QuadratureCheck {
                seed: cfg.seed,
                t: tr.final_time(),
                max_gap,
            },
        },
    )?;
    announce(&csv);
    announce(&json);
    println!("{} at t = {}", describe(&tr.termination), tr.final_time());
    status_of(&tr.termination)
}

#[derive(Serialize)]
struct DecaySummary<'a> {
    #[serde(flatten)]
    run: EvolveSummary<'a>,
    window: [f64; 2],
    lambda: Option<f64>,
    exact_zero: bool,
    first_starlike: Option<f64>,
}

pub fn cmd_decay(cfg: &RunConfig) -> Result<Status, CliError> {
    cfg.check_experiment(Experiment::Decay)?;
    let (f0, _, tr) = run_evolve(cfg)?;
    let fit = decay_fit(&tr, area_moment(&f0), cfg.decay.window)?;
    let mut table = Table::new(
        ["t", "sup_rbar", "sup_d1", "sup_d2", "max_kappa_dev", "area_check"]
            .map(String::from)
            .to_vec(),
    );
    for r in &fit.rows {
        table.push(vec![
            num(r.t),
            num(r.sup_rbar),
            num(r.sup_d1),
            num(r.sup_d2),
            num(r.max_kappa_dev),
            num(r.area_check),
        ]);
    }
    ensure_dir(&cfg.out_dir)?;
    let csv = out_path(&cfg.out_dir, "decay.csv");
    table.write(&csv)?;
    let json = out_path(&cfg.out_dir, "summary.json");
    write_json(
        &json,
        &DecaySummary {
            run: evolve_summary(cfg, Experiment::Decay, &tr)?,
            window: cfg.decay.window,
            lambda: fit.lambda,
            exact_zero: fit.exact_zero,
            first_starlike: first_starlike(&tr),
        },
    )?;
    announce(&csv);
    announce(&json);
    match fit.lambda {
        Some(l) => println!("decay exponent {l}"),
        None => println!("rescaled boundary is a circle throughout"),
    }
    status_of(&tr.termination)
}

#[derive(Serialize)]
struct SweepRow {
    delta: f64,
    detected: bool,
    t_star: f64,
    remaining_fraction: f64,
    compared_until: f64,
    sup_deviation: Vec<f64>,
}

pub fn cmd_suction_sweep(cfg: &RunConfig) -> Result<Status, CliError> {
    cfg.check_experiment(Experiment::Suction)?;
    let s = &cfg.suction;
    let opts = cfg.evolve_options();
    let template = cfg.template();
    let rows = suction_survival(&s.deltas, &template, s.t_max, &opts)?;

    let mut header = ["delta", "t_star", "remaining_fraction"].map(String::from).to_vec();
    header.extend((0..=s.jmax).map(|n| format!("sup_dev_n{n}")));
    let mut table = Table::new(header);
    let mut summary = Vec::new();
    for r in &rows {
        let until = s.compare_fraction * r.t_star;
        let tail = template.scale(Complex64::new(r.delta, 0.0));
        let spec = PerturbationSpec::new(CoefficientSeries::disk(1.0), tail, cfg.perturb.rho, cfg.perturb.k)?;
        let dev = match co_evolve(&spec, FlowSign::Suction, &uniform_schedule(until, 100), &opts) {
            Ok((a, b)) => compare_trajectories(&a, &b, s.radius, s.jmax)?.sup_deviation,
            Err(PerturbationError::Incomplete { .. }) => vec![f64::NAN; s.jmax + 1],
            Err(e) => return Err(e.into()),
        };
        let mut row = vec![num(r.delta), num(r.t_star), num(r.remaining_fraction)];
        row.extend(dev.iter().map(|d| num(*d)));
        table.push(row);
        summary.push(SweepRow {
            delta: r.delta,
            detected: r.detected,
            t_star: r.t_star,
            remaining_fraction: r.remaining_fraction,
            compared_until: until,
            sup_deviation: dev,
        });
    }
    ensure_dir(&cfg.out_dir)?;
    let csv = out_path(&cfg.out_dir, "sweep.csv");
    table.write(&csv)?;
    let json = out_path(&cfg.out_dir, "summary.json");
    write_json(&json, &summary)?;
    announce(&csv);
    announce(&json);
    Ok(Status::Success)
}

#[derive(Serialize)]
struct PerturbSummary {
    norm: f64,
    rho: f64,
    k: u32,
    radius: f64,
    t_end: f64,
    sup_deviation: Vec<f64>,
    /// `sup_deviation[n] / norm`.
    relative: Vec<f64>,
}

fn explicit_schedule(cfg: &RunConfig) -> Vec<f64> {
    match cfg.schedule {
        Schedule::EveryStep => uniform_schedule(cfg.t_end, 100),
        _ => match cfg.snapshots() {
            hele_shaw_core::dynamics::Snapshots::Times(t) => {
                let mut t = t;
                if t.first() != Some(&0.0) {
                    t.insert(0, 0.0);
                }
                t
            }
            _ => uniform_schedule(cfg.t_end, 100),
        },
    }
}

pub fn cmd_perturb(cfg: &RunConfig) -> Result<Status, CliError> {
    cfg.check_experiment(Experiment::Perturb)?;
    let p = &cfg.perturb;
    let spec = PerturbationSpec::new(cfg.initial_map()?, cfg.tail(), p.rho, p.k)?;
    let sign = cfg.flow_sign()?;
    let (a, b) = match co_evolve(&spec, sign, &explicit_schedule(cfg), &cfg.evolve_options()) {
        Ok(pair) => pair,
        Err(PerturbationError::Incomplete { which, t, termination, .. }) if !termination.is_failure() => {
            println!("{which} run: {} at t = {t}", describe(&termination));
            return Ok(Status::Stopped);
        }
        Err(e) => return Err(e.into()),
    };
    let tab = compare_trajectories(&a, &b, p.radius, p.jmax)?;
    let mut header = vec!["t".to_string()];
    header.extend((0..=p.jmax).map(|n| format!("dev_n{n}")));
    let mut table = Table::new(header);
    for (t, row) in tab.times.iter().zip(&tab.rows) {
        let mut r = vec![num(*t)];
        r.extend(row.iter().map(|d| num(*d)));
        table.push(r);
    }
    let norm = spec.norm_value();
    ensure_dir(&cfg.out_dir)?;
    let csv = out_path(&cfg.out_dir, "perturb.csv");
    table.write(&csv)?;
    let json = out_path(&cfg.out_dir, "summary.json");
    write_json(
        &json,
        &PerturbSummary {
            norm,
            rho: p.rho,
            k: p.k,
            radius: p.radius,
            t_end: cfg.t_end,
            relative: tab.sup_deviation.iter().map(|d| d / norm).collect(),
            sup_deviation: tab.sup_deviation.clone(),
        },
    )?;
    announce(&csv);
    announce(&json);
    Ok(Status::Success)
}

pub fn cmd_cascade(cfg: &RunConfig) -> Result<Status, CliError> {
    cfg.check_experiment(Experiment::Cascade)?;
    let c = &cfg.cascade;
    let rep = truncation_cascade(
        &cfg.initial_map()?,
        &c.degrees,
        cfg.flow_sign()?,
        cfg.t_end,
        c.radius,
        c.intervals,
        &cfg.evolve_options(),
    )?;
    let mut table = Table::new(
        ["degree", "next_degree", "deviation", "ratio", "final_gap"]
            .map(String::from)
            .to_vec(),
    );
    for (i, e) in rep.deviations.iter().enumerate() {
        let ratio = if i == 0 { String::new() } else { num(rep.ratios[i - 1]) };
        table.push(vec![
            c.degrees[i].to_string(),
            c.degrees[i + 1].to_string(),
            num(*e),
            ratio,
            num(rep.final_gaps[i]),
        ]);
    }
    ensure_dir(&cfg.out_dir)?;
    let csv = out_path(&cfg.out_dir, "cascade.csv");
    table.write(&csv)?;
    let json = out_path(&cfg.out_dir, "summary.json");
    write_json(&json, &rep)?;
    announce(&csv);
    announce(&json);
    if rep.failures.is_empty() {
        Ok(Status::Success)
    } else {
        for (d, t) in &rep.failures {
            println!("degree {d}: {}", describe(t));
        }
        Ok(Status::Stopped)
    }
}

fn is_decay_table(t: &Table) -> bool {
    ["t", "sup_rbar", "sup_d1", "sup_d2"].iter().all(|c| t.column(c).is_some())
}

fn parse_cell(table: &Path, cell: &str) -> Result<f64, CliError> {
    cell.parse().map_err(|_| CliError::Table {
        path: table.to_path_buf(),
        message: format!("`{cell}` is not a number"),
    })
}

fn decay_report(path: &Path, t: &Table) -> Result<Table, CliError> {
    let cols = ["t", "sup_rbar", "sup_d1", "sup_d2"].map(|c| t.column(c).expect("checked"));
    let mut out = Table::new(["t", "sup_c2", "t^1.2*sup_c2"].map(String::from).to_vec());
    for row in &t.rows {
        let v: Vec<f64> = cols.iter().map(|&i| parse_cell(path, &row[i])).collect::<Result<_, _>>()?;
        let c2 = v[1].max(v[2]).max(v[3]);
        out.push(vec![row[cols[0]].clone(), num(c2), num(v[0].powf(1.2) * c2)]);
    }
    Ok(out)
}

fn comparison(inputs: &[PathBuf], tables: &[Table], column: Option<&str>) -> Result<Table, CliError> {
    let first = &tables[0];
    let name = match column {
        Some(c) => c.to_string(),
        None => first
            .header
            .iter()
            .find(|h| h.as_str() != "t")
            .cloned()
            .ok_or_else(|| CliError::Input(format!("{} has no data column", inputs[0].display())))?,
    };
    let mut idx = Vec::new();
    for (p, t) in inputs.iter().zip(tables) {
        let (Some(ti), Some(ci)) = (t.column("t"), t.column(&name)) else {
            return Err(CliError::Input(format!("{} lacks column `t` or `{name}`", p.display())));
        };
        idx.push((ti, ci));
    }
    let times: Vec<&String> = first.rows.iter().map(|r| &r[idx[0].0]).collect();
    for (k, t) in tables.iter().enumerate().skip(1) {
        let other: Vec<&String> = t.rows.iter().map(|r| &r[idx[k].0]).collect();
        if other != times {
            return Err(CliError::Input(format!(
                "{} and {} do not share a snapshot schedule",
                inputs[0].display(),
                inputs[k].display()
            )));
        }
    }
    let mut header = vec!["t".to_string()];
    header.extend((1..=tables.len()).map(|k| format!("{name}_{k}")));
    let mut out = Table::new(header);
    for (i, t) in times.iter().enumerate() {
        let mut row = vec![(*t).clone()];
        row.extend(tables.iter().zip(&idx).map(|(tab, &(_, ci))| tab.rows[i][ci].clone()));
        out.push(row);
    }
    Ok(out)
}

/// Merges earlier outputs without recomputing anything.
///
/// One trajectory-like table is copied verbatim; one decay table becomes
/// `t, sup_c2, t^1.2·sup_c2`; several tables on the same schedule become a
/// side-by-side comparison of one column.
pub fn cmd_report(inputs: &[PathBuf], column: Option<&str>, out_dir: &Path) -> Result<Status, CliError> {
    if inputs.is_empty() {
        return Err(CliError::Input("report needs at least one input table".into()));
    }
    let tables: Vec<Table> = inputs.iter().map(|p| Table::read(p)).collect::<Result<_, _>>()?;
    ensure_dir(out_dir)?;
    let dest = out_path(out_dir, "report.csv");
    if tables.len() == 1 && column.is_none() {
        if is_decay_table(&tables[0]) {
            decay_report(&inputs[0], &tables[0])?.write(&dest)?;
        } else {
            std::fs::copy(&inputs[0], &dest).map_err(|source| CliError::Write {
                path: dest.clone(),
                source,
            })?;
        }
    } else {
        comparison(inputs, &tables, column)?.write(&dest)?;
    }
    announce(&dest);
    Ok(Status::Success)
}
