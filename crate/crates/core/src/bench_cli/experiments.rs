use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::output::{Cell, Table};
use super::{
    default_m_exp1, default_m_exp2, default_m_for_length, random_state, timing_summary, Experiment,
    ExperimentConfig, Solver, SweepPoint,
};
use crate::baseline_integrators::{propagate_operator, propagate_state, reference_operator, StepperConfig};
use crate::convergence_analysis::{frobenius_power_bounds, spectral_norm, spectral_radius_small};
use crate::error::Result;
use crate::rz_model::{RZModel, C64};
use crate::star_solver::{discretize, solve_operator, solve_vector, SolveStats, SolverConfig};

pub fn run_experiment(config: &ExperimentConfig) -> Result<Table> {
    config.validate()?;
    match config.experiment {
        Experiment::Exp1 => run_exp1(config),
        Experiment::Exp2 => run_exp2(config),
        Experiment::Exp3 => run_exp3(config),
        Experiment::Exp4 => run_exp4(config),
        Experiment::Spectrum => run_spectrum(config),
    }
}

fn model_for(config: &ExperimentConfig, n: usize, tf: f64) -> Result<RZModel> {
    RZModel::preset(config.case, n)?.with_interval(config.t0, tf)
}

fn solver_config(config: &ExperimentConfig, tol: f64, trunc: f64) -> SolverConfig {
    SolverConfig { tol, trunc, max_iter: config.max_iter, formulation: config.formulation, ..SolverConfig::default() }
}

fn stepper(config: &ExperimentConfig, solver: Solver) -> StepperConfig {
    match solver {
        Solver::Dp54 => StepperConfig::dp54(config.tol, config.tol),
        _ => StepperConfig::rk4(config.rk4_steps),
    }
}

fn median_times(repeats: usize, mut f: impl FnMut() -> Result<f64>) -> Result<(f64, f64, f64)> {
    let mut ts = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        ts.push(f()?);
    }
    Ok(timing_summary(&ts))
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed().as_secs_f64()))
}

fn uniform_times(t0: f64, tf: f64, samples: usize) -> Vec<f64> {
    let s = samples.max(2);
    (0..s).map(|i| if i + 1 == s { tf } else { t0 + (tf - t0) * i as f64 / (s - 1) as f64 }).collect()
}

/// One `(case, N)` cell of the vector experiment.
#[derive(Debug, Clone)]
pub struct Exp1Cell {
    pub n: usize,
    pub m: usize,
    pub times: Vec<f64>,
    pub beta: Vec<C64>,
    pub errors: Vec<f64>,
    pub stats: Option<SolveStats>,
}

impl Exp1Cell {
    pub fn max_error(&self) -> f64 {
        self.errors.iter().fold(0.0, |a: f64, &e| a.max(e))
    }
}

/// `β(t) = ψ0ᴴ ψ(t)` on uniform samples, compared with a tight DP54 run.
pub fn exp1_cell(config: &ExperimentConfig, n: usize) -> Result<Exp1Cell> {
    let model = model_for(config, n, config.tf)?;
    let m = config.m.unwrap_or_else(|| default_m_exp1(config.case));
    let psi0 = random_state(n, config.seed);
    let times = uniform_times(config.t0, config.tf, config.samples);
    let oracle = propagate_state(&model, &psi0, &StepperConfig::dp54(config.oracle_tol, config.oracle_tol), &times)?;
    let (states, stats): (Vec<DVector<C64>>, Option<SolveStats>) = match config.solver {
        Solver::Star => {
            let disc = discretize(&model, m)?;
            let (sol, stats) = solve_vector(&disc, &psi0, &solver_config(config, config.tol, config.trunc))?;
            let states = times.iter().map(|&t| sol.evaluate_state(t)).collect::<Result<_>>()?;
            (states, Some(stats))
        }
        s => (propagate_state(&model, &psi0, &stepper(config, s), &times)?.states, None),
    };
    let beta: Vec<C64> = states.iter().map(|p| psi0.dotc(p)).collect();
    let errors = beta.iter().zip(&oracle.states).map(|(b, r)| (b - psi0.dotc(r)).norm()).collect();
    Ok(Exp1Cell { n, m, times, beta, errors, stats })
}

pub fn run_exp1(config: &ExperimentConfig) -> Result<Table> {
    let mut table = Table::new(&["n", "t", "re_beta", "im_beta", "abs_error"]);
    let cells: Vec<Result<Exp1Cell>> = if config.parallel {
        std::thread::scope(|s| {
            let hs: Vec<_> = config.n_list.iter().map(|&n| s.spawn(move || exp1_cell(config, n))).collect();
            hs.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        })
    } else {
        config.n_list.iter().map(|&n| exp1_cell(config, n)).collect()
    };
    for cell in cells {
        let cell = cell?;
        let key = format!("n={}", cell.n);
        table.note(format!("{key} m"), cell.m);
        table.note(format!("{key} max_error"), format!("{:.16e}", cell.max_error()));
        if let Some(st) = &cell.stats {
            table.note(format!("{key} iterations"), st.iterations);
            table.note(format!("{key} max_rank"), st.max_rank());
            table.note(format!("{key} converged"), st.converged);
            table.note(format!("{key} stagnated"), st.stagnated);
        }
        for ((t, b), e) in cell.times.iter().zip(&cell.beta).zip(&cell.errors) {
            table.push(vec![cell.n.into(), (*t).into(), b.re.into(), b.im.into(), (*e).into()]);
        }
    }
    Ok(table)
}

const EXP2_COLUMNS: [&str; 19] = [
    "n",
    "m",
    "disc_median",
    "disc_min",
    "disc_max",
    "solve_median",
    "solve_min",
    "solve_max",
    "star_median",
    "baseline_median",
    "baseline_min",
    "baseline_max",
    "star_error",
    "baseline_error",
    "iterations",
    "max_rank",
    "final_nnz",
    "converged",
    "status",
];

fn failed_row(columns: &[&str], lead: Vec<Cell>, err: &crate::Error) -> Vec<Cell> {
    let mut row = lead;
    while row.len() + 1 < columns.len() {
        row.push(Cell::Float(f64::NAN));
    }
    row.push(Cell::Str(format!("error: {err}")));
    row
}

/// Operator solve at `tf` for one model, timed over the configured repeats.
struct OperatorTiming {
    disc: (f64, f64, f64),
    solve: (f64, f64, f64),
    star_total: f64,
    error: f64,
    stats: SolveStats,
    quad_points: usize,
}

fn time_operator(config: &ExperimentConfig, model: &RZModel, m: usize, reference: &DMatrix<C64>) -> Result<OperatorTiming> {
    let scfg = solver_config(config, config.tol, config.trunc);
    let mut disc_t = Vec::new();
    let mut solve_t = Vec::new();
    let mut totals = Vec::new();
    let mut last = None;
    for _ in 0..config.repeats {
        let (disc, td) = timed(|| discretize(model, m))?;
        let ((sol, stats), ts) = timed(|| solve_operator(&disc, &scfg))?;
        disc_t.push(td);
        solve_t.push(ts);
        totals.push(td + ts);
        last = Some((sol, stats, disc.quad_points));
    }
    let (sol, stats, quad_points) = last.expect("repeats >= 1");
    let u = sol.evaluate_operator_full(model.tf)?;
    Ok(OperatorTiming {
        disc: timing_summary(&disc_t),
        solve: timing_summary(&solve_t),
        star_total: timing_summary(&totals).0,
        error: spectral_norm(&(u - reference)),
        stats,
        quad_points,
    })
}

fn exp2_row(config: &ExperimentConfig, n: usize, m: usize) -> Result<Vec<Cell>> {
    let model = model_for(config, n, config.tf)?;
    let reference = reference_operator(&model, config.oracle_tol)?;
    let star = time_operator(config, &model, m, &reference)?;
    let (bt, berr) = match config.baseline {
        Some(b) => {
            let cfg = stepper(config, b);
            let mut u = None;
            let bt = median_times(config.repeats, || {
                let (v, t) = timed(|| propagate_operator(&model, &cfg))?;
                u = Some(v);
                Ok(t)
            })?;
            (bt, spectral_norm(&(u.expect("repeats >= 1") - &reference)))
        }
        None => ((f64::NAN, f64::NAN, f64::NAN), f64::NAN),
    };
    let st = &star.stats;
    Ok(vec![
        n.into(),
        m.into(),
        star.disc.0.into(),
        star.disc.1.into(),
        star.disc.2.into(),
        star.solve.0.into(),
        star.solve.1.into(),
        star.solve.2.into(),
        star.star_total.into(),
        bt.0.into(),
        bt.1.into(),
        bt.2.into(),
        star.error.into(),
        berr.into(),
        st.iterations.into(),
        st.max_rank().into(),
        st.nnz.last().copied().unwrap_or(st.initial_nnz).into(),
        st.converged.into(),
        "ok".into(),
    ])
}

/// Operator solve across `N`: discretization and iteration timed
/// separately, error in the spectral norm at `tf`.
pub fn run_exp2(config: &ExperimentConfig) -> Result<Table> {
    let m = config.m.unwrap_or_else(|| default_m_exp2(config.case));
    let mut table = Table::new(&EXP2_COLUMNS);
    if let Some(b) = config.baseline {
        table.note("baseline", b);
    }
    for &n in &config.n_list {
        match exp2_row(config, n, m) {
            Ok(row) => table.push(row),
            Err(e) => table.push(failed_row(&EXP2_COLUMNS, vec![n.into(), m.into()], &e)),
        }
    }
    Ok(table)
}

const EXP3_COLUMNS: [&str; 14] = [
    "method",
    "n",
    "m",
    "tol",
    "trunc",
    "steps",
    "time_median",
    "time_min",
    "time_max",
    "error",
    "iterations",
    "max_rank",
    "stagnated",
    "floor",
];

pub fn default_sweep(m: usize) -> Vec<SweepPoint> {
    [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8].iter().map(|&trunc| SweepPoint { m, tol: trunc / 10.0, trunc }).collect()
}

/// Work-precision data. `floor` marks a setting whose error did not improve
/// on the previous, looser one. With a baseline, RK4 rows follow for a
/// doubling step count (`steps` column).
pub fn run_exp3(config: &ExperimentConfig) -> Result<Table> {
    let m0 = config.m.unwrap_or_else(|| default_m_exp2(config.case));
    let sweep = config.sweep.clone().unwrap_or_else(|| default_sweep(m0));
    let mut table = Table::new(&EXP3_COLUMNS);
    if sweep.is_empty() {
        return Ok(table);
    }
    for &n in &config.n_list {
        let model = model_for(config, n, config.tf)?;
        let reference = reference_operator(&model, config.oracle_tol)?;
        let mut best = f64::INFINITY;
        for p in &sweep {
            let scfg = solver_config(config, p.tol, p.trunc);
            let lead: Vec<Cell> = vec!["star".into(), n.into(), p.m.into(), p.tol.into(), p.trunc.into(), 0usize.into()];
            let mut err = f64::NAN;
            let mut stats = SolveStats::default();
            let times = median_times(config.repeats, || {
                let start = Instant::now();
                let disc = discretize(&model, p.m)?;
                let (sol, st) = solve_operator(&disc, &scfg)?;
                let t = start.elapsed().as_secs_f64();
                err = spectral_norm(&(sol.evaluate_operator_full(model.tf)? - &reference));
                stats = st;
                Ok(t)
            });
            match times {
                Ok((med, lo, hi)) => {
                    let floor = !(err < best);
                    best = best.min(err);
                    let mut row = lead;
                    row.extend([
                        med.into(),
                        lo.into(),
                        hi.into(),
                        err.into(),
                        stats.iterations.into(),
                        stats.max_rank().into(),
                        stats.stagnated.into(),
                        floor.into(),
                    ]);
                    table.push(row);
                }
                Err(e) => table.push(failed_row(&EXP3_COLUMNS, lead, &e)),
            }
        }
        if config.baseline.is_none() {
            continue;
        }
        let mut best = f64::INFINITY;
        for steps in (0..4).map(|j| config.rk4_steps << j) {
            let cfg = StepperConfig::rk4(steps);
            let lead: Vec<Cell> = vec!["rk4".into(), n.into(), 0usize.into(), f64::NAN.into(), f64::NAN.into(), steps.into()];
            let mut u = None;
            let times = median_times(config.repeats, || {
                let (v, t) = timed(|| propagate_operator(&model, &cfg))?;
                u = Some(v);
                Ok(t)
            });
            match (times, u) {
                (Ok((med, lo, hi)), Some(u)) => {
                    let err = spectral_norm(&(u - &reference));
                    let floor = !(err < best);
                    best = best.min(err);
                    let mut row = lead;
                    row.extend([
                        med.into(),
                        lo.into(),
                        hi.into(),
                        err.into(),
                        0usize.into(),
                        0usize.into(),
                        false.into(),
                        floor.into(),
                    ]);
                    table.push(row);
                }
                (Err(e), _) => table.push(failed_row(&EXP3_COLUMNS, lead, &e)),
                (Ok(_), None) => unreachable!("repeats >= 1"),
            }
        }
    }
    Ok(table)
}

const EXP4_COLUMNS: [&str; 16] = [
    "n",
    "length",
    "tf",
    "m",
    "quad_points",
    "disc_median",
    "disc_min",
    "disc_max",
    "solve_median",
    "solve_min",
    "solve_max",
    "error",
    "iterations",
    "max_rank",
    "converged",
    "status",
];

/// Operator solve on growing intervals `[t0, t0 + L]`.
pub fn run_exp4(config: &ExperimentConfig) -> Result<Table> {
    let mut table = Table::new(&EXP4_COLUMNS);
    for &n in &config.n_list {
        for &length in &config.lengths {
            let tf = config.t0 + length;
            let m = config.m.unwrap_or_else(|| default_m_for_length(config.case, length));
            let row = (|| -> Result<Vec<Cell>> {
                let model = model_for(config, n, tf)?;
                let reference = reference_operator(&model, config.oracle_tol)?;
                let r = time_operator(config, &model, m, &reference)?;
                Ok(vec![
                    n.into(),
                    length.into(),
                    tf.into(),
                    m.into(),
                    r.quad_points.into(),
                    r.disc.0.into(),
                    r.disc.1.into(),
                    r.disc.2.into(),
                    r.solve.0.into(),
                    r.solve.1.into(),
                    r.solve.2.into(),
                    r.error.into(),
                    r.stats.iterations.into(),
                    r.stats.max_rank().into(),
                    r.stats.converged.into(),
                    "ok".into(),
                ])
            })();
            match row {
                Ok(r) => table.push(r),
                Err(e) => table.push(failed_row(&EXP4_COLUMNS, vec![n.into(), length.into(), tf.into(), m.into()], &e)),
            }
        }
    }
    Ok(table)
}

fn spectrum_rows(config: &ExperimentConfig, n: usize) -> Result<Vec<Vec<Cell>>> {
    let model = model_for(config, n, config.tf)?;
    let m = config.m.unwrap_or_else(|| default_m_exp2(config.case));
    let disc = discretize(&model, m)?;
    let case = config.case.label();
    let mut rows = Vec::new();
    let bounds = frobenius_power_bounds(&disc, &config.ells)?;
    for (&ell, &b) in config.ells.iter().zip(&bounds) {
        rows.push(vec![case.into(), n.into(), m.into(), "bound".into(), ell.into(), b.into(), "ok".into()]);
    }
    let radius = match spectral_radius_small(&disc) {
        Ok(r) if r.converged => vec![Cell::Float(r.value), "ok".into()],
        Ok(_) => vec![Cell::Float(f64::NAN), "not_converged".into()],
        Err(_) => vec![Cell::Float(f64::NAN), "budget_exceeded".into()],
    };
    let mut row: Vec<Cell> = vec![case.into(), n.into(), m.into(), "radius".into(), 0usize.into()];
    row.extend(radius);
    rows.push(row);
    Ok(rows)
}

/// Frobenius power bounds `‖A^ℓ‖_F^{1/ℓ}` and, within budget, `ρ(A)`.
pub fn run_spectrum(config: &ExperimentConfig) -> Result<Table> {
    let mut table = Table::new(&["case", "n", "m", "quantity", "ell", "value", "status"]);
    let cells: Vec<Result<Vec<Vec<Cell>>>> = if config.parallel {
        std::thread::scope(|s| {
            let hs: Vec<_> = config.n_list.iter().map(|&n| s.spawn(move || spectrum_rows(config, n))).collect();
            hs.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        })
    } else {
        config.n_list.iter().map(|&n| spectrum_rows(config, n)).collect()
    };
    for rows in cells {
        for r in rows? {
            table.push(r);
        }
    }
    Ok(table)
}
