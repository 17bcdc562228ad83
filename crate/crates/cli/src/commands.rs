//! The five experiment commands. Every command writes plot-ready CSV files
//! and a `config.echo.toml` holding the effective configuration; JSON
//! summaries keep their non-reproducible fields under `run_info`.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use risklab::baselines::gap::default_theta_radius;
use risklab::baselines::{
    check_bump_lemma, grad_gap_estimate, krr_fit, mc_excess_risk, sample_theta_ball, select_ridge,
    BumpCheck, BumpSpec, GapRow, KernelSpec,
};
use risklab::gradcheck::{
    check_expected_grad, check_pair_gradient, check_phase1_grad, check_phase2_grad, GradCheckReport,
};
use risklab::rng::{stream_rng, stream_rng_raw, Stream};
use risklab::{match_neurons, run_two_phase, Dataset, NeuronMatching, TeacherParams, TwoPhaseRun};
use serde::Serialize;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::plot::{fmt_f64, PlotTable};
use crate::ratefit::{median, RateFit};

pub const THREADS_ENV: &str = "RISKLAB_THREADS";
pub const ECHO_FILE: &str = "config.echo.toml";

/// What a command produced and whether its checks passed.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub passed: bool,
    pub files: Vec<PathBuf>,
    pub lines: Vec<String>,
}

/// Worker pool sized by `RISKLAB_THREADS` (default: all cores).
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|t| *t >= 1)
            .ok_or_else(|| {
                CliError::Invalid(format!(
                    "{THREADS_ENV} must be a positive integer, got {v:?}"
                ))
            })?,
        Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Invalid(e.to_string()))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a seed from a run seed and cell coordinates.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x243f_6a88_85a3_08d3, |h, &p| splitmix(h ^ p))
}

fn prepare(out: &Path, cfg: &ExperimentConfig, seed: u64) -> Result<PathBuf> {
    std::fs::create_dir_all(out)?;
    let echo = ExperimentConfig {
        seed,
        output_dir: out.to_path_buf(),
        ..cfg.clone()
    };
    let path = out.join(ECHO_FILE);
    std::fs::write(&path, echo.to_toml_string())?;
    Ok(path)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn run_info(started: Instant) -> serde_json::Value {
    let now = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    json!({ "timestamp_unix": now, "wall_time_s": started.elapsed().as_secs_f64() })
}

// ---------------------------------------------------------------- figure1

pub struct Figure1Result {
    pub teacher: TeacherParams,
    pub run: TwoPhaseRun,
    /// Matching of the rescaled phase-I output against the teacher.
    pub matching: NeuronMatching,
}

/// Data and training both use `seed`.
pub fn figure1_run(cfg: &ExperimentConfig, seed: u64) -> Result<Figure1Result> {
    let teacher = cfg.teacher.build()?;
    let data = Dataset::generate(&teacher, cfg.data.n, cfg.data.noise, seed);
    let run = run_two_phase(&teacher, &data, &cfg.train_config(seed))?;
    let matching = match_neurons(&run.switch_params, &teacher)?;
    Ok(Figure1Result {
        teacher,
        run,
        matching,
    })
}

pub fn cmd_figure1(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<Outcome> {
    let started = Instant::now();
    let echo = prepare(out, cfg, seed)?;
    let res = figure1_run(cfg, seed)?;

    let mut trace = PlotTable::new(
        &[
            "iter",
            "phase",
            "empirical_objective",
            "expected_objective",
            "excess_risk",
        ],
        &["count", "tag", "loss", "loss", "squared-l2"],
    );
    for r in &res.run.trace {
        trace.push(vec![
            r.iter.to_string(),
            r.phase.to_string(),
            fmt_f64(r.empirical_objective),
            fmt_f64(r.expected_objective),
            fmt_f64(r.excess_risk),
        ]);
    }
    let trace_path = out.join("figure1_trace.csv");
    trace.write(&trace_path)?;

    let rep = &res.run.report;
    let summary = json!({
        "command": "figure1",
        "seed": seed,
        "teacher_hash": res.teacher.fingerprint(),
        "n": rep.n,
        "trace_rows": res.run.trace.len(),
        "initial_excess_risk": rep.initial_excess_risk,
        "switch_excess_risk": rep.switch_excess_risk,
        "final_excess_risk": rep.final_excess_risk,
        "phase1_final_objective": rep.phase1_final_objective,
        "phase1_final_expected_objective": rep.phase1_final_expected_objective,
        "phase2_initial_objective": rep.phase2_initial_objective,
        "phase2_final_objective": rep.phase2_final_objective,
        "switch_matching": res.matching,
        "run_info": run_info(started),
    });
    let summary_path = out.join("figure1_summary.json");
    write_json(&summary_path, &summary)?;

    Ok(Outcome {
        passed: true,
        files: vec![echo, trace_path, summary_path],
        lines: vec![format!(
            "figure1 seed {seed}: excess risk {:.4e} (init) -> {:.4e} (switch) -> {:.4e} (final)",
            rep.initial_excess_risk, rep.switch_excess_risk, rep.final_excess_risk
        )],
    })
}

// ------------------------------------------------------------- rate sweep

#[derive(Clone, Debug, Serialize)]
pub struct NnCell {
    pub n: usize,
    pub seed: u64,
    pub excess_risk: f64,
    pub switch_excess_risk: f64,
    pub phase2_final_objective: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BaselineCell {
    pub kernel: String,
    pub n: usize,
    pub seed: u64,
    pub lambda_ridge: f64,
    pub excess_risk: f64,
    pub std_err: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EstimatorRates {
    pub estimator: String,
    /// Median excess risk over seeds, one per sample size.
    pub medians: Vec<f64>,
    /// `None` when some median is not positive (an exact fit at that `n`).
    pub fit: Option<RateFit>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepResult {
    pub n_list: Vec<usize>,
    pub nn_cells: Vec<NnCell>,
    pub baseline_cells: Vec<BaselineCell>,
    pub nn: EstimatorRates,
    pub kernels: Vec<EstimatorRates>,
}

impl SweepResult {
    /// Kernel with the smallest median risk at the largest sample size.
    pub fn best_kernel(&self) -> Option<&EstimatorRates> {
        self.kernels.iter().min_by(|a, b| {
            a.medians
                .last()
                .unwrap()
                .total_cmp(b.medians.last().unwrap())
        })
    }
}

enum Task {
    Nn {
        n: usize,
        seed: u64,
    },
    Kernel {
        n: usize,
        seed: u64,
        spec: KernelSpec,
    },
}

enum TaskOut {
    Nn(NnCell),
    Kernel(BaselineCell),
}

fn sweep_data(
    cfg: &ExperimentConfig,
    teacher: &TeacherParams,
    base: u64,
    n: usize,
    seed: u64,
) -> (u64, Dataset) {
    let cell = derive_seed(&[base, seed, n as u64]);
    (cell, Dataset::generate(teacher, n, cfg.data.noise, cell))
}

fn run_task(
    cfg: &ExperimentConfig,
    teacher: &TeacherParams,
    base: u64,
    task: &Task,
) -> Result<TaskOut> {
    match *task {
        Task::Nn { n, seed } => {
            let (cell, data) = sweep_data(cfg, teacher, base, n, seed);
            let run = run_two_phase(teacher, &data, &cfg.train_config(cell))?;
            Ok(TaskOut::Nn(NnCell {
                n,
                seed,
                excess_risk: run.report.final_excess_risk,
                switch_excess_risk: run.report.switch_excess_risk,
                phase2_final_objective: run.report.phase2_final_objective,
            }))
        }
        Task::Kernel { n, seed, spec } => {
            let (cell, data) = sweep_data(cfg, teacher, base, n, seed);
            let b = &cfg.baselines;
            let mut split = stream_rng(cell, Stream::Split);
            let sel = select_ridge(
                data.x(),
                data.y(),
                &spec,
                &b.ridge_grid,
                b.holdout_fraction,
                &mut split,
            )?;
            let model = krr_fit(data.x(), data.y(), &spec, sel.lambda)?;
            let mut probe = stream_rng(cell, Stream::Probe);
            let est = mc_excess_risk(
                |x| model.predict_batch(x),
                teacher,
                b.mc_samples,
                &mut probe,
            )?;
            Ok(TaskOut::Kernel(BaselineCell {
                kernel: spec.to_string(),
                n,
                seed,
                lambda_ridge: sel.lambda,
                excess_risk: est.estimate,
                std_err: est.std_err,
            }))
        }
    }
}

fn rates(
    estimator: String,
    n_list: &[usize],
    risks_at: impl Fn(usize) -> Vec<f64>,
) -> EstimatorRates {
    let medians: Vec<f64> = n_list.iter().map(|&n| median(&risks_at(n))).collect();
    let ns: Vec<f64> = n_list.iter().map(|&n| n as f64).collect();
    let fit = RateFit::fit(&ns, &medians).ok();
    EstimatorRates {
        estimator,
        medians,
        fit,
    }
}

fn describe_fit(fit: &Option<RateFit>) -> String {
    match fit {
        Some(f) => format!("slope {:.3} (R^2 {:.3})", f.slope, f.r_squared),
        None => "slope n/a (non-positive median)".into(),
    }
}

/// Trains the network and fits every kernel baseline for each `(n, seed)`
/// cell, then fits log-log slopes to the per-`n` medians.
pub fn rate_sweep(
    cfg: &ExperimentConfig,
    base_seed: u64,
    pool: &rayon::ThreadPool,
) -> Result<SweepResult> {
    let teacher = cfg.teacher.build()?;
    let n_list = cfg.sweep.n_list.clone();
    let mut tasks = Vec::new();
    for &n in &n_list {
        for &seed in &cfg.sweep.seeds {
            tasks.push(Task::Nn { n, seed });
            for &spec in &cfg.baselines.kernels {
                tasks.push(Task::Kernel { n, seed, spec });
            }
        }
    }
    // Largest cells first so the pool stays busy at the end.
    let mut order: Vec<usize> = (0..tasks.len()).collect();
    order.sort_by_key(|&i| {
        std::cmp::Reverse(match tasks[i] {
            Task::Nn { n, .. } | Task::Kernel { n, .. } => n,
        })
    });
    let mut outs: Vec<(usize, TaskOut)> = pool.install(|| {
        order
            .par_iter()
            .map(|&i| run_task(cfg, &teacher, base_seed, &tasks[i]).map(|o| (i, o)))
            .collect::<Result<Vec<_>>>()
    })?;
    outs.sort_by_key(|(i, _)| *i);

    let mut nn_cells = Vec::new();
    let mut baseline_cells = Vec::new();
    for (_, o) in outs {
        match o {
            TaskOut::Nn(c) => nn_cells.push(c),
            TaskOut::Kernel(c) => baseline_cells.push(c),
        }
    }
    let nn = rates("nn".into(), &n_list, |n| {
        nn_cells
            .iter()
            .filter(|c| c.n == n)
            .map(|c| c.excess_risk)
            .collect()
    });
    let kernels = cfg
        .baselines
        .kernels
        .iter()
        .map(|spec| {
            let name = spec.to_string();
            rates(name.clone(), &n_list, |n| {
                baseline_cells
                    .iter()
                    .filter(|c| c.n == n && c.kernel == name)
                    .map(|c| c.excess_risk)
                    .collect()
            })
        })
        .collect();
    Ok(SweepResult {
        n_list,
        nn_cells,
        baseline_cells,
        nn,
        kernels,
    })
}

pub fn cmd_rate_sweep(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<Outcome> {
    let started = Instant::now();
    let echo = prepare(out, cfg, seed)?;
    let pool = thread_pool()?;
    let res = rate_sweep(cfg, seed, &pool)?;

    let mut nn = PlotTable::new(
        &[
            "n",
            "seed",
            "excess_risk",
            "switch_excess_risk",
            "phase2_final_objective",
        ],
        &["count", "id", "squared-l2", "squared-l2", "loss"],
    );
    for c in &res.nn_cells {
        nn.push(vec![
            c.n.to_string(),
            c.seed.to_string(),
            fmt_f64(c.excess_risk),
            fmt_f64(c.switch_excess_risk),
            fmt_f64(c.phase2_final_objective),
        ]);
    }
    let nn_path = out.join("rate_nn.csv");
    nn.write(&nn_path)?;

    let mut base = PlotTable::new(
        &[
            "kernel",
            "n",
            "lambda_ridge",
            "excess_risk",
            "std_err",
            "seed",
        ],
        &["label", "count", "ridge", "squared-l2", "squared-l2", "id"],
    );
    for c in &res.baseline_cells {
        base.push(vec![
            c.kernel.clone(),
            c.n.to_string(),
            fmt_f64(c.lambda_ridge),
            fmt_f64(c.excess_risk),
            fmt_f64(c.std_err),
            c.seed.to_string(),
        ]);
    }
    let base_path = out.join("baselines.csv");
    base.write(&base_path)?;

    let mut med = PlotTable::new(
        &["estimator", "n", "median_excess_risk"],
        &["label", "count", "squared-l2"],
    );
    for est in std::iter::once(&res.nn).chain(&res.kernels) {
        for (n, m) in res.n_list.iter().zip(&est.medians) {
            med.push(vec![est.estimator.clone(), n.to_string(), fmt_f64(*m)]);
        }
    }
    let med_path = out.join("rate_medians.csv");
    med.write(&med_path)?;

    let best = res.best_kernel();
    let nn_last = *res.nn.medians.last().expect("non-empty n_list");
    let summary = json!({
        "command": "rate-sweep",
        "seed": seed,
        "n_list": res.n_list,
        "nn": res.nn,
        "kernels": res.kernels,
        "best_kernel": best.map(|b| b.estimator.clone()),
        "best_kernel_median_at_max_n": best.map(|b| *b.medians.last().unwrap()),
        "nn_median_at_max_n": nn_last,
        "run_info": run_info(started),
    });
    let fit_path = out.join("rate_fits.json");
    write_json(&fit_path, &summary)?;

    let mut lines = vec![format!("nn: {}", describe_fit(&res.nn.fit))];
    for k in &res.kernels {
        lines.push(format!("{}: {}", k.estimator, describe_fit(&k.fit)));
    }
    Ok(Outcome {
        passed: true,
        files: vec![echo, nn_path, base_path, med_path, fit_path],
        lines,
    })
}

// -------------------------------------------------------------- gradcheck

pub fn gradcheck_reports(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<GradCheckReport>> {
    let g = &cfg.gradcheck;
    let s = |k: u64| derive_seed(&[seed, k]);
    Ok(vec![
        check_pair_gradient(g.d, g.points, s(1)),
        check_expected_grad(g.d, g.m, g.points, s(2))?,
        check_phase1_grad(g.d, g.m, g.n, g.points, s(3))?,
        check_phase2_grad(g.d, g.m, g.n, g.points, s(4))?,
    ])
}

pub fn cmd_gradcheck(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<Outcome> {
    let echo = prepare(out, cfg, seed)?;
    let reports = gradcheck_reports(cfg, seed)?;
    let mut table = PlotTable::new(
        &[
            "check",
            "points",
            "max_rel_err",
            "tolerance",
            "rejected",
            "passed",
        ],
        &["label", "count", "ratio", "ratio", "count", "bool"],
    );
    let mut lines = Vec::new();
    for r in &reports {
        table.push(vec![
            r.name.clone(),
            r.points.to_string(),
            fmt_f64(r.max_rel_err),
            fmt_f64(r.tolerance),
            r.rejected.to_string(),
            r.passed().to_string(),
        ]);
        lines.push(format!(
            "{} {}: max rel err {:.3e} (tol {:.0e})",
            if r.passed() { "PASS" } else { "FAIL" },
            r.name,
            r.max_rel_err,
            r.tolerance
        ));
    }
    let path = out.join("gradcheck.csv");
    table.write(&path)?;
    Ok(Outcome {
        passed: reports.iter().all(GradCheckReport::passed),
        files: vec![echo, path],
        lines,
    })
}

// ------------------------------------------------------------- bump-check

pub fn bump_checks(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<BumpCheck>> {
    let mut out = Vec::new();
    for &d in &cfg.bump.dims {
        for &delta in &cfg.bump.deltas {
            let spec = BumpSpec::axis(d, delta)?;
            let mut rng = stream_rng_raw(derive_seed(&[seed, d as u64, delta.to_bits()]), 0);
            out.push(check_bump_lemma(&spec, cfg.bump.points, &mut rng));
        }
    }
    Ok(out)
}

pub fn cmd_bump_check(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<Outcome> {
    let echo = prepare(out, cfg, seed)?;
    let checks = bump_checks(cfg, seed)?;
    let mut table = PlotTable::new(
        &[
            "d",
            "delta",
            "inside_points",
            "inside_violations",
            "min_inside",
            "outside_points",
            "outside_violations",
            "max_abs_outside",
            "passed",
        ],
        &[
            "count", "width", "count", "count", "value", "count", "count", "value", "bool",
        ],
    );
    let mut lines = Vec::new();
    for c in &checks {
        table.push(vec![
            c.d.to_string(),
            fmt_f64(c.delta),
            c.inside_points.to_string(),
            c.inside_violations.to_string(),
            fmt_f64(c.min_inside),
            c.outside_points.to_string(),
            c.outside_violations.to_string(),
            fmt_f64(c.max_abs_outside),
            c.passed().to_string(),
        ]);
        lines.push(format!(
            "{} d={} delta={}: inside {}/{} below delta/2 (min {:.4e}), outside {}/{} nonzero (max {:.4e})",
            if c.passed() { "PASS" } else { "FAIL" },
            c.d,
            c.delta,
            c.inside_violations,
            c.inside_points,
            c.min_inside,
            c.outside_violations,
            c.outside_points,
            c.max_abs_outside
        ));
    }
    let csv_path = out.join("bump_check.csv");
    table.write(&csv_path)?;
    let json_path = out.join("bump_check.json");
    write_json(&json_path, &checks)?;
    Ok(Outcome {
        passed: checks.iter().all(BumpCheck::passed),
        files: vec![echo, csv_path, json_path],
        lines,
    })
}

// ------------------------------------------------------------ gap-scaling

#[derive(Clone, Debug, Serialize)]
pub struct GapResult {
    pub rows: Vec<GapRow>,
    pub fit: RateFit,
}

pub fn gap_scaling(cfg: &ExperimentConfig, seed: u64) -> Result<GapResult> {
    let teacher = cfg.teacher.build()?;
    let clip = cfg.train.clip();
    let (m, d) = (teacher.width(), teacher.dim());
    let mut theta_rng = stream_rng_raw(derive_seed(&[seed, 1]), 0);
    let thetas = sample_theta_ball(
        m,
        d,
        default_theta_radius(m, d, clip),
        cfg.gap.thetas,
        &mut theta_rng,
    );
    let mut data_rng = stream_rng_raw(derive_seed(&[seed, 2]), 0);
    let rows = grad_gap_estimate(
        &teacher,
        &cfg.gap.n_list,
        cfg.gap.trials,
        &thetas,
        cfg.train.lambda,
        clip,
        cfg.data.noise,
        &mut data_rng,
    )?;
    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let gaps: Vec<f64> = rows.iter().map(|r| r.mean_gap).collect();
    let fit = RateFit::fit(&ns, &gaps)?;
    Ok(GapResult { rows, fit })
}

pub fn cmd_gap_scaling(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<Outcome> {
    let started = Instant::now();
    let echo = prepare(out, cfg, seed)?;
    let res = gap_scaling(cfg, seed)?;
    let mut trials = PlotTable::new(&["n", "trial", "max_gap"], &["count", "id", "grad-norm"]);
    let mut summary = PlotTable::new(
        &["n", "mean_gap", "max_gap"],
        &["count", "grad-norm", "grad-norm"],
    );
    for r in &res.rows {
        for (t, g) in r.trial_gaps.iter().enumerate() {
            trials.push(vec![r.n.to_string(), t.to_string(), fmt_f64(*g)]);
        }
        summary.push(vec![
            r.n.to_string(),
            fmt_f64(r.mean_gap),
            fmt_f64(r.max_gap),
        ]);
    }
    let trials_path = out.join("gap_scaling.csv");
    trials.write(&trials_path)?;
    let summary_path = out.join("gap_summary.csv");
    summary.write(&summary_path)?;
    let fit_path = out.join("gap_fit.json");
    write_json(
        &fit_path,
        &json!({ "command": "gap-scaling", "seed": seed, "fit": res.fit, "run_info": run_info(started) }),
    )?;
    Ok(Outcome {
        passed: true,
        files: vec![echo, trials_path, summary_path, fit_path],
        lines: vec![format!(
            "mean gap slope {:.3} (R^2 {:.3}) over n = {:?}",
            res.fit.slope, res.fit.r_squared, cfg.gap.n_list
        )],
    })
}
