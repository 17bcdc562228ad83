//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p risklab-cli --test acceptance`; pass criterion
//! numbers after `--` to run a subset (`-- 1 4 9`). Exits non-zero if any
//! selected criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use ndarray::Array1;
use rand::Rng;
use risklab::analytic::pair_integral_i;
use risklab::baselines::{krr_fit, KernelSpec};
use risklab::data::sample_sphere;
use risklab::rng::stream_rng_raw;
use risklab_cli::commands::{
    bump_checks, figure1_run, gap_scaling, gradcheck_reports, rate_sweep, thread_pool,
};
use risklab_cli::ExperimentConfig;

type Verdict = Result<String, String>;

fn config(name: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name);
    ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn median(v: &[f64]) -> f64 {
    risklab_cli::ratefit::median(v)
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// 1. Closed-form pair integral against 10^6-sample Monte Carlo, 3 SE.
fn c1_pair_integral() -> Verdict {
    const SAMPLES: usize = 1_000_000;
    const BLOCK: usize = 50_000;
    let mut rng = stream_rng_raw(2024, 1);
    let mut worst_z = 0.0f64;
    let mut failures = 0;
    for t in 0..20 {
        let d = if t % 2 == 0 { 3 } else { 10 };
        let w = Array1::from_shape_fn(d, |_| rng.random_range(-1.0..1.0));
        let v = Array1::from_shape_fn(d, |_| rng.random_range(-1.0..1.0));
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..SAMPLES / BLOCK {
            let x = sample_sphere(BLOCK, d, &mut rng);
            let pw = x.dot(&w);
            let pv = x.dot(&v);
            for (a, b) in pw.iter().zip(&pv) {
                let s = a.max(0.0) * b.max(0.0);
                sum += s;
                sum_sq += s * s;
            }
        }
        let n = SAMPLES as f64;
        let mean = sum / n;
        let se = ((sum_sq / n - mean * mean) * n / (n - 1.0) / n).sqrt();
        let z = (pair_integral_i(w.view(), v.view()) - mean).abs() / se.max(f64::MIN_POSITIVE);
        worst_z = worst_z.max(z);
        if z > 3.0 {
            failures += 1;
        }
    }
    check(
        failures == 0,
        format!("20 triples, {failures} beyond 3 SE, worst |z| = {worst_z:.2}"),
    )
}

// 2. Finite-difference gradient oracles.
fn c2_gradients() -> Verdict {
    let cfg = config("gradcheck.toml");
    let reports = gradcheck_reports(&cfg, cfg.seed).map_err(|e| e.to_string())?;
    let detail = reports
        .iter()
        .map(|r| format!("{} {:.1e}/{:.0e}", r.name, r.max_rel_err, r.tolerance))
        .collect::<Vec<_>>()
        .join("; ");
    let enough = reports.iter().all(|r| r.points >= 100);
    check(enough && reports.iter().all(|r| r.passed()), detail)
}

// 3. Bump-function inequalities, zero violations.
fn c3_bump() -> Verdict {
    let cfg = config("bump_check.toml");
    let checks = bump_checks(&cfg, cfg.seed).map_err(|e| e.to_string())?;
    let inside: usize = checks.iter().map(|c| c.inside_violations).sum();
    let outside: usize = checks.iter().map(|c| c.outside_violations).sum();
    check(
        checks.len() == 8 && checks.iter().all(|c| c.passed()),
        format!(
            "{} (d, delta) cells; {inside} inside points below delta/2, {outside} outside points with g != 0",
            checks.len()
        ),
    )
}

// 4. KRR predictions are linear in the labels.
fn c4_superposition() -> Verdict {
    let mut rng = stream_rng_raw(4, 0);
    let (n, d) = (300, 6);
    let x = sample_sphere(n, d, &mut rng);
    let probe = sample_sphere(200, d, &mut rng);
    let y1 = Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0));
    let y2 = Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0));
    let (a, b) = (0.7, -2.3);
    let combo = &y1 * a + &y2 * b;
    let mut worst = 0.0f64;
    let specs = [
        KernelSpec::ArcCosine1,
        KernelSpec::Rbf { gamma: 1.0 },
        KernelSpec::Ntk2Relu,
    ];
    for spec in specs {
        let fit = |y: &Array1<f64>| {
            krr_fit(x.view(), y.view(), &spec, 1e-3).map(|m| m.predict_batch(probe.view()))
        };
        let p1 = fit(&y1).map_err(|e| e.to_string())?;
        let p2 = fit(&y2).map_err(|e| e.to_string())?;
        let pc = fit(&combo).map_err(|e| e.to_string())?;
        let want = &p1 * a + &p2 * b;
        let scale = want.iter().fold(1.0f64, |s, v| s.max(v.abs()));
        let err = (&pc - &want).iter().fold(0.0f64, |s, v| s.max(v.abs())) / scale;
        worst = worst.max(err);
    }
    check(
        worst <= 1e-8,
        format!("3 kernels, max relative deviation {worst:.2e} (tol 1e-8)"),
    )
}

/// Phase-2 training loss stays above this fraction of the noise variance.
const PLATEAU_FLOOR_FRACTION: f64 = 0.25;

// 5. Qualitative two-phase behaviour on the d = m = 10 preset.
fn c5_figure1() -> Verdict {
    let cfg = config("figure1.toml");
    let sigma = cfg.data.noise.sigma;
    let k1 = cfg.train.k1_max;
    let (mut jumps_ok, mut plateau_ok) = (0, 0);
    let (mut switch, mut fin) = (Vec::new(), Vec::new());
    let mut notes = Vec::new();
    for seed in 0..5 {
        let res = figure1_run(&cfg, seed).map_err(|e| e.to_string())?;
        let trace = &res.run.trace;
        let p2: Vec<f64> = trace
            .iter()
            .filter(|r| r.phase == 2)
            .map(|r| r.empirical_objective)
            .collect();
        let last1 = trace
            .iter()
            .rfind(|r| r.phase == 1)
            .ok_or("no phase-1 trace")?;
        if last1.iter != k1 || p2.len() < 200 {
            return Err(format!("unexpected trace layout for seed {seed}"));
        }
        // (a) the switch jump dwarfs every phase-2 step.
        let jump = (last1.empirical_objective - p2[0]).abs();
        let max_step = p2
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .fold(0.0, f64::max);
        if jump > 10.0 * max_step {
            jumps_ok += 1;
        }
        // (c) positive floor and flattening.
        let min_loss = p2.iter().copied().fold(f64::INFINITY, f64::min);
        let early = p2[0] - p2[100];
        let late = p2[p2.len() - 101] - p2[p2.len() - 1];
        if min_loss >= PLATEAU_FLOOR_FRACTION * sigma * sigma && late < 0.25 * early {
            plateau_ok += 1;
        }
        switch.push(res.run.report.switch_excess_risk);
        fin.push(res.run.report.final_excess_risk);
        notes.push(format!("jump/step {:.0}", jump / max_step));
    }
    let (ms, mf) = (median(&switch), median(&fin));
    // (b) pilot: final / switch ratio about 0.26 on every seed.
    let ratio_ok = mf <= 0.5 * ms;
    check(
        jumps_ok == 5 && plateau_ok == 5 && ratio_ok,
        format!(
            "(a) {jumps_ok}/5 jumps [{}]; (b) median risk {ms:.3e} -> {mf:.3e}, ratio {:.2} (<= 0.5); (c) {plateau_ok}/5 plateau above {PLATEAU_FLOOR_FRACTION} sigma^2",
            notes.join(", "),
            mf / ms
        ),
    )
}

// 6. Rate separation between the trained network and tuned kernel ridge.
fn c6_rate_sweep() -> Verdict {
    let cfg = config("rate_sweep.toml");
    let pool = thread_pool().map_err(|e| e.to_string())?;
    let res = rate_sweep(&cfg, cfg.seed, &pool).map_err(|e| e.to_string())?;
    let best = res.best_kernel().ok_or("no kernels configured")?;
    let nn_last = *res.nn.medians.last().unwrap();
    let best_last = *best.medians.last().unwrap();
    let nn_fit = res.nn.fit.as_ref().ok_or("no finite nn slope")?;
    let kernel_slopes = res
        .kernels
        .iter()
        .map(|k| {
            format!(
                "{} {:.2}",
                k.estimator,
                k.fit.as_ref().map_or(f64::NAN, |f| f.slope)
            )
        })
        .collect::<Vec<_>>()
        .join(", ");
    check(
        nn_fit.slope <= -0.7 && nn_last < best_last,
        format!(
            "nn slope {:.3} (<= -0.7); median at n={}: nn {nn_last:.3e} vs {} {best_last:.3e}; kernel slopes {kernel_slopes}",
            nn_fit.slope,
            res.n_list.last().unwrap(),
            best.estimator
        ),
    )
}

// 7. Gradient-gap scaling slope.
fn c7_gap() -> Verdict {
    let cfg = config("gap_scaling.toml");
    let res = gap_scaling(&cfg, cfg.seed).map_err(|e| e.to_string())?;
    let s = res.fit.slope;
    check(
        (-0.7..=-0.3).contains(&s),
        format!("slope {s:.3} in [-0.7, -0.3], R^2 {:.3}", res.fit.r_squared),
    )
}

/// Largest matched distance `|| |a_k| w_k - w0_j ||` counted as recovery.
const DELTA_MATCH: f64 = 0.5;

// 8. Neuron recovery after phase I.
fn c8_recovery() -> Verdict {
    let cfg = config("figure1.toml");
    let mut recovered = 0;
    let mut notes = Vec::new();
    for seed in 0..5 {
        let res = figure1_run(&cfg, seed).map_err(|e| e.to_string())?;
        let m = &res.matching;
        let signs = m.pairs.iter().filter(|p| p.sign_agrees).count();
        let close = m
            .pairs
            .iter()
            .filter(|p| p.sign_agrees && p.distance <= DELTA_MATCH)
            .count();
        if close == m.pairs.len() {
            recovered += 1;
        }
        notes.push(format!(
            "seed {seed}: {signs}/10 signs, {close}/10 within, max dist {:.2}",
            m.max_distance
        ));
    }
    check(
        recovered >= 3,
        format!(
            "{recovered}/5 seeds fully recovered (need 3, delta_match {DELTA_MATCH}); {}",
            notes.join("; ")
        ),
    )
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).expect("output dir") {
        let path = entry.expect("entry").path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let bytes = std::fs::read(&path).expect("read output");
        let bytes = if name.ends_with(".json") {
            let mut v: serde_json::Value = serde_json::from_slice(&bytes).expect("json output");
            if let Some(obj) = v.as_object_mut() {
                obj.remove("run_info");
            }
            serde_json::to_vec(&v).unwrap()
        } else {
            bytes
        };
        out.insert(name, bytes);
    }
    out
}

fn run_cli(command: &str, config: &Path, out: &Path, threads: &str) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_risklab"))
        .args([command, "--config"])
        .arg(config)
        .args(["--seed", "11", "--out"])
        .arg(out)
        .env("RISKLAB_THREADS", threads)
        .output()
        .map_err(|e| e.to_string())?;
    match status.status.code() {
        Some(0) | Some(2) => Ok(()),
        code => Err(format!(
            "{command} exited with {code:?}: {}",
            String::from_utf8_lossy(&status.stderr)
        )),
    }
}

const SMALL_SWEEP: &str = r#"
[teacher]
preset = "random-well-conditioned"
d = 5
m = 2
seed = 3

[train]
beta = 1000.0
lambda = 0.001
eta1 = 0.05
eta2 = 0.5
k1_max = 300
k2_max = 400
trace_stride = 50

[baselines]
mc_samples = 500

[sweep]
n_list = [40, 80, 160]
seeds = [0, 1, 2]

[gap]
n_list = [50, 100, 200]
trials = 2
thetas = 50
"#;

// 9. Same seed, byte-identical data outputs, also across thread counts.
fn c9_determinism() -> Verdict {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let small = tmp.path().join("small.toml");
    std::fs::write(&small, SMALL_SWEEP).map_err(|e| e.to_string())?;
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let runs: [(&str, PathBuf); 5] = [
        ("figure1", configs.join("figure1.toml")),
        ("rate-sweep", small.clone()),
        ("gradcheck", configs.join("gradcheck.toml")),
        ("bump-check", configs.join("bump_check.toml")),
        ("gap-scaling", small),
    ];
    let mut files = 0;
    for (command, cfg) in &runs {
        let out = tmp.path().join(command);
        run_cli(command, cfg, &out, "1")?;
        let first = snapshot(&out);
        std::fs::remove_dir_all(&out).map_err(|e| e.to_string())?;
        run_cli(command, cfg, &out, "3")?;
        let second = snapshot(&out);
        if first != second {
            let differing: Vec<_> = first
                .keys()
                .filter(|k| first.get(*k) != second.get(*k))
                .cloned()
                .collect();
            return Err(format!("{command}: outputs differ in {differing:?}"));
        }
        files += first.len();
    }
    Ok(format!(
        "5 commands, {files} output files identical across reruns (1 vs 3 threads)"
    ))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Verdict); 9] = [
        (1, "pair integral vs Monte Carlo", c1_pair_integral),
        (2, "gradient oracles", c2_gradients),
        (3, "bump lemma", c3_bump),
        (4, "KRR superposition", c4_superposition),
        (5, "two-phase training behaviour", c5_figure1),
        (6, "rate separation", c6_rate_sweep),
        (7, "gradient-gap scaling", c7_gap),
        (8, "neuron recovery", c8_recovery),
        (9, "determinism", c9_determinism),
    ];
    let selected: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = Vec::new();
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let started = Instant::now();
        let verdict = std::panic::catch_unwind(run).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("PASS criterion {id} ({name}): {detail} [{secs:.1}s]"),
            Err(detail) => {
                println!("FAIL criterion {id} ({name}): {detail} [{secs:.1}s]");
                failed.push(id);
            }
        }
    }
    if !failed.is_empty() {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
