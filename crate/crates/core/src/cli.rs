//! Command-line runner: config loading, subcommand dispatch, artifacts and
//! exit codes.
//!
//! Exit codes: 0 success, 1 other failure, 2 invalid config, 3 a check failed
//! under `--check`, 4 usage error or unknown subcommand, 5 resource limit,
//! 6 censoring or acceptance-rate failure.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::config::{key_help, ExperimentConfig};
use crate::env::{eta_mismatch_count, renewal, EnvModel, EnvSource};
use crate::error::{Error, Result};
use crate::plot::Series;
use crate::regen::{self, BlockOptions};
use crate::renorm::{self, DpMode, EtaTraps, ThreatProblem};
use crate::report::{num, write_outcome, Check, Outcome, Provenance, Table};
use crate::rng::Seed;
use crate::stats::battery::{self, DecouplingBatteryOptions, DecouplingForm, RmpBatteryOptions};
use crate::stats::{binomial_test, loglog_slope, wilson_interval, Z95};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CHECK: i32 = 3;
pub const EXIT_USAGE: i32 = 4;
pub const EXIT_RESOURCE: i32 = 5;
pub const EXIT_CENSORED: i32 = 6;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } => EXIT_CONFIG,
        Error::Usage(_) | Error::DimensionMismatch { .. } => EXIT_USAGE,
        Error::Resource(_) => EXIT_RESOURCE,
        Error::Censored { .. } | Error::Acceptance { .. } => EXIT_CENSORED,
        Error::Overflow | Error::Io(_) => EXIT_OTHER,
    }
}

const ABOUT: &str =
    "Simulate random walks in dynamic random environments and check the environment hypotheses.";

const CONFIG_HELP: &str = "Each run writes <out>/<command>.csv, <out>/<command>.summary.json and, with --plots, SVG files.
CSV files are UTF-8 with a header row and '.' as decimal separator.";

#[derive(Parser, Debug)]
#[command(name = "rwre", version, about = ABOUT, after_help = CONFIG_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Flat TOML config (see `rwre keys`).
    #[arg(long)]
    pub config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Exit with code 3 when a check fails.
    #[arg(long)]
    pub check: bool,
    /// Worker threads (results do not depend on it).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// mj: also compute M_J by exhaustive enumeration and compare.
    #[arg(long)]
    pub brute_force: bool,
    /// Write SVG plots.
    #[arg(long)]
    pub plots: bool,
    /// Override a config key, e.g. --set experiment.n=100.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Regeneration blocks, speed and diffusion estimates, T_1 tail.
    #[command(
        after_help = "CSV blocks.csv: index,seed,t1,x1[,x2,x3],censored,rejections\n\
        Checks: censored fraction < 1e-3; log-log slope of P(T_1 > t) <= -1."
    )]
    Blocks(Common),
    /// Block estimates cross-checked against direct runs (speed and Gaussian limit).
    #[command(after_help = "CSV simulate.csv: kind,run,t,x1[,x2,x3],z1[,z2,z3]\n\
        kind = lln (x = X_t / t, z empty) or clt (z = (X_t - t v) / sqrt(t)).\n\
        Checks: speed estimates agree within the sum of 95% half-widths; KS p > 0.01 and variance ratio in [0.85, 1.15].")]
    Simulate(Common),
    /// Fall-on-trap bound on fixed realizations and threatened-box frequency.
    #[command(
        after_help = "CSV renorm.csv: realization,m_j,m_j_strict,bound,empirical,se,pass\n\
        Checks: at least 99% of realizations satisfy empirical <= bound + 3 SE."
    )]
    Renorm(Common),
    /// Minimal threat counts M_J on environment realizations.
    #[command(after_help = "CSV mj.csv: realization,m_j,brute\n\
        brute is empty unless --brute-force. Check: DP and enumeration agree.")]
    Mj(Common),
    /// Probability of the events A_{k,H}.
    #[command(after_help = "CSV akh.csv: k,L,H,estimate,ci_lo,ci_hi,successes,n")]
    Akh(Common),
    /// Covariance decay battery for box functionals of eta.
    #[command(
        after_help = "CSV decouple.csv: case,r,h,s,reducer1,reducer2,cov,se,epsilon,pass\n\
        Check: cov <= epsilon + 3 SE in at least experiment.required cases.\n\
        Summary p_value: smallest one-sided p-value for cov <= epsilon over the cases, uncorrected."
    )]
    Decouple(Common),
    /// Conditional independence battery given eta_0 = 1, with a positive control.
    #[command(
        name = "rmp-test",
        after_help = "CSV rmp-test.csv: case,past_field,past_reducer,future_reducer,statistic,p_value,rejected\n\
        Checks: rejected fraction in [0.02, 0.08]; positive-control power >= 0.9.\n\
        Summary p_value: exact binomial test of the rejection count against the 5% level."
    )]
    RmpTest(Common),
    /// q_k cascade on vertical segments of length 4^k.
    #[command(after_help = "CSV qk.csv: k,L,q,ci_lo,ci_hi,successes,n\n\
        c is fitted at k_min as L^alpha cov(F(0, L), F(3L, 4L)), L = 4^k_min.\n\
        Checks: log-log slope <= -(alpha - 0.5); q_{k+1} <= q_k^2 + c L_k^-alpha within 95% bounds for k > k_min.")]
    Qk(Common),
    /// P(eta^s != eta^{2s}) over experiment.s_values.
    #[command(
        after_help = "CSV truncation.csv: s,estimate,ci_lo,ci_hi,count,n,exact\n\
        exact is the closed form (renewal only). Check: slope <= -(beta - d - 1) + 0.5."
    )]
    Truncation(Common),
    /// Law of omega at the origin against its stationary law (renewal).
    #[command(
        after_help = "CSV stationarity.csv: value,count,frequency,stationary\nCheck: total variation < 0.01."
    )]
    Stationarity(Common),
    /// Run every config in a directory; each names its subcommand in `command`.
    Suite {
        dir: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        check: bool,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        plots: bool,
    },
    /// List config keys with defaults.
    Keys,
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| Error::usage(format!("cannot read {}: {e}", common.config.display())))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    for s in &common.set {
        cfg.set(s)?;
    }
    if let Some(seed) = common.seed {
        cfg.set(&format!("seed={seed}"))?;
    }
    Ok(cfg)
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j == 0 {
            return Err(Error::usage("--jobs must be at least 1"));
        }
        b = b.num_threads(j);
    }
    b.build().map_err(|e| Error::Resource(e.to_string()))
}

/// Run one subcommand and write its artifacts; returns whether all checks passed.
pub fn execute(
    command: &str,
    cfg: &ExperimentConfig,
    out: &Path,
    jobs: Option<usize>,
    plots: bool,
    brute_force: bool,
) -> Result<Outcome> {
    let started = Instant::now();
    let seed = Seed(cfg.seed()).named(command);
    let outcome = pool(jobs)?.install(|| dispatch(command, cfg, seed, brute_force))?;
    let prov = Provenance {
        command: command.into(),
        config_text: cfg.to_toml(),
        seed: cfg.seed(),
    };
    write_outcome(out, &prov, &outcome, started.elapsed().as_secs_f64(), plots)?;
    for c in &outcome.checks {
        eprintln!(
            "{command}: {} {} ({})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    Ok(outcome)
}

fn dispatch(
    command: &str,
    cfg: &ExperimentConfig,
    seed: Seed,
    brute_force: bool,
) -> Result<Outcome> {
    match command {
        "blocks" => run_blocks(cfg, seed),
        "simulate" => run_simulate(cfg, seed),
        "renorm" => run_renorm(cfg, seed),
        "mj" => run_mj(cfg, seed, brute_force),
        "akh" => run_akh(cfg, seed),
        "decouple" => run_decouple(cfg, seed),
        "rmp-test" => run_rmp(cfg, seed),
        "qk" => run_qk(cfg, seed),
        "truncation" => run_truncation(cfg, seed),
        "stationarity" => run_stationarity(cfg, seed),
        other => Err(Error::usage(format!("unknown subcommand `{other}`"))),
    }
}

fn coords(prefix: &str, d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("{prefix}{i}")).collect()
}

fn header(fixed: &[&str], extra: &[Vec<String>], tail: &[&str]) -> Vec<String> {
    fixed
        .iter()
        .map(|s| s.to_string())
        .chain(extra.iter().flatten().cloned())
        .chain(tail.iter().map(|s| s.to_string()))
        .collect()
}

fn block_options(cfg: &ExperimentConfig) -> BlockOptions {
    BlockOptions {
        horizon: cfg.count("experiment.horizon"),
        acceptance_floor: cfg.float("experiment.floor"),
    }
}

fn run_blocks(cfg: &ExperimentConfig, seed: Seed) -> Result<Outcome> {
    let model = cfg.env_config()?.model()?;
    let kernel = cfg.kernel()?;
    let d = cfg.dim().get();
    let blocks = regen::sample_blocks(
        &model,
        &kernel,
        cfg.count("experiment.n"),
        seed.named("blocks"),
        &block_options(cfg),
    )?;
    let mut table = Table {
        header: header(
            &["index", "seed", "t1"],
            &[coords("x", d)],
            &["censored", "rejections"],
        ),
        rows: vec![],
    };
    for (i, b) in blocks.iter().enumerate() {
        let mut row = vec![i.to_string(), b.seed.to_string(), b.t1.to_string()];
        row.extend(b.disp[..d].iter().map(|x| x.to_string()));
        row.extend([b.censored.to_string(), b.rejections.to_string()]);
        table.push(row);
    }
    let est = regen::estimate_limits(
        &blocks,
        cfg.dim(),
        cfg.count("experiment.n_boot") as usize,
        seed.named("bootstrap"),
    )?;
    let censored = est.n_censored as f64 / blocks.len() as f64;
    let tail = regen::t1_tail(&blocks, 10);
    let mut checks = vec![Check::new(
        "censored_fraction",
        censored < 1e-3,
        format!("{censored} < 0.001"),
    )];
    let mut series = Vec::new();
    let tail_json = match &tail {
        Ok((pts, fit)) => {
            checks.push(Check::new(
                "t1_tail_slope",
                fit.slope <= -1.0,
                format!("slope {:.3} +- {:.3} <= -1", fit.slope, fit.se),
            ));
            series.push(
                Series::line(
                    "blocks_t1_tail",
                    "P(T_1 > t)",
                    "t",
                    "P(T_1 > t)",
                    true,
                    pts.clone(),
                )
                .with_guide(-1.0),
            );
            json!({"points": pts, "fit": fit})
        }
        Err(e) => {
            checks.push(Check::new("t1_tail_slope", false, e.to_string()));
            json!(null)
        }
    };
    let summary = json!({"estimates": est, "censored_fraction": censored, "t1_tail": tail_json});
    Ok(Outcome {
        table,
        summary,
        series,
        checks,
    })
}

fn run_simulate(cfg: &ExperimentConfig, seed: Seed) -> Result<Outcome> {
    let model = cfg.env_config()?.model()?;
    let kernel = cfg.kernel()?;
    let d = cfg.dim().get();
    let blocks = regen::sample_blocks(
        &model,
        &kernel,
        cfg.count("experiment.n"),
        seed.named("blocks"),
        &block_options(cfg),
    )?;
    let est = regen::estimate_limits(
        &blocks,
        cfg.dim(),
        cfg.count("experiment.n_boot") as usize,
        seed.named("bootstrap"),
    )?;
    let lln = regen::direct_run(
        &model,
        &kernel,
        cfg.count("experiment.t_final"),
        cfg.count("experiment.runs"),
        seed.named("lln"),
        None,
    )?;
    let clt = regen::direct_run(
        &model,
        &kernel,
        cfg.count("experiment.clt_t"),
        cfg.count("experiment.clt_runs"),
        seed.named("clt"),
        Some(&est.v_hat),
    )?;
    let speed = regen::speed_cross_check(&est, &lln)?;
    let gauss = regen::gaussian_check(&est, &clt, 0.01, (0.85, 1.15))?;
    let mut table = Table {
        header: header(
            &["kind", "run", "t"],
            &[coords("x", d), coords("z", d)],
            &[],
        ),
        rows: vec![],
    };
    for (i, x) in lln.x_over_t.iter().enumerate() {
        let mut row = vec!["lln".into(), i.to_string(), lln.t_final.to_string()];
        row.extend(x.iter().map(|v| num(*v)));
        row.extend((0..d).map(|_| String::new()));
        table.push(row);
    }
    let z = clt.standardized.as_ref().expect("speed supplied");
    for (i, (e, zi)) in clt.endpoints.iter().zip(z).enumerate() {
        let mut row = vec!["clt".into(), i.to_string(), clt.t_final.to_string()];
        row.extend(e[..d].iter().map(|v| v.to_string()));
        row.extend(zi.iter().map(|v| num(*v)));
        table.push(row);
    }
    let checks = vec![
        Check::new(
            "speed_agreement",
            speed.pass,
            format!("block {:?} vs direct {:?}", speed.v_block, speed.v_direct),
        ),
        Check::new(
            "gaussian_limit",
            gauss.pass,
            format!(
                "KS p = {:.4}, variance ratio {:?}",
                gauss.ks.p_value, gauss.variance_ratio
            ),
        ),
    ];
    let first: Vec<f64> = z
        .iter()
        .map(|v| v[0] / est.sigma_hat[0][0].sqrt())
        .collect();
    let series = vec![Series::histogram(
        "simulate_residuals",
        "standardized residuals (first coordinate)",
        "z / sqrt(Sigma_11)",
        &first,
        30,
    )];
    let summary = json!({"estimates": est, "speed": speed, "gaussian": gauss, "censored_blocks": est.n_censored});
    Ok(Outcome {
        table,
        summary,
        series,
        checks,
    })
}

fn run_renorm(cfg: &ExperimentConfig, seed: Seed) -> Result<Outcome> {
    let model = cfg.env_config()?.model()?;
    let kernel = cfg.kernel()?;
    let (j, h) = (cfg.count("experiment.J"), cfg.count("experiment.H").max(1));
    let n = cfg.count("experiment.n");
    let mut table = Table::new(&[
        "realization",
        "m_j",
        "m_j_strict",
        "bound",
        "empirical",
        "se",
        "pass",
    ]);
    let mut passed = 0;
    for i in 0..n {
        let env = model.realize(seed.named("env").child(i));
        let r = renorm::verify_fall_on_trap(
            &env,
            &kernel,
            j,
            h,
            cfg.count("experiment.walks"),
            seed.named("walks").child(i),
        )?;
        passed += r.pass as u64;
        table.push(vec![
            i.to_string(),
            r.m_j.to_string(),
            r.m_j_strict.to_string(),
            num(r.bound),
            num(r.empirical),
            num(r.se),
            r.pass.to_string(),
        ]);
    }
    let required = (0.99 * n as f64).ceil() as u64;
    let l = cfg.count("experiment.box_L");
    let boxes = renorm::unthreatened_box_frequency(l, &model, n, seed.named("boxes"))?;
    let checks = vec![Check::new(
        "fall_on_trap",
        passed >= required,
        format!("{passed} of {n} realizations, need {required}"),
    )];
    let summary =
        json!({"J": j, "H": h, "passed": passed, "realizations": n, "unthreatened_box": boxes});
    Ok(Outcome {
        table,
        summary,
        series: vec![],
        checks,
    })
}

fn run_mj(cfg: &ExperimentConfig, seed: Seed, brute_force: bool) -> Result<Outcome> {
    let model = cfg.env_config()?.model()?;
    let problem = ThreatProblem::m_j(
        cfg.count("experiment.J"),
        cfg.count("experiment.H").max(1),
        model.range(),
    );
    let n = cfg.count("experiment.n");
    let mut table = Table::new(&["realization", "m_j", "brute"]);
    let mut mismatches = 0;
    let mut values = Vec::new();
    for i in 0..n {
        let env = model.realize(seed.child(i));
        let traps = EtaTraps(&env);
        let m = renorm::min_threats(&problem, &traps, None, DpMode::Serial)?;
        let brute = if brute_force {
            Some(renorm::min_threats_brute(&problem, &traps)?)
        } else {
            None
        };
        mismatches += brute.is_some_and(|b| b != m) as u64;
        values.push(m);
        table.push(vec![
            i.to_string(),
            m.to_string(),
            brute.map(|b| b.to_string()).unwrap_or_default(),
        ]);
    }
    let mean = values.iter().sum::<u64>() as f64 / n as f64;
    let checks = if brute_force {
        vec![Check::new(
            "dp_matches_enumeration",
            mismatches == 0,
            format!("{mismatches} mismatches"),
        )]
    } else {
        vec![]
    };
    let summary = json!({"J": problem.len / problem.h, "H": problem.h, "mean_m_j": mean, "mismatches": if brute_force { json!(mismatches) } else { json!(null) }});
    Ok(Outcome {
        table,
        summary,
        series: vec![],
        checks,
    })
}

fn run_akh(cfg: &ExperimentConfig, seed: Seed) -> Result<Outcome> {
    let model = cfg.env_config()?.model()?;
    let n = cfg.count("experiment.n");
    let mut table = Table::new(&[
        "k",
        "L",
        "H",
        "estimate",
        "ci_lo",
        "ci_hi",
        "successes",
        "n",
    ]);
    let mut pts = Vec::new();
    let mut rows = Vec::new();
    for k in cfg.count("experiment.k_min").max(1) as u32..=cfg.count("experiment.k_max") as u32 {
        let h = match cfg.count("experiment.H") {
            0 => renorm::default_h(k),
            h => h,
        };
        let e = renorm::estimate_akh(k, h, &model, n, seed.child(k as u64))?;
        table.push(vec![
            k.to_string(),
            e.scale.to_string(),
            h.to_string(),
            num(e.estimate),
            num(e.ci_lo),
            num(e.ci_hi),
            e.successes.to_string(),
            n.to_string(),
        ]);
        pts.push((
            e.scale as f64,
            if e.successes == 0 {
                e.ci_hi
            } else {
                e.estimate
            },
        ));
        rows.push(json!({"k": k, "H": h, "estimate": e}));
    }
    let series = vec![Series::line(
        "akh",
        "P(A_{k,H})",
        "L_k",
        "probability",
        true,
        pts,
    )];
    Ok(Outcome {
        table,
        summary: json!({"scales": rows}),
        series,
        checks: vec![],
    })
}

fn reducer_name(r: battery::Reducer) -> String {
    match r {
        battery::Reducer::AllZero => "all_zero".into(),
        battery::Reducer::AnyOne => "any_one".into(),
        battery::Reducer::Parity => "parity".into(),
        battery::Reducer::Threshold(m) => format!("threshold_{m}"),
    }
}

fn run_decouple(cfg: &ExperimentConfig, seed: Seed) -> Result<Outcome> {
    let env_cfg = cfg.env_config()?;
    let model = env_cfg.model()?;
    let opts = DecouplingBatteryOptions {
        pairs: cfg.count("experiment.pairs") as usize,
        n: cfg.count("experiment.n"),
        n_boot: cfg.count("experiment.n_boot") as usize,
        r_ref: cfg.int("experiment.r_ref"),
        h_ref: cfg.int("experiment.h_ref"),
        s_ref: cfg.int("experiment.s_ref"),
        s_max: cfg.int("experiment.s_max"),
        required: cfg.count("experiment.required") as usize,
        c: None,
    };
    let form = DecouplingForm::of(&env_cfg);
    let bat = battery::decoupling_battery(&model, form, &opts, seed)?;
    let mut table = Table::new(&[
        "case", "r", "h", "s", "reducer1", "reducer2", "cov", "se", "epsilon", "pass",
    ]);
    let mut pts = Vec::new();
    for (i, c) in bat.cases.iter().enumerate() {
        table.push(vec![
            i.to_string(),
            c.r.to_string(),
            c.h.to_string(),
            c.s.to_string(),
            reducer_name(c.f1.reducer),
            reducer_name(c.f2.reducer),
            num(c.report.cov),
            num(c.report.se),
            num(c.epsilon),
            c.pass.to_string(),
        ]);
        if c.report.cov > 0.0 {
            pts.push((c.s as f64, c.report.cov));
        }
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let alpha = env_cfg.alpha();
    let series = vec![Series::line(
        "decouple_cov",
        "positive covariances against separation",
        "s",
        "cov",
        true,
        pts,
    )
    .with_guide(-alpha)];
    let checks = vec![Check::new(
        "decoupling",
        bat.pass,
        format!(
            "{} of {} cases within bound, need {}",
            bat.passed,
            bat.cases.len(),
            opts.required
        ),
    )];
    // Smallest one-sided p-value for cov <= epsilon over the cases, uncorrected.
    let normal = Normal::standard();
    let p_value = bat
        .cases
        .iter()
        .map(|c| {
            if c.report.se > 0.0 {
                normal.sf((c.report.cov - c.epsilon) / c.report.se)
            } else if c.report.cov <= c.epsilon {
                1.0
            } else {
                0.0
            }
        })
        .fold(1.0f64, f64::min);
    let summary = json!({
        "method": "covariance against epsilon(r, h, s) + 3 SE",
        "n": opts.n,
        "p_value": p_value,
        "pass": bat.pass,
        "form": bat.form,
        "c": bat.c,
        "passed": bat.passed,
        "cases": bat.cases.len(),
    });
    Ok(Outcome {
        table,
        summary,
        series,
        checks,
    })
}

fn run_rmp(cfg: &ExperimentConfig, seed: Seed) -> Result<Outcome> {
    let model = cfg.env_config()?.model()?;
    let opts = RmpBatteryOptions {
        pairs: cfg.count("experiment.pairs") as usize,
        n: cfg.count("experiment.n"),
        depth: cfg.int("experiment.depth"),
        floor: cfg.float("experiment.floor"),
        ..RmpBatteryOptions::default()
    };
    let bat = battery::rmp_battery(&model, &opts, seed.named("battery"))?;
    let control = battery::rmp_positive_control(
        &model,
        1,
        battery::control_thresholds(&model, 1),
        cfg.count("experiment.control_n"),
        cfg.count("experiment.control_reps") as usize,
        opts.level,
        seed.named("control"),
    )?;
    let mut table = Table::new(&[
        "case",
        "past_field",
        "past_reducer",
        "future_reducer",
        "statistic",
        "p_value",
        "rejected",
    ]);
    for (i, c) in bat.cases.iter().enumerate() {
        table.push(vec![
            i.to_string(),
            format!("{:?}", c.past.field).to_lowercase(),
            reducer_name(c.past.reducer),
            reducer_name(c.future.reducer),
            num(c.report.statistic),
            num(c.report.p_value),
            c.report.rejects(opts.level).to_string(),
        ]);
    }
    let mut ps: Vec<(f64, f64)> = {
        let mut p: Vec<f64> = bat.cases.iter().map(|c| c.report.p_value).collect();
        p.sort_by(|a, b| a.total_cmp(b));
        p.iter()
            .enumerate()
            .map(|(i, &v)| ((i + 1) as f64 / p.len() as f64, v))
            .collect()
    };
    ps.dedup();
    let checks = vec![
        Check::new(
            "rmp_battery",
            bat.pass,
            format!(
                "rejected fraction {} in [{}, {}]",
                bat.fraction, opts.band.0, opts.band.1
            ),
        ),
        Check::new(
            "positive_control",
            control.power >= 0.9,
            format!("power {} >= 0.9", control.power),
        ),
    ];
    let series = vec![Series::line(
        "rmp_pvalues",
        "sorted p-values",
        "rank / n",
        "p-value",
        false,
        ps,
    )];
    let calibration = binomial_test(bat.rejected as u64, bat.cases.len() as u64, opts.level);
    let summary = json!({
        "method": "chi2 2x2 independence, exact permutation calibration",
        "n": opts.n,
        "p_value": calibration.p_value,
        "pass": bat.pass,
        "fraction": bat.fraction,
        "rejected": bat.rejected,
        "conclusive": bat.cases.len(),
        "inconclusive": bat.inconclusive,
        "control": control,
    });
    Ok(Outcome {
        table,
        summary,
        series,
        checks,
    })
}

fn run_qk(cfg: &ExperimentConfig, seed: Seed) -> Result<Outcome> {
    let env_cfg = cfg.env_config()?;
    let model = env_cfg.model()?;
    let n = cfg.count("experiment.n");
    let q = renorm::estimate_qk_cascade(
        &model,
        cfg.count("experiment.k_min") as u32,
        cfg.count("experiment.k_max") as u32,
        n,
        seed,
    )?;
    let mut table = Table::new(&["k", "L", "q", "ci_lo", "ci_hi", "successes", "n"]);
    for e in &q {
        table.push(vec![
            e.k.to_string(),
            e.scale.to_string(),
            num(e.estimate),
            num(e.ci_lo),
            num(e.ci_hi),
            e.successes.to_string(),
            n.to_string(),
        ]);
    }
    let alpha = env_cfg.alpha();
    let k_fit = cfg.count("experiment.k_min") as u32;
    let constant = renorm::fit_cascade_constant(&model, k_fit, alpha, n, seed.named("constant"))?;
    let (checks, series, cascade) = match renorm::check_cascade(&q, alpha, &constant) {
        Ok(c) => {
            let mut checks = vec![Check::new(
                "qk_slope",
                c.slope.slope <= -(alpha - 0.5),
                format!(
                    "slope {:.3} +- {:.3} <= {}",
                    c.slope.slope,
                    c.slope.se,
                    -(alpha - 0.5)
                ),
            )];
            for &(k, lhs, rhs, ok) in &c.checks {
                checks.push(Check::new(
                    &format!("qk_recursion_k{k}"),
                    ok,
                    format!("{lhs} <= {rhs}"),
                ));
            }
            let series =
                vec![
                    Series::line("qk", "q_k", "L_k", "q_k", true, c.slope_points.clone())
                        .with_guide(-alpha),
                ];
            (checks, series, json!(c))
        }
        Err(e) => (
            vec![Check::new("qk_slope", false, e.to_string())],
            vec![],
            json!(null),
        ),
    };
    Ok(Outcome {
        table,
        summary: json!({"q": q, "cascade": cascade}),
        series,
        checks,
    })
}

fn run_truncation(cfg: &ExperimentConfig, seed: Seed) -> Result<Outcome> {
    let env_cfg = cfg.env_config()?;
    let model = env_cfg.model()?;
    let n = cfg.count("experiment.n");
    let mut table = Table::new(&["s", "estimate", "ci_lo", "ci_hi", "count", "n", "exact"]);
    let mut pts = Vec::new();
    let mut rows = Vec::new();
    let mut consistent = true;
    for &s in cfg.int_list("experiment.s_values") {
        let s = s as u64;
        let count = eta_mismatch_count(&model, s, 2 * s, n, seed.child(s))?;
        let (lo, hi) = wilson_interval(count, n, Z95);
        let p = count as f64 / n as f64;
        let exact = match &model {
            EnvModel::Renewal(m) => Some(renewal::exact::eta_mismatch(m, s, 2 * s)),
            EnvModel::Boolean(_) => None,
        };
        if let Some(x) = exact {
            consistent &= lo <= x && x <= hi;
        }
        // Fit on the closed form when there is one; otherwise on the
        // frequencies, with the upper bound standing in for zero counts.
        pts.push((s as f64, exact.unwrap_or(if count == 0 { hi } else { p })));
        table.push(vec![
            s.to_string(),
            num(p),
            num(lo),
            num(hi),
            count.to_string(),
            n.to_string(),
            exact.map(num).unwrap_or_default(),
        ]);
        rows.push(json!({"s": s, "estimate": p, "ci": [lo, hi], "count": count, "exact": exact}));
    }
    let target = -(env_cfg.alpha()) + 0.5;
    let mut checks = Vec::new();
    let fit = loglog_slope(&pts);
    match &fit {
        Ok(f) => checks.push(Check::new(
            "truncation_slope",
            f.slope <= target,
            format!("slope {:.3} +- {:.3} <= {target}", f.slope, f.se),
        )),
        Err(e) => checks.push(Check::new("truncation_slope", false, e.to_string())),
    }
    if matches!(model, EnvModel::Renewal(_)) {
        checks.push(Check::new(
            "closed_form_in_interval",
            consistent,
            "closed form inside every 95% interval",
        ));
    }
    let series = vec![Series::line(
        "truncation",
        "P(eta^s != eta^2s)",
        "s",
        "probability",
        true,
        pts,
    )
    .with_guide(-env_cfg.alpha())];
    let summary = json!({"levels": rows, "fit": fit.ok(), "target_slope": target});
    Ok(Outcome {
        table,
        summary,
        series,
        checks,
    })
}

fn run_stationarity(cfg: &ExperimentConfig, seed: Seed) -> Result<Outcome> {
    let EnvModel::Renewal(m) = cfg.env_config()?.model()? else {
        return Err(Error::config("env", "stationarity needs env = renewal"));
    };
    let r = renewal::stationarity(&m, cfg.count("experiment.n"), seed)?;
    let hat = m.config().mu.hat_mu()?;
    let mut table = Table::new(&["value", "count", "frequency", "stationary"]);
    // Observed values plus the stationary support above 1e-12.
    let support = hat.iter().rposition(|&p| p > 1e-12).map_or(0, |i| i + 1);
    for k in 0..r.counts.len().max(support) {
        let c = r.counts.get(k).copied().unwrap_or(0);
        table.push(vec![
            k.to_string(),
            c.to_string(),
            num(c as f64 / r.n as f64),
            num(hat.get(k).copied().unwrap_or(0.0)),
        ]);
    }
    let checks = vec![Check::new(
        "stationary_law",
        r.tv < 0.01,
        format!("total variation {} < 0.01", r.tv),
    )];
    Ok(Outcome {
        table,
        summary: json!({"tv": r.tv, "n": r.n}),
        series: vec![],
        checks,
    })
}

/// Run `rwre suite`: every `*.toml` in `dir`, sorted by name, each into
/// `out/<stem>/`.
fn suite(dir: &Path, out: &Path, check: bool, jobs: Option<usize>, plots: bool) -> Result<bool> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::usage(format!(
            "no .toml configs in {}",
            dir.display()
        )));
    }
    let mut all = true;
    for f in files {
        let cfg = ExperimentConfig::parse(&std::fs::read_to_string(&f)?)?;
        let command = cfg.str("command").to_string();
        if command.is_empty() {
            return Err(Error::config(
                "command",
                format!("{} does not name a subcommand", f.display()),
            ));
        }
        let stem = f
            .file_stem()
            .expect("has a name")
            .to_string_lossy()
            .to_string();
        let o = execute(
            &command,
            &cfg,
            &out.join(&stem),
            jobs,
            plots,
            command == "mj",
        )?;
        all &= o.pass();
    }
    Ok(all || !check)
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let res = match &cli.command {
        Command::Keys => {
            print!("{}", key_help());
            Ok(true)
        }
        Command::Suite {
            dir,
            out,
            check,
            jobs,
            plots,
        } => suite(dir, out, *check, *jobs, *plots),
        other => {
            let (name, common) = match other {
                Command::Blocks(c) => ("blocks", c),
                Command::Simulate(c) => ("simulate", c),
                Command::Renorm(c) => ("renorm", c),
                Command::Mj(c) => ("mj", c),
                Command::Akh(c) => ("akh", c),
                Command::Decouple(c) => ("decouple", c),
                Command::RmpTest(c) => ("rmp-test", c),
                Command::Qk(c) => ("qk", c),
                Command::Truncation(c) => ("truncation", c),
                Command::Stationarity(c) => ("stationarity", c),
                Command::Keys | Command::Suite { .. } => unreachable!(),
            };
            load(common)
                .and_then(|cfg| {
                    execute(
                        name,
                        &cfg,
                        &common.out,
                        common.jobs,
                        common.plots,
                        common.brute_force,
                    )
                })
                .map(|o| o.pass() || !common.check)
        }
    };
    match res {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_CHECK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
