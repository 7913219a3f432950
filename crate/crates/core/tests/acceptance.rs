//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Statistical criteria run on the bundled
//! configs in `configs/` with their fixed seed.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use serde_json::Value;

use rwre_core::cli::execute;
use rwre_core::config::ExperimentConfig;
use rwre_core::lattice::{Dim, LatticePoint};
use rwre_core::renorm::{self, DpMode, ExplicitTraps, ThreatProblem};
use rwre_core::report::{Check, Outcome};
use rwre_core::rng::Seed;

struct Line {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
    seconds: f64,
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(file: &str) -> ExperimentConfig {
    let text =
        std::fs::read_to_string(configs().join(file)).unwrap_or_else(|e| panic!("{file}: {e}"));
    ExperimentConfig::parse(&text).unwrap_or_else(|e| panic!("{file}: {e}"))
}

/// Run a bundled config; returns the outcome, the summary JSON and the wall time.
fn run(file: &str, out: &Path) -> Result<(Outcome, Value, f64), String> {
    let cfg = load(file);
    let command = cfg.str("command").to_string();
    let dir = out.join(file.trim_end_matches(".toml"));
    let start = Instant::now();
    let outcome = execute(&command, &cfg, &dir, None, false, command == "mj")
        .map_err(|e| format!("{file}: {e}"))?;
    let seconds = start.elapsed().as_secs_f64();
    let text = std::fs::read_to_string(dir.join(format!("{command}.summary.json")))
        .map_err(|e| e.to_string())?;
    let summary: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    Ok((outcome, summary, seconds))
}

fn find<'a>(o: &'a Outcome, name: &str) -> Option<&'a Check> {
    o.checks.iter().find(|c| c.name == name)
}

fn describe(checks: &[&Check]) -> (bool, String) {
    let pass = !checks.is_empty() && checks.iter().all(|c| c.pass);
    let detail = checks
        .iter()
        .map(|c| format!("{}: {}", c.name, c.detail))
        .collect::<Vec<_>>()
        .join("; ");
    (pass, detail)
}

fn all_checks(file: &str, o: &Outcome) -> (bool, String) {
    let (pass, detail) = describe(&o.checks.iter().collect::<Vec<_>>());
    (pass, format!("[{file}] {detail}"))
}

/// Criterion 3: DP against enumeration on random instances with d = 1,
/// R <= 2, JH <= 8 and at most 6 traps.
fn mj_exactness() -> (bool, String) {
    let mut s = Seed::new(2024).named("mj-instances").stream();
    let mut mismatches = 0;
    let mut max_m = 0;
    let mut positive = 0;
    for i in 0..1000 {
        let range = 1 + s.below(2) as u32;
        let (j, h) = loop {
            let j = 1 + s.below(8);
            let h = 1 + s.below(8);
            if j * h <= 8 {
                break (j, h);
            }
        };
        // Traps inside the cone reachable from the origin, so most of them
        // can matter.
        let n_traps = s.below(7) as usize;
        let traps: Vec<LatticePoint> = (0..n_traps)
            .map(|_| {
                let t = s.below(j * h + 1) as i64;
                let reach = range as i64 * t;
                let x = s.below(2 * reach as u64 + 1) as i64 - reach;
                LatticePoint::new1(x, t)
            })
            .collect();
        let set = ExplicitTraps::new(Dim::ONE, traps);
        let problem = ThreatProblem::m_j(j, h, range);
        let dp = renorm::min_threats(&problem, &set, None, DpMode::Serial).expect("dp");
        let layered = renorm::min_threats(&problem, &set, None, DpMode::LayerParallel).expect("dp");
        let brute = renorm::min_threats_brute(&problem, &set).expect("enumeration");
        if dp != brute || layered != brute {
            mismatches += 1;
            eprintln!(
                "instance {i}: J={j} H={h} R={range} dp={dp} layered={layered} brute={brute}"
            );
        }
        max_m = max_m.max(brute);
        positive += (brute > 0) as u32;
    }
    (
        mismatches == 0,
        format!("{mismatches} mismatches over 1000 instances ({positive} with M_J > 0, largest {max_m})"),
    )
}

/// Criterion 11: every subcommand, run twice at --jobs 1 and once at
/// --jobs 4, writes identical artifacts apart from the wall-clock line.
fn determinism(work: &Path) -> (bool, String) {
    let boolean = "env = \"boolean\"\nseed = 5\n[kernel]\nkappa = 0.1\n[experiment]\n\
        n = 60\nn_boot = 20\nruns = 4\nt_final = 500\nclt_runs = 20\nclt_t = 100\nk_max = 3\nJ = 2\nH = 3\n\
        walks = 50\npairs = 6\nrequired = 5\ncontrol_n = 200\ncontrol_reps = 2\nbox_L = 8\n";
    let renewal = boolean.replace("env = \"boolean\"", "env = \"renewal\"");
    let cases: [(&str, &str); 11] = [
        ("blocks", boolean),
        ("simulate", boolean),
        ("renorm", boolean),
        ("mj", boolean),
        ("akh", boolean),
        ("decouple", boolean),
        ("rmp-test", boolean),
        ("qk", boolean),
        ("truncation", boolean),
        ("truncation", &renewal),
        ("stationarity", &renewal),
    ];
    let exe = env!("CARGO_BIN_EXE_rwre");
    let mut bad = Vec::new();
    for (i, (cmd, text)) in cases.iter().enumerate() {
        let cfg = work.join(format!("det{i}.toml"));
        std::fs::write(&cfg, text).unwrap();
        let mut runs = Vec::new();
        for (k, jobs) in ["1", "1", "4"].iter().enumerate() {
            let out = work.join(format!("det{i}-{k}"));
            let status = Command::new(exe)
                .args([
                    *cmd,
                    "--config",
                    cfg.to_str().unwrap(),
                    "--out",
                    out.to_str().unwrap(),
                ])
                .args(["--jobs", jobs, "--plots", "--brute-force"])
                .output()
                .expect("binary runs");
            if !status.status.success() {
                bad.push(format!("{cmd} exited {:?}", status.status.code()));
            }
            runs.push(artifacts(&out));
        }
        if runs[0].is_empty() || runs.iter().any(|r| *r != runs[0]) {
            bad.push(format!("{cmd} artifacts differ"));
        }
    }
    let detail = if bad.is_empty() {
        format!(
            "{} subcommand runs identical at --jobs 1, 1, 4",
            cases.len()
        )
    } else {
        bad.join("; ")
    };
    (bad.is_empty(), detail)
}

/// File name and content of every artifact, with the wall-clock line removed.
fn artifacts(dir: &Path) -> Vec<(String, String)> {
    let mut files: Vec<(String, String)> = std::fs::read_dir(dir)
        .map(|rd| {
            rd.filter_map(|e| e.ok())
                .map(|e| {
                    let text = std::fs::read_to_string(e.path()).unwrap_or_default();
                    let kept: Vec<&str> = text
                        .lines()
                        .filter(|l| !l.contains("\"wall_clock_seconds\""))
                        .collect();
                    (
                        e.file_name().to_string_lossy().into_owned(),
                        kept.join("\n"),
                    )
                })
                .collect()
        })
        .unwrap_or_default();
    files.sort();
    files
}

fn main() {
    let work = tempfile::tempdir().expect("temp dir");
    let out = work.path();
    let mut lines: Vec<Line> = Vec::new();
    let mut push = |id, name, (pass, detail): (bool, String), seconds| {
        let l = Line {
            id,
            name,
            pass,
            detail,
            seconds,
        };
        println!(
            "criterion {:>2} {:<28} {}  ({:.1} s) {}",
            l.id,
            l.name,
            if l.pass { "PASS" } else { "FAIL" },
            l.seconds,
            l.detail
        );
        lines.push(l);
    };

    match run("01-lln.toml", out) {
        Ok((o, summary, secs)) => {
            let est = &summary["results"]["estimates"];
            let used = est["n_blocks"].as_u64().unwrap_or(0);
            let speed = find(&o, "speed_agreement").cloned();
            let mut c1: Vec<Check> = speed.into_iter().collect();
            c1.push(Check::new(
                "uncensored_blocks",
                used >= 20_000,
                format!("{used} >= 20000"),
            ));
            c1.push(Check::new(
                "runtime",
                secs < 15.0 * 60.0,
                format!("{secs:.0} s < 900 s"),
            ));
            push(
                1,
                "LLN cross-check",
                describe(&c1.iter().collect::<Vec<_>>()),
                secs,
            );
            let mut c2: Vec<Check> = find(&o, "gaussian_limit").cloned().into_iter().collect();
            c2.push(Check::new(
                "runtime",
                secs < 20.0 * 60.0,
                format!("{secs:.0} s < 1200 s"),
            ));
            push(
                2,
                "CLT cross-check",
                describe(&c2.iter().collect::<Vec<_>>()),
                secs,
            );
        }
        Err(e) => {
            push(1, "LLN cross-check", (false, e.clone()), 0.0);
            push(2, "CLT cross-check", (false, e), 0.0);
        }
    }

    let start = Instant::now();
    let (pass, detail) = mj_exactness();
    let secs = start.elapsed().as_secs_f64();
    push(
        3,
        "M_J exactness",
        (pass && secs < 60.0, format!("{detail}; {secs:.1} s < 60 s")),
        secs,
    );

    let single = |file: &str| -> ((bool, String), f64) {
        match run(file, out) {
            Ok((o, _, secs)) => (all_checks(file, &o), secs),
            Err(e) => ((false, e), 0.0),
        }
    };
    let pair = |a: &str, b: &str| -> ((bool, String), f64) {
        let ((pa, da), sa) = single(a);
        let ((pb, db), sb) = single(b);
        ((pa && pb, format!("{da} | {db}")), sa + sb)
    };

    let (r, s) = single("03-renorm.toml");
    push(4, "fall-on-trap bound", r, s);
    let (r, s) = single("04-qk.toml");
    push(5, "q_k cascade", r, s);
    let (r, s) = pair("05-truncation-boolean.toml", "06-truncation-renewal.toml");
    push(6, "truncation slopes", r, s);
    let (r, s) = pair("07-decouple-boolean.toml", "08-decouple-renewal.toml");
    push(7, "decoupling battery", r, s);
    let (r, s) = pair("09-rmp-boolean.toml", "10-rmp-renewal.toml");
    push(8, "RMP battery", r, s);
    let (r, s) = single("11-stationarity.toml");
    push(9, "renewal stationarity", r, s);
    let (r, s) = single("12-blocks.toml");
    push(10, "T_1 tail and censoring", r, s);

    let start = Instant::now();
    let det_dir = out.join("determinism");
    std::fs::create_dir_all(&det_dir).unwrap();
    let r = determinism(&det_dir);
    push(11, "determinism", r, start.elapsed().as_secs_f64());

    let failed: Vec<u32> = lines.iter().filter(|l| !l.pass).map(|l| l.id).collect();
    println!(
        "{} of {} criteria passed",
        lines.len() - failed.len(),
        lines.len()
    );
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
