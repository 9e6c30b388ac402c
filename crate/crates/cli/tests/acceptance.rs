//! Acceptance checks, one PASS/FAIL line per criterion. Exits nonzero if any
//! criterion fails.

use rand::Rng;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use camab_core::algorithms::{at_ucb, run_ucb, AtUcbConfig, DeltaSetting};
use camab_core::bandit::{ArmId, Environment, GaussianBandit};
use camab_core::harness::{cmd_sweep, parse_config};
use camab_core::metrics::{w2_empirical, w2_gaussian, EmpiricalDistribution, GaussianSpec};
use camab_core::sirs::{simulate, simulate_free, SirsParams};
use camab_core::theory::{
    check_lemma3, empirical_vs_bound, lemma3_lhs, min_abstract_horizon, random_specs, reference_spec,
    theorem_suite, BoundStatus, HorizonRequirement,
};
use camab_core::Stream;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn theorem_suite_check() -> Outcome {
    let specs = random_specs(100, Stream::new(11));
    let rows = theorem_suite(&specs, 1.0);
    let failures = rows.iter().filter(|r| !r.report.holds).count();
    outcome(failures == 0, format!("{} checks on 100 specs, {failures} failures", rows.len()))
}

fn exp_sum_check() -> Outcome {
    let n = 100;
    let mut checked = 0;
    let mut unsatisfiable = 0;
    let mut bad = Vec::new();
    for (i, spec) in random_specs(50, Stream::new(12)).iter().enumerate() {
        match min_abstract_horizon(spec, n) {
            HorizonRequirement::Unsatisfiable => unsatisfiable += 1,
            HorizonRequirement::Required { n_prime, .. } => {
                checked += 1;
                let r = check_lemma3(spec, n, n_prime);
                let doubled = lemma3_lhs(spec, 2.0 * n_prime as f64);
                if !r.assumption_met || !r.bound.holds || doubled >= r.bound.lhs {
                    bad.push(i);
                }
            }
        }
    }
    outcome(
        bad.is_empty(),
        format!("{checked} specs at the minimal n', {unsatisfiable} unsatisfiable, failing specs {bad:?}"),
    )
}

fn regret_bound_check() -> Outcome {
    let spec = reference_spec();
    let (n, cost) = (1000, 0.01);
    let Some(n_prime) = min_abstract_horizon(&spec, n).n_prime() else {
        return outcome(false, "horizon assumption unsatisfiable");
    };
    match empirical_vs_bound(&spec, n, n_prime, cost, 200, DeltaSetting::OneOverNSquared, Stream::new(13)) {
        Ok(r) => outcome(
            r.status == BoundStatus::Holds,
            format!(
                "n'={n_prime}, mean regret {:.3} (se {:.3}) vs bound {:.3}, {:?}",
                r.mean_regret, r.stderr, r.bound, r.status
            ),
        ),
        Err(e) => outcome(false, e.to_string()),
    }
}

fn gaussian_samples(g: GaussianSpec, m: usize, stream: Stream) -> Vec<f64> {
    let env = GaussianBandit::new(vec![g]).unwrap();
    let mut rng = stream.rng();
    (0..m).map(|_| env.sample(ArmId(0), &mut rng)).collect()
}

fn wasserstein_check() -> Outcome {
    let stream = Stream::new(14);
    let mut rng = stream.rng();
    let mut worst = 0.0f64;
    for i in 0..20u64 {
        let mut draw = || GaussianSpec::new(rng.random_range(-3.0..=3.0), rng.random_range(0.1..=2.0));
        let (g1, g2) = (draw(), draw());
        let p = EmpiricalDistribution::new(gaussian_samples(g1, 10_000, stream.child(2 * i))).unwrap();
        let q = EmpiricalDistribution::new(gaussian_samples(g2, 10_000, stream.child(2 * i + 1))).unwrap();
        worst = worst.max((w2_empirical(&p, &q) - w2_gaussian(g1, g2)).abs());
    }

    // sizes divide 240, so every pairwise quantile grid is exact
    let sizes = [40usize, 48, 60, 80, 120, 240];
    let mut axiom_failures = 0;
    for t in 0..100u64 {
        let sets: Vec<EmpiricalDistribution> = (0..3u64)
            .map(|j| {
                let g = GaussianSpec::new(rng.random_range(-3.0..=3.0), rng.random_range(0.1..=2.0));
                let m = sizes[rng.random_range(0..sizes.len())];
                EmpiricalDistribution::new(gaussian_samples(g, m, stream.child(1000 + 3 * t + j))).unwrap()
            })
            .collect();
        let d = |a: usize, b: usize| w2_empirical(&sets[a], &sets[b]);
        let symmetric = (d(0, 1) - d(1, 0)).abs() <= 1e-12;
        let identity = d(0, 0) == 0.0 && d(1, 1) == 0.0;
        let triangle = d(0, 2) <= d(0, 1) + d(1, 2) + 1e-9;
        if !(symmetric && identity && triangle) {
            axiom_failures += 1;
        }
    }
    outcome(
        worst <= 0.05 && axiom_failures == 0,
        format!("max |empirical - closed form| = {worst:.4}, axiom failures {axiom_failures}/100"),
    )
}

fn sirs_check() -> Outcome {
    let params = SirsParams::base_default();
    let stream = Stream::new(15);
    let mut violations = 0;
    let mut points = 0;
    for r in 0..100u64 {
        let mut rng = stream.child(r).rng();
        let (traj, _) = if r % 11 == 10 {
            simulate_free(&params, &mut rng)
        } else {
            simulate(&params, (r % 11) as usize, &mut rng).unwrap()
        };
        points = traj.time_points();
        for step in 0..traj.time_points() {
            violations += traj.at(step).iter().filter(|c| c.total() != params.n_per_community).count();
        }
        if traj.time_points() != 101 {
            violations += 1;
        }
    }
    let mut frozen = params.clone();
    frozen.beta = vec![0.0; 10];
    frozen.gamma = vec![0.0; 10];
    frozen.zeta = vec![0.0; 10];
    let frozen_reward = simulate_free(&frozen, &mut stream.rng()).1;
    let mut clean = params.clone();
    clean.init_fracs = (1.0, 0.0, 0.0);
    let clean_reward = simulate(&clean, 0, &mut stream.rng()).unwrap().1;
    outcome(
        violations == 0 && frozen_reward == -10100.0 && clean_reward == 0.0,
        format!(
            "{points} time points, {violations} conservation violations, frozen reward {frozen_reward}, i0=0 reward {clean_reward}"
        ),
    )
}

fn sweep_trend_check() -> Outcome {
    let config = parse_config("").unwrap();
    let result = match cmd_sweep(&config, Stream::new(config.seed)) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let first = &result.aggregate[0];
    let last = result.aggregate.last().unwrap();
    let trend: Vec<String> = result.aggregate.iter().map(|a| format!("{:.1}", a.mean_diff)).collect();
    outcome(
        first.mean_diff > 0.0 && last.mean_diff <= first.mean_diff + first.se_diff,
        format!(
            "eps {:.3}: diff {:.3} (se {:.3}); eps {:.3}: diff {:.3}; trend [{}]",
            first.epsilon,
            first.mean_diff,
            first.se_diff,
            last.epsilon,
            last.mean_diff,
            trend.join(", ")
        ),
    )
}

fn reduction_check() -> Outcome {
    let stream = Stream::new(17);
    let mut mismatches = 0;
    for (i, spec) in random_specs(10, stream).iter().enumerate() {
        let camab = spec.camab(0.0).unwrap();
        let cfg = AtUcbConfig {
            n: 200,
            n_prime: 4 * spec.abstract_arms.len() as u64,
            epsilon: f64::INFINITY,
            delta: DeltaSetting::Fixed(0.1),
        };
        let run = stream.child(100 + i as u64);
        let at = at_ucb(&camab, &cfg, run).unwrap();
        let arms: Vec<ArmId> = (0..spec.base_arms.len()).map(ArmId).collect();
        let ucb = run_ucb(camab.base.as_ref(), &arms, 200, 0.1, run.base_phase()).unwrap();
        if at.history.actions() != ucb.history.actions() {
            mismatches += 1;
        }
    }
    let two = GaussianBandit::constant(&[1.0, 0.0]).unwrap();
    let split = run_ucb(&two, &[ArmId(0), ArmId(1)], 10, 0.1, Stream::new(18))
        .unwrap()
        .history
        .pull_counts(2);
    outcome(
        mismatches == 0 && split == vec![8, 2],
        format!("{mismatches}/10 action-sequence mismatches, two-arm split {split:?}"),
    )
}

fn sweep_once(dir: &Path, name: &str, config: &Path, timestamp: bool) -> Result<(Vec<u8>, Vec<u8>), String> {
    let out = dir.join(format!("{name}.csv"));
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_camab"));
    cmd.arg("sweep").arg("--config").arg(config).arg("--seed").arg("7").arg("--out").arg(&out);
    if !timestamp {
        cmd.arg("--no-timestamp");
    }
    let status = cmd.output().map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(String::from_utf8_lossy(&status.stderr).into_owned());
    }
    let read = |p: &Path| std::fs::read(p).map_err(|e| e.to_string());
    Ok((read(&out)?, read(&dir.join(format!("{name}.aggregate.csv")))?))
}

fn rerun_check() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sweep.toml");
    std::fs::write(&config, "[experiment]\nrepeats = 4\n").unwrap();
    let runs = (
        sweep_once(dir.path(), "a", &config, false),
        sweep_once(dir.path(), "b", &config, false),
        sweep_once(dir.path(), "c", &config, true),
    );
    match runs {
        (Ok(a), Ok(b), Ok(c)) => {
            let stamped = String::from_utf8_lossy(&c.0);
            let body = stamped.split_once('\n').map(|(_, rest)| rest).unwrap_or("");
            let identical = a == b;
            let header_only = stamped.starts_with("# generated_unix=") && body.as_bytes() == a.0.as_slice();
            outcome(
                identical && header_only,
                format!(
                    "{} + {} bytes, identical: {identical}; timestamped run differs only in its header: {header_only}",
                    a.0.len(),
                    a.1.len()
                ),
            )
        }
        (a, b, c) => outcome(false, format!("{:?}", [a.err(), b.err(), c.err()])),
    }
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 theorem suite", theorem_suite_check, Duration::from_secs(5)),
        ("2 exponential-sum bound at the minimal abstract budget", exp_sum_check, Duration::from_secs(5)),
        ("3 regret bound Monte Carlo", regret_bound_check, Duration::from_secs(120)),
        ("4 Wasserstein accuracy and axioms", wasserstein_check, Duration::from_secs(30)),
        ("5 SIRS integrity", sirs_check, Duration::from_secs(10)),
        ("6 regret difference vs epsilon", sweep_trend_check, Duration::from_secs(600)),
        ("7 determinism and reduction to UCB", reduction_check, Duration::from_secs(5)),
        ("8 byte-identical reruns", rerun_check, Duration::MAX),
    ];
    let mut failed = 0;
    for (name, check, budget) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let pass = result.pass && elapsed <= budget;
        if !pass {
            failed += 1;
        }
        let over = if elapsed > budget { " (over time budget)" } else { "" };
        println!(
            "{} criterion {name}: {} [{:.2}s{over}]",
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
