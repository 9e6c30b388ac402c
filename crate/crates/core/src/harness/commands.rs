use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeSet;

use super::config::{AlgorithmKind, EnvironmentKind, ExperimentConfig, ModelKind};
use super::csv::{fmt_g, CsvTable};
use super::pilot::{pilot_cache_key, pilot_means, PilotCache};
use crate::algorithms::{at_ucb, run_ucb, AtUcbConfig, FilterResult};
use crate::bandit::{cumulative_regret, instantaneous_regret, ArmId, CamabInstance, RunHistory};
use crate::error::{CamabError, Result};
use crate::metrics::{estimate_errors, measure_errors, AbstractionErrors, RewardMap};
use crate::sirs::{geomspace, simulate, simulate_free, SirsCamab, Trajectory};
use crate::stream::Stream;
use crate::theory::{
    empirical_vs_bound, lemma3_suite, min_abstract_horizon, random_specs, reference_spec, theorem_suite,
    BoundStatus, CheckRow, HorizonRequirement, SyntheticCamabSpec,
};

const PILOT_KEY: u64 = 0x9110;
const MEASURE_KEY: u64 = 0x3EA5;
const SWEEP_KEY: u64 = 0x5EE9;
const UNPAIRED_KEY: u64 = 0x0C8B;
const RUN_KEY: u64 = 0x7A11;
const VERIFY_KEY: u64 = 0x7E21;
const LEMMA3_KEY: u64 = 0x1E33;
const MC_KEY: u64 = 0x3C3C;
const SIMULATE_KEY: u64 = 0x5135;

/// Default sweep grid size.
pub const DEFAULT_GRID_POINTS: usize = 8;

/// The configured environment, built and validated.
#[derive(Clone, Debug)]
pub enum Model {
    Sirs(Box<SirsCamab>),
    Synthetic(SyntheticCamabSpec),
}

impl Model {
    pub fn from_config(config: &ExperimentConfig) -> Result<Self> {
        Ok(match config.environment {
            EnvironmentKind::Sirs => Model::Sirs(Box::new(config.sirs.build()?)),
            EnvironmentKind::Synthetic => Model::Synthetic(config.synthetic.build()?),
        })
    }

    pub fn camab(&self, cost_c: f64) -> Result<CamabInstance> {
        match self {
            Model::Sirs(m) => m.camab(cost_c),
            Model::Synthetic(s) => s.camab(cost_c),
        }
    }

    /// Factor converting learner rewards back to raw outcome units.
    pub fn raw_factor(&self) -> f64 {
        match self {
            Model::Sirs(m) => 1.0 / m.reward_scale,
            Model::Synthetic(_) => 1.0,
        }
    }

    /// Exact means for synthetic instances; pilot estimates for SIRS.
    pub fn true_means(&self, config: &ExperimentConfig, stream: Stream, cache: &PilotCache) -> Result<Vec<f64>> {
        match self {
            Model::Synthetic(s) => Ok(s.base_means()),
            Model::Sirs(m) => {
                let samples = config.pilot.samples;
                let seed = config.pilot.seed.unwrap_or_else(|| stream.child(PILOT_KEY).seed());
                let env = m.base_env();
                let key = pilot_cache_key(&(&m.base, m.reward_scale), samples, seed)?;
                cache.get_or_compute(&key, || pilot_means(&env, samples, Stream::new(seed)))
            }
        }
    }

    /// Estimated abstraction errors from `m` draws per arm.
    pub fn measure(&self, m: usize, stream: Stream) -> Result<AbstractionErrors> {
        match self {
            Model::Sirs(model) => measure_errors(model.as_ref(), m, stream),
            Model::Synthetic(spec) => estimate_errors(&spec.camab(0.0)?, &RewardMap::affine(spec.tau), m, stream),
        }
    }
}

fn set_cell(set: &BTreeSet<ArmId>) -> String {
    set.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(";")
}

fn list_cell(values: &[f64]) -> String {
    values.iter().map(|&v| fmt_g(v)).collect::<Vec<_>>().join(";")
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    crate::theory::mean_and_stderr(values)
}

// ---------------------------------------------------------------- measure

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeasureRecord {
    pub errors: AbstractionErrors,
    pub m: usize,
    pub seed: u64,
}

impl MeasureRecord {
    pub fn table(&self) -> CsvTable {
        let mut t = CsvTable::new(&["s", "e", "epsilon", "m", "seed"]);
        t.push(vec![
            fmt_g(self.errors.s),
            fmt_g(self.errors.e),
            fmt_g(self.errors.epsilon),
            self.m.to_string(),
            self.seed.to_string(),
        ]);
        t
    }
}

pub fn cmd_measure(config: &ExperimentConfig, stream: Stream) -> Result<MeasureRecord> {
    let model = Model::from_config(config)?;
    let m = config.measure.m;
    let errors = model.measure(m, stream.child(MEASURE_KEY))?;
    Ok(MeasureRecord {
        errors,
        m,
        seed: stream.seed(),
    })
}

// ---------------------------------------------------------------- sweep

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub repeat: usize,
    pub seed: u64,
    pub regret_ucb: f64,
    pub regret_atucb: f64,
    pub diff: f64,
    pub d_hat_size: usize,
    pub a_hat_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepAggregate {
    pub epsilon: f64,
    pub repeats: usize,
    pub mean_diff: f64,
    pub se_diff: f64,
    pub mean_regret_ucb: f64,
    pub mean_regret_atucb: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    /// Measured errors when the grid was derived from them.
    pub measured: Option<AbstractionErrors>,
    pub grid: Vec<f64>,
    pub true_means: Vec<f64>,
    /// Ordered by epsilon, then repeat.
    pub rows: Vec<SweepRow>,
    pub aggregate: Vec<SweepAggregate>,
}

impl SweepResult {
    pub fn rows_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&[
            "epsilon", "repeat", "seed", "regret_ucb", "regret_atucb", "diff", "d_hat_size", "a_hat_size",
        ]);
        for r in &self.rows {
            t.push(vec![
                fmt_g(r.epsilon),
                r.repeat.to_string(),
                r.seed.to_string(),
                fmt_g(r.regret_ucb),
                fmt_g(r.regret_atucb),
                fmt_g(r.diff),
                r.d_hat_size.to_string(),
                r.a_hat_size.to_string(),
            ]);
        }
        t
    }

    pub fn aggregate_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&[
            "epsilon", "repeats", "mean_diff", "se_diff", "mean_regret_ucb", "mean_regret_atucb",
        ]);
        for a in &self.aggregate {
            t.push(vec![
                fmt_g(a.epsilon),
                a.repeats.to_string(),
                fmt_g(a.mean_diff),
                fmt_g(a.se_diff),
                fmt_g(a.mean_regret_ucb),
                fmt_g(a.mean_regret_atucb),
            ]);
        }
        t
    }
}

/// `points` geometric values over `[eps / 8, 4 eps]`.
pub fn default_epsilon_grid(epsilon: f64, points: usize) -> Result<Vec<f64>> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(CamabError::domain(format!(
            "cannot derive a grid from epsilon = {epsilon}; set algorithm.epsilon_grid"
        )));
    }
    Ok(geomspace(epsilon / 8.0, 4.0 * epsilon, points))
}

/// UCB against AT-UCB over a grid of thresholds. Repeat `r` uses
/// `stream.child(SWEEP).child(r)` for every grid point, so the abstract
/// phase and (with paired seeds) the base-phase draws are shared across the
/// grid and with the UCB baseline.
pub fn cmd_sweep(config: &ExperimentConfig, stream: Stream) -> Result<SweepResult> {
    config.validate()?;
    let model = Model::from_config(config)?;
    let cache = PilotCache::new(config.pilot.cache_dir.clone());
    let means = model.true_means(config, stream, &cache)?;
    let alg = &config.algorithm;

    let (measured, grid) = match (&alg.epsilon_grid, alg.epsilon) {
        (Some(grid), _) => (None, grid.clone()),
        (None, Some(eps)) => (None, vec![eps]),
        (None, None) => {
            let errors = model.measure(config.measure.m, stream.child(MEASURE_KEY))?;
            log::info!("measured s = {}, e = {}, epsilon = {}", errors.s, errors.e, errors.epsilon);
            (Some(errors), default_epsilon_grid(errors.epsilon, DEFAULT_GRID_POINTS)?)
        }
    };

    let camab = model.camab(alg.cost_c)?;
    let all_arms: Vec<ArmId> = (0..camab.base.arm_count()).map(ArmId).collect();
    let delta = alg.delta.resolve(alg.n);
    let sweep = stream.child(SWEEP_KEY);
    let paired = config.experiment.paired_seeds;

    let per_repeat: Vec<Vec<SweepRow>> = (0..config.experiment.repeats)
        .into_par_iter()
        .map(|r| {
            let seed_r = sweep.child(r as u64);
            let ucb_stream = if paired {
                seed_r.base_phase()
            } else {
                seed_r.child(UNPAIRED_KEY).base_phase()
            };
            let ucb = run_ucb(camab.base.as_ref(), &all_arms, alg.n, delta, ucb_stream)?;
            let regret_ucb = cumulative_regret(&ucb.history, &means, alg.cost_c)?;
            grid.iter()
                .map(|&epsilon| {
                    let cfg = AtUcbConfig {
                        n: alg.n,
                        n_prime: alg.n_prime,
                        epsilon,
                        delta: alg.delta,
                    };
                    let out = at_ucb(&camab, &cfg, seed_r)?;
                    let regret_atucb = cumulative_regret(&out.history, &means, alg.cost_c)?;
                    Ok(SweepRow {
                        epsilon,
                        repeat: r,
                        seed: seed_r.seed(),
                        regret_ucb,
                        regret_atucb,
                        diff: regret_ucb - regret_atucb,
                        d_hat_size: out.filter.d_hat.len(),
                        a_hat_size: out.filter.a_hat_set.len(),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(grid.len() * per_repeat.len());
    let mut aggregate = Vec::with_capacity(grid.len());
    for (g, &epsilon) in grid.iter().enumerate() {
        let at_eps: Vec<&SweepRow> = per_repeat.iter().map(|rep| &rep[g]).collect();
        let diffs: Vec<f64> = at_eps.iter().map(|r| r.diff).collect();
        let (mean_diff, se_diff) = mean_se(&diffs);
        let n = at_eps.len() as f64;
        aggregate.push(SweepAggregate {
            epsilon,
            repeats: at_eps.len(),
            mean_diff,
            se_diff,
            mean_regret_ucb: at_eps.iter().map(|r| r.regret_ucb).sum::<f64>() / n,
            mean_regret_atucb: at_eps.iter().map(|r| r.regret_atucb).sum::<f64>() / n,
        });
        rows.extend(at_eps.into_iter().cloned());
    }
    Ok(SweepResult {
        measured,
        grid,
        true_means: means,
        rows,
        aggregate,
    })
}

// ---------------------------------------------------------------- run

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub algorithm: AlgorithmKind,
    pub epsilon: Option<f64>,
    pub n_prime: u64,
    pub cost_c: f64,
    pub history: RunHistory,
    pub true_means: Vec<f64>,
    pub raw_factor: f64,
    pub filter: Option<FilterResult>,
    pub recommended: ArmId,
    pub cumulative_regret: f64,
}

impl RunRecord {
    pub fn steps_table(&self) -> Result<CsvTable> {
        let inst = instantaneous_regret(&self.history, &self.true_means)?;
        let mut t = CsvTable::new(&["t", "arm", "reward", "raw_reward", "instantaneous_regret"]);
        for (i, ((arm, reward), regret)) in self
            .history
            .actions()
            .iter()
            .zip(self.history.rewards())
            .zip(inst)
            .enumerate()
        {
            t.push(vec![
                (i + 1).to_string(),
                arm.to_string(),
                fmt_g(*reward),
                fmt_g(reward * self.raw_factor),
                fmt_g(regret),
            ]);
        }
        Ok(t)
    }

    pub fn summary_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&["field", "value"]);
        let mut kv = |k: &str, v: String| t.push(vec![k.to_string(), v]);
        kv(
            "algorithm",
            match self.algorithm {
                AlgorithmKind::AtUcb => "at_ucb".into(),
                AlgorithmKind::Ucb => "ucb".into(),
            },
        );
        kv("epsilon", self.epsilon.map(fmt_g).unwrap_or_default());
        kv("n", self.history.len().to_string());
        kv("n_prime", self.n_prime.to_string());
        kv("cost_c", fmt_g(self.cost_c));
        kv("cumulative_regret", fmt_g(self.cumulative_regret));
        kv("recommended_arm", self.recommended.to_string());
        kv("true_means", list_cell(&self.true_means));
        if let Some(f) = &self.filter {
            kv("abstract_means", list_cell(&f.abstract_means));
            kv("d_hat", set_cell(&f.d_hat));
            kv("a_hat", set_cell(&f.a_hat_set));
            kv("fell_back", f.fell_back.to_string());
        }
        t
    }
}

pub fn cmd_run(config: &ExperimentConfig, stream: Stream) -> Result<RunRecord> {
    config.validate()?;
    let model = Model::from_config(config)?;
    let cache = PilotCache::new(config.pilot.cache_dir.clone());
    let true_means = model.true_means(config, stream, &cache)?;
    let alg = &config.algorithm;
    let camab = model.camab(alg.cost_c)?;
    let run_stream = stream.child(RUN_KEY);
    let delta = alg.delta.resolve(alg.n);

    let (history, filter, recommended, epsilon, n_prime) = match alg.kind {
        AlgorithmKind::Ucb => {
            let arms: Vec<ArmId> = (0..camab.base.arm_count()).map(ArmId).collect();
            let out = run_ucb(camab.base.as_ref(), &arms, alg.n, delta, run_stream.base_phase())?;
            let rec = out.recommended(delta);
            (out.history, None, rec, None, 0)
        }
        AlgorithmKind::AtUcb => {
            let epsilon = match alg.epsilon {
                Some(e) => e,
                None => model.measure(config.measure.m, stream.child(MEASURE_KEY))?.epsilon,
            };
            let cfg = AtUcbConfig {
                n: alg.n,
                n_prime: alg.n_prime,
                epsilon,
                delta: alg.delta,
            };
            let out = at_ucb(&camab, &cfg, run_stream)?;
            (out.history, Some(out.filter), out.a_hat_1, Some(epsilon), alg.n_prime)
        }
    };
    let cumulative_regret = cumulative_regret(&history, &true_means, alg.cost_c)?;
    Ok(RunRecord {
        algorithm: alg.kind,
        epsilon,
        n_prime,
        cost_c: alg.cost_c,
        history,
        true_means,
        raw_factor: model.raw_factor(),
        filter,
        recommended,
        cumulative_regret,
    })
}

// ---------------------------------------------------------------- verify

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyRow {
    pub suite: &'static str,
    pub spec: Option<usize>,
    pub check: &'static str,
    pub arm: Option<usize>,
    pub lhs: f64,
    pub rhs: f64,
    /// `None` when the check's hypotheses were not met.
    pub holds: Option<bool>,
    pub note: String,
}

impl VerifyRow {
    fn from_check(suite: &'static str, row: CheckRow) -> Self {
        let gated = !row.note.is_empty();
        VerifyRow {
            suite,
            spec: Some(row.spec),
            check: row.check,
            arm: row.arm,
            lhs: row.report.lhs,
            rhs: row.report.rhs,
            holds: if gated && !row.report.holds { None } else { Some(row.report.holds) },
            note: row.note.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub rows: Vec<VerifyRow>,
}

impl VerifyReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.holds == Some(false)).count()
    }

    pub fn passed(&self) -> bool {
        self.failures() == 0
    }

    pub fn table(&self) -> CsvTable {
        let mut t = CsvTable::new(&["suite", "spec", "check", "arm", "lhs", "rhs", "holds", "note"]);
        let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            t.push(vec![
                r.suite.to_string(),
                opt(r.spec),
                r.check.to_string(),
                opt(r.arm),
                fmt_g(r.lhs),
                fmt_g(r.rhs),
                match r.holds {
                    Some(true) => "true".into(),
                    Some(false) => "false".into(),
                    None => "n/a".into(),
                },
                r.note.clone(),
            ]);
        }
        t
    }
}

/// Randomized theorem suite, exponential-sum suite and the Monte Carlo
/// regret check.
/// The Monte Carlo check runs on the configured synthetic instance, or on
/// [`reference_spec`] when the environment is SIRS.
pub fn cmd_verify(config: &ExperimentConfig, stream: Stream) -> Result<VerifyReport> {
    config.validate()?;
    let v = &config.verify;
    let verify = stream.child(VERIFY_KEY);
    let mut rows = Vec::new();

    let specs = random_specs(v.specs, verify);
    rows.extend(theorem_suite(&specs, v.epsilon_scale).into_iter().map(|r| VerifyRow::from_check("theorem", r)));

    let lemma3_specs = random_specs(v.lemma3_specs, verify.child(LEMMA3_KEY));
    match v.lemma3_n_prime {
        None => rows.extend(
            lemma3_suite(&lemma3_specs, v.lemma3_n)
                .into_iter()
                .map(|r| VerifyRow::from_check("lemma3", r)),
        ),
        Some(n_prime) => {
            for (i, spec) in lemma3_specs.iter().enumerate() {
                let r = crate::theory::check_lemma3(spec, v.lemma3_n, n_prime);
                let row = CheckRow {
                    spec: i,
                    check: "lemma3",
                    arm: None,
                    report: r.bound,
                    note: if r.assumption_met { "" } else { "assumption unmet" },
                };
                rows.push(VerifyRow::from_check("lemma3", row));
            }
        }
    }

    let spec = match config.environment {
        EnvironmentKind::Synthetic => config.synthetic.build()?,
        EnvironmentKind::Sirs => reference_spec(),
    };
    let n_prime = match (v.mc_n_prime, min_abstract_horizon(&spec, v.mc_n)) {
        (Some(n_prime), _) => Some(n_prime),
        (None, HorizonRequirement::Required { n_prime, .. }) => Some(n_prime),
        (None, HorizonRequirement::Unsatisfiable) => None,
    };
    let mc_row = match n_prime {
        None => VerifyRow {
            suite: "mc",
            spec: None,
            check: "prop2",
            arm: None,
            lhs: f64::NAN,
            rhs: f64::NAN,
            holds: None,
            note: "unsatisfiable horizon".into(),
        },
        Some(n_prime) => {
            let r = empirical_vs_bound(&spec, v.mc_n, n_prime, v.mc_cost_c, v.mc_runs, v.mc_delta, verify.child(MC_KEY))?;
            let (holds, status) = match &r.status {
                BoundStatus::Holds => (Some(true), "holds".to_string()),
                BoundStatus::Violated => (Some(false), "violated".to_string()),
                BoundStatus::HypothesisMismatch(why) => (None, format!("hypothesis mismatch: {why}")),
            };
            VerifyRow {
                suite: "mc",
                spec: None,
                check: "prop2",
                arm: None,
                lhs: r.mean_regret,
                rhs: r.bound,
                holds,
                note: format!("{status}; stderr={}; runs={}; n_prime={n_prime}", fmt_g(r.stderr), r.runs),
            }
        }
    };
    rows.push(mc_row);
    Ok(VerifyReport { rows })
}

// ---------------------------------------------------------------- simulate

#[derive(Clone, Debug)]
pub struct SimulateRecord {
    pub dt: f64,
    pub trajectory: Trajectory,
    pub reward: f64,
}

impl SimulateRecord {
    pub fn table(&self) -> CsvTable {
        let mut t = CsvTable::new(&["t", "community", "s", "i", "r"]);
        for step in 0..self.trajectory.time_points() {
            for (c, state) in self.trajectory.at(step).iter().enumerate() {
                t.push(vec![
                    fmt_g(step as f64 * self.dt),
                    c.to_string(),
                    state.s.to_string(),
                    state.i.to_string(),
                    state.r.to_string(),
                ]);
            }
        }
        t
    }
}

/// One raw SIRS trajectory of the configured base or abstract model.
pub fn cmd_simulate(config: &ExperimentConfig, stream: Stream) -> Result<SimulateRecord> {
    config.validate()?;
    let model = config.sirs.build()?;
    let params = match config.simulate.model {
        ModelKind::Base => &model.base,
        ModelKind::Abstract => &model.abstract_params,
    };
    let mut rng = stream.child(SIMULATE_KEY).rng();
    let (trajectory, reward) = match config.simulate.action {
        Some(a) => simulate(params, a, &mut rng)?,
        None => simulate_free(params, &mut rng),
    };
    Ok(SimulateRecord {
        dt: params.dt,
        trajectory,
        reward,
    })
}
