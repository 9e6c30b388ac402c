//! UCB and AT-UCB.
//!
//! AT-UCB spends an abstract budget `n'` pulling every abstract arm uniformly,
//! discards the abstract arms whose empirical mean falls more than `epsilon`
//! below the best one, and runs UCB for `n` steps on the base arms that map
//! to a surviving abstract arm.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bandit::{ArmId, ArmStats, CamabInstance, Environment, RunHistory};
use crate::error::{CamabError, Result};
use crate::stream::Stream;

/// UCB confidence parameter, either a constant or `1/n^2` for horizon `n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DeltaSetting {
    Fixed(f64),
    OneOverNSquared,
}

impl DeltaSetting {
    pub fn resolve(&self, n: u64) -> f64 {
        match *self {
            DeltaSetting::Fixed(d) => d,
            DeltaSetting::OneOverNSquared => 1.0 / (n as f64 * n as f64),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DeltaSetting::Fixed(d) if !(d > 0.0 && d < 1.0) => Err(CamabError::domain(format!(
                "delta must lie in (0, 1), got {d}"
            ))),
            _ => Ok(()),
        }
    }
}

impl Default for DeltaSetting {
    fn default() -> Self {
        DeltaSetting::Fixed(0.1)
    }
}

impl fmt::Display for DeltaSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeltaSetting::Fixed(d) => write!(f, "{d}"),
            DeltaSetting::OneOverNSquared => f.write_str("one-over-n-squared"),
        }
    }
}

impl FromStr for DeltaSetting {
    type Err = CamabError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "one-over-n-squared" | "1/n^2" => Ok(DeltaSetting::OneOverNSquared),
            other => other
                .parse::<f64>()
                .map(DeltaSetting::Fixed)
                .map_err(|_| CamabError::domain(format!("unrecognised delta `{other}`"))),
        }
    }
}

impl Serialize for DeltaSetting {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            DeltaSetting::Fixed(d) => s.serialize_f64(d),
            DeltaSetting::OneOverNSquared => s.serialize_str("one-over-n-squared"),
        }
    }
}

impl<'de> Deserialize<'de> for DeltaSetting {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(DeltaSetting::Fixed(x)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// `mean + sqrt(2 ln(1/delta) / pulls)`; infinite for an unpulled arm.
pub fn ucb_index(stats: &ArmStats, delta: f64) -> f64 {
    match stats.mean() {
        None => f64::INFINITY,
        Some(mean) => mean + (2.0 * (1.0 / delta).ln() / stats.pulls() as f64).sqrt(),
    }
}

/// Arm with the largest index; ties go to the lowest id. `arms` must be
/// sorted ascending and non-empty.
fn argmax_index(arms: &[ArmId], stats: &[ArmStats], delta: f64) -> ArmId {
    let mut best = arms[0];
    let mut best_index = ucb_index(&stats[best.index()], delta);
    for &a in &arms[1..] {
        let idx = ucb_index(&stats[a.index()], delta);
        if idx > best_index {
            best = a;
            best_index = idx;
        }
    }
    best
}

#[derive(Clone, Debug)]
pub struct UcbOutcome {
    pub history: RunHistory,
    /// Statistics for every arm of the environment; arms outside the run's
    /// arm set stay unpulled.
    pub stats: Vec<ArmStats>,
    arms: Vec<ArmId>,
}

impl UcbOutcome {
    pub fn arms(&self) -> &[ArmId] {
        &self.arms
    }

    /// Arm of the run's set with the highest final index.
    pub fn recommended(&self, delta: f64) -> ArmId {
        argmax_index(&self.arms, &self.stats, delta)
    }
}

/// Runs UCB for `n` steps on `arms`. The reward of the pull at step `t` is
/// drawn from `stream.pull(t, arm)`.
pub fn run_ucb(
    env: &dyn Environment,
    arms: &[ArmId],
    n: u64,
    delta: f64,
    stream: Stream,
) -> Result<UcbOutcome> {
    let arms: Vec<ArmId> = arms.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if arms.is_empty() {
        return Err(CamabError::domain("UCB needs a non-empty arm set"));
    }
    if let Some(a) = arms.iter().find(|a| a.index() >= env.arm_count()) {
        return Err(CamabError::domain(format!(
            "arm {a} outside environment with {} arms",
            env.arm_count()
        )));
    }
    if !(delta > 0.0) {
        return Err(CamabError::domain(format!("delta must be positive, got {delta}")));
    }
    let mut stats = vec![ArmStats::new(); env.arm_count()];
    let mut history = RunHistory::with_capacity(n as usize);
    for t in 0..n {
        let arm = argmax_index(&arms, &stats, delta);
        let reward = env.sample(arm, &mut stream.pull(t, arm));
        stats[arm.index()].update(reward);
        history.push(arm, reward);
    }
    Ok(UcbOutcome {
        history,
        stats,
        arms,
    })
}

/// Pulls abstract arms round-robin for `n_prime` pulls, so each arm gets
/// `n_prime / k'` pulls and the first `n_prime % k'` arms one more.
pub fn uniform_explore(
    abstract_env: &dyn Environment,
    n_prime: u64,
    stream: Stream,
) -> Result<Vec<ArmStats>> {
    let k = abstract_env.arm_count() as u64;
    if n_prime < k {
        return Err(CamabError::domain(format!(
            "abstract budget {n_prime} cannot cover {k} abstract arms"
        )));
    }
    let mut stats = vec![ArmStats::new(); k as usize];
    for j in 0..n_prime {
        let arm = ArmId((j % k) as usize);
        let reward = abstract_env.sample(arm, &mut stream.pull(j, arm));
        stats[arm.index()].update(reward);
    }
    Ok(stats)
}

/// Abstract arms whose mean is strictly below `max(means) - epsilon`.
pub fn build_dhat(abstract_means: &[f64], epsilon: f64) -> Result<BTreeSet<ArmId>> {
    if !(epsilon >= 0.0) {
        return Err(CamabError::domain(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let Some(best) = abstract_means.iter().copied().reduce(f64::max) else {
        return Ok(BTreeSet::new());
    };
    let cut = best - epsilon;
    Ok(abstract_means
        .iter()
        .enumerate()
        .filter(|(_, &m)| m < cut)
        .map(|(a, _)| ArmId(a))
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtUcbConfig {
    pub n: u64,
    pub n_prime: u64,
    pub epsilon: f64,
    pub delta: DeltaSetting,
}

impl AtUcbConfig {
    pub fn validate(&self, abstract_arms: usize) -> Result<()> {
        if self.n == 0 {
            return Err(CamabError::domain("base horizon n must be positive"));
        }
        if self.n_prime < abstract_arms as u64 {
            return Err(CamabError::domain(format!(
                "n_prime = {} is smaller than the {abstract_arms} abstract arms",
                self.n_prime
            )));
        }
        if !(self.epsilon >= 0.0) {
            return Err(CamabError::domain(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        self.delta.validate()
    }
}

/// Outcome of the abstract thresholding phase.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterResult {
    pub abstract_stats: Vec<ArmStats>,
    pub abstract_means: Vec<f64>,
    pub d_hat: BTreeSet<ArmId>,
    pub a_hat_set: BTreeSet<ArmId>,
    /// Set when no base arm mapped to a surviving abstract arm and the full
    /// base arm set was used instead.
    pub fell_back: bool,
}

#[derive(Clone, Debug)]
pub struct AtUcbOutcome {
    pub history: RunHistory,
    pub filter: FilterResult,
    pub a_hat_1: ArmId,
    pub base_stats: Vec<ArmStats>,
}

/// Abstract exploration and filtering, without the base phase.
pub fn abstract_filter(
    camab: &CamabInstance,
    n_prime: u64,
    epsilon: f64,
    stream: Stream,
) -> Result<FilterResult> {
    let abstract_stats = uniform_explore(camab.abstract_env.as_ref(), n_prime, stream)?;
    let abstract_means: Vec<f64> = abstract_stats
        .iter()
        .map(|s| s.mean().expect("every abstract arm is pulled"))
        .collect();
    let d_hat = build_dhat(&abstract_means, epsilon)?;
    let survivors: BTreeSet<ArmId> = (0..abstract_means.len())
        .map(ArmId)
        .filter(|a| !d_hat.contains(a))
        .collect();
    let mut a_hat_set = camab.omega.preimage(&survivors);
    let fell_back = a_hat_set.is_empty();
    if fell_back {
        log::warn!("no base arm maps to a surviving abstract arm; using all base arms");
        a_hat_set = (0..camab.base.arm_count()).map(ArmId).collect();
    }
    Ok(FilterResult {
        abstract_stats,
        abstract_means,
        d_hat,
        a_hat_set,
        fell_back,
    })
}

/// AT-UCB. The abstract phase draws from `stream.abstract_phase()` and the
/// base phase from `stream.base_phase()`, so plain UCB run on
/// `stream.base_phase()` sees the same base rewards step for step.
pub fn at_ucb(camab: &CamabInstance, config: &AtUcbConfig, stream: Stream) -> Result<AtUcbOutcome> {
    config.validate(camab.abstract_env.arm_count())?;
    let filter = abstract_filter(camab, config.n_prime, config.epsilon, stream.abstract_phase())?;
    let delta = config.delta.resolve(config.n);
    let arms: Vec<ArmId> = filter.a_hat_set.iter().copied().collect();
    let ucb = run_ucb(camab.base.as_ref(), &arms, config.n, delta, stream.base_phase())?;
    let a_hat_1 = ucb.recommended(delta);
    let mut history = ucb.history;
    history.n_abstract_pulls = config.n_prime;
    Ok(AtUcbOutcome {
        history,
        filter,
        a_hat_1,
        base_stats: ucb.stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandit::{GaussianBandit, InterventionMap};
    use crate::metrics::GaussianSpec;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn ids(v: &[usize]) -> BTreeSet<ArmId> {
        v.iter().map(|&i| ArmId(i)).collect()
    }

    fn all(k: usize) -> Vec<ArmId> {
        (0..k).map(ArmId).collect()
    }

    #[test]
    fn ucb_index_examples() {
        assert_eq!(ucb_index(&ArmStats::new(), 0.1), f64::INFINITY);
        let s = [0.5; 4].iter().fold(ArmStats::new(), |s, &r| s.updated(r));
        let want = 0.5 + (2.0 * 10f64.ln() / 4.0).sqrt();
        assert!((ucb_index(&s, 0.1) - want).abs() < 1e-12);
        assert!((ucb_index(&s, 0.1) - 1.5730).abs() < 1e-4);
        assert_eq!(ucb_index(&ArmStats::new().updated(0.0), 1.0), 0.0);
    }

    // Hand simulation of the index rule on constant arms, written without
    // the library's selection code.
    fn simulate_constant_ucb(values: &[f64], n: usize, delta: f64) -> Vec<u64> {
        let mut pulls = vec![0u64; values.len()];
        for _ in 0..n {
            let mut best = 0;
            let mut best_idx = f64::NEG_INFINITY;
            for (a, &v) in values.iter().enumerate() {
                let idx = if pulls[a] == 0 {
                    f64::INFINITY
                } else {
                    v + (2.0 * (1.0 / delta).ln() / pulls[a] as f64).sqrt()
                };
                if idx > best_idx {
                    best = a;
                    best_idx = idx;
                }
            }
            pulls[best] += 1;
        }
        pulls
    }

    #[test]
    fn run_ucb_examples() {
        let single = GaussianBandit::new(vec![GaussianSpec::new(0.0, 1.0)]).unwrap();
        let out = run_ucb(&single, &all(1), 5, 0.1, Stream::new(1)).unwrap();
        assert_eq!(out.history.actions(), &[ArmId(0); 5]);

        let two = GaussianBandit::constant(&[1.0, 0.0]).unwrap();
        let out = run_ucb(&two, &all(2), 10, 0.1, Stream::new(1)).unwrap();
        assert_eq!(simulate_constant_ucb(&[1.0, 0.0], 10, 0.1), vec![8, 2]);
        assert_eq!(out.history.pull_counts(2), vec![8, 2]);

        let same = GaussianBandit::constant(&[0.3, 0.3]).unwrap();
        let out = run_ucb(&same, &all(2), 4, 0.1, Stream::new(1)).unwrap();
        assert_eq!(out.history.pull_counts(2), vec![2, 2]);
        assert_eq!(out.history.actions(), &[ArmId(0), ArmId(1), ArmId(0), ArmId(1)]);
    }

    #[test]
    fn run_ucb_rejects_bad_arm_sets() {
        let env = GaussianBandit::constant(&[1.0, 0.0]).unwrap();
        assert!(run_ucb(&env, &[], 3, 0.1, Stream::new(1)).is_err());
        assert!(run_ucb(&env, &[ArmId(2)], 3, 0.1, Stream::new(1)).is_err());
    }

    #[test]
    fn run_ucb_restricted_to_subset() {
        let env = GaussianBandit::constant(&[5.0, 1.0, 0.0]).unwrap();
        let out = run_ucb(&env, &[ArmId(2), ArmId(1)], 20, 0.1, Stream::new(1)).unwrap();
        assert_eq!(out.history.pull_counts(3)[0], 0);
        assert_eq!(out.arms(), &[ArmId(1), ArmId(2)]);
    }

    #[test]
    fn uniform_explore_examples() {
        let env = GaussianBandit::new(vec![GaussianSpec::new(0.0, 1.0); 4]).unwrap();
        let stats = uniform_explore(&env, 20, Stream::new(1)).unwrap();
        assert!(stats.iter().all(|s| s.pulls() == 5));

        let env = GaussianBandit::constant(&[1.0, 2.0, 3.0]).unwrap();
        let stats = uniform_explore(&env, 3, Stream::new(1)).unwrap();
        let means: Vec<f64> = stats.iter().map(|s| s.mean().unwrap()).collect();
        assert_eq!(means, vec![1.0, 2.0, 3.0]);

        let env = GaussianBandit::constant(&[1.0, 2.0]).unwrap();
        let stats = uniform_explore(&env, 5, Stream::new(1)).unwrap();
        assert_eq!(stats.iter().map(|s| s.pulls()).collect::<Vec<_>>(), vec![3, 2]);

        assert!(uniform_explore(&env, 1, Stream::new(1)).is_err());
    }

    #[test]
    fn build_dhat_examples() {
        let means = [5.0, 4.5, 1.0];
        assert_eq!(build_dhat(&means, 1.0).unwrap(), ids(&[2]));
        assert_eq!(build_dhat(&means, 10.0).unwrap(), ids(&[]));
        assert_eq!(build_dhat(&means, 0.0).unwrap(), ids(&[1, 2]));
        assert_eq!(build_dhat(&means, f64::INFINITY).unwrap(), ids(&[]));
        assert!(build_dhat(&means, -0.1).is_err());
    }

    fn constant_camab(base: &[f64], abs: &[f64], omega: Vec<usize>) -> CamabInstance {
        CamabInstance::new(
            Arc::new(GaussianBandit::constant(base).unwrap()),
            Arc::new(GaussianBandit::constant(abs).unwrap()),
            InterventionMap::new(omega, abs.len()).unwrap(),
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn at_ucb_filters_deterministically() {
        let camab = constant_camab(&[1.0, 2.0, 3.0], &[10.0, 0.0], vec![0, 0, 1]);
        let cfg = AtUcbConfig {
            n: 10,
            n_prime: 4,
            epsilon: 1.0,
            delta: DeltaSetting::Fixed(0.1),
        };
        let out = at_ucb(&camab, &cfg, Stream::new(3)).unwrap();
        assert_eq!(out.filter.d_hat, ids(&[1]));
        assert_eq!(out.filter.a_hat_set, ids(&[0, 1]));
        assert!(out.history.actions().iter().all(|a| a.index() < 2));
        assert_eq!(out.history.n_abstract_pulls, 4);
        assert!(out.filter.a_hat_set.contains(&out.a_hat_1));
    }

    #[test]
    fn single_abstract_arm_keeps_everything() {
        let camab = constant_camab(&[1.0, 2.0, 3.0], &[0.0], vec![0, 0, 0]);
        let cfg = AtUcbConfig {
            n: 5,
            n_prime: 3,
            epsilon: 0.0,
            delta: DeltaSetting::Fixed(0.1),
        };
        let out = at_ucb(&camab, &cfg, Stream::new(3)).unwrap();
        assert!(out.filter.d_hat.is_empty());
        assert_eq!(out.filter.a_hat_set, ids(&[0, 1, 2]));
    }

    #[test]
    fn empty_preimage_falls_back_to_all_arms() {
        // the best abstract arm (1) has no base arm mapped to it
        let camab = constant_camab(&[1.0, 2.0], &[0.0, 10.0], vec![0, 0]);
        let cfg = AtUcbConfig {
            n: 6,
            n_prime: 2,
            epsilon: 1.0,
            delta: DeltaSetting::Fixed(0.1),
        };
        let out = at_ucb(&camab, &cfg, Stream::new(3)).unwrap();
        assert!(out.filter.fell_back);
        assert_eq!(out.filter.a_hat_set, ids(&[0, 1]));
    }

    #[test]
    fn at_ucb_validates_config() {
        let camab = constant_camab(&[1.0], &[0.0, 1.0], vec![0]);
        let mut cfg = AtUcbConfig {
            n: 5,
            n_prime: 1,
            epsilon: 0.0,
            delta: DeltaSetting::Fixed(0.1),
        };
        assert!(at_ucb(&camab, &cfg, Stream::new(1)).is_err());
        cfg.n_prime = 2;
        cfg.delta = DeltaSetting::Fixed(0.0);
        assert!(at_ucb(&camab, &cfg, Stream::new(1)).is_err());
        cfg.delta = DeltaSetting::Fixed(0.1);
        cfg.epsilon = -1.0;
        assert!(at_ucb(&camab, &cfg, Stream::new(1)).is_err());
    }

    #[test]
    fn delta_setting_parses() {
        assert_eq!("0.1".parse::<DeltaSetting>().unwrap(), DeltaSetting::Fixed(0.1));
        assert_eq!(
            "one-over-n-squared".parse::<DeltaSetting>().unwrap(),
            DeltaSetting::OneOverNSquared
        );
        assert_eq!(DeltaSetting::OneOverNSquared.resolve(10), 0.01);
        assert!("often".parse::<DeltaSetting>().is_err());
    }

    proptest! {
        #[test]
        fn dhat_shrinks_as_epsilon_grows(
            means in proptest::collection::vec(-5.0f64..5.0, 1..8),
            e1 in 0.0f64..5.0,
            extra in 0.0f64..5.0,
        ) {
            let small = build_dhat(&means, e1).unwrap();
            let large = build_dhat(&means, e1 + extra).unwrap();
            prop_assert!(large.is_subset(&small));
            let best = means.iter().copied().enumerate().fold((0, f64::NEG_INFINITY), |b, (i, m)| if m > b.1 { (i, m) } else { b }).0;
            prop_assert!(!small.contains(&ArmId(best)));
        }

        #[test]
        fn ucb_pulls_every_arm_once(values in proptest::collection::vec(-3.0f64..3.0, 1..6), extra in 0u64..20) {
            let env = GaussianBandit::constant(&values).unwrap();
            let k = values.len();
            let out = run_ucb(&env, &all(k), k as u64 + extra, 0.1, Stream::new(0)).unwrap();
            prop_assert!(out.history.pull_counts(k).iter().all(|&c| c >= 1));
        }

        #[test]
        fn suboptimal_pulls_are_bounded(gap in 0.05f64..3.0, delta in 0.001f64..0.9, n in 2u64..3000) {
            let env = GaussianBandit::constant(&[gap, 0.0]).unwrap();
            let out = run_ucb(&env, &all(2), n, delta, Stream::new(0)).unwrap();
            let bound = (8.0 * (1.0 / delta).ln() / (gap * gap)).ceil() as u64 + 1;
            prop_assert!(out.history.pull_counts(2)[1] <= bound);
        }
    }
}
