//! Arms, environments, intervention maps and regret accounting.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CamabError, Result};
use crate::metrics::GaussianSpec;
use crate::stream::StreamRng;

/// Index of an intervention (arm) within its environment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArmId(pub usize);

impl ArmId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for ArmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Pull count and running mean of one arm.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ArmStats {
    pulls: u64,
    mean: f64,
}

impl ArmStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pulls(&self) -> u64 {
        self.pulls
    }

    /// Empirical mean, `None` until the arm has been pulled.
    pub fn mean(&self) -> Option<f64> {
        (self.pulls > 0).then_some(self.mean)
    }

    pub fn update(&mut self, reward: f64) {
        self.pulls += 1;
        self.mean += (reward - self.mean) / self.pulls as f64;
    }

    pub fn updated(mut self, reward: f64) -> Self {
        self.update(reward);
        self
    }
}

/// A finite set of arms with a seeded reward sampler.
///
/// Implementations must be deterministic in the generator state: two calls
/// with generators in the same state return the same reward.
pub trait Environment: Send + Sync {
    fn arm_count(&self) -> usize;

    fn sample(&self, arm: ArmId, rng: &mut StreamRng) -> f64;

    /// Population means per arm, when known.
    fn true_means(&self) -> Option<&[f64]> {
        None
    }
}

/// Independent Gaussian arms. A zero standard deviation yields a constant arm.
#[derive(Clone, Debug)]
pub struct GaussianBandit {
    arms: Vec<GaussianSpec>,
    means: Vec<f64>,
}

impl GaussianBandit {
    pub fn new(arms: Vec<GaussianSpec>) -> Result<Self> {
        if arms.is_empty() {
            return Err(CamabError::domain("a bandit needs at least one arm"));
        }
        for (i, arm) in arms.iter().enumerate() {
            if !(arm.std >= 0.0) || !arm.std.is_finite() || !arm.mean.is_finite() {
                return Err(CamabError::domain(format!("arm {i}: invalid Gaussian {arm:?}")));
            }
        }
        let means = arms.iter().map(|a| a.mean).collect();
        Ok(GaussianBandit { arms, means })
    }

    pub fn constant(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| GaussianSpec::new(v, 0.0)).collect())
    }

    pub fn arms(&self) -> &[GaussianSpec] {
        &self.arms
    }
}

impl Environment for GaussianBandit {
    fn arm_count(&self) -> usize {
        self.arms.len()
    }

    fn sample(&self, arm: ArmId, rng: &mut StreamRng) -> f64 {
        let spec = self.arms[arm.index()];
        if spec.std == 0.0 {
            return spec.mean;
        }
        Normal::new(spec.mean, spec.std)
            .expect("validated at construction")
            .sample(rng)
    }

    fn true_means(&self) -> Option<&[f64]> {
        Some(&self.means)
    }
}

/// Total map from base arms to abstract arms.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterventionMap {
    targets: Vec<usize>,
    abstract_count: usize,
}

impl InterventionMap {
    pub fn new(targets: Vec<usize>, abstract_count: usize) -> Result<Self> {
        if targets.is_empty() {
            return Err(CamabError::domain("omega must map at least one base arm"));
        }
        if let Some((a, &t)) = targets.iter().enumerate().find(|(_, &t)| t >= abstract_count) {
            return Err(CamabError::domain(format!(
                "omega maps base arm {a} to {t}, but there are only {abstract_count} abstract arms"
            )));
        }
        Ok(InterventionMap {
            targets,
            abstract_count,
        })
    }

    pub fn base_count(&self) -> usize {
        self.targets.len()
    }

    pub fn abstract_count(&self) -> usize {
        self.abstract_count
    }

    pub fn apply(&self, base: ArmId) -> ArmId {
        ArmId(self.targets[base.index()])
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    /// Whether every abstract arm has a non-empty preimage.
    pub fn is_surjective(&self) -> bool {
        let hit: BTreeSet<usize> = self.targets.iter().copied().collect();
        hit.len() == self.abstract_count
    }

    /// Union of the preimages of the abstract arms in `abstract_set`.
    pub fn preimage(&self, abstract_set: &BTreeSet<ArmId>) -> BTreeSet<ArmId> {
        self.targets
            .iter()
            .enumerate()
            .filter(|(_, &t)| abstract_set.contains(&ArmId(t)))
            .map(|(a, _)| ArmId(a))
            .collect()
    }
}

/// Free-function form of [`InterventionMap::preimage`].
pub fn omega_preimage(omega: &InterventionMap, abstract_set: &BTreeSet<ArmId>) -> BTreeSet<ArmId> {
    omega.preimage(abstract_set)
}

/// A base bandit, an abstract bandit, the intervention map between them and
/// the cost charged per abstract pull.
#[derive(Clone)]
pub struct CamabInstance {
    pub base: Arc<dyn Environment>,
    pub abstract_env: Arc<dyn Environment>,
    pub omega: InterventionMap,
    pub cost_c: f64,
}

impl CamabInstance {
    pub fn new(
        base: Arc<dyn Environment>,
        abstract_env: Arc<dyn Environment>,
        omega: InterventionMap,
        cost_c: f64,
    ) -> Result<Self> {
        if omega.base_count() != base.arm_count() {
            return Err(CamabError::domain(format!(
                "omega covers {} base arms, environment has {}",
                omega.base_count(),
                base.arm_count()
            )));
        }
        if omega.abstract_count() != abstract_env.arm_count() {
            return Err(CamabError::domain(format!(
                "omega targets {} abstract arms, environment has {}",
                omega.abstract_count(),
                abstract_env.arm_count()
            )));
        }
        if !(cost_c >= 0.0) || !cost_c.is_finite() {
            return Err(CamabError::domain(format!("cost must be finite and >= 0, got {cost_c}")));
        }
        if !omega.is_surjective() {
            log::debug!("omega is not surjective; some abstract arms have empty preimages");
        }
        Ok(CamabInstance {
            base,
            abstract_env,
            omega,
            cost_c,
        })
    }
}

impl fmt::Debug for CamabInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CamabInstance")
            .field("base_arms", &self.base.arm_count())
            .field("abstract_arms", &self.abstract_env.arm_count())
            .field("omega", &self.omega)
            .field("cost_c", &self.cost_c)
            .finish()
    }
}

/// Actions taken and rewards observed in the base environment, plus the
/// number of abstract pulls spent before it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunHistory {
    actions: Vec<ArmId>,
    rewards: Vec<f64>,
    pub n_abstract_pulls: u64,
}

impl RunHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        RunHistory {
            actions: Vec::with_capacity(n),
            rewards: Vec::with_capacity(n),
            n_abstract_pulls: 0,
        }
    }

    pub fn from_actions(actions: Vec<ArmId>, n_abstract_pulls: u64) -> Self {
        let rewards = vec![0.0; actions.len()];
        RunHistory {
            actions,
            rewards,
            n_abstract_pulls,
        }
    }

    pub fn push(&mut self, arm: ArmId, reward: f64) {
        self.actions.push(arm);
        self.rewards.push(reward);
    }

    pub fn actions(&self) -> &[ArmId] {
        &self.actions
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn pull_counts(&self, arm_count: usize) -> Vec<u64> {
        let mut counts = vec![0; arm_count];
        for a in &self.actions {
            counts[a.index()] += 1;
        }
        counts
    }
}

/// `n' * C` plus the sum of optimality gaps of the base arms pulled, using
/// population means rather than observed rewards.
pub fn cumulative_regret(history: &RunHistory, true_means: &[f64], cost_c: f64) -> Result<f64> {
    let best = max_mean(true_means)
        .ok_or_else(|| CamabError::MissingTrueMeans("empty mean vector".into()))?;
    let mut regret = history.n_abstract_pulls as f64 * cost_c;
    for a in history.actions() {
        let mu = true_means.get(a.index()).ok_or_else(|| {
            CamabError::MissingTrueMeans(format!(
                "no mean for arm {a} ({} means supplied)",
                true_means.len()
            ))
        })?;
        regret += best - mu;
    }
    Ok(regret)
}

/// Per-step optimality gaps of a history.
pub fn instantaneous_regret(history: &RunHistory, true_means: &[f64]) -> Result<Vec<f64>> {
    let best = max_mean(true_means)
        .ok_or_else(|| CamabError::MissingTrueMeans("empty mean vector".into()))?;
    history
        .actions()
        .iter()
        .map(|a| {
            true_means
                .get(a.index())
                .map(|mu| best - mu)
                .ok_or_else(|| CamabError::MissingTrueMeans(format!("no mean for arm {a}")))
        })
        .collect()
}

pub(crate) fn max_mean(values: &[f64]) -> Option<f64> {
    values.iter().copied().reduce(f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::Stream;
    use proptest::prelude::*;

    fn stats(values: &[f64]) -> ArmStats {
        values.iter().fold(ArmStats::new(), |s, &r| s.updated(r))
    }

    #[test]
    fn update_stats_examples() {
        let s = ArmStats::new();
        assert_eq!(s.mean(), None);
        let s = s.updated(2.0);
        assert_eq!((s.pulls(), s.mean()), (1, Some(2.0)));
        let s = s.updated(0.0);
        assert_eq!((s.pulls(), s.mean()), (2, Some(1.0)));

        let s = stats(&[1.0, 1.0, 1.0]).updated(5.0);
        assert_eq!(s.pulls(), 4);
        assert!((s.mean().unwrap() - (3.0 * 1.0 + 5.0) / 4.0).abs() < 1e-12);
    }

    #[test]
    fn regret_examples() {
        let mut h = RunHistory::from_actions(vec![ArmId(1); 100], 20);
        assert_eq!(cumulative_regret(&h, &[0.0, 1.0], 0.5).unwrap(), 10.0);

        h = RunHistory::from_actions(vec![ArmId(0), ArmId(1), ArmId(1)], 0);
        assert_eq!(cumulative_regret(&h, &[1.0, 0.0], 0.0).unwrap(), 2.0);

        h = RunHistory::from_actions(vec![ArmId(2), ArmId(1), ArmId(0)], 4);
        assert_eq!(cumulative_regret(&h, &[3.0, 2.0, 1.0], 0.25).unwrap(), 4.0);
    }

    #[test]
    fn regret_requires_means_for_every_arm() {
        let h = RunHistory::from_actions(vec![ArmId(0), ArmId(3)], 0);
        assert!(matches!(
            cumulative_regret(&h, &[1.0, 2.0], 0.0),
            Err(CamabError::MissingTrueMeans(_))
        ));
        assert!(cumulative_regret(&h, &[], 0.0).is_err());
    }

    #[test]
    fn preimage_examples() {
        let omega = InterventionMap::new(vec![0, 0, 1], 2).unwrap();
        let set = |v: &[usize]| v.iter().map(|&i| ArmId(i)).collect::<BTreeSet<_>>();
        assert_eq!(omega_preimage(&omega, &set(&[0])), set(&[0, 1]));
        assert_eq!(omega_preimage(&omega, &set(&[0, 1])), set(&[0, 1, 2]));
        assert_eq!(omega_preimage(&omega, &set(&[])), set(&[]));
    }

    #[test]
    fn omega_rejects_out_of_range_targets() {
        assert!(InterventionMap::new(vec![0, 2], 2).is_err());
        assert!(InterventionMap::new(vec![], 2).is_err());
        let partial = InterventionMap::new(vec![0, 0], 2).unwrap();
        assert!(!partial.is_surjective());
    }

    #[test]
    fn camab_checks_shapes() {
        let base: Arc<dyn Environment> = Arc::new(GaussianBandit::constant(&[1.0, 2.0]).unwrap());
        let abs: Arc<dyn Environment> = Arc::new(GaussianBandit::constant(&[1.0]).unwrap());
        let omega = InterventionMap::new(vec![0, 0], 1).unwrap();
        assert!(CamabInstance::new(base.clone(), abs.clone(), omega.clone(), 0.0).is_ok());
        assert!(CamabInstance::new(base.clone(), abs.clone(), omega.clone(), -1.0).is_err());
        let bad = InterventionMap::new(vec![0], 1).unwrap();
        assert!(CamabInstance::new(base, abs, bad, 0.0).is_err());
    }

    #[test]
    fn gaussian_bandit_is_seed_deterministic() {
        let env = GaussianBandit::new(vec![GaussianSpec::new(0.0, 1.0), GaussianSpec::new(3.0, 0.5)])
            .unwrap();
        let s = Stream::new(11);
        let draw = |s: Stream| -> Vec<u64> {
            let mut rng = s.rng();
            (0..50).map(|i| env.sample(ArmId(i % 2), &mut rng).to_bits()).collect()
        };
        assert_eq!(draw(s), draw(s));
    }

    proptest! {
        #[test]
        fn preimages_partition_base_arms(targets in proptest::collection::vec(0usize..5, 1..20)) {
            let omega = InterventionMap::new(targets.clone(), 5).unwrap();
            let mut seen = BTreeSet::new();
            for a in 0..5 {
                let pre = omega.preimage(&[ArmId(a)].into_iter().collect());
                for b in &pre {
                    prop_assert!(seen.insert(*b), "arm {b} in two preimages");
                }
            }
            prop_assert_eq!(seen.len(), targets.len());
        }

        #[test]
        fn regret_is_non_negative(
            means in proptest::collection::vec(-10.0f64..10.0, 1..6),
            picks in proptest::collection::vec(0usize..100, 0..50),
            n_prime in 0u64..100,
            cost in 0.0f64..5.0,
        ) {
            let k = means.len();
            let h = RunHistory::from_actions(picks.iter().map(|p| ArmId(p % k)).collect(), n_prime);
            prop_assert!(cumulative_regret(&h, &means, cost).unwrap() >= 0.0);
        }

        #[test]
        fn running_mean_is_order_independent(mut rewards in proptest::collection::vec(-1e3f64..1e3, 1..200)) {
            let a = stats(&rewards);
            rewards.reverse();
            let b = stats(&rewards);
            rewards.sort_by(f64::total_cmp);
            let c = stats(&rewards);
            let exact = rewards.iter().sum::<f64>() / rewards.len() as f64;
            prop_assert_eq!(a.pulls(), b.pulls());
            prop_assert!((a.mean().unwrap() - b.mean().unwrap()).abs() <= 1e-9);
            prop_assert!((a.mean().unwrap() - c.mean().unwrap()).abs() <= 1e-9);
            prop_assert!((a.mean().unwrap() - exact).abs() <= 1e-9);
        }
    }
}
