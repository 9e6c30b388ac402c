//! Wasserstein distances and abstraction error estimators.
//!
//! All distances are one-dimensional 2-Wasserstein distances computed through
//! the quantile coupling, which is optimal on the real line. The interventional
//! consistency (IC) error `e` and the reward discrepancy (RD) error `s` are
//! estimated as the maximum over base arms of empirical distances between
//! `m`-sample sets.
//!
//! The estimators are not debiased: the maximum of noisy distances
//! overestimates the population maximum, and each empirical distance is itself
//! biased upward by sampling noise of order `m^{-1/2}`. Increase `m` to shrink
//! both effects.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandit::{ArmId, CamabInstance, Environment};
use crate::error::{CamabError, Result};
use crate::stream::{Stream, StreamRng};

/// Grid size cap used when comparing samples of different sizes.
pub const MAX_QUANTILE_GRID: usize = 10_000;

const BASE_DRAWS: u64 = 0;
const ABSTRACT_DRAWS: u64 = 1;

/// A non-empty sample set, kept sorted ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalDistribution {
    sorted: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(CamabError::domain("empirical distribution needs at least one sample"));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(CamabError::domain("samples must be finite"));
        }
        samples.sort_by(f64::total_cmp);
        Ok(EmpiricalDistribution { sorted: samples })
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.sorted.iter().sum::<f64>() / self.sorted.len() as f64
    }

    /// Right-continuous inverse CDF at `i / grid`, for `i < grid`.
    fn quantile_on_grid(&self, i: usize, grid: usize) -> f64 {
        let m = self.sorted.len();
        self.sorted[(i * m / grid).min(m - 1)]
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Empirical 2-Wasserstein distance.
///
/// Equal sizes pair order statistics directly. Otherwise both quantile
/// functions are evaluated on the grid `{i / L}` with
/// `L = min(lcm(m1, m2), MAX_QUANTILE_GRID)`; when `L` is the lcm this is the
/// exact distance between the two empirical measures.
pub fn w2_empirical(p: &EmpiricalDistribution, q: &EmpiricalDistribution) -> f64 {
    let (m1, m2) = (p.len(), q.len());
    let sum_sq: f64;
    let grid;
    if m1 == m2 {
        grid = m1;
        sum_sq = p
            .sorted
            .iter()
            .zip(&q.sorted)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
    } else {
        let lcm = m1 / gcd(m1, m2) * m2;
        grid = lcm.min(MAX_QUANTILE_GRID);
        sum_sq = (0..grid)
            .map(|i| {
                let d = p.quantile_on_grid(i, grid) - q.quantile_on_grid(i, grid);
                d * d
            })
            .sum();
    }
    (sum_sq / grid as f64).sqrt()
}

/// Convenience wrapper over raw sample slices.
pub fn w2_samples(p: &[f64], q: &[f64]) -> Result<f64> {
    let p = EmpiricalDistribution::new(p.to_vec())?;
    let q = EmpiricalDistribution::new(q.to_vec())?;
    Ok(w2_empirical(&p, &q))
}

/// A one-dimensional normal distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub mean: f64,
    pub std: f64,
}

impl GaussianSpec {
    pub fn new(mean: f64, std: f64) -> Self {
        GaussianSpec { mean, std }
    }
}

/// Closed-form W2 between two normals.
pub fn w2_gaussian(g1: GaussianSpec, g2: GaussianSpec) -> f64 {
    let dm = g1.mean - g2.mean;
    let ds = g1.std - g2.std;
    (dm * dm + ds * ds).sqrt()
}

/// `y -> scale * y + shift`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub scale: f64,
    pub shift: f64,
}

impl AffineMap {
    pub const IDENTITY: AffineMap = AffineMap {
        scale: 1.0,
        shift: 0.0,
    };

    pub fn apply(&self, y: f64) -> f64 {
        self.scale * y + self.shift
    }

    /// Pushforward of a normal through the map.
    pub fn push_gaussian(&self, g: GaussianSpec) -> GaussianSpec {
        GaussianSpec::new(self.apply(g.mean), self.scale.abs() * g.std)
    }
}

impl Default for AffineMap {
    fn default() -> Self {
        Self::IDENTITY
    }
}

/// Reward-level restriction of the state map.
#[derive(Clone)]
pub struct RewardMap {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    identity: bool,
}

impl RewardMap {
    pub fn identity() -> Self {
        RewardMap {
            f: Arc::new(|y| y),
            identity: true,
        }
    }

    pub fn from_fn(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        RewardMap {
            f: Arc::new(f),
            identity: false,
        }
    }

    pub fn affine(map: AffineMap) -> Self {
        if map == AffineMap::IDENTITY {
            return Self::identity();
        }
        Self::from_fn(move |y| map.apply(y))
    }

    pub fn apply(&self, y: f64) -> f64 {
        (self.f)(y)
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }
}

impl fmt::Debug for RewardMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RewardMap")
            .field("identity", &self.identity)
            .finish_non_exhaustive()
    }
}

/// RD error `s`, IC error `e`, and the threshold `epsilon = 2(s + e)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AbstractionErrors {
    pub s: f64,
    pub e: f64,
    pub epsilon: f64,
}

impl AbstractionErrors {
    pub fn new(s: f64, e: f64) -> Result<Self> {
        Ok(AbstractionErrors {
            s,
            e,
            epsilon: epsilon_alpha(s, e)?,
        })
    }
}

pub fn epsilon_alpha(s: f64, e: f64) -> Result<f64> {
    if !(s >= 0.0) || !(e >= 0.0) {
        return Err(CamabError::domain(format!(
            "abstraction errors must be non-negative, got s={s}, e={e}"
        )));
    }
    Ok(2.0 * (s + e))
}

/// Source of samples for error estimation, indexed by base arm.
///
/// `sample_pair` returns a base reward together with its image under the
/// state map (which may depend on more than the reward, e.g. a whole
/// trajectory). `sample_abstract` draws from the abstract arm `omega(arm)`.
pub trait AbstractedSampler: Sync {
    fn base_arm_count(&self) -> usize;

    fn sample_pair(&self, arm: ArmId, rng: &mut StreamRng) -> (f64, f64);

    fn sample_abstract(&self, arm: ArmId, rng: &mut StreamRng) -> f64;
}

struct BaseWithMap<'a> {
    base: &'a dyn Environment,
    tau: &'a RewardMap,
    camab: Option<&'a CamabInstance>,
}

impl AbstractedSampler for BaseWithMap<'_> {
    fn base_arm_count(&self) -> usize {
        self.base.arm_count()
    }

    fn sample_pair(&self, arm: ArmId, rng: &mut StreamRng) -> (f64, f64) {
        let y = self.base.sample(arm, rng);
        (y, self.tau.apply(y))
    }

    fn sample_abstract(&self, arm: ArmId, rng: &mut StreamRng) -> f64 {
        let camab = self.camab.expect("abstract draws need a CAMAB");
        camab.abstract_env.sample(camab.omega.apply(arm), rng)
    }
}

fn check_m(m: usize) -> Result<()> {
    if m < 2 {
        return Err(CamabError::domain(format!("need at least 2 samples per arm, got {m}")));
    }
    Ok(())
}

struct ArmDraws {
    base: Vec<f64>,
    mapped: Vec<f64>,
}

fn draw_pairs(sampler: &dyn AbstractedSampler, arm: ArmId, m: usize, stream: Stream) -> ArmDraws {
    let mut rng = stream.child(BASE_DRAWS).child(arm.index() as u64).rng();
    let (base, mapped) = (0..m).map(|_| sampler.sample_pair(arm, &mut rng)).unzip();
    ArmDraws { base, mapped }
}

fn draw_abstract(sampler: &dyn AbstractedSampler, arm: ArmId, m: usize, stream: Stream) -> Vec<f64> {
    let mut rng = stream.child(ABSTRACT_DRAWS).child(arm.index() as u64).rng();
    (0..m).map(|_| sampler.sample_abstract(arm, &mut rng)).collect()
}

fn max_over_arms(per_arm: Vec<Result<f64>>) -> Result<f64> {
    per_arm
        .into_iter()
        .try_fold(0.0f64, |acc, d| d.map(|d| acc.max(d)))
}

/// RD error from an arbitrary sampler.
pub fn rd_error_from(sampler: &dyn AbstractedSampler, m: usize, stream: Stream) -> Result<f64> {
    check_m(m)?;
    let per_arm = (0..sampler.base_arm_count())
        .into_par_iter()
        .map(|a| {
            let d = draw_pairs(sampler, ArmId(a), m, stream);
            w2_samples(&d.base, &d.mapped)
        })
        .collect();
    max_over_arms(per_arm)
}

/// IC error from an arbitrary sampler.
pub fn ic_error_from(sampler: &dyn AbstractedSampler, m: usize, stream: Stream) -> Result<f64> {
    check_m(m)?;
    let per_arm = (0..sampler.base_arm_count())
        .into_par_iter()
        .map(|a| {
            let d = draw_pairs(sampler, ArmId(a), m, stream);
            let q = draw_abstract(sampler, ArmId(a), m, stream);
            w2_samples(&d.mapped, &q)
        })
        .collect();
    max_over_arms(per_arm)
}

/// Both errors from one set of draws. Produces the same values as calling
/// [`rd_error_from`] and [`ic_error_from`] with the same stream.
pub fn measure_errors(
    sampler: &dyn AbstractedSampler,
    m: usize,
    stream: Stream,
) -> Result<AbstractionErrors> {
    check_m(m)?;
    let per_arm: Vec<Result<(f64, f64)>> = (0..sampler.base_arm_count())
        .into_par_iter()
        .map(|a| {
            let d = draw_pairs(sampler, ArmId(a), m, stream);
            let q = draw_abstract(sampler, ArmId(a), m, stream);
            Ok((w2_samples(&d.base, &d.mapped)?, w2_samples(&d.mapped, &q)?))
        })
        .collect();
    let (mut s, mut e) = (0.0f64, 0.0f64);
    for r in per_arm {
        let (ds, de) = r?;
        s = s.max(ds);
        e = e.max(de);
    }
    AbstractionErrors::new(s, e)
}

/// RD error: max over base arms of W2 between base rewards and their image
/// under `tau`, `m` draws per arm.
pub fn estimate_rd_error(
    base: &dyn Environment,
    tau: &RewardMap,
    m: usize,
    stream: Stream,
) -> Result<f64> {
    check_m(m)?;
    if tau.is_identity() {
        return Ok(0.0);
    }
    rd_error_from(
        &BaseWithMap {
            base,
            tau,
            camab: None,
        },
        m,
        stream,
    )
}

/// IC error: max over base arms `a` of W2 between `tau(base(a))` and
/// `abstract(omega(a))`, `m` draws each.
pub fn estimate_ic_error(
    camab: &CamabInstance,
    tau: &RewardMap,
    m: usize,
    stream: Stream,
) -> Result<f64> {
    ic_error_from(
        &BaseWithMap {
            base: camab.base.as_ref(),
            tau,
            camab: Some(camab),
        },
        m,
        stream,
    )
}

/// Both errors for a CAMAB with a reward-level state map.
pub fn estimate_errors(
    camab: &CamabInstance,
    tau: &RewardMap,
    m: usize,
    stream: Stream,
) -> Result<AbstractionErrors> {
    measure_errors(
        &BaseWithMap {
            base: camab.base.as_ref(),
            tau,
            camab: Some(camab),
        },
        m,
        stream,
    )
}
