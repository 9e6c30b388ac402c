//! Discrete-time stochastic SIRS model over fully connected communities.
//!
//! Each step moves individuals S->I, I->R and R->S with binomial counts. The
//! force of infection pools the infected of all communities. A lockdown on a
//! community zeroes its S->I probability inside a fixed time window; the
//! bandit arm `a` is "lock down community `a`", and the reward is minus the
//! total number of infected summed over communities and recorded times.

use serde::{Deserialize, Serialize};

use rand_distr::{Binomial, Distribution};

use crate::bandit::{ArmId, CamabInstance, Environment, InterventionMap};
use crate::error::{CamabError, Result};
use crate::metrics::AbstractedSampler;
use crate::stream::StreamRng;

use std::sync::Arc;

const GRID_TOL: f64 = 1e-9;

/// Default reward rescaling applied before rewards reach a learner.
pub const DEFAULT_REWARD_SCALE: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SirsParams {
    pub k: usize,
    pub n_per_community: u32,
    pub dt: f64,
    pub t_end: f64,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub zeta: Vec<f64>,
    /// Lockdown window as fractions of `t_end`, closed on both ends.
    pub lockdown_window: (f64, f64),
    /// Initial (S, I, R) fractions of each community.
    pub init_fracs: (f64, f64, f64),
}

/// Infection ease for `k` communities: 0.05 everywhere except the last two,
/// which get 1.0 and 2.5.
pub fn default_beta(k: usize) -> Vec<f64> {
    let mut beta = vec![0.05; k];
    let hubs = [1.0, 2.5];
    for (slot, &b) in beta.iter_mut().rev().zip(hubs.iter().rev()) {
        *slot = b;
    }
    beta
}

/// `n` points spaced geometrically from `lo` to `hi`.
pub fn geomspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
            .collect(),
    }
}

fn as_integer(x: f64) -> Option<u64> {
    let r = x.round();
    ((x - r).abs() <= GRID_TOL * x.abs().max(1.0) && r >= 0.0).then_some(r as u64)
}

impl SirsParams {
    /// Base model: 10 communities of 100, step 0.5 up to time 50, 10% infected
    /// at the start, infection rates spread evenly over [0.3, 1.5].
    /// Eight low-transmission communities (beta 0.05) and two hubs (beta 1.0
    /// and 2.5); recovery 0.2 and waning 0.02 everywhere.
    pub fn base_default() -> Self {
        Self::with_rates(10, 100, 0.5, 50.0, default_beta(10), 0.2, 0.02)
    }

    pub fn with_rates(
        k: usize,
        n_per_community: u32,
        dt: f64,
        t_end: f64,
        beta: Vec<f64>,
        gamma: f64,
        zeta: f64,
    ) -> Self {
        SirsParams {
            k,
            n_per_community,
            dt,
            t_end,
            beta,
            gamma: vec![gamma; k],
            zeta: vec![zeta; k],
            lockdown_window: (0.1, 0.5),
            init_fracs: (0.9, 0.1, 0.0),
        }
    }

    /// Coarse model over the groups of `grouping`: each abstract community
    /// takes the mean rates of its members.
    pub fn abstracted(
        base: &SirsParams,
        grouping: &GroupingMap,
        n_per_community: u32,
        dt: f64,
    ) -> Result<SirsParams> {
        if grouping.base_count() != base.k {
            return Err(CamabError::config(
                "sirs.group_sizes",
                format!("grouping covers {} communities, base model has {}", grouping.base_count(), base.k),
            ));
        }
        let group_mean = |v: &[f64]| -> Vec<f64> {
            grouping
                .groups()
                .iter()
                .map(|members| members.iter().map(|&c| v[c]).sum::<f64>() / members.len() as f64)
                .collect()
        };
        let params = SirsParams {
            k: grouping.abstract_count(),
            n_per_community,
            dt,
            t_end: base.t_end,
            beta: group_mean(&base.beta),
            gamma: matched_rates(&group_mean(&base.gamma), base.dt, dt)?,
            zeta: matched_rates(&group_mean(&base.zeta), base.dt, dt)?,
            lockdown_window: base.lockdown_window,
            init_fracs: base.init_fracs,
        };
        params.validate("sirs.abstract")?;
        Ok(params)
    }

    /// Number of steps `T / dt`.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn initial_counts(&self) -> CommunityState {
        let n = self.n_per_community as f64;
        let s = (self.init_fracs.0 * n).round() as u32;
        let i = (self.init_fracs.1 * n).round() as u32;
        CommunityState {
            s,
            i,
            r: self.n_per_community - s - i,
        }
    }

    /// Checks every invariant; `prefix` is the config path used in errors.
    pub fn validate(&self, prefix: &str) -> Result<()> {
        let field = |name: &str| format!("{prefix}.{name}");
        if self.k == 0 {
            return Err(CamabError::config(field("k"), "need at least one community"));
        }
        if self.n_per_community == 0 {
            return Err(CamabError::config(field("n_per_community"), "must be positive"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(CamabError::config(field("dt"), "must be positive"));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(CamabError::config(field("t_end"), "must be positive"));
        }
        if as_integer(self.t_end / self.dt).is_none() {
            return Err(CamabError::config(
                field("dt"),
                format!("t_end / dt = {} is not an integer", self.t_end / self.dt),
            ));
        }
        for (name, v) in [("beta", &self.beta), ("gamma", &self.gamma), ("zeta", &self.zeta)] {
            if v.len() != self.k {
                return Err(CamabError::config(
                    field(name),
                    format!("expected {} values, got {}", self.k, v.len()),
                ));
            }
            if let Some(i) = v.iter().position(|x| !(*x >= 0.0) || !x.is_finite()) {
                return Err(CamabError::config(
                    format!("{prefix}.{name}[{i}]"),
                    "rates must be finite and non-negative",
                ));
            }
        }
        let (lo, hi) = self.lockdown_window;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(CamabError::config(
                field("lockdown_window"),
                "need 0 <= start <= end <= 1",
            ));
        }
        let (s0, i0, r0) = self.init_fracs;
        if [s0, i0, r0].iter().any(|f| !(*f >= 0.0)) || ((s0 + i0 + r0) - 1.0).abs() > GRID_TOL {
            return Err(CamabError::config(
                field("init_fracs"),
                "fractions must be non-negative and sum to 1",
            ));
        }
        let n = self.n_per_community as f64;
        if as_integer(s0 * n).is_none() || as_integer(i0 * n).is_none() {
            return Err(CamabError::config(
                field("init_fracs"),
                "initial susceptible and infected counts must be whole numbers",
            ));
        }
        Ok(())
    }

    fn lockdown_active(&self, step: usize) -> bool {
        let t = step as f64 * self.dt;
        let (lo, hi) = self.lockdown_window;
        t >= lo * self.t_end - GRID_TOL && t <= hi * self.t_end + GRID_TOL
    }
}

/// Rates for a coarser step `coarse_dt` under which the mean time spent in a
/// compartment equals that of the chain stepped at `fine_dt`.
///
/// A compartment left with per-step probability `q = 1 - exp(-rate * dt)` is
/// occupied for `dt / q` time units on average. Matching `coarse_dt / q'` to
/// `fine_dt / q` gives `q' = q * coarse_dt / fine_dt`.
pub fn matched_rates(rates: &[f64], fine_dt: f64, coarse_dt: f64) -> Result<Vec<f64>> {
    rates
        .iter()
        .map(|&rate| {
            if rate == 0.0 {
                return Ok(0.0);
            }
            let q = hazard(rate * fine_dt) * coarse_dt / fine_dt;
            if q >= 1.0 {
                return Err(CamabError::config(
                    "sirs.abstract.dt",
                    format!("rate {rate} is too fast to match with step {coarse_dt}"),
                ));
            }
            Ok(-(-q).ln_1p() / coarse_dt)
        })
        .collect()
}

/// Compartment counts of one community.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommunityState {
    pub s: u32,
    pub i: u32,
    pub r: u32,
}

impl CommunityState {
    pub fn total(&self) -> u32 {
        self.s + self.i + self.r
    }
}

/// Community states at every recorded time `j * dt`, `j = 0..=steps`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    k: usize,
    states: Vec<CommunityState>,
}

impl Trajectory {
    pub fn communities(&self) -> usize {
        self.k
    }

    pub fn time_points(&self) -> usize {
        self.states.len() / self.k
    }

    pub fn at(&self, step: usize) -> &[CommunityState] {
        &self.states[step * self.k..(step + 1) * self.k]
    }

    pub fn get(&self, step: usize, community: usize) -> CommunityState {
        self.states[step * self.k + community]
    }

    /// Minus the sum of infected over all communities and recorded times.
    pub fn reward(&self) -> f64 {
        0.0 - self.states.iter().map(|c| c.i as u64).sum::<u64>() as f64
    }
}

fn binomial(n: u32, p: f64, rng: &mut StreamRng) -> u32 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    Binomial::new(n as u64, p)
        .expect("probability in [0, 1)")
        .sample(rng) as u32
}

/// `1 - exp(-x)` for `x >= 0`.
fn hazard(x: f64) -> f64 {
    -(-x).exp_m1()
}

/// One step of the binomial SIRS dynamics. Communities with a `true` lockdown
/// flag have no new infections this step.
pub fn sirs_step(
    state: &[CommunityState],
    params: &SirsParams,
    lockdown_flags: &[bool],
    rng: &mut StreamRng,
) -> Vec<CommunityState> {
    let k = params.k;
    debug_assert_eq!(state.len(), k);
    let infected: u64 = state.iter().map(|c| c.i as u64).sum();
    let pressure = infected as f64 / (k as f64 * params.n_per_community as f64);
    state
        .iter()
        .enumerate()
        .map(|(c, cur)| {
            let p_infect = if lockdown_flags[c] {
                0.0
            } else {
                hazard(params.beta[c] * params.dt * pressure)
            };
            let s_to_i = binomial(cur.s, p_infect, rng);
            let i_to_r = binomial(cur.i, hazard(params.gamma[c] * params.dt), rng);
            let r_to_s = binomial(cur.r, hazard(params.zeta[c] * params.dt), rng);
            CommunityState {
                s: cur.s - s_to_i + r_to_s,
                i: cur.i + s_to_i - i_to_r,
                r: cur.r + i_to_r - r_to_s,
            }
        })
        .collect()
}

/// Simulates the model with a lockdown on community `action` and returns the
/// trajectory with its reward.
pub fn simulate(params: &SirsParams, action: usize, rng: &mut StreamRng) -> Result<(Trajectory, f64)> {
    if action >= params.k {
        return Err(CamabError::domain(format!(
            "lockdown target {action} outside {} communities",
            params.k
        )));
    }
    Ok(simulate_unchecked(params, Some(action), rng))
}

/// Simulation without any lockdown.
pub fn simulate_free(params: &SirsParams, rng: &mut StreamRng) -> (Trajectory, f64) {
    simulate_unchecked(params, None, rng)
}

fn simulate_unchecked(
    params: &SirsParams,
    action: Option<usize>,
    rng: &mut StreamRng,
) -> (Trajectory, f64) {
    let steps = params.steps();
    let k = params.k;
    let mut states = Vec::with_capacity((steps + 1) * k);
    let mut current = vec![params.initial_counts(); k];
    states.extend_from_slice(&current);
    let mut flags = vec![false; k];
    for j in 0..steps {
        if let Some(a) = action {
            flags[a] = params.lockdown_active(j);
        }
        current = sirs_step(&current, params, &flags, rng);
        states.extend_from_slice(&current);
    }
    let traj = Trajectory { k, states };
    let reward = traj.reward();
    (traj, reward)
}

/// Assignment of base communities to abstract communities. Doubles as the
/// intervention map: locking down base community `c` maps to locking down
/// abstract community `assignment[c]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupingMap {
    assignment: Vec<usize>,
    groups: Vec<Vec<usize>>,
}

impl GroupingMap {
    pub fn new(assignment: Vec<usize>) -> Result<Self> {
        if assignment.is_empty() {
            return Err(CamabError::config("sirs.group_sizes", "grouping is empty"));
        }
        let count = assignment.iter().max().map_or(0, |m| m + 1);
        let mut groups = vec![Vec::new(); count];
        for (c, &g) in assignment.iter().enumerate() {
            groups[g].push(c);
        }
        if let Some(g) = groups.iter().position(Vec::is_empty) {
            return Err(CamabError::config(
                "sirs.group_sizes",
                format!("abstract community {g} has no members"),
            ));
        }
        Ok(GroupingMap { assignment, groups })
    }

    /// Consecutive blocks of the given sizes.
    pub fn contiguous(sizes: &[usize]) -> Result<Self> {
        if sizes.contains(&0) {
            return Err(CamabError::config("sirs.group_sizes", "group sizes must be positive"));
        }
        Self::new(
            sizes
                .iter()
                .enumerate()
                .flat_map(|(g, &n)| std::iter::repeat_n(g, n))
                .collect(),
        )
    }

    pub fn identity(k: usize) -> Result<Self> {
        Self::new((0..k).collect())
    }

    pub fn base_count(&self) -> usize {
        self.assignment.len()
    }

    pub fn abstract_count(&self) -> usize {
        self.groups.len()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn to_omega(&self) -> InterventionMap {
        InterventionMap::new(self.assignment.clone(), self.abstract_count())
            .expect("grouping is total and in range")
    }
}

/// Maps a base trajectory onto the abstract reward scale: infected counts are
/// summed per group, sampled every `dt' / dt` steps, rescaled by
/// `N' / (group size * N)`, summed and negated.
pub fn tau_reward(
    base_traj: &Trajectory,
    grouping: &GroupingMap,
    params: &SirsParams,
    abstract_params: &SirsParams,
) -> Result<f64> {
    let stride = stride(params, abstract_params)?;
    if grouping.base_count() != base_traj.communities() {
        return Err(CamabError::domain("grouping does not match trajectory"));
    }
    let abstract_steps = abstract_params.steps();
    if abstract_steps * stride + 1 != base_traj.time_points() {
        return Err(CamabError::config(
            "sirs.abstract.t_end",
            "base and abstract horizons differ",
        ));
    }
    let n_ratio = abstract_params.n_per_community as f64 / params.n_per_community as f64;
    let mut total = 0.0;
    for members in grouping.groups() {
        let scale = n_ratio / members.len() as f64;
        let infected: u64 = (0..=abstract_steps)
            .map(|j| {
                members
                    .iter()
                    .map(|&c| base_traj.get(j * stride, c).i as u64)
                    .sum::<u64>()
            })
            .sum();
        total += scale * infected as f64;
    }
    Ok(-total)
}

fn stride(params: &SirsParams, abstract_params: &SirsParams) -> Result<usize> {
    match as_integer(abstract_params.dt / params.dt) {
        Some(s) if s >= 1 => Ok(s as usize),
        _ => Err(CamabError::config(
            "sirs.abstract.dt",
            format!(
                "abstract step {} is not a whole multiple of base step {}",
                abstract_params.dt, params.dt
            ),
        )),
    }
}

/// SIRS model as a bandit; rewards are multiplied by `reward_scale`.
#[derive(Clone, Debug)]
pub struct SirsEnvironment {
    params: SirsParams,
    reward_scale: f64,
}

impl SirsEnvironment {
    pub fn new(params: SirsParams, reward_scale: f64) -> Result<Self> {
        params.validate("sirs")?;
        if !(reward_scale > 0.0) || !reward_scale.is_finite() {
            return Err(CamabError::config("sirs.reward_scale", "must be positive"));
        }
        Ok(SirsEnvironment {
            params,
            reward_scale,
        })
    }

    pub fn params(&self) -> &SirsParams {
        &self.params
    }

    pub fn reward_scale(&self) -> f64 {
        self.reward_scale
    }
}

impl Environment for SirsEnvironment {
    fn arm_count(&self) -> usize {
        self.params.k
    }

    fn sample(&self, arm: ArmId, rng: &mut StreamRng) -> f64 {
        simulate_unchecked(&self.params, Some(arm.index()), rng).1 * self.reward_scale
    }
}

pub fn make_base_env(params: SirsParams) -> Result<SirsEnvironment> {
    SirsEnvironment::new(params, DEFAULT_REWARD_SCALE)
}

pub fn make_abstract_env(abstract_params: SirsParams, grouping: &GroupingMap) -> Result<SirsEnvironment> {
    if grouping.abstract_count() != abstract_params.k {
        return Err(CamabError::config(
            "sirs.abstract.k",
            format!(
                "grouping has {} abstract communities, model has {}",
                grouping.abstract_count(),
                abstract_params.k
            ),
        ));
    }
    abstract_params.validate("sirs.abstract")?;
    SirsEnvironment::new(abstract_params, DEFAULT_REWARD_SCALE)
}

/// Ratio of person-time covered by the base and abstract rewards,
/// `k N (T/dt + 1) / (k' N' (T/dt' + 1))`. Multiplying an abstract-scale
/// quantity by it expresses that quantity in base reward units.
pub fn alignment_factor(base: &SirsParams, abstract_params: &SirsParams) -> f64 {
    let cover = |p: &SirsParams| p.k as f64 * p.n_per_community as f64 * (p.steps() + 1) as f64;
    cover(base) / cover(abstract_params)
}

/// Base and abstract SIRS models linked by a community grouping.
///
/// Base rewards are multiplied by `reward_scale`. Abstract rewards and the
/// image of base rewards under [`tau_reward`] live on the abstract scale and
/// are multiplied by `abstract_scale`, which by default is
/// `reward_scale * alignment_factor(..)` so that both bandits report rewards
/// in the same units.
#[derive(Clone, Debug)]
pub struct SirsCamab {
    pub base: SirsParams,
    pub abstract_params: SirsParams,
    pub grouping: GroupingMap,
    pub reward_scale: f64,
    pub abstract_scale: f64,
}

impl SirsCamab {
    pub fn new(
        base: SirsParams,
        abstract_params: SirsParams,
        grouping: GroupingMap,
        reward_scale: f64,
    ) -> Result<Self> {
        base.validate("sirs.base")?;
        abstract_params.validate("sirs.abstract")?;
        if grouping.base_count() != base.k {
            return Err(CamabError::config(
                "sirs.group_sizes",
                format!("grouping covers {} communities, base has {}", grouping.base_count(), base.k),
            ));
        }
        if grouping.abstract_count() != abstract_params.k {
            return Err(CamabError::config(
                "sirs.abstract.k",
                format!("grouping has {} groups, abstract model has {}", grouping.abstract_count(), abstract_params.k),
            ));
        }
        if (base.t_end - abstract_params.t_end).abs() > GRID_TOL {
            return Err(CamabError::config("sirs.abstract.t_end", "must equal the base horizon"));
        }
        stride(&base, &abstract_params)?;
        if !(reward_scale > 0.0) || !reward_scale.is_finite() {
            return Err(CamabError::config("sirs.reward_scale", "must be positive"));
        }
        let abstract_scale = reward_scale * alignment_factor(&base, &abstract_params);
        Ok(SirsCamab {
            base,
            abstract_params,
            grouping,
            reward_scale,
            abstract_scale,
        })
    }

    pub fn with_abstract_scale(mut self, abstract_scale: f64) -> Result<Self> {
        if !(abstract_scale > 0.0) || !abstract_scale.is_finite() {
            return Err(CamabError::config("sirs.abstract_reward_scale", "must be positive"));
        }
        self.abstract_scale = abstract_scale;
        Ok(self)
    }

    /// Defaults: 10 base communities grouped into blocks {3, 3, 2, 2} of an
    /// abstract model with 50 individuals per community and step 2.
    pub fn default_model() -> Self {
        let base = SirsParams::base_default();
        let grouping = GroupingMap::contiguous(&[3, 3, 2, 2]).expect("static grouping");
        let abstract_params =
            SirsParams::abstracted(&base, &grouping, 50, 2.0).expect("static parameters");
        SirsCamab::new(base, abstract_params, grouping, DEFAULT_REWARD_SCALE).expect("static parameters")
    }

    pub fn base_env(&self) -> SirsEnvironment {
        SirsEnvironment {
            params: self.base.clone(),
            reward_scale: self.reward_scale,
        }
    }

    pub fn abstract_env(&self) -> SirsEnvironment {
        SirsEnvironment {
            params: self.abstract_params.clone(),
            reward_scale: self.abstract_scale,
        }
    }

    pub fn camab(&self, cost_c: f64) -> Result<CamabInstance> {
        CamabInstance::new(
            Arc::new(self.base_env()),
            Arc::new(self.abstract_env()),
            self.grouping.to_omega(),
            cost_c,
        )
    }
}

impl AbstractedSampler for SirsCamab {
    fn base_arm_count(&self) -> usize {
        self.base.k
    }

    fn sample_pair(&self, arm: ArmId, rng: &mut StreamRng) -> (f64, f64) {
        let (traj, reward) = simulate_unchecked(&self.base, Some(arm.index()), rng);
        let mapped = tau_reward(&traj, &self.grouping, &self.base, &self.abstract_params)
            .expect("validated at construction");
        (reward * self.reward_scale, mapped * self.abstract_scale)
    }

    fn sample_abstract(&self, arm: ArmId, rng: &mut StreamRng) -> f64 {
        let target = self.grouping.assignment()[arm.index()];
        simulate_unchecked(&self.abstract_params, Some(target), rng).1 * self.abstract_scale
    }
}
