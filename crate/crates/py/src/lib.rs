//! Python bindings for `camab_core`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use std::collections::BTreeSet;

use camab_core::algorithms::{self, AtUcbConfig, DeltaSetting};
use camab_core::bandit::{self, ArmId, ArmStats, InterventionMap, RunHistory};
use camab_core::harness;
use camab_core::metrics::{self, AffineMap, EmpiricalDistribution, GaussianSpec};
use camab_core::sirs::{self, SirsParams};
use camab_core::theory::{self, HorizonRequirement, SyntheticCamabSpec};
use camab_core::{CamabError, Stream};

fn err(e: CamabError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn ids(set: &BTreeSet<ArmId>) -> Vec<usize> {
    set.iter().map(|a| a.index()).collect()
}

fn delta_setting(delta: &Bound<'_, PyAny>) -> PyResult<DeltaSetting> {
    let setting = if let Ok(d) = delta.extract::<f64>() {
        DeltaSetting::Fixed(d)
    } else {
        delta.extract::<String>()?.parse().map_err(err)?
    };
    setting.validate().map_err(err)?;
    Ok(setting)
}

/// W2 distance between two empirical samples.
#[pyfunction]
fn w2_empirical(p: Vec<f64>, q: Vec<f64>) -> PyResult<f64> {
    let p = EmpiricalDistribution::new(p).map_err(err)?;
    let q = EmpiricalDistribution::new(q).map_err(err)?;
    Ok(metrics::w2_empirical(&p, &q))
}

#[pyfunction]
fn w2_gaussian(mean1: f64, std1: f64, mean2: f64, std2: f64) -> f64 {
    metrics::w2_gaussian(GaussianSpec::new(mean1, std1), GaussianSpec::new(mean2, std2))
}

#[pyfunction]
fn epsilon_alpha(s: f64, e: f64) -> PyResult<f64> {
    metrics::epsilon_alpha(s, e).map_err(err)
}

/// UCB index of an arm that has observed `rewards`.
#[pyfunction]
fn ucb_index(rewards: Vec<f64>, delta: f64) -> f64 {
    let stats = rewards.into_iter().fold(ArmStats::new(), ArmStats::updated);
    algorithms::ucb_index(&stats, delta)
}

#[pyfunction]
fn build_dhat(abstract_means: Vec<f64>, epsilon: f64) -> PyResult<Vec<usize>> {
    Ok(ids(&algorithms::build_dhat(&abstract_means, epsilon).map_err(err)?))
}

#[pyfunction]
fn omega_preimage(omega: Vec<usize>, abstract_count: usize, abstract_set: Vec<usize>) -> PyResult<Vec<usize>> {
    let map = InterventionMap::new(omega, abstract_count).map_err(err)?;
    let set = abstract_set.into_iter().map(ArmId).collect();
    Ok(ids(&bandit::omega_preimage(&map, &set)))
}

#[pyfunction]
#[pyo3(signature = (actions, true_means, n_abstract_pulls=0, cost_c=0.0))]
fn cumulative_regret(actions: Vec<usize>, true_means: Vec<f64>, n_abstract_pulls: u64, cost_c: f64) -> PyResult<f64> {
    let history = RunHistory::from_actions(actions.into_iter().map(ArmId).collect(), n_abstract_pulls);
    bandit::cumulative_regret(&history, &true_means, cost_c).map_err(err)
}

/// Gaussian base and abstract bandits linked by `omega` and an affine reward
/// map `y -> tau_scale * y + tau_shift`.
#[pyclass(name = "GaussianCamab", frozen)]
struct PyGaussianCamab {
    spec: SyntheticCamabSpec,
}

fn history_dict<'py>(py: Python<'py>, h: &RunHistory) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("actions", h.actions().iter().map(|a| a.index()).collect::<Vec<_>>())?;
    d.set_item("rewards", h.rewards().to_vec())?;
    d.set_item("n_abstract_pulls", h.n_abstract_pulls)?;
    Ok(d)
}

#[pymethods]
impl PyGaussianCamab {
    #[new]
    #[pyo3(signature = (base, abstract_arms, omega, tau_scale=1.0, tau_shift=0.0))]
    fn new(
        base: Vec<(f64, f64)>,
        abstract_arms: Vec<(f64, f64)>,
        omega: Vec<usize>,
        tau_scale: f64,
        tau_shift: f64,
    ) -> PyResult<Self> {
        let g = |v: Vec<(f64, f64)>| v.into_iter().map(|(m, s)| GaussianSpec::new(m, s)).collect();
        let tau = AffineMap {
            scale: tau_scale,
            shift: tau_shift,
        };
        let spec = SyntheticCamabSpec::new(g(base), g(abstract_arms), omega, tau).map_err(err)?;
        Ok(PyGaussianCamab { spec })
    }

    #[staticmethod]
    fn reference() -> Self {
        PyGaussianCamab {
            spec: theory::reference_spec(),
        }
    }

    fn base_means(&self) -> Vec<f64> {
        self.spec.base_means()
    }

    /// `(s, e, epsilon)` in closed form.
    fn exact_errors(&self) -> (f64, f64, f64) {
        let e = theory::exact_errors_gaussian(&self.spec);
        (e.s, e.e, e.epsilon)
    }

    /// `(s, e, epsilon)` estimated from `m` draws per arm.
    fn estimate_errors(&self, m: usize, seed: u64) -> PyResult<(f64, f64, f64)> {
        let camab = self.spec.camab(0.0).map_err(err)?;
        let tau = metrics::RewardMap::affine(self.spec.tau);
        let e = metrics::estimate_errors(&camab, &tau, m, Stream::new(seed)).map_err(err)?;
        Ok((e.s, e.e, e.epsilon))
    }

    fn run_ucb<'py>(&self, py: Python<'py>, n: u64, delta: &Bound<'py, PyAny>, seed: u64) -> PyResult<Bound<'py, PyDict>> {
        let delta = delta_setting(delta)?.resolve(n);
        let camab = self.spec.camab(0.0).map_err(err)?;
        let arms: Vec<ArmId> = (0..self.spec.base_arms.len()).map(ArmId).collect();
        let out = algorithms::run_ucb(camab.base.as_ref(), &arms, n, delta, Stream::new(seed).base_phase())
            .map_err(err)?;
        let d = history_dict(py, &out.history)?;
        d.set_item("recommended", out.recommended(delta).index())?;
        Ok(d)
    }

    #[pyo3(signature = (n, n_prime, epsilon, delta, seed, cost_c=0.0))]
    #[allow(clippy::too_many_arguments)]
    fn at_ucb<'py>(
        &self,
        py: Python<'py>,
        n: u64,
        n_prime: u64,
        epsilon: f64,
        delta: &Bound<'py, PyAny>,
        seed: u64,
        cost_c: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let camab = self.spec.camab(cost_c).map_err(err)?;
        let config = AtUcbConfig {
            n,
            n_prime,
            epsilon,
            delta: delta_setting(delta)?,
        };
        let out = algorithms::at_ucb(&camab, &config, Stream::new(seed)).map_err(err)?;
        let d = history_dict(py, &out.history)?;
        d.set_item("abstract_means", out.filter.abstract_means.clone())?;
        d.set_item("d_hat", ids(&out.filter.d_hat))?;
        d.set_item("a_hat", ids(&out.filter.a_hat_set))?;
        d.set_item("fell_back", out.filter.fell_back)?;
        d.set_item("recommended", out.a_hat_1.index())?;
        let regret = bandit::cumulative_regret(&out.history, &self.spec.base_means(), cost_c).map_err(err)?;
        d.set_item("regret", regret)?;
        Ok(d)
    }

    /// `(lhs, rhs, holds)` per base arm.
    fn check_lemma1(&self) -> Vec<(f64, f64, bool)> {
        theory::check_lemma1(&self.spec).into_iter().map(|r| (r.lhs, r.rhs, r.holds)).collect()
    }

    fn check_lemma2(&self) -> Vec<(f64, f64, bool)> {
        theory::check_lemma2(&self.spec).into_iter().map(|r| (r.lhs, r.rhs, r.holds)).collect()
    }

    /// Whether both sides of the sandwich hold, optionally with a custom
    /// threshold.
    #[pyo3(signature = (epsilon=None))]
    fn check_prop1(&self, epsilon: Option<f64>) -> bool {
        match epsilon {
            Some(eps) => theory::check_prop1_with_epsilon(&self.spec, eps).holds(),
            None => theory::check_prop1(&self.spec).holds(),
        }
    }

    /// Minimal abstract budget, or `None` when no budget suffices.
    fn min_abstract_horizon(&self, n: u64) -> Option<u64> {
        match theory::min_abstract_horizon(&self.spec, n) {
            HorizonRequirement::Required { n_prime, .. } => Some(n_prime),
            HorizonRequirement::Unsatisfiable => None,
        }
    }

    fn lemma3_lhs(&self, n_prime: f64) -> f64 {
        theory::lemma3_lhs(&self.spec, n_prime)
    }

    fn prop2_bound(&self, n: u64, n_prime: u64, cost_c: f64) -> f64 {
        theory::prop2_bound(&self.spec, n, n_prime, cost_c)
    }
}

/// One SIRS run of the default base model with optional rate overrides.
/// Returns `(reward, states)` with `states[t][c] = (S, I, R)`.
#[pyfunction]
#[pyo3(signature = (action=None, seed=0, beta=None, gamma=None, zeta=None))]
#[allow(clippy::type_complexity)]
fn simulate_sirs(
    action: Option<usize>,
    seed: u64,
    beta: Option<Vec<f64>>,
    gamma: Option<Vec<f64>>,
    zeta: Option<Vec<f64>>,
) -> PyResult<(f64, Vec<Vec<(u32, u32, u32)>>)> {
    let mut params = SirsParams::base_default();
    if let Some(b) = beta {
        params.beta = b;
    }
    if let Some(g) = gamma {
        params.gamma = g;
    }
    if let Some(z) = zeta {
        params.zeta = z;
    }
    params.validate("sirs").map_err(err)?;
    let mut rng = Stream::new(seed).rng();
    let (traj, reward) = match action {
        Some(a) => sirs::simulate(&params, a, &mut rng).map_err(err)?,
        None => sirs::simulate_free(&params, &mut rng),
    };
    let states = (0..traj.time_points())
        .map(|t| traj.at(t).iter().map(|c| (c.s, c.i, c.r)).collect())
        .collect();
    Ok((reward, states))
}

/// Runs the regret sweep for a TOML configuration; returns the aggregate
/// rows as dicts.
#[pyfunction]
#[pyo3(signature = (config_toml="", seed=None))]
fn sweep<'py>(py: Python<'py>, config_toml: &str, seed: Option<u64>) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut config = harness::parse_config(config_toml).map_err(err)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    let result = py.detach(|| harness::cmd_sweep(&config, Stream::new(config.seed))).map_err(err)?;
    result
        .aggregate
        .iter()
        .map(|a| {
            let d = PyDict::new(py);
            d.set_item("epsilon", a.epsilon)?;
            d.set_item("repeats", a.repeats)?;
            d.set_item("mean_diff", a.mean_diff)?;
            d.set_item("se_diff", a.se_diff)?;
            d.set_item("mean_regret_ucb", a.mean_regret_ucb)?;
            d.set_item("mean_regret_atucb", a.mean_regret_atucb)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn camab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(w2_empirical, m)?)?;
    m.add_function(wrap_pyfunction!(w2_gaussian, m)?)?;
    m.add_function(wrap_pyfunction!(epsilon_alpha, m)?)?;
    m.add_function(wrap_pyfunction!(ucb_index, m)?)?;
    m.add_function(wrap_pyfunction!(build_dhat, m)?)?;
    m.add_function(wrap_pyfunction!(omega_preimage, m)?)?;
    m.add_function(wrap_pyfunction!(cumulative_regret, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_sirs, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_class::<PyGaussianCamab>()?;
    Ok(())
}
