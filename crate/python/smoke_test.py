"""Smoke test for the camab extension module. Build first with
`maturin build -m crates/py/Cargo.toml` and pip install the wheel."""

import math

import camab


def main():
    assert camab.w2_empirical([0.0, 1.0], [0.0, 1.0]) == 0.0
    assert camab.w2_empirical([0.0, 0.0], [1.0, 1.0]) == 1.0
    assert math.isclose(camab.w2_gaussian(0.0, 1.0, 3.0, 1.0), 3.0)
    assert math.isclose(camab.epsilon_alpha(0.1, 0.2), 0.6)
    assert camab.ucb_index([], 0.1) == math.inf
    assert camab.build_dhat([1.0, 0.5, 0.0], 0.6) == [2]
    assert camab.omega_preimage([0, 0, 1, 2], 3, [0, 2]) == [0, 1, 3]
    assert math.isclose(camab.cumulative_regret([1, 1, 0], [1.0, 0.5], 2, 0.5), 2.0)

    spec = camab.GaussianCamab.reference()
    s, e, eps = spec.exact_errors()
    assert math.isclose(eps, 2 * (s + e))
    assert all(holds for _, _, holds in spec.check_lemma1())
    assert all(holds for _, _, holds in spec.check_lemma2())
    assert spec.check_prop1()
    n_prime = spec.min_abstract_horizon(1000)
    assert spec.lemma3_lhs(n_prime) <= 2 / 1000

    run = spec.at_ucb(1000, n_prime, eps, "one-over-n-squared", seed=3, cost_c=0.01)
    assert len(run["actions"]) == 1000
    assert run["regret"] <= spec.prop2_bound(1000, n_prime, 0.01)
    wide = spec.at_ucb(100, 6, math.inf, 0.1, seed=3)
    plain = spec.run_ucb(100, 0.1, seed=3)
    assert wide["actions"] == plain["actions"]

    two = camab.GaussianCamab([(1.0, 0.0), (0.0, 0.0)], [(1.0, 0.0)], [0, 0])
    actions = two.run_ucb(10, 0.1, seed=0)["actions"]
    assert (actions.count(0), actions.count(1)) == (8, 2)

    zero = [0.0] * 10
    reward, states = camab.simulate_sirs(beta=zero, gamma=zero, zeta=zero)
    assert reward == -10100.0
    assert len(states) == 101 and all(sum(c) == 100 for row in states for c in row)

    rows = camab.sweep("[algorithm]\nepsilon_grid = [1e9]\n[experiment]\nrepeats = 2\n[pilot]\nsamples = 50\n")
    assert len(rows) == 1 and rows[0]["mean_diff"] == 0.0

    print("python smoke test passed")


if __name__ == "__main__":
    main()
