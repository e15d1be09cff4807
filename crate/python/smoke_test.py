"""Smoke test for the coulomb_gas extension module.

Build and install first:  pip install --no-build-isolation crates/python
"""

import json
import math

import coulomb_gas as cg


def main():
    t2 = cg.SpectralModel("torus2")
    p, bound = t2.heat_kernel(10.0, [0.1, 0.2], [0.7, 0.4])
    assert abs(p - 1.0) < 1e-10 and bound >= 0.0

    # G is symmetric and finite off the diagonal
    g_xy = t2.green([0.1, 0.2], [0.6, 0.7])
    g_yx = t2.green([0.6, 0.7], [0.1, 0.2])
    assert g_xy == g_yx and math.isfinite(g_xy)
    assert t2.regularized_green(1e-3, [0.1, 0.2], [0.6, 0.7]) <= g_xy + 2e-3

    h = t2.hamiltonian([[0.0, 0.0], [0.5, 0.5]])
    assert abs(h - 0.25 * g_xy) < 1e-12

    mu = cg.Measure("torus2", [[0.0, 0.0], [0.5, 0.0]], [0.5, 0.5])
    nu = cg.Measure("torus2", [[0.25, 0.0], [0.75, 0.0]])
    w, plan = cg.w1(mu, nu)
    assert abs(w - 0.25) < 1e-12 and len(plan) == 2
    lo, hi = cg.w1_entropic(mu, nu, 0.01)
    assert lo <= w + 1e-9 and w <= hi + 1e-9
    assert t2.energy_distance(mu, nu) > 0.0

    run = t2.sample(n=8, beta=64.0, sweeps=200, burn_in=200, seed=3)
    assert len(run["coords"]) == 8 and 0.0 < run["acceptance"] <= 1.0

    eps = 1.0 / (8.0 * math.pi ** 2)
    entropy, nodes, density = cg.equilibrium("torus2", '{"type": "cosine", "amplitude": %r}' % eps, 32)
    assert len(nodes) == len(density) == 32 * 32
    assert abs(min(density) - 0.5) < 1e-12 and 0.06 < entropy < 0.07

    lo, hi = cg.wilson_interval(0, 100)
    assert lo == 0.0 and 0.0 < hi < 0.05

    failed = [c for c in cg.verify("spectral", "sphere2") if not c[3]]
    assert not failed, failed

    config = {
        "manifold": "torus2",
        "n_list": [4],
        "beta_rule": "n2",
        "r_list": [0.1, 0.3],
        "chains": 8,
        "sweeps": 20,
        "burn_in": 20,
        "seed": 5,
        "grid_resolution": 16,
        "fitted_c": 1.5,
    }
    result = cg.run_experiment(json.dumps(config))
    assert len(result["rows"]) == 2 and result["violations"] == 0

    try:
        cg.SpectralModel("klein")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown manifold accepted")

    print("coulomb_gas smoke test ok")


if __name__ == "__main__":
    main()
