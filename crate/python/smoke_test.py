"""Smoke test of the featlip_py extension module."""

import math
import os
import tempfile

import featlip_py as fl


def main():
    r = fl.rnn_lipschitz("cos", 0.5, "uniform:0:6.283185307179586")
    assert abs(r.value - 0.5) < 1e-6, r
    assert r.method == "quadrature"

    relu = fl.rnn_lipschitz("relu", 1.0, "gaussian:1")
    assert abs(relu.value - 1 / math.sqrt(2)) < 1e-4, relu

    assert abs(fl.shift_invariant_lipschitz("matern", dim=2, nu=2.0).value - math.sqrt(2)) < 1e-10
    assert abs(fl.shift_invariant_lipschitz("gaussian", sigma="diag:1,4").value - 2.0) < 1e-10
    lap = fl.shift_invariant_lipschitz("laplace", dim=3)
    assert math.isinf(lap.value) and lap.method == "divergent"

    assert fl.wiener_divergence(10) == 20.0
    assert abs(fl.nu_function("relu", 1.0, "gaussian:1", 0.7) - 0.5) < 1e-10

    try:
        fl.rnn_lipschitz("relu", 1.0, "point:0")
    except fl.HypothesisViolation:
        pass
    else:
        raise AssertionError("expected HypothesisViolation")
    try:
        fl.rnn_lipschitz("relu", -1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("expected ValueError")

    fm = fl.FeatureMap(4096, seed=1, kernel="gaussian")
    assert (fm.n_features, fm.dim) == (4096, 1)
    assert abs(fm.kernel([0.0], [1.0]) - math.exp(-0.5)) < 0.05
    lip, idx = fm.empirical_lipschitz()
    assert abs(lip - 1.0) < 0.2 and 0 <= idx < 99
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "map.rfm")
        fm.save(path)
        again = fl.FeatureMap.load(path)
        assert again.empirical_lipschitz() == (lip, idx)

    rows = fl.quantile_sweep([16, 256], realizations=50, seed=3)
    assert [row[0] for row in rows] == [16, 256]
    assert rows == fl.quantile_sweep([16, 256], realizations=50, seed=3, threads=2)
    print("python smoke test: ok")


if __name__ == "__main__":
    main()
