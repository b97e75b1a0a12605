"""Smoke test for the panreg extension module.

Build and run:
    cargo build -p panreg-py --release --features extension-module
    cp target/release/libpanreg_py.so crates/py/python/panreg.so
    python3 crates/py/python/smoke_test.py
"""

import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import panreg  # noqa: E402


def close(a, b, tol):
    assert abs(a - b) <= tol, (a, b)


def main():
    r, angles = panreg.to_hyperspherical([3.0, -4.0, 12.0])
    close(r, 13.0, 1e-12)
    back = panreg.from_hyperspherical(r, angles)
    for u, v in zip(back, [3.0, -4.0, 12.0]):
        close(u, v, 1e-10)

    close(panreg.proportion_within(0.5, 15), 0.951, 1e-3)
    close(panreg.shrinkage_factor(0.0, 1.0, 0.0, 1.0), 0.5, 1e-12)

    fit = panreg.pan_ridge_fit_orthonormal([1.0, 2.0, -0.5], [0.3, 1.0, 0.2], 1.0, 2.5)
    dot = sum(b * x for b, x in zip(fit.coefficients, [0.3, 1.0, 0.2]))
    close(dot, fit.prediction, 1e-10)
    close(fit.prediction, fit.shrinkage_factor * fit.ols_prediction, 1e-10)

    rows = []
    for i in range(30):
        a = math.sin(0.7 * i) * 2.0
        b = math.cos(1.3 * i + 0.4) * 3.0
        c = math.sin(0.37 * i) * math.cos(0.11 * i)
        y = 0.8 * a - 0.3 * b + 2.0 * c + 0.1 * math.sin(2.9 * i)
        rows.append((a, b, c, y))
    data = panreg.Dataset([list(r[:3]) for r in rows], [r[3] for r in rows], ["a", "b", "c"])
    assert (data.n, data.p) == (30, 3)

    ols = panreg.ols(data)
    zero = panreg.fit(data, data.row(4), 0.0, 0.0)
    for u, v in zip(zero.coefficients, ols):
        close(u, v, 1e-12)
    pan = panreg.fit(data, data.row(4), 0.0, 2.0)
    hyp = panreg.fit(data, data.row(4), 0.0, 2.0, parametrization="hyperspherical")
    for u, v in zip(pan.coefficients, hyp.coefficients):
        close(u, v, 1e-6)

    e_ols = panreg.loocv(data, "ols")
    e_pr = panreg.loocv(data, "pan_ridge", 0.0, 0.0)
    assert e_ols == e_pr, (e_ols, e_pr)

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "data.csv")
        with open(path, "w") as f:
            f.write("a,b,c,y\n")
            for r in rows:
                f.write(",".join(repr(v) for v in r) + "\n")
        again = panreg.Dataset.from_csv(path, "y")
        assert again.column_names == ["a", "b", "c"]
        assert again.row(7) == data.row(7)

    t1 = panreg.bootstrap_tune(data, "pan", lambda2_grid=[-1.0, 0.0, 1.0, 4.0], b=20, seed=3)
    t2 = panreg.bootstrap_tune(data, "pan", lambda2_grid=[-1.0, 0.0, 1.0, 4.0], b=20, seed=3)
    assert t1.mse_surface == t2.mse_surface
    assert t1.selected[1] in t1.lambda2_values

    try:
        panreg.lambda1_star([0.0, 0.0], [1.0, 1.0], 1.0)
    except panreg.PanregError:
        pass
    else:
        raise AssertionError("expected PanregError")

    table = panreg.simulate(3, 0.1, replications=2, b=10, seed=1)
    assert [m for m, _, _ in table][:3] == ["ols", "pan", "ridge"]

    print("panreg smoke test: ok")


if __name__ == "__main__":
    main()
