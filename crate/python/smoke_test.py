"""Smoke test for the compiled extension: `python python/smoke_test.py`."""

import math
import random

import sparsum


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol


def main():
    w, rep = sparsum.solve_orthogonal([0.9, 0.1, -0.3, 0.5], k=2, s=0.0)
    assert all(close(a, b) for a, b in zip(w, [0.7, 0.0, 0.0, 0.3])), w
    assert rep.status == "Optimal" and close(rep.objective, 0.18)

    p = sparsum.project([0.2, 0.5, -1.0], k=3, s=0.5)
    assert close(sum(p), 1.0) and sum(-v for v in p if v < 0) <= 0.5 + 1e-12

    rng = random.Random(0)
    x = [[rng.gauss(0, 1) for _ in range(6)] for _ in range(15)]
    y = [rng.gauss(0, 1) for _ in range(15)]
    w_dfo, rep_dfo = sparsum.dfo_solve(x, y, k=2, s=0.3)
    w_mio, rep_mio = sparsum.mio_solve(x, y, k=2, s=0.3, time_limit=30.0)
    assert sum(1 for v in w_mio if abs(v) > 1e-9) <= 2
    assert rep_mio.objective <= rep_dfo.objective + 1e-9
    assert close(sparsum.objective(x, y, w_mio), rep_mio.objective, 1e-9)

    w_l1, rep_l1 = sparsum.solve_l1(x, y, s=0.3)
    assert rep_l1.objective <= rep_mio.objective + 1e-7

    lp = sparsum.export_mio(x, y, k=2, s=0.3)
    assert lp.lstrip().startswith("\\") or "Minimize" in lp
    assert "Binaries" in lp

    ident = [[1.0 if i == j else 0.0 for j in range(3)] for i in range(3)]
    beta = [0.5, 0.7, -0.2]
    assert sparsum.relative_risk(beta, beta, ident) == 0.0
    assert sparsum.relative_risk([0.0] * 3, beta, ident) == 1.0

    assert sparsum.min_nonzeros([0.5, 0.4, 0.1]) >= 1
    assert sparsum.linear_spacing_bound(0.1) >= 1

    try:
        sparsum.solve_orthogonal([1.0], k=0)
    except ValueError:
        pass
    else:
        raise AssertionError("k=0 accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
