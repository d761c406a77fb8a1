"""Smoke test for the pylocalstar extension module.

Build and run from the workspace root:

    cargo build --release -p localstar-py --features extension-module
    cp target/release/libpylocalstar.so python/pylocalstar.so
    python3 python/smoke_test.py
"""

import json
import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import pylocalstar as ls


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    t = 0.3
    assert close(ls.psi_inverse(ls.psi(t)), t, 1e-12)

    grid = ls.Grid.cube(2, 6.0, 128)
    assert len(grid) == 128 * 128

    f = "bump(x - 0.1, y, 0.3, 2.55)"
    g = "exp(i * x) * bump(x + 0.1, y - 0.1, 0.3, 2.55)"

    classical = ls.Engine(ls.Action(radius=5.0, hbar=0.0))
    fg = classical.product(f, g, grid)
    pts = grid.points()
    for k in range(0, len(pts), 389):
        x, y = pts[k]
        fx = math.exp(-((x - 0.1) ** 2 + y**2) / 0.18) if math.hypot(x - 0.1, y) < 2.25 else None
        if fx is not None:
            gx = complex(math.cos(x), math.sin(x)) * math.exp(-((x + 0.1) ** 2 + (y - 0.1) ** 2) / 0.18)
            if math.hypot(x + 0.1, y - 0.1) < 2.25:
                assert abs(fg[k] - fx * gx) < 1e-12, (k, fg[k], fx * gx)

    action = ls.Action(radius=5.0, hbar=0.1)
    engine = ls.Engine(action)
    ab = engine.product(f, g, grid)
    ba = engine.product(g, f, grid)
    commutator = max(abs(p - q) for p, q in zip(ab, ba))
    assert commutator > 1e-4, commutator

    samples = classical.product(f, "1", grid)
    again = engine.product(samples, g, grid)
    assert max(abs(p - q) for p, q in zip(again, ab)) < 1e-3

    value, tol = ls.seminorm(action, f, grid, [0.0, 0.0], [0.2, 0.0], basis=16, density=2)
    assert 0.0 < value <= 1.0 + tol, (value, tol)

    report = json.loads(ls.run_verify("psi,flows"))
    assert report["passed"], report
    forced = json.loads(ls.run_verify("flows", tolerance_override=1e-30))
    assert not forced["passed"]

    try:
        ls.Action(theta0=[[0.0, 1.0], [1.0, 0.0]])
    except ValueError as e:
        assert "skew" in str(e)
    else:
        raise AssertionError("non-skew theta accepted")

    print("pylocalstar", ls.__version__, "smoke test passed")


if __name__ == "__main__":
    main()
