"""Quick end-to-end check of the Python bindings.

Build and install first:  pip install ./crates/py  (or maturin develop)
"""

import math

import pyspecmult as sm


def main():
    grid = sm.Grid(8.0, 80)
    assert len(grid) == 80

    well = sm.Potential(grid, "well:depth=3,radius=1")
    assert well.in_kato_closure()
    assert abs(well.kato_norm() - 3 * 2 * math.pi) < 0.2

    f = [complex(math.exp(-r * r / 2)) for r in grid.nodes]
    assert abs(grid.lorentz_norm(f, 2.0, 2.0) - grid.lp_norm(f, 2.0)) < 1e-10

    free = sm.Multiplier(sm.Potential(grid, "zero"), "heat:t=0.5")
    exact = sm.oracle_multiplier(sm.Potential(grid, "zero"), "heat:t=0.5", f)
    diff = math.sqrt(sum(abs(a - b) ** 2 * w for a, b, w in zip(free.apply(f), exact, grid.weights)))
    norm = math.sqrt(sum(abs(a) ** 2 * w for a, w in zip(f, grid.weights)))
    print(f"free heat multiplier vs oracle: {diff / norm:.2e}")

    rec = sm.run_check("kato", "[grid]\nn = 80\nrmax = 8\n", [("potential.spec", "well:depth=3,radius=1")])
    assert rec["check"] == "kato" and rec["pass"], rec
    print(f"kato check: constant {rec['constant']:.4f}")

    sol = sm.nls_solve(sm.Potential(sm.Grid(20.0, 200), "zero"), t_end=0.5)
    assert sol["theta"] < 1
    print(f"nls: theta {sol['theta']:.2e} after {sol['iterations']} iterations")
    print("ok")


if __name__ == "__main__":
    main()
