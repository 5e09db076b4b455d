"""Smoke test for the parareg extension module.

Build and install first:

    pip install --no-build-isolation ./crates/py
    python python/smoke_test.py
"""

import math
import sys

import parareg


def check(name, ok):
    print(f"[{'pass' if ok else 'FAIL'}] {name}")
    return ok


def main():
    results = []

    names = parareg.list_fixtures()
    results.append(check("fixtures listed", "parabola" in names and "soc_boundary" in names))

    parabola = parareg.Problem.fixture("parabola", 0.0)
    value, exact = parareg.d2_delta_omega(parabola, [1.0, 0.0])
    results.append(check("parabola second subderivative is 2", exact and abs(value - 2.0) < 1e-9))
    results.append(check("direction (1, 0) is critical", parareg.critical(parabola, [1.0, 0.0])))

    off, _ = parareg.d2_delta_omega(parabola, [0.0, -1.0])
    results.append(check("non-critical direction gives +inf", math.isinf(off)))

    soc = parareg.Problem.fixture("soc_boundary")
    d2, _ = parareg.d2_delta_omega(soc, [1.0, 1.0, 1.0])
    results.append(check("second-order cone boundary value is finite", math.isfinite(d2)))

    lam = [1.0]
    for rho in (1.0, 10.0):
        got = parareg.d2_auglag(parabola, rho, [1.0, 0.3], lam)
        results.append(check(f"augmented Lagrangian at rho={rho:g}", abs(got - (2.0 + rho * 0.09)) < 1e-9))

    kind, least = parareg.multipliers(parabola)
    results.append(check("single multiplier", least is not None and abs(least[0] - 1.0) < 1e-9))

    report, code = parareg.run("subderivative", parabola, w=[1.0, 0.0])
    results.append(check("subderivative command exits 0", code == 0 and report["command"] == "subderivative"))

    again = parareg.Problem.from_json(parabola.to_json())
    results.append(check("problem file round trip", again.to_json() == parabola.to_json()))

    try:
        parareg.Problem.from_json("{\n  \"n\": 2,\n  oops\n}")
        results.append(check("parse errors raise", False))
    except ValueError as e:
        results.append(check("parse errors raise", "line" in str(e)))

    failed = results.count(False)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
