"""Acceptance criteria 1–9 at their full sizes and tolerances.

Each test prints one ``PASS``/``FAIL`` line (visible in ``pytest -v`` output) and
then asserts.  Run ``python tests/test_acceptance.py`` for the lines alone.
"""

import math
import sys
import time

import numpy as np
import pytest

from fbminmax import suites


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def report(number: int, title: str, ok: bool, **values) -> str:
    detail = ", ".join(f"{k}={_fmt(v)}" for k, v in values.items())
    return f"{'PASS' if ok else 'FAIL'} criterion {number} ({title}): {detail}"


def _emit(capsys, line):
    if capsys is None:
        print(line, flush=True)
    else:
        with capsys.disabled():
            print("\n" + line, flush=True)


def _timed(fn):
    t0 = time.perf_counter()
    r = fn()
    return r, time.perf_counter() - t0


def check_1():
    r, dt = _timed(lambda: suites.hardy_suite("half_disk", n_fields=1000, hs=(0.05, 0.025), tol=1e-6))
    ok = r["pass"] and r["n_fields"] == 1000 and dt < 60
    return ok, report(1, "Hardy half-disk", ok, fields=r["n_fields"], min_margin=r["min_margin"],
                      test_fn_rel_err=max(r["test_function_rel_error"]), runtime_s=dt)


def check_2():
    r, dt = _timed(lambda: suites.hardy_suite("disk", n_fields=1000, hs=(0.05, 0.025), tol=1e-6))
    ok = r["pass"] and r["n_fields"] == 1000
    return ok, report(2, "Hardy disk", ok, fields=r["n_fields"], min_margin=r["min_margin"],
                      test_fn_rel_err=max(r["test_function_rel_error"]), runtime_s=dt)


def check_3():
    r, dt = _timed(lambda: suites.convexity_suite(n_solves=100, n_competitors=10, tol=1e-8, flat_tol=1e-10))
    ok = r["pass"] and dt < 600
    return ok, report(3, "energy convexity", ok, solves=r["n_solves"], min_residual=r["min_residual"],
                      max_energy=r["max_energy"], flat_error=r["max_flat_pythagoras_error"], runtime_s=dt)


def check_4():
    r, dt = _timed(lambda: suites.uniqueness_suite(tol=1e-6))
    ok = r["pass"]
    return ok, report(4, "uniqueness/continuity", ok, max_duplicate_distance=r["max_duplicate_distance"],
                      monotone=r["monotone"], runtime_s=dt)


def check_5():
    r, dt = _timed(lambda: suites.exchange_suite(n_configs=50))
    ok = r["pass"] and r["violations"] == 0 and r["n_configs"] == 50
    return ok, report(5, "exchange inequalities", ok, configs=r["n_configs"], violations=r["violations"],
                      min_residual=r["min_residual"], runtime_s=dt)


def check_6():
    r, dt = _timed(lambda: suites.extension_suite(n_pairs=50, Rs=(0.5, 1.0, 2.0), stability=0.25))
    ok = r["pass"]
    return ok, report(6, "extension lemma", ok, rho_rel_err=r["max_rho_rel_error"], K_fit=r["K_fit"],
                      K_spread=r["K_spread"], K_variation_across_R=r["max_K_variation_across_R"], runtime_s=dt)


def check_7():
    r, dt = _timed(lambda: suites.width_benchmark(h=0.05, iters=50))
    d = r["final_slice"]
    ok = r["pass"] and r["iterations"] <= 50 and dt < 1800
    return ok, report(7, "unit-ball width", ok, width=r["width"], rel_err=r["relative_error"],
                      monotone=r["monotone"], iterations=r["iterations"], defect=d["defect"],
                      defect_tol=0.02 * math.pi, hopf_l1=d["hopf_interior_l1"], runtime_s=dt)


def check_8():
    r, dt = _timed(suites.bubble_suite)
    ok = r["pass"]
    return ok, report(8, "energy identity / no neck", ok, rel_residual=r["relative_residual"],
                      control_rel_err=r["control_relative_error"],
                      boundary_rel_residual=r["boundary_relative_residual"],
                      neck_identity_err=r["neck_identity_error"], runtime_s=dt)


def check_9():
    r, dt = _timed(lambda: suites.regularity_suite(n_solves=20, hs=(0.1, 0.05, 0.025), max_variation=0.1))
    ok = r["pass"]
    return ok, report(9, "epsilon-regularity", ok, solves=r["n_solves"],
                      max_rel_variation=r["max_relative_variation"], runtime_s=dt)


CHECKS = [check_1, check_2, check_3, check_4, check_5, check_6, check_7, check_8, check_9]


@pytest.mark.slow
@pytest.mark.parametrize("check", CHECKS, ids=[f"criterion_{i}" for i in range(1, 10)])
def test_acceptance(check, capsys):
    ok, line = check()
    _emit(capsys, line)
    assert ok, line


if __name__ == "__main__":
    results = []
    for c in CHECKS:
        ok, line = c()
        _emit(None, line)
        results.append(ok)
    print(f"{sum(results)}/{len(results)} criteria passed")
    sys.exit(0 if all(results) else 1)
