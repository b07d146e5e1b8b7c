"""Run every inequality and identity check at full size and print one line per suite.

    python scripts/verify_inequalities.py            # full sizes (a few minutes)
    python scripts/verify_inequalities.py --quick    # reduced sizes (seconds)
"""

import argparse
import sys

from fbminmax import suites


def suite_calls(quick: bool):
    n = (lambda full, small: small if quick else full)
    return [
        ("hardy_half_disk", lambda: suites.hardy_suite("half_disk", n_fields=n(1000, 50))),
        ("hardy_disk", lambda: suites.hardy_suite("disk", n_fields=n(1000, 50))),
        ("convexity", lambda: suites.convexity_suite(n_solves=n(100, 5), n_competitors=n(10, 3))),
        ("uniqueness", lambda: suites.uniqueness_suite(n_problems=n(5, 2))),
        ("exchange", lambda: suites.exchange_suite(n_configs=n(50, 5))),
        ("extension", lambda: suites.extension_suite(n_pairs=n(50, 10))),
        ("regularity", lambda: suites.regularity_suite(n_solves=n(20, 3))),
        ("bubbles", suites.bubble_suite),
    ]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--quick", action="store_true", help="use reduced sample sizes")
    args = ap.parse_args()
    ok_all = True
    for name, call in suite_calls(args.quick):
        r = call()
        ok_all &= r["pass"]
        extras = ", ".join(f"{k}={v:.4g}" for k, v in r.items()
                           if isinstance(v, float) and k != "runtime_s")
        print(f"{'PASS' if r['pass'] else 'FAIL'} {name:16s} ({r['runtime_s']:.1f}s) {extras}", flush=True)
    return 0 if ok_all else 1


if __name__ == "__main__":
    sys.exit(main())
