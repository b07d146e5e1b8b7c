"""Batch driver: JSON configuration, scenario execution and report emission.

Subcommands::

    fbminmax run --config cfg.json --out runs/a [--mode minmax|minimize|verify|analyze] [--seed 0]
    fbminmax summarize runs/a

Exit codes: 0 success, 1 numerical failure (or a failed suite in ``summarize``),
2 invalid configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import suites
from .analysis import (EmptyRange, ScaleBelowMesh, decompose, interior_bubble_map, neck_profile,
                       quasiconformality_monitor, write_neck_csv)
from .energy import dirichlet_energy, energy_report
from .geometry import GeometryError, ManifoldPair, ellipsoid, solid, unit_ball_pair
from .harmonic import SolverConfig, SolverError
from .mesh import DiskMap, MeshError, build_disk_mesh, build_graded_mesh, write_map
from .sweepout import (CoverFailure, MeshTangled, MinmaxConfig, TighteningConfig, ToleranceUnreachable,
                       ellipsoid_sweepout, minmax_run, save_checkpoint, single_slice_step, slice_diagnostics,
                       unit_ball_sweepout, validate_sweepout)

log = logging.getLogger("fbminmax")

MODES = ("minmax", "minimize", "verify", "analyze")
MODE_ALIASES = {"verify-inequalities": "verify"}
NUMERICAL_ERRORS = (SolverError, CoverFailure, MeshTangled, ToleranceUnreachable, GeometryError, MeshError,
                    ScaleBelowMesh, EmptyRange, FloatingPointError, np.linalg.LinAlgError)


class ConfigInvalid(ValueError):
    pass


class MissingArtifacts(FileNotFoundError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------
@dataclass
class RunConfig:
    """All knobs of a run; serialised as JSON with sorted keys."""

    mode: str = "minmax"
    seed: int = 0
    out: str = "out"
    h: float = 0.05
    pair: dict = field(default_factory=lambda: {"kind": "unit_ball"})
    sweepout: dict = field(default_factory=lambda: {"kind": "unit_ball_flat", "grid_size": 9, "gamma": 1.5})
    iters: int = 50
    solver: dict = field(default_factory=lambda: {"eps0": 0.3, "tol_grad": 1e-8, "max_iters": 500, "eta": 0.5})
    analysis: dict = field(default_factory=lambda: {"alpha": 2.0, "eps2": None, "delta": 0.1,
                                                    "eps_threshold": 1.0, "separation_threshold": 4.0,
                                                    "neck_R": 4.0})
    verify: dict = field(default_factory=lambda: {"n_hardy": 200, "n_convexity": 10, "n_competitors": 5,
                                                  "n_exchange": 10, "n_extension": 10, "n_regularity": 4,
                                                  "n_uniqueness": 2})

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigInvalid("configuration must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigInvalid(f"unknown keys: {sorted(unknown)}")
        base = cls()
        kw = {}
        for k, v in d.items():
            default = getattr(base, k)
            if isinstance(default, dict):
                if not isinstance(v, dict):
                    raise ConfigInvalid(f"{k} must be an object")
                merged = dict(default)
                merged.update(v)
                kw[k] = merged
            else:
                kw[k] = v
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"malformed JSON: {exc}") from exc
        return cls.from_dict(d)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise ConfigInvalid(msg)

        self.mode = MODE_ALIASES.get(self.mode, self.mode)
        need(self.mode in MODES, f"mode must be one of {MODES}")
        need(isinstance(self.seed, int) and self.seed >= 0, "seed must be a non-negative integer")
        need(isinstance(self.h, (int, float)) and 0.005 <= self.h <= 0.5, "h must lie in [0.005, 0.5]")
        need(isinstance(self.iters, int) and 0 <= self.iters <= 10_000, "iters must lie in [0, 10000]")
        need(self.pair.get("kind") in ("unit_ball", "ellipsoid"), "pair.kind must be unit_ball or ellipsoid")
        if self.pair["kind"] == "ellipsoid":
            ax = self.pair.get("semi_axes")
            need(isinstance(ax, list) and len(ax) == 3 and all(isinstance(a, (int, float)) and a > 0 for a in ax),
                 "pair.semi_axes must be three positive numbers")
        sw = self.sweepout
        need(sw.get("kind") in ("unit_ball_flat", "ellipsoid_flat"), "sweepout.kind must be unit_ball_flat or ellipsoid_flat")
        gs = sw.get("grid_size")
        need(isinstance(gs, int) and gs >= 3 and gs % 2 == 1, "sweepout.grid_size must be an odd integer >= 3")
        need(isinstance(sw.get("gamma", 1.0), (int, float)) and 0.5 <= sw.get("gamma", 1.0) <= 3.0,
             "sweepout.gamma must lie in [0.5, 3]")
        need(sw.get("axis", 0) in (0, 1, 2), "sweepout.axis must be 0, 1 or 2")
        if sw["kind"] == "ellipsoid_flat":
            need(self.pair["kind"] == "ellipsoid", "ellipsoid_flat sweepouts need an ellipsoid pair")
        s = self.solver
        need(isinstance(s.get("eps0"), (int, float)) and 0 < s["eps0"] <= 10, "solver.eps0 must lie in (0, 10]")
        need(isinstance(s.get("tol_grad"), (int, float)) and 0 < s["tol_grad"] < 1, "solver.tol_grad must lie in (0, 1)")
        need(isinstance(s.get("max_iters"), int) and s["max_iters"] > 0, "solver.max_iters must be positive")
        need(isinstance(s.get("eta"), (int, float)) and 0 < s["eta"] < 1, "solver.eta must lie in (0, 1)")
        a = self.analysis
        need(isinstance(a.get("alpha"), (int, float)) and a["alpha"] > 1, "analysis.alpha must exceed 1")
        need(a.get("eps2") is None or (isinstance(a["eps2"], (int, float)) and a["eps2"] > 0),
             "analysis.eps2 must be positive or null")
        need(isinstance(a.get("delta"), (int, float)) and 0 < a["delta"] < 1, "analysis.delta must lie in (0, 1)")
        need(isinstance(a.get("neck_R"), (int, float)) and a["neck_R"] > 1, "analysis.neck_R must exceed 1")
        for k, v in self.verify.items():
            need(isinstance(v, int) and v >= 1, f"verify.{k} must be a positive integer")

    def solver_config(self) -> SolverConfig:
        s = self.solver
        return SolverConfig(eps0=float(s["eps0"]), tol_grad=float(s["tol_grad"]), max_iters=int(s["max_iters"]),
                            eta=float(s["eta"]))

    def manifold_pair(self) -> ManifoldPair:
        if self.pair["kind"] == "unit_ball":
            return unit_ball_pair(3)
        ax = np.asarray(self.pair["semi_axes"], dtype=float)
        E = ellipsoid(ax)
        k = int(self.sweepout.get("axis", 0))
        m0 = np.zeros(3)
        m0[k] = ax[k]
        return ManifoldPair(solid(E), E, m0)


def load_config(path: Optional[str]) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config: {exc}") from exc
    return RunConfig.from_json(text)


# ---------------------------------------------------------------------------
# report helpers
# ---------------------------------------------------------------------------
def _clean(x):
    """JSON-safe copy: arrays to lists, non-finite floats to strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    return x


def _strip_runtime(d):
    if isinstance(d, dict):
        return {k: _strip_runtime(v) for k, v in d.items() if k != "runtime_s"}
    if isinstance(d, list):
        return [_strip_runtime(v) for v in d]
    return d


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, rows: list[dict]) -> None:
    if not rows:
        path.write_text("")
        return
    cols = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in r.items()})


# ---------------------------------------------------------------------------
# modes
# ---------------------------------------------------------------------------
def _build_sweepout(cfg: RunConfig):
    mesh = build_disk_mesh(cfg.h)
    pair = cfg.manifold_pair()
    sw = cfg.sweepout
    if sw["kind"] == "unit_ball_flat":
        return unit_ball_sweepout(mesh, sw["grid_size"], float(sw.get("gamma", 1.0)), pair)
    return ellipsoid_sweepout(mesh, cfg.pair["semi_axes"], int(sw.get("axis", 0)), sw["grid_size"], pair)


def _run_minmax(cfg: RunConfig, out: Path) -> dict:
    s = _build_sweepout(cfg)
    val = validate_sweepout(s)
    solver = cfg.solver_config()
    mm = MinmaxConfig(iters=cfg.iters, tightening=TighteningConfig(eps0=solver.eps0, seed=cfg.seed), solver=solver)
    res = minmax_run(s, cfg.iters, mm)
    final = res.sequence[-1]
    rows = [{"iteration": i, "max_energy": e, "max_area": a, "argmax": float(np.asarray(t).ravel()[0]),
             "accepted": (True if i == 0 else bool(res.accepted[i - 1]))}
            for i, (e, a, t) in enumerate(zip(res.max_energy_series, res.max_area_series, res.argmax_series))]
    write_csv(out / "iterations.csv", rows)
    save_checkpoint(res.sweepout, out / "checkpoint.npz")
    write_map(final, out / "final_slice.off")
    an = cfg.analysis
    eps2 = an["eps2"] if an["eps2"] is not None else solver.eps0 / 2
    dec = decompose(final, eps_threshold=an["eps_threshold"], separation_threshold=an["separation_threshold"])
    dec.to_json(out / "bubbles.json")
    # neck annuli around the strongest concentration, or around the centre at mesh scale
    if dec.bubbles:
        b = max(dec.bubbles, key=lambda b: b.energy)
        center, lam = b.center, b.scale
    else:
        center, lam = np.zeros(2), 2 * cfg.h
    try:
        prof = neck_profile(final, center, lam, an["neck_R"], an["alpha"])
        write_neck_csv(prof, out / "annuli.csv")
    except EmptyRange as exc:
        log.info("no neck annuli: %s", exc)
        prof = None
    diag = slice_diagnostics(final)
    rel = abs(res.width - np.pi) / np.pi
    mono = bool(np.all(np.diff(res.max_energy_series) <= 0))
    suites_out = {"monotone_max_energy": {"pass": mono}, "initial_sweepout_valid": {"pass": val["valid"]}}
    if prof is not None:
        suites_out["neck_energy"] = {"pass": bool(prof.neck_energy < eps2), "neck_energy": prof.neck_energy,
                                     "eps2": eps2}
    if cfg.pair["kind"] == "unit_ball":
        suites_out["unit_ball_width"] = {"pass": bool(rel < 0.05 and mono and diag["defect"] < 0.02 * np.pi
                                                      and diag["hopf_interior_l1"] < 0.05),
                                         "width": res.width, "relative_error": rel}
    return {"minmax": res.summary(), "energy": energy_report(final), "final_slice": diag,
            "quasiconformality": quasiconformality_monitor(res.sequence).tolist(),
            "bubbles": dec.to_dict(), "neck": prof.as_dict() if prof is not None else None,
            "tightening_reports": _strip_runtime(res.reports), "suites": suites_out}


def _run_minimize(cfg: RunConfig, out: Path) -> dict:
    """Single-slice mode: clamped boundary, iterated greedy replacement."""
    mesh = build_disk_mesh(cfg.h)
    pair = cfg.manifold_pair()
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    r2 = x * x + y * y
    z = 0.3 * np.sin(3 * x) * np.cos(2 * y) * (1 - r2)
    vals = np.stack([0.7 * x, 0.7 * y, z], axis=1)
    u = DiskMap(mesh, pair.N.project(vals, check=False), pair, np.zeros(mesh.n_vertices, dtype=bool))
    solver = cfg.solver_config()
    tcfg = TighteningConfig(eps0=solver.eps0, seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    rows, half_ok = [], True
    E = dirichlet_energy(u)
    rows.append({"iteration": 0, "energy": E, "drop": 0.0, "best_random_drop": 0.0})
    for it in range(1, cfg.iters + 1):
        st = single_slice_step(u, tcfg, solver, rng)
        u = st["map"]
        half_ok &= st["drop"] >= 0.5 * st["best_random_drop"] - 1e-12
        rows.append({"iteration": it, "energy": dirichlet_energy(u), "drop": st["drop"],
                     "best_random_drop": st["best_random_drop"]})
        if st["drop"] <= 1e-12 and st["best_random_drop"] <= 1e-12:
            break
    write_csv(out / "solves.csv", rows)
    write_map(u, out / "final_map.off")
    mono = bool(np.all(np.diff([r["energy"] for r in rows]) <= 1e-12))
    return {"energy": energy_report(u), "iterations": len(rows) - 1,
            "suites": {"monotone_energy": {"pass": mono}, "half_best_drop": {"pass": bool(half_ok)}}}


def _run_verify(cfg: RunConfig, out: Path) -> dict:
    v = cfg.verify
    seed = cfg.seed
    solver = cfg.solver_config()
    res = {
        "hardy_half_disk": suites.hardy_suite("half_disk", v["n_hardy"], seed=seed),
        "hardy_disk": suites.hardy_suite("disk", v["n_hardy"], seed=seed),
        "convexity": suites.convexity_suite(v["n_convexity"], v["n_competitors"], seed=seed, n_flat=2, config=solver),
        "uniqueness": suites.uniqueness_suite(v["n_uniqueness"], seed=seed, config=solver),
        "exchange": suites.exchange_suite(v["n_exchange"], seed=seed, config=solver),
        "extension": suites.extension_suite(v["n_extension"], seed=seed),
        "regularity": suites.regularity_suite(v["n_regularity"], seed=seed, config=solver),
    }
    rows = []
    for name, r in res.items():
        rows.append({"suite": name, "pass": r["pass"]})
    write_csv(out / "suites.csv", rows)
    return {"suites": _strip_runtime(res)}


def _run_analyze(cfg: RunConfig, out: Path) -> dict:
    r = suites.bubble_suite()
    dec = r.pop("decomposition")
    (out / "bubbles.json").write_text(json.dumps(_clean(dec), indent=2, sort_keys=True) + "\n")
    c = np.array([0.2, -0.1])
    u = interior_bubble_map(build_graded_mesh(cfg.h, [c], 0.001), c, 0.01)
    prof = neck_profile(u, c, 0.01, 2.0, cfg.analysis["alpha"])
    write_neck_csv(prof, out / "annuli.csv")
    return {"energy": energy_report(u), "neck": prof.as_dict(), "suites": {"energy_identity": _strip_runtime(r)}}


RUNNERS = {"minmax": _run_minmax, "minimize": _run_minimize, "verify": _run_verify, "analyze": _run_analyze}


def run(cfg: RunConfig) -> tuple[int, Path]:
    """Execute ``cfg.mode``; returns ``(exit status, artifact directory)``."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.to_json())
    np.random.seed(cfg.seed)
    try:
        body = RUNNERS[cfg.mode](cfg, out)
        status = 0
    except NUMERICAL_ERRORS as exc:
        log.error("numerical failure: %s: %s", type(exc).__name__, exc)
        body = {"error": {"type": type(exc).__name__, "message": str(exc)}, "suites": {}}
        status = 1
    report = {"mode": cfg.mode, "seed": cfg.seed, "status": status, **body}
    write_json(out / "report.json", report)
    return status, out


def summarize(out_dir) -> tuple[bool, str]:
    """Digest of ``report.json``: one PASS/FAIL line per suite and an overall flag.

    Raises
    ------
    MissingArtifacts
        If the directory lacks ``report.json``.
    """
    p = Path(out_dir) / "report.json"
    if not p.is_file():
        raise MissingArtifacts(f"no report.json in {out_dir}")
    rep = json.loads(p.read_text())
    lines = [f"mode: {rep.get('mode')}  status: {rep.get('status')}"]
    ok = rep.get("status", 1) == 0
    if "error" in rep:
        lines.append(f"error: {rep['error']['type']}: {rep['error']['message']}")
    for name, s in sorted(rep.get("suites", {}).items()):
        passed = bool(s.get("pass"))
        ok &= passed
        extras = ", ".join(f"{k}={v:.4g}" for k, v in sorted(s.items())
                           if isinstance(v, (int, float)) and not isinstance(v, bool))
        lines.append(f"{'PASS' if passed else 'FAIL'} {name}" + (f"  ({extras})" if extras else ""))
    lines.append(f"overall: {'PASS' if ok else 'FAIL'}")
    return ok, "\n".join(lines)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fbminmax", description="Free-boundary min-max experiments on disk maps.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="execute a configured scenario")
    r.add_argument("--config", help="JSON configuration file (defaults if omitted)")
    r.add_argument("--out", help="artifact directory (overrides config)")
    r.add_argument("--seed", type=int, help="random seed (overrides config)")
    r.add_argument("--mode", help="minmax | minimize | verify (verify-inequalities) | analyze")
    r.add_argument("--iters", type=int, help="iteration count (overrides config)")
    r.add_argument("--grid-size", type=int, help="parameter grid size (overrides config)")
    r.add_argument("--eps0", type=float, help="small-energy threshold (overrides config)")
    r.add_argument("-v", "--verbose", action="store_true")
    s = sub.add_parser("summarize", help="print a digest of a run directory")
    s.add_argument("out_dir")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "summarize":
        try:
            ok, text = summarize(args.out_dir)
        except MissingArtifacts as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        print(text)
        print(json.dumps({"pass": ok}))
        return 0 if ok else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        d = json.loads(cfg.to_json())
        if args.out is not None:
            d["out"] = args.out
        if args.seed is not None:
            d["seed"] = args.seed
        if args.mode is not None:
            d["mode"] = args.mode
        if args.iters is not None:
            d["iters"] = args.iters
        if args.grid_size is not None:
            d["sweepout"]["grid_size"] = args.grid_size
        if args.eps0 is not None:
            d["solver"]["eps0"] = args.eps0
        cfg = RunConfig.from_dict(d)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    status, out = run(cfg)
    print(f"wrote {out / 'report.json'} (status {status})")
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
