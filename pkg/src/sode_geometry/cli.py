"""Command-line front end: ``sode-geometry inspect|verify|reduce|roots FILE``.

Exit codes: 0 success, 1 verification failure, 2 invalid input or usage,
3 domain error at a file point, 4 singular reduced system.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from . import jets as J
from .checks import constrained_suite, merge_max, unconstrained_suite
from .constrained import (
    ConstrainedFrame,
    constrained_components,
    constrained_torsion_table,
    shape_constrained,
)
from .jets import DomainError
from .nonholonomic import SingularSystemError, reduce
from .sysfile import LoadedSystem, SystemFileError, load_system, sample_points
from .unconstrained import mp_components, mp_shape, mp_torsion_table, shape_eigen

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_DOMAIN, EXIT_SINGULAR = 0, 1, 2, 3, 4
TENSORS = ("phi", "K", "curvature", "torsion", "connection", "shape")
THREADS_ENV = "SODE_GEOMETRY_THREADS"


@dataclass(frozen=True)
class RunConfig:
    """Options of one CLI run; field names mirror the command-line flags."""

    command: str
    file: str
    npoints: int = 50
    seed: int | None = None
    out: str | None = None
    csv: str | None = None
    perturb: float = 0.0
    timing: bool = False
    tensors: str | None = None
    order: int = 2
    tol: float = 1e-8
    samples: int = 1
    emit: str | None = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise SystemFileError(f"unknown command {self.command!r}")
        if self.npoints < 0:
            raise SystemFileError("--npoints must be non-negative")
        if self.samples < 1:
            raise SystemFileError("--samples must be at least 1")
        if self.order not in (2, 3):
            raise SystemFileError("--order must be 2 or 3")


class PointError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# -- helpers -----------------------------------------------------------------

def _arr(x) -> Any:
    v = np.asarray(x.value if isinstance(x, J.Jet) else x, dtype=float)
    v = np.where(v == 0.0, 0.0, v)  # no negative zeros in reports
    return v.tolist()


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise SystemFileError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None


def _parallel_map(fn: Callable, items: Sequence) -> list:
    workers = min(_threads(), max(1, len(items)))
    if workers == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _describe(loaded: LoadedSystem, idx: int, point) -> str:
    coords = ", ".join(f"{n}={v:.6g}" for n, v in zip(loaded.names, point))
    return f"point {idx} ({coords})"


def _guard(loaded: LoadedSystem, idx: int, point, fn: Callable):
    try:
        return fn()
    except DomainError as exc:
        raise PointError(f"{_describe(loaded, idx, point)}: {exc}", EXIT_DOMAIN) from None
    except SingularSystemError as exc:
        raise PointError(f"{_describe(loaded, idx, point)}: {exc}", EXIT_SINGULAR) from None


def _frame_labels(loaded: LoadedSystem) -> list[str]:
    s = loaded.system
    if loaded.kind == "sode":
        return ["Gamma", *(f"V_{c}" for c in s.coords), *(f"H_{c}" for c in s.coords)]
    return ["Gamma", *(f"d_{c}" for c in s.constrained), *(f"H_{c}" for c in s.free), *(f"V_{c}" for c in s.free)]


def _points(loaded: LoadedSystem, args: RunConfig, random_count: int) -> list[tuple[str, np.ndarray]]:
    seed = args.seed if args.seed is not None else loaded.seed
    rng = np.random.default_rng(seed)
    pts = [("file", p) for p in loaded.points]
    if random_count:
        pts += [("random", p) for p in sample_points(loaded, random_count, rng)]
    return pts


def _point_rng(seed: int, idx: int) -> np.random.Generator:
    return np.random.default_rng([seed, idx])


# -- per-point evaluators ----------------------------------------------------

def _inspect_point(loaded: LoadedSystem, point, order: int, tensors: set[str], perturb: float) -> dict:
    fr = loaded.frame(point, order, perturb)
    vals: dict[str, Any] = {}
    res = {"duality": float(np.max(np.abs(np.asarray(fr.coframe.value) @ np.asarray(fr.frame.value).T - np.eye(fr.dim))))}
    if loaded.kind == "sode":
        n = fr.n
        vals["F"] = _arr(fr.F)
        vals["Gamma"] = _arr(fr.G)
        if "phi" in tensors:
            vals["phi"] = _arr(fr.Phi)
        if "curvature" in tensors:
            vals["R"] = _arr(fr.R)
        if "connection" in tensors:
            vals["connection"] = _arr(mp_components(fr))
        if "torsion" in tensors:
            vals["torsion"] = _arr(mp_torsion_table(fr))
        if "shape" in tensors:
            pairs, cl = shape_eigen(fr)
            vals["shape"] = {
                "A": _arr(mp_shape(fr)),
                "eigen": [{"mu": float(p.mu), "vector": _arr(p.vector)} for p in pairs],
                "complex_phi_eigenvalues": [[c.real, c.imag] for c in cl],
            }
        return {"values": vals, "residuals": res}

    vals["F"] = _arr(fr.F)
    vals["Psi"] = _arr(fr.Psi)
    vals["Gamma"] = _arr(fr.G)
    vals["Upsilon"] = _arr(fr.Upsilon)
    if "phi" in tensors:
        vals["phi"] = _arr(fr.Phi)
    if "K" in tensors:
        vals["K"] = _arr(fr.K)
    if "curvature" in tensors:
        vals["Rhat"] = _arr(fr.Rhat)
        vals["Rcheck"] = _arr(fr.Rcheck)
    if "connection" in tensors:
        vals["connection"] = _arr(constrained_components(fr))
    if "torsion" in tensors:
        vals["torsion"] = _arr(constrained_torsion_table(fr))
    if "shape" in tensors:
        vals["shape"] = _shape_report(fr)
    return {"values": vals, "residuals": res}


def _shape_report(fr: ConstrainedFrame) -> dict:
    sh = shape_constrained(fr)
    return {
        "A": _arr(sh["A"]),
        "lambda_coefficients": _arr(sh["coeffs"]),
        "roots": [{"mu": float(r), "multiplicity": int(k)} for r, k in sh["roots"]],
        "nonzero_real_roots": [float(r) for r, _ in sh["roots"] if r != 0.0],
        "eigen": [
            {"mu": e["mu"], "multiplicity": e["multiplicity"], "dimension": len(e["vectors"]),
             "vectors": _arr(np.asarray(e["vectors"]))}
            for e in sh["eigen"]
        ],
        "decoupling": [
            {k: (bool(v) if isinstance(v, (bool, np.bool_)) else v) for k, v in d.items()} for d in sh["decoupling"]
        ],
    }


def _reduce_point(loaded: LoadedSystem, point) -> dict:
    prob = loaded.system
    r = reduce(prob, point)
    dyn = loaded.evaluator.dynamics(J.seeds(point, 0))
    scale = 1.0 + float(np.max(np.abs(r.F), initial=0.0))
    res = {
        "linear_part": r.linear_part_residual,
        "multiplier": r.multiplier_residual,
        "jet_route_F": float(np.max(np.abs(np.asarray(dyn["F"].value) - r.F), initial=0.0)) / scale,
        "jet_route_lambda": float(np.max(np.abs(np.asarray(dyn["lambda"].value) - r.lam), initial=0.0))
        / (1.0 + float(np.max(np.abs(r.lam), initial=0.0))),
    }
    if loaded.closed_form_F is not None:
        Fc, _ = loaded.closed_form_F.evaluate(J.seeds(point, 0))
        res["closed_form_F"] = float(np.max(np.abs(np.asarray(Fc.value) - r.F))) / scale
    return {"values": r.as_dict(), "residuals": res}


def _verify_point(loaded: LoadedSystem, point, rng, perturb: float, samples: int) -> dict:
    fr = loaded.frame(point, 3, perturb)
    if loaded.kind == "sode":
        res = unconstrained_suite(fr, rng, samples)
    else:
        res = constrained_suite(fr, rng, samples)
    if loaded.kind == "nonholonomic":
        res.update({f"reduce_{k}": v for k, v in _reduce_point(loaded, point)["residuals"].items()})
    return {"values": {}, "residuals": res}


def _roots_point(loaded: LoadedSystem, point, perturb: float) -> dict:
    fr = ConstrainedFrame(loaded.as_constrained(), point, 2, perturb)
    sh = _shape_report(fr)
    sh.pop("A")
    return {"values": sh, "residuals": {}}


# -- commands ----------------------------------------------------------------

def _run(loaded: LoadedSystem, args: RunConfig, random_count: int, evaluate: Callable) -> dict:
    pts = _points(loaded, args, random_count)
    t0 = time.perf_counter()

    def one(item):
        idx, (source, p) = item
        t = time.perf_counter()
        out = _guard(loaded, idx, p, lambda: evaluate(idx, p))
        out["elapsed"] = time.perf_counter() - t
        out.update(index=idx, source=source, point=_arr(p))
        return out

    results = _parallel_map(one, list(enumerate(pts)))
    total = time.perf_counter() - t0
    elapsed = [r.pop("elapsed") for r in results]
    report = {
        "command": args.command,
        "kind": loaded.kind,
        "system": loaded.name,
        "names": loaded.names,
        "frame": _frame_labels(loaded),
        "version": __version__,
        "points": results,
        "residuals": merge_max(r["residuals"] for r in results),
    }
    if args.timing:
        report["timing"] = {"total_seconds": total, "max_point_seconds": max(elapsed, default=0.0)}
    return report


def cmd_inspect(loaded: LoadedSystem, args: RunConfig) -> tuple[dict, int]:
    tensors = set(TENSORS) if args.tensors is None else {t.strip() for t in args.tensors.split(",") if t.strip()}
    unknown = tensors - set(TENSORS)
    if unknown:
        raise SystemFileError(f"unknown tensors {sorted(unknown)}; choose from {list(TENSORS)}", "--tensors")
    random_count = 0 if loaded.points else args.npoints
    rep = _run(loaded, args, random_count, lambda i, p: _inspect_point(loaded, p, args.order, tensors, args.perturb))
    rep["tensors"] = sorted(tensors)
    return rep, EXIT_OK


def cmd_verify(loaded: LoadedSystem, args: RunConfig) -> tuple[dict, int]:
    seed = args.seed if args.seed is not None else loaded.seed
    rep = _run(
        loaded, args, args.npoints,
        lambda i, p: _verify_point(loaded, p, _point_rng(seed, i), args.perturb, args.samples),
    )
    bad = sorted(k for k, v in rep["residuals"].items() if not v <= args.tol)
    rep.update(tolerance=args.tol, passed=not bad, failures=bad)
    return rep, EXIT_OK if not bad else EXIT_FAIL


def cmd_reduce(loaded: LoadedSystem, args: RunConfig) -> tuple[dict, int]:
    if loaded.kind != "nonholonomic":
        raise SystemFileError("reduce needs a file of kind 'nonholonomic'", "kind")
    random_count = 0 if loaded.points else args.npoints
    rep = _run(loaded, args, random_count, lambda i, p: _reduce_point(loaded, p))
    if args.emit:
        if loaded.closed_form_F is None:
            rep["emitted"] = None
            rep["note"] = "accelerations are numeric only; add closed-form F to the file to emit a constrained system"
        else:
            doc = {k: v for k, v in loaded.doc.items() if k != "L"}
            doc["kind"] = "constrained"
            Path(args.emit).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
            rep["emitted"] = str(args.emit)
    return rep, EXIT_OK


def cmd_roots(loaded: LoadedSystem, args: RunConfig) -> tuple[dict, int]:
    random_count = 0 if loaded.points else args.npoints
    rep = _run(loaded, args, random_count, lambda i, p: _roots_point(loaded, p, args.perturb))
    return rep, EXIT_OK


COMMANDS = {"inspect": cmd_inspect, "verify": cmd_verify, "reduce": cmd_reduce, "roots": cmd_roots}


# -- output ------------------------------------------------------------------

def dumps(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _flatten(prefix: str, obj, rows: list) -> None:
    if isinstance(obj, dict):
        for k in sorted(obj):
            _flatten(f"{prefix}.{k}" if prefix else k, obj[k], rows)
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            _flatten(f"{prefix}[{i}]", v, rows)
    elif isinstance(obj, (int, float)) and not isinstance(obj, bool):
        rows.append((prefix, obj))


def write_csv(report: dict, outdir: str | Path) -> None:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "residuals.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "max_residual"])
        for k in sorted(report["residuals"]):
            w.writerow([k, repr(report["residuals"][k])])
    with open(outdir / "points.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "source", *report["names"]])
        for p in report["points"]:
            w.writerow([p["index"], p["source"], *(repr(v) for v in p["point"])])
    with open(outdir / "values.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "quantity", "value"])
        for p in report["points"]:
            rows: list = []
            _flatten("", p["values"], rows)
            _flatten("residuals", p["residuals"], rows)
            for name, v in rows:
                w.writerow([p["index"], name, repr(v)])


# -- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sode-geometry", description="Geometry of second-order systems with constraints.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("inspect", "evaluate frame tensors at the file's points"),
        ("verify", "run the invariant suites at random points"),
        ("reduce", "reduce a nonholonomic Lagrangian system"),
        ("roots", "eigencondition polynomial of the shape map and its real roots"),
    ]:
        p = sub.add_parser(name, help=help_)
        p.add_argument("file", help="system definition (JSON)")
        p.add_argument("--npoints", type=int, default=50, help="random points (verify; others when the file has none)")
        p.add_argument("--seed", type=int, default=None, help="overrides the file's seed")
        p.add_argument("--out", default=None, help="write the JSON report here instead of stdout")
        p.add_argument("--csv", default=None, metavar="DIR", help="also export tables as CSV files")
        p.add_argument("--perturb", type=float, default=0.0, help="add eps*I to the connection coefficients (testing)")
        p.add_argument("--timing", action="store_true", help="include wall-clock timing (makes output nondeterministic)")
        if name == "inspect":
            p.add_argument("--tensors", default=None, help=f"comma list from {','.join(TENSORS)}")
            p.add_argument("--order", type=int, choices=(2, 3), default=2)
        if name == "verify":
            p.add_argument("--tol", type=float, default=1e-8)
            p.add_argument("--samples", type=int, default=1, help="random field pairs per point")
        if name == "reduce":
            p.add_argument("--emit", default=None, metavar="FILE", help="write an equivalent constrained system file")
    return ap


def run(cfg: RunConfig) -> tuple[dict, int]:
    """Load ``cfg.file``, execute the command and return ``(report, exit code)``.

    Raises SystemFileError, PointError, DomainError or SingularSystemError.
    """
    loaded = load_system(cfg.file)
    return COMMANDS[cfg.command](loaded, cfg)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig(**vars(args))
        report, code = run(cfg)
        text = dumps(report)
        if cfg.csv:
            write_csv(report, cfg.csv)
    except SystemFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except PointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (DomainError, SingularSystemError) as exc:
        # raised while sampling random points
        print(f"error: no usable random point after repeated resampling: {exc}", file=sys.stderr)
        return EXIT_DOMAIN if isinstance(exc, DomainError) else EXIT_SINGULAR
    if cfg.out:
        Path(cfg.out).write_text(text)
    else:
        sys.stdout.write(text)
    if cfg.command == "verify":
        status = "PASS" if report["passed"] else "FAIL"
        worst = max(report["residuals"].values(), default=0.0)
        print(f"{status}: max residual {worst:.3e} (tol {cfg.tol:g}) over {len(report['points'])} points",
              file=sys.stderr)
        for name in report["failures"]:
            print(f"  {name}: {report['residuals'][name]:.3e}", file=sys.stderr)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
