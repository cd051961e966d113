"""
Command line entry point: ``tpflow run|verify|sweep``.

Exit codes: 0 converged (or all checks passed), 1 verify failure or
unexpected error, 2 configuration error, 3 stagnation, 4 self-intersection or
degenerate curve, 5 linear-algebra failure, 6 max_steps reached without
convergence.
"""

import argparse
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import curve as cv
from .checks import verify_suite
from .energy import EnergyParams, circle_energy_reference
from .errors import (ConfigurationError, DegenerateCurveError, DimensionError, InsufficientSignalError,
                     LinearAlgebraError, ParameterError, SelfIntersectionError, StagnationError,
                     TPFlowError)
from .flow import FlowConfig, h_function, ls_fit, run_flow
from .io import load_curve_csv, render_svg, save_curve_csv

log = logging.getLogger("tpflow")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_STAGNATION = 3
EXIT_INTERSECTION = 4
EXIT_LINALG = 5
EXIT_MAX_STEPS = 6

THREADS_ENV = "TPFLOW_NUM_THREADS"
INITIAL_KINDS = ("circle", "ellipse", "torus_knot", "perturbed_circle", "file")
N_RANGE = (32, 1024)


@dataclass
class OutputConfig:
    directory: Path
    snapshot_stride: int = 10
    render: bool = True


@dataclass
class ExperimentConfig:
    s: float
    ambient_dim: int
    n_nodes: int
    initial: dict
    flow: dict = field(default_factory=dict)
    outputs: OutputConfig = None
    source: Path = None

    @property
    def params(self):
        return EnergyParams(self.s)

    def flow_config(self):
        known = {f.name for f in fields(FlowConfig)}
        unknown = set(self.flow) - known
        if unknown:
            raise ConfigurationError(f"unknown flow fields: {sorted(unknown)}")
        try:
            return FlowConfig(**self.flow)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc

    def as_dict(self):
        d = asdict(self)
        d["outputs"] = {"directory": str(self.outputs.directory), "snapshot_stride": self.outputs.snapshot_stride,
                        "render": self.outputs.render}
        d.pop("source")
        return d


def _require(cond, msg):
    if not cond:
        raise ConfigurationError(msg)


def parse_config(raw, base_dir=Path(".")):
    """Validate a config mapping; relative paths resolve against ``base_dir``."""
    _require(isinstance(raw, dict), "config must be a JSON object")
    if "s" in raw and "p" in raw:
        raise ConfigurationError("give either s or p, not both")
    if "s" in raw:
        s = float(raw["s"])
    elif "p" in raw:
        s = (float(raw["p"]) - 1.0) / 2.0
    else:
        s = 1.75
    _require(1.5 < s < 2.0, f"s = {s:g} outside the admissible range (3/2, 2); equivalently p in (4, 5)")
    n = int(raw.get("ambient_dim", 2))
    _require(n >= 2, "ambient_dim must be at least 2")
    N = int(raw.get("n_nodes", 256))
    _require(N_RANGE[0] <= N <= N_RANGE[1] and N & (N - 1) == 0,
             f"n_nodes = {N} must be a power of two in [{N_RANGE[0]}, {N_RANGE[1]}]")
    init = dict(raw.get("initial", {"kind": "circle"}))
    kind = init.get("kind")
    _require(kind in INITIAL_KINDS, f"initial.kind must be one of {INITIAL_KINDS}, got {kind!r}")
    if kind == "file":
        _require("path" in init, "initial.path is required for kind 'file'")
        path = Path(init["path"])
        if not path.is_absolute():
            path = base_dir / path
        _require(path.is_file(), f"initial curve file not found: {path}")
        init["path"] = str(path)
    if kind == "torus_knot":
        _require(n >= 3, "torus_knot needs ambient_dim >= 3")
    out = dict(raw.get("outputs", {}))
    directory = Path(out.get("directory", "tpflow_out"))
    if not directory.is_absolute():
        directory = base_dir / directory
    stride = int(out.get("snapshot_stride", 10))
    _require(stride >= 0, "outputs.snapshot_stride must be >= 0 (0 disables snapshots)")
    flow = dict(raw.get("flow", {}))
    _require(isinstance(flow, dict), "flow must be an object")
    cfg = ExperimentConfig(s, n, N, init, flow, OutputConfig(directory, stride, bool(out.get("render", True))))
    cfg.flow_config()
    return cfg


def load_config(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from exc
    cfg = parse_config(raw, path.parent)
    cfg.source = path
    return cfg


def build_initial(cfg):
    init = cfg.initial
    N, n = cfg.n_nodes, cfg.ambient_dim
    kind = init["kind"]
    try:
        if kind == "circle":
            return cv.circle(N, ambient_dim=n)
        if kind == "ellipse":
            return cv.ellipse(N, ratio=float(init.get("ratio", 2.0)), ambient_dim=n)
        if kind == "torus_knot":
            return cv.torus_knot(N, int(init.get("p", 2)), int(init.get("q", 3)), float(init.get("aspect", 0.4)),
                                 ambient_dim=n)
        if kind == "perturbed_circle":
            return cv.perturbed_circle(N, tuple(init.get("modes", (2, 3, 4, 5))), float(init.get("amplitude", 0.03)),
                                       int(init.get("seed", 0)), ambient_dim=n)
        return load_curve_csv(init["path"], expected_nodes=N, expected_dim=n)
    except (DimensionError, ParameterError) as exc:
        raise ConfigurationError(str(exc)) from exc


def limit_threads():
    """Honour TPFLOW_NUM_THREADS for the BLAS/OpenMP pools."""
    val = os.environ.get(THREADS_ENV)
    if not val:
        return None
    try:
        k = int(val)
    except ValueError as exc:
        raise ConfigurationError(f"{THREADS_ENV} must be an integer, got {val!r}") from exc
    return threadpool_limits(limits=max(k, 1))


def _finite(x):
    x = float(x)
    return x if math.isfinite(x) else None


def execute(cfg, render=None, snapshot_stride=None):
    """Run one experiment and write its artifacts; returns (exit code, report)."""
    render = cfg.outputs.render if render is None else render
    stride = cfg.outputs.snapshot_stride if snapshot_stride is None else snapshot_stride
    out = cfg.outputs.directory
    snaps = out / "snapshots"
    snaps.mkdir(parents=True, exist_ok=True)
    params = cfg.params
    fc = cfg.flow_config()

    def snapshot(curve, step):
        name = f"step_{step:06d}"
        save_curve_csv(curve, snaps / f"{name}.csv")
        if render:
            render_svg(curve, snaps / f"{name}.svg", title=f"step {step}")

    def callback(state, trace):
        if stride and state.step % stride == 0:
            snapshot(state.curve, state.step)

    initial = cv.retract_to_arclength(build_initial(cfg))
    snapshot(initial, 0)
    t0 = time.perf_counter()
    res = run_flow(initial, params, fc, callback=callback)
    log.info("flow wall time %.1f s", time.perf_counter() - t0)
    if not stride or res.state.step % stride:
        snapshot(res.curve, res.state.step)
    res.trace.to_csv(out / "trace.csv")

    fit = {"theta": None, "Z": None, "r2": None, "rows": 0, "h_monotone": None, "error": None}
    try:
        f = ls_fit(res.trace)
        H = h_function(res.trace, f.theta, f.E_inf)
        fit.update(theta=f.theta, Z=f.Z, r2=f.r2, rows=f.n_rows, E_inf=f.E_inf,
                   h_monotone=bool(np.all(np.diff(H) <= 0)))
    except InsufficientSignalError as exc:
        fit["error"] = str(exc)
    last = res.trace.rows[-1]
    cols = dict(zip(("t", "energy", "grad_norm_Hs", "distortion", "min_separation", "step_dt", "length_residual"),
                    last))
    ref = circle_energy_reference(params.p)
    E = res.state.energy
    min_sep = np.nanmin(res.trace.column("min_separation"))
    report = {
        "params": {"s": params.s, "p": params.p, "q": params.q, "n_nodes": cfg.n_nodes,
                   "ambient_dim": cfg.ambient_dim},
        "config": cfg.as_dict(),
        "termination": res.reason,
        "steps": res.state.step,
        "t": res.state.t,
        "energy": E,
        "energy_direct": res.direct_energy,
        "circle_energy": ref,
        "energy_rel_to_circle": (E - ref) / ref,
        "grad_norm": res.state.grad_norm,
        "distortion": _finite(cols["distortion"]),
        "distortion_minus_half_pi": _finite(cols["distortion"] - math.pi / 2),
        "min_separation": _finite(min_sep),
        "length_residual": _finite(cols["length_residual"]),
        "path_length": res.state.path_length,
        "lambda": _finite(res.lagrange_multiplier),
        "lambda_residual": _finite(res.lambda_residual),
        "lambda_identity_residual": _finite(res.lagrange_multiplier - (params.p - 4) * E),
        "retraction_increases": len(res.trace.retraction_increases),
        "fit": fit,
        "final_curve_hash": res.curve.digest(),
    }
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    code = {"grad_tol": EXIT_OK, "stagnation": EXIT_STAGNATION, "max_steps": EXIT_MAX_STEPS}[res.reason]
    return code, report


def _diagnose(exc):
    if isinstance(exc, ConfigurationError):
        return EXIT_CONFIG, f"configuration error: {exc}"
    if isinstance(exc, StagnationError):
        return EXIT_STAGNATION, f"stagnation: {exc}"
    if isinstance(exc, (SelfIntersectionError, DegenerateCurveError)):
        return EXIT_INTERSECTION, f"self-intersection: {exc}"
    if isinstance(exc, LinearAlgebraError):
        return EXIT_LINALG, f"linear algebra failure: {exc}"
    if isinstance(exc, (ParameterError, DimensionError)):
        return EXIT_CONFIG, f"configuration error: {exc}"
    return EXIT_FAILED, f"error: {exc}"


def cmd_run(config_path, snapshot_stride=None, no_render=False, output=None):
    try:
        limits = limit_threads()
        cfg = load_config(config_path)
        if output is not None:
            cfg.outputs.directory = Path(output)
        code, report = execute(cfg, render=False if no_render else None, snapshot_stride=snapshot_stride)
        if limits is not None:
            limits.restore_original_limits()
    except TPFlowError as exc:
        code, msg = _diagnose(exc)
        print(msg, file=sys.stderr)
        return code
    msg = (f"{report['termination']}: steps={report['steps']} energy={report['energy']:.12g} "
           f"|g|={report['grad_norm']:.3e} distortion={report['distortion']}")
    print(msg, file=sys.stderr if code else sys.stdout)
    return code


def cmd_verify(config_path, quad_factor=None):
    try:
        limits = limit_threads()
        cfg = load_config(config_path)
        t0 = time.perf_counter()
        results = verify_suite(cfg.params, cfg.n_nodes, quad_factor=quad_factor)
        if limits is not None:
            limits.restore_original_limits()
    except TPFlowError as exc:
        code, msg = _diagnose(exc)
        print(msg, file=sys.stderr)
        return code
    print(f"verify s={cfg.s:g} N={cfg.n_nodes} ({time.perf_counter() - t0:.1f} s)")
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    print("ALL PASS" if ok else "FAILURES PRESENT")
    return EXIT_OK if ok else EXIT_FAILED


def _sweep_one(args):
    path, out_dir, stride, no_render = args
    logging.getLogger().setLevel(logging.WARNING)
    return str(path), cmd_run(path, snapshot_stride=stride, no_render=no_render, output=out_dir)


def cmd_sweep(directory, jobs=None, snapshot_stride=None, no_render=False, output_root=None):
    directory = Path(directory)
    configs = sorted(directory.glob("*.json")) if directory.is_dir() else []
    if not configs:
        print(f"configuration error: no *.json configs in {directory}", file=sys.stderr)
        return EXIT_CONFIG
    root = Path(output_root) if output_root else directory / "sweep_out"
    tasks = [(p, root / p.stem, snapshot_stride, no_render) for p in configs]
    jobs = jobs or min(len(tasks), os.cpu_count() or 1)
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        results = list(pool.map(_sweep_one, tasks))
    summary = {Path(p).stem: code for p, code in results}
    root.mkdir(parents=True, exist_ok=True)
    (root / "sweep.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    for name, code in summary.items():
        print(f"{code}  {name}")
    return max(summary.values())


def build_parser():
    ap = argparse.ArgumentParser(prog="tpflow", description="Tangent-point energy gradient flow experiments.")
    ap.add_argument("--log-level", default="WARNING", help="logging level (default WARNING)")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one flow experiment")
    r.add_argument("config")
    r.add_argument("--snapshot-stride", type=int, default=None, help="override outputs.snapshot_stride")
    r.add_argument("--no-render", action="store_true", help="skip SVG renders")
    r.add_argument("--output", default=None, help="override outputs.directory")

    v = sub.add_parser("verify", help="run the numerical self-checks")
    v.add_argument("config")
    v.add_argument("--corrupt-quadrature", type=float, default=None, metavar="FACTOR",
                   help="test hook: scale the energy quadrature weights by FACTOR")

    w = sub.add_parser("sweep", help="run every *.json config in a directory concurrently")
    w.add_argument("directory")
    w.add_argument("--jobs", type=int, default=None)
    w.add_argument("--snapshot-stride", type=int, default=None)
    w.add_argument("--no-render", action="store_true")
    w.add_argument("--output-root", default=None, help="default: <directory>/sweep_out")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        return cmd_run(args.config, args.snapshot_stride, args.no_render, args.output)
    if args.command == "verify":
        return cmd_verify(args.config, args.corrupt_quadrature)
    return cmd_sweep(args.directory, args.jobs, args.snapshot_stride, args.no_render, args.output_root)


if __name__ == "__main__":
    sys.exit(main())
