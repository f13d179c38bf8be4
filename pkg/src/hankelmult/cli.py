"""Command-line experiment runner.

Subcommands
-----------
verify       identity suites (transform, heat kernel, multiplier paths)
operator     L^p-ratio / weak-type tables and closed-form checks
kernel-dump  CSV of W, dW/dt, K, H and the local flag at probe pairs
presets      list symbol presets, input generators and operators

Configuration is a YAML document; unknown keys are errors.  Exit codes:
0 pass, 1 tolerance failure, 2 configuration error, 3 non-convergence.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import yaml

from .errors import ConfigError, ConvergenceError, DomainError, InputError
from .grid import GridFunction, Order, WeightedGrid, atomic_write, lp_norm
from .inputs import GENERATOR_NAMES, make_input

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NONCONVERGENCE = 0, 1, 2, 3
THREADS_ENV = "HANKELMULT_THREADS"

SUITES = ("involution", "plancherel", "eigen", "intertwining", "heatkernel", "mass-one",
          "semigroup-law", "dual-path", "c-constant", "unitarity")

DEFAULT_TOLERANCES = {
    "involution": 1e-5, "plancherel": 1e-5, "eigen": 1e-4, "intertwining": 1e-4,
    "heatkernel": 1e-7, "mass-one": 1e-6, "semigroup-law": 1e-6, "dual-path": 1e-2,
    "c-constant": 1e-8, "unitarity": 1e-5, "closed-form": 1e-8, "weak-stability": 0.25,
}

_SCHEMA = {
    "order": None,
    "grid": {"upper": None, "lower": None, "panel_order": None, "width": None, "first": None},
    "symbol": None,
    "suites": None,
    "operators": None,
    "inputs": None,
    "mode": None,
    "p": None,
    "resolutions": None,
    "eps": {"start": None, "ratio": None, "count": None},
    "tolerances": {k: None for k in DEFAULT_TOLERANCES},
    "probes": None,
    "slice": {"x": None, "y": None, "t": None},
    "t": None,
    "seed": None,
    "outputs": {"prefix": None},
}


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

def _check_keys(doc, schema, path="", lines=None):
    if not isinstance(doc, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping")
    for key, val in doc.items():
        where = f"{path}.{key}" if path else str(key)
        if key not in schema:
            line = (lines or {}).get(where)
            at = f" (line {line})" if line else ""
            raise ConfigError(f"unknown key '{where}'{at}")
        if isinstance(schema[key], dict) and val is not None:
            _check_keys(val, schema[key], where, lines)


def _key_lines(text):
    """Map dotted key paths to 1-based line numbers from the YAML node tree."""
    out = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return out

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                name = f"{prefix}.{k.value}" if prefix else str(k.value)
                out[name] = k.start_mark.line + 1
                walk(v, name)

    walk(root, "")
    return out


class ExperimentConfig:
    """Validated experiment configuration.

    Attributes mirror the YAML keys: ``order``, ``grid`` (per-axis
    layout), ``symbol``, ``suites``, ``operators``, ``inputs``, ``mode``
    and ``p``, ``resolutions``, ``eps`` ladder, ``tolerances``, kernel
    ``probes`` or ``slice``, and the output ``prefix``.
    """

    def __init__(self, doc: dict, tolerance_scale=1.0, lines=None):
        doc = doc or {}
        _check_keys(doc, _SCHEMA, lines=lines)
        try:
            self.order = Order.of(doc.get("order", [1.0]))
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc
        grid = dict(doc.get("grid") or {})
        self.grid_spec = {k: float(v) for k, v in grid.items() if k != "panel_order"}
        self.panel_order = int(grid.get("panel_order", 10))
        if self.panel_order < 4:
            raise ConfigError("grid: panel_order must be at least 4 (second derivatives need it)")
        try:
            self.grid = WeightedGrid.build(self.order, panel_order=self.panel_order, **self.grid_spec)
        except (DomainError, TypeError, ValueError) as exc:
            raise ConfigError(f"grid: {exc}") from exc
        if min(self.grid.shape) < 16:
            raise ConfigError("grid: node counts must be at least 16 per axis")
        from .multiplier import symbol_from_preset

        self.symbol_name = str(doc.get("symbol", "identity"))
        try:
            self.symbol = symbol_from_preset(self.symbol_name)
        except (InputError, DomainError) as exc:
            raise ConfigError(f"symbol: {exc}") from exc
        self.suites = list(doc.get("suites", SUITES))
        for s in self.suites:
            if s not in SUITES:
                raise ConfigError(f"suites: unknown suite '{s}'")
        self.operators = [str(o) for o in doc.get("operators", [])]
        from .analysis import resolve_operator

        for op in self.operators:
            try:
                resolve_operator(op, self.order)
            except (InputError, DomainError) as exc:
                raise ConfigError(f"operators: {exc}") from exc
        self.inputs = [str(i) for i in doc.get("inputs", ["gaussian-bump"])]
        for name in self.inputs:
            try:
                make_input(name, self.order)
            except (InputError, DomainError) as exc:
                raise ConfigError(f"inputs: {exc}") from exc
        self.mode = str(doc.get("mode", "lp"))
        if self.mode not in ("lp", "weak", "closed-form"):
            raise ConfigError("mode: expected 'lp', 'weak' or 'closed-form'")
        self.p = float(doc.get("p", 2.0))
        if not self.p >= 1:
            raise ConfigError("p: must be at least 1")
        self.resolutions = [int(r) for r in doc.get("resolutions", [6, 10])]
        if len(self.resolutions) < 1 or min(self.resolutions) < 2:
            raise ConfigError("resolutions: panel orders must be >= 2")
        eps = dict(doc.get("eps") or {})
        start, ratio, count = float(eps.get("start", 0.25)), float(eps.get("ratio", 0.5)), int(eps.get("count", 12))
        if not (start > 0 and 0 < ratio < 1 and count >= 2):
            raise ConfigError("eps: need start > 0, 0 < ratio < 1, count >= 2")
        self.eps = tuple(start * ratio**k for k in range(count))
        tol = dict(DEFAULT_TOLERANCES)
        for key, val in (doc.get("tolerances") or {}).items():
            tol[key] = float(val)
        scale = float(tolerance_scale)
        if not scale > 0:
            raise ConfigError("--tolerance-scale must be positive")
        self.tolerances = {k: v * scale for k, v in tol.items()}
        self.probes = doc.get("probes")
        self.slice = doc.get("slice")
        self.t = float(doc.get("t", 0.25))
        if not self.t > 0:
            raise ConfigError("t: must be positive")
        self.seed = int(doc.get("seed", 0))
        self.prefix = str((doc.get("outputs") or {}).get("prefix", ""))

    @classmethod
    def load(cls, path, tolerance_scale=1.0) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        try:
            doc = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f" at line {mark.line + 1}" if mark else ""
            raise ConfigError(f"config parse error{where}: {exc}") from exc
        try:
            return cls(doc, tolerance_scale, _key_lines(text))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid value: {exc}") from exc


# --------------------------------------------------------------------------
# verify
# --------------------------------------------------------------------------

def _bump(cfg, grid=None):
    return make_input("gaussian-bump", cfg.order).sample(grid or cfg.grid)


def _suite_involution(cfg):
    from .hankel import TransformPlan, self_inverse_residual

    return self_inverse_residual(TransformPlan(cfg.grid), _bump(cfg))


def _suite_plancherel(cfg):
    from .hankel import TransformPlan, plancherel_residual

    other = make_input("random-smooth:1", cfg.order).sample(cfg.grid)
    return plancherel_residual(TransformPlan(cfg.grid), _bump(cfg), other)


def _suite_eigen(cfg):
    # Delta_x of the kernel function at a fixed frequency equals |y|^2 times it
    from .hankel import bessel_operator_apply, hankel_kernel

    y = np.full(cfg.order.n, 1.3)
    pts = np.stack(cfg.grid.mesh(), axis=-1)
    phi = GridFunction(cfg.grid, hankel_kernel(cfg.order, pts, y))
    lhs = bessel_operator_apply(cfg.order, phi)
    return lp_norm(lhs - phi * float(np.sum(y * y)), 2) / (float(np.sum(y * y)) * lp_norm(phi, 2))


def _suite_intertwining(cfg):
    from .hankel import TransformPlan, bessel_operator_apply, hankel_apply

    plan = TransformPlan(cfg.grid)
    f = _bump(cfg)
    lhs = hankel_apply(plan, bessel_operator_apply(cfg.order, f))
    r2 = sum(c * c for c in cfg.grid.mesh())
    rhs = hankel_apply(plan, f) * GridFunction(cfg.grid, r2)
    return lp_norm(lhs - rhs, 2) / lp_norm(rhs, 2)


def _suite_heatkernel(cfg):
    from .semigroup import HeatKernelParams, heat_kernel_spectral_residual

    rng = np.random.default_rng(cfg.seed)
    worst = 0.0
    count = 0
    while count < 20:
        lam = cfg.order.lambdas[count % cfg.order.n]
        t = float(np.exp(rng.uniform(np.log(0.05), np.log(5.0))))
        x, y = rng.uniform(0.1, 4.0, size=2)
        if (x - y) ** 2 / (4 * t) > 10:
            continue
        worst = max(worst, heat_kernel_spectral_residual(HeatKernelParams([lam], t), x, y))
        count += 1
    return worst


def _suite_mass_one(cfg):
    from .semigroup import heat_kernel_1d

    worst = 0.0
    for lam, ax in zip(cfg.order.lambdas, cfg.grid.axes):
        big = ax.refined(2)
        for x in (0.5, 1.0, 2.0):
            mass = float(np.sum(heat_kernel_1d(lam, cfg.t, x, big.nodes) * big.weights))
            worst = max(worst, abs(mass - 1.0))
    return worst


def _suite_semigroup(cfg):
    from .semigroup import heat_kernel_1d

    worst = 0.0
    s, t = cfg.t, 2 * cfg.t
    for lam, ax in zip(cfg.order.lambdas, cfg.grid.axes):
        z, w = ax.nodes, ax.weights
        for x, y in ((0.7, 1.1), (1.5, 2.5)):
            lhs = float(np.sum(heat_kernel_1d(lam, s, x, z) * heat_kernel_1d(lam, t, z, y) * w))
            rhs = float(heat_kernel_1d(lam, s + t, x, y))
            worst = max(worst, abs(lhs - rhs) / rhs)
    return worst


def _suite_dual_path(cfg):
    from .hankel import TransformPlan
    from .multiplier import PVConfig, pv_apply, spectral_apply

    if cfg.order.n != 1:
        return None
    f = _bump(cfg)
    sp = spectral_apply(cfg.symbol, TransformPlan(cfg.grid), f)
    out = WeightedGrid.build(cfg.order, panel_order=6, **cfg.grid_spec)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = pv_apply(cfg.symbol, cfg.order, f, PVConfig(cfg.eps, strict=False), grid=out)
    if not res.all_converged:
        raise ConvergenceError("principal-value truncations did not settle")
    pts = out.points()
    ref = sp(*[pts[:, j] for j in range(out.n)]).reshape(out.shape)
    fo = f(*[pts[:, j] for j in range(out.n)]).reshape(out.shape)
    num = np.sum(np.abs(res.function.values - ref) ** 2 * out.weights)
    den = np.sum(np.abs(fo) ** 2 * out.weights)
    return float(np.sqrt(num / den))


def _suite_c_constant(cfg):
    from .multiplier import identity_symbol, normalization_C

    return abs(normalization_C(identity_symbol(), cfg.order.n) - 1.0)


def _suite_unitarity(cfg):
    from .hankel import TransformPlan
    from .multiplier import imaginary_power_symbol, spectral_apply

    beta = cfg.symbol.param if cfg.symbol.kind == "imaginary-power" else 0.5
    # input with transform vanishing to high order at 0, so T f stays on the grid
    f = make_input("laguerre-gaussian:3", cfg.order).sample(cfg.grid)
    out = spectral_apply(imaginary_power_symbol(beta), TransformPlan(cfg.grid), f)
    return abs(lp_norm(out, 2) / lp_norm(f, 2) - 1.0)


_SUITE_FUNCS = {
    "involution": _suite_involution, "plancherel": _suite_plancherel, "eigen": _suite_eigen,
    "intertwining": _suite_intertwining, "heatkernel": _suite_heatkernel, "mass-one": _suite_mass_one,
    "semigroup-law": _suite_semigroup, "dual-path": _suite_dual_path, "c-constant": _suite_c_constant,
    "unitarity": _suite_unitarity,
}


def _run_parallel(funcs, threads):
    """Run callables, possibly in threads; results keep the input order."""
    if threads <= 1 or len(funcs) <= 1:
        return [_capture(f) for f in funcs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_capture, funcs))


def _capture(fun):
    try:
        return ("ok", fun())
    except ConvergenceError as exc:
        return ("nonconvergence", str(exc))


def run_verify(cfg: ExperimentConfig, out_dir, threads=1) -> int:
    """Run the configured identity suites and write ``summary.json`` and ``residuals.csv``."""
    results = _run_parallel([lambda s=s: _SUITE_FUNCS[s](cfg) for s in cfg.suites], threads)
    summary = {}
    status = EXIT_OK
    rows = []
    for name, (kind, value) in zip(cfg.suites, results):
        tol = cfg.tolerances[name]
        if kind == "nonconvergence":
            entry = {"status": "nonconvergence", "message": value, "tolerance": tol, "passed": False}
            # a tolerance failure takes precedence in the exit status
            if status == EXIT_OK:
                status = EXIT_NONCONVERGENCE
        elif value is None:
            entry = {"status": "skipped", "tolerance": tol, "passed": True,
                     "message": "evaluated for n = 1 only"}
        else:
            passed = bool(value <= tol)
            entry = {"status": "ok", "value": float(value), "tolerance": tol, "passed": passed}
            if not passed:
                status = EXIT_FAIL
        summary[name] = entry
        rows.append([name, entry["status"], f"{entry.get('value', float('nan')):.17g}", f"{tol:.17g}",
                     str(entry["passed"]).lower()])
    _write_json(os.path.join(out_dir, cfg.prefix + "summary.json"),
                {"order": list(cfg.order.lambdas), "symbol": cfg.symbol_name, "suites": summary,
                 "exit_status": status})
    atomic_write(os.path.join(out_dir, cfg.prefix + "residuals.csv"),
                 ["suite", "status", "value", "tolerance", "passed"], rows)
    return status


# --------------------------------------------------------------------------
# operator
# --------------------------------------------------------------------------

def _safe_name(label):
    return "".join(c if c.isalnum() or c in "-." else "_" for c in label)


def run_operator(cfg: ExperimentConfig, out_dir, threads=1) -> int:
    """Tabulate each configured operator; write one JSON and one CSV per operator."""
    from .analysis import OperatorReport, closed_form, lp_ratio_experiment, resolve_operator, weak11_experiment

    def one(op):
        if cfg.mode == "lp":
            rep = lp_ratio_experiment(op, cfg.p, cfg.inputs, cfg.order, cfg.resolutions)
            return rep, True, None
        if cfg.mode == "weak":
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                rep = weak11_experiment(op, cfg.inputs, cfg.order, cfg.resolutions)
            vals = rep.values()
            spread = 0.0 if max(vals) == 0 else rep.spread()
            return rep, spread <= cfg.tolerances["weak-stability"], spread
        # closed-form: apply to the unit indicator and compare at the grid nodes
        from .inputs import unit_indicator

        rep = OperatorReport(op, cfg.p)
        worst = 0.0
        apply = resolve_operator(op, cfg.order)
        for res in cfg.resolutions:
            grid = WeightedGrid.build(cfg.order, panel_order=res, **cfg.grid_spec)
            got = apply(unit_indicator(cfg.order), grid).values.reshape(-1)
            ref = closed_form(op, cfg.order, grid.points())
            err = float(np.max(np.abs(got - ref) / np.maximum(1.0, np.abs(ref))))
            rep.add("unit-indicator", res, err)
            worst = max(worst, err)
        return rep.finalize(), worst <= cfg.tolerances["closed-form"], worst

    results = _run_parallel([lambda o=o: one(o) for o in cfg.operators], threads)
    status = EXIT_OK
    index = {}
    for op, (kind, value) in zip(cfg.operators, results):
        if kind == "nonconvergence":
            index[op] = {"status": "nonconvergence", "message": value, "passed": False}
            status = EXIT_NONCONVERGENCE if status == EXIT_OK else status
            continue
        rep, passed, stat = value
        base = os.path.join(out_dir, cfg.prefix + _safe_name(op))
        rep.to_json(base + ".json")
        rep.to_csv(base + ".csv")
        index[op] = {"status": "ok", "passed": bool(passed), "statistic": stat,
                     "growing": rep.growing, "files": [os.path.basename(base) + ext for ext in (".json", ".csv")]}
        if not passed:
            status = EXIT_FAIL
    _write_json(os.path.join(out_dir, cfg.prefix + "operators.json"),
                {"mode": cfg.mode, "operators": index, "exit_status": status})
    return status


# --------------------------------------------------------------------------
# kernel-dump
# --------------------------------------------------------------------------

def _fmt(v):
    v = complex(v)
    if v.imag == 0:
        return f"{v.real:.17g}"
    return f"{v.real:.17g}{v.imag:+.17g}j"


def _fmt_point(p):
    return ";".join(f"{c:.17g}" for c in np.atleast_1d(p))


def _probe_list(cfg):
    n = cfg.order.n
    probes = []
    if cfg.probes is not None:
        for item in cfg.probes:
            if not isinstance(item, (list, tuple)) or len(item) != 3:
                raise ConfigError("probes: each probe is [x, y, t]")
            x, y = np.atleast_1d(np.asarray(item[0], float)), np.atleast_1d(np.asarray(item[1], float))
            if x.size != n or y.size != n:
                raise ConfigError("probes: point dimension differs from the order")
            probes.append((x, y, float(item[2])))
    elif cfg.slice is not None:
        sl = dict(cfg.slice)
        x = np.atleast_1d(np.asarray(sl.get("x", [1.0] * n), float))
        ys = sl.get("y", [0.25, 4.0, 16])
        if x.size != n or len(ys) != 3:
            raise ConfigError("slice: x must have n entries and y must be [start, stop, count]")
        t = float(sl.get("t", cfg.t))
        for v in np.linspace(float(ys[0]), float(ys[1]), int(ys[2])):
            y = x.copy()
            y[0] = v
            probes.append((x, y, t))
    else:
        raise ConfigError("kernel-dump needs 'probes' or 'slice'")
    for x, y, t in probes:
        if np.any(x <= 0) or np.any(y <= 0) or t <= 0:
            raise ConfigError("probes: coordinates and t must be positive")
    return probes


def run_kernel_dump(cfg: ExperimentConfig, out_dir, threads=1) -> int:
    """Write ``kernels.csv`` with columns x, y, W, dtW, K, H, local_flag."""
    from .analysis import in_local_region
    from .multiplier import PairKernels
    from .semigroup import HeatKernelParams, dt_heat_kernel, heat_kernel

    probes = _probe_list(cfg)
    eng = PairKernels(cfg.symbol, cfg.order)
    rows = []
    for x, y, t in probes:
        params = HeatKernelParams(cfg.order, t)
        w = heat_kernel(params, x, y)
        dw = dt_heat_kernel(params, x, y)
        if np.all(x == y):
            k = h = "singular"
        else:
            k = _fmt(eng.bessel_kernel(x[None, :], y[None, :])[0])
            h = _fmt(eng.euclidean_kernel(x[None, :], y[None, :])[0])
        rows.append([_fmt_point(x), _fmt_point(y), _fmt(w), _fmt(dw), k, h,
                     str(bool(in_local_region(x, y))).lower()])
    atomic_write(os.path.join(out_dir, cfg.prefix + "kernels.csv"),
                 ["x", "y", "W", "dtW", "K", "H", "local_flag"], rows)
    return EXIT_OK


# --------------------------------------------------------------------------
# presets and entry point
# --------------------------------------------------------------------------

def run_presets(stream=None) -> int:
    from .analysis import OPERATOR_NAMES
    from .multiplier import PRESET_NAMES

    stream = stream or sys.stdout
    for title, names in (("symbols", PRESET_NAMES), ("inputs", GENERATOR_NAMES),
                         ("operators", OPERATOR_NAMES), ("suites", SUITES)):
        stream.write(f"{title}:\n")
        for name in names:
            stream.write(f"  {name}\n")
    return EXIT_OK


def _write_json(path, payload):
    from .analysis import _atomic_text

    _atomic_text(path, json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"not serializable: {type(obj).__name__}")


def _threads(value):
    if value is not None:
        return int(value)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"{THREADS_ENV} must be an integer") from exc
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hankelmult", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("verify", "run identity suites"), ("operator", "run operator experiments"),
                       ("kernel-dump", "dump kernel values to CSV")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="YAML experiment configuration")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", type=int, default=None,
                       help=f"worker threads (default: ${THREADS_ENV} or 1)")
        p.add_argument("--tolerance-scale", type=float, default=1.0, help="multiply every tolerance")
    sub.add_parser("presets", help="list symbol presets, inputs, operators and suites")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.command == "presets":
        return run_presets()
    try:
        threads = _threads(args.threads)
        if threads < 1:
            raise ConfigError("--threads must be positive")
        cfg = ExperimentConfig.load(args.config, args.tolerance_scale)
        runner = {"verify": run_verify, "operator": run_operator, "kernel-dump": run_kernel_dump}[args.command]
        return runner(cfg, args.out, threads)
    except ConfigError as exc:
        sys.stderr.write(f"configuration error: {exc}\n")
        return EXIT_CONFIG
    except ConvergenceError as exc:
        sys.stderr.write(f"numerical non-convergence: {exc}\n")
        return EXIT_NONCONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
