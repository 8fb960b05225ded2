"""Command-line front end.

Subcommands: fit, simulate, contaminate, montecarlo, biascurve, replay.

Series input is a CSV with one numeric column and an optional header line
(LF or CRLF). Outputs:

  fit          JSON result at --output, plus <stem>.series.csv with columns
               t, y, residual, cleaned, flag
  simulate     CSV with a single column y
  contaminate  CSV with a single column y
  montecarlo   CSV with columns estimator, scenario, parameter, mse
  biascurve    CSV with columns k, bias

Every run writes <stem>.manifest.json beside its output, recording the
resolved configuration, its hash, input checksums and library versions;
``replay <manifest>`` reruns that configuration. A --config file holds flat
``key = value`` lines (``#`` comments allowed) using the long flag names;
flags given on the command line override it.

Exit codes: 0 success, 2 input error, 3 convergence failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import platform
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .arma_core import ArmaParams, simulate_arma
from .contamination import ContaminationSpec, Kind, Placement, SignRule, contaminate
from .estimators import ESTIMATORS, FitConfig, FitError
from .experiments import DEFAULT_K_GRID, bias_curve, run_mse_study
from .inference import standard_errors
from .residuals import Flavor, arma_residuals, bip_residuals, cleaned_series

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CONVERGENCE = 3

# keys that do not affect results and are left out of the config hash
_UNHASHED = {"output", "config", "handler", "workers"}


class InputError(Exception):
    pass


# ---------------------------------------------------------------- io helpers

def read_series(path) -> np.ndarray:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise InputError(f"{path} is empty")
    values = []
    for i, ln in enumerate(lines):
        try:
            values.append(float(ln))
        except ValueError:
            if i == 0:
                continue  # header
            raise InputError(f"{path}, line {i + 1}: not a number: {ln!r}") from None
    arr = np.array(values, dtype=float)
    if arr.size == 0:
        raise InputError(f"{path} holds no numeric values")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{path} contains non-finite values")
    return arr


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return repr(v) if math.isfinite(v) else "nan"


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([c if isinstance(c, str) else _fmt(c) for c in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, data) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _stem_path(output, suffix: str) -> Path:
    out = Path(output)
    return out.with_name(out.stem + suffix)


def _versions() -> dict:
    import numba
    import scipy

    return {"bmm_arma": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__}


def resolved_config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("handler",)}


def config_hash(config: dict) -> str:
    core = {k: v for k, v in config.items() if k not in _UNHASHED}
    return hashlib.sha256(json.dumps(core, sort_keys=True).encode()).hexdigest()


def write_manifest(args, outputs, extra=None) -> Path:
    config = resolved_config(args)
    inputs = []
    if getattr(args, "input", None):
        inputs.append({"path": str(args.input), "sha256": _sha256(args.input)})
    manifest = {
        "command": args.command,
        "config": config,
        "config_hash": config_hash(config),
        "inputs": inputs,
        "outputs": [str(p) for p in outputs],
        "seed": getattr(args, "seed", None),
        "versions": _versions(),
    }
    if extra:
        manifest.update(extra)
    path = _stem_path(args.output, ".manifest.json")
    write_json(path, manifest)
    return path


# ---------------------------------------------------------------- parsing helpers

def _float_list(text) -> list[float]:
    if text is None or str(text).strip() == "":
        return []
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise InputError(f"bad number list {text!r}") from exc


def _k_grid(text) -> np.ndarray:
    if text is None:
        return np.asarray(DEFAULT_K_GRID)
    text = str(text)
    if ":" in text:
        try:
            start, stop, step = (float(v) for v in text.split(":"))
        except ValueError as exc:
            raise InputError(f"k grid must be start:stop:step, got {text!r}") from exc
        if step <= 0:
            raise InputError("k grid step must be positive")
        return np.round(np.arange(start, stop + step * 1e-9, step), 10)
    return np.array(_float_list(text))


def _model(args) -> ArmaParams:
    phi, theta = _float_list(args.phi), _float_list(args.theta)
    if args.p is not None and args.p != len(phi):
        raise InputError(f"--p {args.p} does not match {len(phi)} --phi values")
    if args.q is not None and args.q != len(theta):
        raise InputError(f"--q {args.q} does not match {len(theta)} --theta values")
    return ArmaParams(phi, theta, args.mu)


def _fit_config(args) -> FitConfig:
    max_iter = getattr(args, "max_iter", None)
    if max_iter is not None and max_iter < 1:
        raise InputError("--max-iter must be positive")
    extra = {} if max_iter is None else {"max_iter": max_iter}
    return FitConfig(seed=args.seed, **extra)


def load_config_file(path) -> dict:
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}, line {i}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = value
    return out


# ---------------------------------------------------------------- commands

def cmd_fit(args) -> int:
    x = read_series(args.input)
    lag = args.difference
    if lag:
        if lag < 0 or lag >= x.size:
            raise InputError(f"difference lag {lag} out of range for {x.size} values")
        y = x[lag:] - x[:-lag]
    else:
        y = x
    p, q = args.p or 0, args.q or 0
    fit_fn = ESTIMATORS[args.estimator]
    try:
        result = fit_fn(y, p, q, _fit_config(args))
    except FitError as exc:
        print(f"error: fit failed: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except ValueError as exc:
        raise InputError(str(exc)) from exc

    beta = result.beta_hat
    try:
        summary = standard_errors(result)
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        logging.getLogger(__name__).warning("standard errors unavailable: %s", exc)
        summary = []
    if result.branch is Flavor.BIP:
        resid = bip_residuals(y, beta, result.s_star).values
    else:
        resid = arma_residuals(y, beta).values
    cleaned = cleaned_series(y, beta, result.s_star)
    flag = (cleaned != y).astype(int)
    resid_full = np.concatenate((np.zeros(p), resid))

    out = result.to_dict()
    out["standard_errors"] = [vars(s) for s in summary]
    out["difference"] = lag
    out["input"] = str(args.input)
    write_json(args.output, out)
    series_path = _stem_path(args.output, ".series.csv")
    write_csv(series_path, ["t", "y", "residual", "cleaned", "flag"],
              zip(range(1, y.size + 1), y, resid_full, cleaned, flag))
    write_manifest(args, [args.output, series_path])

    print(f"estimator {result.estimator}  n={result.n_obs}  branch={result.branch.value}")
    print(f"s* = {result.s_star:.6g}")
    se = {s.name: s for s in summary}
    for name, val in zip(beta.names(), beta.to_vector()):
        s = se.get(name)
        if s is None:
            print(f"{name:>8} {val: .6f}")
        else:
            print(f"{name:>8} {val: .6f}  se {s.se:.6f}  95% CI [{s.ci_low:.6f}, {s.ci_high:.6f}]")
    if not result.converged:
        print("warning: not all stages converged; results flagged", file=sys.stderr)
        return EXIT_CONVERGENCE
    return EXIT_OK


def cmd_simulate(args) -> int:
    model = _model(args)
    try:
        sim = simulate_arma(model, sigma_a=args.sigma, n=args.n, seed=args.seed,
                            burn_in=args.burn_in)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    write_csv(args.output, ["y"], ((v,) for v in sim.values))
    write_manifest(args, [args.output])
    return EXIT_OK


def _spec(args, size=None) -> ContaminationSpec:
    try:
        return ContaminationSpec(
            epsilon=args.epsilon, kind=Kind(args.kind),
            size_k=float(args.size if size is None else size),
            placement=Placement(args.placement), sign_rule=SignRule(args.sign), seed=args.seed)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def cmd_contaminate(args) -> int:
    x = read_series(args.input)
    spec = _spec(args, _float_list(args.size)[0] if args.size is not None else 0.0)
    z, idx = contaminate(x, spec)
    write_csv(args.output, ["y"], ((v,) for v in z))
    write_manifest(args, [args.output], {"outlier_indices": (idx + 1).tolist()})
    print(f"{idx.size} outliers placed")
    return EXIT_OK


def cmd_montecarlo(args) -> int:
    model = _model(args)
    sizes = _float_list(args.size) if args.size is not None else []
    scenarios = {"clean": ContaminationSpec()}
    for k in sizes:
        spec = _spec(args, k)
        scenarios[spec.label] = spec
    estimators = [e.strip() for e in args.estimators.split(",") if e.strip()]
    try:
        table = run_mse_study(model, args.sigma, estimators, scenarios, n=args.n,
                              reps=args.reps, seed=args.seed, workers=args.workers,
                              cfg=_fit_config(args))
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    write_csv(args.output, ["estimator", "scenario", "parameter", "mse"],
              ((r.estimator, r.scenario, r.parameter, r.mse) for r in table.rows))
    write_manifest(args, [args.output], {
        "flagged": table.flagged,
        "failures": {f"{e}/{s}": c for (e, s), c in table.failures.items()},
    })
    return EXIT_OK


def cmd_biascurve(args) -> int:
    model = _model(args)
    if model.mu != 0:
        raise InputError("bias curves need --mu 0")
    grid = _k_grid(args.k_grid)
    if grid.size == 0:
        raise InputError("empty k grid")
    try:
        curve = bias_curve(model, args.sigma, args.estimator, args.epsilon, grid, args.n,
                           args.seed, args.repeats, cfg=_fit_config(args))
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    write_csv(args.output, ["k", "bias"], zip(curve.k_grid, curve.bias_values))
    write_manifest(args, [args.output])
    return EXIT_OK


def cmd_replay(args) -> int:
    try:
        manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
        config = dict(manifest["config"])
    except (OSError, ValueError, KeyError) as exc:
        raise InputError(f"cannot read manifest {args.manifest}: {exc}") from exc
    if args.output is not None:
        config["output"] = args.output
    handler = _HANDLERS.get(config.get("command"))
    if handler is None:
        raise InputError(f"manifest names unknown command {config.get('command')!r}")
    return handler(argparse.Namespace(**config))


_HANDLERS = {
    "fit": cmd_fit,
    "simulate": cmd_simulate,
    "contaminate": cmd_contaminate,
    "montecarlo": cmd_montecarlo,
    "biascurve": cmd_biascurve,
}


# ---------------------------------------------------------------- parser

def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output", default=None, help="output path")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--config", default=None, help="flat key = value file")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--phi", default="", help="comma-separated AR coefficients")
    model.add_argument("--theta", default="",
                       help="comma-separated MA coefficients, theta(B) = 1 - sum theta_i B^i")
    model.add_argument("--mu", type=float, default=0.0)
    model.add_argument("--sigma", type=float, default=1.0, help="innovation s.d.")
    model.add_argument("--p", type=int, default=None)
    model.add_argument("--q", type=int, default=None)

    contam = argparse.ArgumentParser(add_help=False)
    contam.add_argument("--epsilon", type=float, default=0.1)
    contam.add_argument("--kind", choices=[k.value for k in Kind], default="additive")
    contam.add_argument("--placement", choices=[p.value for p in Placement],
                        default="equally_spaced")
    contam.add_argument("--sign", choices=[s.value for s in SignRule], default="positive")

    parser = argparse.ArgumentParser(
        prog="bmm-arma", description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    sp = sub.add_parser("fit", parents=[common], help="fit an ARMA(p, q) model to a CSV series")
    sp.add_argument("--input", required=True)
    sp.add_argument("--p", type=int, default=0)
    sp.add_argument("--q", type=int, default=0)
    sp.add_argument("--difference", type=int, default=0, help="fit x_t - x_{t-L}")
    sp.add_argument("--estimator", choices=sorted(ESTIMATORS), default="BMM")
    sp.add_argument("--max-iter", type=int, default=None, help="refinement iteration cap")
    subs["fit"] = sp

    sp = sub.add_parser("simulate", parents=[common, model], help="simulate a Gaussian ARMA series")
    sp.add_argument("--n", type=int, default=200)
    sp.add_argument("--burn-in", type=int, default=500)
    subs["simulate"] = sp

    sp = sub.add_parser("contaminate", parents=[common, contam], help="inject outliers")
    sp.add_argument("--input", required=True)
    sp.add_argument("--size", default="6", help="outlier size k in series units")
    subs["contaminate"] = sp

    sp = sub.add_parser("montecarlo", parents=[common, model, contam],
                        help="MSE table over replications")
    sp.add_argument("--n", type=int, default=200)
    sp.add_argument("--reps", type=int, default=100)
    sp.add_argument("--size", default="4,6", help="comma-separated outlier sizes")
    sp.add_argument("--estimators", default="BMM,MM,MLE")
    sp.add_argument("--workers", type=int, default=1)
    subs["montecarlo"] = sp

    sp = sub.add_parser("biascurve", parents=[common, model], help="asymptotic bias curve")
    sp.add_argument("--estimator", choices=sorted(ESTIMATORS), default="BMM")
    sp.add_argument("--epsilon", type=float, default=0.1)
    sp.add_argument("--k-grid", default=None, help="start:stop:step or comma list (0:10:0.5)")
    sp.add_argument("--n", type=int, default=10_000, help="length of the long series")
    sp.add_argument("--repeats", type=int, default=1)
    subs["biascurve"] = sp

    sp = sub.add_parser("replay", help="rerun the configuration stored in a manifest")
    sp.add_argument("manifest")
    sp.add_argument("--output", default=None, help="override the recorded output path")
    subs["replay"] = sp

    for name, sp in subs.items():
        if name != "replay":
            sp.set_defaults(handler=_HANDLERS[name])
    subs["replay"].set_defaults(handler=cmd_replay)
    return parser, subs


def parse_args(argv=None) -> argparse.Namespace:
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        values = load_config_file(args.config)
        sp = subs[args.command]
        known = {a.dest for a in sp._actions}
        unknown = sorted(set(values) - known)
        if unknown:
            raise InputError(f"unknown config keys for {args.command}: {', '.join(unknown)}")
        # string defaults pass through each flag's type conversion
        sp.set_defaults(**values)
        args = parser.parse_args(argv)
    if args.command != "replay" and args.output is None:
        default = {"fit": "fit.json", "montecarlo": "mse_table.csv",
                   "biascurve": "bias_curve.csv"}.get(args.command, f"{args.command}.csv")
        args.output = default
    return args


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = parse_args(argv)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.handler(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
