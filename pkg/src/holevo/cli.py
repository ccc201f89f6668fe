"""Command-line front end: ``holevo run | sweep | validate``."""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .bounds import HNOptions, efficient_influence, gamma_matrix, hn_bound
from .canonical import canonical_transform, commutator_matrix, y_observables
from .gaussian import gaussian_bound_report
from .io import (
    UNITS,
    ConfigValidationError,
    apply_override,
    atomic_write,
    build_model,
    config_hash,
    csv_text,
    dumps,
    load_config,
    scheme_config,
    tolerances,
    validate_config,
)
from .models import ThermalGaussianModel
from .scheme import (
    design_scheme,
    exact_evolve_and_measure,
    kappa_t_sweep,
    linearized_simulate,
    separable_baseline,
    two_step_protocol,
)
from .validate import format_table, run_checks

SWEEP_EXTRA = {"fraction", "N"}


class Bundle:
    def __init__(self, report: dict, tables: Optional[dict] = None, files: Optional[dict] = None):
        self.report = report
        self.tables = tables or {}
        self.files = files or {}


def _theta(cfg, model, key="theta"):
    if key in cfg:
        return np.asarray(cfg[key], dtype=float)
    if key == "theta_check" and "theta" in cfg:
        return np.asarray(cfg["theta"], dtype=float)
    return np.asarray(model.theta0, dtype=float)


def _W(cfg):
    return np.asarray(cfg["W"], dtype=float) if "W" in cfg else None


def _hn_opts(cfg) -> HNOptions:
    opts = dict(cfg.get("hn", {}))
    if "seed" in cfg:
        opts.setdefault("seed", cfg["seed"])
    return HNOptions(**opts)


def _bounds_report(cfg, model):
    if isinstance(model, ThermalGaussianModel):
        return gaussian_bound_report(model, _theta(cfg, model), _W(cfg), cfg["model"].get("fock_cutoff"), opts=_hn_opts(cfg))
    return hn_bound(model, _theta(cfg, model), _W(cfg), _hn_opts(cfg), tolerances(cfg))


def _bounds_dict(rep) -> dict:
    rep.check_sandwich()  # re-verified whenever a report is serialized
    d = rep.to_dict()
    d["sandwich_verified"] = True
    return d


def cmd_bounds(cfg, model) -> Bundle:
    return Bundle({"bounds": _bounds_dict(_bounds_report(cfg, model))})


def cmd_canonical(cfg, model) -> Bundle:
    pt = model.evaluate(_theta(cfg, model))
    inf = efficient_influence(pt, tol=tolerances(cfg))
    g = gamma_matrix(pt.rho, inf.delta)
    ct = canonical_transform(g.im, tolerances(cfg).canonical_zero)
    Y = y_observables(inf.observables(), ct)
    im_y = commutator_matrix(pt.rho, Y)
    return Bundle(
        {
            "canonical": ct.to_dict(),
            "gamma": g.to_dict(),
            "cov_y": ct.transport(g.re).tolist(),
            "im_gamma_y": im_y.tolist(),
            "canonical_error": float(np.max(np.abs(im_y - ct.canonical_im()), initial=0.0)),
        }
    )


def _run_summary(res) -> dict:
    return res.summary()


def cmd_simulate_linear(cfg, model) -> Bundle:
    sc = scheme_config(cfg)
    res = linearized_simulate(model, _theta(cfg, model), _theta(cfg, model, "theta_check"), sc, _W(cfg), cfg.get("influence", "hel"))
    files = {"outcomes.csv": res.outcomes_csv()} if sc.store_outcomes else {}
    return Bundle({"run": _run_summary(res)}, files=files)


def cmd_simulate_exact(cfg, model) -> Bundle:
    sc = scheme_config(cfg)
    res = exact_evolve_and_measure(model, _theta(cfg, model), _theta(cfg, model, "theta_check"), sc, _W(cfg), cfg.get("influence", "hel"))
    files = {"outcomes.csv": res.outcomes_csv()} if sc.store_outcomes else {}
    return Bundle({"run": _run_summary(res)}, files=files)


def cmd_protocol(cfg, model) -> Bundle:
    sc = scheme_config(cfg)
    p = cfg.get("protocol", {})
    Ns = p.get("N", 10**6)
    Ns = Ns if isinstance(Ns, list) else [Ns]
    theta = _theta(cfg, model)
    rep = _bounds_report(cfg, model)
    runs, rows = [], []
    for N in Ns:
        res = two_step_protocol(model, theta, int(N), float(p.get("fraction", 0.01)), sc, _W(cfg), bool(p.get("oracle", False)))
        runs.append(_run_summary(res))
        acq = res.diagnostics["acquisition"]
        rows.append([int(N), res.scaled_error, res.scaled_error_se, rep.hn, acq.get("beta_check_error", 0.0)])
    return Bundle(
        {"bounds": _bounds_dict(rep), "protocol": runs},
        tables={"protocol.csv": (["N", "scaled_error", "scaled_error_se", "hn", "beta_check_error"], rows)},
    )


def cmd_baseline(cfg, model) -> Bundle:
    b = cfg.get("baseline", {})
    res = separable_baseline(model, _theta(cfg, model), int(b.get("N", 10**4)), _W(cfg), int(b.get("repetitions", 2000)), cfg.get("seed", 0))
    rep = _bounds_report(cfg, model)
    return Bundle({"baseline": res.to_dict(), "bounds": _bounds_dict(rep)})


def cmd_validate(cfg, model=None) -> Bundle:
    checks = run_checks()
    print(format_table(checks))
    return Bundle({"validate": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in checks]})


PIPELINES = {
    "bounds": cmd_bounds,
    "canonical": cmd_canonical,
    "simulate-linear": cmd_simulate_linear,
    "simulate-exact": cmd_simulate_exact,
    "protocol": cmd_protocol,
    "baseline": cmd_baseline,
    "validate": cmd_validate,
}


def execute(cfg: dict) -> Bundle:
    validate_config(cfg)
    model = build_model(cfg["model"]) if "model" in cfg else None
    return PIPELINES[cfg["command"]](cfg, model)


# ---------------------------------------------------------------- sweep


def _sweep_row(cfg: dict, axis: str, value) -> list:
    row_cfg = json.loads(json.dumps(cfg))
    if axis in SWEEP_EXTRA:
        row_cfg.setdefault("protocol", {})[axis] = int(value) if axis == "N" else float(value)
    else:
        sc = row_cfg.setdefault("scheme", {})
        sc[axis] = int(value) if isinstance(_scheme_default(axis), int) and not isinstance(_scheme_default(axis), bool) else float(value)
    validate_config(row_cfg)
    model = build_model(row_cfg["model"])
    cmd = row_cfg["command"]
    if cmd == "simulate-exact":
        res = exact_evolve_and_measure(model, _theta(row_cfg, model), _theta(row_cfg, model, "theta_check"), scheme_config(row_cfg), _W(row_cfg))
        d = res.diagnostics
        fid = float("nan")
        if axis == "kappa_t":
            sc = scheme_config(row_cfg)
            plan = design_scheme(model, _theta(row_cfg, model, "theta_check"), _W(row_cfg), sc)
            fid = kappa_t_sweep(plan, model.rho(_theta(row_cfg, model)), sc, [sc.kappa_t])[0]["fidelity"]
        return [value, res.scaled_error, res.scaled_error_se, d["mean_gap"], d["cov_gap"], d["truncation_deficit"], fid]
    if cmd == "simulate-linear":
        res = linearized_simulate(model, _theta(row_cfg, model), _theta(row_cfg, model, "theta_check"), scheme_config(row_cfg), _W(row_cfg))
        return [value, res.scaled_error, res.scaled_error_se, res.diagnostics["predicted_error"]]
    if cmd == "protocol":
        p = row_cfg.get("protocol", {})
        N = p.get("N", 10**6)
        N = N[0] if isinstance(N, list) else N
        res = two_step_protocol(model, _theta(row_cfg, model), int(N), float(p.get("fraction", 0.01)), scheme_config(row_cfg), _W(row_cfg), bool(p.get("oracle", False)))
        return [value, res.scaled_error, res.scaled_error_se, res.diagnostics["acquisition"].get("beta_check_error", 0.0)]
    raise ConfigValidationError(f"sweeps are defined for simulate-exact, simulate-linear and protocol, not {cmd!r}")


def _scheme_default(axis):
    from .scheme.config import SchemeConfig

    return SchemeConfig().to_dict().get(axis)


SWEEP_HEADERS = {
    "simulate-exact": ["value", "scaled_error", "scaled_error_se", "mean_gap", "cov_gap", "truncation_deficit", "fidelity"],
    "simulate-linear": ["value", "scaled_error", "scaled_error_se", "predicted_error"],
    "protocol": ["value", "scaled_error", "scaled_error_se", "beta_check_error"],
}


def sweep(cfg: dict, axis: str, values: list, threads: int = 1) -> Bundle:
    validate_config(cfg)
    if not values:
        raise ConfigValidationError("sweep needs at least one value")
    default = _scheme_default(axis)
    numeric = axis in SWEEP_EXTRA or (isinstance(default, (int, float)) and not isinstance(default, bool)) or axis == "gdyne_noise"
    if not numeric:
        raise ConfigValidationError(f"sweep axis {axis!r} is not a numeric config field")
    if cfg["command"] not in SWEEP_HEADERS:
        raise ConfigValidationError(f"sweeps are defined for {sorted(SWEEP_HEADERS)}, not {cfg['command']!r}")
    vals = [float(v) for v in values]
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            rows = list(ex.map(lambda v: _sweep_row(cfg, axis, v), vals))
    else:
        rows = [_sweep_row(cfg, axis, v) for v in vals]
    header = SWEEP_HEADERS[cfg["command"]]
    return Bundle(
        {"sweep": {"axis": axis, "columns": header, "rows": rows}},
        tables={"sweep.csv": (header, rows)},
    )


# ---------------------------------------------------------------- entry point


def _prepare(args) -> tuple[dict, str]:
    cfg, _ = load_config(args.config)
    for item in args.override or []:
        cfg = apply_override(cfg, item)
    if args.seed is not None:
        cfg["seed"] = args.seed
        cfg.setdefault("scheme", {})["seed"] = args.seed
    if args.threads is not None:
        cfg.setdefault("scheme", {})["threads"] = args.threads
    return cfg, config_hash(cfg)


def write_bundle(bundle: Bundle, out: Path, cfg: dict, chash: str) -> Path:
    payload = dict(bundle.report)
    payload["units"] = UNITS
    payload["provenance"] = {
        "command": cfg.get("command"),
        "config_sha256": chash,
        "seed": cfg.get("seed", cfg.get("scheme", {}).get("seed", 0)),
        "version": __version__,
        "schema_version": cfg.get("schema_version"),
    }
    target = out / "report.json"
    atomic_write(target, dumps(payload))
    for name, (header, rows) in bundle.tables.items():
        atomic_write(out / name, csv_text(header, rows))
    for name, text in bundle.files.items():
        atomic_write(out / name, f"# units: {UNITS}\n" + text)
    return target


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="holevo", description="Holevo-Nagaoka bounds and collective measurement simulation")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="action", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="YAML experiment configuration")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--override", action="append", metavar="KEY=VALUE", help="dotted config override, repeatable")
        p.add_argument("--threads", type=int, help="worker threads for Monte Carlo chunks and sweep rows")

    common(sub.add_parser("run", help="execute the configured command"))
    sw = sub.add_parser("sweep", help="repeat the configured command over one numeric axis")
    common(sw)
    sw.add_argument("--axis", help="config field to vary (scheme field, fraction or N)")
    sw.add_argument("--values", help="comma-separated values")
    common(sub.add_parser("validate", help="run the invariant suite on built-in fixtures"), config_required=False)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.action == "validate" and not args.config:
            cfg, chash = {"schema_version": 1, "command": "validate"}, ""
            chash = config_hash(cfg)
        else:
            cfg, chash = _prepare(args)
        if args.action == "sweep":
            spec = cfg.get("sweep", {})
            axis = args.axis or spec.get("axis")
            if args.values is not None:
                values = [float(v) for v in args.values.split(",") if v.strip()]
            else:
                values = spec.get("values", [])
            if not axis:
                raise ConfigValidationError("sweep needs an axis")
            bundle = sweep(cfg, axis, values, threads=args.threads or 1)
        elif args.action == "validate":
            cfg["command"] = "validate"
            bundle = execute(cfg)
        else:
            bundle = execute(cfg)
        out = Path(args.out or cfg.get("output") or "results")
        target = write_bundle(bundle, out, cfg, chash)
        if args.action == "validate":
            failed = [c for c in bundle.report["validate"] if not c["passed"]]
            print(f"{len(bundle.report['validate']) - len(failed)}/{len(bundle.report['validate'])} checks passed; report at {target}")
            return 1 if failed else 0
        print(str(target))
        return 0
    except Exception as exc:
        err = {
            "error": type(exc).__name__,
            "message": str(exc),
            "action": getattr(args, "action", None),
        }
        sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")
        return 2 if isinstance(exc, (ConfigValidationError, FileNotFoundError)) else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
