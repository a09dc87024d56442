"""Command-line entry point.

A single JSON config document drives every workflow (matrix-valued inputs
are unreadable as flags); the command name lives inside the document.

    vecspin --config run.json [--output out.json] [--format json|csv]
            [--seed N] [--quiet]

Exit codes: 0 success, 2 config/schema validation error, 3 numerical
failure (singular matrices, infeasible order parameters).
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import __version__
from .diagnostics import critical_residual, rs_condition, rsb_example_build
from .errors import VecspinError
from .functionals import (
    DiscreteOrderParam,
    MatrixPath,
    MeasureFn,
    ZeroTempTriple,
    continuous_cs,
    continuous_cs_rewritten,
    continuous_parisi,
    discrete_cs,
    discrete_parisi,
    gse_functional,
    sine_interpolate,
)
from .model import model_from_dict
from .optimize import (
    OptimizerConfig,
    minimize_discrete_cs,
    minimize_discrete_parisi,
    minimize_gse,
    rs_gse_variants,
    sup_over_Q,
)
from .sampler import extrapolate_gse, maximize_energy, sample_hamiltonian

_COMMANDS = (
    "eval-cs",
    "eval-parisi",
    "eval-gse",
    "minimize",
    "minimize-gse",
    "sup-q",
    "verify-rs",
    "verify-critical",
    "rsb-example",
    "simulate",
    "extrapolate",
)


class ConfigError(Exception):
    """Config document fails validation; message carries a JSON pointer."""


def _get(doc: dict, pointer: str, required: bool = True, default=None):
    node = doc
    for part in pointer.strip("/").split("/"):
        if not isinstance(node, dict) or part not in node:
            if required:
                raise ConfigError(f"{pointer}: required field is missing")
            return default
        node = node[part]
    return node


def _matrix(doc, pointer: str) -> np.ndarray:
    raw = _get(doc, pointer)
    try:
        mat = np.asarray(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{pointer}: not a numeric matrix ({exc})") from exc
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ConfigError(f"{pointer}: expected a square matrix, got shape {mat.shape}")
    return mat


def _model(doc) -> "object":
    raw = _get(doc, "/model")
    try:
        return model_from_dict(raw)
    except VecspinError as exc:
        raise ConfigError(f"/model: {exc}") from exc


def _order_param(doc):
    """Decode /order_param into (measure, path, discrete-or-None)."""
    raw = _get(doc, "/order_param")
    if not isinstance(raw, dict):
        raise ConfigError("/order_param: expected an object")
    if "x" in raw and "Qs" in raw:
        try:
            p = DiscreteOrderParam.from_dict(raw)
        except (VecspinError, KeyError, ValueError) as exc:
            raise ConfigError(f"/order_param: {exc}") from exc
        measure, path = sine_interpolate(p)
        return measure, path, p
    if "measure" in raw and "path" in raw:
        try:
            measure = MeasureFn.from_dict(raw["measure"])
            path = MatrixPath.from_dict(raw["path"])
        except (VecspinError, KeyError, ValueError) as exc:
            raise ConfigError(f"/order_param: {exc}") from exc
        return measure, path, None
    raise ConfigError(
        "/order_param: expected either {x, Qs} or {measure, path}"
    )


def _opt_config(doc, seed_override) -> OptimizerConfig:
    raw = _get(doc, "/optimizer", required=False, default={}) or {}
    if not isinstance(raw, dict):
        raise ConfigError("/optimizer: expected an object")
    try:
        cfg = OptimizerConfig.from_dict(raw)
    except (VecspinError, TypeError, ValueError) as exc:
        raise ConfigError(f"/optimizer: {exc}") from exc
    seed = seed_override if seed_override is not None else _get(doc, "/seed", required=False, default=cfg.seed)
    return OptimizerConfig(
        restarts=cfg.restarts,
        max_iters=cfg.max_iters,
        grad_tol=cfg.grad_tol,
        penalty_weight=cfg.penalty_weight,
        seed=int(seed),
        r_schedule=cfg.r_schedule,
    )


# ---------------------------------------------------------------------------
# command implementations: each returns (results dict, csv rows or None)
# ---------------------------------------------------------------------------


def _cmd_eval_cs(doc, seed):
    model = _model(doc)
    measure, path, discrete = _order_param(doc)
    n_quad = int(_get(doc, "/n_quad", required=False, default=2001))
    t_hat = _get(doc, "/t_hat", required=False)
    results = {}
    if discrete is not None:
        results["discrete_cs"] = discrete_cs(model, discrete)
    results["continuous_cs"] = continuous_cs(
        model, measure, path, t_hat=t_hat, n_quad=n_quad
    )
    results["continuous_cs_rewritten"] = continuous_cs_rewritten(
        model, measure, path, n_quad=n_quad
    )
    rows = [("name", "value")] + [(k, v) for k, v in results.items()]
    return results, rows


def _cmd_eval_parisi(doc, seed):
    model = _model(doc)
    measure, path, discrete = _order_param(doc)
    lam = _matrix(doc, "/lambda")
    n_quad = int(_get(doc, "/n_quad", required=False, default=2001))
    results = {}
    if discrete is not None:
        results["discrete_parisi"] = discrete_parisi(model, lam, discrete)
    results["continuous_parisi"] = continuous_parisi(
        model, measure, lam, path, n_quad=n_quad
    )
    rows = [("name", "value")] + [(k, v) for k, v in results.items()]
    return results, rows


def _cmd_eval_gse(doc, seed):
    model = _model(doc)
    raw = _get(doc, "/triple")
    try:
        triple = ZeroTempTriple.from_dict(raw)
    except (VecspinError, KeyError, ValueError) as exc:
        raise ConfigError(f"/triple: {exc}") from exc
    n_quad = int(_get(doc, "/n_quad", required=False, default=2001))
    value = gse_functional(model, triple, n_quad=n_quad)
    return {"gse_functional": value}, [("name", "value"), ("gse_functional", value)]


def _cmd_minimize(doc, seed):
    model = _model(doc)
    q = _matrix(doc, "/Q")
    cfg = _opt_config(doc, seed)
    functional = _get(doc, "/functional", required=False, default="cs")
    if functional == "cs":
        rep = minimize_discrete_cs(model, q, cfg)
    elif functional == "parisi":
        rep = minimize_discrete_parisi(model, q, cfg)
    else:
        raise ConfigError("/functional: expected 'cs' or 'parisi'")
    results = rep.to_dict()
    rows = [("restart", "value")] + [
        (i, v) for i, v in enumerate(rep.per_restart_values)
    ] + [("best", rep.best_value)]
    return results, rows


def _cmd_minimize_gse(doc, seed):
    model = _model(doc)
    q = _matrix(doc, "/Q")
    cfg = _opt_config(doc, seed)
    rep = minimize_gse(model, q, cfg)
    rs = rs_gse_variants(model, q)
    results = rep.to_dict()
    results["rs_closed_form"] = {
        "value": rs["value"],
        "trace_value": rs["trace_value"],
        "sum_value": rs["sum_value"],
        "variants_agree": rs["variants_agree"],
    }
    rows = [("restart", "value")] + [
        (i, v) for i, v in enumerate(rep.per_restart_values)
    ] + [("best", rep.best_value)]
    return results, rows


def _cmd_sup_q(doc, seed):
    model = _model(doc)
    cfg = _opt_config(doc, seed)
    q, value = sup_over_Q(model, cfg)
    return {"Q": q.tolist(), "value": value}, [("name", "value"), ("sup_value", value)]


def _cmd_verify_rs(doc, seed):
    model = _model(doc)
    q = _matrix(doc, "/Q")
    ordering = _get(doc, "/ordering", required=False, default="loewner")
    flag, margin = rs_condition(model, q, ordering=ordering)
    flag_e, margin_e = rs_condition(model, q, ordering="entrywise")
    results = {
        "flag": bool(flag),
        "margin": margin,
        "ordering": ordering,
        "entrywise_flag": bool(flag_e),
        "entrywise_margin": margin_e,
    }
    if flag:
        rs = rs_gse_variants(model, q)
        results["rs_gse_value"] = rs["value"]
        results["rs_gse_sum_variant"] = rs["sum_value"]
    rows = [("name", "value"), ("flag", int(flag)), ("margin", margin)]
    return results, rows


def _cmd_verify_critical(doc, seed):
    model = _model(doc)
    measure, path, _ = _order_param(doc)
    n_quad = int(_get(doc, "/n_quad", required=False, default=2001))
    support_tol = float(_get(doc, "/support_tol", required=False, default=1e-8))
    residual_tol = float(_get(doc, "/residual_tol", required=False, default=1e-5))
    rep = critical_residual(
        model,
        measure,
        path,
        support_tol=support_tol,
        n_quad=n_quad,
        residual_tol=residual_tol,
    )
    results = rep.to_dict()
    sup_lookup = dict(rep.support_grid)
    rows = [("t", "residual", "in_support")] + [
        (t, r, int(bool(sup_lookup.get(t, False)))) for t, r in rep.per_point_residuals
    ]
    return results, rows


def _cmd_rsb_example(doc, seed):
    beta = float(_get(doc, "/beta"))
    n_steps = int(_get(doc, "/n_steps", required=False, default=4000))
    measure, path, q0, rep = rsb_example_build(beta, n_steps=n_steps)
    results = {
        "q0": q0,
        "residual_sup": rep.residual_sup,
        "verdict": rep.verdict,
        "cs_value": rep.extras["cs_value"],
        "phi_hat_identity_residual": rep.extras["phi_hat_identity_residual"],
        "x_left_at_q0": rep.extras["x_left_at_q0"],
        "x_monotone": rep.extras["x_monotone"],
        "measure": measure.to_dict(),
        "path": path.to_dict(),
    }
    rows = [("name", "value"), ("q0", q0), ("residual_sup", rep.residual_sup),
            ("cs_value", rep.extras["cs_value"])]
    return results, rows


def _cmd_simulate(doc, seed):
    model = _model(doc)
    sizes = _get(doc, "/N")
    if isinstance(sizes, (int, float)):
        sizes = [int(sizes)]
    sizes = [int(n) for n in sizes]
    draws = int(_get(doc, "/draws", required=False, default=5))
    restarts = int(_get(doc, "/restarts", required=False, default=8))
    max_iters = int(_get(doc, "/max_iters", required=False, default=300))
    p_cut = int(_get(doc, "/p_cut", required=False, default=4))
    base_seed = int(seed if seed is not None else _get(doc, "/seed", required=False, default=0))
    q = _matrix(doc, "/Q")
    runs = []
    for n in sizes:
        for d in range(draws):
            sample = sample_hamiltonian(model, n, p_cut=p_cut, seed=base_seed + d)
            energy, _ = maximize_energy(
                sample, q, restarts=restarts, max_iters=max_iters, seed=base_seed + d
            )
            runs.append({"N": n, "seed": base_seed + d, "restarts": restarts, "energy": energy})
    results = {"runs": runs}
    rows = [("N", "seed", "restart", "energy")] + [
        (r["N"], r["seed"], r["restarts"], r["energy"]) for r in runs
    ]
    return results, rows


def _cmd_extrapolate(doc, seed):
    values = _get(doc, "/values")
    if not isinstance(values, list) or any(len(v) != 2 for v in values):
        raise ConfigError("/values: expected a list of [N, energy] pairs")
    exponent = float(_get(doc, "/exponent", required=False, default=-2.0 / 3.0))
    e_inf, resid = extrapolate_gse(values, exponent=exponent)
    results = {"e_inf": e_inf, "fit_residual": resid, "exponent": exponent}
    rows = [("name", "value"), ("e_inf", e_inf), ("fit_residual", resid)]
    return results, rows


_DISPATCH = {
    "eval-cs": _cmd_eval_cs,
    "eval-parisi": _cmd_eval_parisi,
    "eval-gse": _cmd_eval_gse,
    "minimize": _cmd_minimize,
    "minimize-gse": _cmd_minimize_gse,
    "sup-q": _cmd_sup_q,
    "verify-rs": _cmd_verify_rs,
    "verify-critical": _cmd_verify_critical,
    "rsb-example": _cmd_rsb_example,
    "simulate": _cmd_simulate,
    "extrapolate": _cmd_extrapolate,
}


def _fmt_csv_cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def run(config: dict, output: str | None, fmt: str, seed, quiet: bool) -> int:
    """Execute the config document; returns the process exit status."""
    command = config.get("command")
    if command not in _COMMANDS:
        raise ConfigError(f"/command: expected one of {', '.join(_COMMANDS)}")
    t0 = time.perf_counter()
    results, rows = _DISPATCH[command](config, seed)
    elapsed = time.perf_counter() - t0
    report = {
        "tool": "vecspin",
        "version": __version__,
        "command": command,
        "inputs": config,
        "results": results,
        "timing_sec": elapsed,
    }
    if output:
        if fmt == "csv":
            lines = [",".join(_fmt_csv_cell(c) for c in row) for row in (rows or [])]
            text = "\n".join(lines) + "\n"
        else:
            text = json.dumps(report, indent=2, sort_keys=True, default=float) + "\n"
        with open(output, "w") as fh:
            fh.write(text)
    if not quiet:
        brief = {
            k: v
            for k, v in results.items()
            if isinstance(v, (int, float, bool, str))
        }
        print(json.dumps({"command": command, **brief}, sort_keys=True, default=float))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="vecspin",
        description="Variational solver for spherical vector spin glasses",
    )
    parser.add_argument("--config", required=True, help="JSON config document")
    parser.add_argument("--output", default=None, help="report file path")
    parser.add_argument("--format", default="json", choices=("json", "csv"))
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)
    try:
        with open(args.config) as fh:
            config = json.load(fh)
        if not isinstance(config, dict):
            raise ConfigError("/: config must be a JSON object")
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return run(config, args.output, args.format, args.seed, args.quiet)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except VecspinError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
