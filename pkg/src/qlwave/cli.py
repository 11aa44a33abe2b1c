"""Batch driver: ``qlwave <subcommand> [--config cfg.json] [overrides]``.

Subcommands write CSV tables and JSON reports into ``--out``.  Every JSON
embeds the resolved configuration and a schema version.  Exit status is 0
on success, 1 on a runtime failure and 2 on invalid configuration; failures
also print a JSON error record to stderr.
"""

import argparse
import copy
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import blowup as bu
from .characteristics import sandwich_estimates_audit
from .norms import multiplier_embedding_check
from .params import ModelParams, ParameterError
from .transport import derivative_bound_audit, detect_blowup_numeric

SCHEMA_VERSION = "qlwave.result/1"

DEFAULTS = {
    "scenario": "c_variant",
    "params": {"eps": 0.01, "alpha": 0.5, "beta": 1.0, "delta": 0.5, "c": 0.2, "lambda": 0.05},
    "source": {"id": "sine", "A": 0.5, "k1": 1.0, "k2": 40.0, "omega": 1.0},
    "perturbation": {"id": "gaussian", "a": 0.01, "m1": 0.1, "m2": 0.0, "s": 0.1},
    "grid": {"seeds_x1": 100, "seeds_x2": 20, "x2_halfwidth": 0.05, "dt": 1e-4,
             "window_seeds": 6001, "window_x2": 5},
    "window": {"delta_over_eps": 1.5},
    "simulate": {"t_end": 0.2, "n_out": 11},
    "norm": {"t_frac": 0.5},
    "rate": {"k_min": 3, "k_max": 10},
    "audit": {"sandwich_window": 1e-4},
    "sweep": {"eps_list": [1e-2, 1e-3, 1e-4], "scenarios": list(bu.SCENARIOS)},
    "threads": 1,
    "out": "results",
}


class ConfigError(ValueError):
    """The configuration does not validate."""


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key {path + key!r}")
        if isinstance(base[key], dict) and key not in ("source", "perturbation"):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {path + key!r} must be an object")
            out[key] = _merge(base[key], value, path + key + ".")
        else:
            out[key] = copy.deepcopy(value)
    return out


@dataclass
class ExperimentConfig:
    raw: dict
    params: ModelParams = field(init=False)
    spec: bu.ScenarioSpec = field(init=False)

    def __post_init__(self):
        p = self.raw["params"]
        self.params = ModelParams(eps=p["eps"], alpha=p["alpha"], beta=p["beta"],
                                  delta=p["delta"], c=p["c"], lam=p["lambda"])
        g = self.raw["grid"]
        try:
            self.spec = self.spec_for(self.raw["scenario"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if g["window_seeds"] < 10 or g["window_x2"] < 2:
            raise ConfigError("window_seeds must be >= 10 and window_x2 >= 2")
        if int(self.raw["threads"]) < 1:
            raise ConfigError("threads must be >= 1")

    def spec_for(self, scenario):
        g = self.raw["grid"]
        return bu.ScenarioSpec(scenario=scenario, source=dict(self.raw["source"]),
                               perturbation=dict(self.raw["perturbation"]),
                               seeds_x1=int(g["seeds_x1"]), seeds_x2=int(g["seeds_x2"]),
                               x2_halfwidth=float(g["x2_halfwidth"]), dt=float(g["dt"]))

    @property
    def delta_eps(self):
        return self.raw["window"]["delta_over_eps"] * self.params.eps

    @property
    def window_kw(self):
        g = self.raw["grid"]
        kw = {"n_seed": int(g["window_seeds"]), "n_x2": int(g["window_x2"])}
        return kw

    @classmethod
    def load(cls, path=None, overrides=None):
        raw = DEFAULTS
        if path is not None:
            try:
                with open(path, encoding="utf-8") as fh:
                    user = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
            if not isinstance(user, dict):
                raise ConfigError("config file must hold a JSON object")
            raw = _merge(raw, user)
        raw = _merge(raw, overrides or {})
        return cls(raw)


# --------------------------------------------------------------------------
# Output helpers

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_json(path, payload, config):
    doc = {"schema_version": SCHEMA_VERSION, "config": config.raw, "result": payload}
    text = json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


# --------------------------------------------------------------------------
# Subcommands

def _source_for(config):
    """Closed form or detection-ready field for the configured scenario."""
    spec = config.spec
    if spec.scenario in bu.CLOSED_FORM:
        cf = bu.build_closed_form(config.params, spec)
        return cf, bu.detect_blowup_closed_form(cf)
    fld = bu.build_field(config.params, spec)
    return fld, detect_blowup_numeric(fld)


def cmd_simulate(config, out):
    spec = config.spec
    s = config.raw["simulate"]
    t_end = float(s["t_end"])
    times = list(np.linspace(0.0, t_end, int(s["n_out"]))[1:])
    if spec.scenario in bu.CLOSED_FORM:
        # the closed-form scenarios integrate the equivalent linear source
        src = {"id": "linear", "c": bu.scenario_params(config.params, spec.scenario).c}
        spec = bu.ScenarioSpec(scenario="source_term", source=src, seeds_x1=spec.seeds_x1,
                               seeds_x2=spec.seeds_x2, x2_halfwidth=spec.x2_halfwidth, dt=spec.dt)
    fld = bu.build_field(bu.scenario_params(config.params, config.spec.scenario), spec,
                         t_end=t_end, stop_on_degenerate=False, record_times=times)
    rows = []
    for k, t in enumerate(fld.times):
        st = fld.states[k]
        for i, x1 in enumerate(fld.x1):
            for j, x2 in enumerate(fld.x2):
                rows.append([t, x1, x2] + [st[q, i, j] for q in range(6)])
    write_csv(os.path.join(out, "simulate.csv"),
              ["t", "x1", "x2", "phi", "v", "phi_x", "w", "phi_xx", "W"], rows)
    degenerate = fld.degenerate
    write_json(os.path.join(out, "simulate.json"), {
        "n_seeds": int(degenerate.size),
        "n_degenerate": int(degenerate.sum()),
        "earliest_crossing": float(fld.crossing_time.min()),
        "sign_violations": fld.sign_violations,
    }, config)


def cmd_blowup(config, out):
    src, report = _source_for(config)
    payload = {"scenario": config.spec.scenario, "report": report.to_dict()}
    if config.spec.scenario in bu.CLOSED_FORM:
        w = float(config.raw["audit"]["sandwich_window"])
        payload["sandwich"] = sandwich_estimates_audit(src, report, w)
    else:
        payload["derivative_bounds"] = derivative_bound_audit(src, report)
    write_json(os.path.join(out, "blowup.json"), payload, config)


def cmd_norm(config, out):
    src, report = _source_for(config)
    t = float(config.raw["norm"]["t_frac"]) * report.t_eps
    win = bu.window_series(src, report, [t], config.delta_eps, **config.window_kw)[0]
    p = config.params
    write_json(os.path.join(out, "norm.json"), {
        "t": t,
        "t_eps": report.t_eps,
        "delta_eps": config.delta_eps,
        "I": win.value(p.lam),
        "layer_nodes": win.layer_nodes,
        "embedding": multiplier_embedding_check(1.75, p.beta, p.lam),
    }, config)


def cmd_rate(config, out):
    src, report = _source_for(config)
    r = config.raw["rate"]
    ks = list(range(int(r["k_min"]), int(r["k_max"]) + 1))
    series, used, wins = bu.I_series(src, report, ks, config.delta_eps, config.params.lam,
                                     **config.window_kw)
    write_csv(os.path.join(out, "rate.csv"), ["k", "t", "tau", "I"],
              [[k, t, report.t_eps - t, v] for k, t, v in zip(used, series.t, series.values)])
    fit = bu.fit_rate(series)
    write_json(os.path.join(out, "rate.json"), {
        "t_eps": report.t_eps,
        "k_used": used,
        "increasing": bool(np.all(np.diff(series.values) > 0)),
        "fit": fit.to_dict(),
        "reference_exponent": 2.25 - 3.0 * config.params.lam,
    }, config)


def cmd_audit(config, out):
    src, report = _source_for(config)
    r = config.raw["rate"]
    ks = list(range(int(r["k_max"]) - 3, int(r["k_max"]) + 1))
    ts = bu.dyadic_times(report.t_eps, ks)
    dec = bu.decomposition_audit(src, report, ts, config.delta_eps, config.params.lam,
                                 **config.window_kw)
    payload = {"scenario": config.spec.scenario, "k": ks, "decomposition": dec,
               "detection_audits": report.audits}
    if config.spec.scenario in bu.CLOSED_FORM:
        payload["sandwich"] = sandwich_estimates_audit(
            src, report, float(config.raw["audit"]["sandwich_window"]))
    else:
        payload["derivative_bounds"] = derivative_bound_audit(src, report)
    write_json(os.path.join(out, "audit.json"), payload, config)


def cmd_sweep(config, out):
    s = config.raw["sweep"]
    threads = int(config.raw["threads"])
    rows = []
    for scenario in s["scenarios"]:
        rows.extend(bu.epsilon_sweep(s["eps_list"], config.params, config.spec_for(scenario),
                                     threads=threads))
    header = ["scenario", "eps", "t_eps", "nu1", "nu2", "bound", "bound_ok",
              "sign_violations", "audits_ok"]
    write_csv(os.path.join(out, "sweep.csv"), header, [[r[h] for h in header] for r in rows])
    by = {}
    for r in rows:
        by.setdefault(r["scenario"], []).append(r)
    write_json(os.path.join(out, "sweep.json"), {
        "rows": rows,
        "decreasing": {k: bu.sweep_decreasing(v) for k, v in by.items()},
        "all_bounds_ok": all(r["bound_ok"] for r in rows),
        "total_sign_violations": sum(r["sign_violations"] for r in rows),
    }, config)


COMMANDS = {
    "simulate": cmd_simulate,
    "blowup": cmd_blowup,
    "norm": cmd_norm,
    "rate": cmd_rate,
    "sweep": cmd_sweep,
    "audit": cmd_audit,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="qlwave", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--eps", type=float)
        p.add_argument("--alpha", type=float)
        p.add_argument("--beta", type=float)
        p.add_argument("--delta", type=float)
        p.add_argument("--c", type=float)
        p.add_argument("--lambda", dest="lam", type=float)
        p.add_argument("--scenario", choices=bu.SCENARIOS)
        p.add_argument("--out", help="output directory")
        p.add_argument("--dt", type=float)
        p.add_argument("--seeds-x1", type=int)
        p.add_argument("--seeds-x2", type=int)
        p.add_argument("--threads", type=int)
    return parser


def _overrides(args):
    o = {}
    params = {k: getattr(args, a) for k, a in
              [("eps", "eps"), ("alpha", "alpha"), ("beta", "beta"), ("delta", "delta"),
               ("c", "c"), ("lambda", "lam")] if getattr(args, a) is not None}
    if params:
        o["params"] = params
    grid = {k: getattr(args, a) for k, a in
            [("dt", "dt"), ("seeds_x1", "seeds_x1"), ("seeds_x2", "seeds_x2")]
            if getattr(args, a) is not None}
    if grid:
        o["grid"] = grid
    for key in ("scenario", "out", "threads"):
        if getattr(args, key) is not None:
            o[key] = getattr(args, key)
    return o


def _fail(code, kind, exc):
    record = {"status": "error", "exit_code": code, "kind": kind,
              "type": type(exc).__name__, "message": str(exc)}
    print(json.dumps(record, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = ExperimentConfig.load(args.config, _overrides(args))
    except (ConfigError, ParameterError, KeyError, TypeError, ValueError) as exc:
        return _fail(2, "validation", exc)
    out = config.raw["out"]
    try:
        os.makedirs(out, exist_ok=True)
        COMMANDS[args.command](config, out)
    except (ConfigError, ParameterError) as exc:
        return _fail(2, "validation", exc)
    except Exception as exc:  # every module error becomes a runtime failure record
        return _fail(1, "runtime", exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
