"""Command-line front end.

Every subcommand reads an optional JSON config, applies ``--set key=value``
overrides (values parsed as JSON when possible) and writes
``<command>-<hash>.json`` and, where there is tabular output,
``<command>-<hash>.csv`` into the output directory.  ``hash`` is taken
from the canonical JSON of the resolved config, so identical configs map
to identical file names.

Exit codes: 0 success, 2 invalid config or usage, 3 numerical failure
(a JSON error record is written and printed).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields

import numpy as np

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
COMMANDS = ("eig", "robin", "gammastar", "map", "ansatz-error", "nonlocal", "evolve", "threshold")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Resolved configuration of one run.

    ``to_json`` is canonical (sorted keys, fixed separators), and
    ``from_json(to_json(c)) == c``.
    """

    command: str
    domain: dict = field(default_factory=lambda: {"kind": "unit-ball", "mode": "radial", "resolution": 1001})
    K: int = 8
    tol: float = 1e-8
    method: str = "grid"
    gamma: float | None = None
    gammas: list = field(default_factory=lambda: [0.5, 1.0, 2.0, 4.0, 6.0, 8.0])
    q: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    qs: list = field(default_factory=list)
    taus: list = field(default_factory=list)
    mus: list = field(default_factory=lambda: [0.1, 0.05, 0.02, 0.01, 0.005])
    gamma_factor: float = 1.0
    t0: float = 1.0
    T: float = 3.0
    dt: float = 2e-3
    l1: float = 2 / 3
    true_history: bool = True
    mu0: float = 0.05
    edge_track: bool = True
    alphas: list = field(default_factory=lambda: [0.01, 1.0, 2.0, 3.0, 5.0])
    evolve: dict = field(default_factory=dict)
    out: str = "."
    cache: str | None = None
    jobs: int = 1

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.method not in ("grid", "series"):
            raise ConfigError("method must be 'grid' or 'series'")
        if int(self.K) < 1 or int(self.jobs) < 1:
            raise ConfigError("K and jobs must be positive")
        if len(self.q) != 3:
            raise ConfigError("q must have three coordinates")
        return self

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        bad = set(d) - names
        if bad:
            raise ConfigError(f"unknown config keys: {sorted(bad)}")
        return cls(**d)

    def key(self) -> str:
        d = asdict(self)
        for k in ("out", "cache", "jobs"):
            d.pop(k)
        return hashlib.sha1(json.dumps(d, sort_keys=True).encode()).hexdigest()[:12]


# ---------------------------------------------------------------- helpers

def _domain(cfg):
    from .domain import DomainSpec, build_domain

    return build_domain(DomainSpec(**cfg.domain))


def _spectrum(cfg, dom, K=None):
    from .spectral import eigenpairs

    return eigenpairs(dom, K or cfg.K, tol=cfg.tol, cache_dir=cfg.cache)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        return float(x) if np.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _write(cfg, summary: dict, header=None, rows=None) -> dict:
    os.makedirs(cfg.out, exist_ok=True)
    stem = os.path.join(cfg.out, f"{cfg.command}-{cfg.key()}")
    rec = {"command": cfg.command, "config": json.loads(cfg.to_json()), "result": _jsonable(summary)}
    with open(stem + ".json", "w") as f:
        json.dump(rec, f, indent=2, sort_keys=True)
        f.write("\n")
    if rows is not None:
        with open(stem + ".csv", "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return rec


# ---------------------------------------------------------------- commands

def cmd_eig(cfg):
    dom = _domain(cfg)
    sp = _spectrum(cfg, dom)
    rows = [(k + 1, float(l), float(r)) for k, (l, r) in enumerate(zip(sp.lam, sp.residual))]
    return _write(cfg, {"lambda1": sp.lam1, "lambda": sp.lam, "residual_max": float(sp.residual.max())},
                  ["k", "lambda", "residual"], rows)


def cmd_robin(cfg):
    from .green import robin

    dom = _domain(cfg)
    sp = _spectrum(cfg, dom, 1) if cfg.method == "grid" else None
    q = np.asarray(cfg.q, float)
    rows = [(g, robin(dom, sp, g, q, method=cfg.method)) for g in cfg.gammas]
    return _write(cfg, {"q": q, "R": [r[1] for r in rows]}, ["gamma", "R"], rows)


def cmd_gammastar(cfg):
    from .green import gamma_star

    dom = _domain(cfg)
    sp = _spectrum(cfg, dom, 1) if cfg.method == "grid" else None
    lam1 = sp.lam1 if sp is not None else np.pi ** 2 / dom.spec.R ** 2
    gs = gamma_star(dom, sp, cfg.q, method=cfg.method)
    return _write(cfg, {"gamma_star": gs.gamma, "lambda1": lam1, "admissible": bool(3 * gs.gamma < lam1),
                        "margin": lam1 - 3 * gs.gamma})


def cmd_map(cfg):
    from .green import gamma_star_map

    dom = _domain(cfg)
    sp = _spectrum(cfg, dom, 1) if cfg.method == "grid" else None
    qs = np.asarray(cfg.qs or [cfg.q], float)
    m = gamma_star_map(dom, sp, qs, method=cfg.method, jobs=cfg.jobs)
    gs = np.asarray(m["gamma_star"], float)
    rows = [(*q, g) for q, g in zip(qs, gs)]
    return _write(cfg, {k: v for k, v in m.items()}, ["x", "y", "z", "gamma_star"], rows)


def cmd_ansatz_error(cfg):
    from .ansatz import center_error, scaling_exponent
    from .green import gamma_star, robin

    dom = _domain(cfg)
    sp = _spectrum(cfg, dom, 1) if cfg.method == "grid" else None
    gs = gamma_star(dom, sp, cfg.q, method=cfg.method).gamma
    g = cfg.gamma if cfg.gamma is not None else cfg.gamma_factor * gs
    R = 0.0 if g == gs else robin(dom, sp, g, cfg.q, method=cfg.method)
    mus = np.asarray(cfg.mus, float)
    err = center_error(mus, g, R)
    rows = list(zip(mus, err))
    return _write(cfg, {"gamma": g, "gamma_star": gs, "R": R, "exponent": scaling_exponent(mus, err)},
                  ["mu", "center_error"], rows)


def cmd_nonlocal(cfg):
    from .green import gamma_star
    from .nonlocal_op import i_tau_table, round_trip, sigma_kernel

    dom = _domain(cfg)
    sp = _spectrum(cfg, dom)
    q = np.asarray(cfg.q, float)
    if cfg.gamma is None:
        g = gamma_star(dom, sp, q, method=cfg.method).gamma
        R = 0.0
    else:
        g, R = cfg.gamma, None
    tab = i_tau_table(sp, g, q, R=R, method=cfg.method)
    sk = sigma_kernel(sp, g, q, R=tab.R)
    rt = round_trip(tab, sk, l1=cfg.l1, t0=cfg.t0, T=cfg.T, dt=cfg.dt, true_history=cfg.true_history)
    rows = list(zip(rt["t"], rt["J"], rt["Lambda_rec"], rt["dLambda_rec"], rt["dLambda"]))
    summ = {"gamma": g, "R": tab.R, "switch": tab.switch, "jump": tab.jump, "c_inf": sk.c_inf,
            "a": sk.a, "small_tau_exponent": sk.small_tau_exponent, "decay_rate": sk.decay_rate,
            "rel_error": rt["rel_error"], "I_table": tab.rows()}
    return _write(cfg, summ, ["t", "h", "Lambda", "dLambda", "dLambda_input"], rows)


def _evolve_cfg(cfg):
    from .evolve import EvolveConfig

    try:
        return EvolveConfig(**cfg.evolve).validate()
    except (TypeError, ValueError) as ex:
        raise ConfigError(f"evolve: {ex}") from ex


def cmd_evolve(cfg):
    from .ansatz import BubbleParams, u1
    from .evolve import edge_tracking, evolve, rate_estimate
    from .green import gamma_star, regular_part

    dom = _domain(cfg)
    ec = _evolve_cfg(cfg)
    sp = _spectrum(cfg, dom, 1) if cfg.method == "grid" else None
    q = np.asarray(cfg.q, float)
    gs = gamma_star(dom, sp, q, method="grid").gamma
    gd = regular_part(dom, sp, gs, q)
    u0 = np.maximum(u1(gd, BubbleParams(cfg.mu0, tuple(q), gs), dom.points), 0)
    tr = edge_tracking(dom, u0, ec, cfg.T) if cfg.edge_track else evolve(dom, u0, ec)
    summ = {"status": tr.status, "gamma_star": gs, "T_est": tr.T_est, "t_end": tr.times[-1]}
    try:
        summ["rate"] = rate_estimate(tr, (0.0, tr.times[-1]))
        summ["predicted"] = 2 * gs
    except ValueError as ex:
        summ["rate_error"] = str(ex)
    return _write(cfg, summ, ["t", "sup_norm", "mu_hat", "xi_x", "xi_y", "xi_z", "energy", "dt"], tr.rows())


def cmd_threshold(cfg):
    from .evolve import kaplan_dichotomy, kaplan_threshold

    dom = _domain(cfg)
    sp = _spectrum(cfg, dom, 2)
    phi = np.maximum(sp.phi[:, 0], 0)
    ec = _evolve_cfg(cfg)
    kd = kaplan_dichotomy(dom, phi, cfg.alphas, ec)
    summ = {"bracket": kd["bracket"], "monotone": kd["monotone"], "undecided": kd["undecided"],
            "kaplan_bound": kaplan_threshold(dom, sp.phi[:, 0], sp.lam1, phi), "lambda1": sp.lam1}
    rows = [(r["alpha"], r["status"], r["rate"], r["T_est"]) for r in kd["runs"]]
    return _write(cfg, summ, ["alpha", "status", "decay_rate", "T_est"], rows)


HANDLERS = {"eig": cmd_eig, "robin": cmd_robin, "gammastar": cmd_gammastar, "map": cmd_map,
            "ansatz-error": cmd_ansatz_error, "nonlocal": cmd_nonlocal, "evolve": cmd_evolve,
            "threshold": cmd_threshold}


# ---------------------------------------------------------------- entry point

def _parse_value(v: str):
    try:
        return json.loads(v)
    except json.JSONDecodeError:
        return v


def _set(d: dict, key: str, value):
    parts = key.split(".")
    for p in parts[:-1]:
        d = d.setdefault(p, {})
    d[parts[-1]] = value


def build_parser():
    p = argparse.ArgumentParser(prog="bubbling", description=__doc__.split("\n")[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry; dotted keys reach into domain/evolve")
    p.add_argument("--out", help="output directory")
    p.add_argument("--jobs", type=int, help="worker processes for sweeps")
    p.add_argument("--no-cache", action="store_true", help="ignore the spectrum cache")
    return p


def resolve_config(args) -> RunConfig:
    d = {}
    if args.config:
        with open(args.config) as f:
            d = json.load(f)
        if not isinstance(d, dict):
            raise ConfigError("config file must hold a JSON object")
    d["command"] = args.command
    for s in args.set:
        if "=" not in s:
            raise ConfigError(f"--set expects KEY=VALUE, got {s!r}")
        k, v = s.split("=", 1)
        _set(d, k, _parse_value(v))
    if args.out:
        d["out"] = args.out
    if args.jobs:
        d["jobs"] = args.jobs
    d.setdefault("cache", os.environ.get("BUBBLING_CACHE"))
    if args.no_cache:
        d["cache"] = None
    return RunConfig.from_dict(d).validate()


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as ex:
        return int(ex.code or 0) and EXIT_USAGE
    try:
        cfg = resolve_config(args)
    except (ConfigError, TypeError, ValueError, OSError) as ex:
        parser.print_usage(sys.stderr)
        print(json.dumps({"error": "config", "message": str(ex)}), file=sys.stderr)
        return EXIT_USAGE
    try:
        rec = HANDLERS[cfg.command](cfg)
    except (ConfigError, TypeError, KeyError) as ex:
        parser.print_usage(sys.stderr)
        print(json.dumps({"error": "config", "message": str(ex)}), file=sys.stderr)
        return EXIT_USAGE
    except Exception as ex:  # numerical failure
        err = {"error": type(ex).__name__, "message": str(ex), "command": cfg.command}
        if hasattr(ex, "residual"):
            err["residual"] = _jsonable(ex.residual)
        os.makedirs(cfg.out, exist_ok=True)
        with open(os.path.join(cfg.out, f"{cfg.command}-{cfg.key()}-error.json"), "w") as f:
            json.dump(err, f, indent=2, sort_keys=True)
        print(json.dumps(err), file=sys.stderr)
        return EXIT_NUMERIC
    brief = {k: v for k, v in rec["result"].items() if not isinstance(v, list) or len(v) <= 16}
    print(json.dumps(brief, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
