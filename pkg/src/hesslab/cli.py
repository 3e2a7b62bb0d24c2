"""Batch front-end: ``hesslab {solve,check,estimate,blowdown,sweep,audit}``.

Settings come from an optional JSON file (``--config``) overridden by flags.
Everything is validated before any computation starts. Each run writes
``report.json`` plus CSV plot data into ``--out``; files are staged under
temporary names and renamed only once the whole run has succeeded.

Exit codes: 0 success, 2 a checked property failed, 1 operational error.
"""

from __future__ import annotations

import argparse
import copy
import datetime as _dt
import itertools
import json
import logging
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from hesslab import __version__
from hesslab.audit import (
    cns_implies_d_suite,
    k_hessian_bridge_suite,
    newton_suite,
    operator_audit,
    operator_family,
    pma_bridge_suite,
    splitting_suite,
)
from hesslab.conditions import (
    check_cns,
    check_condition_d,
    check_k_hessian_lower_bound,
    check_pma_partial_sums,
    field_condition_scan,
)
from hesslab.grid import DomainSpec, check_spacing
from hesslab.harness import (
    blowdown,
    blowdown_field,
    default_exponents,
    hessian_equivariance_defect,
    liouville_probe,
    quadratic_source,
    refinement_study,
)
from hesslab.operators import OperatorSpec
from hesslab.solver import SolverError, solve

log = logging.getLogger("hesslab")

EXIT_OK, EXIT_OPERATIONAL, EXIT_VERIFY = 0, 1, 2
COMMANDS = ("solve", "check", "estimate", "blowdown", "sweep", "audit")
OPERATORS = ("ma", "khessian", "quotient", "pma")
INVARIANCE_TOL = 1e-12
EQUIVARIANCE_TOL = 1e-10

DEFAULTS = {
    "op": "ma",
    "k": None,
    "l": None,
    "p": None,
    "n": 2,
    "domain": "ball",
    "h": 1.0 / 32.0,
    "h_list": None,
    "tol": 1e-10,
    "max_iter": 60,
    "alpha": None,
    "beta": None,
    "condition": None,
    "D1": None,
    "D2": None,
    "R": None,
    "A": None,
    "lam": None,
    "seed": 0,
    "samples": 10000,
    "source": "quadratic",
    "a": 1.0,
    "r_list": [1.0, 2.0, 4.0, 8.0],
    "growth_C": None,
    "out": "out",
    "workers": 1,
    "sweep": None,
    "run": "solve",
}

CSV_COLUMNS = {
    "solve": {"field.csv": "node coordinates x[,y[,z]] and the solution value u (interior and on-boundary nodes)"},
    "check": {"field.csv": "node coordinates and u of the field that was scanned"},
    "estimate": {
        "table.csv": "h, functional_sup, sup_neg_u, sup_gradient_term, sup_hessian_term, "
        "stabilization_ratio, c0_holds, subsolution_gap, residual_max, newton_iterations"
    },
    "blowdown": {
        "table.csv": "R, diameter, diameter_bound, within_bound, omega_nodes, omega_prime_nodes, "
        "sup_hessian_omega_prime, invariance_defect, subset_ok"
    },
}


class ConfigError(ValueError):
    pass


# --- configuration ---------------------------------------------------------


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hesslab", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", type=Path, help="JSON file with settings; flags override it")
    ap.add_argument("--op", choices=OPERATORS)
    ap.add_argument("--k", type=int)
    ap.add_argument("--l", type=int)
    ap.add_argument("--p", type=int)
    ap.add_argument("--n", type=int)
    ap.add_argument("--domain", choices=("ball", "box"))
    ap.add_argument("--h", type=float)
    ap.add_argument("--h-list", dest="h_list", type=_floats, help="comma separated, strictly decreasing")
    ap.add_argument("--tol", type=float)
    ap.add_argument("--max-iter", dest="max_iter", type=int)
    ap.add_argument("--alpha", type=float)
    ap.add_argument("--beta", type=float)
    ap.add_argument("--condition", help="comma separated subset of d,cns,khess,pma")
    ap.add_argument("--D1", type=float)
    ap.add_argument("--D2", type=float)
    ap.add_argument("--R", type=float)
    ap.add_argument("--A", type=float)
    ap.add_argument("--lam", type=_floats, help="check one eigenvalue vector instead of a solved field")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--samples", type=int)
    ap.add_argument("--source", choices=("quadratic", "field"), help="blowdown input")
    ap.add_argument("--a", type=float, help="blowdown quadratic a|x|^2/2")
    ap.add_argument("--r-list", dest="r_list", type=_floats)
    ap.add_argument("--growth-C", dest="growth_C", type=float)
    ap.add_argument("--run", choices=[c for c in COMMANDS if c != "sweep"], help="command run by each sweep point")
    ap.add_argument("--out", type=str)
    ap.add_argument("--workers", type=int)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults, then the JSON file, then explicit flags."""
    cfg = copy.deepcopy(DEFAULTS)
    if args.config is not None:
        try:
            loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        loaded = {k.replace("-", "_"): v for k, v in loaded.items()}
        unknown = set(loaded) - set(DEFAULTS) - {"command"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    cfg["command"] = args.command
    if isinstance(cfg.get("condition"), str):
        cfg["condition"] = [c.strip() for c in cfg["condition"].split(",") if c.strip()]
    return cfg


def operator_from(cfg: dict) -> OperatorSpec:
    kind = cfg["op"]
    if kind not in OPERATORS:
        raise ConfigError(f"unknown operator {kind!r}")
    try:
        if kind == "khessian" and cfg["k"] is None:
            raise ValueError("khessian needs --k")
        if kind == "quotient" and (cfg["k"] is None or cfg["l"] is None):
            raise ValueError("quotient needs --k and --l")
        if kind == "pma" and cfg["p"] is None:
            raise ValueError("pma needs --p")
        return OperatorSpec(
            kind,
            int(cfg["n"]),
            k=cfg["k"] if kind in ("khessian", "quotient") else None,
            l=cfg["l"] if kind == "quotient" else None,
            p=cfg["p"] if kind == "pma" else None,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def domain_from(cfg: dict) -> DomainSpec:
    try:
        n = int(cfg["n"])
        if cfg["domain"] == "ball":
            return DomainSpec.unit_ball(n)
        if cfg["domain"] == "box":
            return DomainSpec.unit_box(n)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    raise ConfigError(f"unknown domain {cfg['domain']!r}")


def _check_writable(out: Path) -> None:
    probe = out
    while not probe.exists():
        if probe.parent == probe:
            break
        probe = probe.parent
    if not probe.is_dir() or not os.access(probe, os.W_OK):
        raise ConfigError(f"output path {out} is not writable")


def _positive(cfg: dict, key: str) -> None:
    v = cfg[key]
    if not isinstance(v, (int, float)) or not math.isfinite(v) or not v > 0:
        raise ConfigError(f"{key} must be a positive number, got {v!r}")


def _check_grid(cfg: dict, domain: DomainSpec, h: float) -> None:
    try:
        check_spacing(domain, float(h))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"h={h!r}: {exc}") from exc


def validate(cfg: dict) -> None:
    """Reject inconsistent settings before any computation."""
    cmd = cfg["command"]
    if cmd not in COMMANDS:
        raise ConfigError(f"unknown command {cmd!r}")
    if not isinstance(cfg["out"], str) or not cfg["out"]:
        raise ConfigError("out must be a directory path")
    _check_writable(Path(cfg["out"]))
    if cmd == "sweep":
        _validate_sweep(cfg)
        return
    needs_op = cmd in ("solve", "check", "estimate") or (cmd == "blowdown" and cfg["source"] == "field")
    if cmd == "audit" and (cfg["k"] is not None or cfg["l"] is not None or cfg["p"] is not None or cfg["op"] != "ma"):
        operator_from(cfg)
    if cmd == "audit":
        if not isinstance(cfg["n"], int) or not 2 <= cfg["n"] <= 12:
            raise ConfigError("audit needs 2 <= n <= 12")
    if needs_op or (cmd == "check" and cfg["lam"] is not None):
        op = operator_from(cfg)
    if needs_op and not (cmd == "check" and cfg["lam"] is not None):
        dom = domain_from(cfg)
        if op.n != dom.dim:
            raise ConfigError(f"operator dimension {op.n} does not match a {dom.dim}D domain")
        _positive(cfg, "tol")
        if cmd == "estimate":
            hs = cfg["h_list"]
            if not hs or not all(isinstance(h, (int, float)) for h in hs):
                raise ConfigError("estimate needs --h-list")
            if any(b >= a for a, b in zip(hs, hs[1:])):
                raise ConfigError("h_list must be strictly decreasing")
            for h in hs:
                _check_grid(cfg, dom, h)
        else:
            _positive(cfg, "h")
            _check_grid(cfg, dom, cfg["h"])
    if cmd == "check":
        _validate_check(cfg, op)
    if cmd == "estimate":
        for key in ("alpha", "beta"):
            if cfg[key] is not None:
                _positive(cfg, key)
    if cmd == "blowdown":
        if not cfg["r_list"] or any(not (isinstance(r, (int, float)) and r > 0) for r in cfg["r_list"]):
            raise ConfigError("r_list must hold positive numbers")
        if cfg["growth_C"] is not None:
            _positive(cfg, "growth_C")
        if cfg["source"] == "quadratic":
            _positive(cfg, "a")
            if cfg["n"] not in (2, 3):
                raise ConfigError("blowdown works in dimension 2 or 3")
        elif cfg["source"] == "field":
            if cfg["growth_C"] is None:
                raise ConfigError("blowdown on a solved field needs --growth-C")
        else:
            raise ConfigError(f"unknown blowdown source {cfg['source']!r}")
    if cmd == "audit":
        if not isinstance(cfg["samples"], int) or cfg["samples"] < 10:
            raise ConfigError("samples must be an integer >= 10")
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigError("seed must be a nonnegative integer")


def _validate_check(cfg: dict, op: OperatorSpec) -> None:
    conds = cfg["condition"] or _default_conditions(op)
    for c in conds:
        if c not in ("d", "cns", "khess", "pma"):
            raise ConfigError(f"unknown condition {c!r}")
        if c == "d" and (cfg["D1"] is None or cfg["D2"] is None):
            raise ConfigError("condition d needs --D1 and --D2")
        if c == "cns" and cfg["R"] is None:
            raise ConfigError("condition cns needs --R")
        if c == "khess":
            if op.kind != "khessian" or op.k >= op.n:
                raise ConfigError("condition khess applies to the k-Hessian operator with k < n")
            if cfg["A"] is None or cfg["A"] < 0:
                raise ConfigError("condition khess needs --A >= 0")
        if c == "pma":
            if op.kind != "pma":
                raise ConfigError("condition pma applies to the p-Monge-Ampere operator")
            if cfg["A"] is None or cfg["A"] < 0:
                raise ConfigError("condition pma needs --A >= 0")
    if cfg["lam"] is not None and len(cfg["lam"]) != op.n:
        raise ConfigError(f"--lam has {len(cfg['lam'])} entries, operator needs {op.n}")
    cfg["condition"] = list(conds)


def _default_conditions(op: OperatorSpec) -> list[str]:
    return ["d"]


def _sweep_points(cfg: dict) -> list[dict]:
    axes = cfg["sweep"]
    if axes is None and cfg["h_list"]:
        axes = {"h": cfg["h_list"]}
    if not isinstance(axes, dict) or not axes:
        raise ConfigError("sweep needs a 'sweep' object mapping keys to value lists (or --h-list)")
    for key, vals in axes.items():
        if key not in DEFAULTS or key in ("sweep", "out", "workers", "run"):
            raise ConfigError(f"cannot sweep over {key!r}")
        if not isinstance(vals, list) or not vals:
            raise ConfigError(f"sweep axis {key!r} needs a non-empty list")
    keys = sorted(axes)
    points = []
    for combo in itertools.product(*(axes[k] for k in keys)):
        sub = {k: v for k, v in cfg.items() if k not in ("sweep",)}
        sub.update(dict(zip(keys, combo)))
        sub["command"] = cfg["run"]
        sub["sweep"] = None
        points.append(sub)
    return points


def _validate_sweep(cfg: dict) -> None:
    if cfg["run"] not in COMMANDS or cfg["run"] == "sweep":
        raise ConfigError("sweep runs one of solve, check, estimate, blowdown, audit")
    if not isinstance(cfg["workers"], int) or cfg["workers"] < 1:
        raise ConfigError("workers must be a positive integer")
    points = _sweep_points(cfg)
    for i, sub in enumerate(points):
        try:
            validate(sub)
        except ConfigError as exc:
            raise ConfigError(f"sweep point {i}: {exc}") from exc


# --- output ----------------------------------------------------------------


def to_jsonable(obj):
    """Plain JSON types; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dump_json(payload: dict) -> str:
    return json.dumps(to_jsonable(payload), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def csv_text(header: list[str], rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_csv_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def _csv_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v)) if math.isfinite(v) else ""
    return str(v)


class Staging:
    """Collects output files and moves them into place only on ``commit``."""

    def __init__(self, out: Path):
        self.out = out
        self.files: dict[str, str] = {}

    def add(self, name: str, text: str) -> None:
        self.files[name] = text

    def commit(self) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        staged = []
        try:
            for name, text in self.files.items():
                fd, tmp = tempfile.mkstemp(prefix=f".{name}.", suffix=".tmp", dir=self.out)
                with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                    fh.write(text)
                staged.append((tmp, self.out / name))
        except BaseException:
            for tmp, _ in staged:
                Path(tmp).unlink(missing_ok=True)
            raise
        for tmp, dest in staged:
            os.replace(tmp, dest)


def _report(cfg: dict, result: dict, failures: list[str]) -> dict:
    return {
        "header": {
            "tool": "hesslab",
            "version": __version__,
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
            "csv_columns": CSV_COLUMNS.get(cfg["command"], {}),
        },
        "config": cfg,
        "command": cfg["command"],
        "verified": not failures,
        "failures": failures,
        "result": result,
    }


def _field_csv(field) -> str:
    names, rows = field.dump_rows()
    return csv_text(names, rows.tolist())


# --- commands --------------------------------------------------------------


def cmd_solve(cfg: dict, stage: Staging) -> list[str]:
    op, dom = operator_from(cfg), domain_from(cfg)
    rep = solve(op, dom, cfg["h"], tol=cfg["tol"], max_iter=cfg["max_iter"])
    failures = []
    if not rep.residual_max <= cfg["tol"]:
        failures.append(f"residual {rep.residual_max:.3e} exceeds tol {cfg['tol']:g}")
    if not rep.admissible:
        failures.append(f"solution left the cone (min margin {rep.min_margin:.3e})")
    stage.add("field.csv", _field_csv(rep.field))
    stage.add("report.json", dump_json(_report(cfg, {"operator": op.to_dict(), "domain": dom.to_dict(), "solve": rep.summary()}, failures)))
    return failures


def _pointwise_check(op: OperatorSpec, lam: np.ndarray, which: str, cfg: dict):
    if which == "d":
        return check_condition_d(op, lam, cfg["D1"], cfg["D2"], normalize=True)
    if which == "cns":
        return check_cns(op.cone, lam, cfg["R"])
    if which == "khess":
        return check_k_hessian_lower_bound(lam, op.k, cfg["A"])
    return check_pma_partial_sums(lam, op.p, cfg["A"])


def _scan_params(which: str, cfg: dict) -> dict:
    if which == "d":
        return {"D1": cfg["D1"], "D2": cfg["D2"]}
    if which == "cns":
        return {"R": cfg["R"]}
    return {"A": cfg["A"]}


def cmd_check(cfg: dict, stage: Staging) -> list[str]:
    op = operator_from(cfg)
    reports = {}
    result: dict = {"operator": op.to_dict()}
    if cfg["lam"] is not None:
        lam = np.asarray(cfg["lam"], dtype=float)
        for which in cfg["condition"]:
            reports[which] = _pointwise_check(op, lam, which, cfg)
        result["spectrum"] = lam.tolist()
    else:
        dom = domain_from(cfg)
        rep = solve(op, dom, cfg["h"], tol=cfg["tol"], max_iter=cfg["max_iter"])
        for which in cfg["condition"]:
            reports[which] = field_condition_scan(op, rep.field, which, _scan_params(which, cfg))
        result["domain"] = dom.to_dict()
        result["solve"] = rep.summary()
        stage.add("field.csv", _field_csv(rep.field))
    failures = [f"condition {w} does not hold (worst margin {r.worst_margin:.3e})" for w, r in reports.items() if not r.satisfied]
    result["conditions"] = {w: r.to_dict() for w, r in reports.items()}
    stage.add("report.json", dump_json(_report(cfg, result, failures)))
    return failures


def cmd_estimate(cfg: dict, stage: Staging) -> list[str]:
    op, dom = operator_from(cfg), domain_from(cfg)
    rows = refinement_study(op, dom, cfg["h_list"], cfg["alpha"], cfg["beta"], tol=cfg["tol"])
    failures = []
    table = []
    for r in rows:
        e = r.report
        if not math.isfinite(e.functional_sup):
            failures.append(f"functional is not finite at h={e.h:g}")
        if not r.c0_holds:
            failures.append(f"C0 bound fails at h={e.h:g}")
        if r.subsolution_gap < -cfg["tol"]:
            failures.append(f"solution dips below the subsolution at h={e.h:g} (gap {r.subsolution_gap:.3e})")
        table.append(
            [e.h, e.functional_sup, e.sup_u, e.sup_gradient_term, e.sup_hessian_term, e.stabilization_ratio,
             r.c0_holds, r.subsolution_gap, r.solve_summary["residual_max"], r.solve_summary["newton_iterations"]]
        )
    alpha, beta = default_exponents(op.n)
    result = {
        "operator": op.to_dict(),
        "domain": dom.to_dict(),
        "default_exponents": {"alpha": alpha, "beta": beta},
        "rows": [
            {**r.report.to_dict(), "c0_holds": r.c0_holds, "subsolution_gap": r.subsolution_gap,
             "solve": {k: v for k, v in r.solve_summary.items() if k != "history"}}
            for r in rows
        ],
        "last_stabilization_ratio": rows[-1].report.stabilization_ratio,
    }
    header = ["h", "functional_sup", "sup_neg_u", "sup_gradient_term", "sup_hessian_term", "stabilization_ratio",
              "c0_holds", "subsolution_gap", "residual_max", "newton_iterations"]
    stage.add("table.csv", csv_text(header, table))
    stage.add("report.json", dump_json(_report(cfg, result, failures)))
    return failures


def cmd_blowdown(cfg: dict, stage: Staging) -> list[str]:
    failures = []
    result: dict = {}
    if cfg["source"] == "quadratic":
        n = int(cfg["n"])
        src = quadratic_source(cfg["a"] * np.eye(n), growth_C=cfg["growth_C"], label=f"{cfg['a']:g}|x|^2/2")
        rep = blowdown(src, cfg["r_list"])
        rng = np.random.default_rng(cfg["seed"])
        pts = rng.uniform(-1.0, 1.0, (64, n))
        eq = max(hessian_equivariance_defect(src, R, pts) for R in cfg["r_list"])
        result["hessian_equivariance_defect"] = eq
        result["probe"] = liouville_probe(src).to_dict()
        worst = max(r.invariance_defect for r in rep.rows)
        if worst > INVARIANCE_TOL:
            failures.append(f"R-invariance defect {worst:.3e} exceeds {INVARIANCE_TOL:g}")
        if eq > EQUIVARIANCE_TOL:
            failures.append(f"Hessian equivariance defect {eq:.3e} exceeds {EQUIVARIANCE_TOL:g}")
    else:
        op, dom = operator_from(cfg), domain_from(cfg)
        solved = solve(op, dom, cfg["h"], tol=cfg["tol"], max_iter=cfg["max_iter"])
        rep = blowdown_field(solved.field, cfg["r_list"], cfg["growth_C"])
        result["operator"] = op.to_dict()
        result["domain"] = dom.to_dict()
        result["probe"] = liouville_probe(solved.field).to_dict()
    if not rep.ok:
        failures.append("a sublevel set exceeds the diameter bound or Omega'_R is not inside Omega_R")
    result["blowdown"] = rep.to_dict()
    cols = ["R", "diameter", "diameter_bound", "within_bound", "omega_nodes", "omega_prime_nodes",
            "sup_hessian_omega_prime", "invariance_defect", "subset_ok"]
    stage.add("table.csv", csv_text(cols, [[getattr(r, c) for c in cols] for r in rep.rows]))
    stage.add("report.json", dump_json(_report(cfg, result, failures)))
    return failures


def cmd_audit(cfg: dict, stage: Staging) -> list[str]:
    n, samples, seed = int(cfg["n"]), int(cfg["samples"]), int(cfg["seed"])
    explicit = cfg["op"] != "ma" or any(cfg[k] is not None for k in ("k", "l", "p"))
    ops = [operator_from(cfg)] if explicit else operator_family(n)
    rng = np.random.default_rng(seed)
    result: dict = {
        "samples": samples,
        "seed": seed,
        "splitting": splitting_suite(n, samples, rng),
        "newton": newton_suite(n, samples, rng),
        "operators": [operator_audit(op, samples, seed) for op in ops],
        "bridges": {},
    }
    bridge_n = max(1, samples // 10)
    for op in ops:
        key = op.label
        if op.kind != "quotient":
            result["bridges"][f"cns_implies_d {key}"] = cns_implies_d_suite(op, bridge_n, rng)
        if op.kind == "khessian" and op.k < n:
            result["bridges"][f"k_hessian_lower_bound {key}"] = k_hessian_bridge_suite(op.k, n, bridge_n, rng)
        if op.kind == "pma" and op.p >= 2:
            result["bridges"][f"pma_partial_sums {key}"] = pma_bridge_suite(op.p, n, bridge_n, rng)
    failures = []
    for name in ("splitting", "newton"):
        if result[name]["violations"]:
            failures.append(f"{name}: {result[name]['violations']} violations")
    for rep in result["operators"]:
        if rep["total_violations"]:
            failures.append(f"{OperatorSpec(**rep['operator']).label}: {rep['total_violations']} violations")
    for name, rep in result["bridges"].items():
        bad = rep["counterexamples"] + rep.get("gamma_k_minus_1_failures", 0)
        if bad:
            failures.append(f"{name}: {bad} counterexamples")
    stage.add("report.json", dump_json(_report(cfg, result, failures)))
    return failures


HANDLERS = {
    "solve": cmd_solve,
    "check": cmd_check,
    "estimate": cmd_estimate,
    "blowdown": cmd_blowdown,
    "audit": cmd_audit,
}


def run_single(cfg: dict) -> int:
    """Run one validated non-sweep config; return the exit code."""
    stage = Staging(Path(cfg["out"]))
    try:
        failures = HANDLERS[cfg["command"]](cfg, stage)
        stage.commit()
    except (SolverError, ValueError, ArithmeticError, OSError) as exc:
        log.error("%s failed: %s", cfg["command"], exc)
        return EXIT_OPERATIONAL
    for f in failures:
        log.warning("verification failure: %s", f)
    return EXIT_VERIFY if failures else EXIT_OK


def _sweep_worker(sub: dict) -> int:
    return run_single(sub)


def run_sweep(cfg: dict) -> int:
    out = Path(cfg["out"])
    points = _sweep_points(cfg)
    for i, sub in enumerate(points):
        sub["out"] = str(out / f"run_{i:03d}")
    if cfg["workers"] > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=cfg["workers"]) as pool:
            codes = list(pool.map(_sweep_worker, points))
    else:
        codes = [run_single(sub) for sub in points]
    index = {
        "header": {"tool": "hesslab", "version": __version__,
                   "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")},
        "config": cfg,
        "runs": [
            {"index": i, "config": sub, "exit_code": code,
             "report": f"run_{i:03d}/report.json" if code != EXIT_OPERATIONAL else None}
            for i, (sub, code) in enumerate(zip(points, codes))
        ],
    }
    stage = Staging(out)
    stage.add("index.json", dump_json(index))
    try:
        stage.commit()
    except OSError as exc:
        log.error("cannot write sweep index: %s", exc)
        return EXIT_OPERATIONAL
    if EXIT_OPERATIONAL in codes:
        return EXIT_OPERATIONAL
    return EXIT_VERIFY if EXIT_VERIFY in codes else EXIT_OK


def run(cfg: dict) -> int:
    validate(cfg)
    return run_sweep(cfg) if cfg["command"] == "sweep" else run_single(cfg)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OPERATIONAL if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        return run(cfg)
    except ConfigError as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_OPERATIONAL


if __name__ == "__main__":
    sys.exit(main())
