"""Command-line front end.

Every experiment writes CSV (comma separated, header row, LF endings) or
JSON, followed by a manifest ``<output>.manifest.json`` that records the
resolved configuration, its hash, the seed, library versions and the
SHA-256 of every file written.

Exit codes: 0 on success, 2 when ``--assert`` is set and a contract check
fails, 1 on any operational error (bad configuration, missing file,
engine failure).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import platform
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

OUTPUT_DIR_ENV = "GAUSSEXT_OUTPUT_DIR"


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists one message per offending field."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class ContractViolation(RuntimeError):
    pass


# -- typed configuration ------------------------------------------------------


@dataclass(frozen=True)
class Key:
    kind: str  # int, float, ints, floats, str, bool
    lo: Optional[float] = None
    hi: Optional[float] = None
    choices: Optional[tuple] = None
    help: str = ""


SUBCOMMANDS = ("norms", "coarea", "extend-cost", "reflect", "bv-ibp-check", "bv-semivar", "bv-lambda-indicator",
               "bv-extend-zero", "product", "all")

SCHEMA: dict[str, Key] = {
    "subcommand": Key("str", choices=SUBCOMMANDS, help="experiment to run (config files only)"),
    "p": Key("floats", 1.0, 64.0, help="Sobolev exponent(s)"),
    "m": Key("ints", 2, 64, help="hat-function indices"),
    "tol": Key("float", 1e-14, 1e-2, help="quadrature or solver tolerance"),
    "res": Key("int", 16, 4096, help="grid cells per axis"),
    "t_samples": Key("int", 16, 8192, help="levels for the coarea integral"),
    "seed": Key("int", 0, 2 ** 63 - 1, help="master seed"),
    "samples": Key("int", 2, 10 ** 8, help="Monte Carlo samples"),
    "kmax": Key("int", 3, 6, help="largest schedule index (m = 2^k)"),
    "damping": Key("str", choices=("geometric", "inverse-square"), help="coefficient damping"),
    "out": Key("str", help="output file (or directory for 'all')"),
    "assert": Key("bool", help="exit 2 if a contract check fails"),
    "domain": Key("str", help="domain as JSON text or a path to a JSON file"),
    "direction": Key("floats", -1e6, 1e6, help="unit direction h"),
    "value": Key("float", -1e6, 1e6, help="constant function value"),
    "harmonic": Key("int", 1, 64, help="use the harmonic atom family with this many atoms"),
    "atoms": Key("str", help="JSON file with {'dim': d, 'atoms': [[point..., value...], ...]}"),
    "cells": Key("int", 8, 1 << 16, help="boundary cells"),
}

DEFAULTS: dict[str, dict[str, Any]] = {
    "norms": {"p": [1.0, 2.0, 4.0], "m": [4, 8, 16, 32], "tol": 1e-8, "out": "norms.csv"},
    "coarea": {"m": [4, 8], "res": 512, "t_samples": 256, "out": "coarea.csv"},
    "extend-cost": {"m": [4, 8, 16], "p": [2.0], "res": 1024, "tol": 1e-8, "out": "cost.csv"},
    "reflect": {"p": [1.0, 2.0, 4.0], "tol": 1e-9, "out": "reflect.csv"},
    "bv-ibp-check": {"out": "ibp.csv"},
    "bv-semivar": {"harmonic": 3, "out": "semivar.json"},
    "bv-lambda-indicator": {"domain": '{"kind": "disc", "center": [0, 0], "radius": 1}', "cells": 1024,
                            "out": "lambda_indicator.json"},
    "bv-extend-zero": {"domain": '{"kind": "disc", "center": [0, 0], "radius": 1}', "value": 0.5, "cells": 1024,
                       "out": "extend_zero.json"},
    "product": {"p": [2.0], "kmax": 4, "seed": 7, "res": 1024, "tol": 1e-8, "samples": 100000,
                "damping": "geometric", "out": "table.csv"},
    "all": {"out": "results", "res": 1024, "seed": 7},
}
COMMON = {"seed": 0, "assert": False}


def convert(key: str, raw: Any) -> Any:
    """Convert and bound-check one value; raise ``ValueError`` with a reason."""
    spec = SCHEMA[key]
    if spec.kind == "bool":
        if isinstance(raw, bool):
            return raw
        s = str(raw).strip().lower()
        if s in ("1", "true", "yes", "on"):
            return True
        if s in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if spec.kind == "str":
        v = str(raw).strip()
        if len(v) >= 2 and v[0] == v[-1] and v[0] in "\"'":
            v = v[1:-1]
        if spec.choices and v not in spec.choices:
            raise ValueError(f"must be one of {', '.join(spec.choices)}")
        return v
    scalar = float if spec.kind in ("float", "floats") else int
    items = raw if isinstance(raw, (list, tuple)) else [x for x in str(raw).replace(" ", "").split(",") if x]
    out = []
    for x in items:
        try:
            v = scalar(x) if scalar is float else int(str(x), 10)
        except ValueError:
            raise ValueError(f"expected {scalar.__name__} values, got {x!r}") from None
        if scalar is float and not math.isfinite(v):
            raise ValueError("values must be finite")
        if (spec.lo is not None and v < spec.lo) or (spec.hi is not None and v > spec.hi):
            raise ValueError(f"{v} outside [{spec.lo}, {spec.hi}]")
        out.append(v)
    if not out:
        raise ValueError("empty value")
    if spec.kind in ("int", "float"):
        if len(out) != 1:
            raise ValueError("expected a single value")
        return out[0]
    return out


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines (``#`` comments); unknown keys are errors."""
    raw, errors = {}, []
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {n}: expected 'key = value'")
            continue
        k, v = (s.strip() for s in line.split("=", 1))
        k = k.replace("-", "_")
        if k not in SCHEMA:
            errors.append(f"line {n}: unknown key '{k}'")
            continue
        raw[k] = v
    typed = {}
    for k, v in raw.items():
        try:
            typed[k] = convert(k, v)
        except ValueError as e:
            errors.append(f"{k}: {e}")
    if errors:
        raise ConfigError(errors)
    return typed


def load_config(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    return parse_config_text(p.read_text())


def resolve(subcommand: str, file_values: dict, flag_values: dict) -> dict:
    """Defaults, then the config file, then flags."""
    cfg = dict(COMMON)
    cfg.update(DEFAULTS.get(subcommand, {}))
    cfg.update({k: v for k, v in file_values.items() if k != "subcommand"})
    errors = []
    for k, v in flag_values.items():
        try:
            cfg[k] = convert(k, v)
        except ValueError as e:
            errors.append(f"--{k.replace('_', '-')}: {e}")
    if errors:
        raise ConfigError(errors)
    cfg["subcommand"] = subcommand
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def output_path(name: str) -> Path:
    p = Path(name)
    if not p.is_absolute():
        base = os.environ.get(OUTPUT_DIR_ENV)
        if base:
            p = Path(base) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def versions() -> dict:
    import scipy

    from . import __version__

    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "gaussext": __version__}


def write_manifest(path: Path, cfg: dict, outputs: list, checks: dict) -> Path:
    man = {"config": cfg, "config_sha256": config_hash(cfg), "seed": cfg.get("seed"), "versions": versions(),
           "outputs": [{"path": str(o), "sha256": sha256_file(o)} for o in outputs], "checks": checks}
    mpath = path.with_name(path.name + ".manifest.json")
    mpath.write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")
    return mpath


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# -- experiments ------------------------------------------------------------------


def run_norms(cfg: dict):
    from .norms import scaling_exponent, write_scaling_csv

    fits = [scaling_exponent(p, cfg["m"], cfg["tol"]) for p in cfg["p"]]
    out = output_path(cfg["out"])
    write_scaling_csv(fits, out)
    checks = {f"slope_p{f.p:g}": {"slope": f.slope, "expected": f.expected,
                                  "ok": abs(f.slope - f.expected) <= 0.15} for f in fits}
    for f in fits:
        print(f"p={f.p:g}: fitted slope {f.slope:.4f} (expected {f.expected:.4f})")
    return [out], checks


def _coarea_rows(m: int, res: int, t_samples: int):
    from .coarea import (GridFunction, coarea_identity_check, level_perimeter, separation_perimeter_bound,
                         sector_arc_length)
    from .domains import Rhomb
    from .extend import extension_candidates
    from .norms import HatFunction

    f = HatFunction(m)
    r = f.support_radius
    th = math.atan(1.0 / m)
    g = GridFunction.sample(f, (f.apex[0] - r, -r * math.sin(th)), (f.apex[0], r * math.sin(th)),
                            (res + 1, res + 1), region=Rhomb(m).contains)
    ident = coarea_identity_check(g, t_samples, breakpoints=(0.0, 1.0))
    rows = []
    for name, cand in extension_candidates(m).items():
        grid = candidate_grid(cand, m, res)
        for t in np.linspace(0.1, 0.9, 9):
            per = level_perimeter(grid, float(t)).perimeter
            base = m * sector_arc_length(m, float(t))
            # level radius 1 - t in rescaled units against the grid spacing 4 / res
            resolved = (1.0 - t) >= RESOLVED_CELLS * 4.0 / res
            rows.append((m, name, float(t), per, per / base, separation_perimeter_bound(m, float(t)) / base,
                         int(resolved)))
    return ident, rows


RESOLVED_CELLS = 10


def candidate_grid(func: Callable, m: int, res: int):
    """Sample a rescaled candidate on ``U`` in apex-offset physical coordinates."""
    from .coarea import GridFunction

    scale = float(m) ** -2
    inside = lambda p: np.hypot(p[:, 0], p[:, 1]) < 2.0 * scale
    return GridFunction.sample(lambda p: func(p / scale), (-2 * scale, -2 * scale), (2 * scale, 2 * scale),
                               (res + 1, res + 1), region=inside)


def run_coarea(cfg: dict):
    import csv

    out = output_path(cfg["out"])
    ident_path = out.with_name(out.stem + "_identity.csv")
    checks = {}
    all_rows = []
    with open(ident_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("m", "total_variation", "perimeter_integral", "residual"))
        for m in cfg["m"]:
            ident, rows = _coarea_rows(m, cfg["res"], cfg["t_samples"])
            w.writerow([m, repr(ident.total_variation), repr(ident.perimeter_integral), repr(ident.residual)])
            all_rows += rows
            checks[f"coarea_residual_m{m}"] = {"residual": ident.residual, "ok": ident.residual < 0.02}
            worst = min((r[4] - r[5] for r in rows if r[6]), default=math.nan)
            checks[f"perimeter_bound_m{m}"] = {"min_margin": worst, "ok": bool(worst >= 0.0)}
            print(f"m={m}: coarea residual {ident.residual:.2e}, smallest perimeter margin {worst:.3f}")
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("m", "candidate", "t", "perimeter", "ratio", "certified_ratio", "resolved"))
        for r in all_rows:
            w.writerow([r[0], r[1]] + [repr(float(v)) for v in r[2:6]] + [r[6]])
    return [out, ident_path], checks


def run_extend_cost(cfg: dict):
    from .extend import extension_ratio_sweep, write_cost_csv

    outs, checks = [], {}
    base = output_path(cfg["out"])
    for p in cfg["p"]:
        res = extension_ratio_sweep(cfg["m"], p, resolution=cfg["res"], tol=cfg["tol"], estimate_error=(p == 2))
        out = base if len(cfg["p"]) == 1 else base.with_name(f"{base.stem}_p{p:g}{base.suffix}")
        write_cost_csv(res, out)
        outs.append(out)
        for c in res.certificates:
            cp = out.with_name(f"{out.stem}_m{c.m}.json")
            cp.write_text(c.to_json() + "\n")
            outs.append(cp)
        need = 1.0 / p - (0.1 if p == 2 else 0.2)
        checks[f"cost_slope_p{p:g}"] = {"slope": res.slope, "required": need, "ok": res.slope >= need}
        checks[f"cost_monotone_p{p:g}"] = {"ok": res.monotone()}
        print(f"p={p:g}: ratios {['%.4g' % r for r in res.ratios]}, fitted slope {res.slope:.4f}")
    return outs, checks


def reflection_battery():
    """Five functions on ``{x1 > 0}`` with gradients, plus the reflection direction."""
    e1 = np.array([1.0, 0.0])
    diag = np.array([0.6, 0.8])
    return [
        ("constant", e1, lambda x: np.ones(len(x)), lambda x: np.zeros_like(x)),
        ("linear", e1, lambda x: x[:, 0], lambda x: np.tile([1.0, 0.0], (len(x), 1))),
        ("bump", e1, lambda x: np.exp(-np.sum((x - [0.5, 0.2]) ** 2, axis=1)),
         lambda x: -2 * (x - [0.5, 0.2]) * np.exp(-np.sum((x - [0.5, 0.2]) ** 2, axis=1))[:, None]),
        ("trig", diag, lambda x: np.sin(x[:, 0]) + np.cos(x[:, 1]),
         lambda x: np.stack([np.cos(x[:, 0]), -np.sin(x[:, 1])], axis=1)),
        ("quadratic", diag, lambda x: 1.0 + x[:, 0] * x[:, 1], lambda x: np.stack([x[:, 1], x[:, 0]], axis=1)),
    ]


def run_reflect(cfg: dict):
    import csv

    from .extend import reflection_norm_check

    out = output_path(cfg["out"])
    checks = {}
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("function", "p", "norm_extended", "norm_half", "value_defect", "grad_defect"))
        for name, h, f, g in reflection_battery():
            for p in cfg["p"]:
                r = reflection_norm_check(f, h, p, g, tol=cfg["tol"])
                w.writerow([name, repr(p), repr(r.norm_extended), repr(r.norm_half), repr(r.value_defect),
                            repr(r.grad_defect)])
                checks[f"{name}_p{p:g}"] = {"defect": max(r.value_defect, r.grad_defect),
                                            "ok": max(r.value_defect, r.grad_defect) < 1e-4}
    return [out], checks


def ibp_battery():
    """``(label, family, test, lam, consistent)`` cases for the integration-by-parts check."""
    from .bv import BumpTest, FinVectorMeasure, LineFamily
    from .domains import Disc, Rhomb

    disc = Disc((0.0, 0.0), 1.0)
    square = Rhomb(2)
    diag = np.array([0.6, 0.8])
    smooth_f = lambda x: np.sin(x[:, 0]) + x[:, 1] ** 2
    smooth_g = lambda x: np.stack([np.cos(x[:, 0]), 2 * x[:, 1]], axis=1)
    drop_atoms = lambda fam: (lambda s: FinVectorMeasure(atoms=(), ac_density=None))
    cases = [
        ("smooth-disc-e1", LineFamily.smooth(disc, (1.0, 0.0), smooth_f, smooth_g), BumpTest(), None, True),
        ("smooth-disc-diag", LineFamily.smooth(disc, diag, smooth_f, smooth_g), BumpTest(shift=0.3), None, True),
        ("smooth-rhomb-e2", LineFamily.smooth(square, (0.0, 1.0), smooth_f, smooth_g), BumpTest(scale=0.7), None,
         True),
        ("half-indicator-e1", LineFamily.halfplane_indicator(disc, (1.0, 0.0), (-1.0, 0.0)), BumpTest(), None, True),
        ("half-indicator-diag", LineFamily.halfplane_indicator(disc, diag, (-1.0, 0.0)), BumpTest(shift=-0.2),
         None, True),
        ("half-indicator-rhomb", LineFamily.halfplane_indicator(square, (1.0, 0.0), (-1.0, 0.5), 0.3),
         BumpTest(), None, True),
    ]
    neg = [
        ("control-atoms-dropped", cases[3][1], BumpTest(), drop_atoms(cases[3][1]), False),
        ("control-atoms-dropped-diag", cases[4][1], BumpTest(shift=-0.2), drop_atoms(cases[4][1]), False),
        ("control-wrong-sign", cases[3][1], BumpTest(), _flipped_lambda(cases[3][1]), False),
    ]
    return cases + neg


def _flipped_lambda(family):
    from .bv import FinVectorMeasure, lambda_measure

    def lam(s):
        mu = lambda_measure(family.line(s))
        return FinVectorMeasure(atoms=tuple((p, tuple(-np.asarray(v))) for p, v in mu.atoms), dim=1)

    return lam


def run_bv_ibp(cfg: dict):
    import csv

    from .bv import ibp_residual

    out = output_path(cfg["out"])
    checks = {}
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("case", "consistent", "residual"))
        for label, fam, phi, lam, consistent in ibp_battery():
            r = ibp_residual(fam, phi, lam)
            w.writerow([label, int(consistent), repr(r)])
            ok = r < 1e-6 if consistent else r > 1e-3
            checks[label] = {"residual": r, "ok": ok}
    return [out], checks


def _load_json_arg(text: str):
    p = Path(text)
    if not text.lstrip().startswith("{") and p.is_file():
        return json.loads(p.read_text())
    if not text.lstrip().startswith("{"):
        raise FileNotFoundError(f"domain file not found: {text}")
    return json.loads(text)


def run_bv_semivar(cfg: dict):
    from .bv import FinVectorMeasure, harmonic_atoms, semivariation, variation

    if cfg.get("atoms"):
        p = Path(cfg["atoms"])
        if not p.is_file():
            raise FileNotFoundError(f"atoms file not found: {p}")
        data = json.loads(p.read_text())
        d = int(data["dim"])
        rows = [list(map(float, r)) for r in data["atoms"]]
        npt = len(rows[0]) - d if rows else 1
        mu = FinVectorMeasure(atoms=tuple((r[:npt], r[npt:]) for r in rows), dim=d)
    else:
        mu = harmonic_atoms(cfg["harmonic"])
    sv = semivariation(mu)
    res = {"variation": variation(mu), "semivariation": sv.value, "lower": sv.lower, "upper": sv.upper,
           "exact": sv.exact, "method": sv.method, "atoms": len(mu.atoms)}
    out = output_path(cfg["out"])
    _write_json(out, res)
    print(json.dumps(res, sort_keys=True))
    ok = sv.lower <= res["variation"] * (1 + 1e-12)
    return [out], {"semivariation_le_variation": {"ok": bool(ok)}}


def run_bv_lambda(cfg: dict):
    from .bv import boundary_gaussian_integral, lambda_indicator_convex
    from .domains import domain_from_dict

    dom = domain_from_dict(_load_json_arg(cfg["domain"]))
    dirs = cfg.get("direction")
    r = lambda_indicator_convex(dom, None if dirs is None else np.asarray(dirs) / np.linalg.norm(dirs),
                                cfg["cells"])
    res = {"variation": r.variation, "cells": len(r.measure.atoms), "directions": [d.tolist() for d in r.directions]}
    if dirs is None:
        res["boundary_integral"] = boundary_gaussian_integral(dom)
        res["abs_error"] = abs(res["boundary_integral"] - r.variation)
    out = output_path(cfg["out"])
    _write_json(out, res)
    print(json.dumps(res, sort_keys=True))
    return [out], {"lambda_matches_boundary": {"ok": res.get("abs_error", 0.0) < 1e-4}}


def run_bv_extend_zero(cfg: dict):
    from .bv import LineFamily, extend_by_zero, ibp_residual, BumpTest, semivariation
    from .domains import domain_from_dict

    dom = domain_from_dict(_load_json_arg(cfg["domain"]))
    c = cfg["value"]
    fam = LineFamily.smooth(dom, (1.0, 0.0), lambda x: np.full(len(x), c), lambda x: np.zeros_like(x))
    ext = extend_by_zero(fam, abs(c))
    added = ext.added_measure(n_cells=cfg["cells"])
    ind = ext.indicator_measure(n_cells=cfg["cells"])
    sv_add = semivariation(added.measure)
    sv_ind = semivariation(ind.measure)
    resid = ibp_residual(ext.family, BumpTest(fixed=(0.2, 1.6)))
    res = {"value": c, "added_variation": added.variation, "indicator_variation": ind.variation,
           "added_semivariation": sv_add.upper, "indicator_semivariation": sv_ind.lower,
           "ibp_residual": resid}
    out = output_path(cfg["out"])
    _write_json(out, res)
    print(json.dumps(res, sort_keys=True))
    ok = resid < 1e-6 and sv_add.upper <= abs(c) * sv_ind.lower * (1 + 1e-12)
    return [out], {"zero_extension": {"ok": bool(ok)}}


def run_product(cfg: dict):
    from .product import product_mass_mc, product_table, write_table_csv

    outs, checks = [], {}
    base = output_path(cfg["out"])
    for p in cfg["p"]:
        tab = product_table(p, cfg["kmax"], cfg["res"], cfg["tol"], cfg["damping"])
        out = base if len(cfg["p"]) == 1 else base.with_name(f"{base.stem}_p{p:g}{base.suffix}")
        write_table_csv(tab, out)
        outs.append(out)
        sch = tab.schedule
        checks[f"bounded_p{p:g}"] = {"ok": tab.bounded_ok() and sch.bounded_invariant()}
        checks[f"divergent_p{p:g}"] = {"ok": tab.divergence_increasing() and sch.unbounded_invariant()}
        for r in tab.rows:
            print(f"p={p:g} k={r.k} m={r.m}: partial sum {r.bounded_partial_sum:.6f}, "
                  f"log divergence term {r.divergence_term_log:.4f}")
    mc = {str(first): product_mass_mc(first, 2 ** cfg["kmax"], cfg["samples"], cfg["seed"]).__dict__
          for first in (2, 3, 4)}
    side = base.with_name(base.stem + "_mass.json")
    _write_json(side, mc)
    outs.append(side)
    checks["mass_from_block_4"] = {"mean": mc["4"]["mean"], "ok": mc["4"]["mean"] > 0.9}
    return outs, checks


def run_all(cfg: dict):
    outdir = output_path(cfg["out"])
    outdir.mkdir(parents=True, exist_ok=True)
    jobs = [
        ("norms", run_norms, {}),
        ("coarea", run_coarea, {}),
        ("reflect", run_reflect, {}),
        ("bv-ibp-check", run_bv_ibp, {}),
        ("bv-semivar", run_bv_semivar, {}),
        ("bv-lambda-indicator", run_bv_lambda, {}),
        ("bv-extend-zero", run_bv_extend_zero, {}),
        ("extend-cost", run_extend_cost, {"p": [1.0, 2.0]}),
        ("product", run_product, {}),
    ]
    outs, checks = [], {}
    for name, fn, extra in jobs:
        sub = resolve(name, {}, {})
        sub.update(extra)
        sub["seed"] = cfg["seed"]
        if "res" in sub:
            sub["res"] = cfg["res"]
        sub["out"] = str(outdir / Path(DEFAULTS[name]["out"]).name)
        o, c = fn(sub)
        outs += o
        checks.update({f"{name}:{k}": v for k, v in c.items()})
    return outs, checks


RUNNERS = {"norms": run_norms, "coarea": run_coarea, "extend-cost": run_extend_cost, "reflect": run_reflect,
           "bv-ibp-check": run_bv_ibp, "bv-semivar": run_bv_semivar, "bv-lambda-indicator": run_bv_lambda,
           "bv-extend-zero": run_bv_extend_zero, "product": run_product, "all": run_all}

# -- argument parsing -----------------------------------------------------------------

_FLAGS = {
    "norms": ("p", "m", "tol"),
    "coarea": ("m", "res", "t_samples"),
    "extend-cost": ("m", "p", "res", "tol"),
    "reflect": ("p", "tol"),
    "bv-ibp-check": (),
    "bv-semivar": ("harmonic", "atoms"),
    "bv-lambda-indicator": ("domain", "direction", "cells"),
    "bv-extend-zero": ("domain", "value", "cells"),
    "product": ("p", "kmax", "seed", "res", "tol", "samples", "damping"),
    "all": ("res", "seed"),
}


def _add_flags(parser: argparse.ArgumentParser, keys) -> None:
    for k in tuple(keys) + ("out", "seed"):
        flag = "--" + k.replace("_", "-")
        if flag in parser._option_string_actions:
            continue
        parser.add_argument(flag, dest=k, default=argparse.SUPPRESS, metavar=SCHEMA[k].kind.upper(),
                            help=SCHEMA[k].help)
    parser.add_argument("--config", dest="config", default=argparse.SUPPRESS, help="typed key = value file")
    parser.add_argument("--assert", dest="assert", action="store_true", default=argparse.SUPPRESS,
                        help="exit with code 2 when a contract check fails")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gaussext", description="Gaussian Sobolev and BV extension experiments.")
    sub = ap.add_subparsers(dest="command", required=True)

    _add_flags(sub.add_parser("norms", help="hat-function norm scaling"), _FLAGS["norms"])
    _add_flags(sub.add_parser("coarea", help="coarea identity and perimeter comparison"), _FLAGS["coarea"])

    ext = sub.add_parser("extend", help="extension experiments")
    esub = ext.add_subparsers(dest="action", required=True)
    _add_flags(esub.add_parser("cost", help="extension-cost certificates"), _FLAGS["extend-cost"])
    _add_flags(esub.add_parser("reflect", help="half-space reflection identities"), _FLAGS["reflect"])

    bv = sub.add_parser("bv", help="bounded-variation experiments")
    bsub = bv.add_subparsers(dest="action", required=True)
    _add_flags(bsub.add_parser("ibp-check", help="integration-by-parts battery"), _FLAGS["bv-ibp-check"])
    _add_flags(bsub.add_parser("semivar", help="variation and semivariation of atoms"), _FLAGS["bv-semivar"])
    _add_flags(bsub.add_parser("lambda-indicator", help="derivative of a convex indicator"),
               _FLAGS["bv-lambda-indicator"])
    _add_flags(bsub.add_parser("extend-zero", help="extension by zero of a constant"), _FLAGS["bv-extend-zero"])

    prod = sub.add_parser("product", help="product construction")
    psub = prod.add_subparsers(dest="action", required=True)
    _add_flags(psub.add_parser("table", help="coefficient schedule and divergence table"), _FLAGS["product"])

    run = sub.add_parser("run", help="run the experiment named in a config file")
    run.add_argument("--config", dest="config", required=True, help="typed key = value file")
    _add_flags_no_config(run)

    _add_flags(sub.add_parser("all", help="every experiment into one directory"), _FLAGS["all"])
    return ap


def _add_flags_no_config(parser):
    for k, spec in SCHEMA.items():
        if k in ("subcommand", "assert"):
            continue
        parser.add_argument("--" + k.replace("_", "-"), dest=k, default=argparse.SUPPRESS, help=spec.help)
    parser.add_argument("--assert", dest="assert", action="store_true", default=argparse.SUPPRESS)


def _subcommand(ns) -> str:
    cmd = ns.command
    if cmd in ("extend", "bv"):
        a = ns.action
        return {"cost": "extend-cost", "reflect": "reflect"}.get(a, f"bv-{a}") if cmd == "extend" else f"bv-{a}"
    return cmd


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    flags = {k: v for k, v in vars(ns).items() if k not in ("command", "action", "config")}
    try:
        file_values = load_config(ns.config) if getattr(ns, "config", None) else {}
        if ns.command == "run":
            if "subcommand" not in file_values:
                raise ConfigError(["subcommand: missing (required by 'run')"])
            sc = file_values["subcommand"]
        else:
            sc = _subcommand(ns)
        cfg = resolve(sc, file_values, flags)
        outputs, checks = RUNNERS[sc](cfg)
        anchor = outputs[0] if sc != "all" else output_path(cfg["out"]) / "run"
        mpath = write_manifest(Path(anchor), cfg, outputs, checks)
    except ConfigError as e:
        for msg in e.errors:
            print(f"config error: {msg}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # engine failures carry their module in the type path
        print(f"error in {type(e).__module__}.{type(e).__name__}: {e}", file=sys.stderr)
        return 1
    print(f"manifest: {mpath}")
    failed = [k for k, v in checks.items() if not v.get("ok", True)]
    if failed:
        print("contract checks failed: " + ", ".join(failed), file=sys.stderr)
        if cfg.get("assert"):
            return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
