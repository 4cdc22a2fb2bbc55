"""Command-line driver: configuration, dispatch, sweeps and report files.

A run is described by a JSON config::

    {"command": "sweep", "inputs": {"body1": "eh.json"}, "params": {"l_list": [3, 4, 5, 6]}}

Every parameter not given is filled from :data:`DEFAULTS` and the resolved
set (with units) is echoed into ``manifest.json`` next to the artifacts.
"""

from __future__ import annotations

import argparse
import csv
import functools
import hashlib
import io
import json
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from ._fd import min_nodes
from .errors import AsdGlueError, ValidationError

COMMANDS = ("curvature", "spectrum", "index", "cylindrify", "glue", "probe", "solve", "sweep")

_BODIES = ["eguchi_hanson", {"name": "half_cylinder", "k": 2}]

DEFAULTS = {
    "common": {"p": 3.0, "delta": None, "eta": 2.0},
    "curvature": {"metric": "s4", "box": None, "nodes": 17, "order": 4, "a": 1.0, "orientation": 1,
                  "conformal_factors": 0, "factor_amplitude": 0.2},
    "spectrum": {"model": "s3_scalar", "strip": [-3.0, 3.0], "max_degree": 3, "mass": 1.0, "orientation": -1},
    "index": {"model": "s3_scalar", "max_degree": 3, "mass": 1.0, "orientation": -1, "t_range": [0.0, 10.0],
              "nodes": 201, "weight": 0.5, "left": {"kind": "end"}, "right": {"kind": "end"}, "order": 4},
    "cylindrify": {"body": "eguchi_hanson", "a": 1.0, "r0": 1.0, "r_start": 1.5, "t_max": 14.0, "dt": 0.05},
    "glue": {"bodies": _BODIES, "l": 4.0, "dt": 0.1, "t_max": None, "lp_exponent": 2.0},
    "probe": {"bodies": _BODIES, "l_list": [4.0, 6.0, 8.0], "dt": 0.1, "t_max": None, "L": 1.0, "eps": 1.0,
              "refine_check": False},
    "solve": {"bodies": _BODIES, "l": 4.0, "dt": 0.1, "t_max": None, "tol": 1e-9, "max_iter": 25, "L": 1.0,
              "eps": 1.0},
    "sweep": {"bodies": _BODIES, "l_list": [3.0, 4.0, 5.0, 6.0], "delta_list": None, "dt": 0.1, "t_max": None,
              "quantities": ["residual", "probe"], "lp_exponent": 2.0, "L": 1.0, "eps": 1.0},
}

UNITS = {
    "p": "Lebesgue exponent", "delta": "weight rate per unit neck length", "eta": "metric decay rate per unit t",
    "l": "neck half-length (t units)", "l_list": "neck half-lengths (t units)", "dt": "t spacing",
    "t_max": "body grid length (t units)", "t_range": "model grid interval (t units)",
    "weight": "exponential weight rate", "strip": "imaginary-part interval of the indicial strip",
    "tol": "weighted L2 residual", "box": "chart coordinate intervals", "L": "transversal bump length (t units)",
    "eps": "transversal bump half-width (t units)", "a": "Eguchi-Hanson scale", "r0": "cylindrification radius",
}

MANIFEST = "manifest.json"


@dataclass
class RunConfig:
    command: str
    inputs: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    seed: int = 0
    jobs: int = 1
    source_text: str = ""

    @classmethod
    def from_text(cls, text: str, command: str | None = None, seed: int | None = None, jobs: int | None = None):
        try:
            raw = json.loads(text) if text.strip() else {}
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ValidationError("config must be a JSON object")
        unknown = set(raw) - {"command", "inputs", "params", "seed", "jobs"}
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        cmd = command or raw.get("command")
        inputs = raw.get("inputs", {})
        if isinstance(inputs, list):
            inputs = {Path(x).stem: x for x in inputs}
        return cls(cmd, dict(inputs), dict(raw.get("params", {})),
                   int(raw.get("seed", 0) if seed is None else seed),
                   int(raw.get("jobs", 1) if jobs is None else jobs), text)


# ---------------------------------------------------------------- validation


def _require(cond: bool, msg: str):
    if not cond:
        raise ValidationError(msg)


def _check_l(l: float):
    _require(np.isfinite(l) and l >= 2.0, f"neck half-length must satisfy l >= 2 (got {l})")


def _check_weights_regular(par: dict):
    """Reject end weights on which the model operator is not Fredholm."""
    from .cyl_spectral import finite_roots

    re = np.concatenate([finite_roots(m).real for m in _model(par).modes])
    for side in ("left", "right"):
        if par[side]["kind"] == "end":
            d = float(par[side]["delta"])
            _require(not np.any(np.abs(re + d) < 1e-7), f"{side} end weight {d} is exceptional for the model operator")


def _resolve_bodies(specs, inputs: dict) -> list[dict]:
    _require(isinstance(specs, list) and len(specs) == 2, "exactly two bodies are required")
    out = []
    for s in specs:
        s = {"name": s} if isinstance(s, str) else dict(s)
        if "profile" in s:
            key = s["profile"]
            path = Path(inputs.get(key, key))
            _require(path.is_file(), f"missing input profile {str(path)!r}")
            s = {"name": "profile", "path": str(path)}
        else:
            _require(s.get("name") in ("s4", "eguchi_hanson", "half_cylinder"), f"unknown body {s.get('name')!r}")
            if s["name"] == "half_cylinder":
                s.setdefault("k", 1)
                s.setdefault("orientation", 1)
                _require(int(s["k"]) >= 1, "half_cylinder k must be a positive integer")
            elif s["name"] == "eguchi_hanson":
                s.setdefault("a", 1.0)
                s.setdefault("r_start", 1.5)
                _require(s["a"] > 0 and s["r_start"] > s["a"], "eguchi_hanson needs 0 < a < r_start")
            else:
                s.setdefault("r0", 1.0)
                _require(s["r0"] > 0, "s4 needs r0 > 0")
        out.append(s)
    return out


def resolve(cfg: RunConfig) -> dict:
    """Fill defaults and validate every parameter before any computation."""
    _require(cfg.command in COMMANDS, f"unknown command {cfg.command!r}; choose from {', '.join(COMMANDS)}")
    _require(cfg.jobs >= 1, "--jobs must be at least 1")
    spec = dict(DEFAULTS["common"], **DEFAULTS[cfg.command])
    unknown = set(cfg.params) - set(spec)
    _require(not unknown, f"unknown parameters for {cfg.command}: {sorted(unknown)}")
    par = dict(spec, **cfg.params)
    for key, path in cfg.inputs.items():
        _require(Path(path).is_file(), f"missing input {key!r}: {path}")

    p = float(par["p"])
    if par["delta"] is None:
        _require(2 < p < 4, "the weight rule delta = 2 - 4/p needs 2 < p < 4")
        par["delta"] = 2.0 - 4.0 / p
        par["delta_rule"] = "2 - 4/p"
    _require(float(par["delta"]) >= 0, "delta must be non-negative")

    c = cfg.command
    if c == "curvature":
        _require(par["metric"] in ("s4", "euclidean", "eguchi_hanson"), f"unknown metric {par['metric']!r}")
        _require(par["order"] in (2, 4, 6), "order must be 2, 4 or 6")
        _require(int(par["nodes"]) >= min_nodes(1, par["order"]), "nodes below the stencil support")
        if par["box"] is None:
            par["box"] = ([[1.0, 1.5], [0.5, 1.0], [0.2, 0.7], [0.1, 0.6]] if par["metric"] == "eguchi_hanson"
                          else [[-0.5, 0.5]] * 4)
        _require(len(par["box"]) == 4 and all(lo < hi for lo, hi in par["box"]), "box needs four increasing intervals")
        _require(int(par["conformal_factors"]) >= 0, "conformal_factors must be non-negative")
    elif c in ("spectrum", "index"):
        _require(par["model"] in ("s3_scalar", "point", "reduced_asd"), f"unknown model {par['model']!r}")
        if c == "spectrum":
            lo, hi = par["strip"]
            _require(lo < hi, "strip must be an increasing pair")
        else:
            lo, hi = par["t_range"]
            _require(lo < hi, "t_range must be an increasing pair")
            _require(int(par["nodes"]) >= 4 * min_nodes(2, par["order"]), "nodes below the stencil support")
            for side in ("left", "right"):
                par[side] = dict({"kind": "end", "delta": par["weight"]}, **par[side])
                _require(par[side]["kind"] in ("end", "cap", "free"), f"unknown end kind {par[side]['kind']!r}")
            _check_weights_regular(par)
    elif c == "cylindrify":
        _require(par["body"] in ("s4", "eguchi_hanson"), f"unknown body {par['body']!r}")
        _require(par["dt"] > 0 and par["t_max"] > 20 * par["dt"], "need dt > 0 and at least 20 samples")
    else:
        par["bodies"] = _resolve_bodies(par["bodies"], cfg.inputs)
        if "l" in par:
            ls = [float(par["l"])]
        else:
            _require(len(par["l_list"]) > 0, "l_list must be nonempty")
            par["l_list"] = [float(x) for x in par["l_list"]]
            ls = par["l_list"]
        for l in ls:
            _check_l(l)
            _require(abs(l / par["dt"] - round(l / par["dt"])) < 1e-8, f"l = {l} is not on the dt grid")
        _require(par["dt"] > 0, "dt must be positive")
        if par["t_max"] is None:
            par["t_max"] = max(ls) + 4.0
        _require(par["t_max"] >= max(ls) + 1.0, "t_max must exceed the largest l by at least 1")
        if c == "sweep":
            if par["delta_list"] is None:
                par["delta_list"] = [par["delta"]]
            _require(len(par["delta_list"]) > 0, "delta_list must be nonempty")
            par["delta_list"] = [float(d) for d in par["delta_list"]]
            _require(all(d >= 0 for d in par["delta_list"]), "delta values must be non-negative")
            _require(set(par["quantities"]) <= {"residual", "probe"} and par["quantities"],
                     "quantities must be a nonempty subset of residual, probe")
        if c == "solve":
            _require(par["tol"] > 0 and int(par["max_iter"]) >= 1, "need tol > 0 and max_iter >= 1")
    return par


# ------------------------------------------------------------------- bodies


@functools.lru_cache(maxsize=16)
def _body_cached(spec_json: str, dt: float, t_max: float):
    from .neck_glue import Body, eh_body, half_cylinder_body, s4_body
    from .serialize import load_profile

    s = json.loads(spec_json)
    t = dt * np.arange(int(round(t_max / dt)) + 1)
    if s["name"] == "half_cylinder":
        return half_cylinder_body(t, int(s["k"]), int(s["orientation"]))
    if s["name"] == "eguchi_hanson":
        return eh_body(t, float(s["a"]), float(s["r_start"]))
    if s["name"] == "s4":
        return s4_body(t, float(s["r0"]))
    ce = load_profile(s["path"])
    if not hasattr(ce, "limit_h0"):
        raise ValidationError(f"{s['path']} holds a plain profile; a cylindrical-end profile is required")
    return Body(ce, name=Path(s["path"]).stem)


def build_bodies(par: dict):
    return [_body_cached(json.dumps(s, sort_keys=True), float(par["dt"]), float(par["t_max"])) for s in par["bodies"]]


# ------------------------------------------------------------------- tables

SCHEMAS = {
    "spectrum": [("weight", "float", "Im lambda", "exceptional weight"),
                 ("lambda_re", "float", "", "real part of the indicial root"),
                 ("lambda_im", "float", "", "imaginary part of the indicial root"),
                 ("d", "int", "", "dimension of exponential solutions at lambda"),
                 ("chains", "str", "", "Jordan chain lengths separated by ';'")],
    "iterations": [("iter", "int", "", "Newton iteration (0 is the initial state)"),
                   ("step_norm", "float", "weighted L2", "norm of the accepted correction"),
                   ("residual_W", "float", "weighted L2", "W+ residual after the step"),
                   ("residual_gauge", "float", "weighted L2", "gauge residual after the step"),
                   ("damping", "float", "", "accepted step fraction"),
                   ("positivity_margin", "float", "", "smallest eigenvalue of 1 + h")],
    "probe": [("l", "float", "t units", "neck half-length"),
              ("delta", "float", "per unit t", "weight rate"),
              ("sigma_min_restricted", "float", "", "smallest singular value on the transversal subspace"),
              ("sigma_min_unrestricted", "float", "", "smallest singular value on all perturbations"),
              ("constraints", "int", "", "number of transversality constraints")],
    "sweep": [("l", "float", "t units", "neck half-length"),
              ("delta", "float", "per unit t", "weight rate"),
              ("residual_unweighted", "float", "L^p", "norm of W+ of the approximate metric"),
              ("residual_weighted", "float", "L^p", "same with the neck weight"),
              ("sigma_min_restricted", "float", "", "smallest singular value on the transversal subspace"),
              ("sigma_min_unrestricted", "float", "", "smallest singular value on all perturbations"),
              ("status", "str", "", "ok or failed"),
              ("error", "str", "", "error class and message for failed rows")],
}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(table: str, rows: list[dict]) -> str:
    cols = [c[0] for c in SCHEMAS[table]]
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(cols)
    for r in rows:
        wr.writerow([_fmt(r.get(c)) for c in cols])
    return buf.getvalue()


def schema_text(table: str) -> str:
    cols = [{"name": n, "type": t, "unit": u, "description": d} for n, t, u, d in SCHEMAS[table]]
    return json.dumps({"table": f"{table}.csv", "columns": cols}, indent=1) + "\n"


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else str(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


class Artifacts:
    """Files produced by a command; nothing touches disk until :meth:`write`."""

    def __init__(self):
        self.files: dict[str, str] = {}
        self.grids: list = []

    def table(self, name: str, rows: list[dict]):
        self.files[f"{name}.csv"] = csv_text(name, rows)
        self.files[f"{name}.schema.json"] = schema_text(name)

    def json(self, name: str, obj):
        self.files[name] = json.dumps(_jsonable(obj), indent=1, sort_keys=True) + "\n"

    def write(self, out: Path) -> list[str]:
        from .serialize import write_grid

        out.mkdir(parents=True, exist_ok=True)
        names = []
        for name, text in self.files.items():
            (out / name).write_text(text)
            names.append(name)
        for stem, axes, fields, meta in self.grids:
            j, b = write_grid(out / stem, axes, fields, meta)
            names += [j.name, b.name]
        return sorted(names)


# ----------------------------------------------------------------- commands


def _random_factor(x, rng, amplitude: float):
    """A smooth random conformal exponent: a few low-frequency plane waves."""
    f = np.zeros_like(x[0])
    for _ in range(3):
        k = rng.normal(size=4)
        f += rng.uniform(0.5, 1.0) * np.sin(sum(ki * xi for ki, xi in zip(k, x)) + rng.uniform(0, 2 * np.pi))
    return amplitude * f / 3.0


def cmd_curvature(par: dict, seed: int, art: Artifacts):
    from .cohom_one import eguchi_hanson_chart
    from .frame_curvature import conformal_rescale, euclidean_chart, grid_axes, mesh, stereographic_s4_chart, wplus_chart

    axes = grid_axes(par["box"], [int(par["nodes"])] * 4)
    o = int(par["orientation"])
    m = {"s4": lambda: stereographic_s4_chart(axes, o), "euclidean": lambda: euclidean_chart(axes, o),
         "eguchi_hanson": lambda: eguchi_hanson_chart(axes, float(par["a"]), o)}[par["metric"]]()
    order = int(par["order"])
    wp, wm = wplus_chart(m, order)
    inner = (slice(order, -order),) * 4
    rep = {"sup_wplus": wp.sup_norm(), "sup_wminus": wm.sup_norm(),
           "sup_wplus_interior": float(np.abs(wp.matrix[inner]).max()),
           "sup_wminus_interior": float(np.abs(wm.matrix[inner]).max()),
           "spacing": list(m.spacing)}
    rng = np.random.default_rng(seed)
    devs = []
    scale = max(float(np.abs(wp.matrix[inner]).max()), float(np.abs(wm.matrix[inner]).max()))
    for _ in range(int(par["conformal_factors"])):
        f = _random_factor(mesh(axes), rng, float(par["factor_amplitude"]))
        hp, hm = wplus_chart(conformal_rescale(m, f), order)
        # orthonormal frame components of W scale as e^{-f}
        dp = np.abs(np.exp(f)[..., None, None] * hp.matrix - wp.matrix)[inner].max()
        dm = np.abs(np.exp(f)[..., None, None] * hm.matrix - wm.matrix)[inner].max()
        devs.append(float(max(dp, dm) / scale) if scale > 0 else float(max(dp, dm)))
    if devs:
        rep["conformal_relative_deviation"] = devs
    art.json("curvature.json", rep)
    art.grids.append(("wplus", m.axes, {"wplus": wp.matrix, "wminus": wm.matrix},
                      {"metric": par["metric"], "order": order, "orientation": o}))


def _model(par: dict):
    from .cyl_spectral import point_model, reduced_asd_model, s3_scalar_model

    if par["model"] == "s3_scalar":
        return s3_scalar_model(int(par["max_degree"]))
    if par["model"] == "point":
        return point_model(float(par["mass"]))
    return reduced_asd_model(int(par["orientation"]))


def cmd_spectrum(par: dict, seed: int, art: Artifacts):
    from .cyl_spectral import delta0, exceptional_weights, indicial_spectrum

    spec = indicial_spectrum(_model(par), tuple(par["strip"]))
    rows = [{"weight": e.weight, "lambda_re": e.lam.real, "lambda_im": e.lam.imag, "d": e.d,
             "chains": ";".join(str(c) for c in e.chains)} for e in spec]
    art.table("spectrum", rows)
    art.json("spectrum.json", {"exceptional_weights": exceptional_weights(spec), "delta0": delta0(spec),
                               "strip": par["strip"]})


def cmd_index(par: dict, seed: int, art: Artifacts):
    from .cyl_spectral import EndCondition, model_index

    t = np.linspace(*par["t_range"], int(par["nodes"]))
    left = EndCondition(par["left"]["kind"], float(par["left"].get("delta", 0.0)), bool(par["left"].get("strict", False)))
    right = EndCondition(par["right"]["kind"], float(par["right"].get("delta", 0.0)),
                         bool(par["right"].get("strict", False)))
    w = np.exp(float(par["weight"]) * t)
    r = model_index(_model(par), t, left, right, w, int(par["order"]), with_adjoint=True)
    art.json("index.json", {"dim_ker": r.dim_ker, "dim_coker": r.dim_coker, "index": r.index,
                            "adjoint_kernel": r.adjoint_kernel, "gap_ratio": r.gap_ratio,
                            "smallest_singular_values": np.sort(r.singular_values)[:8]})


def cmd_cylindrify(par: dict, seed: int, art: Artifacts):
    from .cohom_one import compactified_eh_body, cylindrified_s4, decay_rate_fit
    from .serialize import profile_to_dict

    t = par["dt"] * np.arange(int(round(par["t_max"] / par["dt"])) + 1)
    ce = (cylindrified_s4(t, float(par["r0"])) if par["body"] == "s4"
          else compactified_eh_body(t, float(par["a"]), float(par["r_start"])))
    eta, C = decay_rate_fit(ce)
    art.json("cylindrify.json", {"eta_fit": eta, "C": C, "limit_h0": ce.limit_h0, "eta_nominal": par["eta"]})
    art.files["profile.json"] = json.dumps(profile_to_dict(ce)) + "\n"


def cmd_glue(par: dict, seed: int, art: Artifacts):
    from .neck_glue import attach_bodies, residual_norms, weight_profile
    from .serialize import profile_to_dict

    b1, b2 = build_bodies(par)
    cfg = attach_bodies(b1, b2, float(par["l"]), float(par["delta"]))
    un, we = residual_norms(cfg, float(par["lp_exponent"]))
    wpf = weight_profile(cfg)
    art.json("glue.json", {"l": cfg.l, "delta": cfg.delta, "orientation": cfg.metric.orientation,
                           "residual_unweighted": un, "residual_weighted": we,
                           "weight_peak_relative_error": wpf.max_relative_error, "nodes": cfg.metric.n})
    d = profile_to_dict(cfg.metric)
    d["weight"] = wpf.w.tolist()
    d["tau"] = cfg.tau.tolist()
    art.files["glued_profile.json"] = json.dumps(d) + "\n"


def cmd_probe(par: dict, seed: int, art: Artifacts):
    from .neck_glue import min_sv_probe

    b1, b2 = build_bodies(par)
    rows = min_sv_probe(b1, b2, par["l_list"], float(par["delta"]), float(par["L"]), float(par["eps"]),
                        bool(par["refine_check"]))
    art.table("probe", rows)


def cmd_solve(par: dict, seed: int, art: Artifacts):
    from .errors import DivergenceError
    from .ift_solver import final_metric, nondegeneracy_check, quadratic_tail, solve_asd
    from .neck_glue import attach_bodies, weight_profile
    from .serialize import profile_to_dict

    b1, b2 = build_bodies(par)
    cfg = attach_bodies(b1, b2, float(par["l"]), float(par["delta"]))
    try:
        st = solve_asd(cfg, float(par["tol"]), int(par["max_iter"]), float(par["L"]), float(par["eps"]))
    except DivergenceError as exc:
        art.table("iterations", exc.log or [])
        raise
    art.table("iterations", st.iterates)
    art.json("solve.json", {"converged": st.converged, "message": st.message, "residual_W": st.residual_W,
                            "residual_gauge": st.residual_gauge, "quadratic_ratios": quadratic_tail(st),
                            "nondegeneracy": nondegeneracy_check(st, weight_profile(cfg).w, cfg.metric.dt)})
    art.files["final_profile.json"] = json.dumps(profile_to_dict(final_metric(cfg, st))) + "\n"


def sweep_row(par: dict, l: float, delta: float) -> dict:
    """One isolated sweep point; failures are captured into the row."""
    from .neck_glue import attach_bodies, build_transversal, kernel_bases, residual_norms, sigma_min

    row = {"l": l, "delta": delta, "status": "ok", "error": ""}
    try:
        b1, b2 = build_bodies(par)
        cfg = attach_bodies(b1, b2, l, delta)
        if "residual" in par["quantities"]:
            row["residual_unweighted"], row["residual_weighted"] = residual_norms(cfg, float(par["lp_exponent"]))
        if "probe" in par["quantities"]:
            tspec = build_transversal(cfg, kernel_bases(cfg), float(par["L"]), float(par["eps"]))
            row["sigma_min_restricted"], row["sigma_min_unrestricted"] = sigma_min(cfg, tspec)
    except AsdGlueError as exc:
        row.update(status="failed", error=f"{type(exc).__name__}: {exc}", exit_code=exc.exit_code)
    return row


class SweepFailed(AsdGlueError):
    def __init__(self, msg, exit_code: int):
        super().__init__(msg)
        self.exit_code = exit_code


def _slope(x, y, floor: float = 1e-12):
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = np.isfinite(y) & (y > floor)
    if ok.sum() < 2:
        return None
    return float(np.polyfit(x[ok], np.log(y[ok]), 1)[0])


def cmd_sweep(par: dict, seed: int, art: Artifacts, jobs: int = 1):
    points = [(l, d) for d in par["delta_list"] for l in par["l_list"]]
    if jobs > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(sweep_row, [par] * len(points), *zip(*points)))
    else:
        rows = [sweep_row(par, l, d) for l, d in points]
    art.table("sweep", rows)
    summary = []
    for d in par["delta_list"]:
        sel = [r for r in rows if r["delta"] == d and r["status"] == "ok"]
        ls = [r["l"] for r in sel]
        entry = {"delta": d, "rows_ok": len(sel)}
        if "residual" in par["quantities"]:
            entry["slope_unweighted"] = _slope(ls, [r["residual_unweighted"] for r in sel])
            entry["slope_weighted"] = _slope(ls, [r["residual_weighted"] for r in sel])
        summary.append(entry)
    art.json("sweep_summary.json", {"slopes": summary, "failed_rows": sum(r["status"] != "ok" for r in rows)})
    if all(r["status"] != "ok" for r in rows):
        raise SweepFailed(f"all {len(rows)} sweep rows failed; first: {rows[0]['error']}", rows[0]["exit_code"])


_DISPATCH = {"curvature": cmd_curvature, "spectrum": cmd_spectrum, "index": cmd_index, "cylindrify": cmd_cylindrify,
             "glue": cmd_glue, "probe": cmd_probe, "solve": cmd_solve}


# ---------------------------------------------------------------------- run


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def manifest(cfg: RunConfig, par: dict, status: str, code: int, artifacts: list, error: str = "") -> dict:
    return {
        "command": cfg.command,
        "config_sha256": _sha256(cfg.source_text.encode()),
        "inputs": {k: {"path": str(v), "sha256": _sha256(Path(v).read_bytes())} for k, v in sorted(cfg.inputs.items())},
        "params": _jsonable(par),
        "units": {k: UNITS[k] for k in sorted(par) if k in UNITS},
        "seed": cfg.seed,
        "jobs": cfg.jobs,
        "versions": {"asdglue": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "status": status,
        "exit_code": code,
        "error": error,
        "artifacts": artifacts,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }


def run(cfg: RunConfig, out) -> int:
    """Validate, compute, write artifacts and the manifest; returns the exit code.

    Invalid configurations return before anything is written.
    """
    out = Path(out)
    try:
        par = resolve(cfg)
    except AsdGlueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    art = Artifacts()
    status, code, err = "ok", 0, ""
    try:
        if cfg.command == "sweep":
            cmd_sweep(par, cfg.seed, art, cfg.jobs)
        else:
            _DISPATCH[cfg.command](par, cfg.seed, art)
    except AsdGlueError as exc:
        status, code, err = "failed", exc.exit_code, f"{type(exc).__name__}: {exc}"
        print(f"error: {err}", file=sys.stderr)
    names = art.write(out)
    (out / MANIFEST).write_text(json.dumps(manifest(cfg, par, status, code, names, err), indent=1) + "\n")
    return code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="asdglue", description="Gluing of anti-self-dual conformal structures.")
    ap.add_argument("command", nargs="?", choices=COMMANDS, help="overrides the command in the config")
    ap.add_argument("--config", type=Path, help="JSON run configuration")
    ap.add_argument("--out", type=Path, default=Path("asdglue-out"), help="output directory")
    ap.add_argument("--jobs", type=int, default=None, help="worker processes for sweeps")
    ap.add_argument("--seed", type=int, default=None, help="seed for randomized test fields")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    text = ""
    if args.config is not None:
        if not args.config.is_file():
            print(f"error: config file {args.config} not found", file=sys.stderr)
            return ValidationError.exit_code
        text = args.config.read_text()
    try:
        cfg = RunConfig.from_text(text, args.command, args.seed, args.jobs)
    except AsdGlueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return run(cfg, args.out)
