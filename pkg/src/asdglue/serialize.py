"""Lossless storage of grid fields and coframe profiles.

Grid fields go to a pair of files: ``<stem>.json`` (dimensions, spacings,
field names, dtype, byte order) and ``<stem>.bin`` (the raw float64 blocks in
header order). Profiles are stored as JSON; Python's float repr round-trips
64-bit values exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .cohom_one import CEProfile, CoframeProfile
from .errors import ValidationError
from .frame_curvature import ChartMetric4

FORMAT = "asdglue-grid/1"
_DTYPE = "<f8"


def _stem(path) -> Path:
    p = Path(path)
    return p.with_suffix("") if p.suffix in (".json", ".bin") else p


def write_grid(path, axes, fields: dict, meta: dict | None = None) -> tuple[Path, Path]:
    """Write named arrays sampled on a rectilinear grid.

    Every field must have the grid shape as its leading dimensions; trailing
    dimensions (tensor indices) are recorded per field.
    """
    stem = _stem(path)
    axes = [np.asarray(a, dtype=float) for a in axes]
    shape = tuple(len(a) for a in axes)
    entries = []
    blocks = []
    for name, arr in fields.items():
        arr = np.asarray(arr, dtype=float)
        if arr.shape[:len(shape)] != shape:
            raise ValidationError(f"field {name!r} has shape {arr.shape}, grid is {shape}")
        entries.append({"name": name, "shape": list(arr.shape)})
        blocks.append(np.ascontiguousarray(arr, dtype=_DTYPE).tobytes())
    header = {
        "format": FORMAT,
        "dtype": _DTYPE,
        "dimensions": list(shape),
        "origin": [float(a[0]) for a in axes],
        "spacings": [float(a[1] - a[0]) if len(a) > 1 else 0.0 for a in axes],
        "axes": [a.tolist() for a in axes],
        "fields": entries,
        "meta": meta or {},
    }
    stem.parent.mkdir(parents=True, exist_ok=True)
    jpath, bpath = stem.with_suffix(".json"), stem.with_suffix(".bin")
    jpath.write_text(json.dumps(header, indent=1))
    bpath.write_bytes(b"".join(blocks))
    return jpath, bpath


def read_grid(path) -> tuple[list, dict, dict]:
    """Inverse of :func:`write_grid`: (axes, fields, meta)."""
    stem = _stem(path)
    header = json.loads(stem.with_suffix(".json").read_text())
    if header.get("format") != FORMAT:
        raise ValidationError(f"unknown grid format {header.get('format')!r}")
    raw = stem.with_suffix(".bin").read_bytes()
    fields, pos = {}, 0
    for e in header["fields"]:
        size = int(np.prod(e["shape"])) * 8
        if pos + size > len(raw):
            raise ValidationError("binary block is shorter than the header declares")
        fields[e["name"]] = np.frombuffer(raw, dtype=header["dtype"], count=size // 8, offset=pos).reshape(e["shape"]).copy()
        pos += size
    if pos != len(raw):
        raise ValidationError("binary block has trailing bytes")
    return [np.asarray(a, dtype=float) for a in header["axes"]], fields, header["meta"]


def save_chart(m: ChartMetric4, path) -> tuple[Path, Path]:
    return write_grid(path, m.axes, {"g": m.g}, {"kind": "chart_metric", "orientation": m.orientation})


def load_chart(path) -> ChartMetric4:
    axes, fields, meta = read_grid(path)
    return ChartMetric4(tuple(axes), fields["g"], int(meta.get("orientation", 1)))


def profile_to_dict(p: CoframeProfile | CEProfile) -> dict:
    base = p.base if isinstance(p, CEProfile) else p
    d = {
        "kind": "coframe_profile",
        "quotient_k": int(base.quotient_k),
        "orientation": int(base.orientation),
        "fd_order": int(base.fd_order),
        "t": base.t.tolist(),
        "q": base.q.tolist(),
        "a": base.a.tolist(),
    }
    for name in ("dq", "da", "d2a"):
        v = getattr(base, name)
        if v is not None:
            d[name] = np.asarray(v, dtype=float).tolist()
    if isinstance(p, CEProfile):
        d["kind"] = "ce_profile"
        d["limit_h0"] = np.asarray(p.limit_h0, dtype=float).tolist()
        d["eta"] = float(p.eta)
        d["decay_constants"] = {k: float(v) for k, v in p.decay_constants.items()}
    return d


def profile_from_dict(d: dict) -> CoframeProfile | CEProfile:
    if d.get("kind") not in ("coframe_profile", "ce_profile"):
        raise ValidationError(f"not a profile record: kind = {d.get('kind')!r}")
    opt = {k: np.asarray(d[k], dtype=float) if k in d else None for k in ("dq", "da", "d2a")}
    base = CoframeProfile(np.asarray(d["t"]), np.asarray(d["q"]), np.asarray(d["a"]), d["quotient_k"],
                          d["orientation"], opt["dq"], opt["da"], opt["d2a"], d.get("fd_order", 4))
    if d["kind"] == "coframe_profile":
        return base
    return CEProfile(base, np.asarray(d["limit_h0"], dtype=float), float(d["eta"]), dict(d.get("decay_constants", {})))


def save_profile(p: CoframeProfile | CEProfile, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(profile_to_dict(p)))
    return path


def load_profile(path) -> CoframeProfile | CEProfile:
    return profile_from_dict(json.loads(Path(path).read_text()))
