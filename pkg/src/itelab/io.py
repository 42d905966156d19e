"""File outputs: CSV tables, self-contained SVG plots, run manifests, Hamiltonian dumps.

All writes go through a temporary file in the target directory followed by
``os.replace`` so readers never see partial files.
"""
from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import jsonschema
import numpy as np

from . import __version__
from .errors import InvalidInput
from .operators import DenseHermitian

__all__ = [
    "atomic_write_bytes",
    "atomic_write_text",
    "sha256_file",
    "format_value",
    "write_csv",
    "read_csv",
    "Series",
    "svg_plot",
    "MANIFEST_SCHEMA",
    "build_manifest",
    "write_manifest",
    "validate_manifest",
    "dump_hamiltonian",
    "load_hamiltonian",
]


def atomic_write_bytes(path, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix="." + path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def format_value(v) -> str:
    """Shortest round-trip text for floats so identical runs give identical bytes."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, complex):
        return f"{v.real!r}{v.imag:+.17g}j"
    return str(v)


def write_csv(path, rows: Iterable[dict], columns: Sequence[str], units: dict | None = None) -> Path:
    """CSV with a header row; ``units`` adds them to the column names as ``name [unit]``."""
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    units = units or {}
    w.writerow([f"{c} [{units[c]}]" if c in units else c for c in columns])
    for r in rows:
        w.writerow([format_value(r.get(c, "")) for c in columns])
    return atomic_write_text(path, buf.getvalue())


def read_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = [h.split(" [")[0] for h in next(reader)]
        return [dict(zip(header, row)) for row in reader]


# ---------------------------------------------------------------- SVG

class Series:
    def __init__(self, x, y, label: str = "", yerr=None, style: str = "line", color: str | None = None):
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.yerr = None if yerr is None else np.asarray(yerr, dtype=float)
        self.label = label
        self.style = style
        self.color = color


_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"]


def _ticks(lo, hi, log):
    """(position, label) pairs in transformed coordinates."""
    if log:
        a, b = math.floor(lo), math.ceil(hi)
        mult = (1, 2, 5) if b - a <= 2 else (1,)
        step = max(1, (b - a) // 6)
        return [(e + math.log10(m), f"{m}e{e}") for e in range(a, b + 1, step) for m in mult]
    span = hi - lo
    if span <= 0:
        return [(lo, f"{lo:g}")]
    raw = span / 5
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    out = []
    v = math.ceil(lo / step) * step
    while v <= hi + 1e-12 * span:
        v = round(v, 12)
        out.append((v, f"{v:g}"))
        v += step
    return out


def svg_plot(path, series: Sequence[Series], *, title: str = "", xlabel: str = "", ylabel: str = "",
             logx: bool = False, logy: bool = False, width: int = 640, height: int = 440) -> Path:
    """Minimal line/marker plot with optional error bars and log axes."""
    ml, mr, mt, mb = 80, 150, 40, 60
    pw, ph = width - ml - mr, height - mt - mb

    def tx(v):
        return np.log10(v) if logx else v

    def ty(v):
        return np.log10(v) if logy else v

    xs, ys = [], []
    for s in series:
        ok = np.isfinite(s.x) & np.isfinite(s.y)
        if logx:
            ok &= s.x > 0
        if logy:
            ok &= s.y > 0
        xs.append(tx(s.x[ok]))
        ys.append(ty(s.y[ok]))
    allx = np.concatenate(xs) if xs else np.array([0.0, 1.0])
    ally = np.concatenate(ys) if ys else np.array([0.0, 1.0])
    if allx.size == 0:
        allx = np.array([0.0, 1.0])
    if ally.size == 0:
        ally = np.array([0.0, 1.0])
    x0, x1 = float(allx.min()), float(allx.max())
    y0, y1 = float(ally.min()), float(ally.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.04 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def px(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def py(v):
        return mt + ph - (v - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for v, lab in _ticks(x0, x1, logx):
        if x0 <= v <= x1:
            X = px(v)
            out.append(f'<line x1="{X:.2f}" y1="{mt + ph}" x2="{X:.2f}" y2="{mt + ph + 5}" stroke="black"/>')
            out.append(f'<text x="{X:.2f}" y="{mt + ph + 18}" text-anchor="middle">{lab}</text>')
    for v, lab in _ticks(y0, y1, logy):
        if y0 <= v <= y1:
            Y = py(v)
            out.append(f'<line x1="{ml - 5}" y1="{Y:.2f}" x2="{ml}" y2="{Y:.2f}" stroke="black"/>')
            out.append(f'<text x="{ml - 8}" y="{Y + 4:.2f}" text-anchor="end">{lab}</text>')
    if title:
        out.append(f'<text x="{ml + pw / 2}" y="{mt - 14}" text-anchor="middle" font-size="14">{_esc(title)}</text>')
    if xlabel:
        out.append(f'<text x="{ml + pw / 2}" y="{height - 16}" text-anchor="middle">{_esc(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="18" y="{mt + ph / 2}" text-anchor="middle" '
                   f'transform="rotate(-90 18 {mt + ph / 2})">{_esc(ylabel)}</text>')
    for i, (s, X, Y) in enumerate(zip(series, xs, ys)):
        color = s.color or _PALETTE[i % len(_PALETTE)]
        if len(X) == 0:
            continue
        if s.style in ("line", "both"):
            pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(X, Y))
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        if s.style in ("markers", "both"):
            for a, b in zip(X, Y):
                out.append(f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="3" fill="{color}"/>')
        if s.yerr is not None:
            ok = np.isfinite(s.x) & np.isfinite(s.y)
            if logx:
                ok &= s.x > 0
            if logy:
                ok &= s.y > 0
            for xv, yv, ev in zip(s.x[ok], s.y[ok], s.yerr[ok]):
                lo_, hi_ = yv - ev, yv + ev
                if logy:
                    if lo_ <= 0:
                        lo_ = yv * 1e-3
                    lo_, hi_ = np.log10(lo_), np.log10(hi_)
                yl, yh = py(min(max(lo_, y0), y1)), py(min(max(hi_, y0), y1))
                out.append(f'<line x1="{px(tx(xv)):.2f}" y1="{yl:.2f}" x2="{px(tx(xv)):.2f}" y2="{yh:.2f}" '
                           f'stroke="{color}"/>')
        if s.label:
            ly = mt + 16 * (i + 1)
            out.append(f'<line x1="{ml + pw + 10}" y1="{ly - 4}" x2="{ml + pw + 30}" y2="{ly - 4}" '
                       f'stroke="{color}" stroke-width="2"/>')
            out.append(f'<text x="{ml + pw + 35}" y="{ly}">{_esc(s.label)}</text>')
    out.append("</svg>\n")
    return atomic_write_text(path, "\n".join(out))


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


# ---------------------------------------------------------------- manifests

MANIFEST_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "command", "config", "master_seed", "code_version",
                 "start_time", "end_time", "wall_seconds", "outputs"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": 1},
        "command": {"type": "string"},
        "config": {"type": "object"},
        "master_seed": {"type": "integer", "minimum": 0},
        "code_version": {"type": "string"},
        "start_time": {"type": "string"},
        "end_time": {"type": "string"},
        "wall_seconds": {"type": "number", "minimum": 0},
        "threads": {"type": ["integer", "null"]},
        "status": {"type": "string"},
        "checks": {"type": "array"},
        "outputs": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["path", "sha256", "bytes"],
                "additionalProperties": False,
                "properties": {
                    "path": {"type": "string"},
                    "sha256": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
                    "bytes": {"type": "integer", "minimum": 0},
                },
            },
        },
    },
}


def build_manifest(command: str, config: dict, master_seed: int, outputs: Sequence, root, *,
                   start_time: str, end_time: str, wall_seconds: float, threads=None,
                   status: str = "ok", checks=None) -> dict:
    root = Path(root)
    files = []
    for p in outputs:
        p = Path(p)
        files.append({"path": str(p.relative_to(root)) if p.is_absolute() else str(p),
                      "sha256": sha256_file(p if p.is_absolute() else root / p),
                      "bytes": (p if p.is_absolute() else root / p).stat().st_size})
    m = {
        "schema_version": 1,
        "command": command,
        "config": config,
        "master_seed": int(master_seed),
        "code_version": __version__,
        "start_time": start_time,
        "end_time": end_time,
        "wall_seconds": float(wall_seconds),
        "threads": threads,
        "status": status,
        "checks": list(checks or []),
        "outputs": files,
    }
    validate_manifest(m)
    return m


def validate_manifest(m: dict, root=None) -> None:
    jsonschema.validate(m, MANIFEST_SCHEMA)
    if root is not None:
        for f in m["outputs"]:
            p = Path(root) / f["path"]
            if sha256_file(p) != f["sha256"]:
                raise InvalidInput(f"digest mismatch for {f['path']}")


def write_manifest(path, manifest: dict) -> Path:
    return atomic_write_text(path, json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not JSON serializable: {type(o)}")


# ---------------------------------------------------------------- Hamiltonian dumps

def dump_hamiltonian(path, H: DenseHermitian) -> tuple[Path, Path]:
    """Row-major little-endian float64 (re, im) pairs plus a ``.json`` sidecar."""
    path = Path(path)
    data = np.ascontiguousarray(H.entries, dtype="<c16").tobytes()
    atomic_write_bytes(path, data)
    side = path.with_name(path.name + ".json")
    atomic_write_text(side, json.dumps({"dim": H.dim, "provenance": H.provenance}, sort_keys=True,
                                       default=_json_default) + "\n")
    return path, side


def load_hamiltonian(path) -> DenseHermitian:
    path = Path(path)
    side = json.loads(path.with_name(path.name + ".json").read_text())
    dim = int(side["dim"])
    raw = np.frombuffer(path.read_bytes(), dtype="<c16")
    if raw.size != dim * dim:
        raise InvalidInput(f"binary holds {raw.size} entries, expected {dim * dim}")
    return DenseHermitian(raw.reshape(dim, dim).astype(complex), side.get("provenance", {}), symmetrize=False)
