"""Deterministic text output: numbers, CSV, canonical JSON, SVG, manifests.

Everything written here is a pure function of its inputs.  Floats are
rendered with 17 significant digits (enough to round-trip a double), JSON
objects are emitted with sorted keys and no locale- or hash-order-dependent
parts, and CSV always uses \\n regardless of platform.  Timestamps exist
only inside run manifests, never inside data files, so rerunning a command
with the same inputs reproduces the data files byte for byte.
"""

from __future__ import annotations

import hashlib
import json
from datetime import datetime, timezone

import numpy as np


def fmt_float(x) -> str:
    """17 significant digits; exact round-trip for IEEE doubles."""
    return format(float(x), ".17g")


def stable_json(obj, indent: int = 0) -> str:
    """Canonical JSON: sorted keys, fmt_float numbers, trailing newline."""

    def render(o, depth: int) -> str:
        pad = " " * (indent * (depth + 1))
        close_pad = " " * (indent * depth)
        sep = ",\n" + pad if indent else ","
        nl = "\n" + pad if indent else ""
        end = "\n" + close_pad if indent else ""
        if o is None:
            return "null"
        if o is True:
            return "true"
        if o is False:
            return "false"
        if isinstance(o, str):
            return json.dumps(o, ensure_ascii=True)
        if isinstance(o, (int, np.integer)):
            return str(int(o))
        if isinstance(o, (float, np.floating)):
            f = float(o)
            if not np.isfinite(f):
                return "null"
            return fmt_float(f)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [
                f"{json.dumps(str(k), ensure_ascii=True)}: {render(v, depth + 1)}"
                for k, v in sorted(o.items(), key=lambda kv: str(kv[0]))
            ]
            return "{" + nl + sep.join(items) + end + "}"
        if isinstance(o, (list, tuple, np.ndarray)):
            seq = list(o)
            if not seq:
                return "[]"
            return "[" + nl + sep.join(render(v, depth + 1) for v in seq) + end + "]"
        raise TypeError(f"cannot serialize {type(o).__name__}")

    return render(obj, 0) + "\n"


def write_text(path, text: str):
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(text)


def csv_lines(header: list[str], rows) -> str:
    """Rows are iterables of already-formatted strings."""
    out = [",".join(header)]
    for row in rows:
        out.append(",".join(row))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# SVG

_PALETTE_SATURATION = 65
_PALETTE_LIGHTNESS = 42


def color_for_key(key: str) -> str:
    """Stable, readable color derived from a hash of the key."""
    hue = int(hashlib.md5(key.encode()).hexdigest()[:8], 16) % 360
    return f"hsl({hue},{_PALETTE_SATURATION}%,{_PALETTE_LIGHTNESS}%)"


def _path_data(points: np.ndarray, mapper, closed: bool) -> str:
    cmds = []
    for k, p in enumerate(points):
        x, y = mapper(p)
        cmds.append(f"{'M' if k == 0 else 'L'}{x:.8g} {y:.8g}")
    if closed:
        cmds.append("Z")
    return " ".join(cmds)


def lines_to_svg(lines, width: int = 800, margin: float = 0.04) -> str:
    """Render traced lines as one SVG path each.

    Each path carries data-level, data-status and data-arc-length attributes
    so the geometry stays machine-readable.  Coordinates are presentational
    (8 significant digits); the attributes use full precision.
    """
    if not lines:
        raise ValueError("no lines to render")
    all_pts = np.vstack([ln.points for ln in lines])
    lo = all_pts.min(axis=0)
    hi = all_pts.max(axis=0)
    span = np.maximum(hi - lo, 1e-12)
    pad = margin * float(span.max())
    lo = lo - pad
    hi = hi + pad
    span = hi - lo
    height = int(round(width * span[1] / span[0]))
    scale = width / span[0]

    def mapper(p):
        return ((p[0] - lo[0]) * scale, (hi[1] - p[1]) * scale)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for ln in lines:
        closed = ln.status.value == "closed"
        d = _path_data(ln.points, mapper, closed)
        color = color_for_key(f"level:{fmt_float(ln.level)}")
        parts.append(
            f'<path d="{d}" fill="none" stroke="{color}" stroke-width="1.2" '
            f'data-level="{fmt_float(ln.level)}" data-status="{ln.status.value}" '
            f'data-arc-length="{fmt_float(ln.arc_length)}"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# ---------------------------------------------------------------------------
# Run manifests

TOOL_NAME = "moirelines"


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def run_manifest(version: str, config_bytes: bytes | None, parameters: dict) -> dict:
    """Describe a run: tool, config hash, resolved parameters, wall time.

    Two manifests describe the same computation exactly when everything but
    the timestamps matches; see manifests_equivalent.
    """
    now = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return {
        "tool": TOOL_NAME,
        "version": version,
        "config_sha256": sha256_hex(config_bytes) if config_bytes is not None else None,
        "parameters": parameters,
        "created_utc": now,
    }


def manifests_equivalent(a: dict, b: dict) -> bool:
    drop = {"created_utc", "finished_utc"}
    ka = {k: v for k, v in a.items() if k not in drop}
    kb = {k: v for k, v in b.items() if k not in drop}
    return stable_json(ka) == stable_json(kb)
