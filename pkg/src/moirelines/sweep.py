"""Sweep the twist angle and map out stability zones.

A stability zone is a parameter interval over which regular open lines keep
one and the same integer quadruple.  The sweep samples a grid of angles,
classifies one open line for several layer shifts per angle (the label must
not depend on the shift), and zone detection collapses maximal runs of equal
quadruples, refining the zone boundaries by bisection and spot-checking each
zone at a fresh interior angle.

Everything is deterministic given the configuration: per-angle shift samples
are drawn from a generator seeded with (seed, bit pattern of alpha), so the
same angle always gets the same shifts no matter the execution order or the
number of worker processes.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .geometry import EuclideanTransform, Rect
from .potential import (
    Combiner,
    PeriodicPotential,
    Sum,
    SuperpositionPotential,
    is_commensurate,
)
from .tracer import ChunkedField, EnergyInterval, TraceBudget, energy_interval
from .classifier import (
    Chaotic,
    Quadruple,
    Regular,
    Undetermined,
    classification_to_dict,
    classify_first_open,
)
from .output import fmt_float


@dataclass(frozen=True)
class SweepConfig:
    """Resolved parameters of one angle sweep; hashable into a manifest."""

    alpha_start: float
    alpha_end: float
    alpha_count: int
    shifts_per_alpha: int = 3
    seed: int = 0
    level: float | None = None  # None: per-angle energy-interval midpoint
    tol_eps: float = 1e-3
    cells_per_period: int = 16
    length_periods: float = 60.0
    window_periods: float = 4.0
    tau_sat: float = 0.15
    k_grow: float = 1.8
    quad_bound: int = 12
    commensurate_bound: int = 10
    max_seeds: int = 10
    workers: int = 1
    cell_h: float | None = None  # absolute overrides beat the per-period knobs
    budget_arc: float | None = None

    def __post_init__(self):
        if not self.alpha_start < self.alpha_end:
            raise ValueError("need alpha_start < alpha_end")
        if self.alpha_count < 2:
            raise ValueError("need at least two sample angles")
        if self.shifts_per_alpha < 1:
            raise ValueError("need at least one shift per angle")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.cell_h is not None and self.cell_h <= 0:
            raise ValueError("cell_h must be positive")
        if self.budget_arc is not None and self.budget_arc <= 0:
            raise ValueError("budget_arc must be positive")

    def alphas(self) -> np.ndarray:
        return np.linspace(self.alpha_start, self.alpha_end, self.alpha_count)

    def to_params(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class AlphaSample:
    """Everything learned at one angle."""

    alpha: float
    shifts: tuple
    classifications: tuple
    interval: EnergyInterval | None
    level: float | None
    quadruple: Quadruple | None
    mean_width: float | None
    verdict: str  # regular | chaotic | undetermined | no-open-lines | error
    commensurate: bool
    error: str | None = None


@dataclass(frozen=True)
class SweepResult:
    config: SweepConfig
    samples: tuple


def _alpha_rng(seed: int, alpha: float, *extra: int) -> np.random.Generator:
    bits = int(np.float64(alpha).view(np.uint64))
    return np.random.default_rng([seed, bits, *extra])


def sample_shifts(
    u: PeriodicPotential, seed: int, alpha: float, count: int
) -> list[np.ndarray]:
    """Uniform shifts over the second layer's unit cell, keyed by (seed, alpha)."""
    t = _alpha_rng(seed, alpha).random((count, 2))
    return [t[k] @ u.lattice.basis for k in range(count)]


def _consensus(classifications, interval_found: bool) -> tuple:
    regulars = [c for c in classifications if isinstance(c, Regular)]
    if not interval_found:
        return None, None, "no-open-lines"
    if regulars and len(regulars) == len(classifications):
        q0 = regulars[0].quadruple
        if all(c.quadruple == q0 for c in regulars):
            width = float(np.mean([c.strip_width for c in regulars]))
            return q0, width, "regular"
        return None, None, "undetermined"  # shift disagreement demotes
    if classifications and all(isinstance(c, Chaotic) for c in classifications):
        return None, None, "chaotic"
    return None, None, "undetermined"


def _sample_alpha(args) -> AlphaSample:
    v, u, combiner, alpha, cfg = args
    try:
        shifts = sample_shifts(u, cfg.seed, alpha, cfg.shifts_per_alpha)
        transform0 = EuclideanTransform(alpha, shifts[0])
        commensurate = (
            is_commensurate(v.lattice, u.lattice, transform0, cfg.commensurate_bound)
            is not None
        )
        s0 = SuperpositionPotential(v, u, transform0, combiner)
        budget = TraceBudget.for_potential(
            s0, cells_per_period=cfg.cells_per_period, length_periods=cfg.length_periods
        )
        if cfg.cell_h is not None or cfg.budget_arc is not None:
            h = cfg.cell_h if cfg.cell_h is not None else budget.cell_size
            arc = cfg.budget_arc if cfg.budget_arc is not None else budget.max_arc_length
            budget = TraceBudget(h, arc, int(8 * arc / h) + 64)
        window = Rect.centered((0.0, 0.0), cfg.window_periods * s0.longest_period())

        interval = None
        level = cfg.level
        if level is None:
            scale = 1.01 * s0.value_scale()
            interval = energy_interval(
                s0, window, budget, -scale, scale, cfg.tol_eps
            )
            if not interval.found:
                return AlphaSample(
                    alpha=alpha,
                    shifts=tuple(shifts),
                    classifications=(),
                    interval=interval,
                    level=None,
                    quadruple=None,
                    mean_width=None,
                    verdict="no-open-lines",
                    commensurate=commensurate,
                )
            level = 0.5 * (interval.lo + interval.hi)

        classifications = []
        for a in shifts:
            s = SuperpositionPotential(v, u, EuclideanTransform(alpha, a), combiner)
            shared = ChunkedField(s, budget.cell_size)
            hit = classify_first_open(
                s, level, window, budget, cfg.tau_sat, cfg.k_grow, cfg.quad_bound,
                field=shared, max_seeds=cfg.max_seeds,
            )
            if hit is None:
                classifications.append(
                    Undetermined(reason=f"no open line found at level {level}")
                )
                continue
            classifications.append(hit[1])
        quadruple, width, verdict = _consensus(
            tuple(classifications), interval is None or interval.found
        )
        return AlphaSample(
            alpha=alpha,
            shifts=tuple(shifts),
            classifications=tuple(classifications),
            interval=interval,
            level=level,
            quadruple=quadruple,
            mean_width=width,
            verdict=verdict,
            commensurate=commensurate,
        )
    except Exception as err:  # per-point failures stay in the record
        return AlphaSample(
            alpha=alpha,
            shifts=(),
            classifications=(),
            interval=None,
            level=None,
            quadruple=None,
            mean_width=None,
            verdict="error",
            commensurate=False,
            error=f"{type(err).__name__}: {err}",
        )


def sweep_angle(
    v: PeriodicPotential,
    u: PeriodicPotential,
    config: SweepConfig,
    combiner: Combiner = Sum(),
) -> SweepResult:
    """Classify the potential family at every angle on the configured grid.

    Per-angle work is independent; with workers > 1 it runs on a process
    pool.  Results are keyed by angle, never by completion order, so the
    outcome is identical for any worker count.
    """
    jobs = [(v, u, combiner, float(a), config) for a in config.alphas()]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            samples = list(pool.map(_sample_alpha, jobs))
    else:
        samples = [_sample_alpha(j) for j in jobs]
    return SweepResult(config=config, samples=tuple(samples))


def make_point_fn(
    v: PeriodicPotential,
    u: PeriodicPotential,
    config: SweepConfig,
    combiner: Combiner = Sum(),
):
    """Sampler for zone refinement: alpha -> AlphaSample under this config."""

    def point_fn(alpha: float) -> AlphaSample:
        return _sample_alpha((v, u, combiner, float(alpha), config))

    return point_fn


@dataclass(frozen=True)
class StabilityZone:
    """Maximal angle interval holding one quadruple."""

    alpha_lo: float
    alpha_hi: float
    quadruple: Quadruple
    sample_alphas: tuple
    mean_width: float
    verified: bool | None = None
    verify_alpha: float | None = None


@dataclass(frozen=True)
class ZoneSet:
    zones: tuple
    complement: tuple  # (lo, hi) gaps carrying no zone
    refine_tol: float


def _refine_boundary(alpha_in, alpha_out, zone_q, point_fn, refine_tol):
    """Bisect between a sample inside the zone and one outside."""
    while abs(alpha_out - alpha_in) > refine_tol:
        mid = 0.5 * (alpha_in + alpha_out)
        s = point_fn(mid)
        if s.verdict == "regular" and s.quadruple == zone_q:
            alpha_in = mid
        else:
            alpha_out = mid
    return 0.5 * (alpha_in + alpha_out)


def detect_zones(
    result: SweepResult,
    refine_tol: float = 1e-3,
    point_fn=None,
    verify: bool = True,
    min_samples: int = 2,
) -> ZoneSet:
    """Collapse equal-quadruple runs into zones and refine their edges.

    Runs of at least min_samples consecutive regular samples with one
    quadruple become zones; shorter runs are below the resolution of the
    sample grid and are treated as noise.  (Near an angle where two
    candidate quadruples annihilate the same direction — which happens at
    every low-order commensurate twist — a lone sample can pick up the
    competing label; demanding persistence across neighbouring grid angles
    screens those out.)  With a point sampler the zone edges are bisected
    against the adjacent off-zone samples down to refine_tol, and every
    zone is spot-checked at a deterministic fresh interior angle; without
    one the raw sample bounds stand.  Angles between zones (and between
    zones and the sweep ends) are reported as the complement.
    """
    if refine_tol <= 0:
        raise ValueError("refine_tol must be positive")
    if min_samples < 1:
        raise ValueError("min_samples must be at least 1")
    samples = result.samples
    cfg = result.config

    runs = []  # (first_index, last_index, quadruple)
    k = 0
    while k < len(samples):
        s = samples[k]
        if s.verdict == "regular" and s.quadruple is not None:
            j = k
            while (
                j + 1 < len(samples)
                and samples[j + 1].verdict == "regular"
                and samples[j + 1].quadruple == s.quadruple
            ):
                j += 1
            if j - k + 1 >= min_samples:
                runs.append((k, j, s.quadruple))
            k = j + 1
        else:
            k += 1

    zones = []
    for k0, k1, q in runs:
        lo = samples[k0].alpha
        hi = samples[k1].alpha
        if point_fn is not None:
            if k0 > 0:
                lo = _refine_boundary(lo, samples[k0 - 1].alpha, q, point_fn, refine_tol)
            if k1 + 1 < len(samples):
                hi = _refine_boundary(hi, samples[k1 + 1].alpha, q, point_fn, refine_tol)
        members = samples[k0 : k1 + 1]
        widths = [s.mean_width for s in members if s.mean_width is not None]
        verified = None
        verify_alpha = None
        if point_fn is not None and verify:
            r = _alpha_rng(cfg.seed, lo, 7919).random()
            verify_alpha = lo + (0.05 + 0.9 * r) * (hi - lo)
            check = point_fn(verify_alpha)
            verified = check.verdict == "regular" and check.quadruple == q
        zones.append(
            StabilityZone(
                alpha_lo=lo,
                alpha_hi=hi,
                quadruple=q,
                sample_alphas=tuple(s.alpha for s in members),
                mean_width=float(np.mean(widths)) if widths else float("nan"),
                verified=verified,
                verify_alpha=verify_alpha,
            )
        )

    complement = []
    cursor = cfg.alpha_start
    for z in zones:
        if z.alpha_lo > cursor + refine_tol:
            complement.append((cursor, z.alpha_lo))
        cursor = max(cursor, z.alpha_hi)
    if cfg.alpha_end > cursor + refine_tol:
        complement.append((cursor, cfg.alpha_end))

    return ZoneSet(zones=tuple(zones), complement=tuple(complement), refine_tol=refine_tol)


# ---------------------------------------------------------------------------
# Reports

ZONES_CSV_HEADER = "alpha_lo,alpha_hi,m1,m2,m3,m4,mean_width,samples"

SWEEP_CSV_HEADER = (
    "alpha,verdict,m1,m2,m3,m4,mean_width,level,interval_lo,interval_hi,"
    "commensurate,error"
)


def zones_to_csv(zone_set: ZoneSet) -> str:
    rows = [ZONES_CSV_HEADER]
    for z in zone_set.zones:
        m = z.quadruple.as_tuple()
        rows.append(
            ",".join(
                [
                    fmt_float(z.alpha_lo),
                    fmt_float(z.alpha_hi),
                    str(m[0]),
                    str(m[1]),
                    str(m[2]),
                    str(m[3]),
                    fmt_float(z.mean_width),
                    str(len(z.sample_alphas)),
                ]
            )
        )
    return "\n".join(rows) + "\n"


def sweep_to_csv(result: SweepResult) -> str:
    rows = [SWEEP_CSV_HEADER]
    for s in result.samples:
        m = s.quadruple.as_tuple() if s.quadruple else ("", "", "", "")
        rows.append(
            ",".join(
                [
                    fmt_float(s.alpha),
                    s.verdict,
                    str(m[0]),
                    str(m[1]),
                    str(m[2]),
                    str(m[3]),
                    fmt_float(s.mean_width) if s.mean_width is not None else "",
                    fmt_float(s.level) if s.level is not None else "",
                    fmt_float(s.interval.lo) if s.interval and s.interval.found else "",
                    fmt_float(s.interval.hi) if s.interval and s.interval.found else "",
                    "1" if s.commensurate else "0",
                    (s.error or "").replace(",", ";"),
                ]
            )
        )
    return "\n".join(rows) + "\n"


def _interval_to_dict(iv: EnergyInterval | None):
    if iv is None:
        return None
    return {
        "lo": iv.lo,
        "hi": iv.hi,
        "found": iv.found,
        "degenerate": iv.degenerate,
        "n_probes": iv.n_probes,
    }


def sample_to_dict(s: AlphaSample) -> dict:
    return {
        "alpha": s.alpha,
        "verdict": s.verdict,
        "quadruple": list(s.quadruple.as_tuple()) if s.quadruple else None,
        "mean_width": s.mean_width,
        "level": s.level,
        "interval": _interval_to_dict(s.interval),
        "commensurate": s.commensurate,
        "shifts": [[float(a[0]), float(a[1])] for a in s.shifts],
        "classifications": [classification_to_dict(c) for c in s.classifications],
        "error": s.error,
    }


def result_to_dict(result: SweepResult, zone_set: ZoneSet | None = None) -> dict:
    out = {
        "parameters": result.config.to_params(),
        "samples": [sample_to_dict(s) for s in result.samples],
    }
    if zone_set is not None:
        out["zones"] = [
            {
                "alpha_lo": z.alpha_lo,
                "alpha_hi": z.alpha_hi,
                "quadruple": list(z.quadruple.as_tuple()),
                "mean_width": z.mean_width,
                "samples": len(z.sample_alphas),
                "sample_alphas": list(z.sample_alphas),
                "verified": z.verified,
                "verify_alpha": z.verify_alpha,
            }
            for z in zone_set.zones
        ]
        out["complement"] = [[lo, hi] for lo, hi in zone_set.complement]
        out["refine_tol"] = zone_set.refine_tol
    return out


def zones_to_svg(zone_set: ZoneSet, config: SweepConfig, size: int = 520) -> str:
    """Angle-circle diagram: each zone an arc colored by its quadruple."""
    from .output import color_for_key

    c = size / 2
    r_zone = 0.40 * size
    r_base = 0.40 * size

    def arc_path(a0: float, a1: float, radius: float) -> str:
        x0, y0 = c + radius * np.cos(a0), c - radius * np.sin(a0)
        x1, y1 = c + radius * np.cos(a1), c - radius * np.sin(a1)
        large = 1 if (a1 - a0) % (2 * np.pi) > np.pi else 0
        return f"M{x0:.6g} {y0:.6g} A{radius:.6g} {radius:.6g} 0 {large} 0 {x1:.6g} {y1:.6g}"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
        f'<circle cx="{c}" cy="{c}" r="{r_base:.6g}" fill="none" stroke="#ccc" '
        f'stroke-width="1"/>',
        f'<path d="{arc_path(config.alpha_start, config.alpha_end, r_base)}" '
        f'fill="none" stroke="#888" stroke-width="2" data-role="sweep-range"/>',
    ]
    for z in zone_set.zones:
        label = ",".join(str(v) for v in z.quadruple.as_tuple())
        color = color_for_key(f"quadruple:{label}")
        parts.append(
            f'<path d="{arc_path(z.alpha_lo, z.alpha_hi, r_zone)}" fill="none" '
            f'stroke="{color}" stroke-width="10" stroke-linecap="butt" '
            f'data-role="zone" data-quadruple="{label}" '
            f'data-alpha-lo="{fmt_float(z.alpha_lo)}" '
            f'data-alpha-hi="{fmt_float(z.alpha_hi)}"/>'
        )
        mid = 0.5 * (z.alpha_lo + z.alpha_hi)
        tx = c + 0.47 * size * np.cos(mid)
        ty = c - 0.47 * size * np.sin(mid)
        parts.append(
            f'<text x="{tx:.6g}" y="{ty:.6g}" font-size="11" text-anchor="middle" '
            f'fill="{color}">({label})</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
