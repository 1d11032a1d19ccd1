"""Classify traced lines and label regular ones with an integer quadruple.

An open level line of the superposition is *regular* when it stays inside a
straight strip of finite width; the strip's direction is then perpendicular
to an integer combination

    G = m1*v'1 + m2*v'2 + m3*u'1 + m4*u'2

of the reciprocal basis vectors of the two layer lattices (the second
lattice taken in plane coordinates, i.e. rotated along with its layer).
The quadruple (m1, m2, m3, m4) is the topological label of the line and is
locally constant in the problem parameters, which is what the sweep module
exploits.  Chaotic lines have no such strip: their transverse extent keeps
growing with trace length.

The decision rule is purely operational: retrace the same line at twice and
four times the arc length and compare strip widths.  Saturation within
tau_sat is regular, growth beyond k_grow is chaotic, anything in between is
reported honestly as undetermined.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import reduce

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .geometry import EuclideanTransform, Lattice2, Rect, reciprocal_basis, rot90
from .potential import (
    Combiner,
    PeriodicPotential,
    Sum,
    SuperpositionPotential,
    is_commensurate,
)
from .tracer import (
    ChunkedField,
    LevelLine,
    LineStatus,
    TraceBudget,
    energy_interval,
    find_seeds,
    trace_level_line,
)

DEFAULT_QUAD_BOUND = 12
DEFAULT_TAU_SAT = 0.15
DEFAULT_K_GROW = 1.8


class LineFitError(ValueError):
    """Line unsuitable for a direction fit (closed or too few vertices)."""


class ZeroAnnihilatorError(ValueError):
    """The quadruple's reciprocal combination vanishes; no direction exists."""


def _gcd4(m1: int, m2: int, m3: int, m4: int) -> int:
    return reduce(math.gcd, (abs(m1), abs(m2), abs(m3), abs(m4)))


@dataclass(frozen=True, order=True)
class Quadruple:
    """Irreducible, sign-normalized integer label (m1, m2, m3, m4)."""

    m1: int
    m2: int
    m3: int
    m4: int

    def __post_init__(self):
        m = (self.m1, self.m2, self.m3, self.m4)
        if not any(m):
            raise ValueError("quadruple must be nonzero")
        if _gcd4(*m) != 1:
            raise ValueError(f"quadruple {m} is reducible; use Quadruple.normalized")
        first = next(v for v in m if v != 0)
        if first < 0:
            raise ValueError(f"quadruple {m} has negative leading entry")

    @staticmethod
    def normalized(m1: int, m2: int, m3: int, m4: int) -> "Quadruple":
        m = (int(m1), int(m2), int(m3), int(m4))
        if not any(m):
            raise ValueError("quadruple must be nonzero")
        g = _gcd4(*m)
        m = tuple(v // g for v in m)
        if next(v for v in m if v != 0) < 0:
            m = tuple(-v for v in m)
        return Quadruple(*m)

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.m1, self.m2, self.m3, self.m4)

    def max_norm(self) -> int:
        return max(abs(v) for v in self.as_tuple())


def quadruple_basis(lat_v: Lattice2, lat_u_plane: Lattice2) -> np.ndarray:
    """Rows (v'1, v'2, u'1, u'2): the reciprocal vectors the quadruple weighs."""
    fv1, fv2 = reciprocal_basis(lat_v)
    fu1, fu2 = reciprocal_basis(lat_u_plane)
    return np.vstack([fv1, fv2, fu1, fu2])


@dataclass(frozen=True)
class DirectionFit:
    """Principal direction of a vertex cloud and its RMS transverse spread."""

    direction: np.ndarray
    residual: float


def fit_direction(line: LevelLine, min_vertices: int = 100) -> DirectionFit:
    """Principal axis of the line's vertices.

    The sign is fixed to point along the endpoint displacement, the residual
    is the root-mean-square deviation transverse to the axis.  Requires an
    open line with enough vertices for the covariance to mean anything.
    """
    if line.is_closed:
        raise LineFitError("direction fit needs an open line")
    pts = line.points
    if len(pts) < min_vertices:
        raise LineFitError(f"need at least {min_vertices} vertices, got {len(pts)}")
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered / len(pts)
    eigvals, eigvecs = np.linalg.eigh(cov)
    direction = eigvecs[:, 1]
    if float(direction @ (pts[-1] - pts[0])) < 0:
        direction = -direction
    residual = math.sqrt(max(float(eigvals[0]), 0.0))
    d = direction.copy()
    d.setflags(write=False)
    return DirectionFit(direction=d, residual=residual)


def strip_width(line: LevelLine, direction) -> float:
    """Peak-to-peak extent of the vertices transverse to direction."""
    n = rot90(np.asarray(direction, dtype=float))
    t = line.points @ n
    return float(t.max() - t.min())


def recover_quadruple(
    direction,
    lat_v: Lattice2,
    lat_u_plane: Lattice2,
    bound: int = DEFAULT_QUAD_BOUND,
    tol: float = 1e-9,
) -> Quadruple | None:
    """Smallest integer quadruple whose reciprocal combination annihilates
    the direction.

    Exhaustive over |m_i| <= bound.  A candidate must have a nonzero
    combination G with |G . direction| < tol; combinations that vanish
    identically carry no information and are skipped.  Among irreducible,
    sign-normalized candidates the winner minimizes, in order: the max norm,
    the l1 norm, the weight on the later basis vectors (|m4|, then |m3|,
    then |m2|, then |m1|), and finally plain tuple order.  The cascade is
    what makes degenerate geometries (identical layers, symmetric
    directions) resolve deterministically.
    """
    l = np.asarray(direction, dtype=float)
    l = l / np.linalg.norm(l)
    basis = quadruple_basis(lat_v, lat_u_plane)
    g_floor = 1e-12 * float(np.max(np.linalg.norm(basis, axis=1)))

    r = np.arange(-bound, bound + 1)
    m = np.stack(np.meshgrid(r, r, r, r, indexing="ij"), axis=-1).reshape(-1, 4)
    g = m @ basis
    dots = g @ l
    gnorm2 = np.einsum("ij,ij->i", g, g)
    ok = (np.abs(dots) < tol) & (gnorm2 > g_floor * g_floor)
    m = m[ok]
    if len(m) == 0:
        return None
    m = m[np.gcd.reduce(np.abs(m), axis=1) == 1]
    if len(m) == 0:
        return None
    first = np.argmax(m != 0, axis=1)
    lead = m[np.arange(len(m)), first]
    m = np.where((lead < 0)[:, None], -m, m)
    a = np.abs(m)
    order = np.lexsort(
        (
            m[:, 3], m[:, 2], m[:, 1], m[:, 0],
            a[:, 0], a[:, 1], a[:, 2], a[:, 3],
            a.sum(axis=1), a.max(axis=1),
        )
    )
    return Quadruple(*(int(v) for v in m[order[0]]))


def direction_from_quadruple(
    q: Quadruple, lat_v: Lattice2, lat_u_plane: Lattice2
) -> np.ndarray:
    """Unit direction annihilated by the quadruple: G rotated by 90 degrees."""
    basis = quadruple_basis(lat_v, lat_u_plane)
    g = np.asarray(q.as_tuple(), dtype=float) @ basis
    norm = float(np.linalg.norm(g))
    if norm <= 1e-12 * float(np.max(np.linalg.norm(basis, axis=1))):
        raise ZeroAnnihilatorError(
            f"{q.as_tuple()} annihilates every direction for these lattices"
        )
    return rot90(g) / norm


@dataclass(frozen=True)
class Closed:
    diameter: float


@dataclass(frozen=True)
class Regular:
    quadruple: Quadruple
    direction: np.ndarray
    strip_width: float
    residual: float
    widths_by_length: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class Chaotic:
    widths_by_length: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class Undetermined:
    reason: str
    widths_by_length: tuple[tuple[float, float], ...] = ()


Classification = Closed | Regular | Chaotic | Undetermined


def _diameter(points: np.ndarray) -> float:
    """Max pairwise distance, via the convex hull to stay O(n log n)."""
    try:
        hull = points[ConvexHull(points).vertices]
    except QhullError:
        # Degenerate (collinear) loop; the bounding-box diagonal is exact then.
        span = points.max(axis=0) - points.min(axis=0)
        return float(np.hypot(*span))
    d2 = np.sum((hull[:, None, :] - hull[None, :, :]) ** 2, axis=-1)
    return float(math.sqrt(d2.max()))


def classify(
    s: SuperpositionPotential,
    line: LevelLine,
    budget: TraceBudget,
    tau_sat: float = DEFAULT_TAU_SAT,
    k_grow: float = DEFAULT_K_GROW,
    quad_bound: int = DEFAULT_QUAD_BOUND,
    quad_tol: float | None = None,
    field: ChunkedField | None = None,
) -> Classification:
    """Decide closed / regular / chaotic / undetermined for one line.

    The line must have been traced from its seed with the given budget; it
    is retraced at twice and four times the arc length and the strip widths
    are compared: saturation (within tau_sat) is regular, growth (beyond
    k_grow) is chaotic.  For regular lines the quadruple search tolerance
    defaults to 2 * residual / arc_length, the angular uncertainty of the
    direction fit itself, floored at 1e-12 so an exactly straight line
    still admits candidates.
    """
    if line.is_closed:
        return Closed(diameter=_diameter(line.points))
    if field is None:
        field = ChunkedField(s, budget.cell_size)

    lines = [line]
    for factor in (2.0, 4.0):
        retraced = trace_level_line(
            s, line.seed, line.level, budget.scaled(factor), field=field
        )
        if retraced.is_closed:
            # The longer budget revealed a loop the short trace cut off.
            return Closed(diameter=_diameter(retraced.points))
        lines.append(retraced)

    try:
        fits = [fit_direction(ln) for ln in lines]
    except LineFitError as err:
        return Undetermined(reason=f"direction fit failed: {err}")
    widths = [strip_width(ln, fit.direction) for ln, fit in zip(lines, fits)]
    widths_by_length = tuple(
        (ln.arc_length, w) for ln, w in zip(lines, widths)
    )

    w1 = max(widths[0], 1e-300)
    growth = widths[2] / w1
    if growth <= 1.0 + tau_sat:
        fit = fits[2]
        long_line = lines[2]
        if quad_tol is None:
            quad_tol = max(2.0 * fit.residual / long_line.arc_length, 1e-12)
        q = recover_quadruple(
            fit.direction, s.v.lattice, s.rotated_u_lattice(), quad_bound, quad_tol
        )
        if q is None:
            return Undetermined(
                reason=f"strip width saturated but no quadruple within |m|<={quad_bound}",
                widths_by_length=widths_by_length,
            )
        return Regular(
            quadruple=q,
            direction=fit.direction,
            strip_width=widths[2],
            residual=fit.residual,
            widths_by_length=widths_by_length,
        )
    if growth >= k_grow:
        return Chaotic(widths_by_length=widths_by_length)
    return Undetermined(
        reason=(
            f"width growth {growth:.3f} between saturation (<= {1 + tau_sat:.3f}) "
            f"and chaos (>= {k_grow:.3f}) thresholds"
        ),
        widths_by_length=widths_by_length,
    )


def first_open_line(
    s: SuperpositionPotential,
    level: float,
    window: Rect,
    budget: TraceBudget,
    field: ChunkedField | None = None,
    max_seeds: int = 10,
) -> LevelLine | None:
    """Trace seeds in the window until one yields an open line, if any."""
    if field is None:
        field = ChunkedField(s, budget.cell_size)
    for seed in find_seeds(s, level, window, budget.cell_size, field)[:max_seeds]:
        line = trace_level_line(s, seed, level, budget, field=field)
        if line.status is LineStatus.OPEN_BUDGET_EXHAUSTED:
            return line
    return None


def classify_first_open(
    s: SuperpositionPotential,
    level: float,
    window: Rect,
    budget: TraceBudget,
    tau_sat: float = DEFAULT_TAU_SAT,
    k_grow: float = DEFAULT_K_GROW,
    quad_bound: int = DEFAULT_QUAD_BOUND,
    quad_tol: float | None = None,
    field: ChunkedField | None = None,
    max_seeds: int = 10,
) -> tuple[LevelLine, Classification] | None:
    """Classify the first genuinely open line seeded in the window.

    Loops with perimeter above the arc budget masquerade as open until the
    retrace pass closes them, so candidates whose classification comes back
    Closed are skipped and the search moves to the next seed.  Returns the
    line and its classification, or None when every seed yields a loop.
    """
    if field is None:
        field = ChunkedField(s, budget.cell_size)
    for seed in find_seeds(s, level, window, budget.cell_size, field)[:max_seeds]:
        line = trace_level_line(s, seed, level, budget, field=field)
        if line.status is not LineStatus.OPEN_BUDGET_EXHAUSTED:
            continue
        c = classify(s, line, budget, tau_sat, k_grow, quad_bound, quad_tol, field=field)
        if isinstance(c, Closed):
            continue
        return line, c
    return None


@dataclass(frozen=True)
class ShiftFamilyReport:
    """Outcome of classifying one open line per layer shift.

    For a non-periodic superposition the quadruple and the open-line energy
    window belong to the potential family, not to the particular shift; this
    report says whether the computation agrees.
    """

    shifts: tuple
    classifications: tuple
    intervals: tuple
    levels: tuple
    quadruple_consistent: bool
    shared_quadruple: Quadruple | None
    intervals_consistent: bool
    tol_eps: float
    skipped: bool = False
    reason: str | None = None


def _classify_shift(args) -> tuple:
    (v, u, combiner, alpha, shift, budget, window, level, eps_lo, eps_hi, tol_eps,
     tau_sat, k_grow, quad_bound) = args
    s = SuperpositionPotential(v, u, EuclideanTransform(alpha, shift), combiner)
    shared = ChunkedField(s, budget.cell_size)
    interval = energy_interval(s, window, budget, eps_lo, eps_hi, tol_eps)
    if level is None:
        if not interval.found:
            return (None, interval, None)
        eps = 0.5 * (interval.lo + interval.hi)
    else:
        eps = level
    hit = classify_first_open(
        s, eps, window, budget, tau_sat, k_grow, quad_bound, field=shared
    )
    if hit is None:
        return (Undetermined(reason=f"no open line found at level {eps}"), interval, eps)
    return (hit[1], interval, eps)


def shift_family_check(
    v: PeriodicPotential,
    u: PeriodicPotential,
    alpha: float,
    shifts,
    budget: TraceBudget | None = None,
    window: Rect | None = None,
    combiner: Combiner = Sum(),
    level: float | None = None,
    eps_bracket: tuple[float, float] | None = None,
    tol_eps: float = 1e-3,
    tau_sat: float = DEFAULT_TAU_SAT,
    k_grow: float = DEFAULT_K_GROW,
    quad_bound: int = DEFAULT_QUAD_BOUND,
    commensurate_bound: int = 10,
    workers: int = 1,
) -> ShiftFamilyReport:
    """Classify one open line per shift and compare labels and intervals.

    Shift independence is only meaningful for non-periodic superpositions,
    so a commensurate layer pair short-circuits to a skipped report.  Each
    shift gets its own energy-interval computation (unless a fixed level is
    supplied) and its own classification; per-shift work is independent and
    runs on a process pool when workers > 1.
    """
    shifts = [np.asarray(a, dtype=float) for a in shifts]
    transform0 = EuclideanTransform(alpha, shifts[0] if shifts else (0.0, 0.0))
    common = is_commensurate(v.lattice, u.lattice, transform0, commensurate_bound)
    if common is not None:
        return ShiftFamilyReport(
            shifts=tuple(shifts),
            classifications=(),
            intervals=(),
            levels=(),
            quadruple_consistent=False,
            shared_quadruple=None,
            intervals_consistent=False,
            tol_eps=tol_eps,
            skipped=True,
            reason="layers are commensurate at this angle: the superposition "
            "is periodic and shift independence does not apply",
        )

    probe = SuperpositionPotential(v, u, transform0, combiner)
    if budget is None:
        budget = TraceBudget.for_potential(probe)
    if window is None:
        window = Rect.centered((0.0, 0.0), 4.0 * probe.longest_period())
    if eps_bracket is None:
        scale = 1.01 * probe.value_scale()
        eps_bracket = (-scale, scale)

    jobs = [
        (v, u, combiner, alpha, a, budget, window, level,
         eps_bracket[0], eps_bracket[1], tol_eps, tau_sat, k_grow, quad_bound)
        for a in shifts
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_classify_shift, jobs))
    else:
        outcomes = [_classify_shift(j) for j in jobs]

    classifications = tuple(c for c, _, _ in outcomes)
    intervals = tuple(iv for _, iv, _ in outcomes)
    levels = tuple(eps for _, _, eps in outcomes)

    quadruples = [
        c.quadruple for c in classifications if isinstance(c, Regular)
    ]
    quad_ok = (
        len(quadruples) == len(classifications)
        and len(classifications) > 0
        and all(q == quadruples[0] for q in quadruples)
    )
    found = [iv for iv in intervals if iv is not None and iv.found]
    ivals_ok = len(found) == len(intervals) and len(found) > 0
    if ivals_ok:
        los = [iv.lo for iv in found]
        his = [iv.hi for iv in found]
        ivals_ok = (max(los) - min(los) <= 2 * tol_eps) and (
            max(his) - min(his) <= 2 * tol_eps
        )
    return ShiftFamilyReport(
        shifts=tuple(shifts),
        classifications=classifications,
        intervals=intervals,
        levels=levels,
        quadruple_consistent=quad_ok,
        shared_quadruple=quadruples[0] if quad_ok else None,
        intervals_consistent=ivals_ok,
        tol_eps=tol_eps,
    )


def classification_to_dict(c: Classification, parameters: dict | None = None) -> dict:
    """JSON-ready form with a fixed schema shared by the CLI and reports."""
    out: dict = {
        "status": None,
        "quadruple": None,
        "direction": None,
        "strip_width": None,
        "residual": None,
        "widths_by_length": None,
        "diameter": None,
        "reason": None,
        "parameters": parameters or {},
    }
    if isinstance(c, Closed):
        out["status"] = "closed"
        out["diameter"] = c.diameter
    elif isinstance(c, Regular):
        out["status"] = "regular"
        out["quadruple"] = list(c.quadruple.as_tuple())
        out["direction"] = [float(c.direction[0]), float(c.direction[1])]
        out["strip_width"] = c.strip_width
        out["residual"] = c.residual
        out["widths_by_length"] = [[a, w] for a, w in c.widths_by_length]
    elif isinstance(c, Chaotic):
        out["status"] = "chaotic"
        out["widths_by_length"] = [[a, w] for a, w in c.widths_by_length]
    elif isinstance(c, Undetermined):
        out["status"] = "undetermined"
        out["reason"] = c.reason
        out["widths_by_length"] = [[a, w] for a, w in c.widths_by_length]
    else:
        raise TypeError(f"not a classification: {c!r}")
    return out
