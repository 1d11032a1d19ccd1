"""Streamed level-line tracing over unbounded regions.

Level lines of the superposed potential can run arbitrarily far, so nothing
here ever materializes a global grid.  Corner values of f are evaluated
lazily in fixed-size chunks keyed by integer chunk coordinates; a trace only
pays for the cells it actually walks through, which makes long traces linear
in arc length and keeps memory proportional to the visited set.

The continuation itself is plain marching squares on the residual f - level:
inside each cell the crossing points on the cell edges are joined, the walk
steps to the neighbouring cell through the exit edge, and terminates when it
returns to its starting edge (closed), runs out of arc-length or cell budget,
or leaves an optional clip window.  Corner signs are made strict by nudging
residuals within 1e-9 of zero (relative to the potential's value scale) to
the positive side; this desingularizes levels at or next to critical values
deterministically, and every line reports whether the nudge fired.

Orientation is fixed once and for all: lines are walked with the region
f > level on their left.  Closed loops around a maximum therefore come out
counterclockwise (positive signed area) and loops around a minimum clockwise,
which is what lets ``energy_interval`` bisect for the open-line energy window
even when that window degenerates to a single level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .geometry import Rect
from .potential import SuperpositionPotential, eval_superposition

# Residuals below JITTER_REL * value_scale are pushed to +JITTER_REL * scale.
JITTER_REL = 1e-9

# A budget cell must resolve the shortest period at least this finely.
MIN_CELLS_PER_PERIOD = 8

CHUNK = 32

_HORIZONTAL = 0
_VERTICAL = 1


class SeedNotOnLevelError(ValueError):
    """The seed's grid cell has no sign change of f - level."""


class BudgetError(ValueError):
    """Trace budget is inconsistent with the potential's periods."""


class LineStatus(Enum):
    CLOSED = "closed"
    OPEN_BUDGET_EXHAUSTED = "open-budget-exhausted"
    OPEN_LEFT_WINDOW = "open-left-window"


@dataclass(frozen=True)
class TraceBudget:
    """Resolution and stopping rules for one trace.

    cell_size is the marching-squares grid spacing h, max_arc_length the
    total polyline length L at which an open trace stops, max_cells a hard
    cap on visited cells (memory/time guard).
    """

    cell_size: float
    max_arc_length: float
    max_cells: int

    def __post_init__(self):
        if not (self.cell_size > 0 and math.isfinite(self.cell_size)):
            raise BudgetError(f"cell_size must be positive, got {self.cell_size}")
        if not (self.max_arc_length > 0 and math.isfinite(self.max_arc_length)):
            raise BudgetError(f"max_arc_length must be positive, got {self.max_arc_length}")
        if self.max_cells < 1:
            raise BudgetError(f"max_cells must be >= 1, got {self.max_cells}")

    @staticmethod
    def for_potential(
        s: SuperpositionPotential,
        cells_per_period: int = 16,
        length_periods: float = 200.0,
        max_cells: int | None = None,
    ) -> "TraceBudget":
        """Defaults: h resolves the shortest period 16-fold, L spans
        length_periods of the longest one."""
        h = s.shortest_period() / cells_per_period
        arc = length_periods * s.longest_period()
        if max_cells is None:
            max_cells = int(8 * arc / h) + 64
        return TraceBudget(h, arc, max_cells)

    def scaled(self, factor: float) -> "TraceBudget":
        """Same resolution, arc-length and cell caps multiplied by factor."""
        return TraceBudget(
            self.cell_size,
            self.max_arc_length * factor,
            int(self.max_cells * factor) + 1,
        )


@dataclass(frozen=True)
class LevelLine:
    """One traced polyline at a fixed level."""

    level: float
    points: np.ndarray
    status: LineStatus
    arc_length: float
    seed: np.ndarray
    cell_size: float
    jitter_scale: float = 0.0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ValueError(f"polyline needs shape (n>=2, 2), got {pts.shape}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "seed", np.asarray(self.seed, dtype=float))

    @property
    def is_closed(self) -> bool:
        return self.status is LineStatus.CLOSED


def signed_area(points: np.ndarray) -> float:
    """Shoelace area of a closed polyline (first vertex repeated at the end).

    Positive means counterclockwise, which under the tracing convention is a
    loop enclosing f > level; negative encloses f < level.
    """
    x = points[:, 0]
    y = points[:, 1]
    return 0.5 * float(np.sum(x[:-1] * y[1:] - x[1:] * y[:-1]))


def _check_cell_size(s: SuperpositionPotential, h: float):
    limit = s.shortest_period() / MIN_CELLS_PER_PERIOD
    if h > limit * (1 + 1e-12):
        raise BudgetError(
            f"cell size {h} too coarse: shortest period {s.shortest_period()} "
            f"needs h <= {limit}"
        )


class ChunkedField:
    """Lazily evaluated corner values of f on the global h-grid.

    Corners sit at (i*h, j*h) for all integers; values are computed one
    CHUNK x CHUNK block at a time and cached, so repeated traces and level
    probes over the same region share evaluations (values are level
    independent: the residual shift happens at read time).
    """

    def __init__(self, s: SuperpositionPotential, h: float):
        self.h = float(h)
        self._s = s
        self._chunks: dict[tuple[int, int], np.ndarray] = {}

    def _chunk(self, ci: int, cj: int) -> np.ndarray:
        key = (ci, cj)
        vals = self._chunks.get(key)
        if vals is None:
            xs = (ci * CHUNK + np.arange(CHUNK + 1)) * self.h
            ys = (cj * CHUNK + np.arange(CHUNK + 1)) * self.h
            pts = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1)
            vals = eval_superposition(self._s, pts)
            self._chunks[key] = vals
        return vals

    def corner(self, gi: int, gj: int) -> float:
        ci, cj = gi // CHUNK, gj // CHUNK
        return self._chunk(ci, cj)[gi - ci * CHUNK, gj - cj * CHUNK]

    def block(self, i0: int, j0: int, ni: int, nj: int) -> np.ndarray:
        """Corner values for gi in [i0, i0+ni), gj in [j0, j0+nj)."""
        out = np.empty((ni, nj))
        ci0, ci1 = i0 // CHUNK, (i0 + ni - 1) // CHUNK
        cj0, cj1 = j0 // CHUNK, (j0 + nj - 1) // CHUNK
        for ci in range(ci0, ci1 + 1):
            for cj in range(cj0, cj1 + 1):
                vals = self._chunk(ci, cj)
                gi_lo = max(i0, ci * CHUNK)
                gi_hi = min(i0 + ni, ci * CHUNK + CHUNK + 1)
                gj_lo = max(j0, cj * CHUNK)
                gj_hi = min(j0 + nj, cj * CHUNK + CHUNK + 1)
                if gi_lo >= gi_hi or gj_lo >= gj_hi:
                    continue
                out[gi_lo - i0 : gi_hi - i0, gj_lo - j0 : gj_hi - j0] = vals[
                    gi_lo - ci * CHUNK : gi_hi - ci * CHUNK,
                    gj_lo - cj * CHUNK : gj_hi - cj * CHUNK,
                ]
        return out

    @property
    def cells_evaluated(self) -> int:
        return len(self._chunks) * (CHUNK + 1) ** 2


def _window_corner_range(window: Rect, h: float) -> tuple[int, int, int, int]:
    i0 = math.floor(window.x0 / h)
    j0 = math.floor(window.y0 / h)
    i1 = math.ceil(window.x1 / h)
    j1 = math.ceil(window.y1 / h)
    return i0, j0, i1, j1


def find_seeds(
    s: SuperpositionPotential,
    level: float,
    window: Rect,
    h: float,
    field: ChunkedField | None = None,
) -> list[np.ndarray]:
    """One crossing point per connected piece of the level set in the window.

    Sign-change edges of f - level on the h-grid are grouped into connected
    components (edges sharing a cell belong to one crossing); each component
    contributes its lexicographically first edge's interpolated crossing.
    The count is therefore a resolution-independent estimate of how many
    distinct level-line pieces meet the window.
    """
    _check_cell_size(s, h)
    if field is None:
        field = ChunkedField(s, h)
    if abs(field.h - h) > 1e-15 * abs(h):
        raise ValueError("field cell size disagrees with h")

    i0, j0, i1, j1 = _window_corner_range(window, h)
    ni, nj = i1 - i0 + 1, j1 - j0 + 1
    g = field.block(i0, j0, ni, nj) - level
    delta = JITTER_REL * s.value_scale()
    g = np.where(np.abs(g) < delta, delta, g)
    pos = g > 0

    # Edge keys are (orient, gi, gj) with the lower-left endpoint named.
    edges: list[tuple[int, int, int]] = []
    h_cross = pos[:-1, :] != pos[1:, :]
    v_cross = pos[:, :-1] != pos[:, 1:]
    for ii, jj in zip(*np.nonzero(h_cross)):
        edges.append((_HORIZONTAL, i0 + int(ii), j0 + int(jj)))
    for ii, jj in zip(*np.nonzero(v_cross)):
        edges.append((_VERTICAL, i0 + int(ii), j0 + int(jj)))
    if not edges:
        return []

    index = {e: k for k, e in enumerate(edges)}
    parent = list(range(len(edges)))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a: int, b: int):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    # Any two crossed edges of one cell are part of the same local crossing.
    for i in range(i0, i1):
        for j in range(j0, j1):
            cell_edges = [
                k
                for e in (
                    (_HORIZONTAL, i, j),
                    (_HORIZONTAL, i, j + 1),
                    (_VERTICAL, i, j),
                    (_VERTICAL, i + 1, j),
                )
                if (k := index.get(e)) is not None
            ]
            for k in cell_edges[1:]:
                union(cell_edges[0], k)

    components: dict[int, tuple[int, int, int]] = {}
    for e, k in index.items():
        root = find(k)
        best = components.get(root)
        if best is None or (e[2], e[1], e[0]) < (best[2], best[1], best[0]):
            components[root] = e

    seeds = []
    for e in sorted(components.values(), key=lambda e: (e[2], e[1], e[0])):
        orient, gi, gj = e
        g0 = g[gi - i0, gj - j0]
        if orient == _HORIZONTAL:
            g1 = g[gi + 1 - i0, gj - j0]
            t = g0 / (g0 - g1)
            seeds.append(np.array([(gi + t) * h, gj * h]))
        else:
            g1 = g[gi - i0, gj + 1 - j0]
            t = g0 / (g0 - g1)
            seeds.append(np.array([gi * h, (gj + t) * h]))
    return seeds


class _Walker:
    """Marching-squares continuation at one level over a chunked field."""

    # Cell corners counterclockwise from the lower-left: 0:(i,j) 1:(i+1,j)
    # 2:(i+1,j+1) 3:(i,j+1).  Each edge named with its endpoints' slots.
    _CELL_EDGES = (
        (_HORIZONTAL, 0, 0, 0, 1),  # bottom: key offset (0,0), corners 0-1
        (_VERTICAL, 1, 0, 1, 2),    # right:  key offset (1,0), corners 1-2
        (_HORIZONTAL, 0, 1, 3, 2),  # top:    key offset (0,1), corners 3-2
        (_VERTICAL, 0, 0, 0, 3),    # left:   key offset (0,0), corners 0-3
    )

    def __init__(self, s: SuperpositionPotential, level: float, field: ChunkedField):
        self.s = s
        self.level = level
        self.field = field
        self.h = field.h
        self.delta = JITTER_REL * s.value_scale()
        self.jitter_hits = 0

    def residual(self, gi: int, gj: int) -> float:
        g = self.field.corner(gi, gj) - self.level
        if abs(g) < self.delta:
            self.jitter_hits += 1
            return self.delta
        return g

    def center_residual(self, cell: tuple[int, int]) -> float:
        p = np.array([(cell[0] + 0.5) * self.h, (cell[1] + 0.5) * self.h])
        g = eval_superposition(self.s, p) - self.level
        if abs(g) < self.delta:
            self.jitter_hits += 1
            return self.delta
        return g

    def edge_endpoints(self, edge: tuple[int, int, int]):
        orient, gi, gj = edge
        if orient == _HORIZONTAL:
            return (gi, gj), (gi + 1, gj)
        return (gi, gj), (gi, gj + 1)

    def crossing(self, edge: tuple[int, int, int]) -> np.ndarray:
        (ai, aj), (bi, bj) = self.edge_endpoints(edge)
        g0 = self.residual(ai, aj)
        g1 = self.residual(bi, bj)
        t = g0 / (g0 - g1)
        return np.array(
            [(ai + t * (bi - ai)) * self.h, (aj + t * (bj - aj)) * self.h]
        )

    def cell_edges(self, cell: tuple[int, int]):
        i, j = cell
        for orient, di, dj, ca, cb in self._CELL_EDGES:
            yield (orient, i + di, j + dj), ca, cb

    def crossed_edges(self, cell: tuple[int, int]):
        i, j = cell
        g = (
            self.residual(i, j),
            self.residual(i + 1, j),
            self.residual(i + 1, j + 1),
            self.residual(i, j + 1),
        )
        crossed = [
            (edge, ca, cb) for edge, ca, cb in self.cell_edges(cell) if g[ca] * g[cb] < 0
        ]
        return g, crossed

    def exit_edge(self, cell: tuple[int, int], entry: tuple[int, int, int]):
        g, crossed = self.crossed_edges(cell)
        others = [(e, ca, cb) for e, ca, cb in crossed if e != entry]
        if len(others) == 1:
            return others[0][0]
        if len(others) == 3:
            # Saddle cell: branches wrap the isolated-sign corners.  The
            # center's sign says which pair is isolated; the exit shares the
            # wrapped corner with the entry edge.
            entry_corners = next((ca, cb) for e, ca, cb in crossed if e == entry)
            gc = self.center_residual(cell)
            want_sign = -1.0 if gc > 0 else 1.0
            target = next(c for c in entry_corners if math.copysign(1, g[c]) == want_sign)
            return next(e for e, ca, cb in others if target in (ca, cb))
        raise RuntimeError(
            f"inconsistent sign pattern in cell {cell}: {len(others) + 1} crossed edges"
        )

    @staticmethod
    def neighbour(cell: tuple[int, int], edge: tuple[int, int, int]) -> tuple[int, int]:
        i, j = cell
        orient, gi, gj = edge
        if orient == _HORIZONTAL:
            return (i, j - 1) if gj == j else (i, j + 1)
        return (i - 1, j) if gi == i else (i + 1, j)

    def walk(self, start_edge, first_cell, p0, window, arc_limit, cell_limit):
        """Continue from start_edge into first_cell until a stop condition.

        Returns (points, arc, cells_used, reason); reason is one of
        "closed", "budget", "cells", "window".
        """
        pts: list[np.ndarray] = []
        arc = 0.0
        cells = 0
        p_prev = p0
        cell = first_cell
        edge = start_edge
        while True:
            if cells >= cell_limit:
                return pts, arc, cells, "cells"
            cells += 1
            out = self.exit_edge(cell, edge)
            if out == start_edge:
                pts.append(p0.copy())
                arc += float(np.hypot(*(p0 - p_prev)))
                return pts, arc, cells, "closed"
            q = self.crossing(out)
            pts.append(q)
            arc += float(np.hypot(*(q - p_prev)))
            p_prev = q
            if window is not None and not window.contains(q):
                return pts, arc, cells, "window"
            if arc >= arc_limit:
                return pts, arc, cells, "budget"
            cell = self.neighbour(cell, out)
            edge = out


def _locate_start(walker: _Walker, seed: np.ndarray):
    """Cell containing the seed and its crossed edge nearest to the seed."""
    h = walker.h
    fx, fy = seed[0] / h, seed[1] / h
    i, j = math.floor(fx), math.floor(fy)
    candidates = [(i, j)]
    # A seed returned by find_seeds sits exactly on a grid edge; guard the
    # floor against landing one cell off.
    if abs(fx - round(fx)) < 1e-9:
        candidates.append((int(round(fx)) - 1, j))
    if abs(fy - round(fy)) < 1e-9:
        candidates.append((i, int(round(fy)) - 1))
        if abs(fx - round(fx)) < 1e-9:
            candidates.append((int(round(fx)) - 1, int(round(fy)) - 1))
    for cell in candidates:
        _, crossed = walker.crossed_edges(cell)
        if crossed:
            best = min(
                crossed,
                key=lambda ec: (float(np.sum((walker.crossing(ec[0]) - seed) ** 2)), ec[0]),
            )
            return cell, best[0]
    raise SeedNotOnLevelError(
        f"no sign change of f - {walker.level} in the cell of seed {seed}"
    )


def trace_level_line(
    s: SuperpositionPotential,
    seed,
    level: float,
    budget: TraceBudget,
    window: Rect | None = None,
    field: ChunkedField | None = None,
) -> LevelLine:
    """Trace the level line through seed in both directions.

    The polyline is oriented with f > level on its left.  Tracing runs
    forward from the seed's grid edge, then backward, until the line closes,
    the combined arc length reaches the budget, the cell cap is hit, or (when
    a clip window is given) both ends have left the window.
    """
    _check_cell_size(s, budget.cell_size)
    if field is None:
        field = ChunkedField(s, budget.cell_size)
    seed = np.asarray(seed, dtype=float)
    walker = _Walker(s, level, field)
    cell, start_edge = _locate_start(walker, seed)

    # Initial direction: enter the cell that keeps f > level on the left.
    orient, gi, gj = start_edge
    if orient == _HORIZONTAL:
        up = walker.residual(gi, gj) > 0
        fwd_cell = (gi, gj) if up else (gi, gj - 1)
        bwd_cell = (gi, gj - 1) if up else (gi, gj)
    else:
        right = walker.residual(gi, gj + 1) > 0
        fwd_cell = (gi, gj) if right else (gi - 1, gj)
        bwd_cell = (gi - 1, gj) if right else (gi, gj)

    p0 = walker.crossing(start_edge)
    L = budget.max_arc_length
    fpts, farc, fcells, freason = walker.walk(
        start_edge, fwd_cell, p0, window, L / 2, budget.max_cells
    )
    if freason == "closed":
        points = [p0] + fpts
        status = LineStatus.CLOSED
        arc = farc
    else:
        bpts, barc, bcells, breason = walker.walk(
            start_edge,
            bwd_cell,
            p0,
            window,
            L - farc,
            budget.max_cells - fcells,
        )
        points = bpts[::-1] + [p0] + fpts
        arc = farc + barc
        if freason == "window" and breason == "window":
            status = LineStatus.OPEN_LEFT_WINDOW
        else:
            status = LineStatus.OPEN_BUDGET_EXHAUSTED

    return LevelLine(
        level=level,
        points=np.array(points),
        status=status,
        arc_length=arc,
        seed=seed,
        cell_size=budget.cell_size,
        jitter_scale=walker.delta if walker.jitter_hits else 0.0,
    )


@dataclass(frozen=True)
class EnergyInterval:
    """Levels that admit open lines, as found by bisection."""

    lo: float
    hi: float
    found: bool
    degenerate: bool
    n_probes: int


_OPEN, _BELOW, _ABOVE = "open", "below", "above"


class _IntervalProbe:
    """Sorts a level into below / above / inside the open-line range.

    A level is inside when some seeded line stays open for the full arc
    budget.  Otherwise the orientation of the longest closed loop decides
    the side: with values above the level kept on the left, loops around
    minima run clockwise (the level still sits below the open range) and
    loops around maxima run counterclockwise (above it).  Small loops of
    both orientations coexist at almost every level; the longest one is the
    one that tracks the large-scale connectivity, and its orientation flips
    exactly when the level sweeps through the open range.
    """

    def __init__(self, s, window, budget, max_seeds):
        self.s = s
        self.window = window
        self.budget = budget
        # Probe as deep as classification ever retraces, else loops with
        # perimeter just over the base budget would read as open lines and
        # inflate the interval.
        self.trace_budget = budget.scaled(4.0)
        self.max_seeds = max_seeds
        self.field = ChunkedField(s, budget.cell_size)
        i0, j0, i1, j1 = _window_corner_range(window, budget.cell_size)
        samples = self.field.block(i0, j0, i1 - i0 + 1, j1 - j0 + 1)
        self.f_min = float(samples.min())
        self.f_max = float(samples.max())
        self.count = 0

    def state(self, level: float) -> str:
        self.count += 1
        seeds = find_seeds(self.s, level, self.window, self.budget.cell_size, self.field)
        if not seeds:
            return _BELOW if level <= self.f_min else _ABOVE
        best_arc = -1.0
        best_area = 0.0
        for seed in seeds[: self.max_seeds]:
            line = trace_level_line(
                self.s, seed, level, self.trace_budget, window=None, field=self.field
            )
            if line.status is not LineStatus.CLOSED:
                return _OPEN
            if line.arc_length > best_arc:
                best_arc = line.arc_length
                best_area = signed_area(line.points)
        return _ABOVE if best_area > 0 else _BELOW


def energy_interval(
    s: SuperpositionPotential,
    window: Rect,
    budget: TraceBudget,
    eps_min: float,
    eps_max: float,
    tol_eps: float,
    max_seeds: int = 12,
    coarse_levels: int = 9,
) -> EnergyInterval:
    """Bisect for the interval of levels carrying open lines.

    Level states are totally ordered (below, inside, above), so the search
    runs in two stages.  A coarse scan looks for a level with an open line;
    if none shows up, bisecting the below/above transition either lands on
    one or collapses to the degenerate single-level interval, which is what
    the unperturbed separatrix case produces.  Around a level known to be
    inside, both boundaries are then refined with the open-line predicate
    alone until the brackets are narrower than tol_eps.
    """
    if not eps_min < eps_max:
        raise ValueError("need eps_min < eps_max")
    if tol_eps <= 0:
        raise ValueError("tol_eps must be positive")
    probe = _IntervalProbe(s, window, budget, max_seeds)

    levels = np.linspace(eps_min, eps_max, coarse_levels)
    states = {float(e): probe.state(float(e)) for e in levels}
    ordered = sorted(states)

    open_levels = [e for e in ordered if states[e] == _OPEN]
    if open_levels:
        open_lo = min(open_levels)
        open_hi = max(open_levels)
        below = [e for e in ordered if states[e] == _BELOW and e < open_lo]
        above = [e for e in ordered if states[e] == _ABOVE and e > open_hi]
        below_anchor = max(below) if below else eps_min
        above_anchor = min(above) if above else eps_max
    else:
        bracket = None
        for a, b in zip(ordered, ordered[1:]):
            if states[a] == _BELOW and states[b] == _ABOVE:
                bracket = (a, b)
                break
        if bracket is None:
            return EnergyInterval(0.0, 0.0, False, False, probe.count)
        lo_b, hi_b = bracket
        hit = None
        while hi_b - lo_b > tol_eps:
            mid = 0.5 * (lo_b + hi_b)
            st = probe.state(mid)
            if st == _OPEN:
                hit = mid
                break
            if st == _BELOW:
                lo_b = mid
            else:
                hi_b = mid
        if hit is None:
            mid = 0.5 * (lo_b + hi_b)
            return EnergyInterval(mid, mid, True, True, probe.count)
        open_lo = open_hi = hit
        below_anchor, above_anchor = lo_b, hi_b

    lo_out, lo_in = below_anchor, open_lo
    while lo_in - lo_out > tol_eps:
        mid = 0.5 * (lo_out + lo_in)
        if probe.state(mid) == _OPEN:
            lo_in = mid
        else:
            lo_out = mid

    hi_in, hi_out = open_hi, above_anchor
    while hi_out - hi_in > tol_eps:
        mid = 0.5 * (hi_in + hi_out)
        if probe.state(mid) == _OPEN:
            hi_in = mid
        else:
            hi_out = mid

    # When the open range touches a bracket edge the final bracket ends
    # coincide there, so taking midpoints is right in every case.
    lo = 0.5 * (lo_out + lo_in)
    hi = 0.5 * (hi_in + hi_out)
    if hi - lo < tol_eps:
        mid = 0.5 * (lo + hi)
        return EnergyInterval(mid, mid, True, True, probe.count)
    return EnergyInterval(lo, hi, True, False, probe.count)
