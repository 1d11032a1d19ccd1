import math

import numpy as np
import pytest

from moirelines.classifier import (
    Chaotic,
    Closed,
    LineFitError,
    Quadruple,
    Regular,
    Undetermined,
    ZeroAnnihilatorError,
    classification_to_dict,
    classify,
    classify_first_open,
    direction_from_quadruple,
    first_open_line,
    fit_direction,
    quadruple_basis,
    recover_quadruple,
    shift_family_check,
    strip_width,
)
from moirelines.geometry import EuclideanTransform, Rect
from moirelines.potential import (
    FourierTerm,
    PeriodicPotential,
    SuperpositionPotential,
    square_lattice,
    two_cosine_potential,
)
from moirelines.tracer import LineStatus, TraceBudget, find_seeds, trace_level_line

import oracles
from families import random_lattice, random_quadruple, single_harmonic_sum, two_layer_sum

TWO_PI = 2.0 * math.pi


class TestQuadruple:
    def test_valid(self):
        q = Quadruple(1, -1, 0, 0)
        assert q.as_tuple() == (1, -1, 0, 0)
        assert q.max_norm() == 1

    def test_rejects_common_factor(self):
        with pytest.raises(ValueError):
            Quadruple(2, -2, 0, 0)
        with pytest.raises(ValueError):
            Quadruple(0, 0, 0, 0)

    def test_rejects_wrong_leading_sign(self):
        with pytest.raises(ValueError):
            Quadruple(-1, 0, 0, 1)
        with pytest.raises(ValueError):
            Quadruple(0, -2, 1, 0)

    def test_normalized(self):
        assert Quadruple.normalized(-2, 0, 0, 2).as_tuple() == (1, 0, 0, -1)
        assert Quadruple.normalized(0, 3, -6, 0).as_tuple() == (0, 1, -2, 0)
        with pytest.raises(ValueError):
            Quadruple.normalized(0, 0, 0, 0)

    def test_random_normalized_is_constructible(self):
        rng = np.random.default_rng(401)
        for _ in range(50):
            q = random_quadruple(rng)
            assert Quadruple(*q.as_tuple()) == q


class TestQuadrupleBasis:
    def test_rows_are_both_reciprocals(self):
        rng = np.random.default_rng(402)
        for _ in range(20):
            lat_v, lat_u = random_lattice(rng), random_lattice(rng)
            rows = quadruple_basis(lat_v, lat_u)
            assert rows.shape == (4, 2)
            ov = oracles.cramer_reciprocal(tuple(lat_v.e1), tuple(lat_v.e2))
            ou = oracles.cramer_reciprocal(tuple(lat_u.e1), tuple(lat_u.e2))
            assert np.allclose(rows[:2], ov, atol=1e-12)
            assert np.allclose(rows[2:], ou, atol=1e-12)


def straight_noisy_line(make_polyline, angle=0.3, wiggle=0.1, n=400):
    t = np.linspace(0.0, 80.0, n)
    d = np.array([math.cos(angle), math.sin(angle)])
    normal = np.array([-d[1], d[0]])
    pts = t[:, None] * d + (wiggle * np.sin(t))[:, None] * normal
    return d, make_polyline(pts)


class TestDirectionFit:
    def test_recovers_axis_and_sign(self, make_polyline):
        d, line = straight_noisy_line(make_polyline)
        fit = fit_direction(line)
        assert float(fit.direction @ d) > 0.9999
        assert np.linalg.norm(fit.direction) == pytest.approx(1.0)

    def test_sign_follows_endpoint_displacement(self, make_polyline):
        d, line = straight_noisy_line(make_polyline)
        rev = make_polyline(line.points[::-1])
        fit = fit_direction(rev)
        assert float(fit.direction @ d) < -0.9999

    def test_residual_is_transverse_rms(self, make_polyline):
        # Transverse offset wiggle*sin(t) has RMS wiggle/sqrt(2).
        d, line = straight_noisy_line(make_polyline, wiggle=0.2)
        fit = fit_direction(line)
        assert fit.residual == pytest.approx(0.2 / math.sqrt(2), rel=0.05)

    def test_rejects_closed_and_short(self, make_polyline):
        from moirelines.tracer import LineStatus as LS
        _, line = straight_noisy_line(make_polyline)
        closed = make_polyline(line.points, status=LS.CLOSED)
        with pytest.raises(LineFitError):
            fit_direction(closed)
        short = make_polyline(line.points[:50])
        with pytest.raises(LineFitError):
            fit_direction(short)

    def test_strip_width_peak_to_peak(self, make_polyline):
        d, line = straight_noisy_line(make_polyline, wiggle=0.15)
        assert strip_width(line, d) == pytest.approx(0.3, rel=0.01)


class TestQuadrupleRecovery:
    def test_tiebreak_on_shared_annihilator_direction(self):
        # Identical unrotated square layers, diagonal direction: the
        # candidates (1,-1,0,0) and (0,0,1,-1) annihilate it equally well
        # and the norm cascade must settle on the first.
        lat = square_lattice(TWO_PI)
        diag = np.array([1.0, 1.0]) / math.sqrt(2.0)
        q = recover_quadruple(diag, lat, lat)
        assert q is not None
        assert q.as_tuple() == oracles.TIEBREAK_DIAGONAL_QUADRUPLE

    def test_round_trip_random(self):
        rng = np.random.default_rng(403)
        found = 0
        for _ in range(30):
            lat_v, lat_u = random_lattice(rng), random_lattice(rng)
            q = random_quadruple(rng, max_norm=4)
            try:
                d = direction_from_quadruple(q, lat_v, lat_u)
            except ZeroAnnihilatorError:
                continue
            got = recover_quadruple(d, lat_v, lat_u, bound=6)
            assert got is not None
            # Another quadruple may share the annihilator direction with a
            # smaller norm, but never a larger one.
            assert got.max_norm() <= q.max_norm()
            gq = got.as_tuple()
            basis = quadruple_basis(lat_v, lat_u)
            g = np.asarray(gq, dtype=float) @ basis
            assert abs(float(g @ d)) < 1e-9 * np.linalg.norm(g)
            if gq == q.as_tuple():
                found += 1
        assert found >= 25

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(404)
        for _ in range(15):
            lat_v, lat_u = random_lattice(rng), random_lattice(rng)
            q = random_quadruple(rng, max_norm=3)
            try:
                d = direction_from_quadruple(q, lat_v, lat_u)
            except ZeroAnnihilatorError:
                continue
            got = recover_quadruple(d, lat_v, lat_u, bound=5)
            basis = quadruple_basis(lat_v, lat_u)
            want = oracles.brute_quadruple(tuple(d), [tuple(r) for r in basis],
                                           bound=5, tol=1e-9)
            assert got is not None and want is not None
            assert got.as_tuple() == want

    def test_generic_direction_yields_nothing(self):
        rng = np.random.default_rng(405)
        lat_v, lat_u = random_lattice(rng), random_lattice(rng)
        theta = 0.8234517
        d = np.array([math.cos(theta), math.sin(theta)])
        assert recover_quadruple(d, lat_v, lat_u, bound=3) is None

    def test_zero_annihilator_rejected(self):
        lat = square_lattice(TWO_PI)
        with pytest.raises(ZeroAnnihilatorError):
            direction_from_quadruple(Quadruple(1, 0, -1, 0), lat, lat)

    def test_direction_is_unit_and_orthogonal(self):
        lat = square_lattice(TWO_PI)
        other = square_lattice(3.0)
        q = Quadruple(1, -1, 0, 0)
        d = direction_from_quadruple(q, lat, other)
        assert np.linalg.norm(d) == pytest.approx(1.0)
        basis = quadruple_basis(lat, other)
        g = np.array([1.0, -1.0, 0.0, 0.0]) @ basis
        assert abs(float(g @ d)) < 1e-12


class TestClassify:
    def test_closed_loop(self, two_cos):
        budget = TraceBudget.for_potential(two_cos, cells_per_period=16,
                                           length_periods=20.0)
        seeds = find_seeds(two_cos, 0.5, Rect.centered((0.0, 0.0), 5.0),
                           budget.cell_size)
        line = trace_level_line(two_cos, seeds[0], 0.5, budget)
        c = classify(two_cos, line, budget)
        assert isinstance(c, Closed)
        assert 2.5 < c.diameter < 4.5

    def test_masquerading_loop_closes_on_retrace(self, two_cos):
        # Arc budget below the loop perimeter leaves the trace open; the
        # doubled retrace inside classify must close it.
        h = TWO_PI / 16
        starved = TraceBudget(h, 8.0, 100000)
        seeds = find_seeds(two_cos, 0.5, Rect.centered((0.0, 0.0), 5.0), h)
        line = trace_level_line(two_cos, seeds[0], 0.5, starved)
        assert line.status is LineStatus.OPEN_BUDGET_EXHAUSTED
        c = classify(two_cos, line, starved)
        assert isinstance(c, Closed)

    def test_regular_line_in_three_frequency_field(self):
        s = single_harmonic_sum(delta=0.3, alpha=0.7)
        budget = TraceBudget.for_potential(s, cells_per_period=16,
                                           length_periods=40.0)
        window = Rect.centered((0.0, 0.0), 4 * TWO_PI)
        hit = classify_first_open(s, 0.0, window, budget)
        assert hit is not None
        line, c = hit
        assert isinstance(c, Regular)
        assert c.quadruple.as_tuple() == oracles.THREEQ_QUADRUPLE
        assert len(c.widths_by_length) == 3
        arcs = [a for a, _ in c.widths_by_length]
        assert arcs[0] < arcs[1] < arcs[2]
        widths = [w for _, w in c.widths_by_length]
        assert widths[2] <= widths[0] * 1.15
        # The fitted direction must be annihilated by the recovered sum.
        basis = quadruple_basis(s.v.lattice, s.rotated_u_lattice())
        g = np.asarray(c.quadruple.as_tuple(), dtype=float) @ basis
        assert abs(float(g @ c.direction)) < 1e-3 * np.linalg.norm(g)

    def test_chaotic_line_in_four_frequency_field(self):
        s = two_layer_sum(delta=0.05, alpha=0.7)
        budget = TraceBudget.for_potential(s, cells_per_period=16,
                                           length_periods=60.0)
        window = Rect.centered((0.0, 0.0), 4 * TWO_PI)
        hit = classify_first_open(s, 0.0, window, budget)
        assert hit is not None
        _, c = hit
        assert isinstance(c, Chaotic)
        widths = [w for _, w in c.widths_by_length]
        assert widths[2] >= 1.8 * widths[0]

    def test_first_open_line(self, two_cos):
        s = single_harmonic_sum(delta=0.3, alpha=0.7)
        budget = TraceBudget.for_potential(s, cells_per_period=16,
                                           length_periods=20.0)
        window = Rect.centered((0.0, 0.0), 3 * TWO_PI)
        line = first_open_line(s, 0.0, window, budget)
        assert line is not None
        assert line.status is LineStatus.OPEN_BUDGET_EXHAUSTED
        # A field with only closed loops yields nothing.
        b2 = TraceBudget.for_potential(two_cos, cells_per_period=16,
                                       length_periods=20.0)
        assert first_open_line(two_cos, 0.5, window, b2) is None


class TestSerialization:
    def test_closed_dict(self):
        d = classification_to_dict(Closed(diameter=3.25), {"level": 0.5})
        assert d["status"] == "closed"
        assert d["diameter"] == 3.25
        assert d["quadruple"] is None
        assert d["parameters"] == {"level": 0.5}

    def test_regular_dict(self):
        c = Regular(
            quadruple=Quadruple(1, 1, -1, 0),
            direction=np.array([0.6, 0.8]),
            strip_width=2.5,
            residual=0.01,
            widths_by_length=((10.0, 2.0), (20.0, 2.2), (40.0, 2.3)),
        )
        d = classification_to_dict(c)
        assert d["status"] == "regular"
        assert d["quadruple"] == [1, 1, -1, 0]
        assert d["direction"] == [0.6, 0.8]
        assert d["widths_by_length"] == [[10.0, 2.0], [20.0, 2.2], [40.0, 2.3]]

    def test_chaotic_and_undetermined_dict(self):
        c = classification_to_dict(Chaotic(widths_by_length=((1.0, 2.0),)))
        assert c["status"] == "chaotic"
        u = classification_to_dict(Undetermined(reason="widths between bands"))
        assert u["status"] == "undetermined"
        assert u["reason"] == "widths between bands"

    def test_rejects_other_types(self):
        with pytest.raises(TypeError):
            classification_to_dict("closed")


class TestShiftFamily:
    def test_commensurate_pair_skipped(self):
        v = two_cosine_potential(1.0)
        report = shift_family_check(v, v, oracles.COMMENSURATE_ALPHA,
                                    shifts=[(0.0, 0.0), (0.3, 0.3)])
        assert report.skipped
        assert "commensurate" in report.reason
        assert not report.quadruple_consistent

    def test_three_frequency_family_consistent(self):
        v = two_cosine_potential(TWO_PI)
        u = PeriodicPotential(square_lattice(TWO_PI),
                              (FourierTerm(1, 0, 0.3),))
        budget = TraceBudget(TWO_PI / 16, 30.0 * TWO_PI,
                             int(8 * 30 * 16) + 64)
        window = Rect.centered((0.0, 0.0), 3 * TWO_PI)
        report = shift_family_check(
            v, u, 0.7,
            shifts=[(0.0, 0.0), (2.0, 1.0)],
            budget=budget,
            window=window,
            tol_eps=1e-2,
        )
        assert not report.skipped
        assert len(report.classifications) == 2
        assert all(isinstance(c, Regular) for c in report.classifications)
        assert report.quadruple_consistent
        assert report.shared_quadruple.as_tuple() == oracles.THREEQ_QUADRUPLE
        assert report.intervals_consistent
        for interval in report.intervals:
            assert interval.found and not interval.degenerate
        for level, interval in zip(report.levels, report.intervals):
            assert interval.lo < level < interval.hi
