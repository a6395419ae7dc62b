"""Filtration, bad-index, parity and steering tests with exact oracles."""

import random
from fractions import Fraction

import numpy as np
import pytest

from stlclab import rational, systems
from stlclab.obstruction import (
    DriftDirectionError,
    SingularGramianError,
    analyze_system,
    drift_direction,
    enumerate_brackets,
    first_bad_index,
    format_filtration,
    gramian_steer,
    kalman_rank,
    lie_rank_check,
    make_filtration,
    nonlinear_steer,
    parity_check,
    s1_basis,
    s2_span,
)
from stlclab.vectorfield import LinearPair, PolyVectorField, lie_bracket, linearize

F = Fraction


def pair_of(a_rows, b):
    return LinearPair(tuple(tuple(F(x) for x in r) for r in a_rows), tuple(F(x) for x in b))


class TestKalman:
    def test_double_integrator(self):
        assert kalman_rank(pair_of([[0, 0], [1, 0]], [1, 0])) == 2

    def test_zero_matrix(self):
        assert kalman_rank(pair_of([[0] * 3] * 3, [1, 0, 0])) == 1

    def test_cubic_drift_system(self):
        f0, f1 = systems.cubic_drift()
        assert kalman_rank(linearize(f0, f1)) == 2


class TestS1Basis:
    def test_double_integrator(self):
        basis = s1_basis(*systems.double_integrator())
        assert basis == [[1, 0], [0, -1]]

    def test_quadratic_drift(self):
        assert s1_basis(*systems.quadratic_drift()) == [[1, 0]]

    def test_three_dim(self):
        f0 = PolyVectorField.from_strings(["0", "x1", "x2^2"])
        f1 = PolyVectorField.from_strings(["1", "0", "0"])
        basis = s1_basis(f0, f1)
        assert rational.rank(basis) == 2
        assert rational.in_span(basis, [F(1), F(0), F(0)])
        assert rational.in_span(basis, [F(0), F(1), F(0)])

    def test_matches_kalman_span_randomized(self):
        rng = random.Random(77)
        for _ in range(25):
            n = rng.randrange(2, 5)
            a = [[F(rng.randrange(-2, 3)) for _ in range(n)] for _ in range(n)]
            b = [F(rng.randrange(-2, 3)) for _ in range(n)]
            comps = []
            for i in range(n):
                p = {}
                for j in range(n):
                    if a[i][j]:
                        mono = tuple(1 if k == j else 0 for k in range(n))
                        p[mono] = a[i][j]
                comps.append(p)
            f0 = PolyVectorField(n, tuple(comps))
            f1 = PolyVectorField.constant(b)
            basis = s1_basis(f0, f1)  # internal cross-check raises on mismatch
            assert len(basis) == kalman_rank(pair_of(a, b))


class TestS2Span:
    def test_linear_system_contained(self):
        filt = s2_span(*systems.double_integrator(), depth=4)
        assert filt.s2_in_s1 is True
        assert filt.d == 2

    def test_quadratic_drift_witness(self):
        filt = s2_span(*systems.quadratic_drift(), depth=3)
        assert filt.s2_in_s1 is False
        bad = [w for w in filt.s2_witnesses if not w.in_s1]
        assert any(w.expr == "[f1, [f0, f1]]" and w.value == (0, -2) for w in bad)

    def test_invariant_graph_contained_depth4(self):
        filt = s2_span(*systems.invariant_graph(), depth=4)
        assert filt.s2_in_s1 is True
        assert filt.d == 2

    def test_matches_naive_enumeration(self):
        # brute-force oracle: every ordered bracket word, no dedup
        def naive_values(f0, f1, depth):
            words = [[(f0, 0), (f1, 1)]]
            for length in range(2, depth + 1):
                level = []
                for l1 in range(1, length):
                    for w1, c1 in words[l1 - 1]:
                        for w2, c2 in words[length - l1 - 1]:
                            level.append((lie_bracket(w1, w2), c1 + c2))
                words.append(level)
            vals = []
            for level in words:
                for w, c in level:
                    if c <= 2:
                        v = w.value_at_zero()
                        if any(x != 0 for x in v):
                            vals.append(list(v))
            return vals

        for make in (systems.quadratic_drift, systems.invariant_graph, systems.cubic_drift):
            f0, f1 = make()
            filt = s2_span(f0, f1, depth=4)
            naive = naive_values(f0, f1, 4)
            span_fast = filt.s1_basis + [list(w.value) for w in filt.s2_witnesses]
            assert rational.rank(naive) == rational.rank(span_fast)


class TestBadIndexAndDrift:
    def test_quadratic_drift(self):
        f0, f1 = systems.quadratic_drift()
        assert first_bad_index(f0, f1) == 1
        assert drift_direction(f0, f1, 1) == (0, 2)

    def test_cubic_drift(self):
        f0, f1 = systems.cubic_drift()
        assert first_bad_index(f0, f1) == 2
        assert drift_direction(f0, f1, 2) == (0, 0, 2)

    def test_linear_system_has_none(self):
        assert first_bad_index(*systems.double_integrator()) is None

    def test_drift_direction_error_when_projection_zero(self):
        f0, f1 = systems.double_integrator()
        with pytest.raises(DriftDirectionError):
            drift_direction(f0, f1, 1)

    def test_invariance_under_orthogonal_conjugation(self):
        f0, f1 = systems.cubic_drift()
        q = [
            [F(1), F(0), F(0)],
            [F(0), F(3, 5), F(-4, 5)],
            [F(0), F(4, 5), F(3, 5)],
        ]
        g0, g1 = f0.conjugate(q), f1.conjugate(q)
        assert first_bad_index(g0, g1) == first_bad_index(f0, f1) == 2
        d_x = drift_direction(f0, f1, 2)
        d_y = drift_direction(g0, g1, 2)
        expected = rational.mat_vec(rational.transpose(q), list(d_x))
        assert list(d_y) == expected


class TestProjectors:
    def test_exact_identities(self):
        for make in (systems.double_integrator, systems.quadratic_drift, systems.cubic_drift):
            filt = make_filtration(*make())
            p, pp = filt.projector_p, filt.projector_perp
            assert rational.mat_mul(p, p) == p
            assert rational.transpose(p) == p
            n = filt.dim
            ident = rational.mat_identity(n)
            assert [[p[i][j] + pp[i][j] for j in range(n)] for i in range(n)] == ident
            for v in filt.s1_basis:
                assert rational.mat_vec(p, v) == list(v)

    def test_drift_dir_fixed_by_perp(self):
        f0, f1 = systems.cubic_drift()
        filt = analyze_system(f0, f1)
        d = list(filt.drift_dir)
        assert rational.mat_vec(filt.projector_perp, d) == d
        assert rational.mat_vec(filt.projector_p, d) == [F(0)] * 3


class TestLieRank:
    def test_double_integrator(self):
        assert lie_rank_check(*systems.double_integrator(), depth=2) == (True, 2)

    def test_quadratic_drift_needs_depth3(self):
        assert lie_rank_check(*systems.quadratic_drift(), depth=3) == (True, 2)

    def test_stuck_line(self):
        assert lie_rank_check(*systems.stuck_line(), depth=5) == (False, 1)


class TestParity:
    def test_linear_all_equal(self):
        report = parity_check(*systems.double_integrator(), depth=5, kmax=1)
        assert report.violations == []

    def test_quadratic_drift_violation(self):
        report = parity_check(*systems.quadratic_drift(), depth=4, kmax=0)
        assert report.violations == [0]

    def test_cubic_drift_violation_within_depth5(self):
        report = parity_check(*systems.cubic_drift(), depth=5, kmax=0)
        assert report.violations == [0]
        lv = report.levels[0]
        assert (lv.dim_odd, lv.dim_even) == (2, 3)


class TestGramianSteer:
    def test_zero_initial_state(self):
        ctrl = gramian_steer(pair_of([[0, 0], [1, 0]], [1, 0]), [0.0, 0.0], 1.0)
        assert np.max(np.abs(ctrl.values)) < 1e-12
        assert ctrl.residual < 1e-12

    def test_double_integrator_closed_form_gramian(self):
        from stlclab.obstruction import _gramian_exact_nilpotent

        pair = pair_of([[0, 0], [1, 0]], [1, 0])
        w = _gramian_exact_nilpotent(pair, F(1))
        assert np.allclose(w, [[1.0, 0.5], [0.5, 1.0 / 3.0]], rtol=0, atol=1e-12)
        ctrl = gramian_steer(pair, [1.0, 0.0], 1.0)
        assert ctrl.residual <= 1e-8

    def test_scalar_system_constant_control(self):
        ctrl = gramian_steer(pair_of([[0]], [1]), [1.0], 1.0)
        assert np.allclose(ctrl.values, -1.0, atol=1e-12)
        assert ctrl.residual <= 1e-10

    def test_singular_gramian_reported(self):
        with pytest.raises(SingularGramianError):
            gramian_steer(pair_of([[0, 0], [0, 0]], [1, 0]), [0.1, 0.1], 1.0)


class TestNonlinearSteer:
    def test_linear_system_one_iteration(self):
        f0, f1 = systems.double_integrator()
        ctrl = nonlinear_steer(f0, f1, [0.05, -0.02], 1.0, iters=5)
        assert ctrl.residual_history[0] <= 1e-8

    def test_quadratic_system_converges(self):
        f0 = PolyVectorField.from_strings(["0", "x1 + x1^2"])
        f1 = PolyVectorField.from_strings(["1", "0"])
        ctrl = nonlinear_steer(f0, f1, [0.01, 0.01], 1.0, iters=10)
        assert ctrl.residual <= 1e-6

    def test_zero_initial_state(self):
        f0, f1 = systems.double_integrator()
        ctrl = nonlinear_steer(f0, f1, [0.0, 0.0], 1.0, iters=3)
        assert ctrl.residual <= 1e-14
        assert np.max(np.abs(ctrl.values)) <= 1e-12


class TestReport:
    def test_format_mentions_key_facts(self):
        filt = analyze_system(*systems.cubic_drift())
        text = format_filtration(filt)
        assert "bad index k = 2" in text
        assert "(0, 0, 2)" in text
        assert "dimension 2 of 3" in text
