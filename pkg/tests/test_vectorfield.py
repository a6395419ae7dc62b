"""Bracket algebra: hand-computed examples, randomized identities, FD oracle."""

import random
from fractions import Fraction

import numpy as np
import pytest

from stlclab import poly
from stlclab.vectorfield import (
    NotAnEquilibriumError,
    ParseError,
    PolyVectorField,
    ad_iterate,
    compile_field,
    lie_bracket,
    linearize,
    parse_polynomial,
    parse_vector_field,
)


def vf(*exprs):
    return PolyVectorField.from_strings(list(exprs))


def as_floats(field, x):
    return np.array([float(v) for v in field.evaluate(list(x))])


def fd_bracket(f, g, x, h=1e-5):
    """Central finite-difference oracle for Dg.f - Df.g at a point."""
    x = np.asarray(x, dtype=float)
    n = len(x)

    def jac(field):
        cols = []
        for j in range(n):
            e = np.zeros(n)
            e[j] = h
            cols.append((as_floats(field, x + e) - as_floats(field, x - e)) / (2 * h))
        return np.stack(cols, axis=1)

    return jac(g) @ as_floats(f, x) - jac(f) @ as_floats(g, x)


def random_field(rng, n, deg=3, terms=4):
    comps = []
    for _ in range(n):
        p = poly.zero()
        for _ in range(rng.randrange(terms + 1)):
            mono = tuple(rng.randrange(deg + 1) for _ in range(n))
            if sum(mono) > deg:
                continue
            p = poly.add(p, {mono: Fraction(rng.randrange(-3, 4), rng.randrange(1, 4))})
        comps.append(p)
    return PolyVectorField(n, tuple(comps))


class TestParser:
    def test_round_trip(self):
        p = parse_polynomial("x1^2 - 1/2*x2*x3 + 3", 3)
        assert p == {(2, 0, 0): Fraction(1), (0, 1, 1): Fraction(-1, 2), (0, 0, 0): Fraction(3)}

    def test_parentheses_and_unary_minus(self):
        p = parse_polynomial("-(x1 - 2)^2", 1)
        assert p == {(2,): Fraction(-1), (1,): Fraction(4), (0,): Fraction(-4)}

    def test_rejects_bad_variable(self):
        with pytest.raises(ParseError):
            parse_polynomial("x3 + 1", 2)

    def test_rejects_nonconstant_division(self):
        with pytest.raises(ParseError):
            parse_polynomial("x1/x2", 2)

    def test_vector_field_component_count(self):
        with pytest.raises(ParseError):
            parse_vector_field("x1, x2", 3)


class TestBracket:
    def test_self_bracket_vanishes(self):
        f = vf("x1*x2", "x2^2 - x1", "1")
        assert lie_bracket(f, f).is_zero()

    def test_spec_example_three_dim(self):
        f0 = vf("0", "x1", "x2^2")
        f1 = vf("1", "0", "0")
        b = lie_bracket(f0, f1)
        assert b.components == vf("0", "-1", "0").components

    def test_spec_example_two_dim(self):
        f = vf("x2", "0")
        g = vf("0", "x1")
        b = lie_bracket(f, g)
        assert b.components == vf("-x1", "x2").components

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            lie_bracket(vf("x1"), vf("x1", "x2"))

    def test_antisymmetry_randomized(self):
        rng = random.Random(7)
        for _ in range(60):
            n = rng.randrange(1, 5)
            f, g = random_field(rng, n), random_field(rng, n)
            assert lie_bracket(f, g).components == (-lie_bracket(g, f)).components

    def test_jacobi_randomized(self):
        rng = random.Random(11)
        for _ in range(30):
            n = rng.randrange(2, 5)
            f, g, h = (random_field(rng, n, deg=3, terms=3) for _ in range(3))
            total = (
                lie_bracket(f, lie_bracket(g, h))
                + lie_bracket(g, lie_bracket(h, f))
                + lie_bracket(h, lie_bracket(f, g))
            )
            assert total.is_zero()

    def test_finite_difference_oracle(self):
        rng = random.Random(3)
        np_rng = np.random.default_rng(3)
        for _ in range(20):
            n = rng.randrange(2, 4)
            f, g = random_field(rng, n), random_field(rng, n)
            br = lie_bracket(f, g)
            for x in np_rng.uniform(-0.8, 0.8, size=(5, n)):
                exact = as_floats(br, x)
                approx = fd_bracket(f, g, x)
                assert np.allclose(exact, approx, rtol=1e-6, atol=1e-6)


class TestAdIterate:
    def test_base_case(self):
        f0 = vf("0", "x1", "x2^2")
        f1 = vf("1", "0", "0")
        assert ad_iterate(f0, f1, 0).components == f1.components

    def test_first_and_second_iterates(self):
        f0 = vf("0", "x1", "x2^2")
        f1 = vf("1", "0", "0")
        assert ad_iterate(f0, f1, 1).components == vf("0", "-1", "0").components
        assert ad_iterate(f0, f1, 2).components == vf("0", "0", "2*x2").components

    def test_negative_k_rejected(self):
        with pytest.raises(ValueError):
            ad_iterate(vf("0"), vf("1"), -1)


class TestLinearize:
    def test_double_integrator(self):
        pair = linearize(vf("0", "x1"), vf("1", "0"))
        assert pair.a == ((0, 0), (1, 0))
        assert pair.b == (1, 0)

    def test_quadratic_terms_vanish(self):
        pair = linearize(vf("0", "x1^2"), vf("1", "0"))
        assert pair.a == ((0, 0), (0, 0))

    def test_three_dim_example(self):
        pair = linearize(vf("x2", "x1 + x3^2", "0"), vf("0", "0", "1"))
        assert pair.a == ((0, 1, 0), (1, 0, 0), (0, 0, 0))
        assert pair.b == (0, 0, 1)

    def test_rejects_non_equilibrium(self):
        with pytest.raises(NotAnEquilibriumError):
            linearize(vf("1", "x1"), vf("1", "0"))


class TestCanonicalForm:
    def test_normalize_idempotent(self):
        rng = random.Random(19)
        for _ in range(40):
            f = random_field(rng, 3)
            once = tuple(poly.normalize(c) for c in f.components)
            twice = tuple(poly.normalize(c) for c in once)
            assert once == twice

    def test_zero_coefficients_never_stored(self):
        p = poly.add({(1,): Fraction(2)}, {(1,): Fraction(-2)})
        assert p == {}


class TestCompiledEvaluator:
    def test_matches_exact_evaluation(self):
        rng = random.Random(5)
        np_rng = np.random.default_rng(5)
        for _ in range(10):
            f = random_field(rng, 3)
            ev = compile_field(f)
            xs = np_rng.uniform(-1, 1, size=(7, 3))
            batch = ev(xs)
            for i, x in enumerate(xs):
                assert np.allclose(batch[i], as_floats(f, x), rtol=1e-12, atol=1e-12)


class TestConjugation:
    def test_substitute_linear_exact(self):
        # p(x) = x1^2 under x1 = y1 + y2 -> y1^2 + 2 y1 y2 + y2^2
        p = {(2, 0): Fraction(1)}
        m = [[Fraction(1), Fraction(1)], [Fraction(0), Fraction(1)]]
        q = poly.substitute_linear(p, m)
        assert q == {(2, 0): Fraction(1), (1, 1): Fraction(2), (0, 2): Fraction(1)}

    def test_bracket_commutes_with_conjugation(self):
        # rational rotation (3/5, 4/5)
        q = [[Fraction(3, 5), Fraction(-4, 5)], [Fraction(4, 5), Fraction(3, 5)]]
        rng = random.Random(23)
        for _ in range(10):
            f, g = random_field(rng, 2), random_field(rng, 2)
            lhs = lie_bracket(f.conjugate(q), g.conjugate(q))
            rhs = lie_bracket(f, g).conjugate(q)
            assert lhs.components == rhs.components
