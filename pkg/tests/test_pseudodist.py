"""Tests for the pseudo-distribution moment machinery.

Oracles: brute-force monomial enumeration, direct weighted power sums
over explicit support points, and polynomial evaluation on random grids.
"""

import itertools
import math

import numpy as np
import pytest

from rankone.errors import (
    BadWeights,
    DegenerateWeight,
    DegreeExceeded,
    DegreeExhausted,
    DimensionMismatch,
    IllFormed,
    NotSOS,
)
from rankone.pseudodist import (
    ConstraintSpec,
    MonomialIndex,
    PseudoDistribution,
    ReweightPolynomial,
    embed_actual_distribution,
    equality_residual,
    from_support,
    moment_matrix,
    poly_add,
    poly_degree,
    poly_eval,
    poly_linear,
    poly_mul,
    poly_pow,
    poly_quadratic,
    read_pseudodist,
    reweight,
    validate,
    write_pseudodist,
)


def brute_monomials(num_vars, max_degree):
    """Oracle: all exponent tuples of degree <= max_degree, graded, then lex
    by the combination order (first variable heaviest)."""
    out = []
    for d in range(max_degree + 1):
        block = set()
        for combo in itertools.product(range(num_vars), repeat=d):
            e = [0] * num_vars
            for j in combo:
                e[j] += 1
            block.add(tuple(e))
        out.append(block)
    return out


def support_moment(points, weights, exponent):
    """Oracle: exact weighted power sum for one monomial."""
    total = 0.0
    for pt, w in zip(points, weights):
        term = w
        for x, e in zip(pt, exponent):
            term *= x ** e
        total += term
    return total


def random_discrete(rng, num_points, num_vars, degree):
    pts = rng.uniform(-1.5, 1.5, size=(num_points, num_vars))
    w = rng.uniform(0.1, 1.0, size=num_points)
    w /= w.sum()
    return pts, w, embed_actual_distribution(pts, w, degree)


def random_poly(rng, index, max_degree):
    count = index.count_through(max_degree)
    coefs = rng.standard_normal(count)
    return {tuple(int(v) for v in index.exponents[i]): float(coefs[i])
            for i in range(count)}


def poly_constant_2(c):
    return {(0, 0): float(c)}


# -- monomial table ----------------------------------------------------------


def test_index_counts_match_binomials():
    """Table size is C(n + d, d), per degree block and cumulatively."""
    for n in (1, 2, 3, 5):
        for d in (0, 1, 2, 4, 6):
            ix = MonomialIndex(n, d)
            assert ix.size == math.comb(n + d, d)
            for k in range(d + 1):
                assert ix.count_through(k) == math.comb(n + k, k)


def test_index_is_graded_and_complete():
    """Every monomial appears once, grouped by total degree, constant first."""
    ix = MonomialIndex(3, 4)
    blocks = brute_monomials(3, 4)
    seen = [tuple(int(v) for v in row) for row in ix.exponents]
    assert seen[0] == (0, 0, 0)
    assert len(seen) == len(set(seen))
    pos = 0
    for d, block in enumerate(blocks):
        got = set(seen[pos:pos + len(block)])
        assert got == block
        assert all(sum(e) == d for e in got)
        pos += len(block)


def test_index_lookup_round_trip():
    ix = MonomialIndex(4, 5)
    for i in range(ix.size):
        e = tuple(int(v) for v in ix.exponents[i])
        assert ix.index_of(e) == i


def test_index_rejects_out_of_range():
    ix = MonomialIndex(2, 3)
    with pytest.raises(DegreeExceeded):
        ix.index_of((2, 2))
    with pytest.raises(DimensionMismatch):
        MonomialIndex(0, 2)


def test_shifted_indices_match_direct_lookup():
    ix = MonomialIndex(3, 6)
    count = ix.count_through(3)
    got = ix.indices_of_shifted(count, (1, 0, 2))
    for i in range(count):
        e = tuple(int(v) for v in ix.exponents[i] + np.array([1, 0, 2]))
        assert got[i] == ix.index_of(e)
    with pytest.raises(DegreeExceeded):
        ix.indices_of_shifted(ix.size, (1, 0, 0))


# -- polynomial helpers --------------------------------------------------------


def test_poly_builders_evaluate_correctly():
    """Linear and quadratic builders agree with direct formulas on a grid."""
    rng = np.random.default_rng(11)
    vec = rng.standard_normal(3)
    q = rng.standard_normal((3, 3))
    pts = rng.standard_normal((40, 3))
    lin = poly_eval(poly_linear(vec), pts)
    np.testing.assert_allclose(lin, pts @ vec, atol=1e-12)
    quad = poly_eval(poly_quadratic(q), pts)
    direct = np.einsum("ki,ij,kj->k", pts, 0.5 * (q + q.T), pts)
    np.testing.assert_allclose(quad, direct, atol=1e-10)


def test_poly_arithmetic_against_evaluation():
    """add/mul/pow commute with pointwise evaluation."""
    rng = np.random.default_rng(5)
    ix = MonomialIndex(2, 3)
    pts = rng.uniform(-1, 1, size=(25, 2))
    for _ in range(20):
        p = random_poly(rng, ix, 2)
        q = random_poly(rng, ix, 3)
        np.testing.assert_allclose(
            poly_eval(poly_add(p, q, scale=-2.0), pts),
            poly_eval(p, pts) - 2.0 * poly_eval(q, pts), atol=1e-10)
        np.testing.assert_allclose(
            poly_eval(poly_mul(p, q), pts),
            poly_eval(p, pts) * poly_eval(q, pts), atol=1e-9)
    p = random_poly(rng, ix, 2)
    np.testing.assert_allclose(
        poly_eval(poly_pow(p, 3), pts), poly_eval(p, pts) ** 3, rtol=1e-9, atol=1e-9)


def test_poly_degree_ignores_zero_coefficients():
    assert poly_degree({(3, 0): 0.0, (1, 1): 2.0}) == 2
    assert poly_degree({}) == 0


# -- embedding and expectation -------------------------------------------------


def test_embedded_moments_match_power_sums():
    """Every stored moment equals the direct weighted power sum."""
    rng = np.random.default_rng(2)
    pts, w, mu = random_discrete(rng, 6, 2, 6)
    for i in range(mu.index.size):
        e = tuple(int(v) for v in mu.index.exponents[i])
        assert abs(mu.moments[i] - support_moment(pts, w, e)) < 1e-12


def test_expectation_is_linear_and_matches_evaluation():
    rng = np.random.default_rng(3)
    pts, w, mu = random_discrete(rng, 5, 3, 4)
    ix = MonomialIndex(3, 4)
    for _ in range(30):
        p = random_poly(rng, ix, 4)
        q = random_poly(rng, ix, 2)
        direct = float(np.dot(w, poly_eval(p, pts)))
        assert abs(mu.expect(p) - direct) < 1e-10
        lhs = mu.expect(poly_add(p, q, scale=3.0))
        assert abs(lhs - (mu.expect(p) + 3.0 * mu.expect(q))) < 1e-10


def test_expectation_rejects_high_degree():
    rng = np.random.default_rng(4)
    _, _, mu = random_discrete(rng, 4, 2, 4)
    with pytest.raises(DegreeExceeded):
        mu.expect({(3, 2): 1.0})


def test_univariate_points_accepted_as_flat_array():
    """1-d point input means one variable, not one point."""
    mu = embed_actual_distribution(np.array([1.0, -1.0]), np.array([0.5, 0.5]), 4)
    assert mu.num_vars == 1
    assert abs(mu.expect({(2,): 1.0}) - 1.0) < 1e-12
    assert abs(mu.expect({(1,): 1.0})) < 1e-12


def test_embed_rejects_bad_weights():
    pts = np.zeros((2, 2))
    with pytest.raises(BadWeights):
        embed_actual_distribution(pts, np.array([0.7, 0.7]), 2)
    with pytest.raises(BadWeights):
        embed_actual_distribution(pts, np.array([1.5, -0.5]), 2)
    with pytest.raises(DimensionMismatch):
        embed_actual_distribution(pts, np.array([1.0]), 2)


# -- positivity ----------------------------------------------------------------


def test_moment_matrix_entries():
    """M[a, b] is the moment of the product monomial."""
    rng = np.random.default_rng(6)
    pts, w, mu = random_discrete(rng, 5, 2, 4)
    m = moment_matrix(mu)
    ix = mu.index
    half = ix.count_through(2)
    assert m.shape == (half, half)
    for a in range(half):
        for b in range(half):
            e = tuple(int(v) for v in ix.exponents[a] + ix.exponents[b])
            assert abs(m[a, b] - support_moment(pts, w, e)) < 1e-12


def test_square_expectations_nonnegative():
    """E~ f^2 >= 0 for ten thousand random low-degree f."""
    rng = np.random.default_rng(7)
    _, _, mu = random_discrete(rng, 8, 2, 6)
    ix = MonomialIndex(2, 6)
    worst = 0.0
    for _ in range(10_000):
        f = random_poly(rng, ix, 3)
        worst = min(worst, mu.expect(poly_mul(f, f)))
    assert worst >= -1e-9


def test_cauchy_schwarz_on_pseudo_expectations():
    rng = np.random.default_rng(8)
    _, _, mu = random_discrete(rng, 6, 2, 4)
    ix = MonomialIndex(2, 4)
    for _ in range(200):
        f = random_poly(rng, ix, 2)
        g = random_poly(rng, ix, 2)
        lhs = mu.expect(poly_mul(f, g))
        rhs = math.sqrt(max(mu.expect(poly_mul(f, f)), 0.0)
                        * max(mu.expect(poly_mul(g, g)), 0.0))
        assert lhs <= rhs + 1e-9


def test_localized_moment_matrix_psd_for_valid_localizer():
    """Localizing by a polynomial nonnegative on the support keeps PSD."""
    rng = np.random.default_rng(9)
    pts = rng.standard_normal((7, 2))
    pts *= (0.9 * rng.uniform(0.2, 1.0, 7) / np.linalg.norm(pts, axis=1))[:, None]
    w = np.full(7, 1.0 / 7.0)
    mu = embed_actual_distribution(pts, w, 6)
    ball = poly_add(poly_constant_2(1.0), poly_quadratic(-np.eye(2)))  # 1 - |x|^2
    loc = moment_matrix(mu, ball)
    assert np.linalg.eigvalsh(loc)[0] >= -1e-10


# -- validation ----------------------------------------------------------------


def test_validate_accepts_actual_distribution():
    rng = np.random.default_rng(10)
    _, _, mu = random_discrete(rng, 6, 3, 4)
    rep = validate(mu)
    assert rep.ok()
    assert rep.normalized
    assert rep.min_moment_eig >= -1e-10


def test_validate_flags_corrupted_moments():
    rng = np.random.default_rng(12)
    _, _, mu = random_discrete(rng, 6, 2, 4)
    bad = mu.moments.copy()
    bad[mu.index.index_of((2, 0))] = -1.0  # E~ x^2 < 0 breaks PSD
    broken = PseudoDistribution(mu.index, bad, mu.degree)
    assert not validate(broken).ok()


def test_equality_residual_measures_constraint():
    """Residual is ~0 on the constraint's support, large off it."""
    pts = np.array([[1.0, 0.0], [-1.0, 0.0]])  # on the circle x^2 + y^2 = 1
    w = np.array([0.5, 0.5])
    circle = poly_add(poly_quadratic(np.eye(2)), poly_constant_2(-1.0))
    mu = embed_actual_distribution(pts, w, 6, (ConstraintSpec.equality(circle),))
    assert equality_residual(mu, circle) < 1e-12
    assert validate(mu).ok()
    off = embed_actual_distribution(2.0 * pts, w, 6)
    assert equality_residual(off, circle) > 1.0


# -- reweighting ---------------------------------------------------------------


def test_reweight_matches_direct_formula_on_support():
    """mu' weights are w_i p(x_i) / sum, so every moment follows."""
    rng = np.random.default_rng(13)
    pts, w, mu = random_discrete(rng, 6, 2, 6)
    g = poly_linear(rng.standard_normal(2))
    rw = ReweightPolynomial.from_square(g)
    nu = reweight(mu, rw)
    vals = poly_eval(rw.poly(), pts)
    w2 = w * vals
    w2 /= w2.sum()
    ix = MonomialIndex(2, 4)
    for _ in range(50):
        p = random_poly(rng, ix, 4)
        direct = float(np.dot(w2, poly_eval(p, pts)))
        assert abs(nu.expect(p) - direct) < 1e-10


def test_reweight_moment_path_agrees_with_support_path():
    """Dropping the atoms and reweighting through moments gives the same
    truncated table, at the reduced degree."""
    rng = np.random.default_rng(14)
    pts, w, mu = random_discrete(rng, 5, 2, 6)
    blind = PseudoDistribution(mu.index, mu.moments, mu.degree)
    g = poly_add(poly_linear(rng.standard_normal(2)), poly_constant_2(0.7))
    rw = ReweightPolynomial.from_square(g)
    a = reweight(mu, rw)
    b = reweight(blind, rw)
    assert b.degree == mu.degree - 2
    for i in range(b.index.size):
        e = tuple(int(v) for v in b.index.exponents[i])
        assert abs(b.moments[i] - a.expect({e: 1.0})) < 1e-9


def test_reweight_composition_matches_product():
    """Reweighting twice equals reweighting once by the product."""
    rng = np.random.default_rng(15)
    pts, w, mu = random_discrete(rng, 6, 2, 8)
    r1 = ReweightPolynomial.from_square(poly_linear(rng.standard_normal(2)))
    r2 = ReweightPolynomial.from_square(
        poly_add(poly_linear(rng.standard_normal(2)), poly_constant_2(0.3)))
    seq = reweight(reweight(mu, r1), r2)
    par = reweight(mu, r1.product(r2))
    ix = MonomialIndex(2, 4)
    for _ in range(30):
        p = random_poly(rng, ix, 4)
        assert abs(seq.expect(p) - par.expect(p)) < 1e-9


def test_reweight_checks_certificates():
    claim = ReweightPolynomial.from_coefficients(
        {(2, 0): 1.0, (0, 0): -1.0},  # x^2 - 1 is nowhere a sum of squares
        certificate=[{(1, 0): 1.0}])
    rng = np.random.default_rng(16)
    _, _, mu = random_discrete(rng, 4, 2, 6)
    with pytest.raises(NotSOS):
        reweight(mu, claim)


def test_reweight_without_certificate_uses_gram_check():
    rng = np.random.default_rng(17)
    _, _, mu = random_discrete(rng, 4, 2, 6)
    ok = ReweightPolynomial.from_coefficients(
        {(2, 0): 1.0, (1, 1): 2.0, (0, 2): 1.0})  # (x + y)^2, no certificate
    nu = reweight(mu, ok)
    assert validate(nu).ok()
    bad = ReweightPolynomial.from_coefficients({(1, 0): 1.0, (0, 0): 1.0})
    with pytest.raises(NotSOS):
        reweight(mu, bad)


def test_reweight_degree_bookkeeping():
    """Moment-backed loses deg p, support-backed keeps the declared degree."""
    rng = np.random.default_rng(18)
    _, _, mu = random_discrete(rng, 5, 2, 6)
    rw = ReweightPolynomial.from_square(poly_linear(np.array([1.0, 1.0])))
    assert reweight(mu, rw).degree == 6
    blind = PseudoDistribution(mu.index, mu.moments, mu.degree)
    low = reweight(blind, rw)
    assert low.degree == 4
    quartic = ReweightPolynomial.from_square(poly_quadratic(np.eye(2)))
    with pytest.raises(DegreeExhausted):
        reweight(low, quartic)


def test_reweight_rejects_degenerate_weight():
    """Reweighting by a square vanishing on the whole support has no mass."""
    pts = np.array([[1.0, 0.0], [2.0, 0.0]])
    mu = embed_actual_distribution(pts, np.array([0.5, 0.5]), 6)
    rw = ReweightPolynomial.from_square(poly_linear(np.array([0.0, 1.0])))
    with pytest.raises(DegenerateWeight):
        reweight(mu, rw)
    blind = PseudoDistribution(mu.index, mu.moments, mu.degree)
    with pytest.raises(DegenerateWeight):
        reweight(blind, rw)


def test_reweight_keeps_constraints_within_budget():
    circle = ConstraintSpec.equality(
        poly_add(poly_quadratic(np.eye(2)), poly_constant_2(-1.0)))
    pts = np.array([[0.0, 1.0], [1.0, 0.0], [0.0, -1.0]])
    mu = embed_actual_distribution(pts, np.ones(3) / 3.0, 6, (circle,))
    rw = ReweightPolynomial.from_square(
        poly_add(poly_linear(np.array([1.0, 0.0])), poly_constant_2(2.0)))
    nu = reweight(mu, rw)
    assert circle in nu.constraints
    assert equality_residual(nu, circle.poly()) < 1e-10


# -- serialization -------------------------------------------------------------


def test_pseudodist_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(19)
    _, _, mu = random_discrete(rng, 6, 3, 4)
    path = tmp_path / "dist.txt"
    write_pseudodist(path, mu)
    back = read_pseudodist(path)
    assert back.num_vars == 3 and back.degree == 4
    np.testing.assert_array_equal(back.moments, mu.moments)
    write_pseudodist(path, back)
    again = read_pseudodist(path)
    np.testing.assert_array_equal(again.moments, mu.moments)


def test_read_pseudodist_rejects_malformed(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("XX 2 4\n1.0\n")
    with pytest.raises(IllFormed):
        read_pseudodist(path)
    path.write_text("PD 2 4\n1.0 2.0\n")
    with pytest.raises(IllFormed):
        read_pseudodist(path)
    ix = MonomialIndex(1, 2)
    path.write_text("PD 1 2\n1.0 nan 0.5\n")
    with pytest.raises(IllFormed):
        read_pseudodist(path)
