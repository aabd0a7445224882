"""Semidefinite feasibility by operator splitting.

A problem is a moment vector y (graded monomial table) subject to linear
equalities (constraint polynomials times all admissible monomial
multipliers, plus the normalization E~ 1 = 1) and to PSD conditions on
one or more localizing moment matrices.

The solver runs Douglas-Rachford splitting in the space of stacked
moment-matrix blocks S:

    C1 = product of PSD cones, with the main block restricted to the
         face { M >= 0, M K = 0 } where K collects the coefficient
         vectors of truncated-ideal members q * x^m (every feasible
         moment matrix annihilates them, so the restriction is free and
         repairs the lost interior);
    C2 = { T(y) : L y = b }, the affine image of the constraint set.

Both projections are exact: C1 is an eigenvalue clip per block, C2 is a
precomputed linearly-constrained least squares (null-space basis of L
from one symmetric eigendecomposition, then a Cholesky backsolve).  All
reductions are in fixed order, so a given problem yields bit-identical
output on every run.

Infeasibility is declared when the inter-set distance stalls above
10 * tol for 500 consecutive iterations; the stalled displacement vector
is reported as the separating witness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_factor, cho_solve

from .errors import DegreeTooSmall, IllFormed, IterLimit
from .pseudodist import (
    ConstraintSpec,
    MonomialIndex,
    PseudoDistribution,
    poly_clean,
    poly_constant,
    poly_degree,
    poly_mul,
)

DEFAULT_TOL = 1e-7
DEFAULT_ITER_LIMIT = 50_000

_RANK_EPS = 1e-10
_STALL_ITERS = 500
_CHECK_EVERY = 10


@dataclass(frozen=True)
class SdpProblem:
    """Moment feasibility problem over `index`.

    equalities: (functional dict exponent->coef, rhs) pairs, meaning
        sum_e coef * y[e] = rhs.
    psd_blocks: localizer polynomials; poly 1 is the plain moment matrix.
    ideal_polys: truncated-ideal members backing the facial reduction.
    constraints: the originating ConstraintSpecs, recorded on the output.
    """

    index: MonomialIndex
    equalities: tuple
    psd_blocks: tuple
    ideal_polys: tuple
    constraints: tuple


@dataclass(frozen=True)
class SolverReport:
    status: str  # feasible | infeasible | iter_limit
    iterations: int
    max_constraint_residual: float
    min_block_eigenvalue: float
    gap: float
    witness: np.ndarray | None = None
    witness_value: float | None = None


def build_problem(num_vars: int, degree: int, constraints) -> SdpProblem:
    """Expand polynomial constraints into the moment feasibility problem.

    Equalities q = 0 become E~[q * x^m] = 0 for every multiplier with
    deg(q x^m) <= degree; inequalities q >= 0 contribute a localizing
    PSD block.  Degree must be even (the main moment matrix must reach
    every stored moment).
    """
    if degree < 2 or degree % 2 != 0:
        raise DegreeTooSmall(f"need an even degree >= 2, got {degree}")
    index = MonomialIndex(num_vars, degree)
    one = (0,) * num_vars
    equalities = [({one: 1.0}, 1.0)]
    blocks = [poly_constant(1.0, num_vars)]
    ideal = []
    for spec in constraints:
        q = poly_clean(spec.poly())
        dq = poly_degree(q)
        if not q:
            continue
        if dq > degree:
            raise IllFormed(f"constraint degree {dq} exceeds problem degree {degree}")
        if spec.kind == "eq":
            mult_count = index.count_through(degree - dq)
            for mi in range(mult_count):
                shift = tuple(int(v) for v in index.exponents[mi])
                functional = {}
                for e, c in q.items():
                    key = tuple(a + b for a, b in zip(e, shift))
                    functional[key] = functional.get(key, 0.0) + c
                equalities.append((poly_clean(functional), 0.0))
                ideal.append(poly_clean({
                    tuple(a + b for a, b in zip(e, shift)): c for e, c in q.items()}))
        elif spec.kind == "ineq":
            if dq > degree - 2:
                raise IllFormed("inequality constraint too high-degree to localize")
            blocks.append(q)
        else:
            raise IllFormed(f"unknown constraint kind {spec.kind!r}")
    return SdpProblem(index, tuple(equalities), tuple(blocks), tuple(ideal),
                      tuple(constraints))


def build_bss_problem(w, degree: int) -> SdpProblem:
    """Feasibility problem for a rank-one element of the subspace `w`.

    Variables are x = (u, v) in R^(2n) with ||u||^2 = ||v||^2 = 1 and
    <B, u v^T> = 0 for every B spanning the orthogonal complement of w.
    """
    if degree < 4 or degree % 2 != 0:
        raise DegreeTooSmall(f"rank-one search needs an even degree >= 4, got {degree}")
    n = w.ambient
    num_vars = 2 * n
    specs = []
    for offset in (0, n):
        sphere = {}
        for i in range(n):
            e = [0] * num_vars
            e[offset + i] = 2
            sphere[tuple(e)] = 1.0
        sphere[(0,) * num_vars] = -1.0
        specs.append(ConstraintSpec.equality(sphere))
    for mat in w.complement_matrices():
        bil = {}
        for i in range(n):
            for j in range(n):
                if mat[i, j] != 0.0:
                    e = [0] * num_vars
                    e[i] += 1
                    e[n + j] += 1
                    bil[tuple(e)] = float(mat[i, j])
        specs.append(ConstraintSpec.equality(bil))
    return build_problem(num_vars, degree, specs)


# -- internal geometry -------------------------------------------------------


class _BlockMap:
    """Linear map y -> stacked symmetric blocks, with gather/scatter arrays."""

    def __init__(self, index: MonomialIndex, degree: int, localizers):
        self.sizes = []
        rows = []
        cols = []
        data = []
        offset = 0
        for loc in localizers:
            dloc = poly_degree(loc)
            half = (degree - dloc) // 2
            m = index.count_through(half)
            self.sizes.append(m)
            exps = index.exponents[:m]
            for e, c in sorted(loc.items()):
                base = np.asarray(e, dtype=np.int64)
                for a in range(m):
                    ea = exps[a] + base
                    for b in range(m):
                        rows.append(offset + a * m + b)
                        cols.append(index._lookup[tuple(int(v) for v in ea + exps[b])])
                        data.append(c)
            offset += m * m
        self.total = offset
        self.matrix = sp.csr_matrix(
            (data, (rows, cols)), shape=(self.total, index.size))
        self.adjoint = self.matrix.T.tocsr()

    def apply(self, y: np.ndarray) -> np.ndarray:
        return self.matrix @ y

    def blocks(self, stacked: np.ndarray):
        out = []
        offset = 0
        for m in self.sizes:
            out.append(stacked[offset:offset + m * m].reshape(m, m))
            offset += m * m
        return out


def _face_basis(index: MonomialIndex, degree: int, ideal_polys) -> np.ndarray | None:
    """Orthonormal basis of the main block's face (complement of the span of
    truncated-ideal coefficient vectors)."""
    half = degree // 2
    m = index.count_through(half)
    cols = []
    for q in ideal_polys:
        if poly_degree(q) > half:
            continue
        vec = np.zeros(m)
        usable = True
        for e, c in q.items():
            pos = index._lookup.get(e)
            if pos is None or pos >= m:
                usable = False
                break
            vec[pos] = c
        if usable and np.any(vec):
            cols.append(vec)
    if not cols:
        return None
    k = np.column_stack(cols)
    u, s, _ = np.linalg.svd(k, full_matrices=True)
    rank = int((s > _RANK_EPS * max(s[0], 1.0)).sum())
    if rank == 0:
        return None
    if rank == m:
        return np.zeros((m, 0))
    return u[:, rank:]


def _project_cone(block_map: _BlockMap, stacked: np.ndarray, face: np.ndarray | None):
    """Project each block onto its PSD cone (main block onto its face).

    Returns the projected stack and the smallest eigenvalue seen.
    """
    out = np.empty_like(stacked)
    offset = 0
    min_eig = np.inf
    for bi, m in enumerate(block_map.sizes):
        mat = stacked[offset:offset + m * m].reshape(m, m)
        mat = 0.5 * (mat + mat.T)
        if bi == 0 and face is not None:
            if face.shape[1] == 0:
                out[offset:offset + m * m] = 0.0
                offset += m * m
                continue
            small = face.T @ mat @ face
            vals, vecs = np.linalg.eigh(small)
            min_eig = min(min_eig, float(vals[0]))
            clipped = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
            proj = face @ clipped @ face.T
        else:
            vals, vecs = np.linalg.eigh(mat)
            min_eig = min(min_eig, float(vals[0]))
            proj = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
        out[offset:offset + m * m] = proj.reshape(-1)
        offset += m * m
    if not np.isfinite(min_eig):
        min_eig = 0.0
    return out, min_eig


class _AffineGeometry:
    """Precomputed least-squares projector onto { T(y) : L y = b }."""

    def __init__(self, problem: SdpProblem, block_map: _BlockMap):
        index = problem.index
        p = index.size
        rows, cols, data, rhs = [], [], [], []
        for r, (functional, value) in enumerate(problem.equalities):
            rhs.append(value)
            for e, c in functional.items():
                rows.append(r)
                cols.append(index._lookup[e])
                data.append(c)
        lmat = sp.csr_matrix((data, (rows, cols)), shape=(len(rhs), p))
        b = np.array(rhs)

        gram = np.asarray((lmat.T @ lmat).todense())
        vals, vecs = np.linalg.eigh(gram)
        cut = _RANK_EPS * max(float(vals[-1]), 1.0)
        null_mask = vals <= cut
        self.null_basis = vecs[:, null_mask]
        row_vecs = vecs[:, ~null_mask]
        row_vals = vals[~null_mask]
        ltb = lmat.T @ b
        self.y_particular = row_vecs @ ((row_vecs.T @ ltb) / row_vals)
        self.lmat = lmat
        self.b = b

        tt = block_map.adjoint @ block_map.matrix
        h = self.null_basis.T @ (tt @ self.null_basis)
        r_n = self.null_basis.shape[1]
        if r_n:
            self.h_factor = cho_factor(h + 1e-13 * np.eye(r_n), lower=True)
        else:
            self.h_factor = None
        self.u_particular = tt @ self.y_particular
        self.block_map = block_map

    def project(self, stacked: np.ndarray):
        """Return (y_hat, T(y_hat)): least squares onto the affine image."""
        if self.h_factor is None:
            y = self.y_particular
            return y, self.block_map.apply(y)
        t_s = self.block_map.adjoint @ stacked
        rhs = self.null_basis.T @ (t_s - self.u_particular)
        w = cho_solve(self.h_factor, rhs)
        y = self.y_particular + self.null_basis @ w
        return y, self.block_map.apply(y)

    def residual(self, y: np.ndarray) -> float:
        if self.b.size == 0:
            return 0.0
        return float(np.abs(self.lmat @ y - self.b).max())


def solve_feasibility(problem: SdpProblem, tol: float = DEFAULT_TOL,
                      iter_limit: int = DEFAULT_ITER_LIMIT):
    """Find a moment vector satisfying the problem, or certify non-finding.

    Returns (PseudoDistribution | None, SolverReport).  Status `feasible`
    comes with a distribution whose equality residuals are at solver
    precision and whose moment matrices clear -tol; `infeasible` reports
    the stalled separation; `iter_limit` is indeterminate.
    """
    index = problem.index
    block_map = _BlockMap(index, index.max_degree, problem.psd_blocks)
    face = _face_basis(index, index.max_degree, problem.ideal_polys)
    geo = _AffineGeometry(problem, block_map)

    z = block_map.apply(geo.y_particular)
    best = None
    stall_ref = np.inf
    stall_count = 0
    gap = np.inf
    iterations = 0
    status = "iter_limit"
    witness = None

    while iterations < iter_limit:
        s_cone, _ = _project_cone(block_map, z, face)
        _, s_affine = geo.project(2.0 * s_cone - z)
        z += s_affine - s_cone
        iterations += 1

        if iterations % _CHECK_EVERY and iterations < iter_limit:
            continue
        y_hat, s_hat = geo.project(s_cone)
        gap = float(np.linalg.norm(s_cone - s_hat))
        _, min_eig = _project_cone(block_map, s_hat, face)
        resid = geo.residual(y_hat)
        best = (y_hat, min_eig, resid)
        if min_eig >= -tol and resid <= max(tol, 1e-9):
            status = "feasible"
            break
        if gap > 10.0 * tol:
            if gap >= 0.999 * stall_ref:
                stall_count += _CHECK_EVERY
            else:
                stall_count = 0
            stall_ref = min(stall_ref, gap)
            if stall_count >= _STALL_ITERS:
                status = "infeasible"
                witness = s_cone - s_hat
                break
        else:
            stall_count = 0

    y_hat, min_eig, resid = best if best is not None else (geo.y_particular, 0.0, 0.0)
    report = SolverReport(
        status=status,
        iterations=iterations,
        max_constraint_residual=resid,
        min_block_eigenvalue=min_eig,
        gap=gap,
        witness=witness,
        witness_value=gap if status == "infeasible" else None,
    )
    if status != "feasible":
        return None, report
    moments = y_hat / y_hat[0]
    dist = PseudoDistribution(index, moments, index.max_degree,
                              tuple(problem.constraints), None)
    return dist, report


# -- numeric SOS check -------------------------------------------------------


def sos_gram_check(p: dict, tol: float = 1e-8, iterations: int = 5000) -> bool:
    """Decide whether p admits a PSD Gram matrix, by alternating projections
    between the PSD cone and the affine set of Gram matrices of p."""
    p = poly_clean(p)
    if not p:
        return True
    deg = poly_degree(p)
    if deg % 2:
        return False
    num_vars = len(next(iter(p)))
    half = MonomialIndex(num_vars, deg // 2)
    m = half.size
    exps = half.exponents

    class_of = {}
    class_ids = np.empty((m, m), dtype=np.int64)
    for a in range(m):
        for b in range(m):
            key = tuple(int(v) for v in exps[a] + exps[b])
            class_ids[a, b] = class_of.setdefault(key, len(class_of))
    n_classes = len(class_of)
    target = np.zeros(n_classes)
    for e, c in p.items():
        cid = class_of.get(e)
        if cid is None:
            return False  # a coefficient no Gram entry can reach
        target[cid] = c
    counts = np.bincount(class_ids.reshape(-1), minlength=n_classes).astype(float)

    scale = max(1.0, float(np.abs(target).max()))
    flat_ids = class_ids.reshape(-1)
    gram = np.zeros((m, m))
    best = np.inf
    since_best = 0
    for _ in range(iterations):
        sums = np.bincount(flat_ids, weights=gram.reshape(-1), minlength=n_classes)
        gram = gram + ((target - sums) / counts)[class_ids]
        vals, vecs = np.linalg.eigh(0.5 * (gram + gram.T))
        gram = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
        sums = np.bincount(flat_ids, weights=gram.reshape(-1), minlength=n_classes)
        res = float(np.abs(sums - target).max())
        if res <= tol * scale:
            return True
        if res < 0.999 * best:
            best = res
            since_best = 0
        else:
            since_best += 1
            if since_best > 300:
                return False
    return False
