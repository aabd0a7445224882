"""Rank-one search in matrix subspaces.

Pipeline: a subspace W of n x n matrices (given directly, or as the
top eigenspace of a measurement operator) is turned into a moment
feasibility problem over pairs (u, v) of unit vectors with uv^T in W,
the solved moment table is concentrated by the bilinear structure
rounds, and the candidate u0 v0^T is read off the first moments.  The
module also houses the verifier for candidates against measurements,
the complex-to-real reduction with its lift, instance generators with
a grid-certified farness oracle, and the subspace text file formats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    BadDims,
    DegreeExhausted,
    DimensionMismatch,
    EmptySubspace,
    IllFormed,
    IterLimit,
    NoConvergence,
    NotPSD,
    NotSymmetric,
    RetryExhausted,
    ZeroCandidate,
)
from .linalg import gram_schmidt
from .sos_solver import build_bss_problem, solve_feasibility
from .structure import (
    StructureConfig,
    cross_second_moment,
    first_moments,
    run_structure_2d,
)

_ORTHO_TOL = 1e-10
_PSD_SLACK = 1e-8
_ZERO_NORM = 1e-12

# rounding retries: every level relaxes the structure stopping bar by
# _EPS_GROWTH and each level redraws _SEEDS_PER_LEVEL times; acceptance
# is always by directly verified candidate quality, so the relaxation
# never weakens what a returned candidate means
_ROUND_TRIALS = 24
_SEEDS_PER_LEVEL = 6
_EPS_GROWTH = 1.5
_MAX_STRUCTURE_EPS = 0.45


# -- domain types -------------------------------------------------------------


@dataclass(frozen=True)
class SubspaceBasis:
    """Orthonormal basis of a subspace of n x n matrices.

    `ambient` is n; `basis` holds the matrices, pairwise orthonormal in
    the Frobenius inner product within 1e-10.
    """

    ambient: int
    basis: tuple

    def __post_init__(self):
        n = self.ambient
        if n < 1:
            raise BadDims(f"ambient dimension must be positive, got {n}")
        for b in self.basis:
            if b.shape != (n, n):
                raise DimensionMismatch(
                    f"basis matrix shape {b.shape} does not match ambient {n}")
        rows = self.matrix_rows()
        gram = rows @ rows.T
        if gram.size and float(np.abs(gram - np.eye(len(self.basis))).max()) > _ORTHO_TOL:
            raise IllFormed("basis matrices are not orthonormal within 1e-10")

    @property
    def dim(self) -> int:
        return len(self.basis)

    def matrix_rows(self) -> np.ndarray:
        return np.array([b.reshape(-1) for b in self.basis]).reshape(
            len(self.basis), self.ambient * self.ambient)

    def complement_matrices(self) -> tuple:
        """Orthonormal basis of the Frobenius-orthogonal complement."""
        n = self.ambient
        if not self.basis:
            return tuple(np.eye(n * n)[i].reshape(n, n) for i in range(n * n))
        _, _, vh = np.linalg.svd(self.matrix_rows(), full_matrices=True)
        return tuple(row.reshape(n, n) for row in vh[len(self.basis):])

    def project(self, mat: np.ndarray) -> np.ndarray:
        """Orthogonal projection of an n x n matrix onto the span."""
        rows = self.matrix_rows()
        coefs = rows @ np.asarray(mat, dtype=float).reshape(-1)
        return (rows.T @ coefs).reshape(self.ambient, self.ambient)


def subspace_from_matrices(matrices, ambient: int | None = None,
                           drop_tol: float = 1e-10) -> SubspaceBasis:
    """Orthonormalize a spanning set of n x n matrices into a SubspaceBasis.

    Dependent members are dropped; raises EmptySubspace when nothing
    survives.
    """
    mats = [np.asarray(m, dtype=float) for m in matrices]
    if not mats:
        raise EmptySubspace("no matrices given")
    n = ambient if ambient is not None else mats[0].shape[0]
    ortho = gram_schmidt([m.reshape(-1) for m in mats], drop_tol=drop_tol)
    if not ortho:
        raise EmptySubspace("all spanning matrices were dropped as dependent")
    return SubspaceBasis(n, tuple(v.reshape(n, n) for v in ortho))


@dataclass(frozen=True)
class MeasurementOperator:
    """Symmetric n^2 x n^2 matrix with eigenvalues in [0, 1] within slack."""

    matrix: np.ndarray

    def __post_init__(self):
        m = self.matrix
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatch(f"measurement must be square, got {m.shape}")
        side = m.shape[0]
        n = math.isqrt(side)
        if n * n != side:
            raise BadDims(f"measurement side {side} is not a perfect square")
        scale = max(1.0, float(np.abs(m).max()))
        if float(np.abs(m - m.T).max()) > _ORTHO_TOL * scale:
            raise NotSymmetric("measurement is not symmetric")
        eigs = np.linalg.eigvalsh(0.5 * (m + m.T))
        if eigs.size and (eigs[0] < -_PSD_SLACK or eigs[-1] > 1.0 + _PSD_SLACK):
            raise NotPSD(
                f"measurement eigenvalues [{eigs[0]:.3e}, {eigs[-1]:.3e}] "
                "leave [0, 1]")

    @property
    def ambient(self) -> int:
        return math.isqrt(self.matrix.shape[0])


@dataclass(frozen=True)
class RankOneCandidate:
    """Candidate u0 v0^T with its squared projection fraction onto W."""

    u0: np.ndarray
    v0: np.ndarray
    quality: float
    acceptance: float | None = None

    @property
    def matrix(self) -> np.ndarray:
        return np.outer(self.u0, self.v0)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.u0) * np.linalg.norm(self.v0))


@dataclass(frozen=True)
class BssReport:
    status: str              # candidate | infeasible
    eps: float
    degree: int
    solver_status: str
    solver_iterations: int
    structure_steps: int
    quality: float | None = None
    degree_left: int | None = None


# -- measurement front end ----------------------------------------------------


def measurement_to_subspace(measurement: MeasurementOperator,
                            threshold: float | None = None) -> SubspaceBasis:
    """Span of measurement eigenvectors with eigenvalue >= threshold.

    Eigenvectors are reshaped to n x n matrices.  The default threshold
    1 - 1/n keeps exactly the near-perfect acceptance directions.
    """
    n = measurement.ambient
    if threshold is None:
        threshold = 1.0 - 1.0 / n
    vals, vecs = np.linalg.eigh(0.5 * (measurement.matrix + measurement.matrix.T))
    keep = vals >= threshold
    if not keep.any():
        raise EmptySubspace(
            f"no eigenvalue clears the threshold {threshold} "
            f"(largest is {vals[-1]:.6f})")
    mats = tuple(vecs[:, i].reshape(n, n) for i in np.flatnonzero(keep)[::-1])
    return SubspaceBasis(n, mats)


# -- the solve pipeline -------------------------------------------------------


def _default_structure_eps(eps: float, ambient: int) -> float:
    # per-block concentration at eps/sqrt(n) pushes the candidate within
    # eps of E~[uv^T] in relative Frobenius norm (Cauchy-Schwarz over the
    # sphere constraints), and E~[uv^T] lies in W exactly
    return max(0.02, eps / math.sqrt(max(ambient, 1)))


def _spectral_rounding(mu, w: SubspaceBasis):
    """Best candidate among the top cross-moment eigendirections.

    The matrix E~ vec(uv^T) vec(uv^T)^T has its range inside W for any
    feasible table (the membership constraints hold multiplicatively),
    and it survives the sign and phase symmetries that zero out E~ u,
    E~ v, and E~ uv^T, so its top eigenvectors read out the bilinear
    mass even when every odd moment vanishes.  Each candidate is the
    leading singular pair of one eigendirection, scored by its actual
    projected mass; returns (quality, candidate) or None.
    """
    if mu.degree < 4:
        return None
    n = w.ambient
    vals, vecs = np.linalg.eigh(cross_second_moment(mu))
    best = None
    for col in range(1, min(4, n * n) + 1):
        y = w.project(vecs[:, -col].reshape(n, n))
        if float(np.linalg.norm(y)) <= _ZERO_NORM:
            continue
        uu, ss, vv = np.linalg.svd(y)
        if ss[0] <= _ZERO_NORM:
            continue
        u0 = uu[:, 0] * math.sqrt(ss[0])
        v0 = vv[0] * math.sqrt(ss[0])
        mat = np.outer(u0, v0)
        quality = float(np.linalg.norm(w.project(mat)) ** 2
                        / np.linalg.norm(mat) ** 2)
        if best is None or quality > best[0]:
            best = (quality, RankOneCandidate(u0, v0, quality))
    return best


def solve_bss(w: SubspaceBasis, eps: float, degree: int = 6,
              cfg: StructureConfig | None = None, seed: int = 0,
              solver_tol: float = 1e-7):
    """Find an approximately-in-W rank-one matrix, or certify none at
    this degree.

    Returns (RankOneCandidate | None, BssReport).  A candidate comes
    with quality = ||proj_W u0 v0^T||_F^2 / ||u0 v0^T||_F^2; None means
    the degree-`degree` relaxation is infeasible, which soundly rules
    out unit pairs with uv^T in W.  Rounding starts from the spectral
    baseline (top cross-moment eigendirections, immune to sign and
    phase symmetry) and then retries the structure rounds over fresh
    seeds and a gradually relaxed stopping bar until a trial reaches
    quality 1 - eps^2; the best verified candidate wins, so low degrees
    that cannot support the strict bar still round whatever the moments
    contain.  Raises NoConvergence when the SDP solver reaches its
    iteration limit without a verdict (no certificate either way), and
    ZeroCandidate when every rounding path fails outright.
    """
    if w.dim == 0:
        raise EmptySubspace("cannot search an empty subspace")
    if not 0.0 < eps < 1.0:
        raise IllFormed(f"eps must lie in (0, 1), got {eps}")
    problem = build_bss_problem(w, degree)
    mu, solver_report = solve_feasibility(problem, tol=solver_tol)
    if solver_report.status == "infeasible":
        report = BssReport("infeasible", eps, degree, solver_report.status,
                           solver_report.iterations, 0)
        return None, report
    if solver_report.status != "feasible":
        raise NoConvergence(
            f"feasibility solver returned {solver_report.status} after "
            f"{solver_report.iterations} iterations")
    if cfg is None:
        cfg = StructureConfig(eps=_default_structure_eps(eps, w.ambient),
                              seed=seed)
    n = w.ambient
    target = 1.0 - eps * eps
    best = None
    baseline = _spectral_rounding(mu, w)
    if baseline is not None:
        best = (baseline[0], baseline[1], 0, mu.degree)
    failure = None
    for trial in range(_ROUND_TRIALS):
        if best is not None and best[0] >= target:
            break
        eps_t = min(_MAX_STRUCTURE_EPS,
                    cfg.eps * _EPS_GROWTH ** (trial // _SEEDS_PER_LEVEL))
        cfg_t = replace(cfg, eps=eps_t, seed=cfg.seed + trial)
        try:
            out, _, trace = run_structure_2d(mu, cfg_t)
        except (DegreeExhausted, RetryExhausted, IterLimit) as err:
            failure = err
            continue
        u0, _ = first_moments(out, 0, n)
        v0, _ = first_moments(out, n, n)
        scale = float(np.linalg.norm(u0) * np.linalg.norm(v0))
        if scale <= _ZERO_NORM:
            continue
        mat = np.outer(u0, v0)
        quality = float(np.linalg.norm(w.project(mat)) ** 2
                        / np.linalg.norm(mat) ** 2)
        if best is None or quality > best[0]:
            best = (quality, RankOneCandidate(u0, v0, quality),
                    len(trace.records), out.degree)
        if quality >= target:
            break
    if best is None:
        raise ZeroCandidate(
            "every rounding trial failed; the relaxation is feasible but "
            "produced no direction") from failure
    quality, candidate, steps, degree_left = best
    report = BssReport("candidate", eps, degree, solver_report.status,
                       solver_report.iterations, steps,
                       quality=quality, degree_left=degree_left)
    return candidate, report


# -- verification -------------------------------------------------------------


@dataclass(frozen=True)
class VerificationRecord:
    quality: float
    quality_via_complement: float
    acceptance: float | None
    acceptance_floor: float | None

    def ok(self, tol: float = 1e-7) -> bool:
        agree = abs(self.quality - self.quality_via_complement) <= 1e-10
        if self.acceptance is None:
            return agree
        return agree and self.acceptance >= self.acceptance_floor - tol


def verify_candidate(candidate: RankOneCandidate, w: SubspaceBasis,
                     measurement: MeasurementOperator | None = None
                     ) -> VerificationRecord:
    """Recompute the candidate's quality, and its acceptance if a
    measurement is given.

    Quality is computed twice (through the basis and through the
    complement) as a cross-check.  With a measurement, acceptance is
    Tr(M rho) for rho the normalized pure state of vec(u0 v0^T), which
    must reach 2*quality - 1 when W is the top eigenspace of M.
    """
    if candidate.u0.shape != (w.ambient,) or candidate.v0.shape != (w.ambient,):
        raise DimensionMismatch(
            f"candidate vectors {candidate.u0.shape}, {candidate.v0.shape} "
            f"do not match ambient {w.ambient}")
    mat = candidate.matrix
    total = float(np.linalg.norm(mat) ** 2)
    if total <= _ZERO_NORM ** 2:
        raise ZeroCandidate("candidate outer product has vanishing norm")
    quality = float(np.linalg.norm(w.project(mat)) ** 2 / total)
    comp_rows = np.array([c.reshape(-1) for c in w.complement_matrices()])
    if comp_rows.size:
        comp_mass = float(np.linalg.norm(comp_rows @ mat.reshape(-1)) ** 2)
    else:
        comp_mass = 0.0
    quality_comp = 1.0 - comp_mass / total
    acceptance = None
    floor = None
    if measurement is not None:
        if measurement.ambient != w.ambient:
            raise DimensionMismatch(
                f"measurement ambient {measurement.ambient} does not match "
                f"subspace ambient {w.ambient}")
        state = mat.reshape(-1) / math.sqrt(total)
        acceptance = float(state @ measurement.matrix @ state)
        floor = 2.0 * quality - 1.0
    return VerificationRecord(quality, quality_comp, acceptance, floor)


# -- complex-to-real reduction ------------------------------------------------


@dataclass(frozen=True)
class ComplexSubspace:
    """Subspace of C^{n x n} given by constraints <C_j + i D_j, X> = 0.

    The inner product conjugates the constraint side, so X = A + iB
    satisfies constraint j iff <C_j, A> + <D_j, B> = 0 and
    <D_j, A> - <C_j, B> = 0.
    """

    ambient: int
    pairs: tuple  # ((C, D), ...) real n x n pairs

    def __post_init__(self):
        n = self.ambient
        if n < 1:
            raise BadDims(f"ambient dimension must be positive, got {n}")
        for c, d in self.pairs:
            if c.shape != (n, n) or d.shape != (n, n):
                raise DimensionMismatch(
                    f"constraint pair shapes {c.shape}/{d.shape} do not "
                    f"match ambient {n}")
        if self.pairs:
            rows = np.array([np.concatenate([c.reshape(-1), d.reshape(-1)])
                             for c, d in self.pairs])
            if np.linalg.matrix_rank(rows, tol=1e-10) < len(self.pairs):
                raise IllFormed("constraint pairs are linearly dependent")

    @property
    def num_constraints(self) -> int:
        return len(self.pairs)

    def constraint_matrices(self) -> tuple:
        return tuple(c + 1j * d for c, d in self.pairs)

    def residual(self, x: np.ndarray) -> float:
        """Largest constraint violation |<W_j, x>| over the pairs."""
        worst = 0.0
        for wj in self.constraint_matrices():
            worst = max(worst, abs(complex(np.sum(np.conj(wj) * x))))
        return worst

    def project(self, x: np.ndarray) -> np.ndarray:
        """Orthogonal projection onto the constraint null space."""
        x = np.asarray(x, dtype=complex)
        ortho: list[np.ndarray] = []
        for wj in self.constraint_matrices():
            v = wj.astype(complex)
            for u in ortho:
                v = v - np.sum(np.conj(u) * v) * u
            norm = float(np.linalg.norm(v))
            if norm > 1e-12:
                ortho.append(v / norm)
        out = x.copy()
        for u in ortho:
            out = out - np.sum(np.conj(u) * out) * u
        return out


def reduce_complex_to_real(wc: ComplexSubspace) -> SubspaceBasis:
    """Real 2n x 2n subspace whose members Y satisfy the lifted pairs.

    Y belongs iff A = Y11 + Y22 and B = Y21 - Y12 satisfy every real
    constraint pair of `wc`; the basis is the orthonormalized kernel of
    the lifted linear system.
    """
    n = wc.ambient
    m = 2 * n
    if not wc.pairs:
        eye = np.eye(m * m)
        return SubspaceBasis(m, tuple(eye[i].reshape(m, m)
                                      for i in range(m * m)))
    rows = []
    for c, d in wc.pairs:
        lift_re = np.block([[c, -d], [d, c]])
        lift_im = np.block([[d, c], [-c, d]])
        rows.append(lift_re.reshape(-1))
        rows.append(lift_im.reshape(-1))
    system = np.array(rows)
    _, s, vh = np.linalg.svd(system, full_matrices=True)
    rank = int(np.sum(s > 1e-10 * max(s[0], 1.0)))
    kernel = vh[rank:]
    if kernel.shape[0] == 0:
        raise EmptySubspace("the lifted constraint system has no kernel")
    return SubspaceBasis(m, tuple(row.reshape(m, m) for row in kernel))


@dataclass(frozen=True)
class LiftResult:
    x: np.ndarray            # complex n x n member of the subspace
    u: np.ndarray            # complex left vector
    v: np.ndarray            # complex right vector
    residual: float          # ||x - u v*||_F
    bound: float             # certified upper bound on the residual
    block_residuals: tuple   # Frobenius norms of the four real deviation blocks
    quality_real: float      # recomputed quality of the real candidate


def lift_real_solution(candidate: RankOneCandidate,
                       wc: ComplexSubspace) -> LiftResult:
    """Map a real 2n-block candidate back to a complex rank-one.

    U = u1 + i u2 and V = v1 + i v2 come from the block halves; the
    returned x is the projection of U V* into the complex subspace, and
    the certified bound follows the deviation of the real candidate
    from the lifted subspace (which dominates sqrt(2) times it and is
    itself dominated by the four block residuals summed).
    """
    n = wc.ambient
    if candidate.u0.shape != (2 * n,) or candidate.v0.shape != (2 * n,):
        raise DimensionMismatch(
            f"candidate blocks {candidate.u0.shape} do not match a lift "
            f"from ambient {n}")
    u = candidate.u0[:n] + 1j * candidate.u0[n:]
    v = candidate.v0[:n] + 1j * candidate.v0[n:]
    scale = float(np.linalg.norm(u) * np.linalg.norm(v))
    if scale <= _ZERO_NORM:
        raise ZeroCandidate("candidate lifts to a vanishing product")
    uv_star = np.outer(u, np.conj(v))
    x = wc.project(uv_star)
    residual = float(np.linalg.norm(x - uv_star))

    lifted = reduce_complex_to_real(wc)
    y = candidate.matrix
    dev = y - lifted.project(y)
    blocks = (float(np.linalg.norm(dev[:n, :n])),
              float(np.linalg.norm(dev[:n, n:])),
              float(np.linalg.norm(dev[n:, :n])),
              float(np.linalg.norm(dev[n:, n:])))
    da = dev[:n, :n] + dev[n:, n:]
    db = dev[n:, :n] - dev[:n, n:]
    bound = float(math.hypot(np.linalg.norm(da), np.linalg.norm(db)))
    quality_real = 1.0 - float(np.linalg.norm(dev) ** 2
                               / np.linalg.norm(y) ** 2)
    return LiftResult(x, u, v, residual, bound, blocks, quality_real)


# -- instance generators ------------------------------------------------------


def planted_yes(n: int, dim_w: int, seed: int = 0):
    """Subspace of dimension dim_w containing a recorded unit u v^T.

    Returns (SubspaceBasis, u, v); the plant spans the first basis
    direction exactly.
    """
    if n < 1 or not 1 <= dim_w <= n * n:
        raise BadDims(f"need 1 <= dim_w <= n^2, got n={n}, dim_w={dim_w}")
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(n)
    u /= np.linalg.norm(u)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    mats = [np.outer(u, v)]
    while True:
        extra = [rng.standard_normal((n, n)) for _ in range(dim_w - len(mats))]
        w = subspace_from_matrices(mats + extra, ambient=n)
        if w.dim == dim_w:
            return w, u, v
        mats = [b.copy() for b in w.basis]  # refill the dropped directions


def _sphere_grid(n: int, step: float):
    """Covering grid of the unit sphere with its geodesic radius.

    n=2 walks a half circle (antipodal points project identically);
    n=3 uses latitude rows with row-adaptive longitude counts.
    """
    if n == 2:
        count = max(2, math.ceil(math.pi / step))
        theta = np.arange(count) * (math.pi / count)
        pts = np.column_stack([np.cos(theta), np.sin(theta)])
        return pts, (math.pi / count) / 2.0
    if n == 3:
        rows = max(2, math.ceil(math.pi / step))
        h = math.pi / rows
        pts = []
        for j in range(rows):
            th = (j + 0.5) * h
            m = max(1, math.ceil(2.0 * math.pi * math.sin(th) / h))
            phi = np.arange(m) * (2.0 * math.pi / m)
            pts.append(np.column_stack([
                np.full(m, math.cos(th)),
                math.sin(th) * np.cos(phi),
                math.sin(th) * np.sin(phi)]))
        return np.concatenate(pts), h
    raise BadDims(f"grid certification supports n in {{2, 3}}, got {n}")


def certify_farness(w: SubspaceBasis, grid_step: float | None = None) -> float:
    """Certified lower bound on the distance of W from unit rank-ones.

    The distance is min over unit u, v of ||proj_{W-complement} uv^T||_F;
    the map is 1-Lipschitz in each factor, so a grid with geodesic
    covering radius r certifies grid_min - 2r.
    """
    n = w.ambient
    if grid_step is None:
        grid_step = 0.01 if n == 2 else 0.05
    pts_u, radius = _sphere_grid(n, grid_step)
    pts_v = pts_u
    rows = w.matrix_rows()  # k x n^2
    # <B, uv^T> = u^T B v, batched over the grid
    mapped = np.array([pts_u @ b for b in w.basis])  # k x |U| x n
    best = np.inf
    chunk = 512
    for start in range(0, pts_v.shape[0], chunk):
        vt = pts_v[start:start + chunk].T
        captured = np.zeros((pts_u.shape[0], vt.shape[1]))
        for k in range(mapped.shape[0]):
            captured += (mapped[k] @ vt) ** 2
        best = min(best, float((1.0 - captured).min()))
    grid_min = math.sqrt(max(best, 0.0))
    return max(grid_min - 2.0 * radius, 0.0)


def _antisymmetric_part(mats):
    return [0.5 * (m - m.T) for m in mats]


def random_no(n: int, dim_w: int, seed: int = 0, min_farness: float = 0.5,
              grid_step: float | None = None, max_tries: int = 40):
    """Random subspace certified far from all unit rank-ones.

    Returns (SubspaceBasis, farness).  Draws are retried with a growing
    antisymmetric bias (antisymmetric spans capture at most half the
    norm of any rank-one), so certification at min_farness <= 0.7
    eventually succeeds when dim_w fits the antisymmetric dimension.
    """
    if n < 1 or not 1 <= dim_w <= n * n:
        raise BadDims(f"need 1 <= dim_w <= n^2, got n={n}, dim_w={dim_w}")
    rng = np.random.default_rng(seed)
    for attempt in range(max_tries):
        tilt = min(1.0, attempt / 8.0)
        mats = [rng.standard_normal((n, n)) for _ in range(dim_w)]
        if tilt > 0.0:
            anti = _antisymmetric_part(mats)
            mats = [(1.0 - tilt) * m + tilt * a for m, a in zip(mats, anti)]
        try:
            w = subspace_from_matrices(mats, ambient=n)
        except EmptySubspace:
            continue
        if w.dim != dim_w:
            continue
        farness = certify_farness(w, grid_step)
        if farness >= min_farness:
            return w, farness
    raise RetryExhausted(
        f"no subspace certified {min_farness}-far in {max_tries} draws "
        f"(n={n}, dim_w={dim_w})")


def complex_planted(n: int, dim_w: int, seed: int = 0):
    """Complex subspace of dimension dim_w containing a planted x y*.

    Returns (ComplexSubspace, x, y) where the subspace is encoded by
    its n^2 - dim_w orthonormal constraints.
    """
    if n < 1 or not 1 <= dim_w <= n * n:
        raise BadDims(f"need 1 <= dim_w <= n^2, got n={n}, dim_w={dim_w}")
    rng = np.random.default_rng(seed)

    def unit(size):
        z = rng.standard_normal(size) + 1j * rng.standard_normal(size)
        return z / np.linalg.norm(z)

    x = unit(n)
    y = unit(n)
    span = [np.outer(x, np.conj(y)).reshape(-1)]
    while len(span) < dim_w:
        cand = unit(n * n).astype(complex)
        for s in span:
            cand = cand - np.vdot(s, cand) * s
        norm = float(np.linalg.norm(cand))
        if norm > 1e-8:
            span.append(cand / norm)
    rows = np.array(span)
    # svd rows satisfy vdot(vh[j], s) = 0 for every s in the span once
    # j >= dim_w, which is exactly the <W_j, X> = 0 convention
    _, _, vh = np.linalg.svd(rows, full_matrices=True)
    constraints = vh[dim_w:]
    pairs = tuple((c.reshape(n, n).real.copy(), c.reshape(n, n).imag.copy())
                  for c in constraints)
    return ComplexSubspace(n, pairs), x, y


# -- text file formats --------------------------------------------------------


def _matrix_lines(a: np.ndarray) -> list:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if not np.all(np.isfinite(a)):
        raise IllFormed("refusing to write non-finite entries")
    lines = [f"{a.shape[0]} {a.shape[1]}"]
    for row in a:
        lines.append(" ".join(repr(float(x)) for x in row))
    return lines


def _take_matrix(tokens, pos):
    try:
        rows, cols = int(tokens[pos]), int(tokens[pos + 1])
        entries = [float(t) for t in tokens[pos + 2:pos + 2 + rows * cols]]
    except (ValueError, IndexError) as exc:
        raise IllFormed(f"malformed matrix block: {exc}") from None
    if rows < 0 or cols < 0 or len(entries) != rows * cols:
        raise IllFormed(f"matrix block truncated at token {pos}")
    return np.array(entries).reshape(rows, cols), pos + 2 + rows * cols


def write_subspace(path, w: SubspaceBasis) -> None:
    """Write 'SUBSPACE n k' followed by the k basis matrices."""
    lines = [f"SUBSPACE {w.ambient} {w.dim}"]
    for b in w.basis:
        lines.extend(_matrix_lines(b))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_subspace(path) -> SubspaceBasis:
    with open(path) as fh:
        tokens = fh.read().split()
    if len(tokens) < 3 or tokens[0] != "SUBSPACE":
        raise IllFormed("expected a SUBSPACE header")
    try:
        n, k = int(tokens[1]), int(tokens[2])
    except ValueError as exc:
        raise IllFormed(f"bad SUBSPACE header: {exc}") from None
    pos = 3
    mats = []
    for _ in range(k):
        mat, pos = _take_matrix(tokens, pos)
        if mat.shape != (n, n):
            raise IllFormed(f"subspace matrix shape {mat.shape}, expected ({n}, {n})")
        mats.append(mat)
    return SubspaceBasis(n, tuple(mats))


def write_measurement(path, measurement: MeasurementOperator) -> None:
    """Write 'MEASUREMENT n' followed by the n^2 x n^2 matrix."""
    lines = [f"MEASUREMENT {measurement.ambient}"]
    lines.extend(_matrix_lines(measurement.matrix))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_measurement(path) -> MeasurementOperator:
    with open(path) as fh:
        tokens = fh.read().split()
    if len(tokens) < 2 or tokens[0] != "MEASUREMENT":
        raise IllFormed("expected a MEASUREMENT header")
    try:
        n = int(tokens[1])
    except ValueError as exc:
        raise IllFormed(f"bad MEASUREMENT header: {exc}") from None
    mat, _ = _take_matrix(tokens, 2)
    if mat.shape != (n * n, n * n):
        raise IllFormed(
            f"measurement matrix shape {mat.shape}, expected ({n * n}, {n * n})")
    return MeasurementOperator(mat)


def write_complex_subspace(path, wc: ComplexSubspace) -> None:
    """Write 'CSUBSPACE n k' followed by the k constraint pairs (C, D)."""
    lines = [f"CSUBSPACE {wc.ambient} {wc.num_constraints}"]
    for c, d in wc.pairs:
        lines.extend(_matrix_lines(c))
        lines.extend(_matrix_lines(d))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_complex_subspace(path) -> ComplexSubspace:
    with open(path) as fh:
        tokens = fh.read().split()
    if len(tokens) < 3 or tokens[0] != "CSUBSPACE":
        raise IllFormed("expected a CSUBSPACE header")
    try:
        n, k = int(tokens[1]), int(tokens[2])
    except ValueError as exc:
        raise IllFormed(f"bad CSUBSPACE header: {exc}") from None
    pos = 3
    pairs = []
    for _ in range(k):
        c, pos = _take_matrix(tokens, pos)
        d, pos = _take_matrix(tokens, pos)
        if c.shape != (n, n) or d.shape != (n, n):
            raise IllFormed("constraint pair shape mismatch")
        pairs.append((c, d))
    return ComplexSubspace(n, tuple(pairs))


__all__ = [
    "SubspaceBasis", "MeasurementOperator", "RankOneCandidate", "BssReport",
    "ComplexSubspace", "LiftResult", "VerificationRecord",
    "subspace_from_matrices", "measurement_to_subspace", "solve_bss",
    "verify_candidate", "reduce_complex_to_real", "lift_real_solution",
    "planted_yes", "random_no", "complex_planted", "certify_farness",
    "write_subspace", "read_subspace", "write_measurement",
    "read_measurement", "write_complex_subspace", "read_complex_subspace",
]
