"""Lowest eigenpairs, gap sweeps along the anneal, and the classical oracle.

Small dimensions use a dense symmetric eigensolve; large ones use Lanczos
with full reorthogonalization (ghost eigenvalues would corrupt gap
estimates).  The minimum-gap search runs a uniform coarse grid followed by
golden-section refinement of the bracketing triple; golden section is
robust to the cusped gap curves near avoided crossings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
import scipy.linalg

from .model import AnnealSchedule, IsingProblem, QuditParams, build_four_state, build_two_state
from .operators import HamiltonianOperator, matvec, to_dense

__all__ = [
    "EigenResult",
    "GapSweepResult",
    "ClassicalGround",
    "ConvergenceError",
    "lowest_eigenpairs",
    "gap_at",
    "min_gap_sweep",
    "classical_ground",
    "golden_section_minimize",
]

DENSE_DIM_CUTOFF = 8192
DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 5000

ModelName = Literal["two_state", "four_state"]

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class ConvergenceError(RuntimeError):
    """Iterative eigensolver failed to converge within the iteration cap."""

    def __init__(self, iterations: int, residuals: np.ndarray, tol: float):
        self.iterations = iterations
        self.best_residuals = np.asarray(residuals)
        self.tol = tol
        super().__init__(
            f"Lanczos did not converge after {iterations} iterations: best "
            f"residuals {np.array2string(self.best_residuals, precision=3)} "
            f"vs tolerance {tol:.3e}")


@dataclass(frozen=True)
class EigenResult:
    """k lowest eigenvalues (ascending, GHz) with orthonormal eigenvectors
    (columns) and true residual norms ||Hv - lambda v||."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residual_norms: np.ndarray
    iterations: int
    method: str


@dataclass(frozen=True)
class GapSweepResult:
    """Coarse gap curve plus the refined minimum."""

    samples: np.ndarray        # shape (m, 2): columns s, gap (GHz)
    s_star: float
    g_min: float
    refine_iterations: int
    bracket_width: float
    model: str


@dataclass(frozen=True)
class ClassicalGround:
    """Exact classical minimum of the diagonal problem Hamiltonian.

    Energies are integers in units of 1/denominator (the ensemble value set
    makes this exact), so the degeneracy decision involves no tolerance.
    Minimizers are basis indices: bit i gives qubit i's state.
    """

    energy_units: int
    denominator: int
    minimizers: tuple[int, ...]

    @property
    def energy(self) -> float:
        """Minimum of sum h_i s_i + sum J_ij s_i s_j over s in {-1, +1}^n."""
        return self.energy_units / self.denominator

    @property
    def degeneracy(self) -> int:
        return len(self.minimizers)


def _dense_lowest(h: HamiltonianOperator, k: int) -> EigenResult:
    m = to_dense(h, max_dim=DENSE_DIM_CUTOFF)
    vals, vecs = scipy.linalg.eigh(m)
    vals, vecs = vals[:k], vecs[:, :k]
    res = np.linalg.norm(m @ vecs - vecs * vals, axis=0)
    return EigenResult(vals, vecs, res, iterations=0, method="dense")


def _lanczos_lowest(h: HamiltonianOperator, k: int, tol_abs: float,
                    max_iter: int, seed: int) -> EigenResult:
    """Lanczos with full reorthogonalization and seeded random start.

    Convergence when the Ritz residual estimates |beta * s_last| of the k
    lowest pairs drop below tol_abs.  An invariant subspace (beta ~ 0)
    triggers a restart with a fresh random vector orthogonal to everything
    seen, which block-diagonalizes the tridiagonal matrix and remains
    exact; at least k such blocks must be probed before an exhausted run
    is accepted, so eigenvalue copies of multiplicity up to k are resolved
    (each block can rediscover a degenerate eigenvalue exactly once).
    """
    dim = h.dimension
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    limit = min(max_iter, dim)
    breakdown = 1e-13 * max(h.coefficient_scale(), 1.0)

    cap = min(limit, 128)
    qt = np.empty((cap, dim))  # rows are Lanczos vectors (contiguous)
    alphas: list[float] = []
    betas: list[float] = []

    q = rng.standard_normal(dim)
    q /= np.linalg.norm(q)
    qt[0] = q
    j = 0
    blocks = 1
    best: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None

    def ritz(beta_bottom: float):
        t_diag = np.array(alphas)
        t_off = np.array(betas[: len(alphas) - 1])
        if len(alphas) == 1:
            vals = t_diag.copy()
            vecs = np.ones((1, 1))
        else:
            vals, vecs = scipy.linalg.eigh_tridiagonal(t_diag, t_off)
        kk = min(k, len(vals))
        est = np.abs(beta_bottom * vecs[-1, :kk])
        return vals[:kk], vecs[:, :kk], est

    while j < limit:
        u = matvec(h, qt[j])
        a = float(qt[j] @ u)
        alphas.append(a)
        r = u - a * qt[j]
        if j > 0:
            r -= betas[j - 1] * qt[j - 1]
        # full reorthogonalization, second pass if cancellation was severe
        pre = np.linalg.norm(r)
        r -= qt[: j + 1].T @ (qt[: j + 1] @ r)
        b = float(np.linalg.norm(r))
        if b < 0.7071 * pre:
            r -= qt[: j + 1].T @ (qt[: j + 1] @ r)
            b = float(np.linalg.norm(r))
        j += 1
        exhausted = b <= breakdown
        if j >= k and (exhausted or j % 5 == 0 or j == limit):
            vals, vecs, est = ritz(b)
            best = (vals, vecs, est)
            if (len(vals) >= k and np.all(est <= tol_abs)
                    and (not exhausted or blocks >= k or j >= dim)):
                break
        if exhausted:
            if j >= dim:
                break
            # invariant subspace: restart with a fresh orthonormal vector
            r = rng.standard_normal(dim)
            r -= qt[:j].T @ (qt[:j] @ r)
            r -= qt[:j].T @ (qt[:j] @ r)
            nrm = np.linalg.norm(r)
            if nrm < 1e-8:
                break
            r /= nrm
            b = 0.0
            blocks += 1
        else:
            r /= b
        if j < limit:
            if j + 1 > qt.shape[0]:
                grown = np.empty((min(limit, qt.shape[0] * 2), dim))
                grown[: qt.shape[0]] = qt
                qt = grown
            betas.append(b)
            qt[j] = r

    if best is None:
        vals, vecs, est = ritz(0.0)
        best = (vals, vecs, est)
    vals, vecs, est = best
    if len(vals) < k or (np.any(est > tol_abs) and j >= limit and j < dim):
        raise ConvergenceError(j, est, tol_abs)
    vectors = qt[: len(alphas)].T @ vecs
    res = np.empty(k)
    for i in range(k):
        res[i] = np.linalg.norm(matvec(h, vectors[:, i]) - vals[i] * vectors[:, i])
    if np.any(res > max(tol_abs, 1e-8 * max(h.coefficient_scale(), 1.0)) * 10):
        raise ConvergenceError(j, res, tol_abs)
    return EigenResult(vals[:k], vectors, res, iterations=j, method="lanczos")


def lowest_eigenpairs(h: HamiltonianOperator, k: int = 2,
                      tol: float = DEFAULT_TOL,
                      solver: str = "auto",
                      max_iter: int = DEFAULT_MAX_ITER,
                      seed: int = 0) -> EigenResult:
    """k lowest eigenpairs of a Pauli-string operator.

    solver: "dense" (full symmetric solve), "lanczos", or "auto" (dense up
    to dimension 8192).  tol is relative to the operator's coefficient
    scale; the Lanczos path is deterministic given seed.

    Multiplicity caveat for the iterative path: degenerate copies are
    resolved through independent Krylov blocks, which are only spawned on
    an exact invariant-subspace breakdown.  A symmetric operator whose
    ground level is degenerate without such a breakdown can report the next
    distinct level instead of the copy (the same behaviour as restarted
    Lanczos packages).  The annealing Hamiltonians built by this package
    have simple ground states once degenerate classical instances are
    filtered, so gap values are unaffected.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > h.dimension:
        raise ValueError(f"k={k} exceeds dimension {h.dimension}")
    if solver not in ("auto", "dense", "lanczos"):
        raise ValueError(f"unknown solver {solver!r}")
    if solver == "auto":
        solver = "dense" if h.dimension <= DENSE_DIM_CUTOFF else "lanczos"
    if solver == "dense":
        return _dense_lowest(h, k)
    tol_abs = tol * max(h.coefficient_scale(), 1.0)
    return _lanczos_lowest(h, k, tol_abs, max_iter, seed)


def _build_model(problem: IsingProblem, schedule: AnnealSchedule, s: float,
                 model: ModelName, qudit: QuditParams | None,
                 omega_p_scale: float, kappa_scale: float) -> HamiltonianOperator:
    point = schedule.evaluate(s)
    if model == "two_state":
        return build_two_state(problem, point.delta, point.e)
    if model == "four_state":
        if qudit is None:
            qudit = QuditParams.uniform(problem.n, point, omega_p_scale, kappa_scale)
        return build_four_state(problem, point, qudit)
    raise ValueError(f"unknown model {model!r}")


def gap_at(s: float, schedule: AnnealSchedule, problem: IsingProblem,
           model: ModelName = "two_state", *,
           qudit: QuditParams | None = None,
           omega_p_scale: float = 1.0, kappa_scale: float = 1.0,
           solver: str = "auto", tol: float = DEFAULT_TOL,
           max_iter: int = DEFAULT_MAX_ITER, seed: int = 0) -> float:
    """First excitation gap lambda_1 - lambda_0 (GHz) at schedule point s."""
    h = _build_model(problem, schedule, s, model, qudit,
                     omega_p_scale, kappa_scale)
    r = lowest_eigenpairs(h, k=2, tol=tol, solver=solver,
                          max_iter=max_iter, seed=seed)
    return max(0.0, float(r.eigenvalues[1] - r.eigenvalues[0]))


def golden_section_minimize(f: Callable[[float], float], a: float, b: float,
                            tol: float) -> tuple[float, float, int, float]:
    """Golden-section search on [a, b]; returns (x, f(x), evals, width)."""
    if b < a:
        a, b = b, a
    evals = 0
    best_x, best_f = a, math.inf

    def probe(x: float) -> float:
        nonlocal evals, best_x, best_f
        y = f(x)
        evals += 1
        if y < best_f:
            best_x, best_f = x, y
        return y

    h = b - a
    if h <= tol:
        probe(0.5 * (a + b))
        return best_x, best_f, evals, h
    c = b - _INV_PHI * h
    d = a + _INV_PHI * h
    yc, yd = probe(c), probe(d)
    while h > tol:
        if yc < yd:
            b, d, yd = d, c, yc
            h = b - a
            c = b - _INV_PHI * h
            yc = probe(c)
        else:
            a, c, yc = c, d, yd
            h = b - a
            d = a + _INV_PHI * h
            yd = probe(d)
    return best_x, best_f, evals, h


def _point_seed(seed: int, counter: int) -> int:
    return int(np.random.SeedSequence(
        entropy=seed, spawn_key=(counter,)).generate_state(1)[0])


def _sweep_gap_job(payload) -> float:
    (s, schedule, problem, model, qudit, omega_p_scale, kappa_scale,
     solver, tol, max_iter, point_seed) = payload
    return gap_at(s, schedule, problem, model, qudit=qudit,
                  omega_p_scale=omega_p_scale, kappa_scale=kappa_scale,
                  solver=solver, tol=tol, max_iter=max_iter, seed=point_seed)


def min_gap_sweep(schedule: AnnealSchedule, problem: IsingProblem,
                  model: ModelName = "two_state", *,
                  grid_points: int = 201, refine_tol: float = 1e-5,
                  qudit: QuditParams | None = None,
                  omega_p_scale: float = 1.0, kappa_scale: float = 1.0,
                  solver: str = "auto", tol: float = DEFAULT_TOL,
                  max_iter: int = DEFAULT_MAX_ITER,
                  seed: int = 0, threads: int = 1) -> GapSweepResult:
    """Locate the minimum gap: uniform coarse grid, then golden-section
    refinement of the bracketing triple around the coarse minimum.

    Coarse grid points are independent jobs (threads > 1 runs them in a
    process pool); per-point solver seeds are derived from the grid index,
    so results are identical for any thread count.
    """
    if grid_points < 3:
        raise ValueError("grid_points must be >= 3")
    grid = np.linspace(0.0, 1.0, grid_points)
    payloads = [
        (float(s), schedule, problem, model, qudit, omega_p_scale,
         kappa_scale, solver, tol, max_iter, _point_seed(seed, i))
        for i, s in enumerate(grid)
    ]
    if threads > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=threads) as pool:
            gaps = np.array(list(pool.map(_sweep_gap_job, payloads)))
    else:
        gaps = np.array([_sweep_gap_job(p) for p in payloads])

    counter = grid_points

    def gap_fn(s: float) -> float:
        nonlocal counter
        point_seed = _point_seed(seed, counter)
        counter += 1
        return gap_at(s, schedule, problem, model, qudit=qudit,
                      omega_p_scale=omega_p_scale, kappa_scale=kappa_scale,
                      solver=solver, tol=tol, max_iter=max_iter,
                      seed=point_seed)

    i_min = int(np.argmin(gaps))
    best_s, best_g = float(grid[i_min]), float(gaps[i_min])
    a = grid[max(i_min - 1, 0)]
    b = grid[min(i_min + 1, grid_points - 1)]
    s_ref, g_ref, evals, width = golden_section_minimize(gap_fn, float(a), float(b),
                                                         refine_tol)
    if g_ref < best_g:
        best_s, best_g = s_ref, g_ref
    samples = np.column_stack([grid, gaps])
    samples.setflags(write=False)
    return GapSweepResult(samples=samples, s_star=best_s, g_min=best_g,
                          refine_iterations=evals, bracket_width=width,
                          model=model)


_ENUM_CHUNK = 1 << 16
MAX_ENUM_QUBITS = 30


def _scaled_integers(values, denominator: int, what: str) -> np.ndarray:
    scaled = np.asarray(values, dtype=float) * denominator
    ints = np.rint(scaled)
    off = np.max(np.abs(scaled - ints)) if scaled.size else 0.0
    if off > 1e-9:
        raise ValueError(
            f"{what} values must be integer multiples of 1/{denominator} "
            f"for exact enumeration (worst offset {off:.3g})")
    return ints.astype(np.int64)


def classical_ground(problem: IsingProblem,
                     denominator: int = 7) -> ClassicalGround:
    """Enumerate all 2^n spin assignments of the diagonal problem
    Hamiltonian exactly (integer arithmetic in units of 1/denominator).

    Spin convention matches the operator layer: bit 0 -> s = -1,
    bit 1 -> s = +1.
    """
    n = problem.n
    if n > MAX_ENUM_QUBITS:
        raise ValueError(f"n={n} exceeds enumeration bound {MAX_ENUM_QUBITS}")
    h7 = _scaled_integers(problem.h, denominator, "bias")
    j7 = _scaled_integers([c[2] for c in problem.couplings], denominator,
                          "coupling")
    pairs = [(i, j) for i, j, _ in problem.couplings]

    qubits = np.arange(n, dtype=np.int64)
    best: int | None = None
    minimizers: list[np.ndarray] = []
    for lo in range(0, 1 << n, _ENUM_CHUNK):
        hi = min(lo + _ENUM_CHUNK, 1 << n)
        idx = np.arange(lo, hi, dtype=np.int64)
        spins = (((idx[:, None] >> qubits[None, :]) & 1) * 2 - 1)
        e = spins @ h7
        for (i, j), jij in zip(pairs, j7):
            e += jij * (spins[:, i] * spins[:, j])
        chunk_min = int(e.min())
        if best is None or chunk_min < best:
            best = chunk_min
            minimizers = [idx[e == chunk_min]]
        elif chunk_min == best:
            minimizers.append(idx[e == best])
    assert best is not None
    states = np.concatenate(minimizers)
    return ClassicalGround(energy_units=best, denominator=denominator,
                           minimizers=tuple(int(x) for x in states))
