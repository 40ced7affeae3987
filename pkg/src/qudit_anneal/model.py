"""Problem instances, annealing schedules, and Hamiltonian assembly.

Two models of the same optimization problem:

* two-state: n qubits, transverse-field Ising form
      -(Delta/2) sum_i X_i  +  E (sum_i h_i Z_i + sum_{i<j} J_ij Z_i Z_j)
* four-state: each device is a double-well qudit whose lowest four levels
  are represented by a logical qubit (index i) plus an ancilla qubit
  (index n+i) coupled through XX+XZ terms; the ancilla Z splitting is the
  plasma frequency omega_p.

The tunneling <-> qudit mapping connects the 4x4 well-localized form
(diagonal level energies E_l, inter-well amplitudes K) to the coupled
two-qubit parameters (epsilon, Delta, omega_p, kappa_xz, kappa_xx); the two
matrices are similar up to the mean level energy.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .operators import HamiltonianOperator, PauliTerm

__all__ = [
    "IsingProblem",
    "SchedulePoint",
    "AnnealSchedule",
    "QuditParams",
    "TunnelingHamiltonian",
    "SingleQuditParams",
    "ScheduleError",
    "ConsistencyError",
    "build_two_state",
    "build_four_state",
    "tunneling_to_qudit",
    "qudit_to_effective_matrix",
    "default_schedule",
    "load_instance",
    "save_instance",
]

SCHEDULE_CSV_HEADER = ("s", "delta_ghz", "e_ghz", "omega_p_ghz",
                       "kappa_xz_ghz", "kappa_xx_ghz")

# slack for monotonicity checks on tabulated schedules (GHz)
_MONOTONE_SLACK = 1e-9
# |Delta| and |kappa| at s=1 must be exactly zero up to this dust level (GHz)
_ENDPOINT_TOL = 1e-12


class ScheduleError(ValueError):
    """Schedule table violates a structural invariant."""


class ConsistencyError(ValueError):
    """Tunneling-Hamiltonian parameters violate a qudit-mapping identity."""


@dataclass(frozen=True)
class IsingProblem:
    """Dimensionless biases h_i and couplings J_ij on a graph (i < j)."""

    n: int
    h: tuple[float, ...]
    couplings: tuple[tuple[int, int, float], ...]

    def __init__(self, n: int, h: Sequence[float],
                 couplings: Sequence[tuple[int, int, float]] = ()):
        n = int(n)
        h = tuple(float(x) for x in h)
        if n < 1:
            raise ValueError("need at least one qubit")
        if len(h) != n:
            raise ValueError(f"expected {n} biases, got {len(h)}")
        norm = []
        seen = set()
        for i, j, jij in couplings:
            i, j = int(i), int(j)
            if not (0 <= i < j < n):
                raise ValueError(f"coupling ({i},{j}) must satisfy 0 <= i < j < n={n}")
            if (i, j) in seen:
                raise ValueError(f"duplicate coupling pair ({i},{j})")
            seen.add((i, j))
            norm.append((i, j, float(jij)))
        norm.sort()
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "couplings", tuple(norm))

    def to_json_dict(self, seed: int | None = None) -> dict:
        d: dict = {
            "n": self.n,
            "h": list(self.h),
            "couplings": [[i, j, v] for i, j, v in self.couplings],
        }
        if seed is not None:
            d["seed"] = int(seed)
        return d


def save_instance(problem: IsingProblem, path: str | Path,
                  seed: int | None = None) -> None:
    Path(path).write_text(
        json.dumps(problem.to_json_dict(seed), indent=2) + "\n")


def load_instance(path: str | Path) -> IsingProblem:
    d = json.loads(Path(path).read_text())
    return IsingProblem(d["n"], d["h"],
                        [tuple(c) for c in d.get("couplings", [])])


@dataclass(frozen=True)
class SchedulePoint:
    """Energy scales (GHz) at one point of the annealing path."""

    s: float
    delta: float
    e: float
    omega_p: float
    kappa_xz: float
    kappa_xx: float


@dataclass(frozen=True)
class AnnealSchedule:
    """Tabulated schedule on a monotone s-grid, interpolated linearly.

    Columns are GHz.  Delta must be non-increasing and E non-decreasing in s;
    Delta, kappa_xz and kappa_xx must vanish at s=1 (no off-diagonal terms
    survive at the end of the anneal).
    """

    s: np.ndarray
    delta: np.ndarray
    e: np.ndarray
    omega_p: np.ndarray
    kappa_xz: np.ndarray
    kappa_xx: np.ndarray

    def __init__(self, s, delta, e, omega_p, kappa_xz, kappa_xx):
        cols = {}
        for name, col in [("s", s), ("delta", delta), ("e", e),
                          ("omega_p", omega_p), ("kappa_xz", kappa_xz),
                          ("kappa_xx", kappa_xx)]:
            a = np.asarray(col, dtype=float).copy()
            a.setflags(write=False)
            cols[name] = a
            object.__setattr__(self, name, a)
        self._validate(cols)

    @staticmethod
    def _validate(cols: dict) -> None:
        s = cols["s"]
        m = s.shape[0]
        if m < 2:
            raise ScheduleError("schedule needs at least two knots")
        for name, a in cols.items():
            if a.shape != (m,):
                raise ScheduleError(f"column {name} has wrong length")
            if not np.all(np.isfinite(a)):
                raise ScheduleError(f"column {name} contains non-finite values")
        if np.any(np.diff(s) <= 0):
            raise ScheduleError("s knots must be strictly increasing")
        if s[0] != 0.0 or s[-1] != 1.0:
            raise ScheduleError("s grid must start at 0 and end at 1")
        d, e = cols["delta"], cols["e"]
        bad = np.nonzero(np.diff(d) > _MONOTONE_SLACK)[0]
        if bad.size:
            k = int(bad[0])
            raise ScheduleError(
                f"delta increases between knots {k} and {k + 1} "
                f"({d[k]:.6g} -> {d[k + 1]:.6g} GHz)")
        bad = np.nonzero(np.diff(e) < -_MONOTONE_SLACK)[0]
        if bad.size:
            k = int(bad[0])
            raise ScheduleError(
                f"e decreases between knots {k} and {k + 1} "
                f"({e[k]:.6g} -> {e[k + 1]:.6g} GHz)")
        for name in ("delta", "kappa_xz", "kappa_xx"):
            end = cols[name][-1]
            if abs(end) > _ENDPOINT_TOL:
                raise ScheduleError(
                    f"{name}(1) = {end:.6g} GHz; off-diagonal scales must "
                    "vanish at s=1")

    def evaluate(self, s: float) -> SchedulePoint:
        """Piecewise-linear interpolation; exact at knots."""
        s = float(s)
        if not 0.0 <= s <= 1.0:
            raise ValueError(f"s={s} outside [0, 1]")
        return SchedulePoint(
            s=s,
            delta=float(np.interp(s, self.s, self.delta)),
            e=float(np.interp(s, self.s, self.e)),
            omega_p=float(np.interp(s, self.s, self.omega_p)),
            kappa_xz=float(np.interp(s, self.s, self.kappa_xz)),
            kappa_xx=float(np.interp(s, self.s, self.kappa_xx)),
        )

    @classmethod
    def from_functions(cls, delta: Callable[[float], float],
                       e: Callable[[float], float],
                       omega_p: Callable[[float], float],
                       kappa_xz: Callable[[float], float],
                       kappa_xx: Callable[[float], float],
                       knots: int = 101) -> "AnnealSchedule":
        s = np.linspace(0.0, 1.0, knots)
        return cls(s, [delta(x) for x in s], [e(x) for x in s],
                   [omega_p(x) for x in s], [kappa_xz(x) for x in s],
                   [kappa_xx(x) for x in s])

    def to_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv_text())

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SCHEDULE_CSV_HEADER)
        for row in zip(self.s, self.delta, self.e, self.omega_p,
                       self.kappa_xz, self.kappa_xx):
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, path: str | Path) -> "AnnealSchedule":
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
        if not rows or tuple(rows[0]) != SCHEDULE_CSV_HEADER:
            raise ScheduleError(
                f"schedule CSV must start with header {','.join(SCHEDULE_CSV_HEADER)}")
        data = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float)
        if data.ndim != 2 or data.shape[1] != 6:
            raise ScheduleError("schedule CSV rows must have 6 columns")
        return cls(*(data[:, k] for k in range(6)))


def default_schedule(knots: int = 101) -> AnnealSchedule:
    """Built-in synthetic schedule for runs without a device extraction.

    Shape-faithful only: Delta decays quadratically to zero, E ramps
    linearly, omega_p stays roughly three times E late in the anneal, and
    the ancilla couplings fade linearly to zero.
    """
    return AnnealSchedule.from_functions(
        delta=lambda s: 10.0 * (1.0 - s) ** 2,
        e=lambda s: 10.0 * s,
        omega_p=lambda s: 30.0 * s + 6.0 * (1.0 - s),
        kappa_xz=lambda s: 0.5 * (1.0 - s),
        kappa_xx=lambda s: 1.0 * (1.0 - s),
        knots=knots,
    )


@dataclass(frozen=True)
class QuditParams:
    """Per-logical-qubit ancilla parameters (GHz)."""

    omega_p: tuple[float, ...]
    kappa_xz: tuple[float, ...]
    kappa_xx: tuple[float, ...]

    def __init__(self, omega_p, kappa_xz, kappa_xx):
        omega_p = tuple(float(x) for x in omega_p)
        kappa_xz = tuple(float(x) for x in kappa_xz)
        kappa_xx = tuple(float(x) for x in kappa_xx)
        if not len(omega_p) == len(kappa_xz) == len(kappa_xx):
            raise ValueError("per-qubit parameter lists must have equal length")
        object.__setattr__(self, "omega_p", omega_p)
        object.__setattr__(self, "kappa_xz", kappa_xz)
        object.__setattr__(self, "kappa_xx", kappa_xx)

    def __len__(self) -> int:
        return len(self.omega_p)

    @classmethod
    def uniform(cls, n: int, point: SchedulePoint,
                omega_p_scale: float = 1.0,
                kappa_scale: float = 1.0) -> "QuditParams":
        return cls((point.omega_p * omega_p_scale,) * n,
                   (point.kappa_xz * kappa_scale,) * n,
                   (point.kappa_xx * kappa_scale,) * n)


@dataclass(frozen=True)
class SingleQuditParams:
    """Coupled two-qubit representation of one four-level device (GHz)."""

    epsilon: float
    delta: float
    omega_p: float
    kappa_xz: float
    kappa_xx: float


@dataclass(frozen=True)
class TunnelingHamiltonian:
    """Well-localized M-level form: level energies E_l (even index = left
    well, odd = right) and inter-well tunneling amplitudes K[n, m] between
    left state 2n and right state 2m+1.  There are no intra-well
    off-diagonal elements by construction."""

    m: int
    e: tuple[float, ...]
    k: np.ndarray

    def __init__(self, e: Sequence[float], k) -> None:
        e = tuple(float(x) for x in e)
        m = len(e)
        if m < 2 or m % 2:
            raise ValueError(f"level count must be even and >= 2, got {m}")
        k = np.array(k, dtype=float)
        if k.shape != (m // 2, m // 2):
            raise ValueError(f"K must be {m // 2}x{m // 2}, got {k.shape}")
        k.setflags(write=False)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "e", e)
        object.__setattr__(self, "k", k)

    def to_matrix(self) -> np.ndarray:
        mat = np.diag(np.array(self.e))
        half = self.m // 2
        for n in range(half):
            for m_ in range(half):
                mat[2 * n, 2 * m_ + 1] = self.k[n, m_]
                mat[2 * m_ + 1, 2 * n] = self.k[n, m_]
        return mat


def build_two_state(problem: IsingProblem, delta: float, e: float) -> HamiltonianOperator:
    """Transverse-field Ising operator on the problem's n qubits."""
    terms = []
    for i in range(problem.n):
        c = -0.5 * delta
        if c != 0.0:
            terms.append(PauliTerm(c, {i: "X"}))
    for i, hi in enumerate(problem.h):
        c = e * hi
        if c != 0.0:
            terms.append(PauliTerm(c, {i: "Z"}))
    for i, j, jij in problem.couplings:
        c = e * jij
        if c != 0.0:
            terms.append(PauliTerm(c, {i: "Z", j: "Z"}))
    return HamiltonianOperator(problem.n, terms)


def build_four_state(problem: IsingProblem, point: SchedulePoint,
                     qudit: QuditParams | None = None) -> HamiltonianOperator:
    """Qudit operator on 2n qubits: logical qubit i at index i, its ancilla
    at index n+i.  Ancilla terms per qudit:

        (omega_p/2) tau_z + (kappa_xz/2) sigma_x (1 + tau_z)
        + (kappa_xx/2) sigma_x tau_x

    where the "1" in (1 + tau_z) contributes a bare sigma_x term.
    """
    n = problem.n
    if qudit is None:
        qudit = QuditParams.uniform(n, point)
    if len(qudit) != n:
        raise ValueError(f"expected {n} qudit records, got {len(qudit)}")
    if any(w <= 0.0 for w in qudit.omega_p):
        raise ValueError("omega_p must be positive in the four-state model")
    terms = []
    for i in range(n):
        c = -0.5 * point.delta
        if c != 0.0:
            terms.append(PauliTerm(c, {i: "X"}))
    for i, hi in enumerate(problem.h):
        c = point.e * hi
        if c != 0.0:
            terms.append(PauliTerm(c, {i: "Z"}))
    for i, j, jij in problem.couplings:
        c = point.e * jij
        if c != 0.0:
            terms.append(PauliTerm(c, {i: "Z", j: "Z"}))
    for i in range(n):
        a = n + i
        terms.append(PauliTerm(0.5 * qudit.omega_p[i], {a: "Z"}))
        kxz = 0.5 * qudit.kappa_xz[i]
        if kxz != 0.0:
            terms.append(PauliTerm(kxz, {i: "X"}))
            terms.append(PauliTerm(kxz, {i: "X", a: "Z"}))
        kxx = 0.5 * qudit.kappa_xx[i]
        if kxx != 0.0:
            terms.append(PauliTerm(kxx, {i: "X", a: "X"}))
    return HamiltonianOperator(2 * n, terms)


def tunneling_to_qudit(t: TunnelingHamiltonian,
                       tol: float = 1e-6) -> SingleQuditParams:
    """Map a 4-level tunneling Hamiltonian to coupled-qubit parameters.

    Requires the level structure to satisfy the two-qubit identities
    E0-E1 = E2-E3, E2-E0 = E3-E1 and K03 = K12 within tol (GHz); the
    mapping is exact (kappa_xz = K23 - K01, not the K23 approximation).
    """
    if t.m != 4:
        raise ValueError(f"qudit mapping requires M=4 levels, got M={t.m}")
    e0, e1, e2, e3 = t.e
    if abs((e0 - e1) - (e2 - e3)) > tol:
        raise ConsistencyError(
            f"bias identity violated: E0-E1 = {e0 - e1:.9g} but "
            f"E2-E3 = {e2 - e3:.9g} (tol {tol:g} GHz)")
    if abs((e2 - e0) - (e3 - e1)) > tol:
        raise ConsistencyError(
            f"plasma identity violated: E2-E0 = {e2 - e0:.9g} but "
            f"E3-E1 = {e3 - e1:.9g} (tol {tol:g} GHz)")
    k01, k03 = float(t.k[0, 0]), float(t.k[0, 1])
    k12, k23 = float(t.k[1, 0]), float(t.k[1, 1])
    if abs(k03 - k12) > tol:
        raise ConsistencyError(
            f"cross identity violated: K03 = {k03:.9g} but K12 = {k12:.9g} "
            f"(tol {tol:g} GHz)")
    return SingleQuditParams(
        epsilon=e0 - e1,
        delta=-2.0 * k01,
        omega_p=e2 - e0,
        kappa_xz=k23 - k01,
        kappa_xx=2.0 * k03,
    )


def qudit_to_effective_matrix(p: SingleQuditParams) -> np.ndarray:
    """4x4 coupled-qubit matrix in the basis |x1 x0> = (00, 01, 10, 11),
    x0 = logical bit, x1 = ancilla bit:

        -(epsilon sigma_z + delta sigma_x)/2
        + [omega_p tau_z + kappa_xz sigma_x (1 + tau_z)
           + kappa_xx sigma_x tau_x]/2

    Its spectrum matches the M=4 tunneling matrix minus the mean level
    energy when the parameters come from tunneling_to_qudit.
    """
    eps, dlt, wp = p.epsilon, p.delta, p.omega_p
    kxz, kxx = p.kappa_xz, p.kappa_xx
    m = np.zeros((4, 4))
    # Z convention: sigma_z |0> = -|0>; basis index l = 2*x1 + x0
    for l in range(4):
        sz = 1.0 if l & 1 else -1.0
        tz = 1.0 if l & 2 else -1.0
        m[l, l] = -0.5 * eps * sz + 0.5 * wp * tz
    # sigma_x blocks: (0,1) has tau_z = -1, (2,3) has tau_z = +1
    m[0, 1] = m[1, 0] = -0.5 * dlt
    m[2, 3] = m[3, 2] = -0.5 * dlt + kxz
    # sigma_x tau_x flips both bits: (0,3) and (1,2)
    m[0, 3] = m[3, 0] = 0.5 * kxx
    m[1, 2] = m[2, 1] = 0.5 * kxx
    return m
