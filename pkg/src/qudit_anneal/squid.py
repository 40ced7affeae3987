"""2D rf-SQUID eigenproblem and qudit-parameter extraction.

A compound-junction rf-SQUID has two flux degrees of freedom (phi1, phi2,
in units of the flux quantum) moving in the potential

    U = (phi1 - phi1x)^2 * Phi0^2/(2 L1) + (phi2 - phi2x)^2 * Phi0^2/(2 L2)
        - 2 E_J cos(pi phi2) cos(2 pi phi1)

with kinetic terms q_i^2 / 2 C_i.  All energies here are divided by the
Planck constant and expressed in GHz.

Extraction pipeline, per external-flux point: finite-difference
diagonalization of the grid Hamiltonian -> diagonalize the flux operator in
the lowest-M eigenspace -> split the flux states by the sign of the induced
flux (left/right well) -> re-diagonalize the Hamiltonian within each well.
The result is the well-localized tunneling form (level energies plus
inter-well amplitudes only), which maps onto the coupled logical+ancilla
qubit parameters, and, swept along a phi2x waveform, yields an annealing
schedule table.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.optimize
import scipy.sparse
from scipy.sparse.linalg import eigsh

from .model import (AnnealSchedule, ScheduleError, SingleQuditParams,
                    TunnelingHamiltonian, tunneling_to_qudit)

__all__ = [
    "PLANCK_H", "HBAR", "E_CHARGE", "PHI0",
    "SquidParams", "FluxGrid", "GridSolution", "LocalizedBasis",
    "DeviceConfig", "BistabilityError",
    "potential", "classical_minima", "bistability_parameter",
    "solve_grid", "localize", "localized_matrix", "extract_tunneling",
    "extract_at_bias", "build_schedule", "load_device_config",
    "harmonic_frequencies",
]

PLANCK_H = 6.62607015e-34      # J s
HBAR = PLANCK_H / (2.0 * math.pi)
E_CHARGE = 1.602176634e-19     # C
PHI0 = PLANCK_H / (2.0 * E_CHARGE)  # Wb

_GHZ = 1e9


class BistabilityError(RuntimeError):
    """The flux potential does not form a usable double well."""


@dataclass(frozen=True)
class SquidParams:
    """Device constants and external flux biases.

    Inductances in pH, capacitances in fF, critical current in uA; the
    external fluxes phi1x, phi2x are in units of the flux quantum.
    """

    l1_ph: float
    l2_ph: float
    c1_ff: float
    c2_ff: float
    ic_ua: float
    phi1x: float = 0.5
    phi2x: float = 0.0

    def __post_init__(self):
        for name in ("l1_ph", "l2_ph", "c1_ff", "c2_ff", "ic_ua"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def e_j_ghz(self) -> float:
        """Josephson energy I_c Phi0 / 2 pi, over h, in GHz."""
        return self.ic_ua * 1e-6 * PHI0 / (2.0 * math.pi) / PLANCK_H / _GHZ

    @property
    def inductive_scales_ghz(self) -> tuple[float, float]:
        """(A1, A2): Phi0^2 / (2 L_i), over h, in GHz per (delta phi)^2."""
        a1 = PHI0 ** 2 / (2.0 * self.l1_ph * 1e-12) / PLANCK_H / _GHZ
        a2 = PHI0 ** 2 / (2.0 * self.l2_ph * 1e-12) / PLANCK_H / _GHZ
        return a1, a2

    @property
    def kinetic_scales_ghz(self) -> tuple[float, float]:
        """(t1, t2): hbar^2 / (2 C_i Phi0^2), over h, in GHz; the grid
        Hamiltonian kinetic term is -t_i d^2/dphi_i^2."""
        t1 = HBAR ** 2 / (2.0 * self.c1_ff * 1e-15 * PHI0 ** 2) / PLANCK_H / _GHZ
        t2 = HBAR ** 2 / (2.0 * self.c2_ff * 1e-15 * PHI0 ** 2) / PLANCK_H / _GHZ
        return t1, t2


def harmonic_frequencies(params: SquidParams) -> tuple[float, float]:
    """Bare LC frequencies 1/(2 pi sqrt(L_i C_i)) in GHz (the E_J = 0
    oscillator ladder spacings)."""
    f1 = 1.0 / (2.0 * math.pi * math.sqrt(
        params.l1_ph * 1e-12 * params.c1_ff * 1e-15)) / _GHZ
    f2 = 1.0 / (2.0 * math.pi * math.sqrt(
        params.l2_ph * 1e-12 * params.c2_ff * 1e-15)) / _GHZ
    return f1, f2


def potential(phi1, phi2, params: SquidParams):
    """Flux potential in GHz; phi arguments in units of Phi0 (vectorized)."""
    a1, a2 = params.inductive_scales_ghz
    ej = params.e_j_ghz
    phi1 = np.asarray(phi1, dtype=float)
    phi2 = np.asarray(phi2, dtype=float)
    u = (a1 * (phi1 - params.phi1x) ** 2
         + a2 * (phi2 - params.phi2x) ** 2
         - 2.0 * ej * np.cos(np.pi * phi2) * np.cos(2.0 * np.pi * phi1))
    return u if u.ndim else float(u)


def _potential_grad(x: np.ndarray, params: SquidParams) -> np.ndarray:
    a1, a2 = params.inductive_scales_ghz
    ej = params.e_j_ghz
    p1, p2 = x
    g1 = (2.0 * a1 * (p1 - params.phi1x)
          + 4.0 * np.pi * ej * np.cos(np.pi * p2) * np.sin(2.0 * np.pi * p1))
    g2 = (2.0 * a2 * (p2 - params.phi2x)
          + 2.0 * np.pi * ej * np.sin(np.pi * p2) * np.cos(2.0 * np.pi * p1))
    return np.array([g1, g2])


def _potential_hessian_diag(x: np.ndarray, params: SquidParams) -> np.ndarray:
    a1, a2 = params.inductive_scales_ghz
    ej = params.e_j_ghz
    p1, p2 = x
    c = np.cos(np.pi * p2) * np.cos(2.0 * np.pi * p1)
    u11 = 2.0 * a1 + 8.0 * np.pi ** 2 * ej * c
    u22 = 2.0 * a2 + 2.0 * np.pi ** 2 * ej * c
    return np.array([u11, u22])


def bistability_parameter(params: SquidParams) -> float:
    """Small-L2 double-well criterion: bistable when
    2 pi L1 * 2 I_c |cos(pi phi2x)| / Phi0 > 1."""
    return (4.0 * math.pi * params.l1_ph * 1e-12 * params.ic_ua * 1e-6
            * abs(math.cos(math.pi * params.phi2x)) / PHI0)


def classical_minima(params: SquidParams, span: float = 0.75,
                     scan_points: int = 3001) -> list[tuple[float, float]]:
    """Local minima of U near the bias point, ordered by phi1.

    Seeds from a 1D scan along phi1 at phi2 = phi2x, then refines each seed
    in 2D with the analytic gradient.  Returns one (monostable) or two
    (bistable) minima.
    """
    x1 = np.linspace(params.phi1x - span, params.phi1x + span, scan_points)
    u = potential(x1, np.full_like(x1, params.phi2x), params)
    interior = np.nonzero((u[1:-1] < u[:-2]) & (u[1:-1] <= u[2:]))[0] + 1
    if interior.size == 0:
        interior = np.array([int(np.argmin(u))])
    seeds = [x1[i] for i in interior]
    found: list[tuple[float, float]] = []
    for s1 in seeds:
        res = scipy.optimize.minimize(
            lambda x: potential(x[0], x[1], params),
            x0=np.array([s1, params.phi2x]),
            jac=lambda x: _potential_grad(x, params),
            method="L-BFGS-B",
            options={"gtol": 1e-10, "maxiter": 500})
        p = (float(res.x[0]), float(res.x[1]))
        if all(abs(p[0] - q[0]) > 1e-5 for q in found):
            found.append(p)
    found.sort()
    if len(found) > 2:
        # keep the two deepest wells (periodic side minima are suppressed
        # by the inductive parabola but can appear at extreme spans)
        found.sort(key=lambda p: potential(p[0], p[1], params))
        found = sorted(found[:2])
    return found


@dataclass(frozen=True)
class FluxGrid:
    """Uniform rectangular grid in (phi1, phi2), Dirichlet walls."""

    phi1_min: float
    phi1_max: float
    n1: int
    phi2_min: float
    phi2_max: float
    n2: int

    def __post_init__(self):
        if self.n1 < 32 or self.n2 < 32:
            raise ValueError("grid needs at least 32 points per axis")
        if not (self.phi1_max > self.phi1_min and self.phi2_max > self.phi2_min):
            raise ValueError("grid box is empty")

    @property
    def spacing(self) -> tuple[float, float]:
        return ((self.phi1_max - self.phi1_min) / (self.n1 - 1),
                (self.phi2_max - self.phi2_min) / (self.n2 - 1))

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.linspace(self.phi1_min, self.phi1_max, self.n1),
                np.linspace(self.phi2_min, self.phi2_max, self.n2))

    def contains(self, p1: float, p2: float, margin: float = 0.0) -> bool:
        return (self.phi1_min + margin <= p1 <= self.phi1_max - margin
                and self.phi2_min + margin <= p2 <= self.phi2_max - margin)

    @classmethod
    def auto(cls, params: SquidParams, points: int = 128,
             padding: float = 4.0) -> "FluxGrid":
        """Box = classical minima extended by `padding` local harmonic
        lengths per axis (keeps wavefunction tails ~1e-8 at the walls)."""
        minima = classical_minima(params)
        t1, t2 = params.kinetic_scales_ghz
        ell1 = ell2 = 0.0
        for p in minima:
            u11, u22 = _potential_hessian_diag(np.array(p), params)
            u11, u22 = max(u11, 1e-12), max(u22, 1e-12)
            ell1 = max(ell1, (2.0 * t1 / u11) ** 0.25)
            ell2 = max(ell2, (2.0 * t2 / u22) ** 0.25)
        p1s = [p[0] for p in minima]
        p2s = [p[1] for p in minima]
        return cls(min(p1s) - padding * ell1, max(p1s) + padding * ell1,
                   points,
                   min(p2s) - padding * ell2, max(p2s) + padding * ell2,
                   points)


@dataclass(frozen=True)
class GridSolution:
    """Lowest-M eigenpairs of the grid Hamiltonian (GHz; states are l2
    orthonormal grid vectors, one per column)."""

    energies: np.ndarray
    states: np.ndarray
    grid: FluxGrid
    params: SquidParams


def _grid_hamiltonian(params: SquidParams, grid: FluxGrid) -> scipy.sparse.csc_matrix:
    t1, t2 = params.kinetic_scales_ghz
    h1, h2 = grid.spacing
    x1, x2 = grid.axes()
    u = potential(x1[:, None], x2[None, :], params).ravel()

    def lap1d(n: int) -> scipy.sparse.csr_matrix:
        return scipy.sparse.diags(
            [-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)],
            offsets=[-1, 0, 1], format="csr")

    kin = (t1 / h1 ** 2) * scipy.sparse.kron(lap1d(grid.n1),
                                             scipy.sparse.identity(grid.n2))
    kin = kin + (t2 / h2 ** 2) * scipy.sparse.kron(
        scipy.sparse.identity(grid.n1), lap1d(grid.n2))
    return (kin + scipy.sparse.diags(u)).tocsc()


def solve_grid(params: SquidParams, grid: FluxGrid, m: int,
               seed: int = 0) -> GridSolution:
    """Lowest m eigenpairs of the second-order finite-difference
    Hamiltonian, via shift-invert Lanczos anchored below the potential
    minimum.  Deterministic for a fixed seed."""
    if m < 1:
        raise ValueError("m must be >= 1")
    minima = classical_minima(params)
    for p in minima:
        if not grid.contains(*p):
            raise ValueError(
                f"grid box does not contain classical minimum at {p}")
    h = _grid_hamiltonian(params, grid)
    dim = h.shape[0]
    if m >= dim - 1:
        raise ValueError(f"m={m} too large for grid dimension {dim}")
    umin = float(min(potential(p[0], p[1], params) for p in minima))
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    v0 = rng.standard_normal(dim)
    vals, vecs = eigsh(h, k=m, sigma=umin - 1.0, which="LM", v0=v0,
                       ncv=max(4 * m, 24))
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    vecs /= np.linalg.norm(vecs, axis=0)
    return GridSolution(energies=vals, states=vecs, grid=grid, params=params)


@dataclass(frozen=True)
class LocalizedBasis:
    """Flux-operator eigenstates within the lowest-M eigenspace.

    chi are the flux eigenvalues, induced_flux = chi - phi1x; negative
    induced flux labels the left well.  transform columns express each flux
    state in the energy eigenbasis; states are the corresponding grid
    vectors, gauge-fixed to a positive peak amplitude.
    """

    chi: np.ndarray
    induced_flux: np.ndarray
    is_left: np.ndarray
    states: np.ndarray
    transform: np.ndarray
    energies: np.ndarray

    @property
    def balanced(self) -> bool:
        n_left = int(np.count_nonzero(self.is_left))
        return 2 * n_left == self.is_left.shape[0]


def localize(solution: GridSolution, phi1x: float | None = None,
             flux_tol: float = 1e-4) -> LocalizedBasis:
    """Diagonalize the phi1 flux operator in the lowest-M eigenspace and
    label the resulting states by the sign of their induced flux."""
    m = solution.energies.shape[0]
    if m < 2:
        raise ValueError("need at least two states to localize")
    if phi1x is None:
        phi1x = solution.params.phi1x
    x1, _ = solution.grid.axes()
    phi1_mesh = np.repeat(x1, solution.grid.n2)
    f = solution.states.T @ (phi1_mesh[:, None] * solution.states)
    f = 0.5 * (f + f.T)
    chi, w = np.linalg.eigh(f)
    dphi = chi - phi1x
    if np.any(np.abs(dphi) < flux_tol):
        worst = float(np.min(np.abs(dphi)))
        raise BistabilityError(
            f"monostable or ambiguous localization: smallest |induced flux| "
            f"{worst:.2e} Phi0 < tolerance {flux_tol:g}")
    states = solution.states @ w
    for i in range(m):
        peak = int(np.argmax(np.abs(states[:, i])))
        if states[peak, i] < 0:
            states[:, i] *= -1.0
            w[:, i] *= -1.0
    return LocalizedBasis(chi=chi, induced_flux=dphi, is_left=dphi < 0,
                          states=states, transform=w,
                          energies=solution.energies.copy())


def localized_matrix(basis: LocalizedBasis,
                     h_energy: np.ndarray | None = None) -> np.ndarray:
    """Hamiltonian in the well-stationary basis, interleaved left/right.

    Re-diagonalizes the projected Hamiltonian separately in the left and in
    the right subspace and orders the result as even = left, odd = right
    (each well ascending in energy).  Intra-well off-diagonal elements of
    the returned matrix vanish up to floating-point rounding; the whole
    construction is a unitary change of basis of diag(energies).
    """
    if h_energy is None:
        h_energy = np.diag(basis.energies)
    m = basis.chi.shape[0]
    left = np.nonzero(basis.is_left)[0]
    right = np.nonzero(~basis.is_left)[0]
    if left.size == 0 or right.size == 0:
        raise BistabilityError("one of the wells holds no localized state")
    if left.size != right.size:
        raise BistabilityError(
            f"well occupation is unbalanced ({left.size} left / "
            f"{right.size} right); the even-M tunneling form needs equal counts")
    w = basis.transform
    h_chi = w.T @ h_energy @ w
    e_left, r_left = np.linalg.eigh(h_chi[np.ix_(left, left)])
    e_right, r_right = np.linalg.eigh(h_chi[np.ix_(right, right)])
    # deterministic gauge: final well states peak-positive on the grid
    gl = basis.states[:, left] @ r_left
    for i in range(r_left.shape[1]):
        if gl[int(np.argmax(np.abs(gl[:, i]))), i] < 0:
            r_left[:, i] *= -1.0
    gr = basis.states[:, right] @ r_right
    for i in range(r_right.shape[1]):
        if gr[int(np.argmax(np.abs(gr[:, i]))), i] < 0:
            r_right[:, i] *= -1.0
    rot = np.zeros((m, m))
    rot[np.ix_(left, left)] = r_left
    rot[np.ix_(right, right)] = r_right
    order = np.empty(m, dtype=int)
    order[0::2] = left
    order[1::2] = right
    h_rot = rot.T @ h_chi @ rot
    return h_rot[np.ix_(order, order)]


def extract_tunneling(basis: LocalizedBasis,
                      h_energy: np.ndarray | None = None) -> TunnelingHamiltonian:
    """Tunneling form of the localized Hamiltonian: level energies from the
    diagonal, inter-well amplitudes from the cross block (even index =
    left well)."""
    h_loc = localized_matrix(basis, h_energy)
    m = h_loc.shape[0]
    e = np.diag(h_loc)
    k = h_loc[0::2, 1::2]
    return TunnelingHamiltonian(e, k)


def extract_at_bias(params: SquidParams, grid: FluxGrid, m: int,
                    seed: int = 0, flux_tol: float = 1e-4
                    ) -> tuple[TunnelingHamiltonian, GridSolution, LocalizedBasis]:
    """Full pipeline at one external-flux point."""
    sol = solve_grid(params, grid, m, seed=seed)
    basis = localize(sol, params.phi1x, flux_tol=flux_tol)
    return extract_tunneling(basis), sol, basis


@dataclass(frozen=True)
class DeviceConfig:
    """Device constants plus the annealing waveform."""

    params: SquidParams
    phi2x_start: float
    phi2x_end: float
    samples: int
    unit_bias: float = 1.5e-3  # phi1x offset (Phi0) corresponding to |h| = 1

    def __post_init__(self):
        if self.samples < 2:
            raise ValueError("waveform needs at least 2 samples")
        if self.unit_bias <= 0:
            raise ValueError("unit_bias must be positive")


def load_device_config(path: str | Path) -> DeviceConfig:
    d = json.loads(Path(path).read_text())
    try:
        params = SquidParams(
            l1_ph=float(d["L1_pH"]), l2_ph=float(d["L2_pH"]),
            c1_ff=float(d["C1_fF"]), c2_ff=float(d["C2_fF"]),
            ic_ua=float(d["Ic_uA"]))
        wf = d["waveform"]
        return DeviceConfig(
            params=params,
            phi2x_start=float(wf["phi2x_start"]),
            phi2x_end=float(wf["phi2x_end"]),
            samples=int(wf.get("samples", 64)),
            unit_bias=float(d.get("phi1x_unit_bias", 1.5e-3)))
    except KeyError as exc:
        raise ValueError(f"device config missing key {exc}") from exc


def _schedule_sample(args):
    (k, s, params, m, grid_points, flux_tol, bias_delta, unit_bias,
     consistency_tol, seed) = args
    grid = FluxGrid.auto(params, points=grid_points)
    tun, sol, basis = extract_at_bias(params, grid, m, seed=seed,
                                      flux_tol=flux_tol)
    qp = tunneling_to_qudit(tun, tol=consistency_tol)
    # energy-bias susceptibility: tilt phi1x by +-bias_delta, track the
    # splitting of the two lowest localized levels
    eps = {}
    for sgn in (+1.0, -1.0):
        tilted = replace(params, phi1x=params.phi1x + sgn * bias_delta)
        tun2, _, _ = extract_at_bias(tilted, grid, 2, seed=seed,
                                     flux_tol=flux_tol * 1e-2)
        eps[sgn] = tun2.e[0] - tun2.e[1]
    # epsilon = -2 E h per qudit<->Ising correspondence, so the Ising scale
    # E is half the susceptibility times the unit-bias flux offset
    e_scale = (eps[+1.0] - eps[-1.0]) / (2.0 * bias_delta) * unit_bias / 2.0
    recon = np.linalg.eigvalsh(tun.to_matrix())
    diag = {
        "sample": k,
        "s": s,
        "phi2x": params.phi2x,
        "grid_energies_ghz": [float(x) for x in sol.energies],
        "e_levels_ghz": [float(x) for x in tun.e],
        "k_matrix_ghz": [[float(x) for x in row] for row in np.asarray(tun.k)],
        "epsilon_ghz": float(qp.epsilon),
        "epsilon_tilt_ghz": {"plus": float(eps[+1.0]), "minus": float(eps[-1.0])},
        "induced_flux_phi0": [float(x) for x in basis.induced_flux],
        "reconstruction_residual_ghz": float(
            np.max(np.abs(recon - np.sort(sol.energies)))),
    }
    return k, qp, float(e_scale), diag


def build_schedule(device: DeviceConfig, *, m: int = 4,
                   grid_points: int = 128, phi1x: float = 0.5,
                   bias_delta: float = 1e-4, clamp_floor: float = 1e-6,
                   flux_tol: float = 1e-4, consistency_tol: float = 1e-4,
                   seed: int = 0, threads: int = 1
                   ) -> tuple[AnnealSchedule, list[dict]]:
    """Sweep phi2x linearly over the waveform and extract the qudit
    parameters at each sample; |Delta| and |kappa| below clamp_floor are
    snapped to exactly zero so the end-of-anneal invariants hold.

    The baseline requires a symmetric bias (phi1x = Phi0/2) so the emitted
    E(s) column is a per-unit-bias scale.  Raises BistabilityError naming
    the failing s when the double well is lost, and ScheduleError if the
    extracted table violates schedule invariants.
    """
    if m < 2 or m % 2:
        raise ValueError(f"level count must be even and >= 2, got {m}")
    samples = device.samples
    svals = np.linspace(0.0, 1.0, samples)
    jobs = []
    for k, s in enumerate(svals):
        phi2x = device.phi2x_start + (device.phi2x_end - device.phi2x_start) * s
        params = replace(device.params, phi1x=phi1x, phi2x=phi2x)
        if len(classical_minima(params)) < 2:
            raise BistabilityError(
                f"potential is not bistable at s={s:.6g} (phi2x={phi2x:.6g})")
        job_seed = int(np.random.SeedSequence(
            entropy=seed, spawn_key=(k,)).generate_state(1)[0])
        jobs.append((k, float(s), params, m, grid_points, flux_tol,
                     bias_delta, device.unit_bias, consistency_tol, job_seed))

    results: dict[int, tuple[SingleQuditParams, float, dict]] = {}
    errors: list[tuple[float, str]] = []
    if threads > 1:
        from concurrent.futures import ProcessPoolExecutor, as_completed
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futs = {pool.submit(_schedule_sample, j): j for j in jobs}
            for fut in as_completed(futs):
                j = futs[fut]
                try:
                    k, qp, e_scale, diag = fut.result()
                    results[k] = (qp, e_scale, diag)
                except BistabilityError as exc:
                    errors.append((j[1], str(exc)))
    else:
        for j in jobs:
            try:
                k, qp, e_scale, diag = _schedule_sample(j)
                results[k] = (qp, e_scale, diag)
            except BistabilityError as exc:
                errors.append((j[1], str(exc)))
    if errors:
        errors.sort()
        s_bad, msg = errors[0]
        raise BistabilityError(f"extraction failed at s={s_bad:.6g}: {msg}")

    def clamp(x: float) -> float:
        return 0.0 if abs(x) < clamp_floor else float(x)

    delta = [clamp(results[k][0].delta) for k in range(samples)]
    kxz = [clamp(results[k][0].kappa_xz) for k in range(samples)]
    kxx = [clamp(results[k][0].kappa_xx) for k in range(samples)]
    wp = [float(results[k][0].omega_p) for k in range(samples)]
    e = [results[k][1] for k in range(samples)]
    diagnostics = [results[k][2] for k in range(samples)]
    schedule = AnnealSchedule(svals, delta, e, wp, kxz, kxx)
    return schedule, diagnostics
