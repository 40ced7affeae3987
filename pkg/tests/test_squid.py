import json
from dataclasses import replace

import numpy as np
import pytest

from qudit_anneal.model import ScheduleError, tunneling_to_qudit
from qudit_anneal.squid import (BistabilityError, DeviceConfig, FluxGrid,
                                SquidParams, bistability_parameter,
                                build_schedule, classical_minima,
                                extract_at_bias, extract_tunneling,
                                harmonic_frequencies, load_device_config,
                                localize, localized_matrix, potential,
                                solve_grid)

DEVICE = SquidParams(l1_ph=265, l2_ph=25, c1_ff=110, c2_ff=12, ic_ua=2.0,
                     phi1x=0.5, phi2x=0.30)
# shallow barrier: tunneling splittings are GHz-scale, well above solver
# resolution, so eigenstates have numerically definite parity
SHALLOW = replace(DEVICE, phi2x=0.372)
# negligible Josephson term: effectively a 2D harmonic oscillator
HARMONIC = replace(DEVICE, ic_ua=1e-12, phi2x=0.3)


@pytest.fixture(scope="module")
def double_well():
    grid = FluxGrid.auto(DEVICE, points=96)
    tun, sol, basis = extract_at_bias(DEVICE, grid, 4)
    return tun, sol, basis


class TestPotential:
    def test_parabola_when_junctions_negligible(self):
        u0 = potential(HARMONIC.phi1x, HARMONIC.phi2x, HARMONIC)
        assert abs(u0) < 1e-9
        assert potential(HARMONIC.phi1x + 0.1, HARMONIC.phi2x, HARMONIC) > 0
        mins = classical_minima(HARMONIC)
        assert len(mins) == 1
        assert mins[0][0] == pytest.approx(HARMONIC.phi1x, abs=1e-7)
        assert mins[0][1] == pytest.approx(HARMONIC.phi2x, abs=1e-7)

    def test_symmetric_double_well(self):
        for d in (0.05, 0.21, 0.4):
            left = potential(0.5 - d, 0.31, DEVICE)
            right = potential(0.5 + d, 0.31, DEVICE)
            assert left == pytest.approx(right, rel=1e-14)

    def test_vectorized(self):
        x = np.linspace(0.2, 0.8, 11)
        u = potential(x, np.full_like(x, 0.3), DEVICE)
        assert u.shape == (11,)

    def test_bistability_criterion_against_1d_minimum_count(self):
        # criterion: 2 pi L1 * 2 Ic |cos(pi phi2x)| / Phi0 > 1 (small-L2
        # approximation); oracle: count minima of the phi1 slice at fixed
        # phi2 = phi2x on a fine grid
        for phi2x in (0.43, 0.40, 0.368, 0.286, 0.2):
            p = replace(DEVICE, phi2x=phi2x)
            beta = bistability_parameter(p)
            x = np.linspace(0.5 - 0.45, 0.5 + 0.45, 20001)
            u = potential(x, np.full_like(x, phi2x), p)
            n_min = int(np.sum((u[1:-1] < u[:-2]) & (u[1:-1] <= u[2:])))
            assert (beta > 1) == (n_min == 2), (phi2x, beta, n_min)


class TestFluxGrid:
    def test_minimum_counts(self):
        with pytest.raises(ValueError, match="32"):
            FluxGrid(0, 1, 16, 0, 1, 64)

    def test_auto_contains_minima(self):
        grid = FluxGrid.auto(DEVICE, points=64)
        for p in classical_minima(DEVICE):
            assert grid.contains(*p)

    def test_auto_box_margin_covers_tails(self):
        # 4 harmonic lengths of padding keeps edge amplitudes small enough
        # that the Dirichlet walls shift energies by ~amplitude^2
        grid = FluxGrid.auto(DEVICE, points=64)
        sol = solve_grid(DEVICE, grid, 4)
        psi = np.abs(sol.states).reshape(grid.n1, grid.n2, 4)
        edge = max(psi[0].max(), psi[-1].max(), psi[:, 0].max(),
                   psi[:, -1].max())
        assert edge < 5e-4


class TestSolveGrid:
    def test_harmonic_ladder(self):
        grid = FluxGrid.auto(HARMONIC, points=128)
        sol = solve_grid(HARMONIC, grid, 4)
        f1, f2 = harmonic_frequencies(HARMONIC)
        ladder = sorted(f1 * (j + 0.5) + f2 * (k + 0.5)
                        for j in range(6) for k in range(6))[:4]
        got = sol.energies - potential(HARMONIC.phi1x, HARMONIC.phi2x, HARMONIC)
        assert np.all(np.abs(got - ladder) / np.array(ladder) < 0.005)

    def test_orthonormal_states(self, double_well):
        _, sol, _ = double_well
        gram = sol.states.T @ sol.states
        assert np.max(np.abs(gram - np.eye(4))) < 1e-8

    def test_parity_symmetry_at_symmetric_bias(self):
        # symmetric box around phi1 = 1/2: |psi| must be mirror symmetric
        # (needs resolvable splittings, hence the shallow-barrier device)
        auto = FluxGrid.auto(SHALLOW, points=96)
        half = max(0.5 - auto.phi1_min, auto.phi1_max - 0.5)
        grid = FluxGrid(0.5 - half, 0.5 + half, 97,
                        auto.phi2_min, auto.phi2_max, 96)
        sol = solve_grid(SHALLOW, grid, 4)
        for i in range(4):
            psi = np.abs(sol.states[:, i].reshape(grid.n1, grid.n2))
            assert np.max(np.abs(psi - psi[::-1, :])) < 1e-5

    def test_grid_doubling_convergence(self):
        e64 = solve_grid(DEVICE, FluxGrid.auto(DEVICE, points=64), 4).energies
        e128 = solve_grid(DEVICE, FluxGrid.auto(DEVICE, points=128), 4).energies
        assert np.all(np.abs(e128 - e64) / np.abs(e128) < 0.005)

    def test_deterministic(self):
        grid = FluxGrid.auto(DEVICE, points=64)
        a = solve_grid(DEVICE, grid, 4, seed=3)
        b = solve_grid(DEVICE, grid, 4, seed=3)
        assert np.array_equal(a.energies, b.energies)
        assert np.array_equal(a.states, b.states)

    def test_grid_must_contain_minima(self):
        grid = FluxGrid(0.45, 0.55, 48, 0.25, 0.35, 48)
        with pytest.raises(ValueError, match="minimum"):
            solve_grid(DEVICE, grid, 2)


class TestLocalize:
    def test_two_level_symmetric_combinations(self):
        grid = FluxGrid.auto(SHALLOW, points=96)
        sol = solve_grid(SHALLOW, grid, 2)
        basis = localize(sol)
        combo_plus = (sol.states[:, 0] + sol.states[:, 1]) / np.sqrt(2)
        combo_minus = (sol.states[:, 0] - sol.states[:, 1]) / np.sqrt(2)
        overlaps = sorted(
            max(abs(basis.states[:, i] @ combo_plus),
                abs(basis.states[:, i] @ combo_minus)) for i in range(2))
        assert overlaps[0] > 1 - 1e-9
        assert basis.induced_flux[0] == pytest.approx(-basis.induced_flux[1],
                                                      abs=1e-6)

    def test_four_level_split_two_two(self, double_well):
        _, _, basis = double_well
        assert int(np.sum(basis.is_left)) == 2
        assert basis.balanced

    def test_output_orthonormal(self, double_well):
        _, _, basis = double_well
        gram = basis.states.T @ basis.states
        assert np.max(np.abs(gram - np.eye(4))) <= 1e-8

    def test_ambiguous_flux_rejected(self, double_well):
        _, sol, _ = double_well
        with pytest.raises(BistabilityError, match="monostable or ambiguous"):
            localize(sol, flux_tol=1.0)


class TestExtractTunneling:
    def test_unitary_reconstruction(self, double_well):
        tun, sol, _ = double_well
        recon = np.linalg.eigvalsh(tun.to_matrix())
        assert np.max(np.abs(recon - np.sort(sol.energies))) < 1e-9

    def test_intra_well_elements_vanish(self, double_well):
        _, _, basis = double_well
        h_loc = localized_matrix(basis)
        intra = max(abs(h_loc[0, 2]), abs(h_loc[2, 0]),
                    abs(h_loc[1, 3]), abs(h_loc[3, 1]))
        assert intra < 1e-12 * max(1.0, np.max(np.abs(basis.energies)))

    def test_symmetric_bias_epsilon_zero(self, double_well):
        tun, _, _ = double_well
        assert abs(tun.e[0] - tun.e[1]) < 1e-6
        assert abs(tun.e[2] - tun.e[3]) < 1e-6

    def test_two_level_splitting_is_delta(self):
        grid = FluxGrid.auto(SHALLOW, points=96)
        sol = solve_grid(SHALLOW, grid, 2)
        tun = extract_tunneling(localize(sol))
        splitting = sol.energies[1] - sol.energies[0]
        assert -2.0 * tun.k[0, 0] == pytest.approx(splitting, rel=1e-9)
        assert tun.e[0] == pytest.approx(tun.e[1], abs=1e-9)

    def test_unbalanced_wells_rejected(self, double_well):
        _, sol, _ = double_well
        basis = localize(sol)
        forced = type(basis)(chi=basis.chi, induced_flux=basis.induced_flux,
                             is_left=np.array([True, True, True, False]),
                             states=basis.states, transform=basis.transform,
                             energies=basis.energies)
        with pytest.raises(BistabilityError, match="unbalanced"):
            extract_tunneling(forced)


class TestBuildSchedule:
    def test_small_schedule_end_to_end(self):
        dev = DeviceConfig(params=SquidParams(l1_ph=265, l2_ph=25, c1_ff=110,
                                              c2_ff=12, ic_ua=2.0),
                           phi2x_start=0.376, phi2x_end=0.332, samples=5)
        sched, diags = build_schedule(dev, grid_points=64)
        # constructor already validated monotonicity and endpoint zeros
        assert sched.delta[0] > 1.0
        assert sched.delta[-1] == 0.0
        assert sched.kappa_xz[-1] == 0.0 and sched.kappa_xx[-1] == 0.0
        assert np.all(np.diff(sched.e) > 0)
        assert len(diags) == 5
        for d in diags:
            assert abs(d["epsilon_ghz"]) < 1e-6
            assert d["reconstruction_residual_ghz"] < 1e-9
            e0, e1, e2, e3 = d["e_levels_ghz"]
            k = np.array(d["k_matrix_ghz"])
            assert abs((e0 - e1) - (e2 - e3)) < 1e-4
            assert abs((e2 - e0) - (e3 - e1)) < 1e-4
            assert abs(k[0, 1] - k[1, 0]) < 1e-4

    def test_monostable_waveform_names_s(self):
        dev = DeviceConfig(params=SquidParams(l1_ph=265, l2_ph=25, c1_ff=110,
                                              c2_ff=12, ic_ua=2.0),
                           phi2x_start=0.45, phi2x_end=0.40, samples=3)
        with pytest.raises(BistabilityError, match="s=0"):
            build_schedule(dev, grid_points=64)

    def test_odd_level_count_rejected(self):
        dev = DeviceConfig(params=DEVICE, phi2x_start=0.376, phi2x_end=0.35,
                           samples=2)
        with pytest.raises(ValueError, match="even"):
            build_schedule(dev, m=3)

    def test_sample_config_loads(self):
        cfg = load_device_config("configs/sample_device.json")
        assert cfg.params.l1_ph == 265.0
        assert cfg.samples == 64
        assert cfg.unit_bias == 0.0015

    def test_missing_key_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"L1_pH": 100.0}))
        with pytest.raises(ValueError, match="missing key"):
            load_device_config(path)
