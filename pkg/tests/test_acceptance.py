"""Acceptance criteria, one ``criterion`` marker per numbered item.

The terminal summary prints one PASS/FAIL line per criterion.
"""

import math
import time

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from locqubit import lambda_control as lc
from locqubit import lindblad as lb
from locqubit import nanowire as nw
from locqubit import phonons as ph
from locqubit import qcore as q
from locqubit import register as rg
from locqubit.experiments import phonon_lifetime
from locqubit.units import HBAR_SQ_OVER_2M0, KB_MEV_PER_K

MAT = nw.MaterialParams()
BATH = ph.PhononBathParams()
REALISTIC = lb.DecoherenceRates.realistic()


def c(n, title):
    return pytest.mark.criterion(n, title)


# 1 -------------------------------------------------------------------------
C1 = "decoherence-free synthesis: X, H, T and 50 random rotations reach F >= 0.9999 in < 30 s"


@c(1, C1)
class TestSynthesisFidelity:
    def test_standard_and_random_gates(self):
        rng = np.random.default_rng(1)
        targets = [lc.standard_gate(n) for n in ("X", "H", "T")] + q.random_rotation_targets(50, rng)
        start = time.perf_counter()
        worst = 1.0
        for t in targets:
            spec = lc.synthesize_gate(t)
            assert spec.pulse_area == pytest.approx(100.0)
            psi0 = q.superposition_ket(*rng.uniform([0, 0], [np.pi / 2, 2 * np.pi]))
            worst = min(worst, lc.final_fidelity(spec, psi0))
        elapsed = time.perf_counter() - start
        assert worst >= 0.9999
        assert elapsed < 30.0


# 2 -------------------------------------------------------------------------
C2 = "sign convention: direct integration with beta = pi/2 puts e^{+i gamma} on |1>"


def schrodinger(spec, psi0):
    t0, t1 = spec.window

    def f(t, y):
        psi = y[:3] + 1j * y[3:]
        d = -1j * lc.build_hamiltonian(spec, t) @ psi
        return np.concatenate([d.real, d.imag])

    y0 = np.concatenate([psi0.real, psi0.imag]).astype(float)
    sol = solve_ivp(f, (t0, t1), y0, method="DOP853", rtol=1e-11, atol=1e-12, max_step=spec.sigma_p / 20)
    y = sol.y[:, -1]
    return y[:3] + 1j * y[3:]


@c(2, C2)
@pytest.mark.parametrize("gamma", [math.pi / 4, math.pi / 2, 2.0])
def test_sign_convention(gamma):
    spec = lc.synthesize_gate(lc.standard_gate("arbitrary", (0.0, 0.0, -1.0), gamma))
    assert spec.beta == pytest.approx(math.pi / 2)
    psi = schrodinger(spec, q.superposition_ket(math.pi / 4, 0.0))
    i0, i1 = q.LAMBDA_QUBIT
    phase = np.angle(psi[i1] / psi[i0])
    assert abs(np.angle(np.exp(1j * (phase - gamma)))) < 1e-3
    assert abs(psi[i0]) == pytest.approx(1 / math.sqrt(2), abs=1e-4)


# 3 -------------------------------------------------------------------------
C3 = "realistic 21x21 sweeps: min F >= 0.999 for X and H, T above X, < 5 min each"


@pytest.fixture(scope="module")
def sweep_minima():
    out = {}
    for name in ("X", "H", "T"):
        start = time.perf_counter()
        _, _, fid = lc.fidelity_surface(lc.synthesize_gate(lc.standard_gate(name)), REALISTIC, 21, 21)
        out[name] = (float(fid.min()), time.perf_counter() - start)
    return out


@c(3, C3)
class TestRealisticSweeps:
    def test_rates_are_the_stated_ones(self):
        assert REALISTIC.gamma_sp_0 == pytest.approx(7.79e-4)
        assert REALISTIC.gamma_sp_1 == pytest.approx(7.79e-4)
        assert REALISTIC.gamma_dp == pytest.approx(1.667e-7, rel=1e-3)

    @pytest.mark.parametrize("name", ["X", "H"])
    def test_minimum(self, sweep_minima, name):
        assert sweep_minima[name][0] >= 0.999

    def test_t_above_x(self, sweep_minima):
        assert sweep_minima["T"][0] > sweep_minima["X"][0]

    def test_runtime(self, sweep_minima):
        assert all(t < 300.0 for _, t in sweep_minima.values())


# 4 -------------------------------------------------------------------------
C4 = "CNOT: |10> realistic >= 0.9995, truth table >= 0.9999, S7/S8/S9 >= 0.999, < 2 min per state"


@pytest.fixture(scope="module")
def schedule():
    return rg.schedule_cnot()


def timed_cnot(amps, schedule, rates):
    start = time.perf_counter()
    f = rg.cnot_fidelity(rg.computational_ket(amps), schedule, rates=rates)
    return f, time.perf_counter() - start


@c(4, C4)
class TestCnot:
    def test_flip_realistic(self, schedule):
        f, dt = timed_cnot([0, 0, 1, 0], schedule, REALISTIC)
        assert f >= 0.9995
        assert dt < 120.0

    @pytest.mark.parametrize("k", range(4))
    def test_truth_table(self, schedule, k):
        amps = np.eye(4)[k]
        f, dt = timed_cnot(amps, schedule, None)
        assert f >= 0.9999
        assert dt < 120.0

    @pytest.mark.parametrize(
        "label,amps",
        [("S7", [1, 0, 0, 1]), ("S8", [0.5, 0.5, 1 / math.sqrt(2), 0]), ("S9", [1, 0, 1, -1])],
    )
    def test_figure_states(self, schedule, label, amps):
        f, dt = timed_cnot(amps, schedule, REALISTIC)
        assert f >= 0.999
        if label == "S8":
            assert abs(f - 0.999949) <= 0.0005
        assert dt < 120.0


# 5 -------------------------------------------------------------------------
C5 = "spontaneous emission: {10,50,9} rates within 10%, sweep endpoints within 15%, < 1 min"


@c(5, C5)
class TestEmission:
    def test_reference_structure(self):
        t0, t1 = nw.qubit_transitions(nw.DeviceGeometry.double_dot(10, 50, 9), MAT)
        rates = sorted([t0.rate, t1.rate])
        assert rates[0] == pytest.approx(2.57e8, rel=0.10)
        assert rates[1] == pytest.approx(2.74e8, rel=0.10)

    def test_sweep_endpoints(self):
        start = time.perf_counter()
        rows = nw.emission_sweep()
        elapsed = time.perf_counter() - start
        rates = [r["rate_per_s"] for r in rows]
        assert elapsed < 60.0
        assert min(rates) == pytest.approx(9.27e7, rel=0.15)
        assert max(rates) == pytest.approx(7.79e8, rel=0.15)


# 6 -------------------------------------------------------------------------
C6 = "radial solver: j01 to 1e-6, radial energy at 10 nm within 5% of 13.37 meV"


@c(6, C6)
class TestRadial:
    def test_bessel_zero(self):
        assert nw.bessel_zero(0, 1) == pytest.approx(2.404826, abs=1e-6)

    def test_ground_energy(self):
        e = nw.solve_radial(10.0, MAT.m_e).energy_for("linear")
        assert e == pytest.approx(13.37, rel=0.05)


# 7 -------------------------------------------------------------------------
C7 = "axial solver: infinite-well limit within 1%, grid halving drift < 0.1%"


@c(7, C7)
class TestAxial:
    @pytest.mark.parametrize("L", [10.0, 20.0, 40.0])
    def test_infinite_well(self, L):
        g = nw.DeviceGeometry.single_dot(L, padding=5.0)
        e = nw.solve_axial(g, MAT, "electron", 1, well_depth=1e7)[0].energy
        assert e == pytest.approx(HBAR_SQ_OVER_2M0 * (math.pi / L) ** 2 / MAT.m_e, rel=0.01)

    @pytest.mark.parametrize("geom", [(20.0,), (10.0, 50.0, 9.0)])
    def test_grid_halving(self, geom):
        make = nw.DeviceGeometry.single_dot if len(geom) == 1 else nw.DeviceGeometry.double_dot
        e1 = nw.solve_axial(make(*geom, grid_step=0.05), MAT, "electron", 2)
        e2 = nw.solve_axial(make(*geom, grid_step=0.025), MAT, "electron", 2)
        for a, b in zip(e1, e2):
            assert abs(a.energy - b.energy) / b.energy < 1e-3


# 8 -------------------------------------------------------------------------
C8 = "phonon emission: {20,19} at 80 nm and 4 K lives >= 10 us, monotone over 30-100 nm, < 2 min"


@c(8, C8)
class TestPhononEmission:
    def test_lifetime_and_monotone(self):
        start = time.perf_counter()
        seps = np.linspace(30.0, 100.0, 8)
        life = np.array([1.0 / phonon_lifetime(20.0, s, 19.0, BATH, 4.0)[1] for s in seps])
        elapsed = time.perf_counter() - start
        assert life[seps == 80.0][0] >= 1e-5
        assert np.all(np.diff(life) > 0)
        assert elapsed < 120.0


# 9 -------------------------------------------------------------------------
C9 = "dephasing: tau(20 nm, 4 K) within 10x of 6 us, gamma falls with T, tau(0.1 K)/tau(4 K) >= 1e6, < 5 min"


@c(9, C9)
class TestDephasing:
    def test_dephasing(self):
        start = time.perf_counter()
        dot = nw.DeviceGeometry.single_dot(20.0)
        temps = [0.1, 0.2, 0.5, 1.0, 2.0, 4.0]
        res = [ph.dephasing_rate(dot, BATH, T) for T in temps]
        elapsed = time.perf_counter() - start
        tau4 = res[-1].tau_dp
        assert 6e-7 <= tau4 <= 6e-5
        g = [r.gamma_dp for r in res]
        assert all(b > a for a, b in zip(g, g[1:]))
        assert res[0].tau_dp / tau4 >= 1e6
        assert elapsed < 300.0


# 10 ------------------------------------------------------------------------
C10 = "Franck-Condon: low-T plateaus near 1e-9 and 1e-7 within two decades, B in (0, 1] and falling in T"

FC_TEMPS = (0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0, 50.0)


@pytest.fixture(scope="module")
def fc_curves():
    out = {}
    for g in ((20, 50, 19), (10, 100, 9)):
        e0, e1, _ = nw.qubit_modes(nw.DeviceGeometry.double_dot(*g), MAT)
        sd = ph.spectral_density(e0, e1, BATH)
        out[g] = np.array([ph.franck_condon(e0, e1, BATH, T, sd=sd) for T in FC_TEMPS])
    return out


@c(10, C10)
class TestFranckCondon:
    @pytest.mark.parametrize("g", [(20, 50, 19), (10, 100, 9)])
    def test_bounds_and_order(self, fc_curves, g):
        B = fc_curves[g]
        assert np.all((B > 0) & (B <= 1))
        assert np.all(np.diff(B) <= 0)

    @pytest.mark.parametrize("g,plateau", [((20, 50, 19), 1e-9), ((10, 100, 9), 1e-7)])
    def test_plateau(self, fc_curves, g, plateau):
        assert abs(math.log10(fc_curves[g][0] / plateau)) <= 2


# 11 ------------------------------------------------------------------------
C11 = "property suites: invariants, expm, analytic solutions, closed forms, detailed balance, gate powers, leakage"


def _herm(rng, d):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return 0.5 * (a + a.conj().T)


def _state(rng, d):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    r = a @ a.conj().T
    return r / np.trace(r)


def _op(d, i, j):
    m = np.zeros((d, d), dtype=complex)
    m[i, j] = 1
    return m


@c(11, C11)
class TestProperties:
    @pytest.mark.parametrize("seed", range(5))
    def test_trace_hermiticity_positivity(self, seed):
        rng = np.random.default_rng(seed)
        env = lc.PulseEnvelope(2.0, 1.0, 0.0)
        H = lb.PulsedHamiltonian(_herm(rng, 3), [(env, _herm(rng, 3))])
        chans = [lb.CollapseChannel(0.3, _op(3, 0, 1)), lb.CollapseChannel(0.1, _op(3, 2, 2))]
        traj = lb.integrate(H, chans, _state(rng, 3), lb.IntegratorConfig(n_out=21), (-3.0, 3.0), check=False)
        for r in traj.states:
            assert abs(np.trace(r) - 1) < 1e-8
            assert np.max(np.abs(r - r.conj().T)) < 1e-10
            assert np.linalg.eigvalsh(r)[0] > -1e-8

    def test_expm_equivalence(self):
        rng = np.random.default_rng(11)
        H, rho0 = _herm(rng, 4), _state(rng, 4)
        cfg = lb.IntegratorConfig(rtol=1e-10, atol=1e-12, n_out=5)
        traj = lb.integrate(lb.PulsedHamiltonian(H), [], rho0, cfg, (0.0, 2.5))
        U = expm(-2.5j * H)
        assert np.max(np.abs(traj.final - U @ rho0 @ U.conj().T)) < 1e-8

    def test_rabi_and_dephasing_analytic(self):
        cfg = lb.IntegratorConfig(rtol=1e-10, atol=1e-12, n_out=41)
        om = 0.9
        traj = lb.integrate(lb.PulsedHamiltonian(om * np.array([[0, 1], [1, 0]])), [], _op(2, 0, 0), cfg, (0.0, 8.0))
        assert np.max(np.abs(traj.populations[:, 1] - np.sin(om * traj.times) ** 2)) < 1e-6
        g = 0.25
        chans = [lb.CollapseChannel(g, _op(2, 0, 0)), lb.CollapseChannel(g, _op(2, 1, 1))]
        traj = lb.integrate(lb.PulsedHamiltonian(np.zeros((2, 2))), chans, 0.5 * np.ones((2, 2)), cfg, (0.0, 8.0))
        assert np.max(np.abs(traj.states[:, 0, 1] - 0.5 * np.exp(-g * traj.times))) < 1e-6

    def test_gamma_closed_forms(self, oracle):
        assert lc.rotation_angle(1.0, 10.0, 0.0) == pytest.approx(lc.closed_form_area(1.0, 10.0), rel=1e-8)
        assert lc.rotation_angle(1.0, 10.0, 20.0) == pytest.approx(oracle["gamma_omega1_sigma10_delta20"], rel=1e-8)
        om = lc.default_omega(lc.DEFAULT_SIGMA_P)
        d = lc.invert_detuning(om, lc.DEFAULT_SIGMA_P, math.pi)
        assert d == pytest.approx(oracle["delta_default_pi"], rel=1e-8)

    def test_detailed_balance(self):
        g = nw.DeviceGeometry.double_dot(20, 50, 19)
        e0, e1, _ = nw.qubit_modes(g, MAT)
        dE = e1.energy - e0.energy
        for T in (0.5, 4.0, 30.0):
            em = ph.phonon_emission_rate(e1, e0, dE, BATH.with_T(T))
            ab = ph.phonon_absorption_rate(e0, e1, dE, BATH.with_T(T))
            assert ab / em == pytest.approx(math.exp(-dE / (KB_MEV_PER_K * T)), rel=1e-12)

    @pytest.mark.parametrize("name,power", [("X", 2), ("T", 8)])
    def test_gate_powers_are_identity(self, name, power):
        spec = lc.synthesize_gate(lc.standard_gate(name))
        E = lc.gate_channel(spec)
        i = list(q.LAMBDA_QUBIT)
        psi0 = q.superposition_ket(0.7, 1.1)
        rho = q.as_density(psi0)
        for _ in range(power):
            # the next pulse sees only the qubit block; the excited residue is a few 1e-6
            assert rho[1, 1].real < 1e-4
            rho = sum(rho[i[a], i[b]] * E[a, b] for a in range(2) for b in range(2))
        assert q.jozsa_fidelity(psi0, rho) >= 0.9999

    @pytest.mark.parametrize("name", ["X", "H", "T", "Z"])
    def test_leakage_bound(self, name):
        spec = lc.synthesize_gate(lc.standard_gate(name))
        t0, t1 = spec.window
        cfg = lb.IntegratorConfig.for_span(t0, t1, spec.sigma_p, n_out=601)
        for mu, nu in [(0.0, 0.0), (math.pi / 4, 0.0), (math.pi / 2, 0.0), (math.pi / 3, 2.0)]:
            traj = lc.simulate_gate(spec, q.superposition_ket(mu, nu), cfg=cfg)
            assert traj.populations[:, 1].max() <= 4 * (spec.omega_rms_max / spec.delta) ** 2
