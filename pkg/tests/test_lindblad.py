import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from locqubit import lindblad as lb
from locqubit.lambda_control import PulseEnvelope
from locqubit.qcore import check_density

TIGHT = lb.IntegratorConfig(rtol=1e-10, atol=1e-12, n_out=21)


def random_hermitian(rng, d, scale=1.0):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return scale * 0.5 * (a + a.conj().T)


def random_state(rng, d):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    r = a @ a.conj().T
    return r / np.trace(r)


def projector(d, i):
    p = np.zeros((d, d), dtype=complex)
    p[i, i] = 1
    return p


def lowering(d, g, e):
    op = np.zeros((d, d), dtype=complex)
    op[g, e] = 1
    return op


class TestAnalytic:
    def test_pure_dephasing(self):
        gam = 0.3
        chans = [lb.CollapseChannel(gam, projector(2, 0)), lb.CollapseChannel(gam, projector(2, 1))]
        rho0 = 0.5 * np.ones((2, 2), dtype=complex)
        traj = lb.integrate(lb.PulsedHamiltonian(np.zeros((2, 2))), chans, rho0, TIGHT, (0.0, 5.0))
        assert np.allclose(traj.states[:, 0, 1], 0.5 * np.exp(-gam * traj.times), atol=1e-6)
        assert np.allclose(traj.populations, 0.5, atol=1e-12)

    def test_emission_rate_equations(self):
        g = 0.2
        chans = [lb.CollapseChannel(g, lowering(3, 0, 1)), lb.CollapseChannel(g, lowering(3, 2, 1))]
        traj = lb.integrate(lb.PulsedHamiltonian(np.zeros((3, 3))), chans, projector(3, 1), TIGHT, (0.0, 4.0))
        ex = np.exp(-2 * g * traj.times)
        p = traj.populations
        assert np.allclose(p[:, 1], ex, atol=1e-6)
        assert np.allclose(p[:, 0], 0.5 * (1 - ex), atol=1e-6)
        assert np.allclose(p[:, 2], 0.5 * (1 - ex), atol=1e-6)

    def test_resonant_rabi(self):
        om = 1.3
        H = lb.PulsedHamiltonian(om * np.array([[0, 1], [1, 0]]))
        traj = lb.integrate(H, [], projector(2, 0), TIGHT, (0.0, 6.0))
        assert np.allclose(traj.populations[:, 1], np.sin(om * traj.times) ** 2, atol=1e-6)

    def test_constant_hamiltonian_matches_expm(self, rng):
        H = random_hermitian(rng, 4, 2.0)
        rho0 = random_state(rng, 4)
        traj = lb.integrate(lb.PulsedHamiltonian(H), [], rho0, TIGHT, (0.0, 3.0))
        U = expm(-1j * H * 3.0)
        assert np.linalg.norm(traj.final - U @ rho0 @ U.conj().T) < 1e-8

    def test_gaussian_pulse_area(self):
        # resonant two-level drive with envelope Omega(t): population sin^2(integral Omega dt)
        env = PulseEnvelope(0.4, 2.0, 0.0)
        H = lb.PulsedHamiltonian(np.zeros((2, 2)), [(env, np.array([[0, 1], [1, 0]]))])
        traj = lb.integrate(H, [], projector(2, 0), TIGHT, env.window)
        from scipy.special import erf

        area = 0.4 * np.sqrt(2 * np.pi) * 2.0 * erf(3 / np.sqrt(2))
        assert traj.populations[-1, 1] == pytest.approx(np.sin(area) ** 2, abs=1e-7)


class TestAgreement:
    def test_compiled_matches_callable_fallback(self, rng):
        static = random_hermitian(rng, 3)
        op = random_hermitian(rng, 3, 3.0)
        env = PulseEnvelope(1.0, 0.8, 1.0)
        H = lb.PulsedHamiltonian(static, [(env, op)])
        chans = [lb.CollapseChannel(0.1, lowering(3, 0, 1)), lb.CollapseChannel(0.05, projector(3, 2))]
        rho0 = random_state(rng, 3)
        a = lb.integrate(H, chans, rho0, TIGHT, (-2.0, 4.0))
        b = lb.integrate(lambda t: H(t), chans, rho0, TIGHT, (-2.0, 4.0))
        assert np.allclose(a.states, b.states, atol=1e-7)

    def test_rhs_matches_dissipator_sum(self, rng):
        H = random_hermitian(rng, 3)
        rho = random_state(rng, 3)
        chans = [lb.CollapseChannel(0.3, lowering(3, 0, 1)), lb.CollapseChannel(0.2, projector(3, 1))]
        manual = -1j * (H @ rho - rho @ H) + sum(lb.dissipator(c, rho) for c in chans)
        assert np.allclose(lb.lindblad_rhs(H, chans, rho), manual)

    def test_linearity_of_propagate(self, rng):
        H = lb.PulsedHamiltonian(random_hermitian(rng, 3))
        chans = [lb.CollapseChannel(0.2, lowering(3, 0, 1))]
        a, b = random_state(rng, 3), random_state(rng, 3)
        cfg = lb.IntegratorConfig(rtol=1e-11, atol=1e-13, output_times=(0.0, 2.0))
        fa = lb.propagate(H, chans, a, (0.0, 2.0), cfg)[1][-1]
        fb = lb.propagate(H, chans, b, (0.0, 2.0), cfg)[1][-1]
        fab = lb.propagate(H, chans, 0.3 * a + 0.7 * b, (0.0, 2.0), cfg)[1][-1]
        assert np.allclose(fab, 0.3 * fa + 0.7 * fb, atol=1e-9)


class TestInvariants:
    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2**31), st.floats(0.0, 0.5), st.floats(0.0, 0.5))
    def test_trace_hermiticity_positivity(self, seed, g1, g2):
        rng = np.random.default_rng(seed)
        d = 3
        env = PulseEnvelope(float(rng.uniform(0.5, 3.0)), float(rng.uniform(0.5, 2.0)), 0.0)
        H = lb.PulsedHamiltonian(random_hermitian(rng, d), [(env, random_hermitian(rng, d))])
        chans = [lb.CollapseChannel(g1, lowering(d, 0, 1)), lb.CollapseChannel(g2, projector(d, 2))]
        traj = lb.integrate(H, chans, random_state(rng, d), lb.IntegratorConfig(n_out=11), (-3.0, 3.0), check=False)
        for r in traj.states:
            assert abs(np.trace(r) - 1) < 1e-8
            assert np.max(np.abs(r - r.conj().T)) < 1e-10
            assert np.linalg.eigvalsh(r)[0] > -1e-8
            check_density(r, herm_tol=1e-10, trace_tol=1e-8, psd_tol=1e-8)


class TestCollapseSets:
    def test_lambda_layout(self):
        chans = lb.build_collapse_set("lambda", lb.DecoherenceRates.realistic())
        assert len(chans) == 4
        rates = sorted(c.rate for c in chans)
        assert rates == pytest.approx([1e-6 / 6, 1e-6 / 6, 7.79e-4, 7.79e-4])

    def test_register_layout_count(self):
        chans = lb.build_collapse_set("register", lb.DecoherenceRates.realistic())
        assert len(chans) == 14
        assert sum(c.label.startswith("emit") for c in chans) == 6
        for c in chans:
            assert c.op.shape == (15, 15)

    def test_register_dephasing_projectors(self):
        chans = lb.build_collapse_set("register", lb.DecoherenceRates(0, 0, 1.0))
        deph = [c for c in chans if c.label.startswith("dephase")]
        # control projectors cover 3 composite states, target projectors 5
        counts = sorted(int(np.count_nonzero(c.op)) for c in deph)
        assert counts == [3] * 5 + [5] * 3

    def test_unknown_layout(self):
        with pytest.raises(KeyError):
            lb.build_collapse_set("qutrit", lb.DecoherenceRates.none())

    def test_negative_rate_rejected(self):
        with pytest.raises(ValueError):
            lb.DecoherenceRates(-1.0, 0.0, 0.0)


class TestConfigAndErrors:
    def test_output_times_validated(self):
        with pytest.raises(ValueError):
            lb.IntegratorConfig(output_times=(1.0, 0.0))
        with pytest.raises(ValueError):
            lb.IntegratorConfig(rtol=0.0)

    def test_output_outside_span(self):
        cfg = lb.IntegratorConfig(output_times=(0.0, 5.0))
        with pytest.raises(ValueError):
            cfg.times((0.0, 1.0))

    def test_nonhermitian_hamiltonian_rejected(self):
        with pytest.raises(ValueError):
            lb.PulsedHamiltonian(np.array([[0, 1], [0, 0]]))

    def test_trajectory_then(self):
        a = lb.Trajectory(np.array([0.0, 1.0]), np.zeros((2, 2, 2)), np.array([1.0, 0.9]))
        b = lb.Trajectory(np.array([1.0, 2.0]), np.ones((2, 2, 2)), np.array([0.9, 0.8]))
        c = a.then(b)
        assert c.times.tolist() == [0.0, 1.0, 2.0]
        assert c.fidelity.tolist() == [1.0, 0.9, 0.8]

    def test_reference_fidelity_attached(self):
        traj = lb.integrate(lb.PulsedHamiltonian(np.zeros((2, 2))), [], projector(2, 0), TIGHT, (0.0, 1.0),
                            reference=np.array([1.0, 0.0]))
        assert np.allclose(traj.fidelity, 1.0)
