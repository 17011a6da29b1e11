import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from locqubit import lambda_control as lc
from locqubit import qcore as q
from locqubit.lindblad import DecoherenceRates

OMEGA = lc.default_omega(lc.DEFAULT_SIGMA_P)


def schrodinger(spec, psi0, rtol=1e-11, atol=1e-12):
    """Plain solve_ivp integration of i dpsi/dt = H psi, independent of the Lindblad engine."""
    t0, t1 = spec.window

    def f(t, y):
        psi = y[:3] + 1j * y[3:]
        d = -1j * lc.build_hamiltonian(spec, t) @ psi
        return np.concatenate([d.real, d.imag])

    y0 = np.concatenate([psi0.real, psi0.imag]).astype(float)
    sol = solve_ivp(f, (t0, t1), y0, method="DOP853", rtol=rtol, atol=atol, max_step=spec.sigma_p / 20)
    y = sol.y[:, -1]
    return y[:3] + 1j * y[3:]


class TestPulseEnvelope:
    def test_truncated_window(self):
        env = lc.PulseEnvelope(2.0, 1.5, 4.0)
        assert env.window == pytest.approx((-0.5, 8.5))
        assert env(4.0) == pytest.approx(2.0)
        assert env(np.array([-1.0, 9.0])).tolist() == [0.0, 0.0]

    def test_fwhm(self):
        assert lc.PulseEnvelope(1.0, 1.0).fwhm == pytest.approx(2 * math.sqrt(2 * math.log(2)))


class TestGateSpec:
    def test_default_pulse_area(self):
        spec = lc.synthesize_gate(lc.standard_gate("X"))
        assert spec.pulse_area == pytest.approx(100.0)
        assert spec.omega_rms_max == pytest.approx(100 / (6 * 1.7))

    def test_peak_amplitudes_split(self):
        spec = lc.GateSpec(0.0, math.pi / 8, math.pi, 100.0, 10.0, 1.7)
        assert spec.omega0_max == pytest.approx(10 * math.cos(math.pi / 8))
        assert spec.omega1_max == pytest.approx(10 * math.sin(math.pi / 8))

    @pytest.mark.parametrize(
        "kw",
        [
            {"omega_rms_max": 1.0},  # area 10.2 below 100
            {"delta": 5.0},  # below the detuning floor
        ],
    )
    def test_validate_rejects(self, kw):
        base = dict(alpha=0.0, beta=0.3, gamma=1.0, delta=200.0, omega_rms_max=OMEGA, sigma_p=1.7)
        base.update(kw)
        with pytest.raises(lc.InfeasibleGateError):
            lc.GateSpec(**base).validate()


class TestHamiltonian:
    def test_hermitian_and_structure(self):
        spec = lc.GateSpec(0.4, 0.3, 1.0, 120.0, OMEGA, 1.7)
        H = lc.build_hamiltonian(spec, 0.2)
        assert np.allclose(H, H.conj().T)
        assert H[1, 1] == pytest.approx(120.0)
        assert H[0, 2] == 0 and H[0, 0] == 0 and H[2, 2] == 0

    def test_zero_outside_window(self):
        spec = lc.GateSpec(0.4, 0.3, 1.0, 120.0, OMEGA, 1.7)
        H = lc.build_hamiltonian(spec, 10.0)
        assert np.allclose(H, np.diag([0, 120.0, 0]))

    @pytest.mark.parametrize("t", [-3.0, -0.7, 0.0, 1.9])
    def test_eigenframe_matches_dense_eigensolver(self, t):
        spec = lc.GateSpec(0.9, 0.35, 1.0, 90.0, OMEGA, 1.7)
        fr = lc.eigenframe(spec, t)
        w = np.linalg.eigvalsh(lc.build_hamiltonian(spec, t))
        assert np.allclose(np.sort(fr.eigenvalues), w, atol=1e-10)
        H = lc.build_hamiltonian(spec, t)
        for lam, v in zip(fr.eigenvalues, fr.eigenvectors.T):
            assert np.allclose(H @ v, lam * v, atol=1e-10)

    def test_dark_state_has_no_excited_component(self):
        spec = lc.GateSpec(0.9, 0.35, 1.0, 90.0, OMEGA, 1.7)
        fr = lc.eigenframe(spec, 0.0)
        assert abs(fr.eigenvectors[1, 0]) < 1e-15
        assert fr.eigenvalues[0] == pytest.approx(0.0, abs=1e-12)


class TestRotationAngle:
    def test_resonant_closed_form(self, oracle):
        g = lc.rotation_angle(1.0, 10.0, 0.0)
        assert g == pytest.approx(math.sqrt(2 * math.pi) * 10 * math.erf(3 / math.sqrt(2)), rel=1e-8)
        assert g == pytest.approx(oracle["gamma_omega1_sigma10_delta0"], rel=1e-8)
        assert lc.closed_form_area(1.0, 10.0) == pytest.approx(g, rel=1e-10)

    def test_far_detuned(self, oracle):
        g = lc.rotation_angle(1.0, 10.0, 20.0)
        assert g == pytest.approx(oracle["gamma_omega1_sigma10_delta20"], rel=1e-8)
        # large-detuning estimate sqrt(pi) sigma Omega^2 / delta
        assert g == pytest.approx(math.sqrt(math.pi) * 10 / 20, rel=0.01)

    def test_default_pulse_at_ten_omega(self, oracle):
        g = lc.rotation_angle(OMEGA, 1.7, 10 * OMEGA)
        assert g == pytest.approx(oracle["gamma_default_delta_10omega"], rel=1e-8)

    @pytest.mark.parametrize("key,gamma", [("delta_default_pi", math.pi), ("delta_default_pi_2", math.pi / 2),
                                           ("delta_default_pi_4", math.pi / 4)])
    def test_inverse_detuning_oracle(self, oracle, key, gamma):
        assert lc.invert_detuning(OMEGA, 1.7, gamma) == pytest.approx(oracle[key], rel=1e-8)

    @pytest.mark.parametrize("gamma", [math.pi / 8, math.pi / 4, math.pi / 2, math.pi])
    def test_roundtrip(self, gamma):
        d = lc.invert_detuning(OMEGA, 1.7, gamma)
        assert lc.rotation_angle(OMEGA, 1.7, d) == pytest.approx(gamma, abs=1e-8)

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.0, 500.0), st.floats(0.1, 50.0))
    def test_monotone_decreasing(self, d, step):
        assert lc.rotation_angle(OMEGA, 1.7, d + step) < lc.rotation_angle(OMEGA, 1.7, d)

    def test_infeasible_angle(self):
        with pytest.raises(lc.InfeasibleGateError):
            lc.invert_detuning(1.0, 1.7, math.pi)


class TestSynthesis:
    @pytest.mark.parametrize(
        "name,alpha,beta,gamma",
        [("X", 0.0, math.pi / 4, math.pi), ("H", 0.0, math.pi / 8, math.pi), ("T", 0.0, math.pi / 2, math.pi / 4)],
    )
    def test_standard_gates(self, name, alpha, beta, gamma):
        spec = lc.synthesize_gate(lc.standard_gate(name))
        assert spec.alpha == pytest.approx(alpha, abs=1e-12)
        assert spec.beta == pytest.approx(beta, abs=1e-12)
        assert spec.gamma == pytest.approx(gamma, abs=1e-12)
        assert spec.delta >= lc.DETUNING_FLOOR * spec.omega_rms_max

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31))
    def test_gate_target_roundtrip(self, seed):
        t = q.random_rotation_targets(1, np.random.default_rng(seed))[0]
        back = lc.gate_target(lc.synthesize_gate(t))
        assert back.angle == pytest.approx(t.angle, abs=1e-9)
        assert np.allclose(back.axis, t.axis, atol=1e-9)

    def test_unknown_gate(self):
        with pytest.raises(KeyError):
            lc.standard_gate("Q")


class TestSimulation:
    def test_x_on_zero(self):
        spec = lc.synthesize_gate(lc.standard_gate("X"))
        traj = lc.simulate_gate(spec, q.basis_ket(3, 0))
        assert traj.populations[-1, 2] >= 0.99999
        assert traj.fidelity[-1] >= 0.99999

    def test_h_on_zero(self):
        spec = lc.synthesize_gate(lc.standard_gate("H"))
        p = lc.simulate_gate(spec, q.basis_ket(3, 0)).populations[-1]
        assert np.allclose(p, [0.5, 0.0, 0.5], atol=1e-4)

    def test_t_on_plus_keeps_populations(self):
        spec = lc.synthesize_gate(lc.standard_gate("T"))
        traj = lc.simulate_gate(spec, q.superposition_ket(math.pi / 4, 0.0))
        assert np.allclose(traj.populations[-1], [0.5, 0.0, 0.5], atol=1e-4)
        assert traj.fidelity[-1] >= 0.99999

    def test_matches_independent_schrodinger(self):
        spec = lc.synthesize_gate(lc.standard_gate("arbitrary", (0.3, -0.5, 0.8), 2.1))
        psi0 = q.superposition_ket(0.6, 1.3)
        psi = schrodinger(spec, psi0)
        rho = lc.simulate_gate(spec, psi0).final
        assert q.jozsa_fidelity(psi / np.linalg.norm(psi), rho) == pytest.approx(1.0, abs=1e-7)

    def test_rejects_excited_input(self):
        spec = lc.synthesize_gate(lc.standard_gate("X"))
        with pytest.raises(q.StateError):
            lc.simulate_gate(spec, q.basis_ket(3, 1))

    def test_decoherence_lowers_fidelity(self):
        spec = lc.synthesize_gate(lc.standard_gate("X"))
        clean = lc.final_fidelity(spec, q.basis_ket(3, 0))
        noisy = lc.final_fidelity(spec, q.basis_ket(3, 0), DecoherenceRates.realistic())
        assert noisy < clean

    def test_fidelity_surface_matches_direct(self):
        spec = lc.synthesize_gate(lc.standard_gate("H"))
        rates = DecoherenceRates.realistic()
        mu, nu, fid = lc.fidelity_surface(spec, rates, n_mu=5, n_nu=4)
        assert mu[0] == 0 and mu[-1] == pytest.approx(math.pi / 2)
        assert nu[-1] < 2 * math.pi
        direct = lc.final_fidelity(spec, q.superposition_ket(mu[2], nu[3]), rates)
        assert fid[2, 3] == pytest.approx(direct, abs=1e-7)
