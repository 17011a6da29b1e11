"""Driven Lambda-system Hamiltonian, its adiabatic eigenframe, and single-qubit gate synthesis.

Basis order is ``{|0>, |X->, |1>}``. Both lasers share the single-photon
detuning ``delta`` (two-photon resonance) and a Gaussian envelope truncated
to ``center +/- 3 sigma``. The rotation angle accumulated by the bright
dark-state ``|Phi2>`` is

    gamma(delta) = integral [ sqrt(Omega_rms(t)^2 + (delta/2)^2) - delta/2 ] dt

and the gate is ``|Phi1><Phi1| + e^{i gamma}|Phi2><Phi2|``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate, optimize, special

from .qcore import (
    LAMBDA_QUBIT,
    RotationTarget,
    StateError,
    as_density,
    ideal_rotation,
    jozsa_fidelity,
    lift_qubit_operator,
    rotation_unitary,
    superposition_ket,
)

A_MIN = 100.0
WINDOW_SIGMAS = 3.0
# Ratio delta / omega_rms_max below which the gate is rejected. With a pulse
# area of 100 a ratio of 10 caps gamma near 2.9 rad, so pi rotations would be
# impossible; 8 keeps every gamma in (0, pi] reachable.
DETUNING_FLOOR = 8.0
DEFAULT_SIGMA_P = 1.7


class InfeasibleGateError(ValueError):
    """The requested rotation angle cannot be reached under the pulse constraints."""


def default_omega(sigma_p: float, pulse_area: float = A_MIN) -> float:
    """Peak RMS Rabi frequency giving ``pulse_area`` over the 6 sigma window."""
    return pulse_area / (2 * WINDOW_SIGMAS * sigma_p)


@dataclass(frozen=True)
class PulseEnvelope:
    """Gaussian envelope ``peak * exp(-(t-center)^2 / (2 sigma^2))`` truncated to +/- 3 sigma."""

    peak: float
    sigma: float
    center: float = 0.0

    def __post_init__(self):
        if self.peak < 0:
            raise ValueError("pulse peak must be non-negative")
        if self.sigma <= 0:
            raise ValueError("pulse sigma must be positive")

    @property
    def window(self) -> tuple[float, float]:
        h = WINDOW_SIGMAS * self.sigma
        return (self.center - h, self.center + h)

    @property
    def fwhm(self) -> float:
        return 2 * math.sqrt(2 * math.log(2)) * self.sigma

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        x = (t - self.center) / self.sigma
        val = self.peak * np.exp(-0.5 * x * x)
        val = np.where(np.abs(x) <= WINDOW_SIGMAS, val, 0.0)
        return float(val) if val.ndim == 0 else val


@dataclass(frozen=True)
class GateSpec:
    """Pulse parameters of one synthesized single-qubit gate.

    Attributes
    ----------
    alpha : float
        Relative laser phase (rad).
    beta : float
        Mixing angle, ``tan(beta) = Omega_1 / Omega_0``, in [0, pi/2].
    gamma : float
        Target rotation angle (rad).
    delta : float
        Single-photon detuning (rad/ps).
    omega_rms_max : float
        Peak of ``sqrt(Omega_0^2 + Omega_1^2)`` (rad/ps).
    sigma_p : float
        Gaussian width (ps).
    center : float
        Pulse center (ps).
    """

    alpha: float
    beta: float
    gamma: float
    delta: float
    omega_rms_max: float
    sigma_p: float
    center: float = 0.0

    @property
    def pulse_area(self) -> float:
        return self.omega_rms_max * 2 * WINDOW_SIGMAS * self.sigma_p

    @property
    def omega0_max(self) -> float:
        return self.omega_rms_max * math.cos(self.beta)

    @property
    def omega1_max(self) -> float:
        return self.omega_rms_max * math.sin(self.beta)

    @property
    def window(self) -> tuple[float, float]:
        return self.envelope.window

    @property
    def envelope(self) -> PulseEnvelope:
        return PulseEnvelope(self.omega_rms_max, self.sigma_p, self.center)

    def shifted(self, center: float) -> "GateSpec":
        return replace(self, center=center)

    def validate(self, a_min: float = A_MIN, floor: float = DETUNING_FLOOR) -> "GateSpec":
        if not (-1e-12 <= self.beta <= math.pi / 2 + 1e-12):
            raise ValueError(f"beta={self.beta} outside [0, pi/2]")
        if self.sigma_p <= 0 or self.omega_rms_max < 0:
            raise ValueError("sigma_p must be positive and omega_rms_max non-negative")
        if self.pulse_area < a_min * (1 - 1e-12):
            raise InfeasibleGateError(f"pulse area {self.pulse_area:.3f} below the adiabatic minimum {a_min}")
        if self.delta < floor * self.omega_rms_max * (1 - 1e-12):
            raise InfeasibleGateError(
                f"detuning {self.delta:.4g} below {floor} x omega_rms_max = {floor * self.omega_rms_max:.4g}"
            )
        return self


def build_hamiltonian(spec: GateSpec, t: float) -> np.ndarray:
    """3x3 rotating-frame Hamiltonian at time ``t`` in basis ``{|0>, |X->, |1>}``."""
    g = spec.envelope(t) / spec.omega_rms_max if spec.omega_rms_max > 0 else 0.0
    o0 = spec.omega0_max * g
    o1 = spec.omega1_max * g
    e = np.exp(1j * spec.alpha)
    return np.array(
        [[0.0, o0 * e, 0.0], [o0 * np.conj(e), spec.delta, o1], [0.0, o1, 0.0]],
        dtype=complex,
    )


def lambda_drive_operators(spec: GateSpec) -> tuple[np.ndarray, np.ndarray]:
    """Static part and unit-envelope drive part: ``H(t) = H0 + g(t) H1`` with ``g`` peaking at 1."""
    h0 = np.diag([0.0, spec.delta, 0.0]).astype(complex)
    h1 = build_hamiltonian(replace(spec, delta=0.0, center=0.0), 0.0)
    return h0, h1


@dataclass(frozen=True)
class LambdaEigenframe:
    """Instantaneous adiabatic frame of the Lambda Hamiltonian.

    ``eigenvectors`` holds ``Phi1, Phi2, Phi3`` as columns with eigenvalues
    ``0, -2 Z sin^2 phi, 2 Z cos^2 phi``.
    """

    beta: float
    alpha: float
    phi: float
    Z: float
    omega_rms: float
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def eigenframe(spec: GateSpec, t: float) -> LambdaEigenframe:
    om = spec.envelope(t)
    d = spec.delta
    if d <= 0 and om == 0:
        raise ValueError("eigenframe undefined for zero detuning and zero drive")
    if d < 0:
        raise ValueError("eigenframe requires a positive detuning")
    phi = 0.5 * math.atan2(2 * om, d)
    Z = math.sqrt(om * om + 0.25 * d * d)
    b, a = spec.beta, spec.alpha
    ea = np.exp(1j * a)
    sp, cp = math.sin(phi), math.cos(phi)
    cb, sb = math.cos(b), math.sin(b)
    phi1 = np.array([-ea * sb, 0.0, cb], dtype=complex)
    phi2 = np.array([-ea * cb * cp, sp, -sb * cp], dtype=complex)
    phi3 = np.array([ea * cb * sp, cp, sb * sp], dtype=complex)
    lam = np.array([0.0, -2 * Z * sp * sp, 2 * Z * cp * cp])
    return LambdaEigenframe(b, a, phi, Z, om, lam, np.column_stack([phi1, phi2, phi3]))


def _gamma_integrand(om: float, delta: float) -> float:
    # sqrt(om^2 + d^2/4) - d/2 without cancellation
    h = 0.5 * delta
    return om * om / (math.sqrt(om * om + h * h) + h)


def rotation_angle(omega_rms_max: float, sigma_p: float, delta: float, rtol: float = 1e-11) -> float:
    """Rotation angle gamma for Gaussian pulses truncated to +/- 3 sigma.

    Adaptive Gauss-Kronrod quadrature on the half window (the integrand is even).
    """
    if delta < 0:
        raise ValueError("detuning must be non-negative")
    if omega_rms_max == 0:
        return 0.0
    if delta == 0:
        return closed_form_area(omega_rms_max, sigma_p)

    def f(t):
        return _gamma_integrand(omega_rms_max * math.exp(-0.5 * (t / sigma_p) ** 2), delta)

    val, _ = integrate.quad(f, 0.0, WINDOW_SIGMAS * sigma_p, epsabs=0.0, epsrel=rtol, limit=200)
    return 2.0 * val


def closed_form_area(omega_rms_max: float, sigma_p: float) -> float:
    """Truncated-Gaussian pulse area ``sqrt(2 pi) sigma Omega erf(3/sqrt 2)``."""
    return math.sqrt(2 * math.pi) * sigma_p * omega_rms_max * special.erf(WINDOW_SIGMAS / math.sqrt(2))


def max_rotation_angle(omega_rms_max: float, sigma_p: float, floor: float = DETUNING_FLOOR) -> float:
    return rotation_angle(omega_rms_max, sigma_p, floor * omega_rms_max)


def invert_detuning(
    omega_rms_max: float,
    sigma_p: float,
    gamma_target: float,
    floor: float = DETUNING_FLOOR,
    rtol: float = 1e-12,
) -> float:
    """Detuning producing ``gamma_target``, searched on ``[floor * Omega, delta_hi]``.

    Raises
    ------
    InfeasibleGateError
        If ``gamma_target`` exceeds the angle reachable at the detuning floor.
    """
    if not (0 < gamma_target <= math.pi + 1e-12):
        raise ValueError("gamma_target must lie in (0, pi]")
    lo = floor * omega_rms_max
    g_lo = rotation_angle(omega_rms_max, sigma_p, lo)
    if gamma_target > g_lo:
        raise InfeasibleGateError(
            f"gamma={gamma_target:.4f} exceeds the maximum {g_lo:.4f} reachable at "
            f"delta = {floor} x omega_rms_max; increase the pulse area"
        )
    # large-delta asymptote gamma ~ sqrt(pi) sigma Omega^2 / delta bounds from above
    hi = max(lo, 2.0 * math.sqrt(math.pi) * sigma_p * omega_rms_max**2 / gamma_target)
    while rotation_angle(omega_rms_max, sigma_p, hi) > gamma_target:
        hi *= 2.0
    if hi == lo:
        return lo
    return optimize.brentq(
        lambda d: rotation_angle(omega_rms_max, sigma_p, d) - gamma_target,
        lo,
        hi,
        xtol=1e-14,
        rtol=rtol,
        maxiter=200,
    )


def synthesize_gate(
    target: RotationTarget,
    omega_rms_max: float | None = None,
    sigma_p: float = DEFAULT_SIGMA_P,
    center: float = 0.0,
    floor: float = DETUNING_FLOOR,
) -> GateSpec:
    """Pulse parameters implementing ``target``.

    ``beta`` is half the polar angle of the axis, ``alpha`` minus its azimuth
    and ``delta`` comes from :func:`invert_detuning`. The default peak Rabi
    frequency gives the minimum pulse area of 100.
    """
    if omega_rms_max is None:
        omega_rms_max = default_omega(sigma_p)
    beta = 0.5 * target.polar
    alpha = -target.azimuth if math.sin(2 * beta) > 1e-15 else 0.0
    alpha = float(np.mod(alpha + math.pi, 2 * math.pi) - math.pi)
    delta = invert_detuning(omega_rms_max, sigma_p, target.angle, floor=floor)
    spec = GateSpec(alpha, beta, target.angle, delta, omega_rms_max, sigma_p, center)
    return spec.validate(floor=floor)


def gate_target(spec: GateSpec) -> RotationTarget:
    """Rotation implemented by ``spec`` according to the synthesis formulas."""
    s2b = math.sin(2 * spec.beta)
    axis = (s2b * math.cos(-spec.alpha), s2b * math.sin(-spec.alpha), math.cos(2 * spec.beta))
    return RotationTarget.make(axis, spec.gamma)


_STANDARD = {
    "X": ((1.0, 0.0, 0.0), math.pi),
    "Y": ((0.0, 1.0, 0.0), math.pi),
    "H": ((1 / math.sqrt(2), 0.0, 1 / math.sqrt(2)), math.pi),
    "Z": ((0.0, 0.0, -1.0), math.pi),
    "S": ((0.0, 0.0, -1.0), math.pi / 2),
    "T": ((0.0, 0.0, -1.0), math.pi / 4),
}


def standard_gate(name: str, axis=None, angle: float | None = None) -> RotationTarget:
    """Named gate as a rotation target; ``"arbitrary"`` takes ``axis`` and ``angle``."""
    key = name.upper() if name.lower() != "arbitrary" else "arbitrary"
    if key == "arbitrary":
        if axis is None or angle is None:
            raise ValueError("arbitrary gate requires axis and angle")
        return RotationTarget.make(axis, angle)
    if key not in _STANDARD:
        raise KeyError(f"unknown gate {name!r}; known: {sorted(_STANDARD)} or 'arbitrary'")
    ax, g = _STANDARD[key]
    return RotationTarget.make(ax, g)


def pulsed_hamiltonian(spec: GateSpec):
    from .lindblad import PulsedHamiltonian

    h0, h1 = lambda_drive_operators(spec)
    return PulsedHamiltonian(h0, [(PulseEnvelope(1.0, spec.sigma_p, spec.center), h1)])


def simulate_gate(spec: GateSpec, rho0, rates=None, cfg=None, reference=None):
    """Lindblad simulation of one gate over its pulse window.

    Parameters
    ----------
    spec : GateSpec
    rho0 : array_like
        Initial 3-level ket or density matrix supported on ``{|0>, |1>}``.
    rates : DecoherenceRates, optional
        Defaults to no decoherence.
    cfg : IntegratorConfig, optional
    reference : array_like, optional
        Ideal final state. Defaults to the ideal rotation of ``rho0``.

    Returns
    -------
    Trajectory
    """
    from .lindblad import DecoherenceRates, IntegratorConfig, build_collapse_set, integrate

    rho = as_density(rho0)
    if rho.shape != (3, 3):
        raise StateError("simulate_gate expects a 3-level state")
    if rho[1, 1].real > 1e-9:
        raise StateError("initial state has excited-state population")
    rates = DecoherenceRates.none() if rates is None else rates
    t0, t1 = spec.window
    cfg = IntegratorConfig.for_span(t0, t1, spec.sigma_p) if cfg is None else cfg
    if reference is None:
        reference = ideal_rotation(gate_target(spec), rho)
    return integrate(
        pulsed_hamiltonian(spec),
        build_collapse_set("lambda", rates),
        rho,
        cfg,
        t_span=(t0, t1),
        reference=reference,
    )


def final_fidelity(spec: GateSpec, rho0, rates=None, cfg=None) -> float:
    traj = simulate_gate(spec, rho0, rates, cfg)
    ideal = ideal_rotation(gate_target(spec), as_density(rho0))
    return jozsa_fidelity(traj.states[-1], ideal)


def gate_channel(spec: GateSpec, rates=None, cfg=None) -> np.ndarray:
    """Final-time images of the qubit matrix units ``|i><j|``, ``i, j in {0, 1}``.

    Returns an array ``E[a, b]`` of 3x3 matrices; the master equation is
    linear, so any qubit input is mapped by combining these four images.
    """
    from .lindblad import DecoherenceRates, IntegratorConfig, build_collapse_set, propagate

    rates = DecoherenceRates.none() if rates is None else rates
    t0, t1 = spec.window
    cfg = IntegratorConfig.for_span(t0, t1, spec.sigma_p, n_out=2) if cfg is None else cfg
    cfg = replace(cfg, output_times=(t0, t1))
    H = pulsed_hamiltonian(spec)
    chans = build_collapse_set("lambda", rates)
    i, j = LAMBDA_QUBIT
    # the propagator evolves Hermitian inputs only: |0><1| = (A + iB) / 2
    herm = np.zeros((4, 3, 3), dtype=complex)
    herm[0][i, i] = 1.0
    herm[1][j, j] = 1.0
    herm[2][i, j] = herm[2][j, i] = 1.0
    herm[3][i, j], herm[3][j, i] = -1j, 1j
    img = [propagate(H, chans, x0, (t0, t1), cfg)[1][-1] for x0 in herm]
    out = np.empty((2, 2, 3, 3), dtype=complex)
    out[0, 0], out[1, 1] = img[0], img[1]
    out[0, 1] = 0.5 * (img[2] + 1j * img[3])
    out[1, 0] = 0.5 * (img[2] - 1j * img[3])
    return out


def fidelity_surface(spec: GateSpec, rates=None, n_mu: int = 21, n_nu: int = 21, cfg=None):
    """Final Jozsa fidelity over initial states ``cos(mu)|0> + e^{i nu} sin(mu)|1>``.

    ``mu`` spans ``[0, pi/2]`` inclusive and ``nu`` spans ``[0, 2 pi)``.

    Returns
    -------
    mu, nu : ndarray
        Grid axes.
    fid : ndarray, shape (n_mu, n_nu)
    """
    E = gate_channel(spec, rates, cfg)
    U = lift_qubit_operator(rotation_unitary(gate_target(spec)))
    mu = np.linspace(0.0, np.pi / 2, n_mu)
    nu = np.linspace(0.0, 2 * np.pi, n_nu, endpoint=False)
    fid = np.empty((n_mu, n_nu))
    for p, m in enumerate(mu):
        for q, n in enumerate(nu):
            c = np.array([np.cos(m), np.exp(1j * n) * np.sin(m)])
            rho = np.einsum("a,b,abij->ij", c, c.conj(), E)
            psi = U @ superposition_ket(m, n)
            fid[p, q] = float(np.real(psi.conj() @ rho @ psi))
    return mu, nu, fid
