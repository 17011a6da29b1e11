"""Two-qubit register (5-level control triple dot x 3-level target) and the 3-step CNOT.

Ordering is control-major: composite index ``3 * c + t`` with control basis
``{|0_c>, |X01_c>, |1_c>, |X12_c>, |2_c>}`` and target basis
``{|0_t>, |X_t>, |1_t>}``.

Protocol: step 1 moves the control electron from ``|1_c>`` to the control
site ``|2_c>``; step 2 applies X to the target with lasers tuned to the
Coulomb-shifted levels present only while ``|2_c>`` is occupied; step 3
returns the control electron.

Frames: steps 1, 3 and the gaps use the idle frame of the bare levels; step 2
uses the frame of the step-2 lasers, in which the shifted block is exactly the
single-qubit Lambda Hamiltonian and other blocks carry the offsets
``-(s0, sX, s1)``. The two frames differ by a diagonal unitary on the target
alone, which the virtual-Z correction absorbs.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import lambda_control as lc
from .lindblad import (
    REGISTER_LAYOUT,
    DecoherenceRates,
    IntegratorConfig,
    PulsedHamiltonian,
    Trajectory,
    build_collapse_set,
    propagate,
)
from .qcore import StateError, as_density, basis_ket, jozsa_fidelity, product_ket
from .units import ghz_to_rad_ps

C0, CX01, C1, CX12, C2 = range(5)
T0, TX, T1 = range(3)
DIMS = (5, 3)
DIM = 15
COMPUTATIONAL = (3 * C0 + T0, 3 * C0 + T1, 3 * C1 + T0, 3 * C1 + T1)
CONTROL_LAMBDA = (C1, CX12, C2)

DEFAULT_SHIFT = ghz_to_rad_ps(300.0)
DEFAULT_SIGMA_TARGET = 3.5
FWHM_MIN_STEP2 = 4.0
LEAK_WARN = 1e-4


def index(c: int, t: int) -> int:
    return 3 * c + t


def ket(c: int, t: int) -> np.ndarray:
    return product_ket(basis_ket(5, c), basis_ket(3, t))


def computational_ket(amplitudes) -> np.ndarray:
    """Register ket from amplitudes on ``|00>, |01>, |10>, |11>`` (control first)."""
    a = np.asarray(amplitudes, dtype=complex)
    v = np.zeros(DIM, dtype=complex)
    v[list(COMPUTATIONAL)] = a
    return v / np.linalg.norm(v)


@dataclass(frozen=True)
class CoulombShiftModel:
    """Target level shifts (rad/ps) while the control site is occupied.

    ``residual`` shifts ``|0_t>`` and ``|X_t>`` while the control electron sits
    in ``|1_c>`` (next-nearest dot). ``symmetric`` keeps the conditional shift
    switched on during steps 1 and 3, so the control transitions feel the
    target (back-action); by default it is neglected there.
    """

    s0: float = DEFAULT_SHIFT
    sX: float = DEFAULT_SHIFT
    s1: float = 0.0
    residual: float = 0.0
    symmetric: bool = False

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.s0, self.sX, self.s1])

    @property
    def selectivity(self) -> float:
        """Two-photon detuning separating the shifted block from the unshifted ones."""
        return abs(self.s0 - self.s1)


@dataclass(frozen=True)
class CnotSchedule:
    """Timing and pulses of the 3-step CNOT.

    ``virtual_z`` holds the phases (control ``|1_c>``, target ``|1_t>``) applied
    as a frame update after the physical pulses.
    """

    step1: lc.GateSpec
    step2: lc.GateSpec
    step3: lc.GateSpec
    gap: float
    virtual_z: tuple[float, float] = (0.0, 0.0)
    calibration: dict = field(default_factory=dict, compare=False)

    @property
    def steps(self) -> tuple[lc.GateSpec, lc.GateSpec, lc.GateSpec]:
        return (self.step1, self.step2, self.step3)

    @property
    def t_start(self) -> float:
        return self.step1.window[0]

    @property
    def t_end(self) -> float:
        return self.step3.window[1]

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def segments(self) -> list[tuple[str, float, float]]:
        """Ordered ``(name, t0, t1)`` pieces: step1, gap1, step2, gap2, step3."""
        w = [s.window for s in self.steps]
        out = [("step1", *w[0])]
        if w[1][0] > w[0][1]:
            out.append(("gap1", w[0][1], w[1][0]))
        out.append(("step2", *w[1]))
        if w[2][0] > w[1][1]:
            out.append(("gap2", w[1][1], w[2][0]))
        out.append(("step3", *w[2]))
        return out


def check_step2_resolution(sigma: float, shifts: CoulombShiftModel) -> float:
    """Estimated off-block leakage of step 2; errors if the pulse cannot resolve the shift."""
    bandwidth = 2 * math.sqrt(2 * math.log(2)) / sigma
    sel = shifts.selectivity
    if bandwidth >= sel:
        raise ValueError(
            f"step-2 pulse bandwidth {bandwidth:.3f} rad/ps does not resolve the Coulomb shift {sel:.3f} rad/ps"
        )
    leak = (math.pi / 2) ** 2 * math.exp(-0.5 * (sel * sigma) ** 2)
    if leak > LEAK_WARN:
        warnings.warn(
            f"step-2 off-block leakage estimate {leak:.1e} exceeds {LEAK_WARN:g}; lengthen the pulse or raise the shift",
            stacklevel=3,
        )
    return leak


def _shift_term(shifts: CoulombShiftModel) -> np.ndarray:
    p2 = np.zeros((5, 5))
    p2[C2, C2] = 1.0
    return np.kron(p2, np.diag(shifts.vector)).astype(complex)


def _step2_offsets(shifts: CoulombShiftModel) -> np.ndarray:
    """Diagonal of the step-2 frame offsets for every composite level."""
    off = np.zeros((5, 3))
    for c in range(5):
        if c != C2:
            off[c] = -shifts.vector
    off[C1, T0] += shifts.residual
    off[C1, TX] += shifts.residual
    return off.ravel()


def register_pulsed_hamiltonian(piece: str, schedule: CnotSchedule, shifts: CoulombShiftModel) -> PulsedHamiltonian:
    """Hamiltonian of one schedule piece (``step1..3``, ``gap1``, ``gap2``) in engine form."""
    eye3 = np.eye(3)
    if piece in ("step1", "step3"):
        spec = schedule.step1 if piece == "step1" else schedule.step3
        h0c, h1c = lc.lambda_drive_operators(spec)
        s0 = np.zeros((5, 5), dtype=complex)
        s1 = np.zeros((5, 5), dtype=complex)
        idx = list(CONTROL_LAMBDA)
        s0[np.ix_(idx, idx)] = h0c
        s1[np.ix_(idx, idx)] = h1c
        static = np.kron(s0, eye3)
        if shifts.symmetric:
            static = static + _shift_term(shifts)
        env = lc.PulseEnvelope(1.0, spec.sigma_p, spec.center)
        return PulsedHamiltonian(static, [(env, np.kron(s1, eye3))])
    if piece == "step2":
        spec = schedule.step2
        h0t, h1t = lc.lambda_drive_operators(spec)
        static = np.kron(np.eye(5), h0t) + np.diag(_step2_offsets(shifts))
        env = lc.PulseEnvelope(1.0, spec.sigma_p, spec.center)
        return PulsedHamiltonian(static, [(env, np.kron(np.eye(5), h1t))])
    if piece in ("gap1", "gap2"):
        return PulsedHamiltonian(_shift_term(shifts))
    raise ValueError(f"unknown schedule piece {piece!r}")


def build_register_hamiltonian(step: int, schedule: CnotSchedule, shifts: CoulombShiftModel, t: float) -> np.ndarray:
    """15x15 Hamiltonian of step 1, 2 or 3 at time ``t``."""
    if step not in (1, 2, 3):
        raise ValueError("step must be 1, 2 or 3")
    if step == 2:
        check_step2_resolution(schedule.step2.sigma_p, shifts)
    return register_pulsed_hamiltonian(f"step{step}", schedule, shifts)(t)


def virtual_z_unitary(phases: tuple[float, float]) -> np.ndarray:
    zc, zt = phases
    dc = np.ones(5, dtype=complex)
    dc[C1] = np.exp(1j * zc)
    dt = np.ones(3, dtype=complex)
    dt[T1] = np.exp(1j * zt)
    return np.diag(np.kron(dc, dt))


def _run_pieces(schedule, shifts, channels, x0, cfg_base: IntegratorConfig, n_out: int):
    """Propagate through all pieces; returns concatenated times/states and step stats."""
    pieces = schedule.segments()
    total = schedule.duration
    times_all, states_all = [], []
    stats = {"nfev": 0, "nsteps": 0}
    x = np.asarray(x0, dtype=complex)
    for k, (name, a, b) in enumerate(pieces):
        n = max(3, int(round(n_out * (b - a) / total)) + 1)
        max_step = cfg_base.max_step
        if name.startswith("step"):
            spec = {"step1": schedule.step1, "step2": schedule.step2, "step3": schedule.step3}[name]
            max_step = min(max_step, spec.sigma_p / 20.0)
        cfg = replace(cfg_base, max_step=max_step, output_times=tuple(np.linspace(a, b, n)))
        H = register_pulsed_hamiltonian(name, schedule, shifts)
        ts, xs, st = propagate(H, channels, x, (a, b), cfg)
        for key in stats:
            stats[key] += st.get(key, 0)
        x = xs[-1]
        if k:
            ts, xs = ts[1:], xs[1:]
        times_all.append(ts)
        states_all.append(xs)
    return np.concatenate(times_all), np.concatenate(states_all), stats


def _computational_phases(schedule: CnotSchedule, shifts: CoulombShiftModel, cfg: IntegratorConfig):
    """Output phases of the four computational inputs from one decoherence-free run."""
    psi = computational_ket([1, 1, 1, 1])
    rho0 = np.outer(psi, psi.conj())
    _, xs, _ = _run_pieces(schedule, shifts, [], rho0, cfg, n_out=4)
    rho = xs[-1]
    i00, i01, i10, i11 = COMPUTATIONAL
    # CNOT sends 00->00, 01->01, 10->11, 11->10
    outs = (i00, i01, i11, i10)
    ref = rho[outs[0], outs[0]]
    u = np.array([rho[o, outs[0]] / np.sqrt(ref.real) for o in outs])
    return u


def schedule_cnot(
    shifts: CoulombShiftModel | None = None,
    sigma_control: float = lc.DEFAULT_SIGMA_P,
    sigma_target: float = DEFAULT_SIGMA_TARGET,
    omega_control: float | None = None,
    omega_target: float | None = None,
    gap: float | None = None,
    t_start: float = 0.0,
    calibrate: bool = True,
    cfg: IntegratorConfig | None = None,
    tol: float = 1e-7,
) -> CnotSchedule:
    """Three-step CNOT schedule, optionally phase-calibrated.

    Calibration runs the schedule decoherence-free on the equal superposition
    of the four computational states. The step-2 laser phase is trimmed until
    the conditional phase vanishes, then the remaining local phases are stored
    as virtual-Z corrections.

    Parameters
    ----------
    shifts : CoulombShiftModel, optional
    sigma_control, sigma_target : float
        Gaussian widths (ps) of steps 1/3 and step 2.
    omega_control, omega_target : float, optional
        Peak RMS Rabi frequencies; default to a pulse area of 100.
    gap : float, optional
        Idle time between steps; defaults to ``sigma_control``.
    """
    shifts = CoulombShiftModel() if shifts is None else shifts
    gap = sigma_control if gap is None else gap
    if gap < 0:
        raise ValueError("gap must be non-negative")
    fwhm2 = 2 * math.sqrt(2 * math.log(2)) * sigma_target
    if fwhm2 <= FWHM_MIN_STEP2:
        raise ValueError(f"step-2 FWHM {fwhm2:.2f} ps must exceed {FWHM_MIN_STEP2} ps")
    check_step2_resolution(sigma_target, shifts)
    x = lc.standard_gate("X")
    w1 = lc.WINDOW_SIGMAS * sigma_control
    w2 = lc.WINDOW_SIGMAS * sigma_target
    c1 = t_start + w1
    c2 = c1 + w1 + gap + w2
    c3 = c2 + w2 + gap + w1
    s1 = lc.synthesize_gate(x, omega_control, sigma_control, center=c1)
    s2 = lc.synthesize_gate(x, omega_target, sigma_target, center=c2)
    s3 = s1.shifted(c3)
    sched = CnotSchedule(s1, s2, s3, gap)
    if not calibrate:
        return sched
    cfg = IntegratorConfig(rtol=1e-10, atol=1e-13) if cfg is None else cfg
    history = []
    for _ in range(8):
        u = _computational_phases(sched, shifts, cfg)
        chi = float(np.angle(u[2] * u[0] / (u[3] * u[1])))
        history.append(chi)
        if abs(chi) < tol:
            break
        sched = replace(sched, step2=replace(sched.step2, alpha=sched.step2.alpha + 0.5 * chi))
    zt = float(np.angle(u[0] / u[1]))
    zc = float(np.angle(u[0] / u[3]))
    return replace(
        sched,
        virtual_z=(zc, zt),
        calibration={"conditional_phase_history": history, "alpha2": sched.step2.alpha},
    )


def ideal_cnot(state) -> np.ndarray:
    """Truth-table CNOT on a register ket or density matrix in the computational subspace."""
    arr = np.asarray(state, dtype=complex)
    if arr.shape[0] != DIM:
        raise StateError(f"register states have dimension {DIM}")
    mask = np.ones(DIM, dtype=bool)
    mask[list(COMPUTATIONAL)] = False
    if arr.ndim == 1:
        outside = np.sum(np.abs(arr[mask]) ** 2)
    else:
        outside = np.real(np.trace(arr)) - np.real(np.sum(np.diag(arr)[~mask]))
    if outside > 1e-9:
        raise StateError("ideal_cnot input has support outside the computational subspace")
    perm = np.arange(DIM)
    i10, i11 = index(C1, T0), index(C1, T1)
    perm[i10], perm[i11] = i11, i10
    P = np.eye(DIM)[perm]
    if arr.ndim == 1:
        return P @ arr
    return P @ arr @ P.T


def simulate_cnot(
    rho0,
    schedule: CnotSchedule,
    shifts: CoulombShiftModel | None = None,
    rates: DecoherenceRates | None = None,
    cfg: IntegratorConfig | None = None,
    n_out: int = 401,
) -> Trajectory:
    """Run the three steps and gaps with the register collapse set.

    The stored virtual-Z correction is applied to every sample as a frame
    update, and the fidelity is reported against :func:`ideal_cnot`.
    """
    shifts = CoulombShiftModel() if shifts is None else shifts
    rates = DecoherenceRates.none() if rates is None else rates
    rho = as_density(rho0)
    if rho.shape != (DIM, DIM):
        raise StateError("simulate_cnot expects a 15-dimensional state")
    excited = [index(c, t) for c in range(5) for t in range(3) if c in (CX01, CX12) or t == TX]
    if np.real(np.sum(np.diag(rho)[excited])) > 1e-9:
        raise StateError("initial register state has excited-level population")
    cfg = IntegratorConfig() if cfg is None else cfg
    channels = build_collapse_set(REGISTER_LAYOUT, rates)
    times, states, stats = _run_pieces(schedule, shifts, channels, rho, cfg, n_out)
    V = virtual_z_unitary(schedule.virtual_z)
    states = V @ states @ V.conj().T
    ref = ideal_cnot(rho)
    fid = np.array([jozsa_fidelity(r, ref, psd_tol=1e-8) for r in states])
    return Trajectory(times, states, fid, REGISTER_LAYOUT.basis_labels(), stats)


def cnot_fidelity(rho0, schedule, shifts=None, rates=None, cfg=None) -> float:
    return float(simulate_cnot(rho0, schedule, shifts, rates, cfg, n_out=4).fidelity[-1])
