"""Lindblad master-equation integration.

The equation ``d rho/dt = -i[H, rho] + sum_k G_k (L_k rho L_k^+ - {L_k^+ L_k, rho}/2)``
is integrated with an adaptive Dormand-Prince 8(5,3) pair. The stepping loop
is compiled with numba and uses scipy's DOP853 tableau and step controller.

Hamiltonians with Gaussian pulse envelopes are described by
:class:`PulsedHamiltonian` (static part plus envelope-weighted terms); their
window edges are treated as integration breakpoints so no step straddles a
truncation discontinuity. Any other callable ``H(t)`` falls back to
``scipy.integrate.solve_ivp``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numba
import numpy as np
from scipy.integrate import solve_ivp
from scipy.integrate._ivp import dop853_coefficients as _dop

from .qcore import StateError, check_density, jozsa_fidelity

_NS = _dop.N_STAGES
_A = np.ascontiguousarray(_dop.A[:_NS, :_NS])
_B = np.ascontiguousarray(_dop.B)
_C = np.ascontiguousarray(_dop.C[:_NS])
_E3 = np.ascontiguousarray(_dop.E3)
_E5 = np.ascontiguousarray(_dop.E5)

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
ERR_EXP = -1.0 / 8.0
MAX_STEPS = 50_000_000


class IntegrationError(RuntimeError):
    """The integrator could not complete (step-size underflow or step budget exhausted)."""


@dataclass(frozen=True)
class CollapseChannel:
    rate: float
    op: np.ndarray
    label: str = ""

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("collapse rate must be non-negative")


@dataclass(frozen=True)
class DecoherenceRates:
    """Emission rates from the excited state to |0> and |1>, and pure dephasing rate (all 1/ps)."""

    gamma_sp_0: float = 0.0
    gamma_sp_1: float = 0.0
    gamma_dp: float = 0.0

    def __post_init__(self):
        if min(self.gamma_sp_0, self.gamma_sp_1, self.gamma_dp) < 0:
            raise ValueError("decoherence rates must be non-negative")

    @classmethod
    def none(cls) -> "DecoherenceRates":
        return cls(0.0, 0.0, 0.0)

    @classmethod
    def realistic(cls) -> "DecoherenceRates":
        """Upper-bound emission rate 7.79e8 1/s on both channels and a 6 us dephasing time."""
        return cls(7.79e-4, 7.79e-4, 1e-6 / 6.0)


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-9
    atol: float = 1e-12
    max_step: float = np.inf
    output_times: tuple[float, ...] | None = None
    n_out: int = 201

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_step <= 0:
            raise ValueError("max_step must be positive")
        if self.output_times is not None:
            ts = np.asarray(self.output_times, dtype=float)
            if ts.ndim != 1 or ts.size < 1 or np.any(np.diff(ts) < 0):
                raise ValueError("output_times must be a non-decreasing sequence")

    @classmethod
    def for_span(cls, t0: float, t1: float, sigma_p: float | None = None, n_out: int = 201, **kw) -> "IntegratorConfig":
        max_step = sigma_p / 20.0 if sigma_p else np.inf
        return cls(max_step=max_step, output_times=tuple(np.linspace(t0, t1, n_out)), n_out=n_out, **kw)

    def times(self, t_span: tuple[float, float]) -> np.ndarray:
        if self.output_times is not None:
            ts = np.asarray(self.output_times, dtype=float)
            if ts[0] < t_span[0] - 1e-12 or ts[-1] > t_span[1] + 1e-12:
                raise ValueError("output_times lie outside the integration span")
            return np.clip(ts, t_span[0], t_span[1])
        return np.linspace(t_span[0], t_span[1], self.n_out)


@dataclass
class Trajectory:
    """Sampled solution: ``states[i]`` is the density matrix at ``times[i]``."""

    times: np.ndarray
    states: np.ndarray
    fidelity: np.ndarray | None = None
    labels: tuple[str, ...] | None = None
    stats: dict = field(default_factory=dict)

    @property
    def populations(self) -> np.ndarray:
        return np.real(np.diagonal(self.states, axis1=1, axis2=2)).copy()

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def then(self, other: "Trajectory") -> "Trajectory":
        """Concatenate a trajectory that starts where this one ends (shared point dropped)."""
        fid = None
        if self.fidelity is not None and other.fidelity is not None:
            fid = np.concatenate([self.fidelity, other.fidelity[1:]])
        stats = {k: self.stats.get(k, 0) + other.stats.get(k, 0) for k in set(self.stats) | set(other.stats)}
        return Trajectory(
            np.concatenate([self.times, other.times[1:]]),
            np.concatenate([self.states, other.states[1:]]),
            fid,
            self.labels,
            stats,
        )


class PulsedHamiltonian:
    """``H(t) = static + sum_k envelope_k(t) * op_k`` with truncated Gaussian envelopes.

    Envelopes are objects with ``peak``, ``sigma``, ``center`` and ``window``
    (see :class:`locqubit.lambda_control.PulseEnvelope`).
    """

    def __init__(self, static, terms: Sequence[tuple] = ()):
        self.static = np.ascontiguousarray(static, dtype=complex)
        d = self.static.shape[0]
        self.envelopes = [e for e, _ in terms]
        ops = [np.asarray(op, dtype=complex) * e.peak for e, op in terms]
        for op in ops:
            if op.shape != (d, d):
                raise ValueError("term operator shape does not match the static part")
            if np.max(np.abs(op - op.conj().T), initial=0.0) > 1e-12:
                raise ValueError("term operators must be Hermitian")
        if np.max(np.abs(self.static - self.static.conj().T), initial=0.0) > 1e-12:
            raise ValueError("static Hamiltonian must be Hermitian")
        self.ops = np.ascontiguousarray(np.array(ops, dtype=complex).reshape(len(ops), d, d))
        self.env = np.array(
            [[e.center, e.sigma, e.window[1] - e.center] for e in self.envelopes], dtype=float
        ).reshape(len(ops), 3)

    @property
    def dim(self) -> int:
        return self.static.shape[0]

    def __call__(self, t: float) -> np.ndarray:
        h = self.static.copy()
        for (c, s, hw), op in zip(self.env, self.ops):
            if abs(t - c) <= hw:
                h += np.exp(-0.5 * ((t - c) / s) ** 2) * op
        return h

    def breakpoints(self, t0: float, t1: float) -> np.ndarray:
        pts = {t0, t1}
        for c, _, hw in self.env:
            for p in (c - hw, c + hw):
                if t0 < p < t1:
                    pts.add(float(p))
        return np.array(sorted(pts))


def dissipator(channel: CollapseChannel, rho) -> np.ndarray:
    """``G (L rho L^+ - (L^+ L rho + rho L^+ L)/2)``."""
    L = np.asarray(channel.op, dtype=complex)
    rho = np.asarray(rho, dtype=complex)
    if L.shape != rho.shape:
        raise ValueError(f"collapse operator shape {L.shape} does not match state shape {rho.shape}")
    LdL = L.conj().T @ L
    return channel.rate * (L @ rho @ L.conj().T - 0.5 * (LdL @ rho + rho @ LdL))


def lindblad_rhs(H: np.ndarray, channels: Sequence[CollapseChannel], rho: np.ndarray) -> np.ndarray:
    out = -1j * (H @ rho - rho @ H)
    for ch in channels:
        out += dissipator(ch, rho)
    return out


# --- system layouts ---------------------------------------------------------


@dataclass(frozen=True)
class SystemLayout:
    """Tensor layout plus the emission and dephasing structure of each factor.

    ``emissions`` entries are ``(factor, excited, ground, which)`` with
    ``which`` 0 or 1 selecting ``gamma_sp_0`` or ``gamma_sp_1``.
    """

    name: str
    dims: tuple[int, ...]
    labels: tuple[tuple[str, ...], ...]
    emissions: tuple[tuple[int, int, int, int], ...]
    dephased: tuple[tuple[int, int], ...]

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def basis_labels(self) -> tuple[str, ...]:
        out = [""]
        for labs in self.labels:
            out = [a + ("," if a else "") + b for a in out for b in labs]
        return tuple(out)


LAMBDA_LAYOUT = SystemLayout(
    "lambda",
    (3,),
    (("0", "X", "1"),),
    ((0, 1, 0, 0), (0, 1, 2, 1)),
    ((0, 0), (0, 2)),
)

REGISTER_LAYOUT = SystemLayout(
    "register",
    (5, 3),
    (("0c", "X01c", "1c", "X12c", "2c"), ("0t", "Xt", "1t")),
    ((0, 1, 0, 0), (0, 1, 2, 1), (0, 3, 2, 0), (0, 3, 4, 1), (1, 1, 0, 0), (1, 1, 2, 1)),
    tuple((0, i) for i in range(5)) + tuple((1, i) for i in range(3)),
)

_LAYOUTS = {"lambda": LAMBDA_LAYOUT, "register": REGISTER_LAYOUT}


def _local_op(layout: SystemLayout, factor: int, op: np.ndarray) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for i, d in enumerate(layout.dims):
        out = np.kron(out, op if i == factor else np.eye(d))
    return out


def build_collapse_set(layout, rates: DecoherenceRates) -> list[CollapseChannel]:
    """Emission and dephasing channels for the Lambda system or the 5x3 register.

    Register channels act on one factor and are tensored with the identity on
    the other, so a dephasing projector is diagonal with ones on every
    composite state where that dot is occupied.
    """
    if isinstance(layout, str):
        if layout not in _LAYOUTS:
            raise KeyError(f"unknown layout {layout!r}")
        layout = _LAYOUTS[layout]
    chans = []
    sp = (rates.gamma_sp_0, rates.gamma_sp_1)
    for f, ex, g, which in layout.emissions:
        d = layout.dims[f]
        op = np.zeros((d, d), dtype=complex)
        op[g, ex] = 1.0
        lab = layout.labels[f]
        chans.append(CollapseChannel(sp[which], _local_op(layout, f, op), f"emit {lab[ex]}->{lab[g]}"))
    for f, i in layout.dephased:
        d = layout.dims[f]
        op = np.zeros((d, d), dtype=complex)
        op[i, i] = 1.0
        chans.append(CollapseChannel(rates.gamma_dp, _local_op(layout, f, op), f"dephase {layout.labels[f][i]}"))
    return chans


# --- compiled DOP853 ----------------------------------------------------------


@numba.njit(cache=True)
def _rhs(t, rho, Hs, ops, env, active, jrate, jptr, jrow, jcol, jval, Hbuf, out):
    d = rho.shape[0]
    for i in range(d):
        for j in range(d):
            Hbuf[i, j] = Hs[i, j]
    for k in range(ops.shape[0]):
        if active[k]:
            x = (t - env[k, 0]) / env[k, 1]
            g = np.exp(-0.5 * x * x)
            for i in range(d):
                for j in range(d):
                    Hbuf[i, j] += g * ops[k, i, j]
    for i in range(d):
        for j in range(i, d):
            acc = 0j
            for m in range(d):
                acc += Hbuf[i, m] * rho[m, j] - rho[i, m] * np.conj(Hbuf[j, m])
            out[i, j] = -1j * acc
            if j > i:
                out[j, i] = np.conj(out[i, j])
    for c in range(jrate.shape[0]):
        g = jrate[c]
        if g == 0.0:
            continue
        for p in range(jptr[c], jptr[c + 1]):
            for q in range(jptr[c], jptr[c + 1]):
                out[jrow[p], jrow[q]] += g * jval[p] * np.conj(jval[q]) * rho[jcol[p], jcol[q]]


@numba.njit(cache=True)
def _rms(x, scale):
    s = 0.0
    n = 0
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            v = x[i, j] / scale[i, j]
            s += v.real * v.real + v.imag * v.imag
            n += 1
    return np.sqrt(s / n)


@numba.njit(cache=True)
def _kernel(Hs, ops, env, jrate, jptr, jrow, jcol, jval, rho0, breaks, t_out,
            rtol, atol, max_step, A, B, C, E3, E5, max_steps):
    d = rho0.shape[0]
    ns = B.shape[0]
    n_out = t_out.shape[0]
    out = np.zeros((n_out, d, d), dtype=np.complex128)
    K = np.zeros((ns + 1, d, d), dtype=np.complex128)
    Hbuf = np.zeros((d, d), dtype=np.complex128)
    ytmp = np.zeros((d, d), dtype=np.complex128)
    ynew = np.zeros((d, d), dtype=np.complex128)
    f0 = np.zeros((d, d), dtype=np.complex128)
    scale = np.zeros((d, d))
    active = np.zeros(ops.shape[0], dtype=np.bool_)
    y = rho0.copy()
    io = 0
    while io < n_out and t_out[io] <= breaks[0]:
        out[io] = y
        io += 1
    nfev = 0
    nsteps = 0
    nrej = 0
    status = 0
    eps = 2.220446049250313e-16
    for seg in range(breaks.shape[0] - 1):
        a = breaks[seg]
        b = breaks[seg + 1]
        if b <= a:
            continue
        mid = 0.5 * (a + b)
        for k in range(ops.shape[0]):
            active[k] = abs(mid - env[k, 0]) <= env[k, 2]
        t = a
        _rhs(t, y, Hs, ops, env, active, jrate, jptr, jrow, jcol, jval, Hbuf, f0)
        nfev += 1
        # initial step, as in scipy's select_initial_step
        for i in range(d):
            for j in range(d):
                scale[i, j] = atol + abs(y[i, j]) * rtol
        d0 = _rms(y, scale)
        d1 = _rms(f0, scale)
        if d0 < 1e-5 or d1 < 1e-5:
            h0 = 1e-6
        else:
            h0 = 0.01 * d0 / d1
        h0 = min(h0, b - a)
        for i in range(d):
            for j in range(d):
                ytmp[i, j] = y[i, j] + h0 * f0[i, j]
        _rhs(t + h0, ytmp, Hs, ops, env, active, jrate, jptr, jrow, jcol, jval, Hbuf, K[0])
        nfev += 1
        for i in range(d):
            for j in range(d):
                K[0, i, j] = K[0, i, j] - f0[i, j]
        d2 = _rms(K[0], scale) / h0
        if d1 <= 1e-15 and d2 <= 1e-15:
            h1 = max(1e-6, h0 * 1e-3)
        else:
            h1 = (0.01 / max(d1, d2)) ** (1.0 / 8.0)
        h_abs = min(100 * h0, h1, b - a, max_step)
        while t < b:
            min_step = 10 * abs(np.nextafter(t, np.inf) - t)
            if h_abs > max_step:
                h_abs = max_step
            elif h_abs < min_step:
                h_abs = min_step
            target = b
            if io < n_out and t_out[io] < b:
                target = t_out[io]
            rejected = False
            while True:
                if h_abs < min_step:
                    return out, -1, nfev, nsteps, nrej
                h = h_abs
                t_new = t + h
                if t_new >= target:
                    t_new = target
                h = t_new - t
                for i in range(d):
                    for j in range(d):
                        K[0, i, j] = f0[i, j]
                for s in range(1, ns):
                    for i in range(d):
                        for j in range(d):
                            acc = 0j
                            for r in range(s):
                                acc += A[s, r] * K[r, i, j]
                            ytmp[i, j] = y[i, j] + h * acc
                    _rhs(t + C[s] * h, ytmp, Hs, ops, env, active, jrate, jptr, jrow, jcol, jval, Hbuf, K[s])
                for i in range(d):
                    for j in range(d):
                        acc = 0j
                        for r in range(ns):
                            acc += B[r] * K[r, i, j]
                        ynew[i, j] = y[i, j] + h * acc
                _rhs(t_new, ynew, Hs, ops, env, active, jrate, jptr, jrow, jcol, jval, Hbuf, K[ns])
                nfev += ns
                e5 = 0.0
                e3 = 0.0
                for i in range(d):
                    for j in range(d):
                        sc = atol + max(abs(y[i, j]), abs(ynew[i, j])) * rtol
                        a5 = 0j
                        a3 = 0j
                        for r in range(ns + 1):
                            a5 += E5[r] * K[r, i, j]
                            a3 += E3[r] * K[r, i, j]
                        a5 /= sc
                        a3 /= sc
                        e5 += a5.real * a5.real + a5.imag * a5.imag
                        e3 += a3.real * a3.real + a3.imag * a3.imag
                if e5 == 0.0 and e3 == 0.0:
                    err = 0.0
                else:
                    err = h * e5 / np.sqrt((e5 + 0.01 * e3) * d * d)
                if err < 1.0:
                    if err == 0.0:
                        factor = MAX_FACTOR
                    else:
                        factor = min(MAX_FACTOR, SAFETY * err ** ERR_EXP)
                    if rejected:
                        factor = min(1.0, factor)
                    h_abs = h_abs * factor
                    break
                h_abs = h_abs * max(MIN_FACTOR, SAFETY * err ** ERR_EXP)
                rejected = True
                nrej += 1
            t = t_new
            for i in range(d):
                for j in range(d):
                    y[i, j] = ynew[i, j]
                    f0[i, j] = K[ns, i, j]
            nsteps += 1
            if nsteps > max_steps:
                return out, -2, nfev, nsteps, nrej
            while io < n_out and t_out[io] <= t:
                out[io] = y
                io += 1
    while io < n_out:
        out[io] = y
        io += 1
    return out, status, nfev, nsteps, nrej


def _coo(channels: Sequence[CollapseChannel], d: int):
    rates, ptr, rows, cols, vals = [], [0], [], [], []
    for ch in channels:
        op = np.asarray(ch.op, dtype=complex)
        if op.shape != (d, d):
            raise ValueError(f"collapse operator shape {op.shape} does not match dimension {d}")
        r, c = np.nonzero(op)
        rows.extend(r)
        cols.extend(c)
        vals.extend(op[r, c])
        ptr.append(len(rows))
        rates.append(ch.rate)
    return (
        np.array(rates, dtype=float),
        np.array(ptr, dtype=np.int64),
        np.array(rows, dtype=np.int64),
        np.array(cols, dtype=np.int64),
        np.array(vals, dtype=complex),
    )


def propagate(
    H,
    channels: Sequence[CollapseChannel],
    x0,
    t_span: tuple[float, float],
    cfg: IntegratorConfig,
) -> tuple[np.ndarray, np.ndarray, dict]:
    """Integrate the (linear) master equation for a Hermitian initial matrix.

    No state validation is done, so the map can be applied to traceless or
    indefinite operators such as ``|0><1| + |1><0|``. Only the upper triangle
    is evolved; non-Hermitian inputs must be split into Hermitian parts.
    Returns output times, the sampled matrices and step statistics.
    """
    x0 = np.ascontiguousarray(x0, dtype=complex)
    d = x0.shape[0]
    times = cfg.times(t_span)
    if isinstance(H, PulsedHamiltonian):
        if H.dim != d:
            raise ValueError("Hamiltonian and state dimensions differ")
        K = sum((ch.rate * (ch.op.conj().T @ ch.op) for ch in channels), np.zeros((d, d), complex))
        Hs = np.ascontiguousarray(H.static - 0.5j * K)
        coo = _coo(channels, d)
        out, status, nfev, nsteps, nrej = _kernel(
            Hs, H.ops, H.env, *coo, x0, H.breakpoints(*t_span), times,
            cfg.rtol, cfg.atol, cfg.max_step, _A, _B, _C, _E3, _E5, MAX_STEPS,
        )
        if status == -1:
            raise IntegrationError("step size underflow: tolerance not achievable")
        if status == -2:
            raise IntegrationError("step budget exhausted")
        stats = {"nfev": int(nfev), "nsteps": int(nsteps), "nrejected": int(nrej)}
    else:
        out, stats = _propagate_scipy(H, channels, x0, t_span, times, cfg)
    if not np.all(np.isfinite(out)):
        raise IntegrationError("non-finite state encountered")
    return times, out, stats


def _propagate_scipy(H: Callable, channels, x0, t_span, times, cfg):
    d = x0.shape[0]
    ops = [np.asarray(c.op, dtype=complex) for c in channels]
    rates = [c.rate for c in channels]
    LdL = [L.conj().T @ L for L in ops]

    def f(t, y):
        r = y.reshape(d, d)
        h = np.asarray(H(t), dtype=complex)
        o = -1j * (h @ r - r @ h)
        for g, L, M in zip(rates, ops, LdL):
            if g:
                o += g * (L @ r @ L.conj().T - 0.5 * (M @ r + r @ M))
        return o.ravel()

    sol = solve_ivp(f, t_span, x0.ravel(), method="DOP853", t_eval=times,
                    rtol=cfg.rtol, atol=cfg.atol, max_step=cfg.max_step)
    if not sol.success:
        raise IntegrationError(sol.message)
    return sol.y.T.reshape(-1, d, d), {"nfev": int(sol.nfev)}


def integrate(
    H,
    channels: Sequence[CollapseChannel],
    rho0,
    cfg: IntegratorConfig,
    t_span: tuple[float, float] | None = None,
    reference=None,
    check: bool = True,
) -> Trajectory:
    """Integrate the Lindblad equation from ``rho0`` and sample at ``cfg`` output times.

    Parameters
    ----------
    H : PulsedHamiltonian or callable
        Hamiltonian (rad/ps) as a function of time (ps).
    channels : sequence of CollapseChannel
    rho0 : array_like
        Initial density matrix.
    cfg : IntegratorConfig
    t_span : (float, float), optional
        Defaults to the first and last output time.
    reference : array_like, optional
        Ideal state; when given the trajectory carries the Jozsa fidelity
        against it at every output time.
    check : bool
        Verify trace, Hermiticity and positivity at every output time.
    """
    rho0 = check_density(rho0)
    if t_span is None:
        if cfg.output_times is None:
            raise ValueError("t_span is required when the config has no output times")
        t_span = (cfg.output_times[0], cfg.output_times[-1])
    times, states, stats = propagate(H, channels, rho0, t_span, cfg)
    if check:
        for r in states:
            try:
                check_density(r, herm_tol=1e-10, trace_tol=1e-8, psd_tol=1e-8)
            except StateError as exc:
                raise IntegrationError(f"state invariant violated during integration: {exc}") from exc
    fid = None
    if reference is not None:
        ref = np.asarray(reference, dtype=complex)
        if ref.ndim == 1:
            ref = np.outer(ref, ref.conj())
        fid = np.array([jozsa_fidelity(r, ref, psd_tol=1e-8) for r in states])
    return Trajectory(times, states, fid, stats=stats)
