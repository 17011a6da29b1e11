"""Quantum-state primitives: validation, Jozsa fidelity, Bloch geometry and the ideal rotation oracle.

States are plain numpy arrays: kets are 1-D complex vectors and density
matrices are 2-D. Qubit states may be given either as 2-level objects or
embedded in the 3-level Lambda basis ``{|0>, |X->, |1>}``, in which case the
qubit lives on indices 0 and 2.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

HERM_TOL = 1e-12
TRACE_TOL = 1e-10
PSD_TOL = 1e-9
NORM_TOL = 1e-12
LEAK_TOL = 1e-6

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)

LAMBDA_QUBIT = (0, 2)


class StateError(ValueError):
    """Raised when an object violates a quantum-state invariant."""


class LeakageError(StateError):
    """Raised when population outside the qubit subspace exceeds the threshold."""


class BlochVector(NamedTuple):
    x: float
    y: float
    z: float

    @property
    def norm(self) -> float:
        return float(np.sqrt(self.x**2 + self.y**2 + self.z**2))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class RotationTarget:
    """A Bloch-sphere rotation by ``angle`` in (0, pi] about unit vector ``axis``.

    Use :meth:`make` to normalize arbitrary axis/angle input: angles in
    (pi, 2pi) become ``2pi - angle`` about ``-axis``.
    """

    axis: tuple[float, float, float]
    angle: float

    def __post_init__(self):
        n = np.linalg.norm(self.axis)
        if abs(n - 1.0) > NORM_TOL:
            raise ValueError(f"rotation axis must be a unit vector, got norm {n}")
        if not (0.0 <= self.angle <= np.pi + 1e-12):
            raise ValueError(f"rotation angle must lie in [0, pi], got {self.angle}")

    @classmethod
    def make(cls, axis: Sequence[float], angle: float) -> "RotationTarget":
        a = np.asarray(axis, dtype=float)
        n = np.linalg.norm(a)
        if n == 0:
            raise ValueError("rotation axis must be nonzero")
        a = a / n
        g = float(np.mod(angle, 2 * np.pi))
        if g > np.pi:
            a, g = -a, 2 * np.pi - g
        return cls(tuple(float(v) for v in a), g)

    @property
    def polar(self) -> float:
        return float(np.arccos(np.clip(self.axis[2], -1.0, 1.0)))

    @property
    def azimuth(self) -> float:
        return float(np.arctan2(self.axis[1], self.axis[0]))


def is_ket(x) -> bool:
    return np.ndim(x) == 1


def check_ket(psi, tol: float = NORM_TOL) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    if psi.ndim != 1:
        raise StateError("a pure state must be a 1-D amplitude vector")
    nrm = np.vdot(psi, psi).real
    if abs(nrm - 1.0) > tol:
        raise StateError(f"state norm^2 = {nrm!r} deviates from 1")
    return psi


def check_density(
    rho,
    herm_tol: float = HERM_TOL,
    trace_tol: float = TRACE_TOL,
    psd_tol: float = PSD_TOL,
) -> np.ndarray:
    """Validate a density matrix and return it as a complex array."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise StateError(f"density matrix must be square, got shape {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T), initial=0.0) > herm_tol:
        raise StateError("density matrix is not Hermitian")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > trace_tol:
        raise StateError(f"density matrix trace {tr!r} deviates from 1")
    lo = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]
    if lo < -psd_tol:
        raise StateError(f"density matrix has negative eigenvalue {lo:.3e}")
    return rho


def as_density(state) -> np.ndarray:
    """Ket -> projector; density matrix -> validated copy."""
    if is_ket(state):
        psi = check_ket(state)
        return np.outer(psi, psi.conj())
    return check_density(state)


def _psd_support(rho: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Square roots of the eigenvalues on the numerical support, and the support basis."""
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    if w[0] < -tol:
        raise StateError(f"input is not positive semidefinite (eigenvalue {w[0]:.3e})")
    keep = w > 1e-13 * max(w[-1], 1e-300)
    return np.sqrt(w[keep]), v[:, keep]


def jozsa_fidelity(rho1, rho2, psd_tol: float = PSD_TOL) -> float:
    """Jozsa fidelity ``(Tr sqrt(sqrt(rho1) rho2 sqrt(rho1)))**2``.

    Kets are accepted. With one pure argument this is ``<psi|rho|psi>``.
    Otherwise the trace norm of ``sqrt(rho2) sqrt(rho1)`` is taken from the
    singular values of its restriction to both supports, which avoids square
    roots of round-off eigenvalues.

    Raises
    ------
    StateError
        On dimension mismatch or an eigenvalue below ``-psd_tol``.
    """
    k1, k2 = is_ket(rho1), is_ket(rho2)
    a1, a2 = np.asarray(rho1, dtype=complex), np.asarray(rho2, dtype=complex)
    if a1.shape[0] != a2.shape[0] or (not k1 and not k2 and a1.shape != a2.shape):
        raise StateError(f"dimension mismatch: {a1.shape} vs {a2.shape}")
    if k1 and k2:
        return float(min(1.0, abs(np.vdot(a1, a2)) ** 2))
    if k1 or k2:
        psi, rho = (a1, a2) if k1 else (a2, a1)
        if rho.ndim != 2 or rho.shape != (psi.size, psi.size):
            raise StateError(f"dimension mismatch: {a1.shape} vs {a2.shape}")
        if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0] < -psd_tol:
            raise StateError("input is not positive semidefinite")
        return float(np.clip(np.real(np.vdot(psi, rho @ psi)), 0.0, 1.0))
    s1, v1 = _psd_support(a1, psd_tol)
    s2, v2 = _psd_support(a2, psd_tol)
    B = s2[:, None] * (v2.conj().T @ v1) * s1[None, :]
    f = np.sum(np.linalg.svd(B, compute_uv=False)) ** 2
    return float(np.clip(f, 0.0, 1.0))


def qubit_block(state, qubit_indices: Sequence[int] | None = None, leak_tol: float = LEAK_TOL) -> np.ndarray:
    """Restrict a state to the 2x2 qubit block, checking leakage.

    For 3-level states the qubit indices default to ``(0, 2)``.
    """
    rho = np.outer(state, np.conj(state)) if is_ket(state) else np.asarray(state, dtype=complex)
    d = rho.shape[0]
    if qubit_indices is None:
        qubit_indices = (0, 1) if d == 2 else LAMBDA_QUBIT
    idx = list(qubit_indices)
    block = rho[np.ix_(idx, idx)]
    leak = np.trace(rho).real - np.trace(block).real
    if leak > leak_tol:
        raise LeakageError(f"population {leak:.3e} outside the qubit subspace")
    return block


def bloch_vector(state, qubit_indices: Sequence[int] | None = None, leak_tol: float = LEAK_TOL) -> BlochVector:
    """Pauli expectation values of the qubit block of ``state``."""
    b = qubit_block(state, qubit_indices, leak_tol)
    return BlochVector(
        float(np.trace(PAULI_X @ b).real),
        float(np.trace(PAULI_Y @ b).real),
        float(np.trace(PAULI_Z @ b).real),
    )


def rotation_unitary(target: RotationTarget) -> np.ndarray:
    """2x2 unitary of ``target`` in the convention ``|Phi1><Phi1| + e^{i gamma}|Phi2><Phi2|``.

    ``|Phi2>`` is the +1 eigenvector of ``n . sigma``, so the unitary equals
    ``exp(i gamma/2) exp(+i gamma/2 n . sigma)``.
    """
    nx, ny, nz = target.axis
    nsig = nx * PAULI_X + ny * PAULI_Y + nz * PAULI_Z
    g = target.angle
    return np.exp(0.5j * g) * (np.cos(g / 2) * np.eye(2) + 1j * np.sin(g / 2) * nsig)


def lift_qubit_operator(u2: np.ndarray, dim: int = 3, qubit_indices: Sequence[int] = LAMBDA_QUBIT) -> np.ndarray:
    """Embed a 2x2 operator on the qubit indices; identity elsewhere."""
    u = np.eye(dim, dtype=complex)
    idx = list(qubit_indices)
    u[np.ix_(idx, idx)] = u2
    return u


def ideal_rotation(target: RotationTarget, state) -> np.ndarray:
    """Apply the ideal rotation to a 2-level or 3-level ket or density matrix."""
    arr = np.asarray(state, dtype=complex)
    d = arr.shape[0]
    u = rotation_unitary(target)
    if d == 3:
        u = lift_qubit_operator(u)
    elif d != 2:
        raise StateError(f"ideal_rotation expects a 2- or 3-level state, got dimension {d}")
    if arr.ndim == 1:
        return u @ arr
    return u @ arr @ u.conj().T


def embed_subsystem(op, dims: Sequence[int], position: int) -> np.ndarray:
    """Kronecker-embed a local operator at ``position`` of a tensor layout.

    ``dims`` lists subsystem dimensions with the first factor most significant
    (so the register layout ``(5, 3)`` is control-major).
    """
    op = np.asarray(op, dtype=complex)
    if not 0 <= position < len(dims):
        raise ValueError(f"position {position} outside layout {tuple(dims)}")
    d = dims[position]
    if op.shape != (d, d):
        raise ValueError(f"operator shape {op.shape} does not match subsystem dimension {d}")
    out = np.ones((1, 1), dtype=complex)
    for i, di in enumerate(dims):
        out = np.kron(out, op if i == position else np.eye(di))
    return out


def product_ket(*kets) -> np.ndarray:
    out = np.ones(1, dtype=complex)
    for k in kets:
        out = np.kron(out, np.asarray(k, dtype=complex))
    return out


def basis_ket(dim: int, index: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def superposition_ket(mu: float, nu: float, dim: int = 3) -> np.ndarray:
    """``cos(mu)|0> + e^{i nu} sin(mu)|1>`` in the 2- or 3-level basis."""
    v = np.zeros(dim, dtype=complex)
    i0, i1 = (0, 1) if dim == 2 else LAMBDA_QUBIT
    v[i0] = np.cos(mu)
    v[i1] = np.exp(1j * nu) * np.sin(mu)
    return v


def purity(rho) -> float:
    rho = np.asarray(rho)
    return float(np.real(np.trace(rho @ rho)))


def trace_distance(rho1, rho2) -> float:
    w = np.linalg.eigvalsh(np.asarray(rho1) - np.asarray(rho2))
    return float(0.5 * np.sum(np.abs(w)))


def partial_trace(rho, dims: Sequence[int], keep: int) -> np.ndarray:
    """Reduced density matrix of subsystem ``keep`` of a bipartite state."""
    da, db = dims
    r = np.asarray(rho).reshape(da, db, da, db)
    if keep == 0:
        return np.einsum("ijkj->ik", r)
    return np.einsum("ijil->jl", r)


def random_rotation_targets(n: int, rng: np.random.Generator) -> list[RotationTarget]:
    """Haar-random rotations: uniform axis, angle density proportional to sin^2(angle/2) on [0, 2pi)."""
    out = []
    while len(out) < n:
        v = rng.normal(size=3)
        # SU(2) Haar: the half-angle theta = angle/2 on [0, pi] has density (2/pi) sin^2 theta
        while True:
            th = rng.uniform(0, np.pi)
            if rng.uniform() < np.sin(th) ** 2:
                break
        tgt = RotationTarget.make(v, 2 * th)
        if tgt.angle > 1e-3:
            out.append(tgt)
    return out
