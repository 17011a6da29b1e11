"""Single-particle states of crystal-phase nanowire quantum dots and their optical transitions.

The envelope function separates into a radial Bessel mode of a hard-wall
cylinder and an axial mode of a 1D piecewise-constant potential. Electrons
are confined in zinc-blende (ZB) segments (barrier ``dc`` in wurtzite), holes
in WZ segments (barrier ``dv`` in ZB). Lengths are in nm, energies in meV.

Axial energies are measured from the bottom of the carrier's well. For
optical transitions the electron energy is referred to the WZ conduction band
and the hole energy to the WZ valence band, so that
``hbar omega = E_g(WZ) + E_e + E_h``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np
from scipy import constants as const
from scipy import optimize, special
from scipy.linalg import eigh_tridiagonal

from .units import HBAR_SQ_OVER_2M0, MEV_TO_RAD_PS

PHASES = ("WZ", "ZB")


@dataclass(frozen=True)
class MaterialParams:
    """InP band parameters (masses in m0, energies in meV, M2 in eV m0)."""

    m_e: float = 0.067
    m_h: float = 0.64
    E_g_ZB: float = 1410.0
    E_g_WZ: float = 1474.0
    dc: float = 129.0
    dv: float = 65.0
    M2: float = 10.35
    n_refr: float = 3.44

    def __post_init__(self):
        for k, v in self.__dict__.items():
            if not v > 0:
                raise ValueError(f"material parameter {k} must be positive")

    def mass(self, carrier: str) -> float:
        return self.m_e if _carrier(carrier) == "electron" else self.m_h


def _carrier(c: str) -> str:
    c = c.lower()
    if c in ("e", "electron"):
        return "electron"
    if c in ("h", "hole"):
        return "hole"
    raise ValueError(f"unknown carrier {c!r}")


@dataclass(frozen=True)
class DeviceGeometry:
    """Nanowire radius and ordered crystal-phase segments, padded with WZ at both ends."""

    radius: float
    segments: tuple[tuple[str, float], ...]
    padding: float = 50.0
    grid_step: float = 0.05

    def __post_init__(self):
        segs = tuple((str(p).upper(), float(l)) for p, l in self.segments)
        object.__setattr__(self, "segments", segs)
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if not segs:
            raise ValueError("geometry needs at least one segment")
        for p, l in segs:
            if p not in PHASES:
                raise ValueError(f"unknown crystal phase {p!r}")
            if l <= 0:
                raise ValueError("segment lengths must be positive")
        if self.padding < 0:
            raise ValueError("padding must be non-negative")
        if not 0 < self.grid_step <= 0.05 + 1e-15:
            raise ValueError("grid_step must lie in (0, 0.05] nm")

    @classmethod
    def double_dot(cls, l_zb1: float, l_wz: float, l_zb2: float, radius: float = 10.0, **kw) -> "DeviceGeometry":
        return cls(radius, (("ZB", l_zb1), ("WZ", l_wz), ("ZB", l_zb2)), **kw)

    @classmethod
    def single_dot(cls, length: float, radius: float = 10.0, **kw) -> "DeviceGeometry":
        return cls(radius, (("ZB", length),), **kw)

    @property
    def length(self) -> float:
        return sum(l for _, l in self.segments) + 2 * self.padding

    @property
    def edges(self) -> np.ndarray:
        """Segment boundaries including the padding, starting at 0."""
        lens = [self.padding] + [l for _, l in self.segments] + [self.padding]
        return np.cumsum([0.0] + lens)

    @property
    def phases(self) -> tuple[str, ...]:
        return ("WZ",) + tuple(p for p, _ in self.segments) + ("WZ",)

    def grid(self) -> np.ndarray:
        n = int(round(self.length / self.grid_step))
        return self.length * np.arange(1, n) / n

    def segment_bounds(self, i: int) -> tuple[float, float]:
        """Bounds of segment ``i`` (0-based, excluding padding)."""
        e = self.edges
        return float(e[i + 1]), float(e[i + 2])

    def potential(self, carrier: str, mat: MaterialParams, well_depth: float | None = None) -> np.ndarray:
        """Piecewise-constant potential on the grid; interface nodes get the cell-average value."""
        carrier = _carrier(carrier)
        well = "ZB" if carrier == "electron" else "WZ"
        depth = (mat.dc if carrier == "electron" else mat.dv) if well_depth is None else well_depth
        z = self.grid()
        h = self.length / (z.size + 1)
        e = self.edges
        V = np.zeros_like(z)
        lo = z - 0.5 * h
        hi = z + 0.5 * h
        for k, ph in enumerate(self.phases):
            if ph == well:
                continue
            overlap = np.clip(np.minimum(hi, e[k + 1]) - np.maximum(lo, e[k]), 0.0, None)
            V += depth * overlap / h
        return V


@dataclass(frozen=True)
class AxialMode:
    """Normalized axial envelope ``samples`` on ``z`` (nm); ``energy`` (meV) above the well bottom."""

    carrier: str
    z: np.ndarray
    samples: np.ndarray
    energy: float
    index: int
    barrier: float

    @property
    def bound(self) -> bool:
        return self.energy < self.barrier

    @property
    def step(self) -> float:
        return float(self.z[1] - self.z[0])

    def probability_in(self, a: float, b: float) -> float:
        m = (self.z >= a) & (self.z <= b)
        return float(np.sum(self.samples[m] ** 2) * self.step)

    def overlap(self, other: "AxialMode") -> float:
        if self.z.shape != other.z.shape or not np.allclose(self.z, other.z):
            raise ValueError("modes live on different grids")
        return float(np.sum(self.samples * other.samples) * self.step)


@dataclass(frozen=True)
class RadialMode:
    """Hard-wall cylinder mode ``R(r) ~ J_m(kappa r)``.

    ``energy`` follows the linear-in-zero form ``hbar^2 j / (2 m r^2)``;
    ``energy_quadratic`` is the textbook ``hbar^2 j^2 / (2 m r^2)``.
    """

    m: int
    l: int
    zero: float
    kappa: float
    radius: float
    mass: float
    energy: float
    energy_quadratic: float

    @property
    def norm(self) -> float:
        # int_0^r J_m(kappa r)^2 r dr = r^2 J_{m+1}(j)^2 / 2
        return 1.0 / math.sqrt(0.5 * self.radius**2 * special.jv(self.m + 1, self.zero) ** 2)

    def profile(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return np.where(r <= self.radius, self.norm * special.jv(self.m, self.kappa * r), 0.0)

    def energy_for(self, radial_mode: str) -> float:
        if radial_mode == "linear":
            return self.energy
        if radial_mode == "quadratic":
            return self.energy_quadratic
        raise ValueError("radial_mode must be 'linear' or 'quadratic'")


@dataclass(frozen=True)
class TransitionRecord:
    omega: float  # rad/ps
    energy: float  # meV
    dipole: float  # C nm
    rate: float  # 1/s
    axial_overlap: float


def bessel_zero(m: int, l: int) -> float:
    """``l``-th positive zero of ``J_m`` refined by bracketed root finding."""
    if l < 1 or m < 0:
        raise ValueError("need m >= 0 and l >= 1")
    guess = special.jn_zeros(m, l)[-1]
    return optimize.brentq(lambda x: special.jv(m, x), guess - 0.5, guess + 0.5, xtol=1e-15, rtol=1e-15)


def solve_radial(r_w: float, mass: float, m: int = 0, l: int = 1) -> RadialMode:
    if r_w <= 0:
        raise ValueError("radius must be positive")
    j = bessel_zero(m, l)
    base = HBAR_SQ_OVER_2M0 / mass / r_w**2
    return RadialMode(m, l, j, j / r_w, r_w, mass, base * j, base * j * j)


@numba.njit(cache=True)
def _recur(d, t, E):
    n = d.size
    x = np.empty(n)
    prev, cur = 0.0, 1e-280
    for i in range(n):
        x[i] = cur
        nxt = ((d[i] - E) * cur - t * prev) / t
        prev, cur = cur, nxt
        if abs(cur) > 1e200:
            x[: i + 1] *= 1e-200
            prev *= 1e-200
            cur *= 1e-200
    return x


def _shoot(diag: np.ndarray, t: float, E: float, reverse: bool) -> np.ndarray:
    """Solve the FD recurrence from one Dirichlet end (the stable, inward-growing direction)."""
    if reverse:
        return _recur(np.ascontiguousarray(diag[::-1]), t, E)[::-1]
    return _recur(diag, t, E)


def _refine(diag: np.ndarray, t: float, E: float, v: np.ndarray) -> np.ndarray:
    """Rebuild eigenvector tails to full relative precision.

    Dense eigensolvers resolve small components only to ~1e-16 of the peak;
    interdot overlaps of well-separated dots are far below that.
    """
    m = int(np.argmax(np.abs(v)))
    left = _shoot(diag, t, E, reverse=False)
    right = _shoot(diag, t, E, reverse=True)
    out = np.empty_like(v)
    out[: m + 1] = left[: m + 1] * (v[m] / left[m])
    out[m:] = right[m:] * (v[m] / right[m])
    return out


def solve_axial(
    geom: DeviceGeometry,
    mat: MaterialParams | None = None,
    carrier: str = "electron",
    n_modes: int = 4,
    well_depth: float | None = None,
    refine: bool = True,
) -> list[AxialMode]:
    """Lowest ``n_modes`` axial modes from a three-point finite-difference Hamiltonian.

    Parameters
    ----------
    geom : DeviceGeometry
    mat : MaterialParams, optional
    carrier : {"electron", "hole"}
    n_modes : int
    well_depth : float, optional
        Overrides the band offset (meV), e.g. for infinite-well checks.
    refine : bool
        Rebuild eigenvector tails by two-sided shooting at the computed eigenvalue.
    """
    mat = MaterialParams() if mat is None else mat
    carrier = _carrier(carrier)
    z = geom.grid()
    h = geom.length / (z.size + 1)
    V = geom.potential(carrier, mat, well_depth)
    t = HBAR_SQ_OVER_2M0 / mat.mass(carrier) / h**2
    diag = 2 * t + V
    w, v = eigh_tridiagonal(diag, -t * np.ones(z.size - 1), select="i", select_range=(0, n_modes - 1))
    barrier = float(V.max())
    modes = []
    for i in range(w.size):
        vec = v[:, i]
        if refine:
            vec = _refine(diag, -t, w[i], vec)
        vec = vec / math.sqrt(np.sum(vec**2) * h)
        k = int(np.argmax(np.abs(vec)))
        if vec[k] < 0:
            vec = -vec
        modes.append(AxialMode(carrier, z, vec, float(w[i]), i, barrier))
    if modes and not modes[0].bound:
        warnings.warn(f"no bound {carrier} state: ground energy lies above the barrier", stacklevel=2)
    return modes


def localized_mode(modes: Sequence[AxialMode], bounds: tuple[float, float], threshold: float = 0.5) -> AxialMode:
    """Lowest mode with more than ``threshold`` probability inside ``bounds``."""
    for m in modes:
        if m.probability_in(*bounds) > threshold:
            return m
    raise ValueError(f"no mode localized in [{bounds[0]:.1f}, {bounds[1]:.1f}] nm")


def qubit_modes(geom: DeviceGeometry, mat: MaterialParams | None = None, n_modes: int = 8):
    """Electron states ``|0>`` (first ZB dot), ``|1>`` (last ZB dot) and the hole between them.

    The hole is the lowest hole mode localized in the WZ segment between the
    two dots; the WZ padding can hold lower hole states that do not belong to
    the Lambda system.
    """
    mat = MaterialParams() if mat is None else mat
    zb = [i for i, (p, _) in enumerate(geom.segments) if p == "ZB"]
    if len(zb) < 2:
        raise ValueError("qubit_modes needs two ZB dots")
    ee = solve_axial(geom, mat, "electron", n_modes)
    e0 = localized_mode(ee, geom.segment_bounds(zb[0]))
    e1 = localized_mode(ee, geom.segment_bounds(zb[-1]))
    hh = solve_axial(geom, mat, "hole", n_modes)
    a = geom.segment_bounds(zb[0])[1]
    b = geom.segment_bounds(zb[-1])[0]
    h = localized_mode(hh, (a, b))
    return e0, e1, h


def transition(
    e_mode: AxialMode,
    h_mode: AxialMode,
    radius: float,
    mat: MaterialParams | None = None,
    radial_mode: str = "linear",
    include_refractive_index: bool = False,
) -> TransitionRecord:
    """Photon energy, dipole and spontaneous emission rate of an electron-hole pair.

    ``d^2 = e^2 M^2 <Z_e|Z_h>^2 / (m0^2 omega^2)`` and
    ``Gamma = d^2 omega^3 / (3 pi eps0 hbar c^3)`` (optionally times ``n``).
    """
    mat = MaterialParams() if mat is None else mat
    if e_mode.carrier != "electron" or h_mode.carrier != "hole":
        raise ValueError("transition needs an electron mode and a hole mode")
    ov = e_mode.overlap(h_mode)
    er_e = solve_radial(radius, mat.m_e).energy_for(radial_mode)
    er_h = solve_radial(radius, mat.m_h).energy_for(radial_mode)
    E_e = e_mode.energy - mat.dc + er_e
    E_h = h_mode.energy + er_h
    hw = mat.E_g_WZ + E_e + E_h
    return transition_from(hw, ov, mat, include_refractive_index)


def transition_from(energy_mev: float, overlap: float, mat: MaterialParams | None = None, include_refractive_index: bool = False) -> TransitionRecord:
    mat = MaterialParams() if mat is None else mat
    omega_si = energy_mev * 1e-3 * const.e / const.hbar
    d2 = const.e**2 * (mat.M2 * const.e) / (const.m_e * omega_si**2) * overlap**2
    rate = d2 * omega_si**3 / (3 * math.pi * const.epsilon_0 * const.hbar * const.c**3)
    if include_refractive_index:
        rate *= mat.n_refr
    return TransitionRecord(energy_mev * MEV_TO_RAD_PS, energy_mev, math.sqrt(d2) * 1e9, rate, overlap)


def qubit_transitions(geom: DeviceGeometry, mat: MaterialParams | None = None, **kw) -> tuple[TransitionRecord, TransitionRecord]:
    """Emission records for ``|0> <-> |h>`` and ``|1> <-> |h>``."""
    e0, e1, h = qubit_modes(geom, mat)
    return transition(e0, h, geom.radius, mat, **kw), transition(e1, h, geom.radius, mat, **kw)


EMISSION_HEADER = ("l_zb1_nm", "l_wz_nm", "l_zb2_nm", "state", "energy_meV", "axial_overlap", "dipole_C_nm", "rate_per_s")


def emission_sweep(
    l_zb1: Sequence[float] = tuple(np.linspace(20, 50, 7)),
    l_wz: Sequence[float] = tuple(np.linspace(50, 200, 7)),
    l_zb2: float = 19.0,
    radius: float = 10.0,
    mat: MaterialParams | None = None,
    **kw,
) -> list[dict]:
    """Emission rates of both qubit transitions over a grid of dot and barrier lengths."""
    rows = []
    for a in l_zb1:
        for b in l_wz:
            geom = DeviceGeometry.double_dot(float(a), float(b), l_zb2, radius)
            for label, rec in zip(("0", "1"), qubit_transitions(geom, mat, **kw)):
                rows.append(
                    dict(zip(EMISSION_HEADER, (float(a), float(b), float(l_zb2), label, rec.energy, rec.axial_overlap, rec.dipole, rec.rate)))
                )
    return rows
