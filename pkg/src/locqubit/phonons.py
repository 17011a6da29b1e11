"""Electron-phonon quantities for bulk longitudinal-acoustic phonons with deformation-potential coupling.

Coupling to phonon mode ``k``: ``g_k = sqrt(hbar k / (2 rho c_s V)) D <a|e^{ik.r}|b>``.
In every continuum limit the quantization volume cancels and the results
reduce to one-dimensional integrals over ``|k|`` of the shell average

    A(k) = integral dOmega |<a|e^{ik.r}|b>|^2.

Reduced forms used here (SI units, ``n`` the Bose occupation of ``hbar c_s k``):

* emission rate: ``D^2 k*^3 A(k*) (n + 1) / (8 pi^2 rho c_s^2 hbar)`` with ``k* = dE / (hbar c_s)``
* spectral density: ``J(nu) = D^2 k^3 A(k) / (2 rho c_s^2 hbar (2 pi)^3)`` at ``k = nu / c_s``
* pure dephasing through the lowest excited state (elastic shell ``|k| = |k'|``):
  ``gamma = 2 pi D^4 / (c_s (2 pi)^6 (2 rho c_s hbar)^2 dw^2) integral dk k^6 A(k)^2 n (n + 1)``

Form factors factorize as ``F_perp(|k_perp|) F_z(k_z)`` because both states
share the radial ground mode.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import constants as const
from scipy import special
from scipy.interpolate import CubicSpline

from .nanowire import AxialMode, DeviceGeometry, MaterialParams, bessel_zero, solve_axial
from .units import KB_MEV_PER_K

NM = 1e-9


@dataclass(frozen=True)
class PhononBathParams:
    """Deformation constant (eV), mass density (kg/m^3), sound speed (m/s) and temperature (K).

    Defaults are literature values for InP; none are given with the device model.
    """

    De: float = 6.0
    rho_mass: float = 4810.0
    cs: float = 4594.0
    T: float = 4.0

    def __post_init__(self):
        if self.De < 0 or self.rho_mass <= 0 or self.cs <= 0 or self.T < 0:
            raise ValueError("bath parameters must be positive (De, T may be zero)")

    @property
    def hbar_cs_mev_nm(self) -> float:
        """``hbar c_s`` in meV nm."""
        return const.hbar * self.cs / const.e * 1e3 / NM

    def with_T(self, T: float) -> "PhononBathParams":
        return PhononBathParams(self.De, self.rho_mass, self.cs, T)


def bose(energy_mev, T: float):
    """Bose-Einstein occupation ``1 / (exp(E / k_B T) - 1)``; zero at ``T = 0``."""
    e = np.asarray(energy_mev, dtype=float)
    if T <= 0:
        out = np.zeros_like(e)
    else:
        with np.errstate(over="ignore", divide="ignore"):
            out = 1.0 / np.expm1(e / (KB_MEV_PER_K * T))
    return float(out) if out.ndim == 0 else out


def _radial_density(radius: float, n: int = 64):
    """Gauss-Legendre nodes and weights of ``|R(r)|^2 r dr`` for the radial ground mode."""
    j = bessel_zero(0, 1)
    x, w = np.polynomial.legendre.leggauss(n)
    r = 0.5 * radius * (x + 1)
    wr = 0.5 * radius * w
    dens = special.j0(j * r / radius) ** 2 * r * wr
    return r, dens / dens.sum()


class FormFactorTable:
    """Tabulated ``F_z(k_z)`` and ``F_perp(k_perp)`` for one pair of states.

    ``density`` selects the axial product: ``Z_a Z_b`` for a matrix element,
    or a caller-supplied array (e.g. ``Z_b^2 - Z_a^2``).

    Parameters
    ----------
    a, b : AxialMode
    radius : float
        Wire radius (nm).
    k_max : float
        Largest tabulated wavevector (1/nm).
    stride : int
        Subsampling of the axial grid for the Fourier sums.
    """

    def __init__(self, a: AxialMode, b: AxialMode | None, radius: float, k_max: float = 8.0,
                 stride: int = 2, density: np.ndarray | None = None, pts_per_period: int = 16):
        if b is not None and (a.z.shape != b.z.shape or not np.allclose(a.z, b.z)):
            raise ValueError("form factor needs both states on the same grid")
        prod = a.samples * b.samples if density is None else np.asarray(density, dtype=float)
        z = a.z
        h = a.step
        big = np.abs(prod) > 1e-14 * np.abs(prod).max() if np.any(prod) else np.ones_like(prod, bool)
        i0, i1 = np.argmax(big), big.size - np.argmax(big[::-1])
        sl = slice(max(i0 - 1, 0), min(i1 + 1, z.size))
        zs, ps = z[sl][::stride], prod[sl][::stride] * h * stride
        self.center = 0.5 * (zs[0] + zs[-1])
        self.half_extent = max(0.5 * (zs[-1] - zs[0]), 1.0)
        self.radius = radius
        self.k_max = k_max
        self.overlap0 = float(np.sum(prod) * h)
        dk = 2 * np.pi / (2 * self.half_extent) / pts_per_period
        kz = np.linspace(0.0, k_max, int(np.ceil(k_max / dk)) + 1)
        fz = np.empty(kz.size, dtype=complex)
        zc = zs - self.center
        for s in range(0, kz.size, 512):
            fz[s:s + 512] = np.exp(1j * np.outer(kz[s:s + 512], zc)) @ ps
        self.kz = kz
        self.Fz = fz
        self._fz_re = CubicSpline(kz, fz.real)
        self._fz_im = CubicSpline(kz, fz.imag)
        r, dens = _radial_density(radius)
        kp = np.linspace(0.0, k_max, 2001)
        self.kp = kp
        self.Fperp = special.j0(np.outer(kp, r)) @ dens
        self._fp = CubicSpline(kp, self.Fperp)

    def fz(self, kz) -> np.ndarray:
        """Axial factor in coordinates centred on the density (``|F_z|`` is origin independent)."""
        kz = np.asarray(kz, dtype=float)
        a = np.abs(kz)
        if np.any(a > self.k_max * (1 + 1e-12)):
            raise ValueError("k_z beyond the tabulated range")
        v = self._fz_re(a) + 1j * self._fz_im(a)
        return np.where(kz < 0, np.conj(v), v)

    def fperp(self, kp) -> np.ndarray:
        kp = np.asarray(kp, dtype=float)
        if np.any(kp > self.k_max * (1 + 1e-12)):
            raise ValueError("k_perp beyond the tabulated range")
        return self._fp(kp)

    def __call__(self, k) -> complex:
        """``F(k)`` for a wavevector ``(kx, ky, kz)`` in 1/nm, origin at the grid start."""
        kx, ky, kz = k
        return complex(self.fperp(math.hypot(kx, ky)) * self.fz(kz) * np.exp(1j * kz * self.center))

    def shell_average(self, k) -> np.ndarray:
        """``A(k) = integral dOmega |F|^2`` at each ``|k|`` (1/nm).

        Gauss-Legendre in ``u = cos(theta)`` with enough nodes to resolve the
        ``k * extent`` oscillations of the axial factor.
        """
        ks = np.atleast_1d(np.asarray(k, dtype=float))
        out = np.empty(ks.size)
        order = np.argsort(ks)
        for chunk in np.array_split(order, max(1, ks.size // 64)):
            kk = ks[chunk]
            n = int(kk.max() * self.half_extent) + 32
            x, w = _leggauss01(n)
            fz = self.fz(np.outer(kk, x))
            fp = self.fperp(np.outer(kk, np.sqrt(1 - x * x)))
            out[chunk] = 4 * np.pi * (np.abs(fp * fz) ** 2 @ w)
        return out if np.ndim(k) else float(out[0])


@lru_cache(maxsize=256)
def _leggauss01(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1), 0.5 * w


def form_factor(a: AxialMode, b: AxialMode, k, radius: float) -> complex:
    """``<a|exp(i k.r)|b>`` by direct quadrature (k in 1/nm, axial origin at the grid start)."""
    kx, ky, kz = k
    r, dens = _radial_density(radius)
    fp = float(special.j0(math.hypot(kx, ky) * r) @ dens)
    fz = np.sum(a.samples * b.samples * np.exp(1j * kz * a.z)) * a.step
    return complex(fp * fz)


def _coupling_density(a: AxialMode, b: AxialMode, coupling: str) -> np.ndarray:
    if coupling == "transition":
        return a.samples * b.samples
    if coupling == "displacement":
        return b.samples**2 - a.samples**2
    raise ValueError("coupling must be 'transition' or 'displacement'")


def phonon_emission_rate(psi_i: AxialMode, psi_f: AxialMode, dE: float, bath: PhononBathParams,
                         radius: float = 10.0, absorption: bool = False) -> float:
    """Golden-rule rate (1/s) for ``psi_i -> psi_f`` with emission of a phonon of energy ``dE`` meV.

    ``absorption=True`` gives the reverse process rate, which carries ``n``
    instead of ``n + 1``.
    """
    if dE <= 0:
        raise ValueError("phonon emission needs dE > 0")
    k_nm = dE / bath.hbar_cs_mev_nm
    table = FormFactorTable(psi_i, psi_f, radius, k_max=max(1.0, 1.2 * k_nm))
    A = table.shell_average(k_nm)
    n = bose(dE, bath.T)
    occ = n if absorption else n + 1.0
    D = bath.De * const.e
    k = k_nm / NM
    return float(D**2 * k**3 * A * occ / (8 * np.pi**2 * bath.rho_mass * bath.cs**2 * const.hbar))


def phonon_absorption_rate(psi_i, psi_f, dE, bath, radius: float = 10.0) -> float:
    return phonon_emission_rate(psi_i, psi_f, dE, bath, radius, absorption=True)


def _k_quadrature(f: Callable[[np.ndarray], np.ndarray], k_start: float, panel: float,
                  k_cap: float, rel_tail: float = 1e-7, nodes: int = 16):
    """Integrate ``f`` over ``[0, inf)`` with Gauss-Legendre panels until the tail is negligible."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    total = 0.0
    a = 0.0
    ks, vals, wts = [], [], []
    while a < k_cap:
        b = min(a + panel, k_cap)
        kk = a + 0.5 * (b - a) * (x + 1)
        ww = 0.5 * (b - a) * w
        v = f(kk)
        part = float(np.sum(ww * v))
        total += part
        ks.append(kk)
        vals.append(v)
        wts.append(ww)
        a = b
        if a >= k_start and abs(part) <= rel_tail * abs(total):
            break
    else:
        if abs(part) > 1e-3 * abs(total):
            raise ArithmeticError("k-space integral did not converge within the tabulated range")
    return total, np.concatenate(ks), np.concatenate(vals), np.concatenate(wts)


@dataclass(frozen=True)
class SpectralDensity:
    """Phonon spectral density ``J`` (rad/s) sampled at angular frequencies ``nu`` (rad/s)."""

    nu: np.ndarray
    values: np.ndarray
    weights: np.ndarray


def _k_start(T: float, bath: PhononBathParams, L_min: float) -> float:
    k_th = KB_MEV_PER_K * T / bath.hbar_cs_mev_nm
    return max(15.0 / L_min, 10.0 * k_th)


def spectral_density(a: AxialMode, b: AxialMode, bath: PhononBathParams, radius: float = 10.0,
                     coupling: str = "displacement", L_min: float | None = None,
                     k_cap: float = 8.0) -> SpectralDensity:
    """Spectral density of the coupling distinguishing ``a`` from ``b``.

    ``coupling="displacement"`` uses the difference of the diagonal form
    factors (the shift of the lattice equilibrium between the two charge
    configurations); ``"transition"`` uses the off-diagonal ``<b|e^{ik.r}|a>``.
    """
    table = FormFactorTable(a, None, radius, k_max=k_cap, density=_coupling_density(a, b, coupling))
    L = L_min if L_min is not None else 2 * table.half_extent
    D = bath.De * const.e
    pref = D**2 / (2 * bath.rho_mass * bath.cs**2 * const.hbar * (2 * np.pi) ** 3)

    def jk(k_nm):
        k = k_nm / NM
        return pref * k**3 * table.shell_average(k_nm)

    panel = min(0.5 * np.pi / table.half_extent * 4, 0.2)
    _, ks, vals, wts = _k_quadrature(lambda k: jk(k) / np.maximum(k, 1e-300) ** 2, _k_start(0.0, bath, L), panel, k_cap)
    nu = bath.cs * ks / NM
    J = jk(ks)
    return SpectralDensity(nu, J, wts * bath.cs / NM)


def franck_condon(a: AxialMode, b: AxialMode, bath: PhononBathParams, T: float | None = None,
                  radius: float = 10.0, coupling: str = "displacement", sd: SpectralDensity | None = None) -> float:
    """``B = exp(-1/2 integral J(nu) / nu^2 coth(hbar nu / 2 k_B T) dnu)``."""
    T = bath.T if T is None else T
    sd = spectral_density(a, b, bath, radius, coupling) if sd is None else sd
    x = const.hbar * sd.nu / (2 * const.k * T) if T > 0 else np.full(sd.nu.shape, np.inf)
    with np.errstate(over="ignore"):
        coth = np.where(x > 40, 1.0, 1.0 / np.tanh(np.minimum(x, 40)))
    S = float(np.sum(sd.weights * sd.values / sd.nu**2 * coth))
    if not np.isfinite(S):
        raise ArithmeticError("Franck-Condon exponent diverged; refine the spectral-density grid")
    return math.exp(-0.5 * S)


@dataclass(frozen=True)
class DephasingResult:
    gamma_dp: float  # 1/s
    tau_dp: float  # s
    T: float
    geometry: DeviceGeometry
    gap_mev: float


def dephasing_rate(geom: DeviceGeometry, bath: PhononBathParams, T: float | None = None,
                   mat: MaterialParams | None = None, k_cap: float = 8.0) -> DephasingResult:
    """Pure-dephasing rate from virtual phonon scattering through the first excited axial mode."""
    T = bath.T if T is None else T
    mat = MaterialParams() if mat is None else mat
    z0, z1 = solve_axial(geom, mat, "electron", 2)
    gap = z1.energy - z0.energy
    if T > 0 and gap < 10 * KB_MEV_PER_K * T:
        warnings.warn(
            f"level gap {gap:.2f} meV is below 10 k_B T; the virtual-transition approximation breaks down",
            stacklevel=2,
        )
    if T <= 0 or bath.De == 0:
        return DephasingResult(0.0, math.inf, T, geom, gap)
    table = FormFactorTable(z0, z1, geom.radius, k_max=k_cap)
    dw = gap * 1e-3 * const.e / const.hbar
    D = bath.De * const.e
    pref = 2 * np.pi * D**4 / (bath.cs * (2 * np.pi) ** 6 * (2 * bath.rho_mass * bath.cs * const.hbar) ** 2 * dw**2)

    def f(k_nm):
        n = bose(bath.hbar_cs_mev_nm * k_nm, T)
        k = k_nm / NM
        return k**6 * table.shell_average(k_nm) ** 2 * n * (n + 1) / NM

    L_min = min(l for _, l in geom.segments)
    k_th = KB_MEV_PER_K * T / bath.hbar_cs_mev_nm
    panel = min(0.25 * np.pi / table.half_extent, 0.5 * k_th + 1e-3)
    integral, *_ = _k_quadrature(f, max(15.0 / L_min, 10.0 * k_th), panel, k_cap)
    gamma = pref * integral
    return DephasingResult(gamma, 1.0 / gamma if gamma > 0 else math.inf, T, geom, gap)
