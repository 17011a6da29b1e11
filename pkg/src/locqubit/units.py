"""Physical constants and unit conversions.

Internal units: time in ps, energies as angular frequencies in rad/ps (hbar = 1).
Device physics works in nm and meV and converts at the boundary.
"""

from scipy import constants as _c

HBAR_MEV_PS = _c.hbar / _c.e * 1e3 * 1e12  # 0.6582119569 meV ps
MEV_TO_RAD_PS = 1.0 / HBAR_MEV_PS
HBAR_SQ_OVER_2M0 = _c.hbar**2 / (2 * _c.m_e) / _c.e * 1e3 * 1e18  # meV nm^2
KB_MEV_PER_K = _c.k / _c.e * 1e3

PER_S_TO_PER_PS = 1e-12


def mev_to_rad_ps(energy_mev):
    return energy_mev * MEV_TO_RAD_PS


def rad_ps_to_mev(omega):
    return omega * HBAR_MEV_PS


def ghz_to_rad_ps(f_ghz):
    """Convert an ordinary frequency in GHz to an angular frequency in rad/ps."""
    return 2 * _c.pi * f_ghz * 1e-3
