"""Experiment runners behind the command line: config in, tables and scalar summary out."""

from __future__ import annotations

import csv
import json
import math
import platform
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from . import lambda_control as lc
from . import nanowire as nw
from . import phonons as ph
from . import register as rg
from .config import ConfigError, config_hash, quantity, values
from .lindblad import DecoherenceRates, IntegratorConfig
from .qcore import random_rotation_targets, superposition_ket

TRAJECTORY_HEADER = ("t_ps", "p_0", "p_X", "p_1", "fidelity")
SYNTHESIS_HEADER = ("alpha_rad", "beta_rad", "gamma_rad", "delta_rad_per_ps", "omega_rms_max_rad_per_ps",
                    "sigma_p_ps", "pulse_area", "delta_over_omega")
ROTATION_ANGLE_HEADER = ("delta_over_omega", "gamma_rad")
SURFACE_HEADER = ("mu_rad", "nu_rad", "fidelity")
CNOT_HEADER = ("t_ps", "p_00", "p_01", "p_10", "p_11", "p_excited", "fidelity")
CNOT_STATE_HEADER = ("basis", "re", "im")
DEPHASING_HEADER = ("dot_length_nm", "T_K", "gap_meV", "gamma_dp_per_s", "tau_dp_s")
PHONON_HEADER = ("l_zb1_nm", "l_zb2_nm", "separation_nm", "T_K", "dE_meV", "rate_per_s", "lifetime_s")
FC_HEADER = ("l_zb1_nm", "l_wz_nm", "l_zb2_nm", "T_K", "B")


@dataclass
class Table:
    name: str
    header: tuple[str, ...]
    rows: list[tuple]


@dataclass
class ReportBundle:
    """Tables, a flat scalar summary and run metadata for one experiment."""

    experiment: str
    tables: list[Table]
    summary: dict
    metadata: dict = field(default_factory=dict)

    def write(self, out_dir: str | Path) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        for t in self.tables:
            p = out / f"{t.name}.csv"
            with p.open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(t.header)
                w.writerows(tuple(_cell(v) for v in row) for row in t.rows)
            paths.append(p)
        for name, obj in (("summary", self.summary), ("metadata", self.metadata)):
            p = out / f"{name}.json"
            p.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
            paths.append(p)
        return paths


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _scalar(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


# ---- section parsers ----------------------------------------------------


def _gate_target(raw: dict, rng: np.random.Generator):
    g = raw.get("gate", {"name": "X"})
    name = g.get("name")
    if name is not None and name.lower() == "random":
        return random_rotation_targets(1, rng)[0]
    if name is not None:
        if "axis" in g or "angle" in g:
            raise ConfigError("gate: give either a name or an axis and angle")
        try:
            return lc.standard_gate(name)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"gate: {exc}") from None
    if "axis" not in g or "angle" not in g:
        raise ConfigError("gate: needs a name or both axis and angle")
    axis = [quantity(a, "dimensionless", "gate/axis") for a in g["axis"]]
    angle = quantity(g["angle"], "angle", "gate/angle")
    try:
        return lc.standard_gate("arbitrary", axis, angle)
    except ValueError as exc:
        raise ConfigError(f"gate: {exc}") from None


def _pulse(raw: dict) -> dict:
    p = raw.get("pulse", {})
    sigma = quantity(p["sigma_p"], "time", "pulse/sigma_p") if "sigma_p" in p else lc.DEFAULT_SIGMA_P
    if "omega_rms_max" in p and "pulse_area" in p:
        raise ConfigError("pulse: give omega_rms_max or pulse_area, not both")
    if "omega_rms_max" in p:
        omega = quantity(p["omega_rms_max"], "angular_frequency", "pulse/omega_rms_max")
    else:
        area = quantity(p.get("pulse_area", lc.A_MIN), "dimensionless", "pulse/pulse_area")
        omega = lc.default_omega(sigma, area)
    floor = quantity(p.get("detuning_floor", lc.DETUNING_FLOOR), "dimensionless", "pulse/detuning_floor")
    if sigma <= 0 or omega <= 0:
        raise ConfigError("pulse: sigma_p and the Rabi frequency must be positive")
    return {"sigma_p": sigma, "omega_rms_max": omega, "floor": floor}


def _rates(raw: dict, default: str = "none") -> DecoherenceRates:
    d = raw.get("decoherence", {})
    base = DecoherenceRates.realistic() if d.get("preset", default) == "realistic" else DecoherenceRates.none()
    kw = {k: quantity(d[k], "rate", f"decoherence/{k}") for k in ("gamma_sp_0", "gamma_sp_1", "gamma_dp") if k in d}
    try:
        return replace(base, **kw)
    except ValueError as exc:
        raise ConfigError(f"decoherence: {exc}") from None


def _integrator(raw: dict) -> dict:
    i = raw.get("integrator", {})
    kw = {k: float(i[k]) for k in ("rtol", "atol") if k in i}
    if "max_step" in i:
        kw["max_step"] = quantity(i["max_step"], "time", "integrator/max_step")
        if kw["max_step"] <= 0:
            raise ConfigError("integrator/max_step must be positive")
    return kw


def _material(raw: dict) -> nw.MaterialParams:
    m = raw.get("material", {})
    dims = {"m_e": "mass", "m_h": "mass", "E_g_ZB": "energy", "E_g_WZ": "energy", "dc": "energy", "dv": "energy",
            "M2": "dimensionless", "n_refr": "dimensionless"}
    kw = {k: quantity(v, dims[k], f"material/{k}") for k, v in m.items()}
    try:
        return nw.MaterialParams(**kw)
    except ValueError as exc:
        raise ConfigError(f"material: {exc}") from None


def _bath(raw: dict) -> ph.PhononBathParams:
    b = raw.get("bath", {})
    dims = {"De": "energy", "rho_mass": "density", "cs": "speed", "T": "temperature"}
    kw = {k: quantity(v, dims[k], f"bath/{k}") for k, v in b.items()}
    if "De" in kw:
        kw["De"] *= 1e-3  # meV -> eV
    try:
        return ph.PhononBathParams(**kw)
    except ValueError as exc:
        raise ConfigError(f"bath: {exc}") from None


def _temperatures(raw: dict, bath: ph.PhononBathParams) -> list[float]:
    if "temperatures" in raw:
        ts = values(raw["temperatures"], "temperature", "temperatures")
    else:
        ts = [bath.T]
    if any(t < 0 for t in ts):
        raise ConfigError("temperatures must be non-negative")
    return ts


def _radius(raw: dict) -> float:
    o = raw.get("options", {})
    r = quantity(o["radius"], "length", "options/radius") if "radius" in o else 10.0
    if r <= 0:
        raise ConfigError("options/radius must be positive")
    return r


def _pmap(fn: Callable, items: Sequence, threads: int) -> list:
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


# ---- experiments ----------------------------------------------------------


def _synthesize(raw: dict, rng) -> lc.GateSpec:
    target = _gate_target(raw, rng)
    p = _pulse(raw)
    return lc.synthesize_gate(target, p["omega_rms_max"], p["sigma_p"], floor=p["floor"])


def _spec_row(spec: lc.GateSpec) -> tuple:
    return (spec.alpha, spec.beta, spec.gamma, spec.delta, spec.omega_rms_max, spec.sigma_p, spec.pulse_area,
            spec.delta / spec.omega_rms_max)


def _spec_summary(spec: lc.GateSpec) -> dict:
    return dict(zip(SYNTHESIS_HEADER, _spec_row(spec)))


def gate_sim(raw: dict, rng, threads: int) -> ReportBundle:
    spec = _synthesize(raw, rng)
    s = raw.get("initial_state", {})
    mu = quantity(s.get("mu", "0 rad"), "angle", "initial_state/mu")
    nu = quantity(s.get("nu", "0 rad"), "angle", "initial_state/nu")
    n_out = raw.get("integrator", {}).get("n_out", 201)
    t0, t1 = spec.window
    cfg = IntegratorConfig.for_span(t0, t1, spec.sigma_p, n_out=n_out, **_integrator(raw))
    traj = lc.simulate_gate(spec, superposition_ket(mu, nu), _rates(raw), cfg)
    pops = traj.populations
    rows = [(t, *p, f) for t, p, f in zip(traj.times, pops, traj.fidelity)]
    summary = {
        "final_fidelity": traj.fidelity[-1],
        "final_p_0": pops[-1, 0],
        "final_p_X": pops[-1, 1],
        "final_p_1": pops[-1, 2],
        "max_p_X": pops[:, 1].max(),
        "duration_ps": t1 - t0,
        **_spec_summary(spec),
    }
    return ReportBundle("gate-sim", [Table("trajectory", TRAJECTORY_HEADER, rows)], summary)


def gate_synth(raw: dict, rng, threads: int) -> ReportBundle:
    spec = _synthesize(raw, rng)
    tables = [Table("synthesis", SYNTHESIS_HEADER, [_spec_row(spec)])]
    summary = _spec_summary(spec)
    sweep = raw.get("sweep", {})
    if "ratio" in sweep:
        ratios = values(sweep["ratio"], "dimensionless", "sweep/ratio")
        if any(r < 0 for r in ratios):
            raise ConfigError("sweep/ratio must be non-negative")
        om, sg = spec.omega_rms_max, spec.sigma_p
        gam = _pmap(lambda r: lc.rotation_angle(om, sg, r * om), ratios, threads)
        tables.append(Table("rotation_angle", ROTATION_ANGLE_HEADER, list(zip(ratios, gam))))
        summary["gamma_at_min_ratio"] = gam[0]
        summary["gamma_at_max_ratio"] = gam[-1]
    return ReportBundle("gate-synth", tables, summary)


def fidelity_sweep(raw: dict, rng, threads: int) -> ReportBundle:
    spec = _synthesize(raw, rng)
    sweep = raw.get("sweep", {})
    t0, t1 = spec.window
    cfg = IntegratorConfig.for_span(t0, t1, spec.sigma_p, n_out=2, **_integrator(raw))
    mu, nu, fid = lc.fidelity_surface(spec, _rates(raw, "realistic"), sweep.get("n_mu", 21), sweep.get("n_nu", 21), cfg)
    rows = [(m, n, fid[i, j]) for i, m in enumerate(mu) for j, n in enumerate(nu)]
    i, j = np.unravel_index(np.argmin(fid), fid.shape)
    summary = {
        "min_fidelity": fid.min(),
        "max_fidelity": fid.max(),
        "mean_fidelity": fid.mean(),
        "argmin_mu_rad": mu[i],
        "argmin_nu_rad": nu[j],
        **_spec_summary(spec),
    }
    return ReportBundle("fidelity-sweep", [Table("surface", SURFACE_HEADER, rows)], summary)


def _amplitude(v, where: str) -> complex:
    if isinstance(v, list):
        if len(v) != 2:
            raise ConfigError(f"{where}: complex amplitudes are [re, im]")
        return complex(quantity(v[0], "dimensionless", where), quantity(v[1], "dimensionless", where))
    return complex(quantity(v, "dimensionless", where))


def cnot_sim(raw: dict, rng, threads: int) -> ReportBundle:
    c = raw.get("cnot", {})
    s = raw.get("initial_state", {})
    amps = [_amplitude(a, "initial_state/amplitudes") for a in s.get("amplitudes", [0, 0, 1, 0])]
    if not any(amps):
        raise ConfigError("initial_state/amplitudes must not all vanish")
    shift_kw = {k: quantity(c[k], "angular_frequency", f"cnot/{k}") for k in ("s0", "sX", "s1", "residual") if k in c}
    if "symmetric" in c:
        shift_kw["symmetric"] = c["symmetric"]
    shifts = rg.CoulombShiftModel(**shift_kw)
    sched_kw = {k: quantity(c[k], "time", f"cnot/{k}") for k in ("sigma_control", "sigma_target", "gap") if k in c}
    sched = rg.schedule_cnot(shifts, calibrate=c.get("calibrate", True), **sched_kw)
    n_out = raw.get("integrator", {}).get("n_out", 401)
    cfg = IntegratorConfig(**_integrator(raw))
    psi = rg.computational_ket(amps)
    traj = rg.simulate_cnot(psi, sched, shifts, _rates(raw), cfg, n_out=n_out)
    pops = traj.populations
    comp = pops[:, list(rg.COMPUTATIONAL)]
    rows = [(t, *p, 1.0 - p.sum(), f) for t, p, f in zip(traj.times, comp, traj.fidelity)]
    # final computational amplitudes, global phase fixed on the largest component
    w, v = np.linalg.eigh(traj.final)
    top = v[:, -1][list(rg.COMPUTATIONAL)]
    k = int(np.argmax(np.abs(top)))
    top = top * np.exp(-1j * np.angle(top[k]))
    labels = ("00", "01", "10", "11")
    state_rows = [(lab, a.real, a.imag) for lab, a in zip(labels, top)]
    hist = sched.calibration.get("conditional_phase_history", [])
    summary = {
        "final_fidelity": traj.fidelity[-1],
        "final_excited_population": rows[-1][5],
        "duration_ps": sched.duration,
        "alpha2_rad": sched.step2.alpha,
        "virtual_z_control_rad": sched.virtual_z[0],
        "virtual_z_target_rad": sched.virtual_z[1],
        "residual_conditional_phase_rad": hist[-1] if hist else 0.0,
        "final_top_eigenvalue": w[-1],
    }
    tables = [Table("trajectory", CNOT_HEADER, rows), Table("final_state", CNOT_STATE_HEADER, state_rows)]
    return ReportBundle("cnot-sim", tables, summary)


def _double_dot(raw: dict) -> tuple[float, float, float, float]:
    g = raw["geometry"]
    segs = [(s["phase"], quantity(s["length"], "length", "geometry/segments")) for s in g["segments"]]
    if [p for p, _ in segs] != ["ZB", "WZ", "ZB"]:
        raise ConfigError("geometry: emission rates need segments ZB, WZ, ZB")
    r = quantity(g["radius"], "length", "geometry/radius") if "radius" in g else 10.0
    return segs[0][1], segs[1][1], segs[2][1], r


def rates_emission(raw: dict, rng, threads: int) -> ReportBundle:
    mat = _material(raw)
    o = raw.get("options", {})
    kw = {"radial_mode": o.get("radial_mode", "linear"), "include_refractive_index": o.get("include_refractive_index", False)}
    sweep = raw.get("sweep", {})
    if "geometry" in raw:
        if any(k in sweep for k in ("l_zb1", "l_wz", "l_zb2")):
            raise ConfigError("rates-emission: give a geometry or a sweep, not both")
        a, b, c, r = _double_dot(raw)
        grid = [(a, b)]
    else:
        l1 = values(sweep.get("l_zb1", {"from": "20 nm", "to": "50 nm", "points": 7}), "length", "sweep/l_zb1")
        lw = values(sweep.get("l_wz", {"from": "50 nm", "to": "200 nm", "points": 7}), "length", "sweep/l_wz")
        c = quantity(sweep.get("l_zb2", "19 nm"), "length", "sweep/l_zb2")
        r = _radius(raw)
        grid = [(a, b) for a in l1 for b in lw]

    def one(ab):
        return nw.emission_sweep([ab[0]], [ab[1]], c, r, mat, **kw)

    rows = [tuple(d[h] for h in nw.EMISSION_HEADER) for chunk in _pmap(one, grid, threads) for d in chunk]
    rates = [row[-1] for row in rows]
    summary = {"min_rate_per_s": min(rates), "max_rate_per_s": max(rates), "n_rows": len(rows)}
    if len(grid) == 1:
        summary["rate_0_per_s"], summary["rate_1_per_s"] = rates
        summary["energy_0_meV"], summary["energy_1_meV"] = rows[0][4], rows[1][4]
    return ReportBundle("rates-emission", [Table("emission", nw.EMISSION_HEADER, rows)], summary)


def rates_dephasing(raw: dict, rng, threads: int) -> ReportBundle:
    bath = _bath(raw)
    mat = _material(raw)
    r = _radius(raw)
    lengths = values(raw.get("sweep", {}).get("dot_lengths", ["20 nm"]), "length", "sweep/dot_lengths")
    temps = _temperatures(raw, bath)
    items = [(L, T) for L in lengths for T in temps]

    def one(item):
        L, T = item
        res = ph.dephasing_rate(nw.DeviceGeometry.single_dot(L, r), bath, T, mat)
        return (L, T, res.gap_mev, res.gamma_dp, res.tau_dp)

    rows = _pmap(one, items, threads)
    taus = [row[4] for row in rows]
    summary = {"min_tau_dp_s": min(taus), "max_tau_dp_s": max(taus), "n_rows": len(rows)}
    if len(rows) == 1:
        summary["gamma_dp_per_s"], summary["tau_dp_s"] = rows[0][3], rows[0][4]
    return ReportBundle("rates-dephasing", [Table("dephasing", DEPHASING_HEADER, rows)], summary)


def phonon_lifetime(l_zb1: float, sep: float, l_zb2: float, bath: ph.PhononBathParams, T: float,
                    radius: float = 10.0, mat: nw.MaterialParams | None = None) -> tuple[float, float]:
    """Energy gap (meV) and phonon-emission rate (1/s) between the two dot ground states."""
    geom = nw.DeviceGeometry.double_dot(l_zb1, sep, l_zb2, radius)
    modes = nw.solve_axial(geom, mat, "electron", 4)
    a = nw.localized_mode(modes, geom.segment_bounds(0))
    b = nw.localized_mode(modes, geom.segment_bounds(2))
    hi, lo = (a, b) if a.energy > b.energy else (b, a)
    dE = hi.energy - lo.energy
    return dE, ph.phonon_emission_rate(hi, lo, dE, bath.with_T(T), radius)


def rates_phonon(raw: dict, rng, threads: int) -> ReportBundle:
    bath = _bath(raw)
    mat = _material(raw)
    r = _radius(raw)
    sweep = raw.get("sweep", {})
    l1 = values(sweep.get("l_zb1", ["20 nm"]), "length", "sweep/l_zb1")
    l2 = quantity(sweep.get("l_zb2", "19 nm"), "length", "sweep/l_zb2")
    seps = values(sweep.get("separations", {"from": "30 nm", "to": "100 nm", "points": 8}), "length", "sweep/separations")
    temps = _temperatures(raw, bath)
    items = [(a, s, T) for a in l1 for T in temps for s in seps]

    def one(item):
        a, s, T = item
        dE, rate = phonon_lifetime(a, s, l2, bath, T, r, mat)
        return (a, l2, s, T, dE, rate, 1.0 / rate if rate > 0 else math.inf)

    rows = _pmap(one, items, threads)
    life = [row[6] for row in rows]
    summary = {"min_lifetime_s": min(life), "max_lifetime_s": max(life), "n_rows": len(rows),
               "lifetime_monotone_in_separation": all(
                   rows[k + 1][6] > rows[k][6] for k in range(len(rows) - 1) if rows[k + 1][2] > rows[k][2])}
    return ReportBundle("rates-phonon", [Table("phonon_emission", PHONON_HEADER, rows)], summary)


def rates_fc(raw: dict, rng, threads: int) -> ReportBundle:
    bath = _bath(raw)
    mat = _material(raw)
    r = _radius(raw)
    coupling = raw.get("options", {}).get("coupling", "displacement")
    geoms = [tuple(quantity(v, "length", "geometries") for v in g) for g in raw.get("geometries", [["20 nm", "50 nm", "19 nm"]])]
    temps = _temperatures(raw, bath)

    def one(g):
        e0, e1, _ = nw.qubit_modes(nw.DeviceGeometry.double_dot(*g, radius=r), mat)
        sd = ph.spectral_density(e0, e1, bath, r, coupling)
        return [(*g, T, ph.franck_condon(e0, e1, bath, T, r, coupling, sd)) for T in temps]

    rows = [row for chunk in _pmap(one, geoms, threads) for row in chunk]
    bs = [row[4] for row in rows]
    summary = {"min_B": min(bs), "max_B": max(bs), "n_rows": len(rows)}
    return ReportBundle("rates-fc", [Table("franck_condon", FC_HEADER, rows)], summary)


RUNNERS: dict[str, Callable[[dict, np.random.Generator, int], ReportBundle]] = {
    "gate-sim": gate_sim,
    "gate-synth": gate_synth,
    "fidelity-sweep": fidelity_sweep,
    "cnot-sim": cnot_sim,
    "rates-emission": rates_emission,
    "rates-dephasing": rates_dephasing,
    "rates-phonon": rates_phonon,
    "rates-fc": rates_fc,
}
SWEEP_KINDS = ("gate-synth", "fidelity-sweep", "rates-emission", "rates-dephasing", "rates-phonon", "rates-fc")


def _versions() -> dict:
    import numba
    import scipy

    return {"locqubit": __version__, "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__,
            "python": platform.python_version()}


def run_experiment(raw: dict, threads: int = 1) -> ReportBundle:
    """Run a validated config; results are deterministic given the config and its seed."""
    seed = raw.get("seed", 0)
    rng = np.random.default_rng(seed)
    t = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        bundle = RUNNERS[raw["experiment"]](raw, rng, max(1, threads))
    bundle.summary = {k: _scalar(v) for k, v in bundle.summary.items()}
    messages = sorted({str(w.message) for w in caught})
    for m in messages:
        print(f"warning: {m}", file=sys.stderr)
    bundle.metadata = {
        "experiment": raw["experiment"],
        "config_sha256": config_hash(raw),
        "seed": seed,
        "threads": threads,
        "versions": _versions(),
        "wall_time_s": time.perf_counter() - t,
        "warnings": messages,
    }
    return bundle
