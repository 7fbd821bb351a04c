"""Device parameters and analytic physics: Hamiltonians, dispersive shifts,
sideband rates, Stark shifts.

All frequencies and rates are angular (rad/s) internally. Configuration files
use Hz and seconds; conversion happens at the (de)serialization boundary.
The pi-pulse convention throughout is t_pi = pi / (2 g_sb sqrt(n+1)).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Callable, Sequence

import numpy as np

from .hilbert import CompositeSpace, OperatorMatrix, destroy, embed

TWO_PI = 2.0 * np.pi


class ResonanceError(ValueError):
    """A formula was evaluated at one of its resonance singularities."""


@dataclass(frozen=True)
class SystemParams:
    """Measured device parameters: transmon, storage modes, readout.

    Lists are indexed by storage-mode number (0-based). `couplings_g` may be
    derived from `chi_e` via coupling_from_chi when the device table does not
    report bare couplings directly.
    """

    omega_q: float                       # transmon g-e frequency (rad/s)
    anharm_K: float                      # anharmonicity, negative (rad/s)
    phi_zpt: float                       # zero-point phase (dimensionless)
    mode_freqs: tuple[float, ...]        # cavity mode frequencies (rad/s)
    couplings_g: tuple[float, ...]       # bare transmon-mode couplings (rad/s)
    chi_e: tuple[float, ...]             # e-state dispersive shifts (rad/s)
    chi_f: tuple[float, ...]             # f-state dispersive shifts (rad/s)
    t1_transmon: float                   # e->g decay time (s)
    t2_transmon: float                   # g-e echo dephasing time (s)
    t1_ef: float                         # f->e decay time (s)
    mode_t1: tuple[float, ...]           # single-photon decay times (s)
    mode_t2: tuple[float, ...]           # single-photon dephasing times (s)
    thermal_transmon: float              # equilibrium e population
    thermal_modes: tuple[float, ...]     # equilibrium photon numbers
    readout_freq: float                  # readout mode frequency (rad/s)
    readout_chi: float                   # readout dispersive shift (rad/s)
    readout_kappa: float                 # readout decay rate (1/s)
    readout_thermal: float = 0.0         # readout mode thermal population

    def __post_init__(self):
        for name in ("mode_freqs", "couplings_g", "chi_e", "chi_f",
                     "mode_t1", "mode_t2", "thermal_modes"):
            object.__setattr__(self, name, tuple(float(x) for x in getattr(self, name)))
        n = len(self.mode_freqs)
        for name in ("couplings_g", "chi_e", "chi_f", "mode_t1", "mode_t2",
                     "thermal_modes"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} length does not match mode count {n}")
        if self.t1_transmon <= 0 or self.t2_transmon <= 0 or self.t1_ef <= 0:
            raise ValueError("coherence times must be positive")
        if any(t <= 0 for t in self.mode_t1 + self.mode_t2):
            raise ValueError("mode coherence times must be positive")
        pops = (self.thermal_transmon,) + self.thermal_modes + (self.readout_thermal,)
        if any(not 0 <= p < 0.5 for p in pops):
            raise ValueError("thermal populations must lie in [0, 0.5)")

    @property
    def n_modes(self) -> int:
        return len(self.mode_freqs)

    def detuning(self, mode: int) -> float:
        """Transmon-mode detuning Delta = omega_q - omega_c."""
        return self.omega_q - self.mode_freqs[mode]

    def validate(self) -> list[str]:
        """Dispersive-regime sanity checks; returns warning strings."""
        notes = []
        for i in range(self.n_modes):
            ratio = abs(self.couplings_g[i] / self.detuning(i))
            if ratio >= 0.2:
                notes.append(f"mode {i}: g/Delta = {ratio:.2f} outside dispersive regime")
            chi_pred = chi_from_coupling(self.couplings_g[i], self.detuning(i), self.anharm_K)
            stored = self.chi_e[i]
            if stored != 0 and abs(chi_pred / stored - 1.0) > 0.10:
                notes.append(
                    f"mode {i}: stored chi_e {stored / TWO_PI:.3e} Hz disagrees with "
                    f"coupling-derived {chi_pred / TWO_PI:.3e} Hz beyond 10%"
                )
        for msg in notes:
            warnings.warn(msg, stacklevel=2)
        return notes

    def with_coherences(self, **kwargs) -> "SystemParams":
        """Copy with replaced coherence fields (t1_transmon, mode_t1, ...)."""
        return replace(self, **kwargs)

    # -- configuration file round trip (Hz / seconds) --

    def to_config_dict(self) -> dict:
        return {
            "transmon": {
                "freq_ge_hz": self.omega_q / TWO_PI,
                "anharmonicity_hz": self.anharm_K / TWO_PI,
                "phi_zpt": self.phi_zpt,
                "t1_s": self.t1_transmon,
                "t2_s": self.t2_transmon,
                "t1_ef_s": self.t1_ef,
                "thermal_population": self.thermal_transmon,
            },
            "modes": {
                "freqs_hz": [w / TWO_PI for w in self.mode_freqs],
                "couplings_hz": [g / TWO_PI for g in self.couplings_g],
                "chi_e_hz": [x / TWO_PI for x in self.chi_e],
                "chi_f_hz": [x / TWO_PI for x in self.chi_f],
                "t1_s": list(self.mode_t1),
                "t2_s": list(self.mode_t2),
                "thermal_populations": list(self.thermal_modes),
            },
            "readout": {
                "freq_hz": self.readout_freq / TWO_PI,
                "chi_hz": self.readout_chi / TWO_PI,
                "kappa_per_s": self.readout_kappa,
                "thermal_population": self.readout_thermal,
            },
        }

    @classmethod
    def from_config_dict(cls, cfg: dict) -> "SystemParams":
        tr, md, ro = cfg["transmon"], cfg["modes"], cfg["readout"]
        freqs = [TWO_PI * f for f in md["freqs_hz"]]
        chi_e = [TWO_PI * x for x in md["chi_e_hz"]]
        omega_q = TWO_PI * tr["freq_ge_hz"]
        anharm = TWO_PI * tr["anharmonicity_hz"]
        if "couplings_hz" in md and md["couplings_hz"]:
            g = [TWO_PI * x for x in md["couplings_hz"]]
        else:
            g = [coupling_from_chi(x, omega_q - w, anharm)
                 for x, w in zip(chi_e, freqs)]
        return cls(
            omega_q=omega_q,
            anharm_K=anharm,
            phi_zpt=tr.get("phi_zpt", 0.3),
            mode_freqs=tuple(freqs),
            couplings_g=tuple(g),
            chi_e=tuple(chi_e),
            chi_f=tuple(TWO_PI * x for x in md["chi_f_hz"]),
            t1_transmon=tr["t1_s"],
            t2_transmon=tr["t2_s"],
            t1_ef=tr["t1_ef_s"],
            mode_t1=tuple(md["t1_s"]),
            mode_t2=tuple(md["t2_s"]),
            thermal_transmon=tr["thermal_population"],
            thermal_modes=tuple(md["thermal_populations"]),
            readout_freq=TWO_PI * ro["freq_hz"],
            readout_chi=TWO_PI * ro["chi_hz"],
            readout_kappa=ro["kappa_per_s"],
            readout_thermal=ro.get("thermal_population", 0.0),
        )


def default_params() -> SystemParams:
    """Bundled device table (ten storage modes plus readout)."""
    with resources.files("sidebandsim.data").joinpath("default_device.json").open() as f:
        return SystemParams.from_config_dict(json.load(f))


@dataclass(frozen=True)
class DriveParams:
    """Classical monochromatic charge drive on the transmon."""

    epsilon: float            # amplitude (rad/s)
    omega_d: float            # drive frequency (rad/s)
    phase: float = 0.0        # drive phase (rad)

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("drive amplitude must be >= 0")


@dataclass(frozen=True)
class TimeDependentHamiltonian:
    """H(t) = static + coeff(t) * drive_op, with optional drive period.

    `generator(t)` returns the full matrix. When the drive is monochromatic,
    `period` is 2 pi / omega_d and Floquet analysis applies. A fully general
    time dependence can be supplied through `generator_fn` instead of the
    (drive_op, coeff) decomposition.
    """

    space: CompositeSpace
    static: np.ndarray = field(repr=False)
    drive_op: np.ndarray | None = field(repr=False, default=None)
    coeff: Callable[[float], float] | None = None
    period: float | None = None
    generator_fn: Callable[[float], np.ndarray] | None = None

    def generator(self, t: float) -> np.ndarray:
        if self.generator_fn is not None:
            return self.generator_fn(t)
        if self.drive_op is None or self.coeff is None:
            return self.static
        return self.static + self.coeff(t) * self.drive_op

    def __call__(self, t: float) -> np.ndarray:
        return self.generator(t)

    def is_hermitian(self, times: Sequence[float], tol: float = 1e-10) -> bool:
        for t in times:
            h = self.generator(t)
            scale = max(np.max(np.abs(h)), 1.0)
            if np.max(np.abs(h - h.conj().T)) > tol * scale:
                return False
        return True


# ---------------------------------------------------------------------------
# Closed-form rates and shifts
# ---------------------------------------------------------------------------

def chi_from_coupling(g: float, delta: float, K: float) -> float:
    """Dispersive shift of |e>: chi = 2 g^2 K / (Delta (Delta + K))."""
    if delta == 0 or delta + K == 0:
        raise ResonanceError("chi diverges at Delta = 0 or Delta = -K")
    return 2.0 * g * g * K / (delta * (delta + K))


def coupling_from_chi(chi: float, delta: float, K: float) -> float:
    """Inverse of chi_from_coupling: g = sqrt(chi Delta (Delta + K) / (2 K))."""
    if delta == 0 or delta + K == 0:
        raise ResonanceError("inversion undefined at Delta = 0 or Delta = -K")
    val = chi * delta * (delta + K) / (2.0 * K)
    if val < 0:
        raise ValueError("chi sign inconsistent with Delta and K")
    return float(np.sqrt(val))


def xi_displacement(epsilon: float, omega_d: float, omega_q: float) -> float:
    """Effective transmon displacement xi = 2 omega_d eps / (omega_d^2 - omega_q^2)."""
    if omega_d == omega_q:
        raise ResonanceError("displacement diverges for a resonant drive")
    return 2.0 * omega_d * epsilon / (omega_d ** 2 - omega_q ** 2)


def sideband_drive_frequency(params: SystemParams, mode: int) -> float:
    """Bare f0-g1 sideband drive frequency omega_d = 2 omega_q + K - omega_c."""
    return 2.0 * params.omega_q + params.anharm_K - params.mode_freqs[mode]


def sideband_rate_lowest_order(params: SystemParams, mode: int, epsilon: float) -> float:
    """g-f manifold SWAP rate to lowest order in the quartic nonlinearity.

    g_sb = sqrt(2) (omega_q + K + Delta) / (2 omega_q + K + Delta) * (eps/g) * chi.
    """
    wq, K = params.omega_q, params.anharm_K
    delta = params.detuning(mode)
    g = params.couplings_g[mode]
    chi = chi_from_coupling(g, delta, K)
    return np.sqrt(2.0) * (wq + K + delta) / (2.0 * wq + K + delta) * (epsilon / g) * chi


def sideband_rate_approx(params: SystemParams, mode: int, epsilon: float) -> float:
    """Large-omega_q approximation eps chi / (sqrt(2) g)."""
    g = params.couplings_g[mode]
    chi = chi_from_coupling(g, params.detuning(mode), params.anharm_K)
    return epsilon * chi / (np.sqrt(2.0) * g)


def sideband_rate_series(params: SystemParams, mode: int, epsilon: float,
                         n_terms: int, gf_manifold: bool = True) -> float:
    """Sideband rate including higher-order cosine nonlinearities.

    (g K xi / Delta) * sum_{n>=1} (-1)^(n+1) (phi_zpt xi)^(2n-2) / ((n-1)!)^2.
    The series is written for the bare two-photon rate; the g-f manifold SWAP
    carries an extra sqrt(2), applied by default so that n_terms = 1 matches
    sideband_rate_lowest_order exactly.
    """
    if n_terms < 1:
        raise ValueError("n_terms must be >= 1")
    g = params.couplings_g[mode]
    K = params.anharm_K
    delta = params.detuning(mode)
    omega_d = sideband_drive_frequency(params, mode)
    xi = xi_displacement(epsilon, omega_d, params.omega_q)
    x = (params.phi_zpt * xi) ** 2
    total = 0.0
    term = 1.0
    for n in range(1, n_terms + 1):
        if n > 1:
            term *= -x / ((n - 1) ** 2)
        total += term
    rate = g * K * xi / delta * total
    return np.sqrt(2.0) * rate if gf_manifold else rate


def stark_shift_estimate(params: SystemParams, epsilon: float, omega_d: float) -> float:
    """Drive-induced shift of the sideband resonance, omega_SS = -2 K xi^2."""
    xi = xi_displacement(epsilon, omega_d, params.omega_q)
    return -2.0 * params.anharm_K * xi * xi


def stark_shift_second_order(params: SystemParams, epsilon: float,
                             omega_d: float) -> float:
    """Exact second-order Stark shift of the f0-g1 sideband resonance.

    Level-repulsion sum for the Kerr ladder driven at omega_d, including
    counter-rotating denominators:
    delta(E_f - E_g) = -8 K eps^2 (omega_d^2 + omega_q^2) / (omega_d^2 - omega_q^2)^2.
    Reduces to -2 K xi^2 scaled by -(1 + omega_q^2/omega_d^2); the quadratic
    estimate of stark_shift_estimate keeps only the co-rotating scale.
    """
    wq = params.omega_q
    if omega_d == wq:
        raise ResonanceError("shift diverges for a resonant drive")
    denom = (omega_d ** 2 - wq ** 2) ** 2
    return -8.0 * params.anharm_K * epsilon ** 2 * (omega_d ** 2 + wq ** 2) / denom


def epsilon_for_rate(params: SystemParams, mode: int, gsb_target: float) -> float:
    """Drive amplitude giving a target lowest-order sideband rate."""
    unit = sideband_rate_lowest_order(params, mode, 1.0)
    return gsb_target / unit


# ---------------------------------------------------------------------------
# Hamiltonian builders
# ---------------------------------------------------------------------------

def dispersive_hamiltonian(params: SystemParams, space: CompositeSpace,
                           modes: Sequence[int] | None = None,
                           mode_kerr: Sequence[float] | None = None) -> OperatorMatrix:
    """Second-order dispersive Hamiltonian, diagonal in the Fock basis.

    H = omega_q n_t + (K/2) n_t (n_t - 1)
      + sum_i [omega_c,i n_i + (K_i/2) n_i (n_i - 1) + chi_i n_t n_i]

    `modes` maps each space mode slot to a device mode index. Mode self-Kerr
    defaults to zero (no measured values).
    """
    if modes is None:
        modes = tuple(range(space.n_modes))
    if len(modes) != space.n_modes:
        raise ValueError("modes list does not match space mode count")
    if mode_kerr is None:
        mode_kerr = [0.0] * space.n_modes
    d = space.dim
    h = np.zeros((d, d), dtype=complex)
    nt = embed(space, np.diag(np.arange(space.transmon_dim)).astype(complex), 0)
    h += params.omega_q * nt + 0.5 * params.anharm_K * nt @ (nt - np.eye(d))
    for slot, dev in enumerate(modes):
        nm = embed(space, np.diag(np.arange(space.mode_cutoffs[slot])).astype(complex),
                   slot + 1)
        h += params.mode_freqs[dev] * nm
        h += 0.5 * mode_kerr[slot] * nm @ (nm - np.eye(d))
        h += params.chi_e[dev] * nt @ nm
    return OperatorMatrix(space, h, "hamiltonian_dispersive")


def transmon_charge_op(space: CompositeSpace) -> np.ndarray:
    """Hermitian drive operator i(c - c^dag) on the transmon."""
    c = destroy(space.transmon_dim)
    return embed(space, 1j * (c - c.conj().T), 0)


def _transmon_block(omega_bare: float, E_J: float, phi_zpt: float,
                    dim: int, cosine_order: int) -> np.ndarray:
    """Linearized transmon plus cosine nonlinearity, truncated to `dim` levels.

    The nonlinear matrix elements are evaluated in a padded space so the kept
    block is exact.
    """
    pad = dim + cosine_order
    c = destroy(pad)
    phi = phi_zpt * (c + c.conj().T)
    phi2 = phi @ phi
    phi4 = phi2 @ phi2
    h = omega_bare * (c.conj().T @ c) - E_J * phi4 / 24.0
    if cosine_order >= 6:
        h += E_J * phi4 @ phi2 / 720.0
    if cosine_order >= 8:
        h -= E_J * phi4 @ phi4 / 40320.0
    return h[:dim, :dim]


_TRANSMON_CAL_CACHE: dict = {}


def _calibrated_transmon(omega_q: float, K: float, phi_zpt: float,
                         dim: int) -> tuple[float, float]:
    """Solve for (omega_bare, E_J) so that exact diagonalization of the
    order-4 truncated Hamiltonian reproduces the measured g-e frequency and
    anharmonicity. Higher cosine orders reuse this calibration, so their
    level shifts reflect the added phi^6 / phi^8 physics.
    """
    key = (round(omega_q, 3), round(K, 3), round(phi_zpt, 9), dim)
    if key in _TRANSMON_CAL_CACHE:
        return _TRANSMON_CAL_CACHE[key]
    if K >= 0:
        raise ValueError("anharmonicity must be negative for a transmon")
    E_C0 = -K
    x = np.array([omega_q + E_C0, 2.0 * E_C0 / phi_zpt ** 4])

    def levels(omega_bare, E_J):
        h = _transmon_block(omega_bare, E_J, phi_zpt, dim, 4)
        ev = np.sort(np.linalg.eigvalsh(h))
        return ev[1] - ev[0], (ev[2] - ev[1]) - (ev[1] - ev[0])

    if dim < 3:
        # two levels cannot define an anharmonicity; match omega_q only
        ge, _ = levels(*x)
        x[0] += omega_q - ge
        _TRANSMON_CAL_CACHE[key] = (x[0], x[1])
        return x[0], x[1]

    for _ in range(60):
        ge, k_meas = levels(*x)
        r = np.array([ge - omega_q, k_meas - K])
        if max(abs(r[0] / omega_q), abs(r[1] / K)) < 1e-12:
            break
        jac = np.zeros((2, 2))
        for j, h in enumerate((1e-6 * omega_q, 1e-6 * x[1])):
            xp = x.copy()
            xp[j] += h
            gp, kp = levels(*xp)
            jac[:, j] = [(gp - ge) / h, (kp - k_meas) / h]
        x = x - np.linalg.solve(jac, r)
    _TRANSMON_CAL_CACHE[key] = (x[0], x[1])
    return x[0], x[1]


def driven_transmon_hamiltonian(params: SystemParams, space: CompositeSpace,
                                drive: DriveParams, cosine_order: int = 4,
                                modes: Sequence[int] | None = None
                                ) -> TimeDependentHamiltonian:
    """Lab-frame Hamiltonian of the charge-driven transmon and coupled modes.

    Linearized transmon + modes + electric-dipole coupling, plus the Josephson
    cosine beyond quadratic order truncated at phi^cosine_order, plus the
    charge drive -2 eps cos(omega_d t + phi_d) i(c - c^dag).
    """
    if cosine_order not in (4, 6, 8):
        raise ValueError("cosine_order must be 4, 6 or 8")
    if modes is None:
        modes = tuple(range(space.n_modes))
    if len(modes) != space.n_modes:
        raise ValueError("modes list does not match space mode count")

    d_t = space.transmon_dim
    omega_bare, E_J = _calibrated_transmon(params.omega_q, params.anharm_K,
                                           params.phi_zpt, d_t)
    h_t = _transmon_block(omega_bare, E_J, params.phi_zpt, d_t, cosine_order)

    c = destroy(d_t)
    c_full = embed(space, c, 0)
    h0 = embed(space, h_t, 0)

    for slot, dev in enumerate(modes):
        b = embed(space, destroy(space.mode_cutoffs[slot]), slot + 1)
        h0 += params.mode_freqs[dev] * (b.conj().T @ b)
        h0 += params.couplings_g[dev] * (c_full - c_full.conj().T) @ (b - b.conj().T)

    drive_op = transmon_charge_op(space)
    eps, wd, phid = drive.epsilon, drive.omega_d, drive.phase

    def coeff(t: float) -> float:
        return -2.0 * eps * np.cos(wd * t + phid)

    period = TWO_PI / wd if eps > 0 else None
    return TimeDependentHamiltonian(space, h0, drive_op, coeff, period)


def effective_jc_hamiltonian(params: SystemParams, space: CompositeSpace,
                             gsb: Sequence[float], phases: Sequence[float] | None = None,
                             modes: Sequence[int] | None = None) -> OperatorMatrix:
    """Tunable Jaynes-Cummings Hamiltonian in the g-f manifold.

    H = sum_i [chi_e,i n_i |e><e| + chi_f,i n_i |f><f|
               + g_sb,i (e^{i phi_i} b_i |f><g| + h.c.)]
    """
    if space.transmon_dim < 3:
        raise ValueError("effective JC model needs at least levels g, e, f")
    if modes is None:
        modes = tuple(range(space.n_modes))
    if phases is None:
        phases = [0.0] * len(modes)
    if not len(gsb) == len(phases) == len(modes):
        raise ValueError("gsb, phases and modes must have matching lengths")

    d = space.dim
    h = np.zeros((d, d), dtype=complex)
    proj_e = embed(space, _level_proj(space.transmon_dim, 1), 0)
    proj_f = embed(space, _level_proj(space.transmon_dim, 2), 0)
    fg = embed(space, _level_flip(space.transmon_dim, 2, 0), 0)   # |f><g|
    for slot, dev in enumerate(modes):
        b = embed(space, destroy(space.mode_cutoffs[slot]), slot + 1)
        nm = b.conj().T @ b
        h += params.chi_e[dev] * nm @ proj_e + params.chi_f[dev] * nm @ proj_f
        coupling = gsb[slot] * np.exp(1j * phases[slot]) * (b @ fg)
        h += coupling + coupling.conj().T
    return OperatorMatrix(space, h, "hamiltonian_effective_jc")


def _level_proj(dim: int, level: int) -> np.ndarray:
    p = np.zeros((dim, dim), dtype=complex)
    p[level, level] = 1.0
    return p


def _level_flip(dim: int, bra: int, ket: int) -> np.ndarray:
    p = np.zeros((dim, dim), dtype=complex)
    p[bra, ket] = 1.0
    return p
