"""Time evolution engines and measurement-chain models.

Unitary and Lindblad propagation (adaptive DOP853), the closed-form dispersive
decoherence channel used for parity-measurement error mitigation, Rabi and
pulse-train fidelity extraction, and the classical readout ring-up/reset model.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import curve_fit, least_squares

from .hilbert import CompositeSpace, DensityMatrix, StateVector, destroy, embed
from .model import SystemParams, TimeDependentHamiltonian

UNITARY_RTOL = 1e-10
LINDBLAD_RTOL = 1e-8

# Sign of the dispersive pull in the readout frame: the e-state trajectory
# rotates clockwise (negative angular direction) for chi > 0.
READOUT_CHI_SIGN = {"g": -1.0, "e": +1.0}


class IntegrationError(RuntimeError):
    """An ODE integration failed; carries the failure time."""


@dataclass(frozen=True)
class CollapseSet:
    """Weighted collapse operators for the Lindblad dissipator."""

    operators: tuple[tuple[np.ndarray, float], ...]

    def __init__(self, operators: Sequence[tuple[np.ndarray, float]]):
        ops = []
        for op, rate in operators:
            if rate < 0:
                raise ValueError("collapse rates must be >= 0")
            ops.append((np.asarray(op, dtype=complex), float(rate)))
        object.__setattr__(self, "operators", tuple(ops))

    def __len__(self) -> int:
        return len(self.operators)

    def scaled(self) -> list[np.ndarray]:
        """Operators premultiplied by sqrt(rate)."""
        return [np.sqrt(rate) * op for op, rate in self.operators if rate > 0]

    @classmethod
    def empty(cls) -> "CollapseSet":
        return cls(())

    @classmethod
    def from_params(cls, params: SystemParams, space: CompositeSpace,
                    modes: Sequence[int] | None = None,
                    include_thermal: bool = False) -> "CollapseSet":
        """Standard decoherence model from measured coherence times.

        Transmon: sequential ladder decay (e->g at 1/T1, f->e at 1/T1_ef,
        h->f at 3/T1), number-operator pure dephasing with
        gamma_phi = 1/T2 - 1/(2 T1). Modes: single-photon decay and
        number-operator dephasing. Thermal excitation enters only on request.
        """
        if modes is None:
            modes = tuple(range(space.n_modes))
        ops: list[tuple[np.ndarray, float]] = []
        dim_t = space.transmon_dim

        def t_flip(i, j):
            m = np.zeros((dim_t, dim_t), dtype=complex)
            m[i, j] = 1.0
            return embed(space, m, 0)

        gamma1 = 1.0 / params.t1_transmon
        ops.append((t_flip(0, 1), gamma1))
        if dim_t >= 3:
            ops.append((t_flip(1, 2), 1.0 / params.t1_ef))
        if dim_t >= 4:
            ops.append((t_flip(2, 3), 3.0 * gamma1))

        gamma_phi = 1.0 / params.t2_transmon - 0.5 * gamma1
        if gamma_phi < 0:
            warnings.warn("T2 > 2 T1; clamping transmon pure dephasing to zero")
            gamma_phi = 0.0
        nt = embed(space, np.diag(np.arange(dim_t)).astype(complex), 0)
        ops.append((nt, 2.0 * gamma_phi))

        if include_thermal and params.thermal_transmon > 0:
            ops.append((t_flip(1, 0), params.thermal_transmon * gamma1))

        for slot, dev in enumerate(modes):
            b = embed(space, destroy(space.mode_cutoffs[slot]), slot + 1)
            gm = 1.0 / params.mode_t1[dev]
            ops.append((b, gm))
            gphi_m = 1.0 / params.mode_t2[dev] - 0.5 * gm
            if gphi_m < 0:
                warnings.warn(f"mode {dev}: T2 > 2 T1; clamping pure dephasing to zero")
                gphi_m = 0.0
            nm = b.conj().T @ b
            ops.append((nm, 2.0 * gphi_m))
            if include_thermal and params.thermal_modes[dev] > 0:
                ops.append((b.conj().T, params.thermal_modes[dev] * gm))
        return cls(tuple(ops))


@dataclass
class TrajectoryResult:
    """Times, states (vectors or density matrices) and named observables."""

    times: np.ndarray
    states: list
    observables: dict = field(default_factory=dict)

    @property
    def final(self):
        return self.states[-1]

    def expectation(self, op: np.ndarray, name: str | None = None) -> np.ndarray:
        vals = []
        for s in self.states:
            if s.ndim == 1:
                vals.append(np.real(np.vdot(s, op @ s)))
            else:
                vals.append(np.real(np.trace(op @ s)))
        arr = np.asarray(vals)
        if name:
            self.observables[name] = arr
        return arr


def _resolve_generator(H) -> tuple[Callable[[float], np.ndarray], bool]:
    """Normalize H to a matrix-valued generator; flag static Hamiltonians."""
    if isinstance(H, TimeDependentHamiltonian):
        static = (H.generator_fn is None
                  and (H.drive_op is None or H.coeff is None))
        return H.generator, static
    if isinstance(H, np.ndarray):
        return (lambda t, _m=H: _m), True
    if callable(H):
        return H, False
    raise TypeError("H must be a matrix, TimeDependentHamiltonian or callable")


def evolve_unitary(H, psi0, times, rtol: float = UNITARY_RTOL,
                   atol: float | None = None) -> TrajectoryResult:
    """Schrodinger evolution of a pure state; norm preserved within 1e-8.

    Static Hamiltonians propagate by exact eigendecomposition; time-dependent
    ones by adaptive DOP853 integration of d psi/dt = -i H(t) psi.
    """
    if isinstance(psi0, StateVector):
        psi0 = psi0.amplitudes
    psi0 = np.asarray(psi0, dtype=complex)
    norm0 = np.linalg.norm(psi0)
    if abs(norm0 - 1.0) > 1e-10:
        raise ValueError("initial state is not normalized")
    times = np.asarray(times, dtype=float)
    gen, static = _resolve_generator(H)

    if static:
        h0 = gen(times[0])
        evals, evecs = np.linalg.eigh(h0)
        coeffs = evecs.conj().T @ psi0
        states = [evecs @ (np.exp(-1j * evals * (t - times[0])) * coeffs)
                  for t in times]
        return TrajectoryResult(times, states)

    if atol is None:
        atol = rtol * 1e-2

    def rhs(t, y):
        return -1j * (gen(t) @ y)

    sol = solve_ivp(rhs, (times[0], times[-1]), psi0, t_eval=times,
                    method="DOP853", rtol=rtol, atol=atol, dense_output=False)
    if not sol.success:
        raise IntegrationError(f"unitary integration failed at t = {sol.t[-1]!r}: {sol.message}")
    states = [sol.y[:, k] for k in range(sol.y.shape[1])]
    drift = abs(np.linalg.norm(states[-1]) - 1.0)
    if drift > 1e-8:
        warnings.warn(f"norm drift {drift:.2e} exceeds 1e-8; tighten tolerances")
    return TrajectoryResult(times, states)


def _lindblad_rhs_factory(gen, collapse: CollapseSet):
    ls = collapse.scaled()
    lds = [l.conj().T for l in ls]
    ldl = [ld @ l for l, ld in zip(ls, lds)]

    def rhs(t, y, dim):
        rho = y.reshape(dim, dim)
        h = gen(t)
        out = -1j * (h @ rho - rho @ h)
        for l, ld, m in zip(ls, lds, ldl):
            out += l @ rho @ ld - 0.5 * (m @ rho + rho @ m)
        return out.ravel()

    return rhs


def evolve_lindblad(H, rho0, collapse: CollapseSet, times,
                    rtol: float = LINDBLAD_RTOL,
                    atol: float | None = None) -> TrajectoryResult:
    """Deterministic Lindblad master-equation evolution.

    Trace is preserved within 1e-6 and the eigenvalue floor stays above -1e-6
    at every output time (checked, warning on violation).
    """
    if isinstance(rho0, DensityMatrix):
        rho0 = rho0.matrix
    rho0 = np.asarray(rho0, dtype=complex)
    dim = rho0.shape[0]
    times = np.asarray(times, dtype=float)
    gen, _ = _resolve_generator(H)
    if atol is None:
        atol = rtol * 1e-2
    rhs = _lindblad_rhs_factory(gen, collapse)

    sol = solve_ivp(lambda t, y: rhs(t, y, dim), (times[0], times[-1]),
                    rho0.ravel(), t_eval=times, method="DOP853",
                    rtol=rtol, atol=atol)
    if not sol.success:
        raise IntegrationError(f"Lindblad integration failed: {sol.message}")
    states = []
    for k in range(sol.y.shape[1]):
        rho = sol.y[:, k].reshape(dim, dim)
        rho = 0.5 * (rho + rho.conj().T)
        states.append(rho)
    tr_err = abs(np.trace(states[-1]).real - 1.0)
    if tr_err > 1e-6:
        warnings.warn(f"trace drift {tr_err:.2e} exceeds 1e-6")
    floor = np.linalg.eigvalsh(states[-1]).min()
    if floor < -1e-6:
        warnings.warn(f"positivity floor {floor:.2e} below -1e-6")
    return TrajectoryResult(times, states)


# ---------------------------------------------------------------------------
# Segmented (schedule-driven) evolution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SegmentSpec:
    """One simulation segment of a compiled sequence.

    Either an instantaneous unitary applied at the segment midpoint with idle
    (static H) evolution around it, or a driven interval with Hamiltonian
    h_static + sum_k amp_k(t - t0) * exp(i (det_k (t-t0) + phase_k)) * op_k + h.c.
    Optional extra collapse operators act only during this segment.
    """

    duration: float
    h_static: np.ndarray | None = None
    couplings: tuple = ()            # (op, detuning, phase, envelope) tuples
    instant: np.ndarray | None = None
    extra_collapse: tuple = ()       # (op, rate) tuples
    label: str = ""


def _segment_generator(seg: SegmentSpec, dim: int):
    h0 = seg.h_static if seg.h_static is not None else np.zeros((dim, dim), complex)

    def gen(t: float) -> np.ndarray:
        h = h0
        if seg.couplings:
            h = h0.copy()
            for op, det, phase, env in seg.couplings:
                amp = env(t) if callable(env) else env
                term = amp * np.exp(1j * (det * t + phase)) * op
                h += term + term.conj().T
        return h

    return gen


def evolve_segments_unitary(segments: Sequence[SegmentSpec], psi0,
                            rtol: float = UNITARY_RTOL) -> TrajectoryResult:
    """Piecewise evolution of a pure state through compiled segments."""
    if isinstance(psi0, StateVector):
        psi0 = psi0.amplitudes
    psi = np.asarray(psi0, dtype=complex)
    dim = psi.size
    t_abs = 0.0
    times = [0.0]
    states = [psi.copy()]
    for seg in segments:
        if seg.instant is not None:
            # idle half the duration, rotate instantly, idle the other half
            half = 0.5 * seg.duration
            psi = _evolve_chunk_unitary(seg, psi, half, rtol, dim)
            psi = seg.instant @ psi
            psi = _evolve_chunk_unitary(seg, psi, half, rtol, dim)
        else:
            psi = _evolve_chunk_unitary(seg, psi, seg.duration, rtol, dim)
        t_abs += seg.duration
        times.append(t_abs)
        states.append(psi.copy())
    return TrajectoryResult(np.asarray(times), states)


def _evolve_chunk_unitary(seg: SegmentSpec, psi, duration, rtol, dim):
    if duration <= 0:
        return psi
    gen = _segment_generator(seg, dim)
    if not seg.couplings:
        h = gen(0.0)
        evals, evecs = np.linalg.eigh(h)
        return evecs @ (np.exp(-1j * evals * duration) * (evecs.conj().T @ psi))
    res = evolve_unitary(gen, psi / np.linalg.norm(psi), [0.0, duration], rtol=rtol)
    return res.final


def evolve_segments_lindblad(segments: Sequence[SegmentSpec], rho0,
                             collapse: CollapseSet,
                             rtol: float = LINDBLAD_RTOL) -> TrajectoryResult:
    """Piecewise Lindblad evolution through compiled segments."""
    if isinstance(rho0, DensityMatrix):
        rho0 = rho0.matrix
    rho = np.asarray(rho0, dtype=complex)
    dim = rho.shape[0]
    t_abs = 0.0
    times = [0.0]
    states = [rho.copy()]
    for seg in segments:
        cset = collapse
        if seg.extra_collapse:
            cset = CollapseSet(tuple(collapse.operators) + tuple(seg.extra_collapse))
        gen = _segment_generator(seg, dim)
        if seg.instant is not None:
            half = 0.5 * seg.duration
            if half > 0:
                rho = evolve_lindblad(gen, rho, cset, [0.0, half], rtol=rtol).final
            rho = seg.instant @ rho @ seg.instant.conj().T
            if half > 0:
                rho = evolve_lindblad(gen, rho, cset, [0.0, half], rtol=rtol).final
        elif seg.duration > 0:
            rho = evolve_lindblad(gen, rho, cset, [0.0, seg.duration], rtol=rtol).final
        t_abs += seg.duration
        times.append(t_abs)
        states.append(rho.copy())
    return TrajectoryResult(np.asarray(times), states)


# ---------------------------------------------------------------------------
# Closed-form dispersive channel and parity mitigation
# ---------------------------------------------------------------------------

def dispersive_channel_analytic(rho0, chi: float, gamma: float, gamma_phi: float,
                                t: float, mode_dim: int | None = None) -> np.ndarray:
    """Exact evolution under H = (chi/2) n sigma_z with qubit decay/dephasing.

    Input is a two-level-transmon (x) single-mode density matrix in the
    package basis ordering (transmon index slowest). Applies the four block
    maps of the dispersive Lindblad solution, including the ground-state
    feeding term with its gamma -> 0 limit.
    """
    if isinstance(rho0, DensityMatrix):
        rho0 = rho0.matrix
    rho0 = np.asarray(rho0, dtype=complex)
    d = rho0.shape[0]
    if mode_dim is None:
        if d % 2:
            raise ValueError("expected a 2 x mode_dim density matrix")
        mode_dim = d // 2
    m = mode_dim
    n = np.arange(m)
    dn = n[:, None] - n[None, :]          # n1 - n2
    sn = n[:, None] + n[None, :]          # n1 + n2

    gg = rho0[:m, :m]
    ge = rho0[:m, m:]                     # <g n1| rho |e n2>
    eg = rho0[m:, :m]
    ee = rho0[m:, m:]

    decay_c = np.exp(-(0.5 * gamma + gamma_phi) * t)
    out = np.zeros_like(rho0)
    out[m:, m:] = np.exp(-gamma * t) * np.exp(-0.5j * chi * dn * t) * ee
    out[m:, :m] = decay_c * np.exp(-0.5j * chi * sn * t) * eg
    out[:m, m:] = decay_c * np.exp(+0.5j * chi * sn * t) * ge
    if gamma == 0.0:
        out[:m, :m] = np.exp(+0.5j * chi * dn * t) * gg
    else:
        feed = gamma * ee / (gamma + 1j * chi * dn)
        out[:m, :m] = ((gg + feed) * np.exp(+0.5j * chi * dn * t)
                       - feed * np.exp(-gamma * t) * np.exp(-0.5j * chi * dn * t))
    return out


def parity_outcome_probability(p_even: float, gamma: float, gamma_phi: float,
                               t: float) -> float:
    """Transmon |e> probability after a parity Ramsey of duration t."""
    if not 0.0 <= p_even <= 1.0:
        raise ValueError("p_even must lie in [0, 1]")
    e = np.exp(-(0.5 * gamma + gamma_phi) * t)
    return 0.5 * (1.0 - e) + e * p_even


def invert_parity_outcome(p_measured: float, gamma: float, gamma_phi: float,
                          t: float) -> float:
    """Mitigation inverse of parity_outcome_probability."""
    e = np.exp(-(0.5 * gamma + gamma_phi) * t)
    return (p_measured - 0.5 * (1.0 - e)) / e


# ---------------------------------------------------------------------------
# Fidelity extraction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RabiFidelityFit:
    kappa: float
    kappa_phi: float
    gsb: float
    fidelity: float
    residual_rms: float


def rabi_fidelity_fit(times, pf, gsb_guess: float | None = None) -> RabiFidelityFit:
    """Fit P_f = 0.5 e^{-kappa t} (1 + e^{-kappa_phi t} cos(2 g t)).

    The pi-pulse fidelity follows the effective-Rabi decay model:
    F = 1 - (pi/2)(kappa + kappa_phi/2)/g.
    """
    times = np.asarray(times, dtype=float)
    pf = np.asarray(pf, dtype=float)
    if gsb_guess is None:
        gsb_guess = _dominant_angular_freq(times, pf) / 2.0
    if gsb_guess <= 0:
        raise ValueError("could not locate an oscillation frequency")
    if times[-1] * gsb_guess / np.pi < 3.0:
        raise ValueError("need at least 3 oscillation periods of data")

    def model(t, kappa, kappa_phi, g):
        return 0.5 * np.exp(-kappa * t) * (1.0 + np.exp(-kappa_phi * t) * np.cos(2.0 * g * t))

    p0 = [0.01 * gsb_guess, 0.01 * gsb_guess, gsb_guess]
    try:
        popt, _ = curve_fit(model, times, pf, p0=p0, maxfev=20000)
    except RuntimeError as exc:
        raise RuntimeError(f"Rabi fidelity fit failed to converge: {exc}") from exc
    kappa, kappa_phi, g = abs(popt[0]), abs(popt[1]), abs(popt[2])
    fid = 1.0 - 0.5 * np.pi * (kappa + 0.5 * kappa_phi) / g
    resid = float(np.sqrt(np.mean((model(times, *popt) - pf) ** 2)))
    return RabiFidelityFit(kappa, kappa_phi, g, fid, resid)


def _dominant_angular_freq(times, values) -> float:
    vals = values - np.mean(values)
    dt = times[1] - times[0]
    spec = np.abs(np.fft.rfft(vals))
    freqs = np.fft.rfftfreq(len(vals), dt)
    k = int(np.argmax(spec[1:]) + 1)
    return 2.0 * np.pi * freqs[k]


@dataclass(frozen=True)
class PulseTrainFit:
    fidelity: float
    fidelity_stderr: float
    amplitude: float
    offset: float
    residual_rms: float
    alternation_score: float

    @property
    def coherent_error_flag(self) -> bool:
        """Large, sign-alternating residuals indicate over/under-rotation."""
        return self.residual_rms > 0.01 or self.alternation_score < -0.5


def pulse_train_fit(pulse_counts, populations) -> PulseTrainFit:
    """Fit p(N) = A F^N + c to an error-amplification pulse train."""
    counts = np.asarray(pulse_counts, dtype=float)
    pops = np.asarray(populations, dtype=float)
    if counts.size < 5:
        raise ValueError("need at least 5 pulse counts")

    def model(n, amp, fid, off):
        return amp * np.power(fid, n) + off

    p0 = [pops[0] - pops[-1], 0.99, pops[-1]]
    try:
        popt, pcov = curve_fit(model, counts, pops, p0=p0, maxfev=20000,
                               bounds=([-2.0, 0.0, -1.0], [2.0, 1.0, 1.0]))
    except RuntimeError as exc:
        raise RuntimeError(f"pulse train fit failed: {exc}") from exc
    amp, fid, off = popt
    stderr = float(np.sqrt(pcov[1, 1])) if np.isfinite(pcov[1, 1]) else np.inf
    resid = model(counts, *popt) - pops
    rms = float(np.sqrt(np.mean(resid ** 2)))
    if resid.size > 1 and np.std(resid) > 0:
        alternation = float(np.corrcoef(resid[:-1], resid[1:])[0, 1])
    else:
        alternation = 0.0
    return PulseTrainFit(float(fid), stderr, float(amp), float(off), rms, alternation)


# ---------------------------------------------------------------------------
# Integrated readout and reset (classical cavity model)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResetSegment:
    name: str
    amplitude: complex
    duration: float


@dataclass(frozen=True)
class ReadoutResetPlan:
    """Ring-up, readout, wait and ring-down plan for the readout cavity."""

    chi: float
    kappa: float
    epsilon: float
    segments: tuple[ResetSegment, ...]
    tau_r: float
    alpha_g: complex
    alpha_e: complex
    theta_r: float


def _readout_lambda(chi: float, kappa: float, state: str) -> complex:
    return 0.5 * kappa + 0.5j * READOUT_CHI_SIGN[state] * chi


def _segment_step(alpha: complex, eps: complex, lam: complex, dt: float) -> complex:
    """Exact solution of d alpha/dt = -lam alpha - i eps over dt."""
    a_ss = -1j * eps / lam
    return a_ss + (alpha - a_ss) * np.exp(-lam * dt)


def readout_reset_plan(chi: float, kappa: float, epsilon: float,
                       t_ringup: float | None = None,
                       t_readout: float = 1.5e-6,
                       t_ringdown: float | None = None) -> ReadoutResetPlan:
    """Build the integrated readout + reset pulse plan.

    Steady-state displacements alpha_{g,e} = 2 eps / (kappa -+ i chi) (modulus
    convention documented on READOUT_CHI_SIGN), rotation angle
    theta_r = arctan(chi/kappa), and wait time tau_r = 2 (pi - theta_r) / chi.
    Ring-up and ring-down amplitudes are optimized so both transmon-state
    trajectories settle quickly and return near the origin.
    """
    if chi <= 0 or kappa <= 0:
        raise ValueError("chi and kappa must be positive")
    theta_r = float(np.arctan(chi / kappa))
    tau_r = 2.0 * (np.pi - theta_r) / chi
    alpha = {s: -1j * epsilon / _readout_lambda(chi, kappa, s) for s in ("g", "e")}

    if t_ringup is None:
        t_ringup = min(0.25 / kappa, 0.2 * tau_r)
    if t_ringdown is None:
        t_ringdown = t_ringup

    lam = {s: _readout_lambda(chi, kappa, s) for s in ("g", "e")}

    def ringup_cost(x):
        eps_ru = x[0] + 1j * x[1]
        res = []
        for s in ("g", "e"):
            a = _segment_step(0.0, eps_ru, lam[s], t_ringup)
            res.extend([(a - alpha[s]).real, (a - alpha[s]).imag])
        return res

    guess = epsilon / (1.0 - np.exp(-0.5 * kappa * t_ringup))
    ru = least_squares(ringup_cost, [guess, 0.0]).x
    eps_ringup = complex(ru[0], ru[1])

    # state positions entering ring-down, after readout settle and wait
    entry = {}
    for s in ("g", "e"):
        a = _segment_step(0.0, eps_ringup, lam[s], t_ringup)
        a = _segment_step(a, epsilon, lam[s], t_readout)
        a = _segment_step(a, 0.0, lam[s], tau_r)
        entry[s] = a

    def ringdown_cost(x):
        eps_rd = x[0] + 1j * x[1]
        res = []
        for s in ("g", "e"):
            a = _segment_step(entry[s], eps_rd, lam[s], t_ringdown)
            res.extend([a.real, a.imag])
        return res

    mean_entry = 0.5 * (entry["g"] + entry["e"])
    rd_guess = 1j * mean_entry / t_ringdown
    rd = least_squares(ringdown_cost, [rd_guess.real, rd_guess.imag]).x
    eps_ringdown = complex(rd[0], rd[1])

    segments = (
        ResetSegment("ring_up", eps_ringup, t_ringup),
        ResetSegment("readout", epsilon, t_readout),
        ResetSegment("wait", 0.0, tau_r),
        ResetSegment("ring_down", eps_ringdown, t_ringdown),
    )
    return ReadoutResetPlan(chi, kappa, epsilon, segments, tau_r,
                            alpha["g"], alpha["e"], theta_r)


def classical_readout_trajectory(plan: ReadoutResetPlan, transmon_state: str,
                                 times) -> np.ndarray:
    """Cavity displacement alpha(t) under the plan for transmon in g or e.

    Integrates d alpha/dt = -(kappa/2 + s i chi/2) alpha - i eps(t) exactly
    per piecewise-constant segment.
    """
    if transmon_state not in ("g", "e"):
        raise ValueError("transmon_state must be 'g' or 'e'")
    lam = _readout_lambda(plan.chi, plan.kappa, transmon_state)
    times = np.asarray(times, dtype=float)
    bounds = np.cumsum([0.0] + [s.duration for s in plan.segments])
    out = np.zeros(times.size, dtype=complex)
    for k, t in enumerate(times):
        alpha = 0.0 + 0.0j
        remaining = t
        for seg, t0, t1 in zip(plan.segments, bounds[:-1], bounds[1:]):
            if remaining <= 0:
                break
            dt = min(t1 - t0, remaining)
            alpha = _segment_step(alpha, seg.amplitude, lam, dt)
            remaining -= dt
        if remaining > 0:   # past the plan: free decay with no drive
            alpha = _segment_step(alpha, 0.0, lam, remaining)
        out[k] = alpha
    return out
