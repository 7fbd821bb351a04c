"""Truncated composite Hilbert space of a multilevel transmon and M cavity modes.

Subsystem 0 is the transmon (levels g, e, f, h, ...), subsystems 1..M are the
cavity modes. Basis ordering is lexicographic with the transmon index slowest,
i.e. the full-space index of |t, n_1, ..., n_M> is
t * prod(cutoffs) + n_1 * prod(cutoffs[1:]) + ... + n_M.
All values are immutable after construction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from math import prod

import numpy as np

# Transmon level labels by index.
TRANSMON_LEVELS = "gefh"

# Population in the top Fock level of any mode above this triggers a warning.
TRUNCATION_TOL = 1e-4

DEFAULT_DIM_LIMIT = 100_000


class TruncationWarning(UserWarning):
    """Population has reached the top truncated level of a mode."""


def level_index(label: str | int) -> int:
    """Map a transmon level label ('g', 'e', 'f', 'h' or an int) to its index."""
    if isinstance(label, (int, np.integer)):
        return int(label)
    try:
        return TRANSMON_LEVELS.index(label)
    except ValueError:
        raise ValueError(f"unknown transmon level {label!r}") from None


@dataclass(frozen=True)
class CompositeSpace:
    """Tensor-product space: transmon_dim x mode_cutoffs[0] x ... levels."""

    transmon_dim: int
    mode_cutoffs: tuple[int, ...]
    dim_limit: int = DEFAULT_DIM_LIMIT

    def __init__(self, transmon_dim, mode_cutoffs=(), dim_limit=DEFAULT_DIM_LIMIT):
        object.__setattr__(self, "transmon_dim", int(transmon_dim))
        object.__setattr__(self, "mode_cutoffs", tuple(int(c) for c in mode_cutoffs))
        object.__setattr__(self, "dim_limit", int(dim_limit))
        if self.transmon_dim < 2:
            raise ValueError("transmon_dim must be >= 2")
        if any(c < 1 for c in self.mode_cutoffs):
            raise ValueError("mode cutoffs must be >= 1")
        if self.dim > self.dim_limit:
            raise ValueError(
                f"total dimension {self.dim} exceeds limit {self.dim_limit}"
            )

    @property
    def n_modes(self) -> int:
        return len(self.mode_cutoffs)

    @property
    def dims(self) -> tuple[int, ...]:
        """Per-subsystem dimensions, transmon first."""
        return (self.transmon_dim,) + self.mode_cutoffs

    @property
    def dim(self) -> int:
        return prod(self.dims)

    def subsystem_dim(self, subsystem: int) -> int:
        return self.dims[subsystem]

    def index_of(self, transmon_level, photons) -> int:
        """Lexicographic basis index of |t, n_1, ..., n_M>."""
        t = level_index(transmon_level)
        photons = tuple(int(n) for n in photons)
        if t >= self.transmon_dim:
            raise ValueError(f"transmon level {t} exceeds dim {self.transmon_dim}")
        if len(photons) != self.n_modes:
            raise ValueError("photon list length does not match mode count")
        idx = t
        for n, cut in zip(photons, self.mode_cutoffs):
            if not 0 <= n < cut:
                raise ValueError(f"photon number {n} exceeds cutoff {cut}")
            idx = idx * cut + n
        return idx

    def labels(self) -> list[tuple[int, ...]]:
        """All basis labels (t, n_1, ..., n_M) in index order."""
        out = []
        for flat in range(self.dim):
            lab = []
            rem = flat
            for d in reversed(self.dims):
                lab.append(rem % d)
                rem //= d
            out.append(tuple(reversed(lab)))
        return out


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class StateVector:
    """Unit-norm pure state over a CompositeSpace basis."""

    space: CompositeSpace
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).ravel()
        if amps.size != self.space.dim:
            raise ValueError("amplitude vector does not match space dimension")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > 1e-10:
            raise ValueError(f"state norm {norm} deviates from 1 beyond 1e-10")
        object.__setattr__(self, "amplitudes", _readonly(amps.copy()))

    def density_matrix(self) -> "DensityMatrix":
        psi = self.amplitudes
        return DensityMatrix(self.space, np.outer(psi, psi.conj()))

    def overlap(self, other: "StateVector") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace, positive-semidefinite operator on a CompositeSpace."""

    space: CompositeSpace
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        d = self.space.dim
        if mat.shape != (d, d):
            raise ValueError("matrix shape does not match space dimension")
        if np.max(np.abs(mat - mat.conj().T)) > 1e-10:
            raise ValueError("density matrix is not Hermitian within 1e-10")
        tr = np.trace(mat).real
        if abs(tr - 1.0) > 1e-10:
            raise ValueError(f"trace {tr} deviates from 1 beyond 1e-10")
        evals = np.linalg.eigvalsh(mat)
        if evals.min() < -1e-8:
            raise ValueError(f"negative eigenvalue {evals.min()} below -1e-8")
        object.__setattr__(self, "matrix", _readonly(mat.copy()))

    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.matrix))

    def purity(self) -> float:
        return float(np.trace(self.matrix @ self.matrix).real)


@dataclass(frozen=True)
class OperatorMatrix:
    """Labeled operator on a CompositeSpace."""

    space: CompositeSpace
    matrix: np.ndarray = field(repr=False)
    label: str = "operator"

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        d = self.space.dim
        if mat.shape != (d, d):
            raise ValueError("operator shape does not match space dimension")
        object.__setattr__(self, "matrix", _readonly(mat.copy()))

    def dagger(self) -> "OperatorMatrix":
        return OperatorMatrix(self.space, self.matrix.conj().T, self.label + "_dag")

    def is_hermitian(self, tol: float = 1e-10) -> bool:
        scale = max(np.max(np.abs(self.matrix)), 1.0)
        return bool(np.max(np.abs(self.matrix - self.matrix.conj().T)) <= tol * scale)


def destroy(dim: int) -> np.ndarray:
    """Single-oscillator annihilation matrix, <n-1|a|n> = sqrt(n)."""
    return np.diag(np.sqrt(np.arange(1, dim)), k=1).astype(complex)


def embed(space: CompositeSpace, op: np.ndarray, subsystem: int) -> np.ndarray:
    """Tensor-embed a single-subsystem operator into the full space."""
    if not 0 <= subsystem < 1 + space.n_modes:
        raise ValueError(f"subsystem {subsystem} out of range")
    dims = space.dims
    if op.shape != (dims[subsystem], dims[subsystem]):
        raise ValueError("operator dimension does not match subsystem")
    out = np.array([[1.0 + 0j]])
    for k, d in enumerate(dims):
        out = np.kron(out, op if k == subsystem else np.eye(d))
    return out


def lowering_op(space: CompositeSpace, subsystem: int) -> OperatorMatrix:
    """Annihilation operator of one subsystem embedded in the full space."""
    dim = space.subsystem_dim(subsystem)
    name = "transmon" if subsystem == 0 else f"mode{subsystem - 1}"
    return OperatorMatrix(space, embed(space, destroy(dim), subsystem), f"lowering_{name}")


def number_op(space: CompositeSpace, subsystem: int) -> OperatorMatrix:
    dim = space.subsystem_dim(subsystem)
    n = np.diag(np.arange(dim)).astype(complex)
    name = "transmon" if subsystem == 0 else f"mode{subsystem - 1}"
    return OperatorMatrix(space, embed(space, n, subsystem), f"number_{name}")


def transmon_op(space: CompositeSpace, bra_level, ket_level) -> OperatorMatrix:
    """|bra><ket| on the transmon, identity on the modes."""
    i, j = level_index(bra_level), level_index(ket_level)
    d = space.transmon_dim
    if i >= d or j >= d:
        raise ValueError("transmon level exceeds truncation")
    op = np.zeros((d, d), dtype=complex)
    op[i, j] = 1.0
    lab_i = TRANSMON_LEVELS[i] if i < len(TRANSMON_LEVELS) else str(i)
    lab_j = TRANSMON_LEVELS[j] if j < len(TRANSMON_LEVELS) else str(j)
    return OperatorMatrix(space, embed(space, op, 0), f"projector_{lab_i}{lab_j}")


def fock_state(space: CompositeSpace, transmon_level, photons) -> StateVector:
    """Basis state |t, n_1, ..., n_M>."""
    amps = np.zeros(space.dim, dtype=complex)
    amps[space.index_of(transmon_level, photons)] = 1.0
    return StateVector(space, amps)


def fidelity(rho: DensityMatrix, target: StateVector) -> float:
    """Pure-target fidelity F = <psi|rho|psi>."""
    if rho.space.dims != target.space.dims:
        raise ValueError("density matrix and target live on different spaces")
    psi = target.amplitudes
    val = float(np.real(psi.conj() @ rho.matrix @ psi))
    if not -1e-9 <= val <= 1 + 1e-9:
        raise ValueError(f"fidelity {val} outside [0, 1] beyond tolerance")
    return min(max(val, 0.0), 1.0)


def state_fidelity(psi: StateVector, target: StateVector) -> float:
    """|<target|psi>|^2 for two pure states."""
    return float(abs(np.vdot(target.amplitudes, psi.amplitudes)) ** 2)


def partial_trace(rho: DensityMatrix, keep) -> DensityMatrix:
    """Reduce to the subsystems in `keep` (indices, transmon = 0)."""
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise ValueError("keep set must be nonempty")
    dims = rho.space.dims
    n_sub = len(dims)
    if any(not 0 <= k < n_sub for k in keep):
        raise ValueError("keep index out of range")
    traced = [k for k in range(n_sub) if k not in keep]
    tensor = rho.matrix.reshape(dims + dims)
    kept_dims = [dims[k] for k in keep]
    perm = keep + [k + n_sub for k in keep] + traced + [k + n_sub for k in traced]
    tensor = tensor.transpose(perm)
    dk = prod(kept_dims)
    dt = prod([dims[k] for k in traced]) if traced else 1
    tensor = tensor.reshape(dk, dk, dt, dt)
    reduced = np.einsum("ijkk->ij", tensor)
    if 0 in keep:
        new_space = CompositeSpace(
            dims[0], tuple(dims[k] for k in keep if k != 0), rho.space.dim_limit
        )
        return DensityMatrix(new_space, reduced)
    # No transmon kept: expose the reduced matrix on a mode-only pseudo-space
    # by treating the first kept mode as the "transmon" slot of a new space.
    new_space = CompositeSpace(kept_dims[0], tuple(kept_dims[1:]), rho.space.dim_limit)
    return DensityMatrix(new_space, reduced)


def top_level_population(state_or_rho, space: CompositeSpace | None = None) -> float:
    """Largest population found in the top Fock level of any mode."""
    if isinstance(state_or_rho, StateVector):
        pops = np.abs(state_or_rho.amplitudes) ** 2
        space = state_or_rho.space
    elif isinstance(state_or_rho, DensityMatrix):
        pops = state_or_rho.populations()
        space = state_or_rho.space
    else:
        pops = np.asarray(state_or_rho, dtype=float)
        if space is None:
            raise ValueError("space required for raw population input")
    worst = 0.0
    labels = space.labels()
    for idx, lab in enumerate(labels):
        for m, n in enumerate(lab[1:]):
            if n == space.mode_cutoffs[m] - 1:
                worst = max(worst, float(pops[idx]))
                break
    return worst


def warn_if_truncated(state_or_rho, space: CompositeSpace | None = None,
                      context: str = "") -> float:
    """Emit TruncationWarning when top-Fock population exceeds TRUNCATION_TOL."""
    worst = top_level_population(state_or_rho, space)
    if worst >= TRUNCATION_TOL:
        msg = f"population {worst:.2e} in top Fock level of a mode"
        if context:
            msg += f" ({context})"
        warnings.warn(msg, TruncationWarning, stacklevel=2)
    return worst
