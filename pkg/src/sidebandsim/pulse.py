"""Pulse envelopes and time-domain schedules.

Envelopes are exact functions of time (no fixed sampling grid); integrators
choose their own step sizes. Scheduling is sequential: segments on any channel
may not overlap in time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * np.pi

ENVELOPE_KINDS = ("bump_flat_top", "gaussian", "constant", "sin2_flat_top")


@dataclass(frozen=True)
class Envelope:
    """Scalar pulse envelope evaluable at any time, zero outside [0, T]."""

    kind: str
    amplitude: float
    duration: float
    ramp_time: float = 0.0       # bump / sin2 ramp tau
    sigma: float = 0.0           # gaussian width
    n_sigma: float = 4.0         # gaussian truncation

    def __post_init__(self):
        if self.kind not in ENVELOPE_KINDS:
            raise ValueError(f"unknown envelope kind {self.kind!r}")
        if self.amplitude < 0:
            raise ValueError("amplitude must be >= 0")
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.kind in ("bump_flat_top", "sin2_flat_top"):
            if self.ramp_time <= 0 or 2.0 * self.ramp_time > self.duration:
                raise ValueError("ramped envelope needs 0 < 2 tau <= T")
        if self.kind == "gaussian" and self.sigma <= 0:
            raise ValueError("gaussian envelope needs sigma > 0")

    def __call__(self, t):
        scalar = np.isscalar(t) or np.ndim(t) == 0
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.zeros_like(t)
        inside = (t >= 0.0) & (t <= self.duration)
        if self.kind == "constant":
            out[inside] = self.amplitude
        elif self.kind == "bump_flat_top":
            out[inside] = self._bump(t[inside])
        elif self.kind == "sin2_flat_top":
            out[inside] = self._sin2(t[inside])
        else:
            out[inside] = self._gaussian(t[inside])
        return float(out[0]) if scalar else out

    def _bump(self, t):
        tau, T, eps = self.ramp_time, self.duration, self.amplitude
        out = np.full_like(t, eps)
        up = t <= tau
        down = t >= T - tau
        # exp(2 + 2/(u^2 - 1)) with u in (-1, 0]; vanishes in the limit u -> -1
        with np.errstate(divide="ignore", under="ignore", over="ignore"):
            u = (t[up] - tau) / tau
            arg = u * u - 1.0
            vals = np.where(arg < 0, np.exp(2.0 + 2.0 / np.minimum(arg, -1e-300)), 0.0)
            out[up] = eps * vals
            u = (t[down] - (T - tau)) / tau
            arg = u * u - 1.0
            vals = np.where(arg < 0, np.exp(2.0 + 2.0 / np.minimum(arg, -1e-300)), 0.0)
            out[down] = eps * vals
        return out

    def _sin2(self, t):
        tau, T, eps = self.ramp_time, self.duration, self.amplitude
        out = np.full_like(t, eps)
        up = t < tau
        down = t > T - tau
        out[up] = eps * np.sin(0.5 * np.pi * t[up] / tau) ** 2
        out[down] = eps * np.sin(0.5 * np.pi * (T - t[down]) / tau) ** 2
        return out

    def _gaussian(self, t):
        # truncated at n_sigma total width, offset-subtracted so edges hit zero
        T, s, eps = self.duration, self.sigma, self.amplitude
        edge = np.exp(-((0.5 * T) ** 2) / (2.0 * s * s))
        raw = np.exp(-((t - 0.5 * T) ** 2) / (2.0 * s * s))
        return eps * (raw - edge) / (1.0 - edge)

    def area(self) -> float:
        """Integral of the envelope over its support (adaptive quadrature)."""
        from scipy.integrate import quad
        val, _ = quad(self, 0.0, self.duration, limit=200)
        return float(val)


def bump_envelope(eps_max: float, tau: float, total: float) -> Envelope:
    """Flat-top envelope with infinitely smooth bump ramps of length tau."""
    return Envelope("bump_flat_top", eps_max, total, ramp_time=tau)


def sin2_envelope(eps_max: float, tau: float, total: float) -> Envelope:
    """Flat-top envelope with sin^2 ramps (simpler alternative to the bump)."""
    return Envelope("sin2_flat_top", eps_max, total, ramp_time=tau)


def gaussian_envelope(sigma: float, n_sigma: float = 4.0, amplitude: float = 1.0) -> Envelope:
    """Truncated Gaussian of total length n_sigma * sigma, zero at the edges."""
    return Envelope("gaussian", amplitude, n_sigma * sigma, sigma=sigma, n_sigma=n_sigma)


def constant_envelope(amplitude: float, duration: float) -> Envelope:
    return Envelope("constant", amplitude, duration)


BUMP_RAMP_AREA_FRACTION = None  # computed lazily: integral of the unit bump ramp


def bump_ramp_area_fraction() -> float:
    """Area under one unit-amplitude bump ramp divided by tau."""
    global BUMP_RAMP_AREA_FRACTION
    if BUMP_RAMP_AREA_FRACTION is None:
        env = bump_envelope(1.0, 1.0, 2.0)
        from scipy.integrate import quad
        val, _ = quad(env, 0.0, 1.0, limit=200)
        BUMP_RAMP_AREA_FRACTION = float(val)
    return BUMP_RAMP_AREA_FRACTION


def pi_duration(gsb: float, n: int = 0, fraction: float = 1.0) -> float:
    """Sideband pulse time t = fraction * pi / (2 g_sb sqrt(n+1))."""
    if gsb <= 0:
        raise ValueError("sideband rate must be positive")
    return fraction * np.pi / (2.0 * gsb * np.sqrt(n + 1.0))


CHANNELS = ("transmon_ge", "transmon_ef", "transmon_gf", "sideband",
            "displacement", "readout")


@dataclass(frozen=True)
class PulseSegment:
    """One carrier + envelope on a channel, starting at `start` seconds."""

    channel: str
    carrier: float               # angular frequency (rad/s); in-frame detuning
    phase: float
    envelope: Envelope
    start: float
    mode: int | None = None      # target mode for sideband/displacement channels
    label: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise ValueError(f"unknown channel {self.channel!r}")
        if self.start < 0:
            raise ValueError("segment start must be >= 0")
        if self.channel in ("sideband", "displacement") and self.mode is None:
            raise ValueError(f"{self.channel} segment needs a mode index")

    @property
    def end(self) -> float:
        return self.start + self.envelope.duration

    def channel_key(self) -> tuple:
        return (self.channel, self.mode)


@dataclass(frozen=True)
class Schedule:
    """Ordered, non-overlapping pulse segments."""

    segments: tuple[PulseSegment, ...]

    def __init__(self, segments: Sequence[PulseSegment]):
        segs = tuple(sorted(segments, key=lambda s: s.start))
        _check_overlaps(segs)
        object.__setattr__(self, "segments", segs)

    @property
    def total_duration(self) -> float:
        return max((s.end for s in self.segments), default=0.0)

    def to_json_dict(self) -> dict:
        """Serializable form: times in seconds, frequencies in Hz."""
        return {
            "total_duration_s": self.total_duration,
            "segments": [
                {
                    "channel": s.channel,
                    "mode": s.mode,
                    "carrier_hz": s.carrier / TWO_PI,
                    "phase_rad": s.phase,
                    "start_s": s.start,
                    "duration_s": s.envelope.duration,
                    "envelope": {
                        "kind": s.envelope.kind,
                        "amplitude": s.envelope.amplitude,
                        "ramp_time_s": s.envelope.ramp_time,
                        "sigma_s": s.envelope.sigma,
                        "n_sigma": s.envelope.n_sigma,
                    },
                    "label": s.label,
                    "meta": s.meta,
                }
                for s in self.segments
            ],
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_json_dict(), indent=2)
        if path is not None:
            with open(path, "w") as f:
                f.write(text)
        return text

    @classmethod
    def from_json_dict(cls, data: dict) -> "Schedule":
        segs = []
        for s in data["segments"]:
            env = Envelope(
                s["envelope"]["kind"],
                s["envelope"]["amplitude"],
                s["duration_s"],
                ramp_time=s["envelope"].get("ramp_time_s", 0.0),
                sigma=s["envelope"].get("sigma_s", 0.0),
                n_sigma=s["envelope"].get("n_sigma", 4.0),
            )
            segs.append(PulseSegment(
                channel=s["channel"], carrier=TWO_PI * s["carrier_hz"],
                phase=s["phase_rad"], envelope=env, start=s["start_s"],
                mode=s.get("mode"), label=s.get("label", ""),
                meta=s.get("meta", {}),
            ))
        return cls(segs)


def _check_overlaps(segments: Sequence[PulseSegment]):
    by_channel: dict = {}
    for s in segments:
        by_channel.setdefault(s.channel_key(), []).append(s)
    for key, segs in by_channel.items():
        segs = sorted(segs, key=lambda s: s.start)
        for a, b in zip(segs, segs[1:]):
            if b.start < a.end - 1e-15:
                raise ValueError(
                    f"overlapping segments on channel {key}: "
                    f"[{a.start:.3e}, {a.end:.3e}] and [{b.start:.3e}, {b.end:.3e}]"
                )
