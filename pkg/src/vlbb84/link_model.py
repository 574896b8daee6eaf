"""Physical model of a single BB84 fiber link.

All closed-form quantities derived from the device and channel constants
live here: propagation timing, dark-count and loss probabilities,
depolarization, the per-pulse sift-survival probability p, the intrinsic
QBER of the link, and the source repetition time with its lower bound.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from typing import Optional

from .numerics import solve_bracketed

SPEED_OF_LIGHT_KM_S = 299792.458
DEFAULT_FIBER_SPEED_KM_S = (2.0 / 3.0) * SPEED_OF_LIGHT_KM_S


@dataclass(frozen=True)
class LinkParams:
    """Device and channel constants, SI units (seconds, km, 1/s, dB/km).

    Defaults are the reference parameter set used throughout: a faint-laser
    source with eta_e = 0.2, a detector with eta_d = 0.6 and 25 Hz dark
    counts, 0.2 dB/km fiber at 2c/3 signal speed, 2% timing jitter with a
    coverage factor of 3.
    """

    eta_e: float = 0.2            # emission efficiency
    eta_d: float = 0.6            # detection efficiency
    R: float = 0.2                # fiber attenuation, dB/km
    v_f: float = DEFAULT_FIBER_SPEED_KM_S   # signal speed, km/s
    std: float = 0.02             # timing jitter as a fraction of tau
    R_depolar: float = 100.0      # depolarizing rate, 1/s
    R_DCR: float = 25.0           # dark count rate, 1/s
    DD: float = 0.5e-9            # detection delay, s
    DT: float = 100e-9            # detector dead time, s
    GD_A: float = 1e-9            # Alice gate duration, s
    GD_B: float = 1e-9            # Bob gate duration, s
    C: float = 3.0                # jitter coverage factor
    d: float = 0.0                # link distance, km

    def __post_init__(self) -> None:
        for name in ("eta_e", "eta_d", "std"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        for name in ("R", "R_depolar", "R_DCR", "DD", "DT", "GD_A", "GD_B", "d"):
            v = getattr(self, name)
            if v < 0.0:
                raise ValueError(f"{name} must be >= 0, got {v}")
        if self.C <= 0.0:
            raise ValueError(f"C must be > 0, got {self.C}")
        if self.v_f <= 0.0:
            raise ValueError(f"v_f must be > 0, got {self.v_f}")

    @classmethod
    def from_json(cls, doc: dict | str) -> "LinkParams":
        """Build from a JSON document; missing fields keep their defaults."""
        if isinstance(doc, str):
            doc = json.loads(doc)
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown LinkParams fields: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in doc.items()})


@dataclass(frozen=True)
class SecurityParams:
    """Protocol-level thresholds and tuning constants."""

    Q_t: float = 0.091        # QBER abort threshold
    f_max: float = 1.27       # reconciliation efficiency bound
    eps_max: float = 0.01     # extractor security parameter
    C_F: float = 3.0          # output-length confidence factor (in sigmas)
    eps: float = 0.1          # estimation accuracy base
    alpha: float = 3.0        # accuracy relaxation amplitude
    beta: float = 20.0        # accuracy relaxation decay

    def __post_init__(self) -> None:
        if not 0.0 < self.Q_t < 0.5:
            raise ValueError(f"Q_t must be in (0, 1/2), got {self.Q_t}")
        if self.f_max < 1.0:
            raise ValueError(f"f_max must be >= 1, got {self.f_max}")
        if not 0.0 < self.eps_max < 1.0:
            raise ValueError(f"eps_max must be in (0, 1), got {self.eps_max}")
        if self.C_F <= 0.0:
            raise ValueError(f"C_F must be > 0, got {self.C_F}")
        if self.eps <= 0.0:
            raise ValueError(f"eps must be > 0, got {self.eps}")

    @classmethod
    def from_json(cls, doc: dict | str) -> "SecurityParams":
        if isinstance(doc, str):
            doc = json.loads(doc)
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown SecurityParams fields: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in doc.items()})


@dataclass(frozen=True)
class ChannelDerived:
    """Every derived link quantity for one distance."""

    tau: float          # mean propagation time, s
    delta_tau: float    # jitter standard deviation, s
    window: float       # detector window C * delta_tau, s
    P_DCR: float        # dark count probability per window
    P_0: float          # emission/detection loss probability
    P_loss: float       # total photon loss probability
    P_depolar: float    # depolarization probability
    p: float            # sift-survival probability per pulse
    P_flip: float       # intrinsic QBER of sifted bits
    s: float            # chosen repetition time, s
    s_lim: float        # synchronization lower bound on s, s

    def as_dict(self) -> dict:
        return {
            "tau": self.tau, "delta_tau": self.delta_tau, "window": self.window,
            "P_DCR": self.P_DCR, "P_0": self.P_0, "P_loss": self.P_loss,
            "P_depolar": self.P_depolar, "p": self.p, "P_flip": self.P_flip,
            "s": self.s, "s_lim": self.s_lim,
        }


def emission_efficiency_from_mu(mu: float) -> float:
    """Emission efficiency of a faint-laser source with mean photon number mu."""
    if mu < 0.0:
        raise ValueError(f"mean photon number must be >= 0, got {mu}")
    return -math.expm1(-mu)


def derive_channel(link: LinkParams) -> ChannelDerived:
    """Evaluate all closed-form link quantities at link.d.

    The intrinsic QBER combines three detection events that can produce a
    sifted bit: a dark count registered before the photon, the photon
    registered after depolarization, and the clean photon. Only the first
    two flip the bit (each with probability 1/2), giving

        P_flip = [P_DCR/4 * (1 + P_loss)
                  + P_depolar/2 * (1 - P_DCR/2) * (1 - P_loss)]
                 / (1 - P_loss * (1 - P_DCR)).
    """
    tau = link.d / link.v_f
    delta_tau = link.std * tau
    window = link.C * delta_tau
    P_DCR = -math.expm1(-link.R_DCR * window)
    P_0 = 1.0 - link.eta_e * link.eta_d
    P_loss = 1.0 - (1.0 - P_0) * 10.0 ** (-link.R * link.d / 10.0)
    P_depolar = -math.expm1(-(link.R_depolar / link.v_f) * link.d)

    denom = 1.0 - P_loss * (1.0 - P_DCR)
    p = 0.5 * denom
    if denom > 0.0:
        num = (P_DCR / 4.0 * (P_loss + 1.0)
               + P_depolar / 2.0 * (1.0 - P_DCR / 2.0) * (1.0 - P_loss))
        P_flip = num / denom
    else:
        # No signal is ever detected; the conditional QBER is undefined,
        # report 0 rather than 0/0.
        P_flip = 0.0

    s_lim = max(2.0 * link.GD_A, link.DD + link.GD_B + link.DT + 2.0 * window)
    s = max(3.0 * link.GD_A, link.DD + link.GD_B + link.DT + 3.0 * window)
    return ChannelDerived(tau=tau, delta_tau=delta_tau, window=window,
                          P_DCR=P_DCR, P_0=P_0, P_loss=P_loss,
                          P_depolar=P_depolar, p=p, P_flip=P_flip,
                          s=s, s_lim=s_lim)


def channel_at(link: LinkParams, d: float) -> ChannelDerived:
    """Derive the channel for the same devices at a different distance."""
    return derive_channel(LinkParams(**{**_link_dict(link), "d": d}))


def _link_dict(link: LinkParams) -> dict:
    return {f.name: getattr(link, f.name) for f in fields(LinkParams)}


def effective_flip(p_flip: float, p_extra: float) -> float:
    """Effective bit-flip probability after Bob's controlled randomization.

    XOR composition of two independent flip channels:
    P_flip + P_extra - 2 * P_flip * P_extra.
    """
    for name, v in (("p_flip", p_flip), ("p_extra", p_extra)):
        if not 0.0 <= v <= 0.5:
            raise ValueError(f"{name} must be in [0, 1/2], got {v}")
    return p_flip + p_extra - 2.0 * p_flip * p_extra


def infer_qber(q_hat: float, p_extra: float) -> float:
    """Invert the controlled randomization: (Q_hat - P_extra) / (1 - 2*P_extra).

    The raw value can leave [0, 1] through finite-sample fluctuation of
    Q_hat; it is clamped. Callers that care can detect the negative case
    as q_hat < p_extra.
    """
    if not 0.0 <= p_extra < 0.5:
        raise ValueError(f"p_extra must be in [0, 1/2), got {p_extra}")
    raw = (q_hat - p_extra) / (1.0 - 2.0 * p_extra)
    return min(1.0, max(0.0, raw))


def limit_distance(link: LinkParams, sec: SecurityParams,
                   d_max: float = 200.0) -> Optional[float]:
    """Distance at which the intrinsic QBER reaches the abort threshold.

    Returns None when P_flip stays below Q_t on (0, d_max] (no limit
    distance below d_max). Solved by bisection; P_flip is increasing in d
    for physically sensible parameters.
    """
    def f(d: float) -> float:
        return channel_at(link, d).P_flip - sec.Q_t

    lo = 1e-9
    if f(lo) >= 0.0:
        return lo
    if f(d_max) < 0.0:
        return None
    root = solve_bracketed(f, lo, d_max, tol=1e-12, max_iter=200)
    return root.value
