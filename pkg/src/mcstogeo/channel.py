"""Single-transmitter channel responses.

All kernels broadcast over numpy arrays of distance and time. Distances are
measured from the receiver centre and must not be smaller than the receiver
radius. At ``t == 0`` every fraction is 0 (continuous extension; the closed
forms are undefined there).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DomainError, Environment, ReceiverKind, ReceiverSpec
from .numerics import erfc, integrate_finite

__all__ = [
    "ChannelQuery",
    "fa_fraction",
    "ps_point_concentration",
    "ps_fraction_exact",
    "ps_fraction_by_quadrature",
    "ps_fraction_uca",
    "fraction",
]

# erfc(30) ~ 2.6e-393 underflows double precision
ERFC_CUTOFF = 30.0


def _check(x, t, D, r_r):
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    if D < 0:
        raise DomainError("diffusion coefficient must be nonnegative")
    if r_r <= 0:
        raise DomainError("receiver radius must be positive")
    if np.any(x < r_r):
        raise DomainError(f"transmitter distance must be >= receiver radius {r_r}")
    if np.any(t < 0):
        raise DomainError("time must be >= 0")
    return x, t


def _scalar_if_0d(arr):
    return arr.item() if np.ndim(arr) == 0 else arr


def fa_fraction(x, t, D: float, r_r: float):
    """Fraction of a pulse absorbed by a fully absorbing sphere up to time ``t``.

    ``(r_r / x) * erfc((x - r_r) / sqrt(4 D t))``
    """
    x, t = _check(x, t, D, r_r)
    x, t = np.broadcast_arrays(x, t)
    out = np.zeros(x.shape)
    live = (t > 0) & (D > 0)
    if np.any(live):
        arg = (x[live] - r_r) / np.sqrt(4.0 * D * t[live])
        val = (r_r / x[live]) * erfc(arg)
        out[live] = np.where(arg > ERFC_CUTOFF, 0.0, val)
    # no motion: only a transmitter on the surface is absorbed
    if D == 0:
        out[(t > 0) & (x == r_r)] = 1.0
    return _scalar_if_0d(out)


def ps_point_concentration(x, t, D: float):
    """Green's function of free 3-D diffusion, per emitted molecule (um^-3)."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0) or D <= 0:
        raise DomainError("point concentration needs t > 0 and D > 0")
    four_dt = 4.0 * D * t
    return _scalar_if_0d((math.pi * four_dt) ** -1.5 * np.exp(-(x * x) / four_dt))


def ps_fraction_exact(x, t, D: float, r_r: float):
    """Fraction of a pulse inside a passive sphere at time ``t``.

    Exact integral of the Gaussian concentration over the receiver volume; no
    uniform-concentration assumption. The erf pair is evaluated through erfc
    so nothing cancels when the transmitter is far away.
    """
    x, t = _check(x, t, D, r_r)
    if np.any(x == 0):
        raise DomainError("distance must be nonzero")
    x, t = np.broadcast_arrays(x, t)
    out = np.zeros(x.shape)
    live = (t > 0) & (D > 0)
    if np.any(live):
        xl = x[live]
        s = np.sqrt(D * t[live])
        # erf((r-x)/2s) + erf((r+x)/2s) == erfc((x-r)/2s) - erfc((x+r)/2s)
        erf_part = 0.5 * (erfc((xl - r_r) / (2.0 * s)) - erfc((xl + r_r) / (2.0 * s)))
        near = np.exp(-((xl - r_r) ** 2) / (4.0 * s * s))
        # exp(-(x+r)^2/4Dt) - exp(-(x-r)^2/4Dt) == near * expm1(-x r / Dt)
        exp_part = s / (math.sqrt(math.pi) * xl) * near * np.expm1(-xl * r_r / (s * s))
        out[live] = np.clip(erf_part + exp_part, 0.0, 1.0)
    return _scalar_if_0d(out)


def ps_fraction_by_quadrature(
    x: float, t: float, D: float, r_r: float, rel_tol: float = 1e-12, abs_tol: float = 1e-14
) -> float:
    """Passive fraction by direct quadrature of the concentration over the sphere.

    Averaging the Gaussian over a shell of radius ``rho`` leaves the 1-D integral

        int_0^r_r 4 pi rho^2 (4 pi D t)^-3/2 exp(-(rho^2 + x^2)/4Dt) sinh(k)/k d rho,
        k = rho x / (2 D t)

    which is written below in an overflow-free form. Used as an independent
    check of :func:`ps_fraction_exact`.
    """
    x, t = float(x), float(t)
    _check(x, t, D, r_r)
    if t == 0 or D == 0:
        return 0.0
    dt = D * t
    pref = 4.0 * math.pi * (4.0 * math.pi * dt) ** -1.5 * dt / x

    def shell(rho):
        return pref * rho * np.exp(-((x - rho) ** 2) / (4.0 * dt)) * -np.expm1(-rho * x / dt)

    return integrate_finite(shell, 0.0, r_r, rel_tol=rel_tol, abs_tol=abs_tol).value


def ps_fraction_uca(x, t, D: float, r_r: float):
    """Passive fraction under the uniform-concentration approximation.

    Centre concentration times receiver volume. Only accurate when the
    transmitter is far from the receiver compared with its radius.
    """
    x, t = _check(x, t, D, r_r)
    x, t = np.broadcast_arrays(x, t)
    out = np.zeros(x.shape)
    live = (t > 0) & (D > 0)
    if np.any(live):
        out[live] = ps_point_concentration(x[live], t[live], D) * (4.0 / 3.0 * math.pi * r_r**3)
    return _scalar_if_0d(out)


def fraction(kind: ReceiverKind, x, t, D: float, r_r: float):
    """Dispatch to the exact per-transmitter response for ``kind``."""
    if ReceiverKind.parse(kind) is ReceiverKind.FULLY_ABSORBING:
        return fa_fraction(x, t, D, r_r)
    return ps_fraction_exact(x, t, D, r_r)


@dataclass(frozen=True)
class ChannelQuery:
    distance_x: float
    time: float
    env: Environment
    receiver: ReceiverSpec

    def __post_init__(self):
        if self.distance_x < self.receiver.radius_rr:
            raise DomainError(
                f"distance {self.distance_x} lies inside the receiver (r_r={self.receiver.radius_rr})"
            )
        if self.time < 0:
            raise DomainError("time must be >= 0")

    @property
    def _args(self):
        return (self.distance_x, self.time, self.env.diffusion_coefficient, self.receiver.radius_rr)

    def fa_fraction(self) -> float:
        if self.receiver.kind is not ReceiverKind.FULLY_ABSORBING:
            raise DomainError("fa_fraction needs a fully absorbing receiver")
        return fa_fraction(*self._args)

    def ps_point_concentration(self) -> float:
        return ps_point_concentration(self.distance_x, self.time, self.env.diffusion_coefficient)

    def ps_fraction_exact(self) -> float:
        if self.receiver.kind is not ReceiverKind.PASSIVE:
            raise DomainError("ps_fraction_exact needs a passive receiver")
        return ps_fraction_exact(*self._args)

    def ps_fraction_by_quadrature(self) -> float:
        if self.receiver.kind is not ReceiverKind.PASSIVE:
            raise DomainError("ps_fraction_by_quadrature needs a passive receiver")
        return ps_fraction_by_quadrature(*self._args)

    def ps_fraction_uca(self) -> float:
        return ps_fraction_uca(*self._args)

    def fraction(self) -> float:
        return fraction(self.receiver.kind, *self._args)
