"""Expected collective signal at the receiver.

The signal from a Poisson field of transmitters is split into the part due to
the closest transmitter and the part due to all others. By Campbell's theorem

    all(t)        = 4 pi N lambda_a  int_{r_r}^inf  F(x, t) x^2 dx
    nearest(t)    = N int_{r_r}^inf  F(x, t) f(x) dx
    interferer(t) = N int_{r_r}^inf  f(x) [4 pi lambda_a int_x^inf F(r, t) r^2 dr] dx

where ``F`` is the single-transmitter response and ``f`` the closest-distance
density. For the fully absorbing receiver ``all`` has the closed form

    4 N sqrt(pi) lambda_a r_r (D sqrt(pi) t + 2 r_r sqrt(D t)).

Times are elapsed since the common emission at t = 0.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import channel
from .core import DomainError, ReceiverKind, Scenario
from .geometry import nearest_pdf_3d
from .numerics import DEFAULT_ABS_TOL, DEFAULT_REL_TOL, integrate_segments, integrate_semi_infinite

__all__ = [
    "Method",
    "Component",
    "ExpectationBreakdown",
    "e_nearest",
    "e_interferers",
    "e_all_campbell",
    "e_nearest_fa",
    "e_interferers_fa",
    "e_all_fa_closed",
    "e_all_fa_net",
    "e_nearest_ps",
    "e_interferers_ps",
    "e_all_ps",
    "e_all_ps_net",
    "breakdown",
    "expected_curve",
    "net_change_curve",
    "truncation_tail",
]


class Method(str, enum.Enum):
    CLOSED_FORM = "closed_form"
    QUADRATURE = "quadrature"


class Component(str, enum.Enum):
    NEAREST = "nearest"
    INTERFERERS = "interferers"
    ALL = "all"

    @classmethod
    def parse(cls, value) -> "Component":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"aggregate": cls.INTERFERERS, "interference": cls.INTERFERERS, "interferer": cls.INTERFERERS}
        return aliases.get(key) or cls(key)


@dataclass(frozen=True)
class ExpectationBreakdown:
    e_nearest: float
    e_interferers: float
    e_all: float
    method: Method


def _length_scale(s: Scenario, t: float) -> float:
    """Decay length of the integrands beyond r_r, used to place the quadrature map."""
    diff = 2.0 * math.sqrt(s.D * t) if t > 0 else s.r_r
    lengths = [diff, s.r_r]
    if s.lambda_a > 0:
        lengths.append((3.0 / (4.0 * math.pi * s.lambda_a)) ** (1.0 / 3.0))
    return max(min(lengths), 1e-6 * s.r_r)


def _response(s: Scenario, kind: ReceiverKind):
    D, r_r = s.D, s.r_r
    if kind is ReceiverKind.FULLY_ABSORBING:
        return lambda x, t: channel.fa_fraction(x, t, D, r_r)
    return lambda x, t: channel.ps_fraction_exact(x, t, D, r_r)


def _kind(s: Scenario, kind) -> ReceiverKind:
    return s.kind if kind is None else ReceiverKind.parse(kind)


def _check_time(t):
    if t < 0:
        raise DomainError("time must be >= 0")


def e_all_campbell(
    s: Scenario, t: float, kind=None, rel_tol: float = DEFAULT_REL_TOL, abs_tol: float = DEFAULT_ABS_TOL
) -> float:
    """Expected total count by quadrature of the single-transmitter response.

    Serves both receivers; for the absorbing one it is the independent check
    of :func:`e_all_fa_closed`.
    """
    _check_time(t)
    kind = _kind(s, kind)
    if t == 0 or s.lambda_a == 0:
        return 0.0
    F = _response(s, kind)
    res = integrate_semi_infinite(
        lambda x: F(x, t) * x * x, s.r_r, rel_tol=rel_tol, abs_tol=abs_tol, scale=_length_scale(s, t)
    )
    return 4.0 * math.pi * s.n_tx * s.lambda_a * res.value


def e_nearest(
    s: Scenario, t: float, kind=None, rel_tol: float = DEFAULT_REL_TOL, abs_tol: float = DEFAULT_ABS_TOL
) -> float:
    """Expected count due to the closest transmitter."""
    _check_time(t)
    kind = _kind(s, kind)
    if t == 0 or s.lambda_a == 0:
        return 0.0
    F = _response(s, kind)
    lam, r_r = s.lambda_a, s.r_r
    res = integrate_semi_infinite(
        lambda x: F(x, t) * nearest_pdf_3d(x, lam, r_r),
        r_r,
        rel_tol=rel_tol,
        abs_tol=abs_tol,
        scale=_length_scale(s, t),
    )
    return s.n_tx * res.value


def _tail_campbell(F, t, x0, scale, rel_tol, abs_tol):
    return integrate_semi_infinite(
        lambda r: F(r, t) * r * r, x0, rel_tol=rel_tol, abs_tol=abs_tol, scale=scale
    ).value


def e_interferers(
    s: Scenario, t: float, kind=None, rel_tol: float = DEFAULT_REL_TOL, abs_tol: float = DEFAULT_ABS_TOL
) -> float:
    """Expected count due to every transmitter except the closest one.

    Given the closest transmitter at distance ``x``, the others form a Poisson
    field beyond ``x``; the inner Campbell integral over ``[x, inf)`` is
    averaged against the closest-distance density. The tolerance budget is
    split evenly between the inner and outer quadratures.

    For each batch of outer nodes the inner integrals share work: one tail
    integral beyond the largest node, then the gaps between sorted nodes,
    accumulated downwards.
    """
    _check_time(t)
    kind = _kind(s, kind)
    if t == 0 or s.lambda_a == 0:
        return 0.0
    F = _response(s, kind)
    lam, r_r = s.lambda_a, s.r_r
    scale = _length_scale(s, t)
    inner_rel = rel_tol / 2
    campbell = lambda r: F(r, t) * r * r

    def outer(xs):
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        order = np.argsort(xs, kind="stable")
        sx = xs[order]
        tail = _tail_campbell(F, t, float(sx[-1]), scale, inner_rel, abs_tol)
        gaps = integrate_segments(campbell, sx, rel_tol=inner_rel, abs_tol=abs_tol)
        inner_sorted = tail + np.concatenate([np.cumsum(gaps[::-1])[::-1], [0.0]])
        inner = np.empty_like(xs)
        inner[order] = inner_sorted
        return nearest_pdf_3d(xs, lam, r_r) * inner

    res = integrate_semi_infinite(outer, r_r, rel_tol=rel_tol / 2, abs_tol=abs_tol, scale=scale)
    return s.n_tx * 4.0 * math.pi * lam * res.value


def e_all_fa_closed(s: Scenario, t):
    """Closed-form expected cumulative absorbed count at time ``t`` (any shape)."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise DomainError("time must be >= 0")
    D, r_r = s.D, s.r_r
    out = 4.0 * s.n_tx * math.sqrt(math.pi) * s.lambda_a * r_r * (
        D * math.sqrt(math.pi) * t_arr + 2.0 * r_r * np.sqrt(D * t_arr)
    )
    return out.item() if out.ndim == 0 else out


def e_all_fa_net(s: Scenario, t, t_ss: float):
    """Closed-form expected absorbed count during ``[t, t + t_ss]``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or not t_ss > 0:
        raise DomainError("need t >= 0 and t_ss > 0")
    D, r_r = s.D, s.r_r
    out = 4.0 * s.n_tx * math.sqrt(math.pi) * s.lambda_a * r_r * (
        D * math.sqrt(math.pi) * t_ss + 2.0 * math.sqrt(D) * r_r * (np.sqrt(t_ss + t_arr) - np.sqrt(t_arr))
    )
    return out.item() if out.ndim == 0 else out


def e_nearest_fa(s: Scenario, t: float, **kw) -> float:
    return e_nearest(s, t, ReceiverKind.FULLY_ABSORBING, **kw)


def e_interferers_fa(s: Scenario, t: float, **kw) -> float:
    return e_interferers(s, t, ReceiverKind.FULLY_ABSORBING, **kw)


def e_nearest_ps(s: Scenario, t: float, **kw) -> float:
    return e_nearest(s, t, ReceiverKind.PASSIVE, **kw)


def e_interferers_ps(s: Scenario, t: float, **kw) -> float:
    return e_interferers(s, t, ReceiverKind.PASSIVE, **kw)


def e_all_ps(s: Scenario, t: float, **kw) -> float:
    return e_all_campbell(s, t, ReceiverKind.PASSIVE, **kw)


def e_all_ps_net(s: Scenario, t: float, t_ss: float, **kw) -> float:
    return e_all_ps(s, t + t_ss, **kw) - e_all_ps(s, t, **kw)


def breakdown(s: Scenario, t: float, kind=None, **kw) -> ExpectationBreakdown:
    kind = _kind(s, kind)
    near = e_nearest(s, t, kind, **kw)
    interf = e_interferers(s, t, kind, **kw)
    if kind is ReceiverKind.FULLY_ABSORBING:
        return ExpectationBreakdown(near, interf, e_all_fa_closed(s, t), Method.CLOSED_FORM)
    return ExpectationBreakdown(near, interf, e_all_ps(s, t, **kw), Method.QUADRATURE)


def _evaluate(s: Scenario, kind: ReceiverKind, component: Component, t: float, kw) -> float:
    if component is Component.NEAREST:
        return e_nearest(s, t, kind, **kw)
    if component is Component.INTERFERERS:
        return e_interferers(s, t, kind, **kw)
    if kind is ReceiverKind.FULLY_ABSORBING:
        return e_all_fa_closed(s, t)
    return e_all_ps(s, t, **kw)


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def expected_curve(
    s: Scenario, kind=None, component="all", t_grid: Sequence[float] | None = None, workers: int = 1, **kw
) -> np.ndarray:
    """Expected count at each time of ``t_grid`` (default: the scenario grid)."""
    kind = _kind(s, kind)
    component = Component.parse(component)
    grid = s.sampling.t_grid if t_grid is None else t_grid
    return np.array(_map(lambda t: _evaluate(s, kind, component, float(t), kw), list(grid), workers))


def net_change_curve(
    s: Scenario,
    kind=None,
    component="all",
    t_grid: Sequence[float] | None = None,
    t_ss: float | None = None,
    workers: int = 1,
    **kw,
) -> np.ndarray:
    """Expected change of the count over ``[t, t + t_ss]`` for each grid time.

    The absorbing total uses its closed form; everything else is a difference
    of cumulative values. Times shared between ``t`` and ``t + t_ss`` are
    evaluated once.
    """
    kind = _kind(s, kind)
    component = Component.parse(component)
    grid = np.asarray(s.sampling.t_grid if t_grid is None else t_grid, dtype=float)
    t_ss = s.sampling.sampling_interval_tss if t_ss is None else t_ss
    if kind is ReceiverKind.FULLY_ABSORBING and component is Component.ALL:
        return np.asarray(e_all_fa_net(s, grid, t_ss), dtype=float).reshape(grid.shape)
    # round to merge t + t_ss with the next grid point despite float noise
    key = lambda t: round(float(t), 12)
    needed = sorted({key(t) for t in grid} | {key(t + t_ss) for t in grid})
    values = dict(zip(needed, _map(lambda t: _evaluate(s, kind, component, t, kw), needed, workers)))
    return np.array([values[key(t + t_ss)] - values[key(t)] for t in grid])


def truncation_tail(
    s: Scenario, t: float, kind=None, t_ss: float | None = None, R: float | None = None
) -> float:
    """Expected contribution of transmitters beyond the placement radius ``R``.

    With ``t_ss`` the tail of the net change over ``[t, t + t_ss]`` is returned
    instead of the tail of the cumulative count. Zero for infinite ``R``.
    """
    kind = _kind(s, kind)
    R = s.max_placement_radius if R is None else R
    if not math.isfinite(R) or s.lambda_a == 0:
        return 0.0
    F = _response(s, kind)
    if t_ss is None:
        g = lambda x: F(x, t) * x * x
        t_ref = t
    else:
        g = lambda x: (F(x, t + t_ss) - F(x, t)) * x * x
        t_ref = t + t_ss
    if t_ref == 0:
        return 0.0
    res = integrate_semi_infinite(g, R, rel_tol=1e-8, abs_tol=1e-14, scale=max(_length_scale(s, t_ref), 1.0))
    return 4.0 * math.pi * s.n_tx * s.lambda_a * res.value
