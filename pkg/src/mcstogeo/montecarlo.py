"""Monte Carlo over transmitter placements.

Each realization places transmitters in the shell ``[r_r, R]`` and sums the
exact single-transmitter response of every transmitter; averaging over
realizations estimates the expected collective signal without tracking any
molecule.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import channel
from .core import DomainError, ReceiverKind, Scenario
from .expectation import Component
from .geometry import sample_ppp_shell

__all__ = [
    "MCEstimate",
    "mc_curve",
    "mc_curves",
    "mc_realization_values",
    "ks_statistic",
    "kolmogorov_sf",
    "write_mc_csv",
]

QUANTITIES = ("count", "net")


@dataclass(frozen=True)
class MCEstimate:
    t: float
    mean: float
    std_error: float
    n_realizations: int
    component: Component


def mc_realization_values(
    s: Scenario, kind, realization, t_grid: Sequence[float], quantity: str = "count"
) -> np.ndarray:
    """``(3, len(t_grid))`` array of nearest / interferer / all values for one realization."""
    kind = ReceiverKind.parse(kind)
    t = np.asarray(t_grid, dtype=float)
    radii = realization.radii
    if len(radii) == 0:
        return np.zeros((3, len(t)))

    def response(times):
        return s.n_tx * channel.fraction(kind, radii[:, None], times[None, :], s.D, s.r_r)

    per_point = response(t)
    if quantity == "net":
        per_point = response(t + s.sampling.sampling_interval_tss) - per_point
    near_idx = realization.nearest_index
    nearest = per_point[near_idx]
    others = np.delete(per_point, near_idx, axis=0)
    interferers = others.sum(axis=0) if len(others) else np.zeros(len(t))
    # build "all" from the parts so the partition is exact per realization
    return np.stack([nearest, interferers, nearest + interferers])


def _mc_values(s, kind, n_realizations, seed, quantity, grid, workers):
    if n_realizations < 1:
        raise ValueError("need at least one realization")
    if quantity not in QUANTITIES:
        raise ValueError(f"quantity must be one of {QUANTITIES}")
    R = s.max_placement_radius
    if not math.isfinite(R):
        raise DomainError("Monte Carlo needs a finite max_placement_radius")

    def one(i):
        real = sample_ppp_shell(s.lambda_a, s.r_r, R, seed, i)
        return mc_realization_values(s, kind, real, grid, quantity)

    if workers <= 1:
        return np.array([one(i) for i in range(n_realizations)])
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return np.array(list(ex.map(one, range(n_realizations))))


def _estimates(values, grid, component):
    n = len(values)
    # numpy reduces along axis 0 pairwise, in index order
    mean = values.mean(axis=0)
    if n > 1:
        se = values.std(axis=0, ddof=1) / math.sqrt(n)
    else:
        se = np.full(len(grid), math.inf)
    return [MCEstimate(float(t), float(m), float(e), n, component) for t, m, e in zip(grid, mean, se)]


def mc_curves(
    s: Scenario,
    receiver_kind=None,
    n_realizations: int = 10_000,
    seed: int = 0,
    quantity: str = "count",
    t_grid: Sequence[float] | None = None,
    workers: int = 1,
) -> dict[Component, list[MCEstimate]]:
    """All three components from one set of realizations."""
    kind = s.kind if receiver_kind is None else ReceiverKind.parse(receiver_kind)
    grid = np.asarray(s.sampling.t_grid if t_grid is None else t_grid, dtype=float)
    values = _mc_values(s, kind, n_realizations, seed, quantity, grid, workers)
    return {c: _estimates(values[:, row], grid, c) for row, c in enumerate(Component)}


def mc_curve(
    s: Scenario,
    receiver_kind=None,
    component="all",
    n_realizations: int = 10_000,
    seed: int = 0,
    quantity: str = "count",
    t_grid: Sequence[float] | None = None,
    workers: int = 1,
) -> list[MCEstimate]:
    """Monte Carlo estimate of the expected signal at each grid time.

    ``quantity="count"`` estimates the count at ``t``; ``"net"`` the change over
    ``[t, t + T_ss]``. Realization ``i`` uses the stream ``(seed, i)``, and the
    per-realization values are reduced in index order, so the result does not
    depend on ``workers``. An empty realization contributes 0 to every
    component.
    """
    return mc_curves(s, receiver_kind, n_realizations, seed, quantity, t_grid, workers)[
        Component.parse(component)
    ]


def kolmogorov_sf(x):
    """Survival function of the Kolmogorov distribution, ``P(K > x)``.

    ``2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 x^2)``; the alternating series is
    summed until terms drop below 1e-16. Small ``x`` returns 1.
    """
    x = float(x)
    if x <= 0.2:
        # series converges too slowly here and the value is 1 to 1e-20
        return 1.0
    total, k = 0.0, 1
    while True:
        term = math.exp(-2.0 * k * k * x * x)
        total += term if k % 2 else -term
        if term < 1e-16:
            break
        k += 1
    return min(1.0, max(0.0, 2.0 * total))


def ks_statistic(samples, cdf: Callable) -> tuple[float, float]:
    """One-sample Kolmogorov-Smirnov statistic and asymptotic p-value.

    ``samples`` must already be sorted ascending. The p-value uses Stephens'
    small-sample correction ``(sqrt(n) + 0.12 + 0.11/sqrt(n)) * D``.
    """
    x = np.asarray(samples, dtype=float)
    n = len(x)
    if n < 10:
        raise ValueError("need at least 10 samples")
    if np.any(np.diff(x) < 0):
        raise ValueError("samples must be sorted ascending")
    F = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    d_plus = np.max(i / n - F)
    d_minus = np.max(F - (i - 1) / n)
    d = float(max(d_plus, d_minus))
    sqrt_n = math.sqrt(n)
    return d, kolmogorov_sf((sqrt_n + 0.12 + 0.11 / sqrt_n) * d)


def write_mc_csv(path, estimates: Sequence[MCEstimate], receiver, seed: int) -> None:
    receiver = ReceiverKind.parse(receiver).value
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "mean", "std_error", "component", "receiver", "n_realizations", "seed"])
        for e in estimates:
            w.writerow([repr(e.t), repr(e.mean), repr(e.std_error), e.component.value, receiver,
                        e.n_realizations, seed])
