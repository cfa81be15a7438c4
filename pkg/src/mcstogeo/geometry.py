"""Poisson transmitter fields outside a spherical receiver.

Nearest-transmitter distance laws in 3-D and 2-D, sampling of homogeneous
Poisson realizations in a spherical shell ``r_r <= |p| <= R``, and
nearest-point identification.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import _rng
from .core import DomainError

__all__ = [
    "PPPRealization",
    "nearest_pdf_3d",
    "nearest_cdf_3d",
    "nearest_quantile_3d",
    "nearest_pdf_2d",
    "nearest_cdf_2d",
    "nearest_quantile_2d",
    "sample_ppp_shell",
    "sample_nearest_distances",
    "identify_nearest",
    "shell_volume",
    "prob_no_point_within",
    "write_realizations_csv",
]


def _check_density(lambda_a):
    if not lambda_a > 0:
        raise DomainError(f"active density must be positive, got {lambda_a}")


def _ball(x):
    return 4.0 / 3.0 * math.pi * x**3


def shell_volume(r_r: float, R: float) -> float:
    return _ball(R) - _ball(r_r)


def nearest_pdf_3d(x, lambda_a: float, r_r: float):
    """Density of the distance from the receiver centre to the closest transmitter.

    ``4 pi lambda_a x^2 exp(-lambda_a (4/3) pi (x^3 - r_r^3))`` for ``x >= r_r``, 0 below.
    """
    _check_density(lambda_a)
    x = np.asarray(x, dtype=float)
    xc = np.maximum(x, r_r)
    out = 4.0 * math.pi * lambda_a * xc * xc * np.exp(-lambda_a * 4.0 / 3.0 * math.pi * (xc**3 - r_r**3))
    out = np.where(x < r_r, 0.0, out)
    return out.item() if out.ndim == 0 else out


def nearest_cdf_3d(x, lambda_a: float, r_r: float):
    _check_density(lambda_a)
    x = np.asarray(x, dtype=float)
    xc = np.maximum(x, r_r)
    out = -np.expm1(-lambda_a * 4.0 / 3.0 * math.pi * (xc**3 - r_r**3))
    return out.item() if out.ndim == 0 else out


def nearest_quantile_3d(u, lambda_a: float, r_r: float):
    """Inverse of :func:`nearest_cdf_3d`."""
    _check_density(lambda_a)
    u = np.asarray(u, dtype=float)
    out = np.cbrt(r_r**3 - np.log1p(-u) * 3.0 / (4.0 * math.pi * lambda_a))
    return out.item() if out.ndim == 0 else out


def nearest_pdf_2d(r, lambda_a: float, r_r: float):
    """Planar analogue: ``2 pi lambda_a r exp(-lambda_a pi (r^2 - r_r^2))``.

    Here ``lambda_a`` is an areal density (um^-2).
    """
    _check_density(lambda_a)
    r = np.asarray(r, dtype=float)
    rc = np.maximum(r, r_r)
    out = 2.0 * math.pi * lambda_a * rc * np.exp(-lambda_a * math.pi * (rc * rc - r_r * r_r))
    out = np.where(r < r_r, 0.0, out)
    return out.item() if out.ndim == 0 else out


def nearest_cdf_2d(r, lambda_a: float, r_r: float):
    _check_density(lambda_a)
    r = np.asarray(r, dtype=float)
    rc = np.maximum(r, r_r)
    out = -np.expm1(-lambda_a * math.pi * (rc * rc - r_r * r_r))
    return out.item() if out.ndim == 0 else out


def nearest_quantile_2d(u, lambda_a: float, r_r: float):
    _check_density(lambda_a)
    u = np.asarray(u, dtype=float)
    out = np.sqrt(r_r * r_r - np.log1p(-u) / (math.pi * lambda_a))
    return out.item() if out.ndim == 0 else out


def prob_no_point_within(x, lambda_a: float, r_r: float):
    """Void probability of the shell ``r_r <= |p| < x``."""
    return 1.0 - nearest_cdf_3d(x, lambda_a, r_r) if lambda_a > 0 else 1.0


@dataclass(frozen=True)
class PPPRealization:
    positions: np.ndarray  # (n, 3), um
    nearest_index: int | None
    generating_seed: int
    shell: tuple[float, float]
    realization_id: int = 0

    @property
    def radii(self) -> np.ndarray:
        return np.sqrt(np.einsum("ij,ij->i", self.positions, self.positions))

    def __len__(self) -> int:
        return len(self.positions)


def identify_nearest(points) -> int | None:
    """Index of the point closest to the origin; lowest index wins ties."""
    if isinstance(points, PPPRealization):
        points = points.positions
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        return None
    # argmin returns the first occurrence, which is the tie rule
    return int(np.argmin(np.einsum("ij,ij->i", pts, pts)))


def sample_ppp_shell(
    lambda_a: float, r_r: float, R: float, seed: int, realization: int = 0
) -> PPPRealization:
    """Draw one homogeneous Poisson realization in the shell ``[r_r, R]``.

    The stream depends only on ``(seed, realization)``, so realization ``i``
    is the same whether it is drawn first, last or on another thread.
    """
    if not R > r_r:
        raise DomainError(f"placement radius R={R} must exceed receiver radius {r_r}")
    if not math.isfinite(R):
        raise DomainError("sampling needs a finite placement radius")
    if lambda_a < 0:
        raise DomainError("density must be nonnegative")
    rng = _rng.stream(seed, realization)
    n = int(rng.poisson(lambda_a * shell_volume(r_r, R))) if lambda_a > 0 else 0
    u = rng.random((n, 3))
    # radius from the inverse CDF of the r^2 law on [r_r, R]
    r = np.cbrt(r_r**3 + u[:, 0] * (R**3 - r_r**3))
    r = np.clip(r, r_r, R)
    cos_theta = 2.0 * u[:, 1] - 1.0
    sin_theta = np.sqrt(np.maximum(0.0, 1.0 - cos_theta * cos_theta))
    phi = 2.0 * math.pi * u[:, 2]
    pos = np.column_stack([
        r * sin_theta * np.cos(phi),
        r * sin_theta * np.sin(phi),
        r * cos_theta,
    ])
    return PPPRealization(pos, identify_nearest(pos), int(seed), (float(r_r), float(R)), int(realization))


def sample_nearest_distances(
    lambda_a: float, r_r: float, R: float, n: int, seed: int
) -> np.ndarray:
    """Closest-transmitter distance for realizations ``0..n-1``; ``inf`` when empty."""
    out = np.full(n, np.inf)
    for i in range(n):
        real = sample_ppp_shell(lambda_a, r_r, R, seed, i)
        if real.nearest_index is not None:
            out[i] = real.radii[real.nearest_index]
    return out


def write_realizations_csv(path, realizations: Iterable[PPPRealization]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["realization_id", "point_id", "x", "y", "z"])
        for real in realizations:
            for j, (x, y, z) in enumerate(real.positions):
                w.writerow([real.realization_id, j, repr(float(x)), repr(float(y)), repr(float(z))])
