"""Domain types, canonical units and scenario validation.

Every engine works in micrometres and seconds. Diffusion coefficients are
stored in um^2/s, densities in um^-3. The receiver sits at the origin and all
transmitter distances are radial.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, replace
from typing import Sequence

__all__ = [
    "DomainError",
    "ScenarioError",
    "ReceiverKind",
    "Environment",
    "ReceiverSpec",
    "TransmitterField",
    "SamplingScheme",
    "Scenario",
    "validate_scenario",
    "parse_quantity",
    "M2_PER_S_TO_UM2_PER_S",
]

# 1 m^2/s = 1e12 um^2/s
M2_PER_S_TO_UM2_PER_S = 1e12


class DomainError(ValueError):
    """An argument lies outside the domain of a formula."""


class ScenarioError(ValueError):
    """One or more scenario invariants are violated.

    ``problems`` holds ``(field_path, message)`` pairs, one per violation.
    """

    def __init__(self, problems: Sequence[tuple[str, str]]):
        self.problems = list(problems)
        lines = "; ".join(f"{path}: {msg}" for path, msg in self.problems)
        super().__init__(f"invalid scenario ({len(self.problems)} problem(s)): {lines}")


class ReceiverKind(str, enum.Enum):
    FULLY_ABSORBING = "absorbing"
    PASSIVE = "passive"

    @classmethod
    def parse(cls, value: "str | ReceiverKind") -> "ReceiverKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {
            "absorbing": cls.FULLY_ABSORBING,
            "fully_absorbing": cls.FULLY_ABSORBING,
            "fa": cls.FULLY_ABSORBING,
            "active": cls.FULLY_ABSORBING,
            "passive": cls.PASSIVE,
            "ps": cls.PASSIVE,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown receiver kind {value!r}") from None


@dataclass(frozen=True)
class Environment:
    diffusion_coefficient: float  # um^2/s

    @classmethod
    def from_si(cls, d_m2_per_s: float) -> "Environment":
        return cls(d_m2_per_s * M2_PER_S_TO_UM2_PER_S)

    @property
    def diffusion_coefficient_si(self) -> float:
        return self.diffusion_coefficient / M2_PER_S_TO_UM2_PER_S


@dataclass(frozen=True)
class ReceiverSpec:
    kind: ReceiverKind
    radius_rr: float  # um

    @property
    def volume(self) -> float:
        return 4.0 / 3.0 * math.pi * self.radius_rr**3


@dataclass(frozen=True)
class TransmitterField:
    density_lambda: float  # um^-3
    activity_rho: float = 1.0
    pulse_amplitude_ntx: float = 1e4
    emission_time: float = 0.0

    @property
    def active_density(self) -> float:
        """Density of active transmitters, lambda * rho_a."""
        return self.density_lambda * self.activity_rho


@dataclass(frozen=True)
class SamplingScheme:
    t_grid: tuple[float, ...]
    sampling_interval_tss: float

    @classmethod
    def uniform(cls, t_end: float, tss: float, t_start: float = 0.0) -> "SamplingScheme":
        """Grid ``t_start, t_start + tss, ...`` up to and including ``t_end``."""
        n = int(math.floor((t_end - t_start) / tss + 1e-9))
        # multiply rather than accumulate so grid points are reproducible
        grid = tuple(t_start + k * tss for k in range(n + 1))
        return cls(grid, tss)


@dataclass(frozen=True)
class Scenario:
    environment: Environment
    receiver: ReceiverSpec
    field: TransmitterField
    sampling: SamplingScheme
    max_placement_radius: float = math.inf

    # shorthands used throughout the engines
    @property
    def D(self) -> float:
        return self.environment.diffusion_coefficient

    @property
    def r_r(self) -> float:
        return self.receiver.radius_rr

    @property
    def lambda_a(self) -> float:
        return self.field.active_density

    @property
    def n_tx(self) -> float:
        return self.field.pulse_amplitude_ntx

    @property
    def kind(self) -> ReceiverKind:
        return self.receiver.kind

    def with_kind(self, kind: "ReceiverKind | str") -> "Scenario":
        return replace(self, receiver=replace(self.receiver, kind=ReceiverKind.parse(kind)))


def _finite(value) -> bool:
    try:
        return math.isfinite(value)
    except TypeError:
        return False


def validate_scenario(s: Scenario) -> Scenario:
    """Return ``s`` unchanged if every invariant holds.

    Raises
    ------
    ScenarioError
        Listing every violated invariant with its field path.
    """
    problems: list[tuple[str, str]] = []

    d = s.environment.diffusion_coefficient
    if not _finite(d) or d <= 0:
        problems.append(("environment.diffusion_coefficient", "diffusion coefficient must be positive"))

    if not isinstance(s.receiver.kind, ReceiverKind):
        problems.append(("receiver.kind", f"unknown receiver kind {s.receiver.kind!r}"))
    rr = s.receiver.radius_rr
    if not _finite(rr) or rr <= 0:
        problems.append(("receiver.radius_rr", "radius must be positive"))

    f = s.field
    if not _finite(f.density_lambda) or f.density_lambda < 0:
        problems.append(("field.density_lambda", "density must be nonnegative"))
    if not _finite(f.activity_rho) or not 0 < f.activity_rho <= 1:
        problems.append(("field.activity_rho", "activity probability must lie in (0, 1]"))
    if not _finite(f.pulse_amplitude_ntx) or f.pulse_amplitude_ntx <= 0:
        problems.append(("field.pulse_amplitude_ntx", "pulse amplitude must be positive"))
    if f.emission_time != 0:
        problems.append(("field.emission_time", "emission time is fixed at 0"))

    grid = s.sampling.t_grid
    if len(grid) == 0:
        problems.append(("sampling.t_grid", "time grid is empty"))
    if any(not _finite(t) or t < 0 for t in grid):
        problems.append(("sampling.t_grid", "times must be finite and >= 0"))
    if any(b <= a for a, b in zip(grid, grid[1:])):
        problems.append(("sampling.t_grid", "times must be strictly increasing"))
    tss = s.sampling.sampling_interval_tss
    if not _finite(tss) or tss <= 0:
        problems.append(("sampling.sampling_interval_tss", "sampling interval must be positive"))

    R = s.max_placement_radius
    if math.isnan(R) or (math.isfinite(R) and _finite(rr) and R <= rr):
        problems.append(("max_placement_radius", "placement radius must exceed the receiver radius"))

    if problems:
        raise ScenarioError(problems)
    return s


# --- quantities with unit suffixes -------------------------------------------

_LENGTH = {"m": 1e6, "mm": 1e3, "um": 1.0, "µm": 1.0, "micron": 1.0, "nm": 1e-3}
_TIME = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "min": 60.0}

_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(.*?)\s*$")


def _unit_factor(unit: str, dimension: str) -> float:
    u = unit.replace(" ", "").replace("²", "^2").replace("³", "^3").replace("⁻", "^-")
    if dimension == "length":
        return _LENGTH[u]
    if dimension == "time":
        return _TIME[u]
    if dimension == "diffusivity":
        num, _, den = u.partition("/")
        base = num[:-2] if num.endswith("^2") else None
        return _LENGTH[base] ** 2 / _TIME[den]
    if dimension == "density":
        if u.endswith("^-3"):
            return 1.0 / _LENGTH[u[:-3]] ** 3
        if u.startswith("1/") and u.endswith("^3"):
            return 1.0 / _LENGTH[u[2:-2]] ** 3
        raise KeyError(u)
    if dimension == "areal_density":
        if u.endswith("^-2"):
            return 1.0 / _LENGTH[u[:-3]] ** 2
        raise KeyError(u)
    if dimension == "dimensionless":
        if u in ("", "1", "molecules"):
            return 1.0
        raise KeyError(u)
    raise ValueError(f"unknown dimension {dimension!r}")


_CANONICAL = {
    "length": "um",
    "time": "s",
    "diffusivity": "um^2/s",
    "density": "um^-3",
    "areal_density": "um^-2",
    "dimensionless": "",
}


def parse_quantity(value, dimension: str) -> float:
    """Convert ``value`` to canonical units (um, s, um^2/s, um^-3).

    Plain numbers are taken to be canonical already. Strings carry an explicit
    unit, e.g. ``"80 um^2/s"``, ``"8e-11 m^2/s"`` or ``"10 ms"``.
    """
    if isinstance(value, bool):
        raise ValueError(f"expected a {dimension} quantity, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    text = str(value).strip()
    if text.lower() in ("inf", "infinity", "+inf"):
        return math.inf
    m = _QUANTITY.match(text)
    if not m:
        raise ValueError(f"cannot parse quantity {value!r}")
    number, unit = float(m.group(1)), m.group(2)
    if unit.lower() in ("inf", "infinity"):
        return math.inf
    if not unit:
        return number
    try:
        return number * _unit_factor(unit, dimension)
    except KeyError:
        raise ValueError(
            f"unit {unit!r} is not a {dimension} unit (canonical: {_CANONICAL[dimension]})"
        ) from None
