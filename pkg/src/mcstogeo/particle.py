"""Particle-based Brownian simulation of the emitted molecules.

Every transmitter releases ``molecules_per_tx`` molecules at t = 0. Each step
moves every live molecule by an independent Gaussian displacement with
per-axis standard deviation ``sqrt(2 D dt)``.

* Fully absorbing receiver: a molecule found inside the sphere at the end of a
  step is absorbed and removed. ``IntraStepCorrection`` additionally absorbs a
  molecule that ends the step outside with probability
  ``exp(-(d_before * d_after) / (D dt))`` (``d`` = distance to the surface),
  the crossing probability of a Brownian bridge for a planar wall. The planar
  wall is an approximation for a sphere; it is good while ``sqrt(D dt)`` is
  small next to ``r_r``.
* Passive receiver: molecules never interact; the count is the number inside
  the sphere at each recording time.

A run draws from a single stream fixed by its seed; ensembles derive one seed
per run from ``(master_seed, placement, repetition)``, so results do not depend
on the number of worker threads.
"""

from __future__ import annotations

import csv
import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _rng
from .core import DomainError, ReceiverKind, SamplingScheme, Scenario
from .expectation import Component
from .geometry import PPPRealization, sample_ppp_shell

__all__ = [
    "AbsorptionMode",
    "ParticleSimConfig",
    "SimOutput",
    "SignalCurve",
    "EnsembleResult",
    "simulate_source",
    "simulate_realization",
    "simulate_ensemble",
    "write_ensemble_csv",
    "write_trace_csv",
]


class AbsorptionMode(str, enum.Enum):
    STEP_END_CHECK = "step_end"
    INTRA_STEP_CORRECTION = "intra_step"

    @classmethod
    def parse(cls, value) -> "AbsorptionMode":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {
            "stependcheck": cls.STEP_END_CHECK,
            "step_end_check": cls.STEP_END_CHECK,
            "intrastepcorrection": cls.INTRA_STEP_CORRECTION,
            "intra_step_correction": cls.INTRA_STEP_CORRECTION,
        }
        return aliases.get(key) or cls(key)


@dataclass(frozen=True)
class ParticleSimConfig:
    dt: float
    t_end: float
    molecules_per_tx: int
    record_scheme: SamplingScheme
    absorption_mode: AbsorptionMode = AbsorptionMode.STEP_END_CHECK

    def __post_init__(self):
        if not self.dt > 0:
            raise DomainError(f"time step must be positive, got {self.dt}")
        if self.molecules_per_tx < 0:
            raise DomainError("molecules_per_tx must be nonnegative")
        grid = self.record_scheme.t_grid
        if self.dt > self.record_scheme.sampling_interval_tss * (1 + 1e-12):
            raise DomainError("time step must not exceed the sampling interval")
        if grid and self.t_end < max(grid):
            raise DomainError("t_end must cover the last recording time")
        object.__setattr__(self, "absorption_mode", AbsorptionMode.parse(self.absorption_mode))
        self.record_steps  # validates grid alignment

    @property
    def record_steps(self) -> np.ndarray:
        """Step index of each recording time; recording times must be multiples of dt."""
        t = np.asarray(self.record_scheme.t_grid, dtype=float)
        steps = np.rint(t / self.dt)
        if np.any(np.abs(steps * self.dt - t) > 1e-9 * np.maximum(1.0, t)):
            raise DomainError("recording times must be integer multiples of dt")
        return steps.astype(np.int64)


@dataclass(frozen=True)
class SimOutput:
    """Raw molecule counts of one run at each recording time.

    For the absorbing receiver the counts are cumulative absorptions, for the
    passive receiver the number inside at that instant.
    """

    t: np.ndarray
    nearest: np.ndarray
    interferers: np.ndarray
    kind: ReceiverKind
    seed: int
    n_transmitters: int
    molecules_per_tx: int

    @property
    def total(self) -> np.ndarray:
        return self.nearest + self.interferers


def _simulate(
    starts: np.ndarray,
    n_molecules: int,
    D: float,
    r_r: float,
    dt: float,
    record_steps: np.ndarray,
    kind: ReceiverKind,
    rng: np.random.Generator,
    mode: AbsorptionMode,
) -> np.ndarray:
    """Counts per source, ``(n_sources, n_records)``."""
    n_src = len(starts)
    out = np.zeros((n_src, len(record_steps)), dtype=np.int64)
    if n_src == 0 or n_molecules == 0 or len(record_steps) == 0:
        return out
    n_steps = int(record_steps.max())
    src = np.repeat(np.arange(n_src), n_molecules)
    pos = np.repeat(np.asarray(starts, dtype=float), n_molecules, axis=0)
    sigma = math.sqrt(2.0 * D * dt)
    r = np.sqrt(np.einsum("ij,ij->i", pos, pos))
    absorbing = kind is ReceiverKind.FULLY_ABSORBING
    intra = mode is AbsorptionMode.INTRA_STEP_CORRECTION and D > 0
    absorbed = np.zeros(n_src, dtype=np.int64)

    def tally():
        if absorbing:
            return absorbed.copy()
        return np.bincount(src[r <= r_r], minlength=n_src)

    rec = 0
    while rec < len(record_steps) and record_steps[rec] == 0:
        out[:, rec] = tally()
        rec += 1
    for step in range(1, n_steps + 1):
        if len(pos):
            pos += rng.standard_normal(pos.shape) * sigma
            r_new = np.sqrt(np.einsum("ij,ij->i", pos, pos))
            if absorbing:
                hit = r_new <= r_r
                if intra:
                    outside = ~hit
                    gap_before = r[outside] - r_r
                    gap_after = r_new[outside] - r_r
                    p_cross = np.exp(-gap_before * gap_after / (D * dt))
                    hit[outside] = rng.random(len(gap_after)) < p_cross
                if hit.any():
                    absorbed += np.bincount(src[hit], minlength=n_src)
                    keep = ~hit
                    pos, r_new, src = pos[keep], r_new[keep], src[keep]
            r = r_new
        while rec < len(record_steps) and record_steps[rec] == step:
            out[:, rec] = tally()
            rec += 1
    return out


def simulate_source(
    start,
    n_molecules: int,
    D: float,
    r_r: float,
    dt: float,
    record_steps,
    kind: ReceiverKind,
    rng: np.random.Generator,
    mode: AbsorptionMode = AbsorptionMode.STEP_END_CHECK,
) -> np.ndarray:
    """Counts at ``record_steps`` for molecules released together at ``start``."""
    if D < 0 or dt <= 0:
        raise DomainError("need D >= 0 and dt > 0")
    starts = np.asarray(start, dtype=float).reshape(1, 3)
    steps = np.asarray(record_steps, dtype=np.int64)
    return _simulate(starts, n_molecules, D, r_r, dt, steps, ReceiverKind.parse(kind), rng,
                     AbsorptionMode.parse(mode))[0]


def simulate_realization(
    s: Scenario,
    cfg: ParticleSimConfig,
    realization: PPPRealization,
    seed: int,
    kind=None,
) -> SimOutput:
    """Simulate every molecule of every transmitter in ``realization``.

    All molecules advance together in one array driven by the single stream
    ``seed``; counts are split into the closest transmitter and the rest.
    """
    kind = s.kind if kind is None else ReceiverKind.parse(kind)
    steps = cfg.record_steps
    counts = _simulate(
        realization.positions, cfg.molecules_per_tx, s.D, s.r_r, cfg.dt, steps, kind,
        _rng.stream(seed), cfg.absorption_mode,
    )
    if realization.nearest_index is None:
        nearest = np.zeros(len(steps), dtype=np.int64)
        interferers = nearest.copy()
    else:
        nearest = counts[realization.nearest_index]
        interferers = counts.sum(axis=0) - nearest
    return SimOutput(
        np.asarray(cfg.record_scheme.t_grid, dtype=float), nearest, interferers, kind,
        int(seed), len(realization.positions), cfg.molecules_per_tx,
    )


@dataclass(frozen=True)
class SignalCurve:
    t: np.ndarray
    mean: np.ndarray
    std_error: np.ndarray
    component: Component
    kind: ReceiverKind
    quantity: str


@dataclass(frozen=True)
class EnsembleResult:
    """Scaled counts of every run, ``runs[perm, rep, component, time]``.

    Counts are multiplied by ``scale = N_tx / molecules_per_tx`` so they are
    directly comparable with the expected signal of an ``N_tx`` pulse.
    """

    t: np.ndarray
    runs: np.ndarray
    kind: ReceiverKind
    scale: float
    master_seed: int

    def curve(self, component="all", quantity: str = "count") -> SignalCurve:
        """Mean over all runs with its standard error.

        Runs sharing a placement are correlated, so the standard error is taken
        across placement means when there is more than one placement.
        """
        component = Component.parse(component)
        row = list(Component).index(component)
        vals = self.runs[:, :, row, :]
        t = self.t
        if quantity == "net":
            vals = np.diff(vals, axis=-1)
            t = t[:-1]
        elif quantity != "count":
            raise ValueError("quantity must be 'count' or 'net'")
        n_perm, n_rep = vals.shape[:2]
        mean = vals.reshape(n_perm * n_rep, -1).mean(axis=0)
        if n_perm > 1:
            se = vals.mean(axis=1).std(axis=0, ddof=1) / math.sqrt(n_perm)
        elif n_rep > 1:
            se = vals[0].std(axis=0, ddof=1) / math.sqrt(n_rep)
        else:
            se = np.full(len(t), math.inf)
        return SignalCurve(t, mean, se, component, self.kind, quantity)


def simulate_ensemble(
    s: Scenario,
    cfg: ParticleSimConfig,
    n_permutations: int,
    reps_per_permutation: int = 1,
    master_seed: int = 0,
    kind=None,
    workers: int = 1,
) -> EnsembleResult:
    """Average particle runs over fresh transmitter placements.

    Placement ``p`` is drawn from the stream ``(master_seed, p)``; repetition
    ``k`` of it simulates molecules with the seed derived from
    ``(master_seed, p, k)``.
    """
    if n_permutations < 1 or reps_per_permutation < 1:
        raise ValueError("need at least one placement and one repetition")
    R = s.max_placement_radius
    if not math.isfinite(R):
        raise DomainError("particle simulation needs a finite max_placement_radius")
    kind = s.kind if kind is None else ReceiverKind.parse(kind)
    placements = [sample_ppp_shell(s.lambda_a, s.r_r, R, master_seed, p) for p in range(n_permutations)]
    tasks = [(p, k) for p in range(n_permutations) for k in range(reps_per_permutation)]

    def one(task):
        p, k = task
        out = simulate_realization(s, cfg, placements[p], _rng.derive_seed(master_seed, p, k), kind)
        return np.stack([out.nearest, out.interferers, out.total])

    if workers <= 1:
        results = [one(task) for task in tasks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(one, tasks))
    n_t = len(cfg.record_scheme.t_grid)
    runs = np.array(results, dtype=float).reshape(n_permutations, reps_per_permutation, 3, n_t)
    scale = s.n_tx / cfg.molecules_per_tx if cfg.molecules_per_tx else 0.0
    return EnsembleResult(
        np.asarray(cfg.record_scheme.t_grid, dtype=float), runs * scale, kind, scale, int(master_seed)
    )


_SERIES = {Component.NEAREST: "nearest", Component.INTERFERERS: "aggregate", Component.ALL: "all"}


def write_ensemble_csv(path, result: EnsembleResult, quantity: str = "count") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "mean", "std_error", "series"])
        for component in Component:
            c = result.curve(component, quantity)
            series = f"{_SERIES[component]}_{result.kind.value}"
            for t, m, e in zip(c.t, c.mean, c.std_error):
                w.writerow([repr(float(t)), repr(float(m)), repr(float(e)), series])


def write_trace_csv(path, result: EnsembleResult) -> None:
    """Per-run dump: one row per placement, repetition and recording time."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["permutation", "repetition", "t", "nearest", "aggregate", "all"])
        n_perm, n_rep = result.runs.shape[:2]
        for p in range(n_perm):
            for k in range(n_rep):
                for i, t in enumerate(result.t):
                    vals = result.runs[p, k, :, i]
                    w.writerow([p, k, repr(float(t))] + [repr(float(v)) for v in vals])
