"""Command-line front end.

``mcstogeo run`` evaluates a scenario file with one or more engines and writes
one CSV per curve plus ``summary.json``. ``mcstogeo reproduce`` runs the
bundled scenarios (``fig2``, ``fig3``) or the peak-value table (``table1``).

Scenario files are TOML (or JSON with the same layout). Quantities carry unit
suffixes, e.g. ``diffusion_coefficient = "80 um^2/s"``; bare numbers are read
in um, s, um^2/s and um^-3.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, expectation, montecarlo, particle
from .core import (
    DomainError,
    Environment,
    ReceiverKind,
    ReceiverSpec,
    SamplingScheme,
    Scenario,
    ScenarioError,
    TransmitterField,
    parse_quantity,
    validate_scenario,
)
from .expectation import Component
from .numerics import DEFAULT_ABS_TOL, DEFAULT_REL_TOL, QuadratureError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("mcstogeo")

CSV_SCHEMA_VERSION = 1
CSV_COLUMNS = ["t_s", "value", "std_error", "series", "receiver", "component"]
OUTPUT_DIR_ENV = "MCSTOGEO_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "mcstogeo-out"
ENGINES = ("analytic", "montecarlo", "particle")
BUNDLED = ("fig2", "fig3")

# peak net change per 0.01 s under the fig2 setup
TABLE1_REFERENCE = {
    ("nearest", "passive"): 149.57,
    ("nearest", "absorbing"): 354.52,
    ("aggregate", "passive"): 9.252,
    ("aggregate", "absorbing"): 59.42,
}
TABLE1_REL_TOL = 0.02

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_SCENARIO = 3
EXIT_QUADRATURE = 4
EXIT_SIMULATION = 5

# short override names -> dotted config path
ALIASES = {
    "d": "environment.diffusion_coefficient",
    "diffusion_coefficient": "environment.diffusion_coefficient",
    "r_r": "receiver.radius",
    "radius": "receiver.radius",
    "receiver": "receiver.kinds",
    "kinds": "receiver.kinds",
    "lambda": "transmitters.density",
    "lambda_a": "transmitters.density",
    "density": "transmitters.density",
    "rho": "transmitters.activity",
    "rho_a": "transmitters.activity",
    "activity": "transmitters.activity",
    "n_tx": "transmitters.pulse_amplitude",
    "pulse_amplitude": "transmitters.pulse_amplitude",
    "r": "transmitters.max_placement_radius",
    "max_placement_radius": "transmitters.max_placement_radius",
    "t_ss": "sampling.interval",
    "interval": "sampling.interval",
    "t_end": "sampling.t_end",
    "t_start": "sampling.t_start",
    "realizations": "montecarlo.realizations",
    "dt": "particle.dt",
    "molecules_per_tx": "particle.molecules_per_tx",
    "permutations": "particle.permutations",
    "repetitions": "particle.repetitions",
    "absorption_mode": "particle.absorption_mode",
}


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_FAILURE, problems=()):
        super().__init__(message)
        self.code = code
        self.problems = list(problems)


# --- scenario files ----------------------------------------------------------


@dataclass
class LoadedScenario:
    name: str
    scenario: Scenario
    kinds: list[ReceiverKind]
    quantity: str
    realizations: int
    particle: dict
    source_sha256: str
    raw: dict = field(repr=False, default_factory=dict)


def bundled_path(name: str) -> Path:
    ref = resources.files("mcstogeo") / "scenarios" / f"{name}.toml"
    return Path(str(ref))


def _read_config(path: str) -> tuple[dict, bytes]:
    p = Path(path)
    if not p.exists() and path in BUNDLED:
        p = bundled_path(path)
    try:
        data = p.read_bytes()
    except OSError as exc:
        raise CliError(f"cannot read scenario {path}: {exc.strerror}", EXIT_SCENARIO) from None
    try:
        if p.suffix.lower() == ".json":
            return json.loads(data.decode("utf-8")), data
        return tomllib.loads(data.decode("utf-8")), data
    except (ValueError, UnicodeDecodeError) as exc:
        raise CliError(f"cannot parse scenario {path}: {exc}", EXIT_SCENARIO) from None


def _coerce(text: str):
    text = text.strip()
    if "," in text:
        return [part.strip() for part in text.split(",") if part.strip()]
    try:
        return float(text)
    except ValueError:
        return text


def apply_overrides(cfg: dict, overrides: Sequence[str]) -> dict:
    """Return a copy of ``cfg`` with ``key=value`` overrides applied."""
    cfg = json.loads(json.dumps(cfg))
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise CliError(f"override {item!r} is not key=value", EXIT_USAGE)
        key = key.strip()
        path = ALIASES.get(key.lower(), key)
        if path == "receiver.kinds":
            value = _coerce(value)
            value = value if isinstance(value, list) else [value]
        else:
            value = _coerce(value)
        node = cfg
        parts = path.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise CliError(f"override {item!r} does not name a setting", EXIT_USAGE)
        node[parts[-1]] = value
    return cfg


def build_scenario(cfg: dict, name: str = "", sha: str = "") -> LoadedScenario:
    """Turn a parsed config into a validated scenario plus engine settings."""
    problems: list[tuple[str, str]] = []

    def get(path, dimension, default=None):
        node = cfg
        for part in path.split("."):
            if not isinstance(node, dict) or part not in node:
                if default is None:
                    problems.append((path, "missing"))
                    return math.nan
                return default
            node = node[part]
        try:
            return parse_quantity(node, dimension)
        except ValueError as exc:
            problems.append((path, str(exc)))
            return math.nan

    D = get("environment.diffusion_coefficient", "diffusivity")
    r_r = get("receiver.radius", "length")
    lam = get("transmitters.density", "density")
    rho = get("transmitters.activity", "dimensionless", 1.0)
    n_tx = get("transmitters.pulse_amplitude", "dimensionless", 1e4)
    R = get("transmitters.max_placement_radius", "length", math.inf)
    tss = get("sampling.interval", "time")
    t_end = get("sampling.t_end", "time")
    t_start = get("sampling.t_start", "time", 0.0)

    kinds_raw = cfg.get("receiver", {}).get("kinds", cfg.get("receiver", {}).get("kind", ["absorbing"]))
    if isinstance(kinds_raw, str):
        kinds_raw = [kinds_raw]
    kinds = []
    for k in kinds_raw:
        try:
            kinds.append(ReceiverKind.parse(k))
        except ValueError:
            problems.append(("receiver.kinds", f"unknown receiver kind {k!r}"))
    if not kinds_raw:
        problems.append(("receiver.kinds", "no receiver kind given"))

    quantity = cfg.get("quantity", "net")
    if quantity not in ("net", "count"):
        problems.append(("quantity", "must be 'net' or 'count'"))

    mc = cfg.get("montecarlo", {})
    realizations = mc.get("realizations", 1000)
    if not isinstance(realizations, (int, float)) or realizations < 1 or realizations != int(realizations):
        problems.append(("montecarlo.realizations", "must be a positive integer"))
        realizations = 1

    pcfg = dict(cfg.get("particle", {}))
    p_dt = get("particle.dt", "time", 0.01)
    part = {
        "dt": p_dt,
        "molecules_per_tx": int(pcfg.get("molecules_per_tx", round(n_tx) if math.isfinite(n_tx) else 0)),
        "permutations": int(pcfg.get("permutations", 10)),
        "repetitions": int(pcfg.get("repetitions", 1)),
        "absorption_mode": str(pcfg.get("absorption_mode", "step_end")),
    }

    grid_ok = all(math.isfinite(v) for v in (tss, t_end, t_start)) and tss > 0 and t_end >= t_start
    sampling = SamplingScheme.uniform(t_end, tss, t_start) if grid_ok else SamplingScheme((), tss)
    if not grid_ok and not any(p[0].startswith("sampling") for p in problems):
        problems.append(("sampling", "need interval > 0 and t_end >= t_start"))
    s = Scenario(
        Environment(D),
        ReceiverSpec(kinds[0] if kinds else ReceiverKind.FULLY_ABSORBING, r_r),
        TransmitterField(lam, rho, n_tx),
        sampling,
        R,
    )
    try:
        validate_scenario(s)
    except ScenarioError as exc:
        problems.extend(exc.problems)
    if problems:
        # keep the first report per path
        seen, unique = set(), []
        for p in problems:
            if p not in seen:
                seen.add(p)
                unique.append(p)
        raise CliError("scenario is invalid", EXIT_SCENARIO, unique)
    return LoadedScenario(
        str(cfg.get("name", name)), s, kinds, quantity, int(realizations), part, sha, cfg
    )


def load_scenario(path: str, overrides: Sequence[str] = ()) -> LoadedScenario:
    cfg, data = _read_config(path)
    cfg = apply_overrides(cfg, overrides)
    return build_scenario(cfg, Path(path).stem, hashlib.sha256(data).hexdigest())


# --- output ------------------------------------------------------------------


@dataclass
class Curve:
    engine: str
    kind: ReceiverKind
    component: Component
    t: np.ndarray
    value: np.ndarray
    std_error: np.ndarray

    @property
    def filename(self) -> str:
        return f"{self.engine}_{_component_label(self.component)}_{self.kind.value}.csv"


def _component_label(c: Component) -> str:
    return "aggregate" if c is Component.INTERFERERS else c.value


def write_curve_csv(path: Path, curve: Curve, manifest: dict) -> None:
    buf = io.StringIO()
    buf.write(f"# mcstogeo {__version__}\n")
    buf.write(f"# csv_schema {CSV_SCHEMA_VERSION}\n")
    buf.write("# manifest " + json.dumps(manifest, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for t, v, e in zip(curve.t, curve.value, curve.std_error):
        w.writerow([repr(float(t)), repr(float(v)), repr(float(e)), curve.engine, curve.kind.value,
                    _component_label(curve.component)])
    path.write_text(buf.getvalue())


def _peak(curve: Curve) -> dict:
    i = int(np.argmax(curve.value)) if len(curve.value) else 0
    return {"t_s": float(curve.t[i]), "value": float(curve.value[i])} if len(curve.value) else {}


# --- engines -----------------------------------------------------------------


def run_analytic(ls: LoadedScenario, workers: int) -> list[Curve]:
    s = ls.scenario
    grid = np.asarray(s.sampling.t_grid, dtype=float)
    zeros = np.zeros(len(grid))
    out = []
    for kind in ls.kinds:
        for comp in Component:
            if ls.quantity == "net":
                vals = expectation.net_change_curve(s, kind, comp, workers=workers)
            else:
                vals = expectation.expected_curve(s, kind, comp, workers=workers)
            out.append(Curve("analytic", kind, comp, grid, np.asarray(vals, dtype=float), zeros))
    return out


def run_montecarlo(ls: LoadedScenario, seed: int, workers: int) -> list[Curve]:
    s = ls.scenario
    out = []
    for kind in ls.kinds:
        res = montecarlo.mc_curves(s, kind, ls.realizations, seed, ls.quantity, workers=workers)
        for comp, est in res.items():
            out.append(Curve(
                "montecarlo", kind, comp,
                np.array([e.t for e in est]), np.array([e.mean for e in est]), np.array([e.std_error for e in est]),
            ))
    return out


def run_particle(ls: LoadedScenario, seed: int, workers: int) -> list[Curve]:
    s = ls.scenario
    p = ls.particle
    grid = list(s.sampling.t_grid)
    tss = s.sampling.sampling_interval_tss
    # one extra record so the net change is defined at every grid time
    record = grid + [grid[-1] + tss] if ls.quantity == "net" else grid
    scheme = SamplingScheme(tuple(record), tss)
    cfg = particle.ParticleSimConfig(p["dt"], record[-1], p["molecules_per_tx"], scheme, p["absorption_mode"])
    out = []
    for kind in ls.kinds:
        ens = particle.simulate_ensemble(s, cfg, p["permutations"], p["repetitions"], seed, kind, workers)
        for comp in Component:
            c = ens.curve(comp, ls.quantity)
            out.append(Curve("particle", kind, comp, np.asarray(grid, dtype=float), c.mean, c.std_error))
    return out


def truncation_bounds(ls: LoadedScenario) -> dict:
    """Largest expected contribution from beyond the placement radius, per receiver."""
    s = ls.scenario
    tss = s.sampling.sampling_interval_tss if ls.quantity == "net" else None
    out = {}
    for kind in ls.kinds:
        tails = [abs(expectation.truncation_tail(s, t, kind, t_ss=tss)) for t in s.sampling.t_grid]
        out[kind.value] = {"max": float(max(tails)) if tails else 0.0,
                           "radius_um": s.max_placement_radius if math.isfinite(s.max_placement_radius) else None}
    return out


def _scenario_record(ls: LoadedScenario) -> dict:
    s = ls.scenario
    return {
        "name": ls.name,
        "diffusion_coefficient_um2_per_s": s.D,
        "receiver_radius_um": s.r_r,
        "receivers": [k.value for k in ls.kinds],
        "density_um3": s.field.density_lambda,
        "activity": s.field.activity_rho,
        "active_density_um3": s.lambda_a,
        "pulse_amplitude": s.n_tx,
        "max_placement_radius_um": s.max_placement_radius if math.isfinite(s.max_placement_radius) else None,
        "sampling_interval_s": s.sampling.sampling_interval_tss,
        "t_start_s": s.sampling.t_grid[0],
        "t_end_s": s.sampling.t_grid[-1],
        "quantity": ls.quantity,
    }


def execute(
    scenario_path: str,
    engines: Sequence[str],
    out_dir: Path,
    seed: int,
    overrides: Sequence[str] = (),
    realizations: int | None = None,
    dt: float | None = None,
    workers: int = 1,
    manifest_extra: dict | None = None,
) -> dict:
    """Run the requested engines and write CSVs plus ``summary.json``; returns the summary."""
    overrides = list(overrides)
    if realizations is not None:
        overrides.append(f"realizations={realizations}")
    if dt is not None:
        overrides.append(f"dt={dt!r}")
    ls = load_scenario(scenario_path, overrides)
    manifest = {
        "scenario": scenario_path,
        "scenario_sha256": ls.source_sha256,
        "engine": list(engines),
        "output_dir": str(out_dir),
        "seed": seed,
        "overrides": overrides,
        "tool_version": __version__,
    }
    manifest.update(manifest_extra or {})
    out_dir.mkdir(parents=True, exist_ok=True)

    curves: list[Curve] = []
    runtimes = {}
    for engine in engines:
        log.info("running %s engine on %s", engine, ls.name)
        t0 = time.perf_counter()
        if engine == "analytic":
            curves += run_analytic(ls, workers)
        elif engine == "montecarlo":
            curves += run_montecarlo(ls, seed, workers)
        elif engine == "particle":
            curves += run_particle(ls, seed, workers)
        else:
            raise CliError(f"unknown engine {engine!r}", EXIT_USAGE)
        runtimes[engine] = time.perf_counter() - t0

    files = []
    for c in curves:
        write_curve_csv(out_dir / c.filename, c, manifest)
        files.append(c.filename)

    bounds = truncation_bounds(ls)
    summary = {
        "manifest": manifest,
        "scenario": _scenario_record(ls),
        "files": files,
        "peaks": {c.filename: _peak(c) for c in curves},
        "truncation_bound": bounds,
        "runtimes_s": runtimes,
        "tolerances": {
            "quadrature_rel": DEFAULT_REL_TOL,
            "quadrature_abs": DEFAULT_ABS_TOL,
            "montecarlo_realizations": ls.realizations if "montecarlo" in engines else None,
            "particle": dict(ls.particle) if "particle" in engines else None,
        },
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def reproduce_table1(out_dir: Path, workers: int = 1) -> dict:
    """Peak analytic net change per sampling interval under the fig2 setup."""
    ls = load_scenario("fig2", ["receiver=absorbing,passive", "quantity=net"])
    s = ls.scenario
    grid = np.asarray(s.sampling.t_grid, dtype=float)
    rows = []
    for (label, receiver), ref in TABLE1_REFERENCE.items():
        comp = Component.NEAREST if label == "nearest" else Component.INTERFERERS
        vals = expectation.net_change_curve(s, receiver, comp, workers=workers)
        i = int(np.argmax(vals))
        rel = abs(vals[i] - ref) / ref
        rows.append({
            "transmitter": label, "receiver": receiver, "peak_t_s": float(grid[i]),
            "peak_value": float(vals[i]), "reference": ref, "rel_error": float(rel),
            "within_tolerance": bool(rel <= TABLE1_REL_TOL),
        })
    out_dir.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    buf.write(f"# mcstogeo {__version__}\n# csv_schema {CSV_SCHEMA_VERSION}\n")
    buf.write("# manifest " + json.dumps({"target": "table1", "tool_version": __version__,
                                         "scenario_sha256": ls.source_sha256}, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    cols = ["transmitter", "receiver", "peak_t_s", "peak_value", "reference", "rel_error", "within_tolerance"]
    w.writerow(cols)
    for r in rows:
        w.writerow([r[c] if not isinstance(r[c], float) else repr(r[c]) for c in cols])
    (out_dir / "table1.csv").write_text(buf.getvalue())
    summary = {"target": "table1", "rows": rows, "rel_tolerance": TABLE1_REL_TOL}
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def flatness_report(ls: LoadedScenario, t_from: float = 0.8) -> dict:
    """Relative slope of the passive total and monotonicity of the absorbing total."""
    s = ls.scenario
    grid = np.asarray(s.sampling.t_grid, dtype=float)
    ps = np.asarray(expectation.expected_curve(s, "passive", "all"), dtype=float)
    fa = np.asarray(expectation.expected_curve(s, "absorbing", "all"), dtype=float)
    # forward difference over each interval, relative to the value at its end
    slope = np.diff(ps) / np.diff(grid) / ps[1:]
    mask = grid[:-1] >= t_from - 1e-12
    return {
        "t_from_s": t_from,
        "passive_max_rel_slope_per_s": float(np.max(np.abs(slope[mask]))) if mask.any() else 0.0,
        "passive_rel_slope_per_s": {repr(float(t)): float(v) for t, v in zip(grid[:-1][mask], slope[mask])},
        "absorbing_strictly_increasing": bool(np.all(np.diff(fa) > 0)),
    }


# --- argument handling -------------------------------------------------------


def _default_out() -> Path:
    return Path(os.environ.get(OUTPUT_DIR_ENV, DEFAULT_OUTPUT_DIR))


def _engines(name: str) -> list[str]:
    return list(ENGINES) if name == "all" else [name]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcstogeo", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mcstogeo {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=None,
                        help=f"output directory (default: ${OUTPUT_DIR_ENV} or ./{DEFAULT_OUTPUT_DIR})")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--realizations", type=int, default=None, help="Monte Carlo realizations")
    common.add_argument("--dt", type=float, default=None, help="particle time step, s")
    common.add_argument("--workers", type=int, default=1, help="worker threads; results do not depend on it")
    common.add_argument("--quiet", action="store_true")

    run = sub.add_parser("run", parents=[common], help="evaluate a scenario file")
    run.add_argument("--scenario", required=True, help="TOML or JSON scenario, or a bundled name")
    run.add_argument("--engine", choices=ENGINES + ("all",), default="analytic")
    run.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                     help="replace a scenario setting; repeatable")

    rep = sub.add_parser("reproduce", parents=[common], help="run a bundled setup")
    rep.add_argument("target", choices=("fig2", "fig3", "table1"))
    rep.add_argument("--engine", choices=ENGINES + ("all",), default="analytic")
    return parser


def _report(exc: BaseException, code: int) -> int:
    report = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    problems = getattr(exc, "problems", None)
    if problems:
        report["problems"] = [{"path": p, "message": m} for p, m in problems]
    if isinstance(exc, QuadratureError):
        report["best_estimate"] = exc.result.value
        report["abs_error_estimate"] = exc.result.abs_error_estimate
    print(json.dumps(report, sort_keys=True), file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    out = args.out if args.out is not None else _default_out()
    try:
        if args.workers < 1:
            raise CliError("--workers must be >= 1", EXIT_USAGE)
        if args.command == "run":
            summary = execute(args.scenario, _engines(args.engine), out, args.seed, args.override,
                              args.realizations, args.dt, args.workers)
        elif args.target == "table1":
            summary = reproduce_table1(out, args.workers)
            for r in summary["rows"]:
                log.info("%-9s %-9s peak %.6g (reference %g, rel. error %.2e)", r["transmitter"],
                         r["receiver"], r["peak_value"], r["reference"], r["rel_error"])
        else:
            summary = execute(args.target, _engines(args.engine), out, args.seed, [],
                              args.realizations, args.dt, args.workers, {"target": args.target})
            if args.target == "fig3":
                report = flatness_report(load_scenario("fig3"))
                summary["shape"] = report
                (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        if not args.quiet:
            log.info("wrote %s", out)
        return EXIT_OK
    except CliError as exc:
        return _report(exc, exc.code)
    except ScenarioError as exc:
        return _report(exc, EXIT_SCENARIO)
    except QuadratureError as exc:
        return _report(exc, EXIT_QUADRATURE)
    except (DomainError, FloatingPointError) as exc:
        return _report(exc, EXIT_SIMULATION)
    except ValueError as exc:
        # malformed settings that slipped past validation
        return _report(exc, EXIT_SCENARIO)


if __name__ == "__main__":
    sys.exit(main())
