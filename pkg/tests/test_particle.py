import math

import numpy as np
import pytest

from mcstogeo import _rng
from mcstogeo.channel import fa_fraction, ps_fraction_exact
from mcstogeo.core import DomainError, SamplingScheme
from mcstogeo.expectation import expected_curve, truncation_tail
from mcstogeo.geometry import sample_ppp_shell
from mcstogeo.particle import (
    AbsorptionMode,
    ParticleSimConfig,
    simulate_ensemble,
    simulate_realization,
    simulate_source,
    write_ensemble_csv,
    write_trace_csv,
)

from conftest import make_scenario


def _binomial_z(count, n, p):
    return (count / n - p) / math.sqrt(p * (1 - p) / n)


def test_no_diffusion_no_signal():
    s = make_scenario(D=0.0)
    real = sample_ppp_shell(1e-4, 5.0, 50.0, 1, 0)
    cfg = ParticleSimConfig(0.01, 0.1, 50, SamplingScheme.uniform(0.1, 0.01))
    for kind in ("absorbing", "passive"):
        out = simulate_realization(s, cfg, real, 3, kind)
        assert not out.total.any()


def test_absorbed_fraction_single_source():
    n, t_end = 20000, 0.2
    count = simulate_source([0, 10.0, 0], n, 80.0, 5.0, 1e-3, [200], "absorbing", _rng.stream(1),
                            AbsorptionMode.INTRA_STEP_CORRECTION)[0]
    assert abs(_binomial_z(count, n, fa_fraction(10.0, t_end, 80.0, 5.0))) < 3


def test_inside_fraction_single_source():
    n = 20000
    count = simulate_source([0, 0, 8.0], n, 80.0, 5.0, 1e-3, [200], "passive", _rng.stream(2))[0]
    assert abs(_binomial_z(count, n, ps_fraction_exact(8.0, 0.2, 80.0, 5.0))) < 3


def test_absorbing_counts_nondecreasing_and_passive_bounded():
    steps = np.arange(0, 101, 10)
    fa = simulate_source([7.0, 0, 0], 3000, 80.0, 5.0, 1e-3, steps, "absorbing", _rng.stream(3))
    ps = simulate_source([7.0, 0, 0], 3000, 80.0, 5.0, 1e-3, steps, "passive", _rng.stream(3))
    assert np.all(np.diff(fa) >= 0)
    assert fa[0] == 0 and ps[0] == 0
    assert np.all((ps >= 0) & (ps <= 3000))
    # passive molecules keep moving in and out
    assert np.any(np.diff(ps) < 0)


def test_step_size_convergence():
    n, x, T = 20000, 7.0, 0.05
    exact = fa_fraction(x, T, 80.0, 5.0)
    frac = {}
    for dt in (1e-2, 1e-3, 1e-4):
        steps = [round(T / dt)]
        frac[dt] = simulate_source([x, 0, 0], n, 80.0, 5.0, dt, steps, "absorbing", _rng.stream(4))[0] / n
    # missed crossings bias the step-end check low, less so for smaller steps
    assert frac[1e-2] < frac[1e-3] < frac[1e-4] < exact
    corrected = simulate_source([x, 0, 0], n, 80.0, 5.0, 1e-2, [5], "absorbing", _rng.stream(4),
                                "intra_step")[0] / n
    assert abs(corrected - exact) < abs(frac[1e-2] - exact)


def test_source_partition_and_scaling(fig2):
    cfg = ParticleSimConfig(1e-3, 0.05, 40, SamplingScheme.uniform(0.05, 0.01), "intra_step")
    real = sample_ppp_shell(fig2.lambda_a, fig2.r_r, 50.0, 7, 0)
    out = simulate_realization(fig2, cfg, real, 9)
    assert np.array_equal(out.nearest + out.interferers, out.total)
    assert out.n_transmitters == len(real) and out.molecules_per_tx == 40
    ens = simulate_ensemble(fig2, cfg, 1, 1, master_seed=7)
    assert ens.scale == fig2.n_tx / 40
    same = simulate_realization(fig2, cfg, real, _rng.derive_seed(7, 0, 0))
    assert np.array_equal(ens.runs[0, 0, 0], same.nearest * ens.scale)
    assert np.array_equal(ens.runs[0, 0, 2], same.total * ens.scale)
    assert math.isinf(ens.curve("all").std_error[-1])


def test_ensemble_matches_analytic_desk_scale(fig2):
    grid = SamplingScheme.uniform(0.2, 0.05)
    cfg = ParticleSimConfig(1e-3, 0.2, 100, grid, "intra_step")
    ens = simulate_ensemble(fig2, cfg, 60, 1, master_seed=13)
    for comp in ("nearest", "all"):
        c = ens.curve(comp)
        analytic = expected_curve(fig2, "absorbing", comp, t_grid=grid.t_grid)
        tails = np.array([truncation_tail(fig2, t, "absorbing") for t in grid.t_grid])
        ok = np.abs(c.mean - analytic)[1:] <= (3 * c.std_error + tails)[1:]
        assert ok.all(), comp


def test_ensemble_independent_of_workers(fig2):
    cfg = ParticleSimConfig(0.01, 0.1, 30, SamplingScheme.uniform(0.1, 0.01))
    a = simulate_ensemble(fig2, cfg, 4, 2, master_seed=5, kind="passive", workers=1)
    b = simulate_ensemble(fig2, cfg, 4, 2, master_seed=5, kind="passive", workers=3)
    assert np.array_equal(a.runs, b.runs)
    c = simulate_ensemble(fig2, cfg, 4, 2, master_seed=6, kind="passive")
    assert not np.array_equal(a.runs, c.runs)


def test_net_curve_is_difference(fig2):
    cfg = ParticleSimConfig(0.01, 0.1, 30, SamplingScheme.uniform(0.1, 0.01))
    ens = simulate_ensemble(fig2, cfg, 3, 2, master_seed=1)
    net = ens.curve("nearest", "net")
    assert len(net.t) == len(ens.t) - 1
    np.testing.assert_allclose(net.mean, np.diff(ens.curve("nearest").mean), atol=1e-9)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(dt=0.0),
        dict(dt=0.02),
        dict(dt=0.003),
        dict(t_end=0.05),
        dict(molecules_per_tx=-1),
    ],
)
def test_config_validation(kwargs):
    args = dict(dt=0.01, t_end=0.1, molecules_per_tx=10, record_scheme=SamplingScheme.uniform(0.1, 0.01))
    args.update(kwargs)
    with pytest.raises(DomainError):
        ParticleSimConfig(**args)


def test_absorption_mode_parse():
    assert AbsorptionMode.parse("StepEndCheck") is AbsorptionMode.STEP_END_CHECK
    assert AbsorptionMode.parse("IntraStepCorrection") is AbsorptionMode.INTRA_STEP_CORRECTION
    with pytest.raises(ValueError):
        AbsorptionMode.parse("sometimes")


def test_csv_outputs(tmp_path, fig2):
    cfg = ParticleSimConfig(0.01, 0.03, 10, SamplingScheme.uniform(0.03, 0.01))
    ens = simulate_ensemble(fig2, cfg, 2, 2, master_seed=1, kind="passive")
    write_ensemble_csv(tmp_path / "e.csv", ens)
    rows = (tmp_path / "e.csv").read_text().splitlines()
    assert rows[0] == "t,mean,std_error,series"
    assert {r.split(",")[-1] for r in rows[1:]} == {"nearest_passive", "aggregate_passive", "all_passive"}
    write_trace_csv(tmp_path / "trace.csv", ens)
    assert len((tmp_path / "trace.csv").read_text().splitlines()) == 1 + 2 * 2 * 4
