import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import optimize, stats

from mcstogeo.core import DomainError
from mcstogeo.geometry import (
    identify_nearest,
    nearest_cdf_2d,
    nearest_cdf_3d,
    nearest_pdf_2d,
    nearest_pdf_3d,
    nearest_quantile_2d,
    nearest_quantile_3d,
    prob_no_point_within,
    sample_nearest_distances,
    sample_ppp_shell,
    shell_volume,
    write_realizations_csv,
)
from mcstogeo.numerics import integrate_semi_infinite

LAM, RR = 1e-4, 5.0
# root of 1 - exp(-lambda (4/3) pi (x^3 - 125)) = 1/2, 30 digits
MEDIAN_3D = 12.1186539247830860072564951952


def test_pdf_3d_normalized():
    res = integrate_semi_infinite(lambda x: nearest_pdf_3d(x, LAM, RR), RR, scale=10.0)
    assert res.value == pytest.approx(1.0, abs=1e-9)


def test_pdf_3d_at_surface():
    assert nearest_pdf_3d(RR, LAM, RR) == pytest.approx(4 * LAM * math.pi * RR**2, rel=1e-15)
    assert nearest_pdf_3d(4.0, LAM, RR) == 0.0


def test_pdf_rejects_nonpositive_density():
    for f in (nearest_pdf_3d, nearest_cdf_3d, nearest_pdf_2d):
        with pytest.raises(DomainError):
            f(6.0, 0.0, RR)


def test_cdf_3d_boundary_and_derivative():
    assert nearest_cdf_3d(RR, LAM, RR) == 0.0
    assert nearest_cdf_3d(1e4, LAM, RR) == 1.0
    x, h = np.array([6.0, 11.0, 17.0]), 1e-5
    fd = (nearest_cdf_3d(x + h, LAM, RR) - nearest_cdf_3d(x - h, LAM, RR)) / (2 * h)
    np.testing.assert_allclose(fd, nearest_pdf_3d(x, LAM, RR), rtol=1e-7)


def test_median_root_find():
    root = optimize.brentq(lambda x: nearest_cdf_3d(x, LAM, RR) - 0.5, RR, 100.0, xtol=1e-14)
    assert root == pytest.approx(MEDIAN_3D, rel=1e-12)
    assert nearest_quantile_3d(0.5, LAM, RR) == pytest.approx(MEDIAN_3D, rel=1e-14)
    d = sample_nearest_distances(LAM, RR, 50.0, 4000, seed=3)
    # sampled median within a few order-statistic standard errors
    se = 0.5 / (math.sqrt(4000) * nearest_pdf_3d(MEDIAN_3D, LAM, RR))
    assert abs(np.median(d) - MEDIAN_3D) < 4 * se


def test_pdf_2d_normalized_and_surface():
    lam2 = 1e-3
    res = integrate_semi_infinite(lambda r: nearest_pdf_2d(r, lam2, RR), RR, scale=10.0)
    assert res.value == pytest.approx(1.0, abs=1e-9)
    assert nearest_pdf_2d(RR, lam2, RR) == pytest.approx(2 * lam2 * math.pi * RR, rel=1e-15)


@given(st.floats(min_value=1e-9, max_value=1 - 1e-9))
def test_quantile_round_trip(u):
    assert nearest_cdf_2d(nearest_quantile_2d(u, 1e-3, RR), 1e-3, RR) == pytest.approx(u, rel=1e-9, abs=1e-12)
    assert nearest_cdf_3d(nearest_quantile_3d(u, LAM, RR), LAM, RR) == pytest.approx(u, rel=1e-9, abs=1e-12)


def test_mean_count_in_shell():
    counts = np.array([len(sample_ppp_shell(LAM, RR, 50.0, seed=1, realization=i)) for i in range(20000)])
    expected = LAM * shell_volume(RR, 50.0)
    assert expected == pytest.approx(52.31, abs=0.01)
    assert abs(counts.mean() - expected) < 4 * math.sqrt(expected / len(counts))


def test_zero_density_gives_empty_realization():
    real = sample_ppp_shell(0.0, RR, 50.0, seed=0)
    assert len(real) == 0 and real.nearest_index is None


def test_invalid_shell_rejected():
    with pytest.raises(DomainError):
        sample_ppp_shell(LAM, RR, RR, seed=0)
    with pytest.raises(DomainError):
        sample_ppp_shell(LAM, RR, math.inf, seed=0)


def test_points_inside_shell_and_radial_law():
    radii = np.concatenate([sample_ppp_shell(LAM, RR, 50.0, 2, i).radii for i in range(200)])
    assert radii.min() >= RR and radii.max() <= 50.0
    cdf = lambda r: (r**3 - RR**3) / (50.0**3 - RR**3)
    assert stats.kstest(radii, cdf).pvalue > 0.01


def test_directions_isotropic():
    pos = np.concatenate([sample_ppp_shell(LAM, RR, 50.0, 4, i).positions for i in range(200)])
    cos_theta = pos[:, 2] / np.linalg.norm(pos, axis=1)
    assert stats.kstest(cos_theta, stats.uniform(-1, 2).cdf).pvalue > 0.01


def test_void_probability():
    x, n = 15.0, 4000
    d = sample_nearest_distances(LAM, RR, 50.0, n, seed=5)
    p = prob_no_point_within(x, LAM, RR)
    assert p == pytest.approx(math.exp(-LAM * 4 / 3 * math.pi * (x**3 - RR**3)), rel=1e-14)
    assert abs(np.mean(d >= x) - p) < 3 * math.sqrt(p * (1 - p) / n)


def test_identify_nearest():
    def at_radius(r, axis=0):
        p = np.zeros(3)
        p[axis] = r
        return p

    assert identify_nearest([at_radius(12), at_radius(7, 1), at_radius(30, 2)]) == 1
    assert identify_nearest(np.empty((0, 3))) is None
    assert identify_nearest([at_radius(9, 0), at_radius(9, 2), at_radius(10)]) == 0


def test_realization_records_nearest():
    real = sample_ppp_shell(LAM, RR, 50.0, seed=9, realization=3)
    assert real.nearest_index == int(np.argmin(real.radii))
    assert real.generating_seed == 9 and real.realization_id == 3 and real.shell == (RR, 50.0)


def test_sampling_independent_of_order_and_threads():
    seq = [sample_ppp_shell(LAM, RR, 50.0, 11, i).positions for i in range(40)]
    with ThreadPoolExecutor(4) as ex:
        par = list(ex.map(lambda i: sample_ppp_shell(LAM, RR, 50.0, 11, i).positions, reversed(range(40))))
    for a, b in zip(seq, reversed(par)):
        assert np.array_equal(a, b)
    assert not np.array_equal(seq[0], sample_ppp_shell(LAM, RR, 50.0, 12, 0).positions)


def test_realizations_csv(tmp_path):
    reals = [sample_ppp_shell(LAM, RR, 20.0, 1, i) for i in range(3)]
    path = tmp_path / "points.csv"
    write_realizations_csv(path, reals)
    lines = path.read_text().splitlines()
    assert lines[0] == "realization_id,point_id,x,y,z"
    assert len(lines) == 1 + sum(len(r) for r in reals)
