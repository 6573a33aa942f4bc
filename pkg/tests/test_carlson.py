import numpy as np
import pytest

from fraclab.carlson import check_vanishing, fit_growth, half_plane_grid, zeta_difference, zeta_scale
from fraclab.errors import GrowthRangeError
from fraclab.model import arc_region, build_circle_model
from fraclab.probes import MollifierSpec, MomentSchedule, ZetaSeries, mollifier_source

SCHEDULE = MomentSchedule(0.5, 8)


def zero(z):
    return 0j


def test_zero_function():
    fit = fit_growth(zero, schedule=SCHEDULE)
    assert fit.tau is None and fit.sup_grid == 0.0 and fit.c1_imag == 0.0
    assert check_vanishing(zero, SCHEDULE, 1e-9)["verdict"] == "consistent-with-zero"


@pytest.mark.parametrize("alpha", [0.1, 0.3, 0.5, 0.7, 0.95])
def test_gap_reported(alpha):
    fit = fit_growth(zero, schedule=MomentSchedule(alpha, 8))
    assert fit.gap == pytest.approx(min(alpha, 1 - alpha), abs=1e-15)


def test_grid_stays_in_half_disk():
    g = half_plane_grid()
    assert np.all(g.real >= 0) and np.abs(g).max() <= 15.0


def test_exact_exponential_growth_fit():
    """h(z) = e^{2 tau z log z} on the real axis is fitted exactly."""
    tau = 0.7
    fit = fit_growth(lambda z: np.exp(2 * tau * z * np.log(z)) if z != 0 else 1.0 + 0j)
    assert fit.tau == pytest.approx(tau, rel=1e-10)
    assert fit.tau_residual < 1e-10


def test_overflow_reported():
    with pytest.raises(GrowthRangeError) as exc, np.errstate(over="ignore"):
        fit_growth(lambda z: np.exp(1000 * z), schedule=SCHEDULE)
    assert "real" in exc.value.partial


class TestZetaDifference:
    def test_equal_hidden_parts(self, flat, two_arc_pair):
        (ma, ra), _ = two_arc_pair
        mc, _ = flat
        f = mollifier_source(ra, MollifierSpec(64, 1.0))
        h = zeta_difference(ma, mc, f, 40)
        rep = check_vanishing(h, SCHEDULE, 1e-9, scale=zeta_scale(ma, f, 40))
        assert rep["sup_grid"] <= 1e-9
        assert rep["verdict"] == "consistent-with-zero"

    @pytest.mark.parametrize("x", [40, 64, 100])
    def test_different_hidden_parts(self, two_arc_pair, x):
        (ma, ra), (mb, _) = two_arc_pair
        f = mollifier_source(ra, MollifierSpec(64, 1.0))
        h = zeta_difference(ma, mb, f, x)
        rep = check_vanishing(h, SCHEDULE, 1e-9, scale=zeta_scale(ma, f, x))
        assert rep["sup_grid"] >= 1e-3
        assert rep["max_fractional"] >= 1e-3
        assert rep["max_integer"] <= 1e-9
        assert rep["verdict"] == "nonvanishing"


def test_imaginary_axis_bounded(flat):
    """|zeta(iy, x)| <= sum_k |(pi_k f)(x)| for real y."""
    model, region = flat
    f = mollifier_source(region, MollifierSpec(64, 0.5))
    zs = ZetaSeries(model, f, 64)
    fit = fit_growth(lambda z: complex(zs(z)[0]), schedule=SCHEDULE)
    assert fit.c1_imag <= zs.abs_series(0.0)[0] * (1 + 1e-12)


@pytest.mark.xfail(strict=True, reason="on a finite grid zeta grows like lambda_max^x, not x log x, and its "
                                        "real-axis samples pass near zeros; the log regression residual is 0.3 "
                                        "to 7 instead of below 0.2")
@pytest.mark.parametrize("center,radius", [(64, 0.4), (64, 1.0), (76, 0.4)])
def test_growth_envelope(flat, center, radius):
    model, region = flat
    f = mollifier_source(region, MollifierSpec(center, radius))
    zs = ZetaSeries(model, f, center)
    fit = fit_growth(lambda z: complex(zs(z)[0]), schedule=SCHEDULE)
    assert fit.tau is not None and fit.tau <= 1.75 and fit.tau_residual < 0.2


def test_growth_fit_of_smooth_model_is_flagged(flat):
    model, region = flat
    f = mollifier_source(region, MollifierSpec(64, 0.4))
    zs = ZetaSeries(model, f, 70)
    fit = fit_growth(lambda z: complex(zs(z)[0]))
    assert fit.tau is None and fit.tau_residual >= 0.2


def test_zeta_scale_bounds_zeta():
    model = build_circle_model(64)
    region = arc_region(model, 0.5)
    f = mollifier_source(region, MollifierSpec(16, 0.6))
    sc = zeta_scale(model, f, 16)
    zs = ZetaSeries(model, f, 16)
    for z in [0.5, 1 + 2j, 3.5 - 1j]:
        assert abs(zs(z)[0]) <= sc(z) * (1 + 1e-12)
