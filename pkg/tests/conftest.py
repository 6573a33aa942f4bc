import numpy as np
import pytest

from fraclab.model import arc_region, build_circle_model, build_two_arc_model, gevrey_bump_profile
from fraclab.probes import MollifierSpec, mollifier_source

N = 256
L = 2 * np.pi
PERTURBED_PROFILE = gevrey_bump_profile(0.5, 4.0, 1.5, L)


@pytest.fixture(scope="session")
def flat():
    model = build_circle_model(N)
    return model, arc_region(model, 0.5)


@pytest.fixture(scope="session")
def perturbed():
    """Symmetry-broken Gevrey metric: a single off-center bump splits the circle pairs.

    High pairs split by ~1e-6 relative, so clustering runs at 1e-10 to keep them apart.
    """
    model = build_circle_model(N, L, PERTURBED_PROFILE, rel_gap_tol=1e-10)
    return model, arc_region(model, 0.5)


@pytest.fixture(scope="session")
def flat_sources(flat):
    _, region = flat
    centers = [32, 44, 56, 68, 80, 96]
    return [mollifier_source(region, MollifierSpec(c, 0.3), label=f"f{i}") for i, c in enumerate(centers)]


@pytest.fixture(scope="session")
def two_arc_pair():
    """Two models equal on the observed half, hidden metric 1 vs 0.25."""
    a = build_two_arc_model(N, 0.5)
    b = build_two_arc_model(N, 0.5, hidden_profile=lambda x: 0.25 * np.ones_like(x))
    return a, b


def smooth_zero_mean(model):
    x = model.coordinates
    u = np.cos(x) + 0.5 * np.sin(2 * x) + 0.25 * np.cos(3 * x)
    return u - model.mean(u)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
