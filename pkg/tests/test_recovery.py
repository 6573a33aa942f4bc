import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fraclab.errors import (DensityFailureError, IllConditionedError, IncompleteTableError, InsufficientDataError,
                            PoleProximityError, SpuriousModeError, UnderdeterminedError)
from fraclab.forward import SourceToSolutionMap, dtn_direct, source_to_solution
from fraclab.gevrey import chi0
from fraclab.model import build_two_arc_model
from fraclab.probes import MollifierSpec, MomentSchedule, MomentTable, measured_moment_table, mollifier_source
from fraclab.recovery import (RecoveredSpectrum, assemble_dtn_from_spectral_data, build_moment_matrix,
                              counting_at_eigenvalues, oracle_spectrum, pencil_recover, recover_from_table,
                              recover_multiplicities, recover_volume_weyl, residue_limit, resolvent_from_spectrum,
                              resolvent_power_series)

from conftest import L


def synthetic(lams, amps, M):
    m = np.arange(1, M + 1)[:, None]
    return (np.asarray(lams)[None, :] ** m) @ np.asarray(amps)


class TestPencilSynthetic:
    def test_two_modes(self):
        c = np.array([[0.7, -1.3, 2.0], [0.4, 0.9, -0.5]])
        s = synthetic([1.0, 4.0], c, 10)
        spec = pencil_recover(s, 2, alpha=0.5)
        np.testing.assert_allclose(spec.eigenvalues, [1.0, 4.0], rtol=1e-10)
        np.testing.assert_allclose(spec.traces, np.array([1.0, 2.0])[:, None] * c, rtol=1e-8)

    def test_single_mode_rank_one(self):
        s = synthetic([3.0], np.array([[1.0, 2.0, -1.0]]), 8)
        sv = np.linalg.svd(s[:-1], compute_uv=False)
        assert sv[1] <= 1e-12 * sv[0]
        assert pencil_recover(s, 1, 0.5).eigenvalues[0] == pytest.approx(3.0, rel=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(scale=st.floats(1e-6, 1e6), seed=st.integers(0, 2 ** 32 - 1))
    def test_scale_invariance(self, scale, seed):
        rng = np.random.default_rng(seed)
        lams = np.sort(rng.uniform(1, 30, 3)) * np.array([1.0, 1.5, 2.0])
        s = synthetic(lams, rng.standard_normal((3, 4)), 10)
        a = pencil_recover(s, 3, 0.5).eigenvalues
        b = pencil_recover(scale * s, 3, 0.5).eigenvalues
        np.testing.assert_array_equal(np.argsort(a), np.argsort(b))
        np.testing.assert_allclose(a, b, rtol=1e-8)

    def test_auto_rank(self):
        s = synthetic([2.0, 5.0], np.array([[1.0, 0.5], [0.3, -0.2]]), 12)
        spec = pencil_recover(s, 5, 0.5, auto_rank=True)
        assert spec.K == 2
        np.testing.assert_allclose(spec.eigenvalues, [2.0, 5.0], rtol=1e-9)

    def test_too_many_modes_ill_conditioned(self):
        s = synthetic([2.0, 5.0], np.array([[1.0, 0.5], [0.3, -0.2]]), 12)
        with pytest.raises(IllConditionedError):
            pencil_recover(s, 4, 0.5)

    def test_negative_base_is_spurious(self):
        s = synthetic([-2.0, 3.0], np.array([[1.0, 0.5], [1.0, -0.3]]), 8)
        with pytest.raises(SpuriousModeError):
            pencil_recover(s, 2, 0.5)

    def test_k_needs_enough_moments(self):
        with pytest.raises(IncompleteTableError):
            pencil_recover(np.ones((4, 2)), 2, 0.5)


def test_table_too_short(flat, flat_sources):
    model, region = flat
    table = measured_moment_table(region, SourceToSolutionMap(model, region, 0.5), 0.5, flat_sources[:1], 4)
    with pytest.raises(IncompleteTableError):
        build_moment_matrix(table, 6)


def test_missing_entries(flat, flat_sources):
    model, region = flat
    sched = MomentSchedule(0.5, 8)
    vals = np.full((1, sched.size, region.n_observed), np.nan, dtype=complex)
    table = MomentTable(sched, ["f0"], region.observed_idx, vals)
    with pytest.raises(IncompleteTableError):
        build_moment_matrix(table, 3)


@pytest.fixture(scope="module")
def flat_measured(flat, flat_sources):
    model, region = flat
    return measured_moment_table(region, SourceToSolutionMap(model, region, 0.5), 0.5, flat_sources, 14)


@pytest.mark.xfail(strict=True, reason="fractional moments are dominated by the top grid modes (low-mode share "
                                        "below 1e-14 at m = 8); the stacked Hankel matrix has full rank 12")
def test_hankel_rank_flat(flat_measured):
    H = build_moment_matrix(flat_measured, 6)[:-1]
    H = H / np.linalg.norm(H, axis=1, keepdims=True)
    sv = np.linalg.svd(H, compute_uv=False)
    assert int(np.sum(sv > 1e-8 * sv[0])) == 6


@pytest.mark.xfail(strict=True, reason="locality caps the moment count near |O|/2 while the grid has ~n/2 "
                                        "distinct eigenvalues, so the pencil fits the top of the spectrum")
def test_pencil_recovers_low_eigenvalues(flat, flat_measured, flat_sources):
    model, region = flat
    spec = recover_from_table(flat_measured, 6)
    truth = model.distinct_eigenvalues[1:7]
    assert np.abs(spec.eigenvalues - truth).max() / truth.min() <= 1e-6


def test_identical_outputs_give_identical_spectra(flat, flat_measured, flat_sources):
    m2, r2 = build_two_arc_model(256, 0.5)
    f = flat_sources[0].values - flat_sources[1].values
    a = source_to_solution(flat[0], flat[1], 0.5, f)
    b = source_to_solution(m2, r2, 0.5, f)
    assert np.abs(a - b).max() <= 1e-12
    t2 = measured_moment_table(r2, SourceToSolutionMap(m2, r2, 0.5), 0.5, flat_sources, 14)
    s1, s2 = recover_from_table(flat_measured, 6), recover_from_table(t2, 6)
    np.testing.assert_allclose(s2.eigenvalues, s1.eigenvalues, rtol=1e-9)
    assert np.abs(s2.traces - s1.traces).max() <= 1e-8 * np.abs(s1.traces).max()


def test_partition_of_unity_linearity(flat):
    """Traces recovered for f equal the sum of those for eta_1 f and eta_2 f."""
    model, region = flat
    f = mollifier_source(region, MollifierSpec(64, 0.6)).values
    t = (model.coordinates - 64 * model.spacing) / 0.6
    eta1 = chi0(np.clip(t + 0.5, -1, 1) * 0.75 + 0.25)  # smooth step across the source support
    eta1 = np.where(t < -1, 1.0, eta1)
    parts = [eta1 * f, (1 - eta1) * f, f]
    table = measured_moment_table(region, SourceToSolutionMap(model, region, 0.5), 0.5, parts, 14)
    spec = recover_from_table(table, 6)
    lhs = spec.traces[:, 0] + spec.traces[:, 1]
    assert np.abs(lhs - spec.traces[:, 2]).max() <= 1e-8 * np.abs(spec.traces[:, 2]).max()


class TestMultiplicities:
    def test_flat_pairs(self, flat, flat_sources):
        model, region = flat
        spec = oracle_spectrum(model, region, flat_sources, n_modes=12)
        np.testing.assert_array_equal(recover_multiplicities(spec), 2)

    def test_split_modes(self, perturbed):
        model, region = perturbed
        sources = [mollifier_source(region, MollifierSpec(c, 0.3)) for c in (32, 44, 56, 68, 80, 96)]
        spec = oracle_spectrum(model, region, sources, n_modes=12)
        np.testing.assert_array_equal(recover_multiplicities(spec), 1)

    def test_family_too_small(self, flat, flat_sources):
        model, region = flat
        spec = oracle_spectrum(model, region, flat_sources[:3], n_modes=4)
        with pytest.raises(UnderdeterminedError):
            recover_multiplicities(spec)


class TestResolvent:
    @pytest.mark.parametrize("fixture", ["flat", "perturbed"])
    def test_matches_power_series(self, fixture, request):
        model, region = request.getfixturevalue(fixture)
        f = mollifier_source(region, MollifierSpec(64, 0.4))
        lam1 = model.distinct_eigenvalues[1]
        z = lam1 / 2 * np.exp(1j * np.linspace(0, 2 * np.pi, 9))
        trunc = resolvent_from_spectrum(model, z, region=region, f=f).values
        series = resolvent_power_series(model, f, z, region.observed_idx)
        assert np.abs(trunc - series).max() <= 1e-7 * np.abs(trunc).max()

    def test_residue_limit(self, flat, flat_sources):
        model, region = flat
        spec = oracle_spectrum(model, region, flat_sources, n_modes=20)
        for k in range(6):
            res = residue_limit(spec, k, source_index=2)
            ref = spec.traces[k, 2]
            assert np.abs(res - ref).max() <= 1e-5 * np.abs(ref).max()

    def test_undetectable_mode_has_no_pole(self):
        tr = np.ones((3, 1, 4))
        tr[1] = 0.0
        spec = RecoveredSpectrum(np.array([1.0, 2.0, 3.0]), tr)
        assert list(spec.detectable) == [True, False, True]
        out = resolvent_from_spectrum(spec, [0.5])
        np.testing.assert_array_equal(out.poles, [1.0, 3.0])

    def test_pole_proximity(self, flat, flat_sources):
        model, region = flat
        spec = oracle_spectrum(model, region, flat_sources, n_modes=5)
        with pytest.raises(PoleProximityError):
            resolvent_from_spectrum(spec, [spec.eigenvalues[2] * (1 + 1e-5)])


class TestWeyl:
    def test_analytic_spectrum(self, flat):
        _, region = flat
        k = np.arange(1, 31)
        L_hat = recover_volume_weyl(k ** 2.0, np.full(30, 2))
        assert L_hat == pytest.approx(L, rel=0.02)
        hidden = L_hat - region.observed_volume
        assert hidden == pytest.approx(L - region.observed_volume, rel=0.03)

    def test_discrete_spectrum_circumference(self, flat):
        model, _ = flat
        L_hat = recover_volume_weyl(model.distinct_eigenvalues[1:31], model.multiplicities[1:31])
        assert L_hat == pytest.approx(L, rel=0.02)

    @pytest.mark.xfail(strict=True, reason="grid dispersion lowers lambda_30 by ~5%, inflating L by 1.6%, which "
                                            "is 3.1% of the hidden half")
    def test_discrete_spectrum_hidden_length(self, flat):
        model, region = flat
        L_hat = recover_volume_weyl(model.distinct_eigenvalues[1:31], model.multiplicities[1:31])
        assert L_hat - region.observed_volume == pytest.approx(L - region.observed_volume, rel=0.03)

    def test_counting_midpoint(self):
        np.testing.assert_array_equal(counting_at_eigenvalues(np.array([1.0, 4.0]), np.array([2, 2])), [2, 4])

    def test_insufficient_modes(self):
        with pytest.raises(InsufficientDataError):
            recover_volume_weyl([1.0], [2])


class TestDtnAssembly:
    @pytest.mark.parametrize("fixture", ["flat", "perturbed"])
    @pytest.mark.parametrize("lam,tol", [(1.0, 1e-5), (10.0, 1e-4), (100.0, 1e-4)])
    def test_matches_direct_with_exact_data(self, fixture, lam, tol, request):
        model, region = request.getfixturevalue(fixture)
        sources = [mollifier_source(region, MollifierSpec(c, 0.3)) for c in (32, 44, 56, 68, 80, 96)]
        spec = oracle_spectrum(model, region, sources)
        rec = assemble_dtn_from_spectral_data(spec, region, sources, lam, model.total_volume)
        assert np.abs(rec.dtn - dtn_direct(model, region, lam).dtn).max() <= tol

    def test_zero_family(self, flat, flat_sources):
        model, region = flat
        zeros = [np.zeros(model.n_nodes)] * 3
        spec = oracle_spectrum(model, region, zeros)
        with pytest.raises(DensityFailureError):
            assemble_dtn_from_spectral_data(spec, region, zeros, 1.0, model.total_volume)


def test_spectrum_csv(tmp_path):
    spec = RecoveredSpectrum(np.array([1.0, 4.0]), np.ones((2, 1, 3)), multiplicities=np.array([2, 2]))
    spec.to_csv(tmp_path / "s.csv")
    lines = open(tmp_path / "s.csv").read().splitlines()
    assert lines[0] == "k,eigenvalue,multiplicity,detectable,source_id,node,trace"
    assert len(lines) == 1 + 2 * 3
