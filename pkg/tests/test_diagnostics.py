import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from clusteriv import (
    AllZeroWeights,
    Dataset,
    DegenerateInstrument,
    DegenerateWithinVariation,
    EfficiencyModel,
    asymptotic_variances,
    covariate_adjustment_ratios,
    design_diagnostics,
    efficiency_cutoff,
    efficiency_ratio,
    equal_size_ratio,
    fe_weights,
    fit_2sfe,
    independent_assignment_ratio,
)

unit = st.floats(0.01, 1.0)
pos = st.floats(0.01, 50.0)


def _data(z, groups):
    z = np.asarray(z, float)
    return Dataset.from_arrays(np.arange(z.size, dtype=float), z, z, groups)


class TestDesign:
    def test_equal_proportions(self):
        diag = design_diagnostics(_data([0, 1, 0, 1], [0, 0, 1, 1]))
        assert diag.kappa_hat == 1.0 and diag.c_hat == 0.0
        assert_allclose(diag.phi_hat, [0, 0])
        assert diag.n_effective_clusters == 2 and diag.fe_admissible

    def test_cluster_constant(self):
        data = _data([0, 0, 1, 1], [0, 0, 1, 1])
        diag = design_diagnostics(data)
        assert diag.kappa_hat == 0.0
        assert not diag.fe_admissible
        assert any("inadmissible" in note for note in diag.notes)
        with pytest.raises(DegenerateWithinVariation):
            fit_2sfe(data)

    def test_constant_instrument(self):
        with pytest.raises(DegenerateInstrument):
            design_diagnostics(_data([1, 1, 1, 1], [0, 0, 1, 1]))

    @given(st.lists(st.integers(1, 8), min_size=2, max_size=12), st.integers(0, 2**32 - 1))
    def test_anova_and_bounds(self, sizes, seed):
        rng = np.random.default_rng(seed)
        g = np.repeat(np.arange(len(sizes)), sizes)
        z = (rng.random(g.size) < rng.uniform(0.1, 0.9, len(sizes))[g]).astype(float)
        if np.ptp(z) == 0:
            return
        diag = design_diagnostics(_data(z, g))
        n = g.size
        zbar = np.array([z[g == k].mean() for k in range(len(sizes))])
        between = np.sum(np.array(sizes) * (zbar - z.mean()) ** 2)
        assert_allclose(n * diag.s_z, n * diag.s_z_in + between, rtol=1e-12)
        assert 0 <= diag.kappa_hat <= 1
        assert_allclose(diag.c_hat, np.sum(np.array(sizes) ** 2 * diag.phi_hat) / n, rtol=1e-12)
        assert (diag.kappa_hat == 0) == (diag.n_effective_clusters == 0)

    def test_to_dict_flags_proxy(self):
        d = design_diagnostics(_data([0, 1, 0, 1, 1, 1], [0, 0, 1, 1, 1, 2])).to_dict()
        assert d["phi_hat_is_single_draw_proxy"] is True
        assert len(d["phi_hat"]) == 3


class TestEfficiency:
    def test_no_cluster_effect(self):
        m = EfficiencyModel(0.0, 2.0, 0.7, 3.0)
        assert efficiency_ratio(m) == 0.7

    def test_fixed_proportions(self):
        assert efficiency_ratio(EfficiencyModel(1.0, 1.0, 1.0, 0.0)) == 1.0

    def test_equal_clusters_value(self):
        assert_allclose(equal_size_ratio(10, 0.1, 0.5), 1.35, rtol=1e-14)
        m = EfficiencyModel(0.5, 1.0, 1 - 0.1, 10 * 0.1)
        assert_allclose(efficiency_ratio(m), 1.35, rtol=1e-14)

    def test_cutoff_values(self):
        assert efficiency_cutoff(1.0, 0.0) == 0.0
        assert efficiency_cutoff(0.5, 0.0) == np.inf
        # equal clusters: kappa = 1 - phi, c = n phi
        assert_allclose(efficiency_cutoff(0.5, 10 * 0.5), 1 / (10 * 0.5), rtol=1e-14)
        assert_allclose(efficiency_cutoff(0.5, 10 * 0.5), 0.2, rtol=1e-14)
        # uncorrelated within clusters: kappa = 1 - 1/n, c = 1
        assert_allclose(efficiency_cutoff(1 - 1 / 21, 1.0), 0.05, rtol=1e-12)

    def test_independent_assignment(self):
        assert_allclose(independent_assignment_ratio(21, 0.3), (20 / 21) * 1.3)
        m = EfficiencyModel(0.3, 1.0, 1 - 1 / 21, 1.0)
        assert_allclose(efficiency_ratio(m), independent_assignment_ratio(21, 0.3), rtol=1e-14)

    @given(unit, st.floats(0.0, 20.0), st.floats(0.0, 10.0), pos)
    def test_cutoff_equivalence(self, kappa, c, s_a, s_e):
        m = EfficiencyModel(s_a, s_e, kappa, c)
        ratio = efficiency_ratio(m)
        cut = efficiency_cutoff(kappa, c)
        # skip draws on the boundary itself, where rounding decides the sign
        if abs(ratio - 1) <= 1e-12 or (np.isfinite(cut) and abs(m.variance_ratio - cut) < 1e-9 * (1 + cut)):
            return
        assert (ratio > 1) == (m.variance_ratio > cut)

    @given(st.integers(2, 50), st.floats(0.0, 0.99), st.floats(0.0, 10.0))
    def test_equal_size_consistency(self, n_bar, phi, vr):
        m = EfficiencyModel(vr, 1.0, 1 - phi, n_bar * phi)
        assert_allclose(efficiency_ratio(m), equal_size_ratio(n_bar, phi, vr), rtol=1e-13)

    @given(unit, st.floats(0.0, 20.0), st.floats(0.0, 10.0), pos, unit, st.floats(0.01, 0.25))
    def test_variances_ratio(self, kappa, c, s_a, s_e, pi_c, s_z):
        m = EfficiencyModel(s_a, s_e, kappa, c, pi_c, s_z)
        v_ls, v_fe = asymptotic_variances(m)
        assert_allclose(v_ls / v_fe, efficiency_ratio(m), rtol=1e-12)

    def test_model_validation(self):
        for bad in [(-1, 1, 0.5, 1), (1, 0, 0.5, 1), (1, 1, 0, 1), (1, 1, 1.1, 1), (1, 1, 0.5, -1)]:
            with pytest.raises(ValueError):
                EfficiencyModel(*bad)
        with pytest.raises(ValueError):
            EfficiencyModel(1, 1, 0.5, 1, pi_c=0)
        with pytest.raises(ValueError):
            EfficiencyModel(1, 1, 0.5, 1, sigma_z2=0.3)
        with pytest.raises(ValueError):
            efficiency_cutoff(0.0, 1.0)


class TestCovariateRatios:
    def test_no_projection(self):
        m = EfficiencyModel(2.0, 1.0, 0.8, 3.0)
        assert covariate_adjustment_ratios(m, 0.0) == (1.0, efficiency_ratio(m))

    def test_full_projection(self):
        m = EfficiencyModel(2.0, 1.0, 0.8, 3.0)
        assert_allclose(covariate_adjustment_ratios(m, 2.0)[1], 0.8, rtol=1e-14)

    def test_value(self):
        m = EfficiencyModel(1.0, 4.0, 0.9, 1.0)
        first, second = covariate_adjustment_ratios(m, 0.5)
        assert_allclose(first, 1 - 0.5 / 5, rtol=1e-14)
        assert_allclose(second, 0.9 * 0.9 * 1.25, rtol=1e-14)

    def test_range(self):
        with pytest.raises(ValueError):
            covariate_adjustment_ratios(EfficiencyModel(1.0, 1.0, 0.5, 1.0), 1.5)


class TestWeights:
    def test_identical_clusters(self):
        w = fe_weights([5] * 4, [0.2] * 4, [0.25] * 4, [0.6] * 4, [1.5] * 4, equal_e=True)
        assert_allclose(w.kappa_2sfe, 0.25)
        assert_allclose(w.kappa_2sls, 0.25)
        assert_allclose([w.plim_2sfe, w.plim_2sls], 1.5)

    def test_proportional_to_instrument_variance(self):
        s = np.array([0.25, 0.25, 0.1, 0.1])
        w = fe_weights([20] * 4, [1 / 20] * 4, s, [0.7] * 4, [0, 0, 1, 1])
        assert_allclose(w.kappa_2sfe, s / s.sum(), rtol=1e-14)
        assert_allclose(w.plim_2sfe, 0.2 / 0.7, rtol=1e-14)
        assert w.kappa_2sls is None and w.plim_2sls is None

    @given(st.integers(1, 30).flatmap(lambda G: st.tuples(
        st.lists(st.integers(1, 50), min_size=G, max_size=G),
        st.lists(st.floats(0.0, 0.9), min_size=G, max_size=G),
        st.lists(st.floats(0.01, 0.25), min_size=G, max_size=G),
        st.lists(st.floats(0.01, 1.0), min_size=G, max_size=G),
    )), st.floats(0.1, 100.0))
    def test_normalized_and_scale_free(self, params, scale):
        n, phi, s, pi = map(np.asarray, params)
        tau = np.linspace(-1, 1, n.size)
        w = fe_weights(n, phi, s, pi, tau, equal_e=True)
        v = fe_weights(n, phi, s * scale, pi, tau)
        assert np.all(w.kappa_2sfe >= 0) and np.all(w.kappa_2sls >= 0)
        assert_allclose(w.kappa_2sfe.sum(), 1.0, rtol=1e-12)
        assert_allclose(w.kappa_2sls.sum(), 1.0, rtol=1e-12)
        assert_allclose(v.kappa_2sfe, w.kappa_2sfe, rtol=1e-12, atol=1e-15)

    def test_errors(self):
        with pytest.raises(AllZeroWeights):
            fe_weights([3, 3], [1.0, 1.0], [0.25, 0.25], [0.5, 0.5], [1, 2])
        with pytest.raises(ValueError):
            fe_weights([3, 3], [0.1], [0.25, 0.25], [0.5, 0.5], [1, 2])
