import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from clusteriv import (
    ClusterIVError,
    Dataset,
    NonPositiveSeDiff,
    TooFewValidReplicates,
    cluster_bootstrap,
    fit_2sfe,
    fit_canonical_2sls,
    hettest,
    joint_cov,
)
from clusteriv.heterogeneity import bootstrap_replicate
from clusteriv.rng import substream

from oracles import random_instance


@st.composite
def dataset(draw):
    G = draw(st.integers(3, 10))
    sizes = draw(st.lists(st.integers(2, 6), min_size=G, max_size=G))
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    y, d, z, g, _ = random_instance(rng, G, sizes)
    return Dataset.from_arrays(y, d, z, g)


def _joint_or_none(data):
    try:
        return joint_cov(data)
    except ClusterIVError:
        return None


def _sample(seed=0, G=40, n=8):
    y, d, z, g, _ = random_instance(np.random.default_rng(seed), G, [n] * G)
    return Dataset.from_arrays(y, d, z, g)


class TestJointCov:
    @given(dataset())
    def test_diagonal_matches_fits(self, data):
        res = _joint_or_none(data)
        if res is None:
            return
        assert_allclose(res.cov2[0, 0], fit_canonical_2sls(data).se ** 2, rtol=1e-12)
        assert_allclose(res.cov2[1, 1], fit_2sfe(data).se ** 2, rtol=1e-12)
        assert res.cov2[0, 1] == res.cov2[1, 0]
        # |correlation| <= 1, written so that a zero variance is allowed
        assert res.cov2[0, 1] ** 2 <= res.cov2[0, 0] * res.cov2[1, 1] * (1 + 1e-12) ** 2 + 1e-300

    @given(dataset())
    def test_two_forms_of_se_diff(self, data):
        res = _joint_or_none(data)
        if res is None:
            return
        assert_allclose(res.se_diff ** 2, res.se_diff_sq_expanded, rtol=1e-10,
                        atol=1e-12 * (res.cov2[0, 0] + res.cov2[1, 1]))
        assert_allclose(res.t_stat, (res.tau_ls - res.tau_fe) / res.se_diff)
        assert 0 <= res.p_value <= 1

    def test_off_diagonal_by_loop(self):
        data = _sample(1, G=6, n=5)
        ls, fe = fit_canonical_2sls(data), fit_2sfe(data)
        g = data.idx.group_of
        z = data.z
        zbar = np.array([z[g == k].mean() for k in range(6)])
        a = [np.sum((z[g == k] - z.mean()) * ls.residuals[g == k]) for k in range(6)]
        b = [np.sum((z[g == k] - zbar[k]) * fe.residuals[g == k]) for k in range(6)]
        n = data.n_units
        expected = np.dot(a, b) / (n ** 2 * ls.s_zd * fe.s_zd)
        assert_allclose(joint_cov(data).cov2[0, 1], expected, rtol=1e-12)

    def test_zero_residuals(self):
        z = np.array([0.0, 1, 0, 1, 1, 0])
        data = Dataset.from_arrays(z, z, z, [0, 0, 1, 1, 2, 2])
        with pytest.raises(NonPositiveSeDiff):
            joint_cov(data)

    @given(st.integers(0, 1000), st.floats(-100, 100), st.floats(0.01, 100))
    def test_location_scale(self, seed, shift, scale):
        data = _sample(seed, G=8, n=5)
        base = _joint_or_none(data)
        if base is None:
            return
        moved = hettest(Dataset(scale * data.y + shift, data.d, data.z, data.idx))
        assert_allclose(moved.se_diff, scale * base.se_diff, rtol=1e-7)
        assert_allclose(moved.t_stat, base.t_stat, rtol=1e-7, atol=1e-9)

    def test_reject_flag_and_dict(self):
        res = hettest(_sample(2))
        assert res.reject == (abs(res.t_stat) > 1.96)
        d = res.to_dict()
        assert d["method"] == "analytic" and len(d["cov2"]) == 2


class TestBootstrap:
    def test_identity_resample(self):
        data = _sample(3, G=2, n=6)
        seed = next(s for s in range(1000) if sorted(substream(s, 0).integers(0, 2, size=2)) == [0, 1])
        boot = cluster_bootstrap(data, 1, seed)
        assert_allclose(boot.replicates[0, 0], fit_canonical_2sls(data).tau_hat, rtol=1e-12)
        assert_allclose(boot.replicates[0, 1], fit_2sfe(data).tau_hat, rtol=1e-12)

    def test_replicate_uses_stream(self):
        data = _sample(4, G=10)
        boot = cluster_bootstrap(data, 5, 99)
        draws = substream(99, 3).integers(0, 10, size=10)
        assert_allclose(boot.replicates[3, :2], bootstrap_replicate(data, draws))

    def test_determinism(self):
        data = _sample(5, G=20)
        a = cluster_bootstrap(data, 120, 7)
        b = cluster_bootstrap(data, 120, 7)
        c = cluster_bootstrap(data, 120, 8)
        assert_array_equal(a.replicates, b.replicates)
        assert not np.array_equal(a.replicates, c.replicates)

    def test_threads_do_not_change_output(self):
        data = _sample(6, G=20)
        a = cluster_bootstrap(data, 150, 3, threads=1)
        b = cluster_bootstrap(data, 150, 3, threads=4)
        assert_array_equal(a.replicates, b.replicates)
        assert a.se_diff == b.se_diff

    def test_failures_counted_then_fatal(self):
        # only cluster 0 has within-cluster instrument variation
        y = np.arange(9.0)
        z = np.array([0, 1, 1, 1, 1, 1, 0, 0, 0.0])
        d = z.copy()
        d[2] = 0.0
        data = Dataset.from_arrays(y, d, z, np.repeat([0, 1, 2], 3))
        with pytest.raises(TooFewValidReplicates):
            cluster_bootstrap(data, 200, 1)

    def test_summary_fields(self):
        data = _sample(7, G=30)
        boot = cluster_bootstrap(data, 100, 11)
        assert boot.replicates.shape == (100 - boot.n_failed, 3)
        assert_allclose(boot.replicates[:, 2], boot.replicates[:, 0] - boot.replicates[:, 1])
        assert_allclose(boot.se_diff, np.std(boot.replicates[:, 2], ddof=1))
        het = boot.to_het_result()
        assert het.method == "bootstrap" and het.bootstrap_reps == 100
        d = boot.to_dict(replicates=False)
        assert "replicates" not in d and d["seed"] == 11

    def test_argument_checks(self):
        data = _sample(8, G=5)
        with pytest.raises(ValueError):
            cluster_bootstrap(data, 0, 1)
        with pytest.raises(ValueError):
            substream(-1)
