import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import linalg

from oracles import central_gradient, central_jacobian, dense_gaussian_loglik, dense_gaussian_score
from oracles import logistic_loglik as logistic_oracle
from rensem.graph import Network, gen_erdos_renyi, gen_ring
from rensem.likelihood import (
    CovarianceError,
    DesignMatrices,
    GaussianBlock,
    LikelihoodModel,
    StructuredCovariance,
    hessian,
    loglik,
    observed_information,
    score,
)
from rensem.model import Dataset, ParamIndex, RenSemParams, design_truth, simulate_dataset


def random_params(rng, p=1) -> RenSemParams:
    idx = ParamIndex(p)
    vec = rng.normal(0, 1, idx.size)
    for name in ("var_y", "var_by", "var_m", "var_bm"):
        vec[getattr(idx, name)] = rng.uniform(0.3, 2.0)
    vec[idx.alpha] *= 0.5
    return RenSemParams.from_vector(vec, p)


def fd_points(net, n_points=20, seed=0):
    rng = np.random.default_rng(seed)
    data = simulate_dataset(net, design_truth(), seed=seed)
    return data, [random_params(rng) for _ in range(n_points)]


def max_rel_err(approx, exact, floor=1e-2):
    return float(np.max(np.abs(approx - exact) / np.maximum(np.abs(exact), floor)))


def check_derivatives(net, n_points=20, seed=0):
    data, points = fd_points(net, n_points, seed)
    model = LikelihoodModel(data)
    worst_g = worst_h = 0.0
    for prm in points:
        f = lambda v: model.loglik(RenSemParams.from_vector(v)).total  # noqa: E731
        g = lambda v: model.score(RenSemParams.from_vector(v))  # noqa: E731
        vec = prm.to_vector()
        worst_g = max(worst_g, max_rel_err(central_gradient(f, vec), model.score(prm)))
        worst_h = max(worst_h, max_rel_err(central_jacobian(g, vec), model.hessian(prm)))
    return worst_g, worst_h


class TestLoglik:
    def test_triangle_closed_form(self):
        net = gen_ring(3)
        z = np.zeros(3)
        data = Dataset(net, z, z, z, z)
        prm = RenSemParams(np.zeros(7), np.zeros(5), np.zeros(2), 1.0, 0.0, 1.0, 0.0)
        parts = loglik(data, prm)
        assert parts.l_y == pytest.approx(-1.5 * np.log(2 * np.pi))
        assert parts.l_m == pytest.approx(-1.5 * np.log(2 * np.pi))
        assert parts.l_a == pytest.approx(3 * np.log(0.5))
        assert parts.total == pytest.approx(parts.l_y + parts.l_m + parts.l_a)

    @pytest.mark.parametrize("seed", range(5))
    def test_dense_oracle(self, er150, seed):
        rng = np.random.default_rng(seed)
        data = simulate_dataset(er150, design_truth(), seed=seed)
        prm = random_params(rng)
        dm = DesignMatrices.from_data(data)
        e = er150.adjacency
        ref_y = dense_gaussian_loglik(data.y, dm.x_y, prm.beta, prm.var_y, prm.var_by, e)
        ref_m = dense_gaussian_loglik(data.m, dm.x_m, prm.gamma, prm.var_m, prm.var_bm, e)
        parts = loglik(data, prm)
        assert parts.l_y == pytest.approx(ref_y, rel=1e-8)
        assert parts.l_m == pytest.approx(ref_m, rel=1e-8)
        assert parts.l_a == pytest.approx(logistic_oracle(data.a, data.c[:, 0], prm.alpha), rel=1e-10)

    def test_gls_is_maximiser(self, ring_data, rng):
        dm = DesignMatrices.from_data(ring_data)
        block = GaussianBlock(ring_data.y, dm.x_y, ring_data.net)
        coef = block.gls(1.3, 0.7)
        best = block.loglik(coef, 1.3, 0.7)
        for _ in range(10):
            assert block.loglik(coef + 0.01 * rng.normal(size=coef.size), 1.3, 0.7) < best
        assert np.max(np.abs(block.score(coef, 1.3, 0.7)[:-2])) <= 1e-8

    def test_non_pd_reports_block(self, ring_data):
        dm = DesignMatrices.from_data(ring_data)
        block = GaussianBlock(ring_data.m, dm.x_m, ring_data.net, "m")
        with pytest.raises(CovarianceError, match="'m'"):
            block.loglik(np.zeros(5), -5.0, 0.0)
        with pytest.raises(ValueError):
            RenSemParams(np.zeros(7), np.zeros(5), np.zeros(2), 1.0, 1.0, -5.0, 0.0)

    def test_relabelling_invariance(self, er_data, rng):
        perm = rng.permutation(er_data.n)
        e = er_data.net.adjacency[np.ix_(perm, perm)]
        d2 = Dataset(Network(e), er_data.a[perm], er_data.m[perm], er_data.y[perm], er_data.c[perm])
        prm = random_params(rng)
        assert loglik(d2, prm).total == pytest.approx(loglik(er_data, prm).total, rel=1e-10)


class TestDerivatives:
    @pytest.mark.parametrize("net", [gen_ring(30), gen_erdos_renyi(30, 4.0, seed=3)], ids=["ring", "er"])
    def test_finite_differences(self, net):
        worst_g, worst_h = check_derivatives(net, n_points=20)
        assert worst_g <= 1e-4
        assert worst_h <= 1e-3

    def test_score_matches_dense_oracle(self, er_data, rng):
        prm = random_params(rng)
        dm = DesignMatrices.from_data(er_data)
        e = er_data.net.adjacency
        ref = dense_gaussian_score(er_data.y, dm.x_y, prm.beta, prm.var_y, prm.var_by, e)
        np.testing.assert_allclose(score(er_data, prm)[ParamIndex().y_block], ref, rtol=1e-8, atol=1e-8)

    def test_block_structure(self, ring_data, rng):
        h = hessian(ring_data, random_params(rng))
        idx = ParamIndex()
        y, m, a = idx.y_block, idx.m_block, np.arange(idx.size)[idx.alpha]
        assert not h[np.ix_(y, m)].any()
        assert not h[np.ix_(y, a)].any()
        assert not h[np.ix_(m, a)].any()
        np.testing.assert_array_equal(h, h.T)

    def test_alpha_block(self, ring_data, rng):
        prm = random_params(rng)
        j = observed_information(ring_data, prm)
        np.testing.assert_array_equal(j, -hessian(ring_data, prm))
        xa = np.column_stack([np.ones(ring_data.n), ring_data.c])
        pi = 1 / (1 + np.exp(-xa @ prm.alpha))
        ja = j[ParamIndex().alpha, ParamIndex().alpha]
        np.testing.assert_allclose(ja, xa.T @ (xa * (pi * (1 - pi))[:, None]), rtol=1e-12)
        assert np.all(np.linalg.eigvalsh(ja) >= 0)


class TestStructuredCovariance:
    @given(st.integers(0, 10**6), st.floats(0.05, 3.0), st.floats(0.0, 3.0))
    @settings(max_examples=20, deadline=None)
    def test_against_dense(self, seed, var_err, var_re):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(5, 200))
        net = gen_erdos_renyi(n, min(6.0, n - 2.0), seed=seed)
        cov = StructuredCovariance.for_network(net, var_err, var_re)
        dense = var_err * np.eye(n) + var_re * net.adjacency @ net.adjacency.T
        v = rng.normal(size=n)
        ref = linalg.solve(dense, v, assume_a="pos")
        np.testing.assert_allclose(cov.solve(v), ref, rtol=1e-8, atol=1e-10 * np.abs(ref).max())
        sign, ld = np.linalg.slogdet(dense)
        assert sign > 0
        assert cov.logdet() == pytest.approx(ld, rel=1e-8)
        np.testing.assert_allclose(cov.dense(), dense, atol=1e-9)
