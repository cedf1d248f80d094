import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from hodgegp import EdgeGPRegressor, HodgeDecomposition, UsageError, hodge_decompose
from hodgegp.data import sample_hodge_flow, split, synth_forex


@pytest.fixture(scope="module")
def forex():
    ds = synth_forex(8, 1.0, 0.3, noise=0.01, relative_noise=True, seed=(1, 0))
    return split(ds, 0.4, seed=(1, 2))


class TestEdgeGPRegressor:
    def test_fit_predict_roundtrip(self, forex):
        est = EdgeGPRegressor(forex.complex, kernel="hc-matern", iters=300, random_state=0)
        tr = forex.train_indices
        est.fit(tr, forex.observations.values[tr])
        te = forex.test_indices
        mean, std = est.predict(te, return_std=True)
        assert mean.shape == te.shape and std.shape == te.shape
        assert np.all(std >= 0)
        # interpolates the curl-free structure far better than predicting zero
        truth = forex.observations.values[te]
        assert np.sqrt(np.mean((mean - truth) ** 2)) < 0.5 * np.sqrt(np.mean(truth**2))

    def test_score_is_r2(self, forex):
        est = EdgeGPRegressor(forex.complex, iters=200, random_state=0)
        tr = forex.train_indices
        est.fit(tr, forex.observations.values[tr])
        te = forex.test_indices
        assert est.score(te, forex.observations.values[te]) > 0.5

    def test_predict_components_sum(self, forex):
        est = EdgeGPRegressor(forex.complex, kernel="hc-matern", iters=100, random_state=1)
        tr = forex.train_indices
        est.fit(tr, forex.observations.values[tr])
        te = forex.test_indices
        comps = est.predict_components(te)
        total = sum(m for m, _ in comps.values())
        assert np.abs(total - est.predict(te)).max() < 1e-8

    def test_not_fitted_error(self, forex):
        est = EdgeGPRegressor(forex.complex)
        with pytest.raises(NotFittedError):
            est.predict([0, 1])

    def test_sklearn_clone_and_get_params(self, forex):
        est = EdgeGPRegressor(forex.complex, kernel="diffusion", iters=42, lr=0.01)
        cloned = clone(est)
        assert cloned.get_params()["iters"] == 42
        assert cloned.get_params()["kernel"] == "diffusion"
        assert cloned.get_params()["complex"].edges == forex.complex.edges

    def test_duplicate_train_indices_rejected(self, forex):
        est = EdgeGPRegressor(forex.complex)
        with pytest.raises(UsageError):
            est.fit([0, 0, 1], np.zeros(3))

    def test_out_of_range_indices_rejected(self, forex):
        est = EdgeGPRegressor(forex.complex, iters=10)
        with pytest.raises(UsageError):
            est.fit([0, forex.complex.n_edges], np.zeros(2))

    def test_column_vector_accepted(self, forex):
        est = EdgeGPRegressor(forex.complex, iters=20, random_state=0)
        tr = forex.train_indices
        est.fit(tr.reshape(-1, 1), forex.observations.values[tr])
        out = est.predict(np.array([[0], [1]]))
        assert out.shape == (2,)

    def test_truncated_spectrum_mode(self, forex):
        est = EdgeGPRegressor(forex.complex, kernel="hc-matern", iters=50,
                              truncate=10, random_state=0)
        tr = forex.train_indices
        est.fit(tr, forex.observations.values[tr])
        assert est.spectrum_.truncated
        est.predict(forex.test_indices)

    def test_line_graph_kernel_mode(self, forex):
        est = EdgeGPRegressor(forex.complex, kernel="line-graph-matern", iters=30)
        tr = forex.train_indices
        est.fit(tr, forex.observations.values[tr])
        assert est.spectrum_ is None
        with pytest.raises(UsageError):
            est.predict_components(forex.test_indices)

    def test_deterministic_per_random_state(self, forex):
        tr = forex.train_indices
        y = forex.observations.values[tr]
        a = EdgeGPRegressor(forex.complex, iters=40, random_state=5).fit(tr, y)
        b = EdgeGPRegressor(forex.complex, iters=40, random_state=5).fit(tr, y)
        assert np.array_equal(a.loss_trace_, b.loss_trace_)


class TestHodgeDecomposition:
    def test_transform_concatenates_components(self, house):
        rng = np.random.default_rng(0)
        flows = rng.standard_normal((4, house.n_edges))
        t = HodgeDecomposition(house).fit()
        out = t.transform(flows)
        assert out.shape == (4, 3 * house.n_edges)
        n = house.n_edges
        for i, row in enumerate(flows):
            parts = hodge_decompose(house, row)
            assert np.allclose(out[i, :n], parts.f_h.values, atol=1e-10)
            assert np.allclose(out[i, n : 2 * n], parts.f_g.values, atol=1e-10)
            assert np.allclose(out[i, 2 * n :], parts.f_c.values, atol=1e-10)

    def test_inverse_transform_reconstructs(self, house):
        rng = np.random.default_rng(1)
        flows = rng.standard_normal((3, house.n_edges))
        t = HodgeDecomposition(house).fit()
        assert np.allclose(t.inverse_transform(t.transform(flows)), flows, atol=1e-10)

    def test_not_fitted(self, house):
        with pytest.raises(NotFittedError):
            HodgeDecomposition(house).transform(np.zeros((1, house.n_edges)))

    def test_clone(self, house):
        t = HodgeDecomposition(house)
        assert clone(t).get_params()["complex"].edges == house.edges
