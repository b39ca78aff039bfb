import numpy as np
import pytest

from slowcv import datagen, linear, numerics, stats
from slowcv.errors import DegenerateCovarianceError, RankError

from conftest import linear_gaussian_process


@pytest.fixture(scope="module")
def lgp():
    rng = np.random.default_rng(7)
    a = np.diag([0.95, 0.8, 0.5, 0.2])
    mix = np.linalg.qr(rng.standard_normal((4, 4)))[0] @ np.diag([1.0, 2.0, 0.5, 1.5])
    return linear_gaussian_process(rng, 20_000, a) @ mix.T


def _covs(c00, c0t, ctt):
    return stats.CovarianceSet(np.atleast_2d(c00), np.atleast_2d(c0t), np.atleast_2d(ctt), 1, 10)


def test_koopman_scalar():
    np.testing.assert_allclose(linear.koopman_matrix(_covs(2.0, 1.0, 2.0)), [[0.5]])


def test_koopman_zero_lag_identity(rng):
    z = rng.standard_normal((100, 3))
    np.testing.assert_allclose(linear.koopman_matrix(stats.estimate_covariances(z, 0)), np.eye(3),
                               atol=1e-12)


def test_koopman_degenerate():
    with pytest.raises(DegenerateCovarianceError):
        linear.koopman_matrix(_covs(np.zeros((2, 2)), np.zeros((2, 2)), np.eye(2)))


def test_half_weighted_identity():
    np.testing.assert_allclose(linear.half_weighted_koopman(_covs(np.eye(2), np.eye(2), np.eye(2))),
                               np.eye(2))


def test_tcca_1d_ar_process(rng):
    # AR(1) with coefficient rho: lag-1 correlation is rho
    rho = 0.7
    z = linear_gaussian_process(rng, 100_000, np.array([[rho]]))
    model = linear.fit_tcca(z, 1, 1)
    assert abs(model.singular_values[0] - rho) < 0.01


def test_tcca_predict_is_rank_d_koopman_regression(lgp):
    lag, d = 2, 2
    model = linear.fit_tcca(lgp, lag, d)
    covs = stats.estimate_covariances(lgp, lag)
    full = linear.fit_tcca(lgp, lag, 4)
    # full rank forecast equals the least squares regression C00^-1 C0t
    k = linear.koopman_matrix(covs)
    np.testing.assert_allclose(full.decoder @ full.encoder, k.T, atol=1e-8)
    # whitened rank-d map is the truncated SVD of the half-weighted matrix
    w0, _ = numerics.inv_sqrt_truncated(covs.c00)
    wt, _ = numerics.inv_sqrt_truncated(covs.ctt)
    m = w0 @ covs.c0t @ wt
    u, s, vt = np.linalg.svd(m)
    oracle = (u[:, :d] * s[:d]) @ vt[:d]
    np.testing.assert_allclose(wt @ model.decoder @ model.encoder @ np.linalg.inv(w0), oracle.T, atol=1e-8)


def test_tcca_eckart_young(lgp, rng):
    lag, d = 1, 2
    pairs = stats.lagged_pairs(lgp, lag)
    covs = stats.covariances(pairs)
    w0, _ = numerics.inv_sqrt_truncated(covs.c00)
    wt, _ = numerics.inv_sqrt_truncated(covs.ctt)
    xw, yw = pairs.x @ w0, pairs.y @ wt
    model = linear.fit_tcca(lgp, lag, d)
    kd = wt @ model.decoder @ model.encoder @ np.linalg.inv(w0)
    resid = np.sum((yw - xw @ kd.T) ** 2)
    s = np.linalg.svd(w0 @ covs.c0t @ wt, compute_uv=False)
    np.testing.assert_allclose(resid, np.sum(s[d:] ** 2) * pairs.n_pairs + np.sum(yw ** 2)
                               - np.sum(s ** 2) * pairs.n_pairs, rtol=1e-6)
    for _ in range(5):
        alt = kd + 0.05 * rng.standard_normal((4, d)) @ rng.standard_normal((d, 4))
        u, sv, vt = np.linalg.svd(alt)
        alt = (u[:, :d] * sv[:d]) @ vt[:d]
        assert np.sum((yw - xw @ alt.T) ** 2) >= resid - 1e-9


def test_tcca_zero_lag_matches_pca_of_whitened(rng):
    z = rng.standard_normal((500, 3)) @ rng.standard_normal((3, 3))
    model = linear.fit_tcca(z, 0, 2)
    np.testing.assert_allclose(model.singular_values, [1.0, 1.0], atol=1e-10)


def test_tcca_rank_error(rng):
    z = rng.standard_normal((100, 1)) @ np.ones((1, 3))
    with pytest.raises(RankError):
        linear.fit_tcca(z, 1, 2)


def test_tica_matches_tcca_on_reversible_data():
    spec = datagen.two_state_spec(warp="none")
    z = datagen.sample_hmm(spec, 50_000, 3).observations
    tica = linear.fit_tica(z, 1, 1)
    tcca = linear.fit_tcca(z, 1, 1)
    assert abs(tica.singular_values[0] - tcca.singular_values[0]) < 0.01
    assert numerics.principal_angles(tica.encoder, tcca.encoder)[0] < 0.05


def test_tica_eigenvalues_against_generalized_problem(lgp):
    from scipy.linalg import eigh

    covs = stats.estimate_covariances(lgp, 3)
    c0 = 0.5 * (covs.c00 + covs.ctt)
    ct = 0.5 * (covs.c0t + covs.c0t.T)
    oracle = eigh(ct, c0, eigvals_only=True)[::-1]
    np.testing.assert_allclose(linear.tica_eigenvalues(lgp, 3), oracle, atol=1e-10)


def test_tica_kinetic_map_scaling(lgp):
    km = linear.fit_tica(lgp, 1, 2, kinetic_map=True)
    plain = linear.fit_tica(lgp, 1, 2, kinetic_map=False)
    lam = linear.tica_eigenvalues(lgp, 1)[:2]
    np.testing.assert_allclose(km.encoder, lam[:, None] * plain.encoder, atol=1e-12)
    np.testing.assert_allclose(km.predict(lgp[:50]), plain.predict(lgp[:50]), atol=1e-10)
    enc = plain.encode(lgp)
    np.testing.assert_allclose(np.cov(enc.T, bias=True), np.eye(2), atol=0.02)


def test_pca_matches_svd_of_centered_data(rng):
    z = rng.standard_normal((300, 4)) @ rng.standard_normal((4, 4))
    model = linear.fit_pca(z, 2)
    centered = z - z.mean(axis=0)
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    assert max(numerics.principal_angles(model.encoder, vt[:2])) < 1e-8
    np.testing.assert_allclose(model.singular_values, s[:2] / np.sqrt(z.shape[0]), rtol=1e-10)


def test_pca_full_dim_round_trip(rng):
    z = rng.standard_normal((50, 3))
    model = linear.fit_pca(z, 3)
    np.testing.assert_allclose(model.predict(z), z, atol=1e-10)


def test_pca_dim_error(rng):
    with pytest.raises(RankError):
        linear.fit_pca(rng.standard_normal((20, 2)), 3)


def test_serialization_round_trip(lgp):
    model = linear.fit_tica(lgp, 2, 2)
    back = linear.LinearEncoderDecoder.from_dict(model.to_dict())
    np.testing.assert_array_equal(back.encoder, model.encoder)
    np.testing.assert_array_equal(back.decoder, model.decoder)
    assert back.method == "tica" and back.lag == 2 and back.kinetic_map


def test_encode_maps_lists(lgp):
    model = linear.fit_pca(lgp, 1)
    out = model.encode([lgp[:10], lgp[10:30]])
    assert [o.shape for o in out] == [(10, 1), (20, 1)]


def test_tcca_beats_pca_forecast_on_two_state():
    from slowcv.evaluation import reconstruction_error, target_whitener

    z = datagen.sample_hmm(datagen.two_state_spec(), 30_000, 11).observations
    train, val = z[:20_000], z[20_000:]
    whit = target_whitener(train, 1)
    e_tcca = reconstruction_error(linear.fit_tcca(train, 1, 1), val, 1, whit)
    e_pca = reconstruction_error(linear.fit_pca(train, 1), val, 1, whit)
    assert e_tcca <= e_pca
