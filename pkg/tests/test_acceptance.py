"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` (about 10 minutes on
one core; criteria 5 and 6 run the full 20-repetition benchmarks). The
verdict lines are repeated in the terminal summary.
"""

import sys
import time

import numpy as np
import pytest

from slowcv import cli, datagen, evaluation, io, linear, msm, neural, numerics, stats

from conftest import linear_gaussian_process, report
from gradcheck import max_rel_error, numeric_grads, smooth_batch

pytestmark = pytest.mark.slow


# -- 1 ------------------------------------------------------------------------


def _random_spec(rng):
    n = int(rng.integers(2, 6))
    enc = tuple(int(w) for w in rng.integers(1, 8, size=int(rng.integers(0, 3))))
    return neural.MlpSpec(
        input_dim=n,
        encoder_hidden=enc,
        latent_dim=int(rng.integers(1, n)),
        leaky_alpha=float(rng.choice([0.001, 0.1, 0.3])),
        dropout_p=0.0,
        activation="leaky_relu" if rng.random() < 0.8 else "identity",
    )


def test_criterion_01_gradient_check():
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for i in range(50):
        spec = _random_spec(rng)
        params = neural.init_params(spec, i)
        # nonzero biases exercise every term of the bias gradients
        params = [(w, 0.1 * rng.standard_normal(b.shape)) for w, b in params]
        batch = int(rng.integers(1, 9))
        x = smooth_batch(params, spec, rng, batch)
        y = rng.standard_normal((batch, spec.input_dim))
        _, analytic = neural.loss_and_grad(params, spec, x, y)
        numeric = numeric_grads(params, spec, x, y, h=1e-5)
        # normwise per parameter array: ||a - n||_inf / max(||a||_inf, ||n||_inf)
        for ga, gn in zip(analytic, numeric):
            for a, n in zip(ga, gn):
                scale = max(np.abs(a).max(), np.abs(n).max(), 1e-12)
                worst = max(worst, float(np.abs(a - n).max() / scale))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-5 and elapsed < 30
    report(1, "gradient check, 50 random specs", ok,
           f"max relative error {worst:.2e} (< 1e-5), {elapsed:.1f} s (< 30 s)")
    assert ok


# -- 2, 3 -----------------------------------------------------------------------


@pytest.fixture(scope="module")
def linear_process():
    rng = np.random.default_rng(2024)
    q = np.linalg.qr(rng.standard_normal((5, 5)))[0]
    a = q @ np.diag([0.97, 0.9, 0.6, 0.3, 0.1]) @ q.T
    mix = rng.standard_normal((5, 5)) + 2 * np.eye(5)
    train = linear_gaussian_process(rng, 50_000, a) @ mix.T
    val = linear_gaussian_process(rng, 20_000, a) @ mix.T
    return train, val


def _linear_tae(train, val, lag, standardize):
    spec = neural.MlpSpec(input_dim=5, encoder_hidden=(), latent_dim=2, dropout_p=0.0,
                          activation="identity")
    cfg = neural.TrainConfig(standardize=standardize, max_epochs=200, early_stop_patience=10)
    return neural.train_tae(train, lag, spec, cfg, seed=0, validation=val)


def test_criterion_02_linear_tae_is_tcca(linear_process):
    train, val = linear_process
    start = time.perf_counter()
    model = _linear_tae(train, val, 1, "whiten")
    elapsed = time.perf_counter() - start
    (w_enc, _), (w_dec, _) = model.params
    # the network acts on whitened frames: x_w = C00^-1/2 (x - mean)
    tcca = linear.fit_tcca(train, 1, 2)
    tcca_enc_white = tcca.encoder @ model.input_standardizer.w_inv
    angles = numerics.principal_angles(w_enc.T, tcca_enc_white)
    covs = stats.estimate_covariances(train, 1)
    w0, _ = numerics.inv_sqrt_truncated(covs.c00)
    wt, _ = numerics.inv_sqrt_truncated(covs.ctt)
    u, s, vt = np.linalg.svd(w0 @ covs.c0t @ wt)
    koopman_d = ((u[:, :2] * s[:2]) @ vt[:2]).T
    frob = float(np.linalg.norm((w_enc @ w_dec).T - koopman_d))
    ok = angles.max() < 0.05 and frob < 0.05 and elapsed < 120
    report(2, "linear TAE equals TCCA", ok,
           f"max principal angle {angles.max():.4f} rad (< 0.05), ||DE - K_d||_F {frob:.4f} (< 0.05), "
           f"{len(model.history)} epochs, {elapsed:.1f} s (< 120 s)")
    assert ok


def test_criterion_03_zero_lag_linear_ae_is_pca(linear_process):
    train, val = linear_process
    model = _linear_tae(train, val, 0, "center")
    w_enc = model.params[0][0]
    pca = linear.fit_pca(train, 2)
    angles = numerics.principal_angles(w_enc.T, pca.encoder)
    ok = angles.max() < 0.05
    report(3, "lag-0 linear autoencoder spans the PCA subspace", ok,
           f"max principal angle {angles.max():.4f} rad (< 0.05)")
    assert ok


# -- 4 ------------------------------------------------------------------------


def test_criterion_04_tica_tcca_reversible():
    spec = datagen.two_state_spec(warp="none")
    z = datagen.sample_hmm(spec, 100_000, 4).observations
    eig = linear.tica_eigenvalues(z, 1)
    sv = linear.fit_tcca(z, 1, 2).singular_values
    tica = linear.fit_tica(z, 1, 1)
    tcca = linear.fit_tcca(z, 1, 1)
    gap = float(np.max(np.abs(eig - sv)))
    angle = float(numerics.principal_angles(tica.encoder, tcca.encoder).max())
    ok = gap < 0.01 and angle < 0.05
    report(4, "TICA equals TCCA on a reversible chain", ok,
           f"eigenvalues {np.round(eig, 4).tolist()} vs singular values {np.round(sv, 4).tolist()}, "
           f"max gap {gap:.4f} (< 0.01), encoder angle {angle:.4f} rad (< 0.05)")
    assert ok


# -- 5, 6 ---------------------------------------------------------------------


def _run_benchmark(name, out_dir):
    start = time.perf_counter()
    code = cli.main(["benchmark", "--config", name, "--out", str(out_dir)])
    elapsed = time.perf_counter() - start
    return code, io.read_json(out_dir / "summary.json"), elapsed


@pytest.fixture(scope="module")
def two_state_run(tmp_path_factory):
    return _run_benchmark("two_state", tmp_path_factory.mktemp("two_state"))


@pytest.fixture(scope="module")
def swissroll_run(tmp_path_factory):
    return _run_benchmark("swissroll", tmp_path_factory.mktemp("swissroll"))


def _median(summary, metric, method, lag):
    return summary["metrics"][metric][method][str(lag)]["median"]


def _its_median(summary, method, msm_lag, index, transform_lag=1):
    return summary["metrics"]["its"][method][str(transform_lag)][str(msm_lag)][index]["median"]


def test_criterion_05_two_state_benchmark(two_state_run):
    code, summary, elapsed = two_state_run
    ref = summary["reference_timescales"][0]
    err = {m: [_median(summary, "reconstruction_error", m, lag) for lag in (1, 2, 5, 10)]
           for m in ("tae", "tica")}
    a = all(t < s for t, s in zip(err["tae"], err["tica"]))
    cca = {m: _median(summary, "cca", m, 1) for m in ("tae", "tica", "pca")}
    b = cca["tae"] > cca["tica"] > cca["pca"]
    tae_its = [_its_median(summary, "tae", lag, 0) for lag in range(1, 11)]
    c = all(t is not None and abs(t / ref - 1) < 0.15 for t in tae_its)
    pca_its = _its_median(summary, "pca", 1, 0)
    d = pca_its is not None and pca_its < 0.7 * ref
    ok = a and b and c and d and code == 0 and elapsed < 15 * 60
    report(5, "two-state benchmark (20 repetitions)", ok,
           f"(a) error TAE {np.round(err['tae'], 3).tolist()} < TICA {np.round(err['tica'], 3).tolist()}: {a}; "
           f"(b) CCA TAE {cca['tae']:.3f} > TICA {cca['tica']:.3f} > PCA {cca['pca']:.3f}: {b}; "
           f"(c) TAE t2 over MSM lags 1-10 in [{min(tae_its):.1f}, {max(tae_its):.1f}] vs {ref:.2f} +-15%: {c}; "
           f"(d) PCA t2 {pca_its:.2f} < 0.7 x ref: {d}; exit {code}; {elapsed / 60:.1f} min (< 15)")
    assert ok


def test_criterion_06_swissroll_benchmark(swissroll_run):
    code, summary, elapsed = swissroll_run
    ref = summary["reference_timescales"]
    cca = _median(summary, "cca", "tae", 1)
    a = cca >= 0.95
    tae5 = [_its_median(summary, "tae", 5, i) for i in range(3)]
    b = all(t is not None and abs(t / r - 1) < 0.2 for t, r in zip(tae5, ref))
    slow = {m: _its_median(summary, m, 1, 0) for m in ("tae", "tica", "pca")}
    c = slow["tica"] < slow["tae"] and slow["pca"] < slow["tae"]
    ok = a and b and c and code == 0 and elapsed < 20 * 60
    report(6, "swissroll benchmark (20 repetitions, d = 2)", ok,
           f"CCA TAE {cca:.3f} (>= 0.95): {a}; TAE ITS at MSM lag 5 {np.round(tae5, 2).tolist()} vs "
           f"{np.round(ref, 2).tolist()} +-20%: {b}; slowest ITS at lag 1 TICA {slow['tica']:.1f}, "
           f"PCA {slow['pca']:.1f} < TAE {slow['tae']:.1f}: {c}; exit {code}; {elapsed / 60:.1f} min (< 20)")
    assert ok


# -- 7 ------------------------------------------------------------------------


def test_criterion_07_msm_self_consistency():
    p = np.array([[0.97, 0.02, 0.01], [0.02, 0.90, 0.08], [0.01, 0.08, 0.91]])
    states = datagen.sample_chain(p, 1_000_000, np.random.default_rng(7), start=0)
    lags = [1, 2, 5, 10]
    table = msm.its_curve(states, 3, lags, 2)
    lam = np.sort(np.abs(np.linalg.eigvals(p)))[::-1][1:]
    analytic = -1.0 / np.log(lam)
    ts = table.timescales
    spread = np.abs(ts / ts[0] - 1).max()
    dev = np.abs(ts / analytic - 1).max()
    ok = spread < 0.10 and dev < 0.05
    report(7, "MSM implied timescales of a sampled 3-state chain", ok,
           f"analytic {np.round(analytic, 3).tolist()}, estimates per lag {np.round(ts, 3).tolist()}, "
           f"lag spread {spread:.3f} (< 0.10), deviation {dev:.3f} (< 0.05)")
    assert ok


# -- 8 ------------------------------------------------------------------------


def test_criterion_08_whitening_identity():
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 9))
        rank = int(rng.integers(1, n + 1))
        length = int(rng.integers(50, 2000))
        latent = rng.standard_normal((length, rank)) * np.exp(rng.uniform(-3, 3, rank))
        data = latent @ rng.standard_normal((rank, n)) + rng.uniform(-100, 100, n)
        white, wt = stats.whiten_trajectories(data)
        centered = white - white.mean(axis=0)
        cov = centered.T @ centered / length
        vals, vecs = numerics.truncated_eig(np.cov(data.T, bias=True).reshape(n, n))
        proj = vecs @ vecs.T
        worst = max(worst, float(np.abs(cov - proj).max()),
                    float(np.abs(vecs.T @ cov @ vecs - np.eye(vals.size)).max()))
        assert wt.rank == vals.size
    ok = worst < 1e-8
    report(8, "whitened covariance is the identity on the retained rank", ok,
           f"max entry error {worst:.2e} over 100 datasets (< 1e-8)")
    assert ok


# -- 9 ------------------------------------------------------------------------


def test_criterion_09_cca_properties():
    rng = np.random.default_rng(9)
    a = rng.standard_normal((5000, 3)) @ rng.standard_normal((3, 3))
    self_err = float(np.abs(evaluation.cca(a, a).correlations - 1).max())
    m = rng.standard_normal((3, 3)) + 2 * np.eye(3)
    affine_err = float(np.abs(evaluation.cca(a, a @ m + rng.standard_normal(3)).correlations - 1).max())
    null = evaluation.cca(rng.standard_normal(100_000), rng.standard_normal(100_000)).score
    ok = self_err < 1e-9 and affine_err < 1e-9 and null < 0.05
    report(9, "CCA properties", ok,
           f"self {self_err:.1e} (< 1e-9), affine {affine_err:.1e} (< 1e-9), null score {null:.4f} (< 0.05)")
    assert ok


# -- 10 -----------------------------------------------------------------------


DETERMINISM_CONFIG = """\
data: {generator: two-state, length: 20000}
methods:
  tae: {dim: 1, hidden: [20], dropout_p: 0.5, max_epochs: 5}
  tica: {dim: 1}
  pca: {dim: 1}
lags: [1, 5]
repetitions: 2
seed: 11
msm: {k: 20, lags: [1, 5], n_timescales: 1, stride: 2}
output: out
"""


def test_criterion_10_benchmark_determinism(tmp_path):
    cfg = tmp_path / "det.cfg"
    cfg.write_text(DETERMINISM_CONFIG)
    codes = [cli.main(["benchmark", "--config", str(cfg), "--workers", str(w), "--out", str(tmp_path / d)])
             for w, d in ((1, "a"), (2, "b"))]
    first = (tmp_path / "a" / "summary.json").read_bytes()
    second = (tmp_path / "b" / "summary.json").read_bytes()
    ok = codes == [0, 0] and first == second
    report(10, "benchmark summary JSON is byte-identical across runs", ok,
           f"exit codes {codes}, {len(first)} bytes, identical: {first == second}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))
