import math

import numpy as np
import pytest
from scipy import special, stats

import levemb


def test_levenshtein_known_values():
    assert levemb.levenshtein("ACGT", "AGT") == 1
    assert levemb.levenshtein("", "ACG") == 3
    assert levemb.levenshtein("AAAA", "TTTT") == 4
    with pytest.raises(ValueError):
        levemb.levenshtein("ACGX", "A")


def test_losses_and_gradients():
    value, grad = levemb.evaluate_loss("pnll", 3.0, 5.0)
    assert value == pytest.approx(3.0 - 5.0 * math.log(3.0))
    assert grad == pytest.approx(1.0 - 5.0 / 3.0)
    assert levemb.evaluate_loss("pnll", 5.0, 5.0)[1] == pytest.approx(0.0)
    assert levemb.evaluate_loss("rechi2", 3.0, 5.0)[1] == pytest.approx(0.0)
    with pytest.raises(ValueError):
        levemb.evaluate_loss("nll", 1.0, 1.0)


def test_distribution_helpers_match_scipy():
    assert levemb.predicted_variance(2, 80, 120) == pytest.approx(8.0 / 3.0)
    for a, x in [(0.5, 0.2), (3.0, 2.5), (20.0, 25.0), (100.0, 90.0)]:
        assert levemb.regularized_gamma_p(a, x) == pytest.approx(special.gammainc(a, x), rel=1e-10)
        assert levemb.chi2_cdf(x, 2 * a) == pytest.approx(stats.chi2.cdf(x, 2 * a), rel=1e-10)
    assert levemb.ks_critical_value(10000, 0.05) * 100 == pytest.approx(1.3581, rel=1e-4)


def test_harness_moments():
    n, r = 80, math.sqrt(80 / 160)
    d = np.array(levemb.sample_independent_distances(n, r, 20000, seed=3))
    assert d.mean() == pytest.approx(2 * n * r * r, rel=0.02)
    c = np.array(levemb.sample_correlated_distances(120, 80.0, 10, 20000, seed=3))
    assert c.mean() == pytest.approx(10.0, rel=0.02)
    assert c.var(ddof=1) == pytest.approx(levemb.predicted_variance(10, 80, 120), rel=0.06)


def test_eigenvalues_match_numpy():
    rng = np.random.default_rng(0)
    b = rng.standard_normal((12, 12))
    a = b.T @ b
    ours = np.array(levemb.sym_eigenvalues(a))
    np.testing.assert_allclose(ours, np.sort(np.linalg.eigvalsh(a))[::-1], rtol=1e-9, atol=1e-9)


def test_detect_esd_plateau():
    spectra = [[1.0] * d for d in (40, 60, 80, 100, 120)]
    spectra += [[1.0] * 120 + [0.001] * (d - 120) for d in (140, 160, 180)]
    det = levemb.detect_esd(spectra)
    assert det["n0"] == 120
    assert det["lower_bound"] == 120
    assert levemb.detect_esd([[1.0] * 10])["n0"] is None


def test_cli_round_trip(tmp_path):
    data = str(tmp_path / "data")
    rc = levemb.run_cli(["gen-data", "--out", data, "--clusters", "20", "--ref-len", "40",
                         "--train-homologous", "20", "--train-nonhomologous", "20",
                         "--test-homologous", "10", "--test-nonhomologous", "10", "--m-samples", "100"])
    assert rc == 0
    run = str(tmp_path / "run")
    assert levemb.run_cli(["train", "--data", data, "--out", run, "--dim", "8", "--epochs", "1",
                           "--batch", "8", "--validation-pairs", "10"]) == 0
    model = levemb.load_checkpoint(str(tmp_path / "run" / "checkpoint.bin"))
    assert (model.arch, model.dim, model.loss, model.epochs_completed) == ("cnn5", 8, "pnll", 1)
    emb = model.embed(["ACGT" * 10, "TTGCA" * 6])
    assert emb.shape == (2, 8)
    assert np.all(np.isfinite(emb))
    dhat = model.predict([("ACGT" * 10, "ACGT" * 10), ("ACGT" * 10, "TTGCA" * 6)])
    assert dhat[0] == pytest.approx(0.0, abs=1e-9)
    expected = model.scale ** 2 * float(np.sum((emb[0] - emb[1]) ** 2))
    assert dhat[1] == pytest.approx(expected, rel=1e-4)
    assert levemb.run_cli(["frobnicate"]) == 1
