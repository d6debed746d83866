import numpy as np
import pytest

from frechetlab.errors import EmptyWindow, InfeasibleThreshold
from frechetlab.frechet_solvers import WeightedGaussianSet, wasserstein_barycenter
from frechetlab.gaussian_manifold import Gaussian, SpdMatrix, wasserstein2_distance_sq
from frechetlab.rng import StreamFactory, substream
from frechetlab.semantic_compression import (
    INDEPENDENT,
    THINNING,
    CompressionSpec,
    effective_dispersion,
    expected_distortion_bound,
    min_sparse_intensity,
    run_compression_protocol,
    semantic_distortion,
    semantic_similarity,
)
from frechetlab.spatial_field import MarkedField, MarkModel, PppConfig, Window, sample_field


def iso_model(mean=(0.0, 0.0), sigma=np.eye(2)):
    return MarkModel(np.asarray(mean, float), SpdMatrix(np.eye(2)), SpdMatrix(sigma))


def test_spec_validation():
    with pytest.raises(ValueError):
        CompressionSpec(1.0, 2.0, Window(1.0), 0.1)
    with pytest.raises(ValueError):
        CompressionSpec(1.0, 0.5, Window(1.0), 0.0)
    assert CompressionSpec(1.0, 1.0, Window(1.0), 0.1).metric.value == "wasserstein2"


def test_distortion_bound_arithmetic():
    spec = CompressionSpec(1.0, 0.25, Window(10.0), 0.05)
    assert expected_distortion_bound(np.eye(2), spec) == pytest.approx(0.025)
    same = CompressionSpec(1.0, 1.0, Window(10.0), 0.05)
    assert expected_distortion_bound(np.eye(2), same) == pytest.approx(2 * 2 / 400)
    double = CompressionSpec(1.0, 0.25, Window(10.0 * np.sqrt(2)), 0.05)
    assert expected_distortion_bound(np.eye(2), double) == pytest.approx(0.0125)


def test_min_sparse_intensity():
    w = Window(10.0)
    got = min_sparse_intensity(np.eye(2), 0.25, w, 0.5)
    assert got == pytest.approx(2 / (400 * (0.5 - 0.02)), rel=1e-12)
    for eps in (0.03, 0.05, 0.5):
        lam = min_sparse_intensity(np.eye(2), 1.0, w, eps)
        spec = CompressionSpec(1.0, lam, w, eps)
        assert expected_distortion_bound(np.eye(2), spec) == pytest.approx(eps, abs=1e-12)
    with pytest.raises(InfeasibleThreshold):
        min_sparse_intensity(np.eye(2), 1.0, w, 0.005)
    near = min_sparse_intensity(np.eye(2), 1.0, w, 0.005 + 1e-9)
    assert near > 1e5


def test_distortion_identities():
    cfg = PppConfig(0.5, Window(5.0))
    f = sample_field(cfg, iso_model(), substream(0))
    assert semantic_distortion(f, f) == 0.0
    g = sample_field(cfg, iso_model(), substream(1))
    sigma = np.array([[2.0, 0.4], [0.4, 1.0]])
    f2 = MarkedField(f.points, f.means, SpdMatrix(sigma))
    g2 = MarkedField(g.points, g.means, SpdMatrix(sigma))
    diff = f.means.mean(axis=0) - g.means.mean(axis=0)
    assert semantic_distortion(f2, g2, "wasserstein2") == pytest.approx(diff @ diff, rel=1e-12)
    assert semantic_distortion(f2, g2, "fisher_rao") == pytest.approx(diff @ np.linalg.solve(sigma, diff), rel=1e-10)
    assert semantic_similarity(f2, g2) == pytest.approx(semantic_similarity(g2, f2), abs=1e-12)
    with pytest.raises(EmptyWindow):
        semantic_distortion(f, MarkedField(np.zeros((0, 2)), np.zeros((0, 2)), f.covs))


def test_distortion_heteroscedastic_1d():
    a = MarkedField.from_marks([[0, 0], [1, 0]], [Gaussian([0.0], [[1.0]]), Gaussian([10.0], [[4.0]])])
    b = MarkedField.from_marks([[0, 0], [1, 1]], [Gaussian([1.0], [[9.0]]), Gaussian([3.0], [[1.0]])])
    pa = wasserstein_barycenter(WeightedGaussianSet(a.marks)).barycenter
    pb = wasserstein_barycenter(WeightedGaussianSet(b.marks)).barycenter
    assert semantic_distortion(a, b) == pytest.approx(wasserstein2_distance_sq(pa, pb), rel=1e-10)


def test_similarity_shifted_models_large_counts():
    sigma = np.diag([1.0, 4.0])
    delta = np.array([1.0, 2.0])
    cfg = PppConfig(5.0, Window(20.0))
    f = sample_field(cfg, iso_model((0, 0), sigma), substream(2))
    g = sample_field(cfg, iso_model(delta, sigma), substream(3))
    expected = delta @ np.linalg.solve(sigma, delta)
    assert semantic_similarity(f, g, "fisher_rao") == pytest.approx(expected, rel=0.05)


def test_effective_dispersion():
    m = MarkModel(np.zeros(2), SpdMatrix(np.diag([0.5, 2.0])), SpdMatrix(np.diag([1.0, 4.0])))
    assert np.allclose(effective_dispersion(m, "w2"), np.diag([0.5, 2.0]))
    assert np.allclose(effective_dispersion(m, "fr"), np.diag([0.5, 0.5]))


def test_protocol_independent_dominates_at_min_intensity():
    w = Window(10.0)
    lam = min_sparse_intensity(np.eye(2), 1.0, w, 0.05)
    spec = CompressionSpec(1.0, lam, w, 0.05)
    res = run_compression_protocol(iso_model(), spec, 1000, StreamFactory(1), INDEPENDENT)
    assert res.bound == pytest.approx(0.05)
    assert res.report.dominance_holds
    assert res.empirical_mean <= 0.05 + res.report.mc_slack


def test_protocol_equal_intensities_matches_variance_addition():
    spec = CompressionSpec(1.0, 1.0, Window(10.0), 0.05)
    res = run_compression_protocol(iso_model(), spec, 1000, StreamFactory(2), INDEPENDENT)
    assert res.empirical_mean == pytest.approx(2 * 2 / 400, abs=res.report.mc_slack)


def test_protocol_thinning_variant_and_guards():
    spec = CompressionSpec(1.0, 0.1, Window(5.0), 0.5)
    res = run_compression_protocol(iso_model(), spec, 200, StreamFactory(3), THINNING, min_trials=1)
    assert np.all(res.n_sparse <= res.n_dense)
    assert res.summary()["variant"] == THINNING
    with pytest.raises(ValueError):
        run_compression_protocol(iso_model(), spec, 10, StreamFactory(3), INDEPENDENT)
    with pytest.raises(ValueError):
        run_compression_protocol(iso_model(), spec, 2000, StreamFactory(3), "other")
