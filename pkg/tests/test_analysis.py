"""PCA embedding, silhouette, residual autocorrelation."""

import numpy as np
import pytest

from conftest import random_grid
from freqct.analysis import (
    EmbeddingPoint,
    mean_abs_offcenter,
    pca_embed,
    residual_autocorr,
    silhouette_two_groups,
)
from freqct.rng import RngStream


class TestPca:
    @pytest.mark.filterwarnings("ignore:covariance rank")
    def test_identical_samples_embed_at_origin(self):
        x = random_grid(1, 6, 6)
        points = pca_embed([x, x.copy()], k=1)
        for p in points:
            np.testing.assert_allclose(p.coords, 0.0, atol=1e-12)

    def test_antipodal_pair(self):
        v = random_grid(2, 5, 5)
        pts = pca_embed([v, -v], k=1)
        norm = np.linalg.norm((v - 0.0).ravel())
        coords = sorted(float(p.coords[0]) for p in pts)
        np.testing.assert_allclose(coords, [-norm, norm], rtol=1e-10)

    def test_reconstruction_with_full_rank(self):
        samples = [random_grid(10 + i, 8, 8) for i in range(5)]
        x = np.stack([s.ravel() for s in samples])
        centered = x - x.mean(axis=0)
        pts = pca_embed(samples, k=4)
        # recover the component basis by re-deriving it the same way
        gram = centered @ centered.T / 4
        evals, evecs = np.linalg.eigh(gram)
        order = np.argsort(evals)[::-1][:4]
        basis = []
        for comp in order:
            v = centered.T @ evecs[:, comp]
            v /= np.linalg.norm(v)
            if v[np.argmax(np.abs(v))] < 0:
                v = -v
            basis.append(v)
        basis = np.stack(basis, axis=1)
        coords = np.stack([p.coords for p in pts])
        recon = coords @ basis.T
        assert np.max(np.abs(recon - centered)) < 1e-8 * max(np.abs(centered).max(), 1.0)

    def test_sign_convention_deterministic(self):
        samples = [random_grid(20 + i, 6, 6) for i in range(4)]
        a = pca_embed(samples, k=2)
        b = pca_embed(list(samples), k=2)
        for pa, pb in zip(a, b):
            np.testing.assert_array_equal(pa.coords, pb.coords)

    def test_k_bound(self):
        with pytest.raises(ValueError):
            pca_embed([random_grid(30, 4, 4), random_grid(31, 4, 4)], k=2)

    def test_needs_two_samples(self):
        with pytest.raises(ValueError):
            pca_embed([np.zeros((4, 4))], k=1)

    def test_degenerate_rank_warns(self):
        x = random_grid(32, 4, 4)
        with pytest.warns(UserWarning):
            pca_embed([x, x.copy(), x.copy()], k=2)


class TestSilhouette:
    def test_separated_clusters_positive(self):
        pts = [EmbeddingPoint(f"a_{i}", np.array([0.0 + 0.01 * i, 0.0])) for i in range(4)]
        pts += [EmbeddingPoint(f"b_{i}", np.array([10.0 + 0.01 * i, 0.0])) for i in range(4)]
        score = silhouette_two_groups(pts, lambda lbl: lbl.split("_")[0])
        assert score > 0.9

    def test_mixed_clusters_near_zero(self):
        rng = RngStream(33)
        pts = [EmbeddingPoint(f"{'a' if i % 2 else 'b'}_{i}", rng.normals(2)) for i in range(20)]
        score = silhouette_two_groups(pts, lambda lbl: lbl.split("_")[0])
        assert abs(score) < 0.4

    def test_excluded_labels(self):
        pts = [
            EmbeddingPoint("a_0", np.zeros(2)),
            EmbeddingPoint("a_1", np.zeros(2)),
            EmbeddingPoint("b_0", np.ones(2)),
            EmbeddingPoint("b_1", np.ones(2)),
            EmbeddingPoint("ref", np.full(2, 99.0)),
        ]
        score = silhouette_two_groups(
            pts, lambda lbl: lbl.split("_")[0] if "_" in lbl else None
        )
        assert score > 0.9


class TestAutocorr:
    def test_lag_zero_is_one(self):
        noisy = random_grid(40, 32, 32)
        rows = residual_autocorr(noisy, np.zeros((32, 32)), max_lag=5)
        center = [c for dr, dc, c in rows if dr == 0 and dc == 0]
        assert len(center) == 1 and abs(center[0] - 1.0) < 1e-12

    def test_white_noise_bound(self):
        resid = RngStream(41).normals(64 * 64).reshape(64, 64)
        rows = residual_autocorr(resid, np.zeros((64, 64)), max_lag=10)
        bound = 4.0 / 64.0  # 4 / sqrt(#bins)
        for dr, dc, c in rows:
            if (dr, dc) != (0, 0):
                assert abs(c) < bound

    def test_periodic_residual_peak(self):
        base = RngStream(42).normals(64).reshape(1, 64)
        resid = np.tile(base, (8, 1))  # identical rows: strong row-lag correlation
        rows = residual_autocorr(resid, np.zeros((64, 64))[:8], max_lag=3)
        row_lags = {dr: c for dr, dc, c in rows if dc == 0}
        assert row_lags[1] > 0.99  # shifted copy of itself at row lag 1

    def test_zero_variance_rejected(self):
        with pytest.raises(ValueError):
            residual_autocorr(np.ones((16, 16)), np.ones((16, 16)), max_lag=2)

    def test_lag_too_large(self):
        with pytest.raises(ValueError):
            residual_autocorr(random_grid(43, 16, 16), np.zeros((16, 16)), max_lag=8)

    def test_mean_abs_offcenter(self):
        rows = [(0, 0, 1.0), (1, 0, 0.5), (0, 1, -0.5)]
        assert mean_abs_offcenter(rows) == 0.5
