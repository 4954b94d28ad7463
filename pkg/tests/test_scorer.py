import numpy as np
import pytest

from vpkit.audio import AudioBuffer
from vpkit.metrics.privacy import ScoreSet, cllr
from vpkit.scorer import (
    FEATURE_DIM,
    UttVector,
    calibrate,
    cosine_similarity,
    featurize,
    mel_filterbank,
    score,
)


def tone(freq, sr=16000, n=16000, amp=0.3):
    return AudioBuffer(amp * np.sin(2 * np.pi * freq * np.arange(n) / sr), sr)


class TestFeaturize:
    def test_dimension_and_normalization(self, rng):
        v = featurize(AudioBuffer(rng.standard_normal(8000) * 0.1, 16000))
        assert v.features.shape == (FEATURE_DIM,)
        assert v.features.mean() == pytest.approx(0.0, abs=1e-9)
        assert v.features.std() == pytest.approx(1.0, abs=1e-9)

    def test_identical_audio_identical_features(self, rng):
        x = rng.standard_normal(8000) * 0.1
        a = featurize(AudioBuffer(x, 16000))
        b = featurize(AudioBuffer(x.copy(), 16000))
        np.testing.assert_array_equal(a.features, b.features)

    def test_amplitude_invariance(self, rng):
        x = rng.standard_normal(8000) * 0.1
        a = featurize(AudioBuffer(x, 16000))
        b = featurize(AudioBuffer(2.0 * x, 16000))
        np.testing.assert_allclose(a.features, b.features, atol=1e-9)

    def test_noise_vs_tone_dissimilar(self, rng):
        noise = featurize(AudioBuffer(rng.standard_normal(16000) * 0.2, 16000))
        pure = featurize(tone(440.0))
        assert cosine_similarity(noise.features, pure.features) < 0.5

    def test_silent_audio_flagged_zero_vector(self):
        with pytest.warns(UserWarning, match="silent"):
            v = featurize(AudioBuffer(np.zeros(4000), 16000), "quiet")
        np.testing.assert_array_equal(v.features, np.zeros(FEATURE_DIM))

    def test_empty_audio_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            featurize(AudioBuffer(np.zeros(0), 16000))

    def test_mel_filterbank_covers_bins(self):
        fb = mel_filterbank(16000, 320)
        assert fb.shape == (FEATURE_DIM, 161)
        assert np.all(fb >= 0)
        assert np.all(fb.sum(axis=1) > 0)


class TestScore:
    def test_self_score_is_slope_plus_offset(self, rng):
        v = featurize(AudioBuffer(rng.standard_normal(8000), 16000))
        assert score(v, v, (2.5, -1.0)) == pytest.approx(2.5 - 1.0)

    def test_orthogonal_gives_offset(self):
        a = np.zeros(FEATURE_DIM)
        b = np.zeros(FEATURE_DIM)
        a[0] = 1.0
        b[1] = 1.0
        assert score(UttVector("a", a), UttVector("b", b), (3.0, 0.25)) == pytest.approx(0.25)

    def test_symmetry_exact(self, rng):
        a = featurize(AudioBuffer(rng.standard_normal(8000), 16000), "a")
        b = featurize(AudioBuffer(rng.standard_normal(8000), 16000), "b")
        cal = (1.7, 0.3)
        assert score(a, b, cal) == score(b, a, cal)

    def test_slope_must_be_positive(self, rng):
        v = featurize(AudioBuffer(rng.standard_normal(8000), 16000))
        with pytest.raises(ValueError, match="positive"):
            score(v, v, (0.0, 0.0))
        with pytest.raises(ValueError, match="finite"):
            score(v, v, (np.inf, 0.0))


class TestCalibrate:
    def test_separated_cosines_large_slope_low_cllr(self):
        rng = np.random.default_rng(3)
        tar = rng.uniform(0.7, 0.95, 100)
        non = rng.uniform(-0.2, 0.2, 100)
        dev = ScoreSet.from_arrays(tar, non)
        slope, offset = calibrate(dev)
        assert slope > 10.0
        mapped = ScoreSet.from_arrays(slope * tar + offset, slope * non + offset)
        assert cllr(mapped) < 0.1

    def test_shuffled_labels_flat_slope_unit_cllr(self):
        rng = np.random.default_rng(9)
        pooled = rng.uniform(-0.5, 0.9, 2000)
        tar, non = pooled[:1000], pooled[1000:]
        slope, offset = calibrate(ScoreSet.from_arrays(tar, non))
        assert abs(slope) < 0.5
        mapped = ScoreSet.from_arrays(slope * tar + offset, slope * non + offset)
        assert cllr(mapped) == pytest.approx(1.0, abs=0.1)

    def test_calibrated_cllr_never_worse_than_raw(self):
        rng = np.random.default_rng(21)
        for _ in range(10):
            tar = rng.normal(0.4, 0.3, 50)
            non = rng.normal(0.0, 0.3, 50)
            raw = ScoreSet.from_arrays(tar, non)
            slope, offset = calibrate(raw)
            mapped = ScoreSet.from_arrays(slope * tar + offset, slope * non + offset)
            assert cllr(mapped) <= cllr(raw) + 1e-9

    def test_monotone_order_preserved(self):
        rng = np.random.default_rng(4)
        tar = rng.uniform(0.3, 0.9, 50)
        non = rng.uniform(-0.3, 0.4, 50)
        slope, offset = calibrate(ScoreSet.from_arrays(tar, non))
        assert slope > 0
        raw = np.concatenate([tar, non])
        mapped = slope * raw + offset
        assert np.array_equal(np.argsort(raw), np.argsort(mapped))

    def test_too_few_pairs_rejected(self):
        with pytest.raises(ValueError, match="at least 10"):
            calibrate(ScoreSet.from_arrays([0.5] * 9, [0.1] * 20))


class TestScorerBackedMatrix:
    def test_similarity_matrix_symmetric_with_builtin_scorer(self, rng):
        from vpkit.metrics.privacy import similarity_matrix

        vectors = {
            f"{spk}{u}": featurize(
                AudioBuffer(rng.standard_normal(6400) * 0.2, 16000), f"{spk}{u}"
            )
            for spk in "ab" for u in range(2)
        }
        cal = (4.0, -1.0)

        def llr(ids_a, side_a, ids_b, side_b):
            return np.array(
                [[score(vectors[x], vectors[y], cal) for y in ids_b] for x in ids_a]
            )

        m = similarity_matrix(llr, {"a": ["a0", "a1"], "b": ["b0", "b1"]}, "oo")
        np.testing.assert_allclose(m.values, m.values.T, atol=1e-12)
