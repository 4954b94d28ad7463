import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import signal as sps

from vpkit.audio import AudioBuffer, write_wav
from vpkit.lpc import PoleSet
from vpkit.mcadams import (
    McAdamsConfig,
    anonymize_directory,
    anonymize_mcadams,
    anonymize_with_report,
    load_anonymization_manifest,
    transform_poles,
)


def poleset(*poles):
    arr = np.asarray(poles, dtype=np.complex128)
    return PoleSet(np.sort_complex(arr), len(arr))


def two_formant_vowel(sr=16000, formants=((700.0, 80.0), (1200.0, 90.0)), seed=7):
    rng = np.random.default_rng(seed)
    n = sr
    excitation = np.zeros(n)
    excitation[np.arange(0, n, int(sr / 120))] = 1.0
    excitation += 0.01 * rng.standard_normal(n)
    x = excitation
    for f, bw in formants:
        r = np.exp(-np.pi * bw / sr)
        theta = 2 * np.pi * f / sr
        x = sps.lfilter([1.0], [1.0, -2 * r * np.cos(theta), r * r], x)
    x = 0.6 * x / np.max(np.abs(x))
    fade = 80
    ramp = np.linspace(0.0, 1.0, fade)
    x[:fade] *= ramp
    x[-fade:] *= ramp[::-1]
    return AudioBuffer(x, sr)


def spectral_peak_hz(samples, sr, lo, hi):
    freq, power = sps.welch(samples, fs=sr, nperseg=1024)
    band = (freq >= lo) & (freq <= hi)
    return float(freq[band][np.argmax(power[band])])


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            McAdamsConfig(alpha=0.0)
        with pytest.raises(ValueError):
            McAdamsConfig(radius_scale=0.0)
        with pytest.raises(ValueError):
            McAdamsConfig(radius_scale=1.1)
        with pytest.raises(ValueError):
            McAdamsConfig(lpc_order=1)


class TestTransformPoles:
    def test_single_pole_angle_power(self):
        phi = np.pi / 4
        ps = poleset(0.9 * np.exp(1j * phi), 0.9 * np.exp(-1j * phi))
        out = transform_poles(ps, McAdamsConfig(alpha=0.8, radius_scale=1.0))
        upper = out.poles[out.poles.imag > 0][0]
        assert abs(np.angle(upper) - phi**0.8) < 1e-12
        assert abs(abs(upper) - 0.9) < 1e-12

    def test_alpha_one_is_identity(self, rng):
        r = rng.uniform(0.2, 0.99, 5)
        phi = rng.uniform(0.05, np.pi - 0.05, 5)
        pos = r * np.exp(1j * phi)
        ps = PoleSet(np.sort_complex(np.concatenate([[0.3 + 0j], pos, np.conj(pos)])), 11)
        out = transform_poles(ps, McAdamsConfig(alpha=1.0, radius_scale=1.0))
        np.testing.assert_allclose(out.poles, ps.poles, atol=1e-12)

    def test_real_pole_radius_scaling_only(self):
        out = transform_poles(poleset(0.8 + 0j), McAdamsConfig(alpha=0.8, radius_scale=0.975))
        assert abs(out.poles[0] - 0.78) < 1e-12
        negative = transform_poles(poleset(-0.8 + 0j), McAdamsConfig(alpha=0.8, radius_scale=0.975))
        assert abs(negative.poles[0] - (-0.78)) < 1e-12

    def test_contracted_radius_exact(self, rng):
        # pre-clamp radii: 0.975 * r is exact for stable inputs
        r = rng.uniform(0.2, 0.99, 8)
        phi = rng.uniform(0.05, np.pi - 0.05, 8)
        pos = r * np.exp(1j * phi)
        ps = PoleSet(np.sort_complex(np.concatenate([pos, np.conj(pos)])), 16)
        out = transform_poles(ps, McAdamsConfig(alpha=0.8, radius_scale=0.975))
        got = np.sort(np.abs(out.poles[out.poles.imag > 0]))
        np.testing.assert_allclose(got, np.sort(0.975 * r), atol=1e-12)

    def test_stability_clamp(self):
        hot = 1.2 * np.exp(1j * 0.5)
        out = transform_poles(poleset(hot, np.conj(hot), 1.5 + 0j), McAdamsConfig(alpha=0.8))
        assert np.all(np.abs(out.poles) <= 0.999 + 1e-15)

    def test_angle_contraction_monotonicity(self):
        # alpha < 1 pulls angles toward 1 rad from both sides
        small, big = 0.4, 2.5
        ps = poleset(
            0.9 * np.exp(1j * small), 0.9 * np.exp(-1j * small),
            0.9 * np.exp(1j * big), 0.9 * np.exp(-1j * big),
        )
        out = transform_poles(ps, McAdamsConfig(alpha=0.8))
        angles = np.sort(np.angle(out.poles[out.poles.imag > 0]))
        assert small < angles[0] < 1.0
        assert 1.0 < angles[1] < big

    @given(
        st.lists(
            st.tuples(
                st.floats(0.01, 1.04),
                st.floats(0.01, np.pi - 0.01),
            ),
            min_size=1,
            max_size=8,
        ),
        st.lists(st.floats(-1.04, 1.04), min_size=0, max_size=4),
        st.sampled_from([0.5, 0.8, 1.0, 1.5]),
        st.sampled_from([0.9, 0.975, 1.0]),
    )
    @settings(max_examples=60, deadline=None)
    def test_output_conjugate_closed_and_stable(self, pairs, reals, alpha, radius_scale):
        pos = np.array([r * np.exp(1j * phi) for r, phi in pairs])
        poles = np.concatenate([np.asarray(reals, complex), pos, np.conj(pos)])
        ps = PoleSet(np.sort_complex(poles), len(poles))
        out = transform_poles(ps, McAdamsConfig(alpha=alpha, radius_scale=radius_scale))
        assert len(out.poles) == len(ps.poles)
        assert np.all(np.abs(out.poles) <= 0.999 + 1e-12)
        np.testing.assert_array_equal(
            np.sort_complex(out.poles), np.sort_complex(np.conj(out.poles))
        )


class TestAnonymize:
    def test_identity_config_high_snr(self, rng):
        x = sps.lfilter([1.0], [1.0, -0.9], rng.standard_normal(16000)) * 0.1
        audio = AudioBuffer(x, 16000)
        out = anonymize_mcadams(audio, McAdamsConfig(alpha=1.0, radius_scale=1.0))
        assert len(out) == len(audio)
        interior = slice(320, len(x) - 320)
        err = out.samples[interior] - x[interior]
        snr = 10 * np.log10(np.sum(x[interior] ** 2) / np.sum(err**2))
        assert snr >= 40.0

    def test_vowel_peaks_move_toward_2500(self):
        vowel = two_formant_vowel()
        out = anonymize_mcadams(vowel, McAdamsConfig(alpha=0.8))
        f1_old = spectral_peak_hz(vowel.samples, 16000, 500, 1000)
        f2_old = spectral_peak_hz(vowel.samples, 16000, 1000, 1800)
        f1_new = spectral_peak_hz(out.samples, 16000, 500, 1400)
        f2_new = spectral_peak_hz(out.samples, 16000, 1100, 2300)
        reference = 1.0 * 16000 / (2 * np.pi)  # 1 rad, about 2546 Hz
        assert f1_old < f1_new < reference
        assert f2_old < f2_new < reference

    def test_zero_signal_gives_zero_output(self):
        out = anonymize_mcadams(AudioBuffer(np.zeros(5000), 16000), McAdamsConfig())
        np.testing.assert_array_equal(out.samples, np.zeros(5000))

    def test_empty_audio_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            anonymize_mcadams(AudioBuffer(np.zeros(0), 16000), McAdamsConfig())

    def test_deterministic(self, rng):
        x = rng.standard_normal(8000) * 0.2
        audio = AudioBuffer(x, 16000)
        a = anonymize_mcadams(audio, McAdamsConfig(alpha=0.8))
        b = anonymize_mcadams(audio, McAdamsConfig(alpha=0.8))
        np.testing.assert_array_equal(a.samples, b.samples)

    def test_output_peak_normalized(self, rng):
        x = np.clip(sps.lfilter([1.0], [1.0, -0.98], rng.standard_normal(8000)), -1, 1)
        out = anonymize_mcadams(AudioBuffer(x, 16000), McAdamsConfig(alpha=0.6))
        assert np.max(np.abs(out.samples)) <= 1.0

    def test_report_counts(self, rng):
        audio = AudioBuffer(rng.standard_normal(4800) * 0.3, 16000)
        out, report = anonymize_with_report(audio, McAdamsConfig())
        assert report.frames == len(audio.samples) // 160 - 1
        assert report.flagged_frames >= 0
        assert report.pole_clamps >= 0


class TestDirectory:
    def _make_corpus(self, tmp_path, rng, n=3):
        in_dir = tmp_path / "in"
        in_dir.mkdir()
        manifest = {}
        for i in range(n):
            utt = f"utt{i}"
            rel = f"{utt}.wav"
            write_wav(in_dir / rel, AudioBuffer(rng.standard_normal(4000) * 0.2, 16000))
            manifest[utt] = rel
        return in_dir, manifest

    def test_empty_manifest(self, tmp_path):
        reports = anonymize_directory(tmp_path, tmp_path / "out", McAdamsConfig(), {})
        assert reports == []

    def test_unreadable_file_collected(self, tmp_path, rng):
        in_dir, manifest = self._make_corpus(tmp_path, rng)
        manifest["broken"] = "missing.wav"
        with pytest.warns(UserWarning, match="1 of 4 files failed"):
            reports = anonymize_directory(in_dir, tmp_path / "out", McAdamsConfig(), manifest)
        by_id = {r.utt_id: r for r in reports}
        assert not by_id["broken"].ok
        assert all(by_id[f"utt{i}"].ok for i in range(3))

    def test_ten_file_run_bit_identical(self, tmp_path, rng):
        in_dir, manifest = self._make_corpus(tmp_path, rng, n=10)
        out1, out2 = tmp_path / "out1", tmp_path / "out2"
        r1 = anonymize_directory(in_dir, out1, McAdamsConfig(), manifest, jobs=4)
        r2 = anonymize_directory(in_dir, out2, McAdamsConfig(), manifest, jobs=2)
        assert all(r.ok for r in r1 + r2)
        for rel in manifest.values():
            assert (out1 / rel).read_bytes() == (out2 / rel).read_bytes()

    def test_manifest_loader(self, tmp_path):
        path = tmp_path / "m.tsv"
        path.write_text("u1\ta/b.wav\nu2\tspk\tc.wav\n\n", encoding="utf-8")
        assert load_anonymization_manifest(path) == {"u1": "a/b.wav", "u2": "c.wav"}
        bad = tmp_path / "bad.tsv"
        bad.write_text("u1\ta\tb\tc\n", encoding="utf-8")
        with pytest.raises(ValueError, match="expected 2 or 3"):
            load_anonymization_manifest(bad)
