import json

import numpy as np
import pytest

from livemix import session, wavio
from livemix.dsp import AudioBuffer
from livemix.errors import InputError
from livemix.session import gen_synth, load_session, resample_linear, save_session

from conftest import two_channel_spec


def write_session_dir(tmp_path, num_channels=3, num_samples=8000, rate=16000,
                      with_reference=True, seed=0):
    tmp_path.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    entries = []
    for i in range(num_channels):
        name = f"ch{i}.wav"
        data = (0.3 * rng.standard_normal(num_samples)).astype(np.float32).astype(np.float64)
        wavio.write_wav(tmp_path / name, AudioBuffer(data, rate))
        entries.append({"file": name, "name": f"track{i}", "instrument": "synth"})
    manifest = {"sample_rate": rate, "channels": entries, "reference_mix": None}
    if with_reference:
        mix = (0.3 * rng.standard_normal(num_samples)).astype(np.float32).astype(np.float64)
        wavio.write_wav(tmp_path / "mix.wav", AudioBuffer(mix, rate))
        manifest["reference_mix"] = "mix.wav"
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(manifest))
    return path


class TestWavIo:
    def test_float32_round_trip_bit_exact(self, tmp_path):
        data = np.random.default_rng(1).standard_normal(1000).astype(np.float32)
        buf = AudioBuffer(data.astype(np.float64), 16000)
        wavio.write_wav(tmp_path / "x.wav", buf)
        back = wavio.read_wav(tmp_path / "x.wav")
        assert back.sample_rate == 16000
        assert np.array_equal(back.samples, buf.samples)

    def test_pcm16_round_trip(self, tmp_path):
        buf = AudioBuffer(np.linspace(-0.9, 0.9, 256), 16000)
        wavio.write_wav(tmp_path / "x.wav", buf, fmt="pcm16")
        back = wavio.read_wav(tmp_path / "x.wav")
        assert np.max(np.abs(back.samples - buf.samples)) < 1.0 / 32768

    def test_missing_file(self):
        with pytest.raises(InputError, match="not found"):
            wavio.read_wav("/nonexistent/file.wav")

    def test_stereo_rejected(self, tmp_path):
        from scipy.io import wavfile

        wavfile.write(tmp_path / "st.wav", 16000, np.zeros((100, 2), dtype=np.float32))
        with pytest.raises(InputError, match="mono"):
            wavio.read_wav(tmp_path / "st.wav")


class TestResample:
    def test_length_arithmetic(self):
        buf = AudioBuffer(np.zeros(44100), 44100)
        out = resample_linear(buf, 16000)
        assert len(out) == round(44100 * 16000 / 44100) == 16000

    def test_odd_length(self):
        buf = AudioBuffer(np.zeros(12345), 44100)
        assert len(resample_linear(buf, 16000)) == round(12345 * 16000 / 44100)

    def test_identity_at_same_rate(self):
        buf = AudioBuffer(np.arange(100, dtype=np.float64), 16000)
        assert resample_linear(buf, 16000) is buf

    def test_tone_survives(self):
        t = np.arange(44100) / 44100
        buf = AudioBuffer(np.sin(2 * np.pi * 440 * t), 44100)
        out = resample_linear(buf, 16000)
        # energy of a 440 Hz tone is essentially preserved by linear interp
        assert np.std(out.samples) == pytest.approx(np.std(buf.samples), rel=0.01)


class TestLoadSession:
    def test_three_channels(self, tmp_path):
        manifest = write_session_dir(tmp_path)
        sess = load_session(manifest)
        assert sess.num_channels == 3
        assert sess.reference_mix is not None
        assert len({len(c.audio) for c in sess.channels}) == 1

    def test_missing_file_named_in_error(self, tmp_path):
        manifest = write_session_dir(tmp_path)
        data = json.loads(manifest.read_text())
        data["channels"][1]["file"] = "gone.wav"
        manifest.write_text(json.dumps(data))
        with pytest.raises(InputError, match="gone.wav"):
            load_session(manifest)

    def test_zero_channels(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text(json.dumps({"sample_rate": 16000, "channels": []}))
        with pytest.raises(InputError, match="zero channels"):
            load_session(path)

    def test_channel_limit(self, tmp_path):
        manifest = write_session_dir(tmp_path, num_channels=9)
        with pytest.raises(InputError, match="limit"):
            load_session(manifest)

    def test_bad_json(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text("{not json")
        with pytest.raises(InputError, match="JSON"):
            load_session(path)

    def test_missing_manifest(self):
        with pytest.raises(InputError, match="not found"):
            load_session("/nope/manifest.json")

    def test_resampled_on_ingest(self, tmp_path):
        manifest = write_session_dir(tmp_path, rate=44100, num_samples=44100)
        sess = load_session(manifest, engine_rate=16000)
        assert sess.sample_rate == 16000
        assert sess.num_samples == 16000

    def test_trims_to_shortest(self, tmp_path, caplog):
        manifest = write_session_dir(tmp_path, num_samples=8000)
        wavio.write_wav(tmp_path / "ch1.wav",
                        AudioBuffer(np.zeros(5000, dtype=np.float64), 16000))
        with caplog.at_level("WARNING"):
            sess = load_session(manifest)
        assert sess.num_samples == 5000
        assert any("trimming" in r.message for r in caplog.records)


class TestSaveSession:
    def test_save_load_round_trip_lossless(self, tmp_path):
        manifest = write_session_dir(tmp_path / "orig")
        sess = load_session(manifest)
        out_manifest = save_session(sess, tmp_path / "saved")
        back = load_session(out_manifest)
        assert np.array_equal(back.stem_matrix(), sess.stem_matrix())
        assert np.array_equal(back.reference_mix.samples, sess.reference_mix.samples)
        assert [c.name for c in back.channels] == [c.name for c in sess.channels]


class TestGenSynth:
    def test_reference_is_weighted_channel_sum(self):
        sess = gen_synth(two_channel_spec(), seed=0)
        expected = sess.target_gains @ sess.stem_matrix()
        assert np.max(np.abs(sess.reference_mix.samples - expected)) < 1e-9

    def test_reference_peaks_at_minus_six(self):
        sess = gen_synth(two_channel_spec(), seed=0)
        assert np.max(np.abs(sess.reference_mix.samples)) == pytest.approx(
            10 ** (-6 / 20), rel=1e-9
        )

    def test_fixed_seed_identical(self):
        spec = dict(session.DEFAULT_SYNTH_SPEC)
        a = gen_synth(spec, seed=3)
        b = gen_synth(spec, seed=3)
        assert np.array_equal(a.stem_matrix(), b.stem_matrix())

    def test_sudden_entry_channel(self):
        spec = two_channel_spec()
        spec["channels"][1]["silent_until_s"] = 1.0
        sess = gen_synth(spec, seed=1)
        stems = sess.stem_matrix()
        boundary = 16000
        assert np.all(stems[1, :boundary] == 0.0)
        assert np.max(np.abs(stems[1, boundary:])) > 0.0

    def test_zero_channels_rejected(self):
        with pytest.raises(InputError):
            gen_synth({"channels": []}, seed=0)

    def test_unknown_kind_rejected(self):
        with pytest.raises(InputError, match="kind"):
            gen_synth({"channels": [{"kind": "theremin"}]}, seed=0)

    def test_spec_from_file(self, tmp_path):
        path = tmp_path / "spec.json"
        path.write_text(json.dumps(two_channel_spec()))
        sess = gen_synth(str(path), seed=2)
        assert sess.num_channels == 2
