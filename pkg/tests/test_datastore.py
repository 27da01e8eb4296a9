"""Persistence, manifest, and synthetic-data tests.

The planted-signal decoders act as the oracle: labels recovered straight
from the generated files must match the manifest.
"""

import numpy as np
import pytest

from avtraits import datastore as ds
from avtraits.errors import (
    CorruptionError,
    FormatError,
    InputError,
    LoadError,
    ValidationError,
)
from avtraits.frontend import FrontendConfig, write_wav

DESK_FRONTEND = FrontendConfig(k_frames=4, frame_size=16)


class TestTensorFile:
    def test_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((3, 4, 5)).astype(np.float32)
        path = tmp_path / "x.ten"
        ds.write_tensor(path, x)
        back = ds.read_tensor(path)
        assert back.dtype == np.float32
        assert back.tobytes() == x.tobytes()

    def test_rank_one_through_four(self, tmp_path):
        rng = np.random.default_rng(1)
        for shape in [(7,), (2, 3), (2, 3, 4), (2, 1, 3, 2)]:
            x = rng.standard_normal(shape).astype(np.float32)
            ds.write_tensor(tmp_path / "t.ten", x)
            np.testing.assert_array_equal(ds.read_tensor(tmp_path / "t.ten"), x)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.ten"
        good = ds.tensor_bytes(np.ones(3, dtype=np.float32))
        path.write_bytes(b"XXXX" + good[4:])
        with pytest.raises(FormatError):
            ds.read_tensor(path)

    def test_unknown_version_rejected(self, tmp_path):
        path = tmp_path / "v9.ten"
        good = bytearray(ds.tensor_bytes(np.ones(3, dtype=np.float32)))
        good[4:6] = (9).to_bytes(2, "little")
        path.write_bytes(bytes(good))
        with pytest.raises(FormatError):
            ds.read_tensor(path)

    def test_truncated_payload_rejected(self, tmp_path):
        path = tmp_path / "trunc.ten"
        good = ds.tensor_bytes(np.ones((4, 4), dtype=np.float32))
        path.write_bytes(good[:-5])
        with pytest.raises(CorruptionError):
            ds.read_tensor(path)

    def test_rank_limit(self, tmp_path):
        with pytest.raises(InputError):
            ds.write_tensor(tmp_path / "r9.ten", np.zeros((1,) * 9, dtype=np.float32))

    def test_missing_file(self, tmp_path):
        with pytest.raises(LoadError):
            ds.read_tensor(tmp_path / "nope.ten")


class TestManifest:
    def _write(self, tmp_path, body):
        (tmp_path / "frames" / "v1").mkdir(parents=True, exist_ok=True)
        ds.write_tensor(tmp_path / "frames" / "v1" / "frame_000.ten", np.zeros((3, 4, 4), np.float32))
        write_wav(tmp_path / "audio" / "v1.wav", np.zeros(1000), 16000)
        path = tmp_path / "manifest.csv"
        path.write_text(body)
        return path

    def test_parse_single_row(self, tmp_path):
        path = self._write(
            tmp_path,
            "id,visual,audio,E,N,A,C,O,split\n"
            "v1,frames/v1,audio/v1.wav,0.5,0.5,0.5,0.5,0.5,train\n",
        )
        entries = ds.load_manifest(path)
        assert len(entries) == 1
        assert entries[0].sample_id == "v1"
        np.testing.assert_array_equal(entries[0].label, 0.5)
        assert entries[0].split == "train"

    def test_label_out_of_range_names_row_and_column(self, tmp_path):
        path = self._write(
            tmp_path,
            "id,visual,audio,E,N,A,C,O,split\n"
            "v1,frames/v1,audio/v1.wav,1.2,0.5,0.5,0.5,0.5,train\n",
        )
        with pytest.raises(ValidationError, match="column E") as err:
            ds.load_manifest(path)
        assert ":2" in str(err.value)

    def test_empty_after_header_is_empty_list(self, tmp_path):
        path = self._write(tmp_path, "id,visual,audio,E,N,A,C,O,split\n")
        assert ds.load_manifest(path) == []

    def test_missing_column_is_format_error(self, tmp_path):
        path = self._write(
            tmp_path,
            "id,visual,audio,E,N,A,C,O,split\nv1,frames/v1,audio/v1.wav,0.5,0.5,0.5,0.5,train\n",
        )
        with pytest.raises(FormatError):
            ds.load_manifest(path)

    def test_bad_header_is_format_error(self, tmp_path):
        path = self._write(tmp_path, "id,video,audio,E,N,A,C,O,split\n")
        with pytest.raises(FormatError):
            ds.load_manifest(path)

    def test_unresolvable_path_names_it(self, tmp_path):
        path = self._write(
            tmp_path,
            "id,visual,audio,E,N,A,C,O,split\n"
            "v1,frames/ghost,audio/v1.wav,0.5,0.5,0.5,0.5,0.5,train\n",
        )
        with pytest.raises(LoadError, match="ghost"):
            ds.load_manifest(path)

    def test_order_preserving_and_idempotent(self, tmp_path):
        manifest = ds.synth_dataset(7, seed=3, out_dir=tmp_path, config=ds.SynthConfig(k_frames=2, frame_size=8))
        once = ds.load_manifest(manifest)
        twice = ds.load_manifest(manifest)
        assert [e.sample_id for e in once] == [f"v{i:05d}" for i in range(7)]
        assert [e.sample_id for e in once] == [e.sample_id for e in twice]


class TestSynthDataset:
    def test_determinism_byte_identical(self, tmp_path):
        cfg = ds.SynthConfig(k_frames=2, frame_size=8)
        m1 = ds.synth_dataset(4, seed=9, out_dir=tmp_path / "a", config=cfg)
        m2 = ds.synth_dataset(4, seed=9, out_dir=tmp_path / "b", config=cfg)
        assert m1.read_bytes() == m2.read_bytes()
        for rel in ["frames/v00001/frame_000.ten", "audio/v00002.wav"]:
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()

    def test_labels_in_range_and_split_convention(self, tmp_path):
        cfg = ds.SynthConfig(k_frames=2, frame_size=8)
        entries = ds.load_manifest(ds.synth_dataset(10, seed=1, out_dir=tmp_path, config=cfg))
        for e in entries:
            assert (e.label >= 0).all() and (e.label <= 1).all()
        splits = [e.split for e in entries]
        assert splits == ["train", "train", "train", "val", "test"] * 2

    def test_decoder_oracle_recovers_labels(self, tmp_path):
        cfg = ds.SynthConfig(k_frames=2, frame_size=16)
        entries = ds.load_manifest(ds.synth_dataset(12, seed=21, out_dir=tmp_path, config=cfg))
        for e in entries:
            decoded = ds.decode_planted_labels(e, cfg)
            np.testing.assert_allclose(decoded, e.label, atol=1e-6)

    def test_modalities_separately_recoverable(self, tmp_path):
        # zero one modality's files; the other's traits still decode
        cfg = ds.SynthConfig(k_frames=2, frame_size=16)
        entries = ds.load_manifest(ds.synth_dataset(5, seed=5, out_dir=tmp_path, config=cfg))
        e = entries[0]
        # silence the audio file entirely
        write_wav(e.audio, np.zeros(cfg.n_audio_samples), cfg.sample_rate)
        u_v = ds.decode_visual_scalar(e.visual, cfg.angle_steps)
        visual_traits = ds.planted_labels(u_v, 0.0)[[0, 2, 4]]
        np.testing.assert_allclose(visual_traits, e.label[[0, 2, 4]], atol=1e-6)
        # blank the frames of another sample; audio traits still decode
        e2 = entries[1]
        for f in e2.visual.iterdir():
            ds.write_tensor(f, np.zeros((3, cfg.frame_size, cfg.frame_size), np.float32))
        u_a = ds.decode_audio_scalar(e2.audio, cfg)
        audio_traits = ds.planted_labels(0.0, u_a)[[1, 3]]
        np.testing.assert_allclose(audio_traits, e2.label[[1, 3]], atol=1e-6)

    def test_frames_lie_in_unit_interval(self, tmp_path):
        cfg = ds.SynthConfig(k_frames=1, frame_size=24)
        entries = ds.load_manifest(ds.synth_dataset(3, seed=2, out_dir=tmp_path, config=cfg))
        for e in entries:
            for f in sorted(e.visual.iterdir()):
                frame = ds.read_tensor(f)
                assert frame.min() >= 0.0 and frame.max() <= 1.0


class TestSampleLoadingAndCache:
    def test_load_dataset_shapes(self, tmp_path):
        manifest = ds.synth_dataset(
            10, seed=4, out_dir=tmp_path, config=ds.SynthConfig(k_frames=4, frame_size=16)
        )
        data = ds.load_dataset(manifest, DESK_FRONTEND)
        assert len(data.train) == 6 and len(data.val) == 2 and len(data.test) == 2
        s = data.train[0]
        assert s.visual.shape == (4, 3, 16, 16)
        assert s.visual.dtype == np.float32
        assert s.audio.shape[1] == 10

    def test_cache_roundtrip_matches_fresh_compute(self, tmp_path):
        manifest = ds.synth_dataset(
            5, seed=6, out_dir=tmp_path, config=ds.SynthConfig(k_frames=4, frame_size=16)
        )
        entries = ds.load_manifest(manifest)
        cache = tmp_path / "cache"
        ds.prepare_cache(entries, DESK_FRONTEND, cache)
        assert (cache / ds.CACHE_SIDECAR).is_file()
        fresh = ds.load_samples(entries, DESK_FRONTEND)
        cached = ds.load_samples(entries, DESK_FRONTEND, cache_dir=cache)
        for a, b in zip(fresh, cached):
            np.testing.assert_array_equal(a.visual, b.visual)
            np.testing.assert_array_equal(a.audio, b.audio)

    def test_cache_invalidated_on_config_change(self, tmp_path):
        manifest = ds.synth_dataset(
            5, seed=6, out_dir=tmp_path, config=ds.SynthConfig(k_frames=4, frame_size=16)
        )
        entries = ds.load_manifest(manifest)
        cache = tmp_path / "cache"
        ds.prepare_cache(entries, DESK_FRONTEND, cache)
        other = FrontendConfig(k_frames=2, frame_size=16)
        # hash mismatch: loader must recompute with the new config, not reuse
        samples = ds.load_samples(entries, other, cache_dir=cache)
        assert samples[0].visual.shape == (2, 3, 16, 16)
