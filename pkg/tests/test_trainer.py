"""Schedule, loss, training-loop, and checkpoint tests."""

import numpy as np
import pytest

from avtraits import diffcore as dc
from avtraits import trainer as tr
from avtraits.datastore import Dataset
from avtraits.errors import ConfigError, CorruptionError, FormatError, InputError, ShapeError
from avtraits.mas import Sample
from avtraits.model import PersonalityNet

MICRO_CONFIG = tr.TrainConfig.desk(
    epochs=3,
    milestones=(2,),
    k_frames=2,
    frame_size=8,
    width=8,
    frame_channels=(4, 8),
    audio_channels=4,
    audio_stride=2,
    batch_size=4,
)


def micro_dataset(n=6, seed=0):
    rng = np.random.default_rng(seed)
    samples = [
        Sample(
            visual=rng.random((2, 3, 8, 8)).astype(np.float32),
            audio=rng.standard_normal((8, 10)).astype(np.float32),
            label=rng.random(5),
        )
        for _ in range(n)
    ]
    return Dataset(train=samples, val=[], test=[])


class TestLrSchedule:
    def test_benchmark_cascade_is_exact(self):
        config = tr.TrainConfig()
        assert tr.lr_at_epoch(0, config) == 0.04
        assert tr.lr_at_epoch(30, config) == 0.004
        assert tr.lr_at_epoch(45, config) == 0.0004
        assert tr.lr_at_epoch(55, config) == 0.00004
        assert tr.lr_at_epoch(60, config) == 0.000004
        assert tr.lr_at_epoch(69, config) == 0.000004

    def test_non_increasing(self):
        config = tr.TrainConfig()
        rates = [tr.lr_at_epoch(e, config) for e in range(config.epochs)]
        assert all(b <= a for a, b in zip(rates, rates[1:]))

    def test_epoch_out_of_range(self):
        config = tr.TrainConfig()
        with pytest.raises(InputError):
            tr.lr_at_epoch(70, config)
        with pytest.raises(InputError):
            tr.lr_at_epoch(-1, config)

    def test_bad_milestones_rejected(self):
        with pytest.raises(ConfigError):
            tr.TrainConfig(milestones=(30, 30))
        with pytest.raises(ConfigError):
            tr.TrainConfig(milestones=(69, 70))


class TestMaeLoss:
    def test_zero_at_perfect_prediction(self):
        pred = dc.Tensor(np.full((2, 5), 0.4))
        assert tr.mae_loss(pred, np.full((2, 5), 0.4)).item() == 0.0

    def test_single_entry(self):
        pred = dc.Tensor(np.array([[0.6]])[:, :1].repeat(5, axis=1))
        out = tr.mae_loss(pred, np.full((1, 5), 0.5))
        np.testing.assert_allclose(out.item(), 0.1, atol=1e-12)

    def test_gradient_is_scaled_sign(self):
        rng = np.random.default_rng(0)
        values = rng.random((3, 5)) * 0.5 + 0.25
        labels = values + np.where(rng.random((3, 5)) > 0.5, 0.1, -0.1)
        labels = np.clip(labels, 0, 1)
        pred = dc.Tensor(values, requires_grad=True)
        tr.mae_loss(pred, labels).backward()
        expected = np.sign(values - labels) / values.size
        np.testing.assert_allclose(pred.grad, expected, atol=1e-12)
        report = dc.grad_check(lambda: tr.mae_loss(pred, labels), {"pred": pred})
        assert report.passed

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            tr.mae_loss(dc.Tensor(np.zeros((2, 5))), np.zeros((3, 5)))


class TestConfigFile:
    def test_roundtrip(self, tmp_path):
        config = tr.TrainConfig.desk(seed=7, use_mas=False, milestones=(10, 20))
        path = tmp_path / "train.cfg"
        config.to_file(path)
        assert tr.TrainConfig.from_file(path) == config

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            tr.TrainConfig.from_text("laerning_rate=0.1")

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError):
            tr.TrainConfig.from_text("batch_size=eight")

    def test_comments_and_blanks_ignored(self):
        config = tr.TrainConfig.from_text("# recipe\n\nseed=3\n")
        assert config.seed == 3


class TestTrainLoop:
    def test_same_seed_same_history_and_params(self):
        data = micro_dataset()
        a = tr.train(data, MICRO_CONFIG)
        b = tr.train(data, MICRO_CONFIG)
        assert a.history == b.history
        for name in a.final.params:
            assert a.final.params[name].tobytes() == b.final.params[name].tobytes()

    def test_mas_sees_six_times_base_samples(self):
        data = micro_dataset(n=5)
        result = tr.train(data, MICRO_CONFIG)
        assert all(h.samples_seen == 30 for h in result.history)
        plain = tr.train(data, tr.TrainConfig(**{**MICRO_CONFIG.__dict__, "use_mas": False}))
        assert all(h.samples_seen == 5 for h in plain.history)

    def test_history_records_schedule(self):
        result = tr.train(micro_dataset(), MICRO_CONFIG)
        lr = MICRO_CONFIG.initial_lr
        assert [h.lr for h in result.history] == [lr, lr, lr / 10.0]

    def test_best_checkpoint_tracks_validation(self):
        result = tr.train(micro_dataset(), MICRO_CONFIG)
        best_acc = max(h.val_accuracy for h in result.history)
        assert result.best.history[-1].val_accuracy == best_acc

    def test_empty_training_split_rejected(self):
        with pytest.raises(InputError):
            tr.train(Dataset(train=[], val=[], test=[]), MICRO_CONFIG)


class TestCheckpointIO:
    def test_roundtrip_preserves_forward_bit_exactly(self, tmp_path):
        result = tr.train(micro_dataset(), MICRO_CONFIG)
        path = tmp_path / "model.ckpt"
        tr.save_checkpoint(path, result.best)
        loaded = tr.load_checkpoint(path)
        assert loaded.epoch == result.best.epoch
        assert loaded.config == MICRO_CONFIG
        assert [h.val_accuracy for h in loaded.history] == [
            h.val_accuracy for h in result.best.history
        ]
        rng = np.random.default_rng(1)
        visual = rng.random((2, 3, 8, 8)).astype(np.float32)
        audio = rng.standard_normal((8, 10)).astype(np.float32)
        before = result.best.build_model().predict(visual, audio)
        after = loaded.build_model().predict(visual, audio)
        assert before.tobytes() == after.tobytes()

    def test_two_identical_runs_save_identical_bytes(self, tmp_path):
        data = micro_dataset()
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        tr.save_checkpoint(p1, tr.train(data, MICRO_CONFIG).best)
        tr.save_checkpoint(p2, tr.train(data, MICRO_CONFIG).best)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"NOTACKPT\n\nrest")
        with pytest.raises(FormatError):
            tr.load_checkpoint(path)

    def test_truncated_params_rejected(self, tmp_path):
        result = tr.train(micro_dataset(), MICRO_CONFIG)
        path = tmp_path / "model.ckpt"
        tr.save_checkpoint(path, result.best)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) - 100])
        with pytest.raises(CorruptionError):
            tr.load_checkpoint(path)

    def test_loaded_params_must_match_architecture(self, tmp_path):
        result = tr.train(micro_dataset(), MICRO_CONFIG)
        broken = dict(result.best.params)
        broken.pop("head.bias")
        with pytest.raises(CorruptionError):
            PersonalityNet.from_arrays(MICRO_CONFIG.model_config(), broken)
