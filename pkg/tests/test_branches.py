"""Branch encoder and assembled model tests."""

import numpy as np
import pytest

from avtraits import diffcore as dc
from avtraits.branches import audio_stem, make_audio_stem, make_visual_stem, visual_stem
from avtraits.errors import InputError
from avtraits.model import ModelConfig, PersonalityNet

MICRO = ModelConfig(width=8, frame_channels=(4, 8), audio_channels=4, audio_stride=1)


class TestVisualStem:
    def test_one_token_per_frame(self):
        rng = np.random.default_rng(0)
        params = make_visual_stem(8, channels=(4, 8), rng=rng)
        for k in (1, 2, 5):
            tokens = visual_stem(rng.random((k, 3, 8, 8)), params)
            assert tokens.shape == (k, 8)

    def test_identical_frames_identical_tokens(self):
        rng = np.random.default_rng(1)
        params = make_visual_stem(8, channels=(4, 8), rng=rng)
        frame = rng.random((3, 8, 8))
        tokens = visual_stem(np.stack([frame, frame]), params)
        np.testing.assert_array_equal(tokens.values[0], tokens.values[1])

    def test_frame_permutation_permutes_tokens(self):
        rng = np.random.default_rng(2)
        params = make_visual_stem(8, channels=(4, 8), rng=rng)
        frames = rng.random((4, 3, 8, 8))
        perm = np.array([2, 0, 3, 1])
        base = visual_stem(frames, params).values
        shuffled = visual_stem(frames[perm], params).values
        np.testing.assert_array_equal(shuffled, base[perm])

    def test_gradcheck_two_frame_micro_input(self):
        rng = np.random.default_rng(3)
        params = make_visual_stem(4, channels=(4,), rng=rng)
        frames = dc.Tensor(rng.random((2, 3, 6, 6)), requires_grad=True)
        named = {"frames": frames, **params.tensors("visual")}
        probe = rng.standard_normal((2, 4))

        def fn():
            return dc.mean(visual_stem(frames, params) * probe)

        report = dc.grad_check(fn, named, eps=1e-5, tol=1e-4)
        assert report.passed, report.max_rel_error


class TestAudioStem:
    def test_token_count_is_ceil_t_over_stride(self):
        rng = np.random.default_rng(4)
        for stride in (1, 2, 3, 6):
            params = make_audio_stem(8, channels=4, stride=stride, rng=rng)
            for t in (3, 7, 48, 50):
                tokens = audio_stem(rng.standard_normal((t, 10)), params)
                assert tokens.shape == (-(-t // stride), 8)

    def test_zero_input_zero_biases_zero_tokens(self):
        rng = np.random.default_rng(5)
        params = make_audio_stem(8, channels=4, stride=2, rng=rng)
        tokens = audio_stem(np.zeros((12, 10)), params)
        np.testing.assert_array_equal(tokens.values, 0.0)

    def test_gradcheck(self):
        rng = np.random.default_rng(6)
        params = make_audio_stem(4, channels=4, stride=2, rng=rng)
        frames = dc.Tensor(rng.standard_normal((6, 10)), requires_grad=True)
        named = {"mfcc": frames, **params.tensors("audio")}
        probe = rng.standard_normal((3, 4))

        def fn():
            return dc.mean(audio_stem(frames, params) * probe)

        report = dc.grad_check(fn, named, eps=1e-5, tol=1e-4)
        assert report.passed, report.max_rel_error

    def test_too_few_time_steps_raises(self):
        params = make_audio_stem(4, channels=4, stride=1, rng=np.random.default_rng(7))
        with pytest.raises(InputError):
            audio_stem(np.zeros((2, 10)), params)


class TestPersonalityNet:
    def test_forward_shape_and_range(self):
        net = PersonalityNet(MICRO, seed=1)
        rng = np.random.default_rng(8)
        out = net.predict(rng.random((2, 3, 8, 8)), rng.standard_normal((8, 10)))
        assert out.shape == (5,)
        assert (out > 0).all() and (out < 1).all()

    def test_same_seed_same_parameters(self):
        a = PersonalityNet(MICRO, seed=5)
        b = PersonalityNet(MICRO, seed=5)
        for name in a.params:
            np.testing.assert_array_equal(a.params[name].values, b.params[name].values)

    def test_different_seed_different_parameters(self):
        a = PersonalityNet(MICRO, seed=5)
        b = PersonalityNet(MICRO, seed=6)
        assert any(
            not np.array_equal(a.params[n].values, b.params[n].values) for n in a.params
        )

    def test_token_widths_match_across_branches(self):
        net = PersonalityNet(MICRO, seed=1)
        rng = np.random.default_rng(9)
        tv = visual_stem(rng.random((2, 3, 8, 8)).astype(np.float32), net.visual)
        ta = audio_stem(rng.standard_normal((8, 10)).astype(np.float32), net.audio)
        assert tv.shape[1] == ta.shape[1] == MICRO.width

    def test_audio_token_order_does_not_change_output(self):
        # Keys in one direction, queries (then mean-pooled) in the other.
        net = PersonalityNet(MICRO, seed=2, dtype=np.float64)
        rng = np.random.default_rng(10)
        visual = rng.random((2, 3, 8, 8))
        audio = rng.standard_normal((8, 10))
        base = net.predict(visual, audio)
        # Permute tokens after the stem by permuting equivalent time blocks:
        # with stride 1 and per-step processing the stem maps step i to token i,
        # so permuting cepstral rows permutes tokens... only exactly true for
        # a 1-high receptive field; instead permute the token sequence directly.
        from avtraits import fusion as fu

        tokens_v = visual_stem(visual, net.visual)
        tokens_a = audio_stem(audio, net.audio)
        perm = rng.permutation(tokens_a.shape[0])
        pair = fu.fuse_bidirectional(tokens_v, tokens_a, net.fuse1, net.fuse2)
        out = fu.regression_head(pair, net.head).values
        pair_p = fu.fuse_bidirectional(
            tokens_v, dc.Tensor(tokens_a.values[perm]), net.fuse1, net.fuse2
        )
        out_p = fu.regression_head(pair_p, net.head).values
        np.testing.assert_allclose(out_p, out, atol=1e-12)
        np.testing.assert_allclose(base, out, atol=1e-12)

    def test_load_parameter_arrays_roundtrip(self):
        net = PersonalityNet(MICRO, seed=3)
        arrays = net.parameter_arrays()
        other = PersonalityNet.from_arrays(MICRO, arrays)
        rng = np.random.default_rng(11)
        visual = rng.random((2, 3, 8, 8))
        audio = rng.standard_normal((8, 10))
        np.testing.assert_array_equal(net.predict(visual, audio), other.predict(visual, audio))

    def test_end_to_end_micro_gradcheck(self):
        rng = np.random.default_rng(12)
        net = PersonalityNet(MICRO, seed=4, dtype=np.float64)
        visual = rng.random((2, 3, 8, 8))
        audio = rng.standard_normal((8, 10))
        probe = rng.standard_normal(5)

        def fn():
            return dc.mean(net.forward(visual, audio) * probe)

        report = dc.grad_check(fn, net.params, eps=1e-5, tol=1e-4)
        assert report.passed, report.worst()
