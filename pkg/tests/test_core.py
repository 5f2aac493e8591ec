import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from touchmpc.core import (ACTION_LIMIT_MM, GoalSpec, as_image, clamp_action,
                           expand_repeats, mse)
from touchmpc.errors import DimensionError, InvalidInputError


def rand_image(rng, shape=(4, 4, 1)):
    return rng.uniform(0.0, 1.0, shape).astype(np.float32)


class TestMse:
    def test_identity_is_zero(self):
        img = rand_image(np.random.default_rng(0))
        assert mse(img, img) == 0.0

    def test_zeros_vs_ones_is_one(self):
        for shape in [(4, 4, 1), (48, 64, 3), (2, 3, 2)]:
            a = np.zeros(shape, dtype=np.float32)
            b = np.ones(shape, dtype=np.float32)
            assert mse(a, b) == 1.0

    def test_matches_elementwise_loop(self):
        # independent oracle: plain double loop over pixels and channels
        rng = np.random.default_rng(123)
        a = rand_image(rng)
        b = rand_image(rng)
        total = 0.0
        count = 0
        for i in range(a.shape[0]):
            for j in range(a.shape[1]):
                for c in range(a.shape[2]):
                    total += (float(a[i, j, c]) - float(b[i, j, c])) ** 2
                    count += 1
        assert mse(a, b) == pytest.approx(total / count, rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            mse(np.zeros((2, 2, 1)), np.zeros((2, 3, 1)))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_symmetry_and_nonnegativity(self, seed):
        rng = np.random.default_rng(seed)
        a, b = rand_image(rng), rand_image(rng)
        assert mse(a, b) == mse(b, a) >= 0.0

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_zero_iff_equal(self, seed):
        rng = np.random.default_rng(seed)
        a = rand_image(rng)
        b = a.copy()
        assert mse(a, b) == 0.0
        b[1, 2, 0] = (b[1, 2, 0] + 0.5) % 1.0
        if not np.array_equal(a, b):
            assert mse(a, b) > 0.0


class TestClampAction:
    def test_within_bounds_unchanged(self):
        np.testing.assert_array_equal(clamp_action((1.0, -2.0, 0.5)),
                                      [1.0, -2.0, 0.5])

    def test_clips_to_six_mm(self):
        np.testing.assert_array_equal(clamp_action((9.0, -9.0, 0.0)),
                                      [6.0, -6.0, 0.0])

    def test_zero(self):
        np.testing.assert_array_equal(clamp_action((0.0, 0.0, 0.0)), [0.0, 0.0, 0.0])

    @pytest.mark.parametrize("bad", [(np.nan, 0, 0), (np.inf, 0, 0), (0, -np.inf, 0)])
    def test_non_finite_rejected(self, bad):
        with pytest.raises(InvalidInputError):
            clamp_action(bad)

    def test_wrong_shape_rejected(self):
        with pytest.raises(InvalidInputError):
            clamp_action([1.0, 2.0])

    @given(st.lists(st.floats(-50, 50), min_size=3, max_size=3))
    @settings(max_examples=50, deadline=None)
    def test_idempotent_and_bounded(self, raw):
        once = clamp_action(raw)
        twice = clamp_action(once)
        np.testing.assert_array_equal(once, twice)
        assert np.all(np.abs(once) <= ACTION_LIMIT_MM)


class TestExpandRepeats:
    def test_single_action_three_repeats(self):
        a = [1.0, 2.0, 3.0]
        out = expand_repeats([a], 3)
        np.testing.assert_array_equal(out, [a, a, a])

    def test_two_actions_block_structure(self):
        a, b = [1.0, 0.0, 0.0], [0.0, -1.0, 2.0]
        out = expand_repeats([a, b], 3)
        np.testing.assert_array_equal(out, [a, a, a, b, b, b])

    def test_repeat_one_is_identity(self):
        a = [[1.0, 2.0, 3.0]]
        np.testing.assert_array_equal(expand_repeats(a, 1), a)

    def test_empty_plan_rejected(self):
        with pytest.raises(InvalidInputError):
            expand_repeats(np.zeros((0, 3)), 3)

    def test_zero_repeat_rejected(self):
        with pytest.raises(InvalidInputError):
            expand_repeats([[1.0, 2.0, 3.0]], 0)

    @given(st.integers(1, 7), st.integers(1, 5))
    @settings(max_examples=30, deadline=None)
    def test_length_is_k_times_repeat(self, k, repeat):
        plan = np.arange(3 * k, dtype=float).reshape(k, 3)
        out = expand_repeats(plan, repeat)
        assert out.shape == (k * repeat, 3)
        for i in range(k):
            for j in range(repeat):
                np.testing.assert_array_equal(out[i * repeat + j], plan[i])


class TestImageValidation:
    def test_as_image_validates_range(self):
        with pytest.raises(InvalidInputError):
            as_image(np.full((2, 2, 1), 1.5))
        with pytest.raises(InvalidInputError):
            as_image(np.full((2, 2, 1), np.nan))

    def test_as_image_validates_shape(self):
        with pytest.raises(DimensionError):
            as_image(np.zeros((2, 2)))
        with pytest.raises(DimensionError):
            as_image(np.zeros((2, 2, 1)), shape=(2, 3, 1))

    def test_goalspec_validates(self):
        g = GoalSpec(image=np.zeros((2, 2, 1), dtype=np.float32), env_tag="ball")
        assert g.image.dtype == np.float32
        with pytest.raises(InvalidInputError):
            GoalSpec(image=np.full((2, 2, 1), 2.0), env_tag="ball")
