import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from sbseg.errors import ShapeError
from sbseg.instances import binarize
from sbseg.packing import (
    encode_image,
    encode_mask,
    encode_rdm,
    pack_input,
    pack_target,
    unpack_prediction,
)


def test_pack_input_duplicates(rng):
    img = rng.uniform(-1, 1, (5, 7, 3)).astype(np.float32)
    state = pack_input(img)
    assert state.t == 1.0
    assert np.array_equal(state.data[..., :3], img)
    assert np.array_equal(state.data[..., 3:], img)


def test_pack_input_zero():
    assert not pack_input(np.zeros((4, 4, 3))).data.any()


def test_pack_input_rejects_wrong_channels():
    with pytest.raises(ShapeError):
        pack_input(np.zeros((4, 4, 4)))


def test_pack_target_layout(rng):
    mask = encode_mask(rng.random((6, 6)) > 0.5)
    rdm = encode_rdm(rng.random((6, 6)))
    state = pack_target(mask, rdm)
    assert state.t == 0.0
    for c in range(3):
        assert np.array_equal(state.data[..., c], mask[..., 0])
        assert np.array_equal(state.data[..., 3 + c], rdm[..., 0])


def test_background_target():
    state = pack_target(encode_mask(np.zeros((3, 3), bool)), encode_rdm(np.zeros((3, 3))))
    assert np.all(state.data == -1.0)


def test_pack_target_shape_mismatch():
    with pytest.raises(ShapeError):
        pack_target(np.zeros((3, 3, 1)), np.zeros((3, 4, 1)))


def test_unpack_recovers_target(rng):
    mask = encode_mask(rng.random((8, 8)) > 0.5)
    rdm = encode_rdm(rng.random((8, 8)).astype(np.float32))
    prob, rdm_pred = unpack_prediction(pack_target(mask, rdm))
    assert np.array_equal(prob, ((mask.astype(np.float64) + 1) / 2).astype(np.float32))
    assert np.array_equal(rdm_pred, ((rdm.astype(np.float64) + 1) / 2).astype(np.float32))
    assert set(np.unique(prob)) <= {0.0, 1.0}


def test_unpack_averages_before_mapping():
    state = np.zeros((1, 1, 6), dtype=np.float32)
    state[0, 0, :3] = (-1, 0, 1)
    prob, _ = unpack_prediction(state)
    assert prob[0, 0, 0] == 0.5


def test_unpack_clamps_overshoot():
    state = np.zeros((1, 1, 6), dtype=np.float32)
    state[0, 0, :3] = (1.4, 1.4, 1.4)
    state[0, 0, 3:] = (-3.0, -3.0, -3.0)
    prob, rdm = unpack_prediction(state)
    assert prob[0, 0, 0] == 1.0 and rdm[0, 0, 0] == 0.0


@given(arrays(np.float32, (3, 3, 6), elements=st.floats(-50, 50, width=32)))
def test_unpack_range_and_permutation_invariance(data):
    prob, rdm = unpack_prediction(data)
    assert prob.min() >= 0 and prob.max() <= 1 and rdm.min() >= 0 and rdm.max() <= 1
    perm = data[..., [2, 0, 1, 5, 3, 4]]
    p2, r2 = unpack_prediction(perm)
    np.testing.assert_allclose(p2, prob, atol=1e-6)
    np.testing.assert_allclose(r2, rdm, atol=1e-6)


def test_binarize_unpack_pack_round_trip(rng):
    for _ in range(100):
        mask = rng.random((12, 12)) > 0.6
        state = pack_target(encode_mask(mask), encode_rdm(rng.random((12, 12))))
        prob, _ = unpack_prediction(state)
        assert np.array_equal(binarize(prob), mask)


def test_encode_image_range():
    img = np.array([[[0, 127, 255]]], dtype=np.uint8)
    enc = encode_image(img)
    assert enc.dtype == np.float32
    assert enc[0, 0, 0] == -1.0 and enc[0, 0, 2] == 1.0
    assert abs(enc[0, 0, 1]) < 0.01


def test_unpack_wrong_channels():
    with pytest.raises(ShapeError):
        unpack_prediction(np.zeros((2, 2, 5)))
