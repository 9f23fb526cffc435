import numpy as np
import pytest
from hypothesis import given, strategies as st

import brute
from swsim.errors import ShapeMismatch
from swsim.nn_model import (LayerSpec, ModelSpec, Tensor, check_chain, conv_reference,
                            fc_reference, maxpool_reference, reference_network, requantize)


def test_layer_input_extents():
    layer = LayerSpec.conv(F=4, C=3, U=5, V=7, R=3, S=2)
    assert (layer.H, layer.W) == (11, 15)
    assert layer.input_shape == (3, 11, 15)
    assert layer.weight_shape == (4, 3, 3, 3)


@pytest.mark.parametrize("kw", [dict(F=0, C=1), dict(F=1, C=1, U=2)])
def test_layer_rejects_bad_counts(kw):
    with pytest.raises(ValueError):
        LayerSpec.fc(**kw) if "U" in kw else LayerSpec.conv(U=1, V=1, R=1, **kw)


def test_tensor_range_check():
    Tensor(np.array([127, -128]), 8)
    with pytest.raises(ValueError):
        Tensor(np.array([128]), 8)


def test_conv_single_mac():
    layer = LayerSpec.conv(F=1, C=1, U=1, V=1, R=1)
    y = conv_reference(layer, Tensor(np.array([[[2]]])), Tensor(np.array([[[[3]]]])))
    assert y.data.tolist() == [[[6]]]


def test_conv_zero_kernels(rng):
    layer = LayerSpec.conv(F=2, C=3, U=4, V=4, R=3)
    x = Tensor(rng.integers(-1000, 1000, size=layer.input_shape))
    y = conv_reference(layer, x, Tensor(np.zeros(layer.weight_shape, dtype=np.int64)))
    assert not y.data.any()


def test_conv_matches_brute_force(rng):
    layer = LayerSpec.conv(F=3, C=2, U=4, V=4, R=3, S=1)
    x = rng.integers(-2 ** 15, 2 ** 15, size=layer.input_shape)
    w = rng.integers(-2 ** 15, 2 ** 15, size=layer.weight_shape)
    y = conv_reference(layer, Tensor(x), Tensor(w))
    assert y.data.tolist() == brute.conv(x.tolist(), w.tolist())


def test_conv_saturates_in_order():
    # partial sums cross 2^31 then come back: order of saturation matters
    layer = LayerSpec.conv(F=1, C=4, U=1, V=1, R=1)
    x = Tensor(np.array([[[32767]], [[32767]], [[32767]], [[-32768]]]))
    w = Tensor(np.array([[[[32767]], [[32767]], [[32767]], [[32767]]]]))
    y = conv_reference(layer, x, w)
    assert y.data.item() == brute.conv(x.data.tolist(), w.data.tolist())[0][0][0]
    assert y.data.item() == 2 ** 31 - 1 - 32768 * 32767


def test_conv_shape_mismatch():
    layer = LayerSpec.conv(F=1, C=1, U=2, V=2, R=3)
    with pytest.raises(ShapeMismatch):
        conv_reference(layer, Tensor(np.zeros((1, 3, 3), int)), Tensor(np.zeros((1, 1, 3, 3), int)))


def test_fc_examples(rng):
    assert fc_reference(Tensor(np.eye(2, dtype=int)), Tensor(np.array([5, -7]))).data.tolist() == [5, -7]
    assert not fc_reference(Tensor(np.zeros((3, 4), int)), Tensor(np.arange(4))).data.any()
    W = rng.integers(-2 ** 15, 2 ** 15, size=(8, 16))
    x = rng.integers(-2 ** 15, 2 ** 15, size=16)
    assert fc_reference(Tensor(W), Tensor(x)).data.tolist() == brute.fc(W.tolist(), x.tolist())


def test_maxpool_examples(rng):
    assert maxpool_reference(Tensor(np.array([[[1, 2], [3, 4]]])), 2, 2).data.tolist() == [[[4]]]
    const = maxpool_reference(Tensor(np.full((2, 4, 4), 9)), 2, 2)
    assert (const.data == 9).all()
    x = rng.integers(-100, 100, size=(1, 4, 4))
    assert maxpool_reference(Tensor(x), 2, 2).data.tolist() == brute.maxpool(x.tolist(), 2, 2)
    with pytest.raises(ShapeMismatch):
        maxpool_reference(Tensor(np.zeros((1, 5, 5), int)), 2, 2)


def test_relu_after_accumulation():
    layer = LayerSpec.conv(F=1, C=2, U=1, V=1, R=1, relu=True)
    # -5 then +3: relu of the final sum, not of each product
    y = conv_reference(layer, Tensor(np.array([[[1]], [[1]]])), Tensor(np.array([[[[-5]], [[3]]]])))
    assert y.data.item() == 0


@given(st.integers(1, 4), st.integers(1, 3), st.sampled_from([1, 3]), st.integers(0, 2 ** 32 - 1))
def test_conv_kernel_split_and_scaling(F, C, R, seed):
    rng = np.random.default_rng(seed)
    layer = LayerSpec.conv(F=F, C=C, U=3, V=3, R=R)
    x = Tensor(rng.integers(-300, 300, size=layer.input_shape))
    w = rng.integers(-300, 300, size=layer.weight_shape)
    full = conv_reference(layer, x, Tensor(w))
    one = LayerSpec.conv(F=1, C=C, U=3, V=3, R=R)
    parts = [conv_reference(one, x, Tensor(w[f:f + 1])).data for f in range(F)]
    assert np.array_equal(full.data, np.concatenate(parts))
    assert not conv_reference(layer, Tensor(x.data * 0), Tensor(w)).data.any()
    assert conv_reference(layer, Tensor(x.data * 1), Tensor(w)) == full
    assert conv_reference(layer, x, Tensor(w)) == full


def test_requantize_saturates():
    t = requantize(Tensor(np.array([70000, -70000, 512]), 32), 1, 16)
    assert t.data.tolist() == [32767, -32768, 256]


def test_chain_check():
    conv = LayerSpec.conv(F=4, C=1, U=8, V=8, R=3)
    pool = LayerSpec.maxpool(C=4, U=4, V=4, window=2, stride=2)
    fc = LayerSpec.fc(F=10, C=64)
    check_chain([conv, pool, fc])
    with pytest.raises(ShapeMismatch):
        check_chain([conv, LayerSpec.fc(F=10, C=63)])
    padded = LayerSpec.conv(F=2, C=4, U=4, V=4, R=3, pad=1)
    ModelSpec([conv, pool, padded])


def test_reference_network_runs(rng):
    conv = LayerSpec.conv(F=2, C=1, U=4, V=4, R=3, relu=True, out_shift=2)
    fc = LayerSpec.fc(F=3, C=32)
    x = Tensor(rng.integers(0, 50, size=(1, 6, 6)))
    w0 = Tensor(rng.integers(-9, 9, size=conv.weight_shape))
    w1 = Tensor(rng.integers(-9, 9, size=fc.weight_shape))
    outs = reference_network([conv, fc], [w0, w1], x)
    hidden = requantize(conv_reference(conv, x, w0), 2, 16)
    assert outs[0] == hidden
    assert outs[1].data.tolist() == brute.fc(w1.data.tolist(), hidden.data.reshape(-1).tolist())
