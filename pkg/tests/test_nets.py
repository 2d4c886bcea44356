import json

import numpy as np
import pytest

from liplab.nets import (
    NetConfig,
    ae_decode,
    ae_encode,
    build_autoencoder,
    build_lipreader,
    he_init,
    lipreader_forward,
    load_model,
    save_model,
    sidecar_path,
)
from liplab.tensorcore import Tensor
from liplab.tensorcore.tensor import ShapeError


def dense_bn_count(widths):
    # every dense layer: weights, bias, then gamma and beta of its batch norm
    return sum(i * o + o + 2 * o for i, o in zip(widths[:-1], widths[1:]))


def test_autoencoder_parameter_count():
    ae = build_autoencoder()
    assert ae.n_params() == dense_bn_count([128, 512, 128, 64, 32, 64, 128])
    shapes = {k: v.shape for k, v in ae.params.state_dict().items()}
    assert shapes["enc0.W"] == (128, 512)
    assert shapes["enc3.W"] == (64, 32)
    assert shapes["dec1.W"] == (64, 128)


def test_parameter_count_depends_only_on_config():
    cfg = NetConfig(bottleneck=16)
    assert build_autoencoder(cfg, seed=1).n_params() == build_autoencoder(cfg, seed=2).n_params()
    assert build_autoencoder(cfg).n_params() == dense_bn_count([128, 512, 128, 64, 16, 64, 128])


def test_autoencoder_shapes_and_ranges(rng):
    ae = build_autoencoder(seed=3, dtype=np.float64)
    x = rng.standard_normal((7, 128)) * 10
    out, codes = ae.forward(Tensor(x), "infer")
    assert out.shape == (7, 128) and codes.shape == (7, 32)
    assert np.isfinite(out.data).all()
    z = ae_encode(ae, x)
    assert z.min() > 0 and z.max() < 1
    half = ae_decode(ae, np.full((4, 32), 0.5))
    assert half.shape == (4, 128) and np.isfinite(half).all()


def test_encode_is_noise_free_and_deterministic(rng):
    ae = build_autoencoder(NetConfig(noise_sigma=1.0), seed=0)
    x = rng.random((5, 128))
    np.testing.assert_array_equal(ae.encode(x), ae.encode(x))
    a, _ = ae.forward(Tensor(x.astype(np.float32)), "infer")
    np.testing.assert_array_equal(a.data, ae.decode(ae.encode(x)))


def test_autoencoder_width_mismatch():
    ae = build_autoencoder()
    with pytest.raises(ShapeError):
        ae_encode(ae, np.zeros((2, 127)))
    with pytest.raises(ShapeError):
        ae_decode(ae, np.zeros((2, 31)))


def test_lipreader_shape_chain_full_size():
    lip = build_lipreader(seed=0)
    trace = []
    out = lip.forward(Tensor(np.random.default_rng(0).standard_normal((1, 3, 128, 128, 5)).astype(np.float32)), "infer", trace=trace)
    assert trace == [
        (32, 64, 64, 5),
        (32, 32, 32, 5),
        (32, 16, 16, 5),
        (64, 16, 16, 5),
        (64, 8, 8, 5),
        (128, 8, 8, 5),
        (128, 4, 4, 5),
    ]
    assert lip.n_features == 2048
    assert out.shape == (1, 640)
    assert out.data.min() > 0 and out.data.max() < 1


def test_lipreader_reduced_resolution_chain():
    lip = build_lipreader(NetConfig(h=32, w=32), seed=0)
    trace = []
    lip.forward(Tensor(np.zeros((2, 3, 32, 32, 5), np.float32)), "infer", trace=trace)
    assert trace[-1] == (128, 1, 1, 5) and lip.n_features == 128


def test_lipreader_forward_determinism_and_batching(rng):
    lip = build_lipreader(NetConfig(h=32, w=32), seed=0)
    x = rng.standard_normal((2, 3, 32, 32, 5))
    a = lipreader_forward(lip, x, "infer").data
    b = lipreader_forward(lip, x, "infer").data
    assert a.shape == (2, 640)
    assert a.tobytes() == b.tobytes()
    ae = build_autoencoder()
    spec = ae_decode(ae, a[0].reshape(20, 32))
    assert spec.shape == (20, 128)


def test_lipreader_train_mode_is_stochastic(rng):
    lip = build_lipreader(NetConfig(h=32, w=32), seed=0)
    x = rng.standard_normal((2, 3, 32, 32, 5))
    a = lipreader_forward(lip, x, "train", rng=1).data
    b = lipreader_forward(lip, x, "train", rng=2).data
    assert not np.array_equal(a, b)


def test_lipreader_input_shape_errors():
    lip = build_lipreader(NetConfig(h=32, w=32), seed=0)
    with pytest.raises(ShapeError):
        lipreader_forward(lip, np.zeros((1, 3, 32, 32, 4)))
    with pytest.raises(ShapeError):
        lipreader_forward(lip, np.zeros((3, 32, 32, 5)))
    with pytest.raises(ValueError):
        build_lipreader(NetConfig(h=48, w=48))


@pytest.mark.parametrize(
    "bad",
    [{"bottleneck": 0}, {"bottleneck": 129}, {"h": -1}, {"noise_sigma": -0.1}, {"dropout_conv": 1.0}, {"l2": -1}],
)
def test_invalid_config(bad):
    with pytest.raises(ValueError):
        build_autoencoder(NetConfig(**bad))


def test_he_init_statistics():
    w = he_init((100_000,), 200, seed=4)
    assert abs(w.var() / 0.01 - 1) < 0.05
    assert abs(w.mean()) < 3 * 0.1 / np.sqrt(w.size)
    np.testing.assert_array_equal(w, he_init((100_000,), 200, seed=4))
    with pytest.raises(ValueError):
        he_init((3,), 0)


def test_model_persistence_round_trip(tmp_path, rng):
    cfg = NetConfig(bottleneck=8, noise_sigma=0.1)
    ae = build_autoencoder(cfg, seed=5)
    ae.params.moments["enc0.bn"].mean[:] = rng.random(512)
    save_model(tmp_path / "ae.lrck", ae)
    meta = json.loads(sidecar_path(tmp_path / "ae.lrck").read_text())
    for key in ("h", "w", "lv", "la", "bottleneck", "noise_sigma", "dropout_conv", "dropout_rnn", "l2", "elu_alpha"):
        assert meta[key] == getattr(cfg, key)
    back = load_model(tmp_path / "ae.lrck")
    assert back.cfg == cfg
    for k, v in ae.params.state_dict().items():
        assert v.tobytes() == back.params.state_dict()[k].tobytes()
    x = rng.random((3, 128))
    np.testing.assert_array_equal(ae.decode(ae.encode(x)), back.decode(back.encode(x)))


def test_load_state_dict_mismatch():
    ae = build_autoencoder(NetConfig(bottleneck=8))
    other = build_autoencoder(NetConfig(bottleneck=16))
    with pytest.raises(ShapeError):
        ae.params.load_state_dict(other.params.state_dict())
    state = ae.params.state_dict()
    state.pop("dec0.b")
    with pytest.raises(KeyError):
        ae.params.load_state_dict(state)
