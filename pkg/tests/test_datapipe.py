import json
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from liplab.audspec import Waveform
from liplab.audspec.io import FormatError
from liplab.datapipe import (
    PHONES,
    FrameSequence,
    audio_features,
    build_dataset,
    count_slices,
    derivatives,
    load_entry,
    load_manifest,
    make_paired_sample,
    preprocess,
    read_vfrm,
    render_face,
    resize,
    slice_codes,
    slice_video,
    split_sizes,
    synth_audio,
    synth_pair,
    synth_utterance,
    to_u8,
    write_vfrm,
)
from liplab.metrics import corr2d
from liplab.nets import NetConfig, build_autoencoder


def bilinear_at(img, y, x):
    """Direct pointwise bilinear sample with edge clamping."""
    h, w = img.shape
    y = min(max(y, 0.0), h - 1)
    x = min(max(x, 0.0), w - 1)
    y0, x0 = int(np.floor(y)), int(np.floor(x))
    y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
    fy, fx = y - y0, x - x0
    top = (1 - fx) * img[y0, x0] + fx * img[y0, x1]
    bot = (1 - fx) * img[y1, x0] + fx * img[y1, x1]
    return (1 - fy) * top + fy * bot


def test_preprocess_normalises_whole_sequence(rng):
    fs = FrameSequence(rng.random((75, 60, 80, 3)))
    out = preprocess(fs)
    assert out.frames.shape == (75, 128, 128)
    assert abs(out.frames.mean()) < 1e-6
    assert abs(out.frames.std() - 1) < 1e-5
    with pytest.raises(ValueError):
        preprocess(FrameSequence(np.full((4, 8, 8), 0.3)))


def test_checkerboard_resize_halves_period():
    yy, xx = np.mgrid[0:256, 0:256]
    board = (((yy // 8) + (xx // 8)) % 2).astype(float)
    small = resize(board[None], 128, 128)[0]
    # period 16 px becomes 8 px
    np.testing.assert_allclose(small[:, :120], small[:, 8:128], atol=1e-12)
    np.testing.assert_allclose(small[:120], small[8:128], atol=1e-12)
    probes = np.random.default_rng(9).integers(0, 128, size=(16, 2))
    for i, j in probes:
        ref = bilinear_at(board, (i + 0.5) * 2 - 0.5, (j + 0.5) * 2 - 0.5)
        assert small[i, j] == pytest.approx(ref, abs=1e-12)


def test_upsample_matches_oracle(rng):
    img = rng.random((5, 7))
    big = resize(img[None], 12, 9)[0]
    for i, j in [(0, 0), (11, 8), (3, 4), (6, 2), (9, 7)]:
        ref = bilinear_at(img, (i + 0.5) * 5 / 12 - 0.5, (j + 0.5) * 7 / 9 - 0.5)
        assert big[i, j] == pytest.approx(ref, abs=1e-12)


def test_derivatives_examples(rng):
    const = derivatives(np.ones((6, 4, 4)))
    assert const.shape == (3, 4, 4, 6)
    assert not const[1:].any()
    ramp = np.arange(6.0)[:, None, None] * np.ones((6, 3, 3))
    d = derivatives(ramp)
    np.testing.assert_array_equal(d[1], 1.0)
    np.testing.assert_array_equal(d[2], 0.0)

    x = rng.standard_normal((9, 5, 4))
    d = derivatives(x)
    d1 = [x[t + 1] - x[t] for t in range(8)] + [x[8] - x[7]]
    d2 = [d1[t + 1] - d1[t] for t in range(8)]
    d2.append(d2[-1])
    np.testing.assert_allclose(d[0], np.moveaxis(x, 0, -1))
    np.testing.assert_allclose(d[1], np.moveaxis(np.array(d1), 0, -1))
    np.testing.assert_allclose(d[2], np.moveaxis(np.array(d2), 0, -1))
    with pytest.raises(ValueError):
        derivatives(np.zeros((2, 4, 4)))


def test_derivatives_commute_with_flip(rng):
    x = rng.standard_normal((7, 6, 5))
    np.testing.assert_array_equal(derivatives(x[:, :, ::-1]), derivatives(x)[:, :, ::-1])


def test_slice_counts():
    assert count_slices(75, 300, 5, 20) == 15
    assert count_slices(77, 300, 5, 20) == 15
    assert count_slices(75, 310, 5, 20) == 15
    with pytest.raises(ValueError):
        count_slices(75, 200, 5, 20)
    with pytest.raises(ValueError):
        count_slices(4, 300, 5, 20)


def test_remainder_is_dropped(rng):
    d = rng.standard_normal((3, 2, 2, 77))
    k = count_slices(77, 300, 5, 20)
    slices = slice_video(d, 5, k)
    assert len(slices) == 15
    np.testing.assert_array_equal(np.concatenate(slices, axis=3), d[..., :75])


@settings(max_examples=30, deadline=None)
@given(k=st.integers(1, 6), lv=st.integers(1, 5), la=st.integers(1, 7), b=st.integers(1, 4))
def test_partitions_invert_concatenation(k, lv, la, b):
    r = np.random.default_rng(k * 100 + lv)
    d = r.standard_normal((3, 2, 3, k * lv))
    np.testing.assert_array_equal(np.concatenate(slice_video(d, lv), axis=3), d)
    codes = r.standard_normal((k * la, b))
    parts = slice_codes(codes, la)
    assert len(parts) == k and parts[0].shape == (la * b,)
    np.testing.assert_array_equal(np.concatenate([p.reshape(la, b) for p in parts]), codes)


def test_synth_pair_shapes_and_determinism():
    fs, w = synth_pair(42, 3.0)
    assert fs.frames.shape == (75, 128, 128) and fs.frame_rate == 25
    assert w.samples.shape == (24000,) and w.sample_rate == 8000
    fs2, w2 = synth_pair(42, 3.0)
    assert fs.frames.tobytes() == fs2.frames.tobytes()
    assert w.samples.tobytes() == w2.samples.tobytes()
    assert not np.array_equal(synth_pair(43, 3.0)[1].samples, w.samples)
    with pytest.raises(ValueError):
        synth_pair(1, 0.3)


def test_phones_are_distinguishable():
    specs = []
    for ph in range(len(PHONES)):
        audio = synth_audio((ph,) * 3, 1, np.random.default_rng(0))
        specs.append(audio_features(Waveform(audio, 8000)))
    faces = [render_face(ph, 1) for ph in range(len(PHONES))]
    for i, j in combinations(range(len(PHONES)), 2):
        assert np.linalg.norm(faces[i] - faces[j]) > 0
        assert corr2d(specs[i], specs[j]) < 0.99


def test_utterance_alignment():
    u = synth_utterance(3, 1.0)
    assert len(u.phones) == 5 and u.frames.n_frames == 25
    spec = audio_features(u.wave)
    assert spec.shape == (100, 128)


def test_paired_sample_invariants():
    fs, w = synth_pair(5, 1.0)
    ae = build_autoencoder(NetConfig(bottleneck=8), seed=0)
    s = make_paired_sample(fs, w, ae, size=32, sample_id="x")
    assert s.video.shape == (5, 3, 32, 32, 5)
    assert s.targets.shape == (5, 20 * 8)
    assert s.spec.shape == (100, 128)
    np.testing.assert_allclose(s.targets.reshape(-1, 8), ae.encode(s.spec), rtol=1e-6)


def test_split_sizes():
    assert split_sizes(100) == (90, 5, 5)
    assert split_sizes(20) == (18, 1, 1)
    assert split_sizes(2) == (2, 0, 0)


def test_vfrm_round_trip(tmp_path, rng):
    frames = to_u8(rng.random((4, 6, 5))) / 255.0
    write_vfrm(tmp_path / "a.vfrm", FrameSequence(frames, 25.0))
    back = read_vfrm(tmp_path / "a.vfrm")
    np.testing.assert_array_equal(back.frames, frames)
    assert back.frame_rate == 25.0
    raw = (tmp_path / "a.vfrm").read_bytes()
    assert raw[:4] == b"VFRM" and len(raw) == 24 + 4 * 6 * 5


def test_vfrm_errors(tmp_path, rng):
    write_vfrm(tmp_path / "a.vfrm", FrameSequence(rng.random((2, 3, 3))))
    raw = (tmp_path / "a.vfrm").read_bytes()
    (tmp_path / "magic.vfrm").write_bytes(b"VFRX" + raw[4:])
    (tmp_path / "short.vfrm").write_bytes(raw[:-1])
    (tmp_path / "head.vfrm").write_bytes(raw[:10])
    for name in ("magic", "short", "head"):
        with pytest.raises(FormatError):
            read_vfrm(tmp_path / f"{name}.vfrm")
    with pytest.raises(FormatError, match="magic"):
        read_vfrm(tmp_path / "magic.vfrm")


def test_build_dataset_is_deterministic(tmp_path):
    a = build_dataset(6, 11, tmp_path / "a", duration_s=0.4)
    b = build_dataset(6, 11, tmp_path / "b", duration_s=0.4)
    assert a == b
    assert len({e["id"] for e in a}) == 6
    assert sorted(e["split"] for e in a).count("train") == 4
    for e in a:
        for key in ("wav", "frames"):
            assert (tmp_path / "a" / e[key]).read_bytes() == (tmp_path / "b" / e[key]).read_bytes()
    assert load_manifest(tmp_path / "a") == json.loads((tmp_path / "b" / "manifest.json").read_text())
    fs, w = load_entry(tmp_path / "a", a[0])
    assert fs.n_frames == 10 and w.samples.size == 3200
