import json
import subprocess
import sys

import numpy as np
import pytest

from liplab import datapipe
from liplab.audspec import Waveform, read_auds, read_wav, write_wav
from liplab.cli import main


def run(argv, capsys):
    code = main(["-q", *argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    datapipe.build_dataset(6, 3, d, duration_s=0.4)
    return d


def write_config(path, **extra):
    cfg = {"lr": 3e-3, "batch_size": 8, "epochs": 3, "seed": 1, "loss": {"kind": "corrmse", "lambda": 10.0}, **extra}
    path.write_text(json.dumps(cfg))
    return path


TINY_NET = {"bottleneck": 8, "lstm_units": 16, "mlp_hidden": 16, "h": 32, "w": 32}


@pytest.fixture(scope="module")
def trained(corpus, tmp_path_factory):
    d = tmp_path_factory.mktemp("models")
    assert main(["-q", "train", "ae", "--data", str(corpus), "--config", str(write_config(d / "ae.json", net={"bottleneck": 8})), "--out", str(d / "ae.lrck")]) == 0
    lip_cfg = write_config(d / "lip.json", batch_size=2, epochs=2, net=TINY_NET)
    assert main(["-q", "train", "lip", "--data", str(corpus), "--config", str(lip_cfg), "--out", str(d / "lip.lrck"), "--ae", str(d / "ae.lrck")]) == 0
    return d


def test_synth_writes_corpus_and_is_deterministic(tmp_path, capsys):
    for name in ("a", "b"):
        code, out, _ = run(["synth", "--out", str(tmp_path / name), "--count", "4", "--seed", "9", "--duration", "0.4"], capsys)
        assert code == 0 and json.loads(out)["count"] == 4
    assert len(list((tmp_path / "a" / "wav").glob("*.wav"))) == 4
    assert len(list((tmp_path / "a" / "frames").glob("*.vfrm"))) == 4
    for f in sorted((tmp_path / "a").rglob("*.*")):
        assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes()


def test_usage_errors_exit_2(tmp_path, capsys):
    for argv in (
        ["synth", "--out", str(tmp_path), "--count", "0"],
        ["synth", "--out", str(tmp_path), "--count", "2", "--bogus"],
        ["predict", "--frames", "a", "--lip", "b", "--out", "c"],
        ["train", "lip", "--data", ".", "--config", "c.json", "--out", "x"],
        ["frobnicate"],
    ):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_audspec_encode_decode(tmp_path, capsys):
    u = datapipe.synth_utterance(2, 3.0)
    write_wav(tmp_path / "v.wav", u.wave)
    code, out, _ = run(["audspec", "encode", str(tmp_path / "v.wav"), str(tmp_path / "v.auds")], capsys)
    assert code == 0 and read_auds(tmp_path / "v.auds").frames.shape == (300, 128)
    code = main(["audspec", "decode", str(tmp_path / "v.auds"), str(tmp_path / "r.wav"), "--iters", "20"])
    out, err = capsys.readouterr()
    assert code == 0
    assert json.loads(out)["corr2d"] >= 0.9
    assert "round-trip corr2d" in err
    assert read_wav(tmp_path / "r.wav").samples.size == 24000


def test_audspec_encode_resamples(tmp_path, capsys):
    t = np.arange(16000) / 16000
    write_wav(tmp_path / "t.wav", Waveform(0.3 * np.sin(2 * np.pi * 500 * t), 16000))
    code, _, _ = run(["audspec", "encode", str(tmp_path / "t.wav"), str(tmp_path / "t.auds")], capsys)
    assert code == 0 and read_auds(tmp_path / "t.auds").n_frames == 100


def test_audspec_bad_magic_exit_1(tmp_path, capsys):
    (tmp_path / "x.wav").write_bytes(b"JUNKJUNKJUNKJUNK" * 4)
    code, _, err = run(["audspec", "encode", str(tmp_path / "x.wav"), str(tmp_path / "x.auds")], capsys)
    assert code == 1 and "magic" in err
    code, _, err = run(["audspec", "encode", str(tmp_path / "missing.wav"), str(tmp_path / "x.auds")], capsys)
    assert code == 1 and "not found" in err


def test_train_ae_history_and_rerun(corpus, tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", net={"bottleneck": 8})
    outputs = []
    for name in ("a", "b"):
        code, out, _ = run(["train", "ae", "--data", str(corpus), "--config", str(cfg), "--out", str(tmp_path / f"{name}.lrck")], capsys)
        assert code == 0
        outputs.append(json.loads(out))
    rows = (tmp_path / "a.lrck.history.csv").read_text().splitlines()
    assert len(rows) == 1 + 3
    for suffix in ("", ".json", ".history.csv"):
        assert (tmp_path / f"a.lrck{suffix}").read_bytes() == (tmp_path / f"b.lrck{suffix}").read_bytes()
    assert outputs[0]["val_loss"] == outputs[1]["val_loss"]


def test_train_seed_override(corpus, tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", epochs=1, net={"bottleneck": 8})
    for seed in ("1", "2"):
        code, _, _ = run(["train", "ae", "--data", str(corpus), "--config", str(cfg), "--out", str(tmp_path / f"s{seed}.lrck"), "--seed", seed], capsys)
        assert code == 0
    assert (tmp_path / "s1.lrck").read_bytes() != (tmp_path / "s2.lrck").read_bytes()


def test_train_config_errors(corpus, trained, tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"learning_rate": 1}))
    code, _, err = run(["train", "ae", "--data", str(corpus), "--config", str(bad), "--out", str(tmp_path / "x.lrck")], capsys)
    assert code == 1 and "learning_rate" in err
    wrong = write_config(tmp_path / "w.json", net={**TINY_NET, "bottleneck": 16})
    code, _, err = run(["train", "lip", "--data", str(corpus), "--config", str(wrong), "--out", str(tmp_path / "x.lrck"), "--ae", str(trained / "ae.lrck")], capsys)
    assert code == 1 and "bottleneck" in err
    code, _, err = run(["train", "lip", "--data", str(corpus), "--config", str(wrong), "--out", str(tmp_path / "x.lrck"), "--ae", str(trained / "lip.lrck")], capsys)
    assert code == 1 and "autoencoder" in err


def test_predict_and_eval(corpus, trained, tmp_path, capsys):
    fs, _ = datapipe.synth_pair(7, 3.0)
    datapipe.write_vfrm(tmp_path / "clip.vfrm", fs)
    argv = ["predict", "--frames", str(tmp_path / "clip.vfrm"), "--lip", str(trained / "lip.lrck"), "--ae", str(trained / "ae.lrck"), "--iters", "3"]
    code, out, _ = run([*argv, "--out", str(tmp_path / "p1.wav"), "--spec-out", str(tmp_path / "p1.auds")], capsys)
    assert code == 0
    assert read_auds(tmp_path / "p1.auds").n_frames == 300
    w = read_wav(tmp_path / "p1.wav")
    assert w.sample_rate == 8000 and w.samples.size == 24000
    code, _, _ = run([*argv, "--out", str(tmp_path / "p2.wav")], capsys)
    assert (tmp_path / "p1.wav").read_bytes() == (tmp_path / "p2.wav").read_bytes()

    ref, same, noisy = (tmp_path / n for n in ("ref", "same", "noisy"))
    for d in (ref, same, noisy):
        d.mkdir()
    rng = np.random.default_rng(0)
    for i in range(2):
        u = datapipe.synth_utterance(i, 1.0)
        write_wav(ref / f"u{i}.wav", u.wave)
        write_wav(same / f"u{i}.wav", u.wave)
        write_wav(noisy / f"u{i}.wav", Waveform(np.clip(u.wave.samples + 0.05 * rng.standard_normal(8000), -1, 1), 8000))
    code, _, _ = run(["eval", "--ref", str(ref), "--test", str(same), "--out", str(tmp_path / "self.json")], capsys)
    assert code == 0
    self_mean = json.loads((tmp_path / "self.json").read_text())["mean"]
    assert self_mean["corr2d"] == pytest.approx(1.0) and self_mean["stmi"] == pytest.approx(1.0)
    assert self_mean["lsd_db"] == pytest.approx(0.0)
    run(["eval", "--ref", str(ref), "--test", str(noisy), "--out", str(tmp_path / "noisy.json")], capsys)
    noisy_mean = json.loads((tmp_path / "noisy.json").read_text())["mean"]
    assert noisy_mean["corr2d"] < 1 and noisy_mean["stmi"] < 1 and noisy_mean["lsd_db"] > 0
    run(["eval", "--ref", str(ref), "--test", str(same), "--out", str(tmp_path / "self2.json")], capsys)
    assert (tmp_path / "self.json").read_bytes() == (tmp_path / "self2.json").read_bytes()

    (same / "u0.wav").rename(same / "other.wav")
    code, _, err = run(["eval", "--ref", str(ref), "--test", str(same), "--out", str(tmp_path / "x.json")], capsys)
    assert code == 1 and "u0" in err and "other" in err


def test_thread_env_validation(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("LIPLAB_THREADS", "zero")
    code, _, err = run(["synth", "--out", str(tmp_path / "c"), "--count", "1", "--duration", "0.2"], capsys)
    assert code == 1 and "LIPLAB_THREADS" in err
    monkeypatch.setenv("LIPLAB_THREADS", "1")
    code, _, _ = run(["synth", "--out", str(tmp_path / "c"), "--count", "1", "--duration", "0.2"], capsys)
    assert code == 0


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "liplab.cli", "synth", "--out", str(tmp_path / "c"), "--count", "1", "--duration", "0.2"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["count"] == 1
    assert proc.stderr.startswith("liplab:")
