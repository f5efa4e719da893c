# Copyright 2026 the effcrn authors
# License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
"""Smoke tests for the python bindings; run with PYTHONPATH at the built
package (build/python) or an installed wheel."""

import math
import sys
import tempfile
from pathlib import Path

import numpy as np

import effcrn


def test_accounting():
    names = effcrn.variants()
    assert "FCRN15" in names and "EffCRN23lite" in names
    assert effcrn.count_params("FCRN15") == 875394
    assert effcrn.count_params("EffCRN23lite") == 395949
    assert effcrn.count_flops_per_frame("EffCRN23") < effcrn.count_flops_per_frame("FCRN15")
    rows = effcrn.analyze([])
    assert len(rows) == 9
    for row in rows:
        assert abs(row["param_dev_pct"]) <= 10.0
        assert abs(row["flops_dev_pct"]) <= 20.0
    table = effcrn.layer_table_json("EffCRN23")
    assert '"gru"' in table


def test_stft_roundtrip():
    rng = np.random.default_rng(7)
    x = rng.uniform(-0.8, 0.8, 16000).astype(np.float32)
    spec = effcrn.stft(x)
    assert spec.shape[0] == 257 and spec.shape[2] == 2
    back = effcrn.istft(spec, num_samples=len(x))
    err = np.max(np.abs(back[256:-256] - x[256:-256]))
    assert err < 1e-6, err


def test_mask_bounding():
    rng = np.random.default_rng(8)
    g = rng.uniform(-100.0, 100.0, (257, 4, 2)).astype(np.float32)
    g[0, 0] = [0.0, 0.0]
    bounded = effcrn.bound_mask(g)
    mags = np.hypot(bounded[..., 0], bounded[..., 1])
    assert np.all(np.isfinite(bounded))
    assert np.max(mags) <= 1.0 + 1e-6
    assert bounded[0, 0, 0] == 0.0 and bounded[0, 0, 1] == 0.0


def test_loss():
    rng = np.random.default_rng(9)
    s = rng.normal(size=(257, 3, 2)).astype(np.float32)
    assert effcrn.compressed_loss(s, s) == 0.0
    assert effcrn.compressed_loss(np.zeros_like(s), s) > 0.0


def test_levels_and_mixing():
    t = np.arange(16000, dtype=np.float32) / 16000.0
    speech = (0.5 * np.sin(2 * math.pi * 440 * t)).astype(np.float32)
    noise = np.random.default_rng(10).normal(0, 0.1, 16000).astype(np.float32)
    mix = effcrn.mix_at_snr(speech, noise, 5.0)
    level = effcrn.active_speech_level(mix["clean"])
    assert abs(level - (-26.0)) < 0.3, level
    d = effcrn.delta_snr(mix["clean"], mix["mixture"], mix["mixture"])
    assert abs(d["delta_db"]) < 1e-6


def test_model_train_and_enhance():
    with tempfile.TemporaryDirectory() as tmp:
        manifest = effcrn.make_synthetic_corpus(tmp + "/corpus", 2, 31, 1.0)
        model = effcrn.Model("EffCRN23lite", seed=3)
        assert model.num_params == 395949
        summary = model.train(
            manifest, max_steps=3, batch_size=2, sequence_frames=25, seed=3,
            out_dir=tmp + "/run")
        assert summary["total_steps"] == 3
        assert math.isfinite(summary["last_step_loss"])

        ckpt = Path(tmp) / "run" / "best.ckpt"
        assert ckpt.exists()
        loaded = effcrn.Model.load(str(ckpt))
        assert loaded.variant == "EffCRN23lite"

        rng = np.random.default_rng(11)
        noisy = rng.uniform(-0.3, 0.3, 8000).astype(np.float32)
        out = loaded.enhance(noisy)
        assert out.shape == noisy.shape
        assert np.all(np.isfinite(out))

        spec = effcrn.stft(noisy)
        masks = loaded.forward_mask(spec)
        assert masks.shape == spec.shape


def main():
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_")]
    for test in tests:
        test()
        print(f"[ ok ] {test.__name__}")
    print(f"{len(tests)} python smoke tests passed")


if __name__ == "__main__":
    sys.exit(main())
