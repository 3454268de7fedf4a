"""Exercises the Python bindings end to end. Run after `maturin develop`."""

import json
import math
import tempfile
from pathlib import Path

import weatherforge as wf


def masked_psnr(a, b, valid):
    x, y = a.to_list(), b.to_list()
    sq = [(x[3 * i + c] - y[3 * i + c]) ** 2 for i, ok in enumerate(valid) if ok for c in range(3)]
    mse = sum(sq) / len(sq)
    return math.inf if mse == 0 else 10 * math.log10(1 / mse)


def main():
    clean, depth = wf.procedural_scene(64, 64, seed=3)
    assert (clean.width, clean.height) == (64, 64)

    t = wf.transmission_from_depth(depth, 0.02)
    assert all(0.0 < v <= 1.0 for v in t.to_list())
    hazy = wf.scattering_composite(clean, t, 0.9)
    assert wf.psnr(hazy, clean) < 40.0

    flat = wf.Image.filled(16, 16, 0.5)
    assert abs(wf.psnr(flat, wf.Image.filled(16, 16, 0.6)) - 20.0) < 1e-4
    assert math.isinf(wf.psnr(flat, flat))
    assert abs(wf.ssim(clean, clean, mode="y") - 1.0) < 1e-9

    params = wf.sample_weather_params(7, 0, "rain")
    assert json.loads(params)["weather_type"] in ("rain", "rain_haze")
    degraded, gt, t_map, alpha = wf.synthesize(clean, depth, params)
    valid = [tv >= 0.05 and av <= 0.95 for tv, av in zip(t_map.to_list(), alpha.to_list())]
    restored = wf.restore_with_oracle(degraded, params, t_map, alpha)
    masked = masked_psnr(restored, gt, valid)
    assert masked >= 50.0, masked
    print(f"oracle restoration on valid pixels: {masked:.1f} dB")
    undone = wf.restore_with_oracle(degraded, params, t_map, alpha, invert_gamma=True)
    assert masked_psnr(undone, clean, valid) >= 40.0

    est, t_hat, a_hat, light, brightness = wf.restore_with_estimated(degraded)
    assert est.width == 64 and 0.0 <= light <= 1.0

    assert wf.visibility_regime(5e-3, 0.05, 0.001) == "inverse_depth_decay"
    checks = wf.attn_check()
    assert checks and all(passed for *_, passed in checks)

    with tempfile.TemporaryDirectory() as d:
        d = Path(d)
        clean.write(d / "c.png")
        depth.write(d / "d.pfm")
        config = {
            "inputs": [{"clean": "c.png", "depth": "d.pfm"}],
            "counts": {"haze": 1, "rain": 1, "snow": 1},
            "seed": 1,
            "out_dir": "ds",
        }
        (d / "cfg.json").write_text(json.dumps(config))
        assert wf.generate_dataset(d / "cfg.json", jobs=2) == 3
        assert (d / "ds" / "manifest.json").is_file()
        assert wf.Image.read(d / "ds" / "00000_lq.png").width == 64
        try:
            wf.Image.read(d / "missing.png")
        except OSError:
            pass
        else:
            raise AssertionError("missing file should raise OSError")

    print("smoke test passed")


if __name__ == "__main__":
    main()
